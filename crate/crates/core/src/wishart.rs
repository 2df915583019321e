//! Mean-parameterised Wishart and inverse-Wishart distributions.
//!
//! `W_p(V, n)` has mean `V` (standard scale `V / n`), and `IW_p(Psi, nu)` has
//! mean `Psi` (standard scale `(nu - p - 1) Psi`). Sampling uses the Bartlett
//! factorisation, which is exact for real-valued degrees of freedom.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::spd::{packed_len, LowerTriangular, Packed, SpdMatrix};

/// Log of the multivariate gamma function `Gamma_p(a)`.
pub fn ln_mvgamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * PI.ln() + (0..p).map(|j| ln_gamma(a - j as f64 / 2.0)).sum::<f64>()
}

/// Parameters of `W_p(mean, dof)`; requires `dof > p`.
#[derive(Clone, Debug)]
pub struct WishartParams {
    mean: SpdMatrix,
    dof: f64,
    scale_chol: LowerTriangular,
}

impl WishartParams {
    pub fn new(mean: SpdMatrix, dof: f64) -> Result<Self> {
        let p = mean.dim();
        if !(dof > p as f64) || !dof.is_finite() {
            return Err(Error::InvalidDof { dof, dim: p, bound: p as f64 });
        }
        let scale_chol = mean.scale(1.0 / dof).cholesky()?;
        Ok(Self { mean, dof, scale_chol })
    }

    pub fn mean(&self) -> &SpdMatrix {
        &self.mean
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }
}

/// Parameters of `IW_p(mean, dof)`; requires `dof > p + 1` so the mean exists.
#[derive(Clone, Debug)]
pub struct InvWishartParams {
    mean: SpdMatrix,
    dof: f64,
    // Cholesky factor of ((dof - p - 1) * mean)^{-1}, the scale of the
    // Wishart variate being inverted.
    inv_scale_chol: LowerTriangular,
}

impl InvWishartParams {
    pub fn new(mean: SpdMatrix, dof: f64) -> Result<Self> {
        let p = mean.dim();
        let bound = p as f64 + 1.0;
        if !(dof > bound) || !dof.is_finite() {
            return Err(Error::InvalidDof { dof, dim: p, bound });
        }
        let inv_scale_chol = mean.scale(dof - bound).inverse()?.cholesky()?;
        Ok(Self { mean, dof, inv_scale_chol })
    }

    pub fn mean(&self) -> &SpdMatrix {
        &self.mean
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }
}

fn check_dim(x: &SpdMatrix, p: usize) -> Result<()> {
    if x.dim() != p {
        return Err(Error::DimensionMismatch { expected: p, found: x.dim() });
    }
    Ok(())
}

/// Log density of `X` under `W_p(V, n)`.
pub fn wishart_logpdf(x: &SpdMatrix, params: &WishartParams) -> Result<f64> {
    let p = params.dim();
    check_dim(x, p)?;
    let n = params.dof;
    let pf = p as f64;
    let v_chol = params.mean.cholesky()?;
    let x_logdet = x.log_det()?;
    // log|V/n| = log|V| - p log n ;  tr((V/n)^{-1} X) = n tr(V^{-1} X)
    let log_det_scale = v_chol.log_det() - pf * n.ln();
    let tr = v_chol.spd_inverse().trace_product(x);
    Ok(-0.5 * n * pf * LN_2 - 0.5 * n * log_det_scale - ln_mvgamma(p, 0.5 * n)
        + 0.5 * (n - pf - 1.0) * x_logdet
        - 0.5 * n * tr)
}

/// Log density of `X` under `IW_p(Psi, nu)`.
pub fn invwishart_logpdf(x: &SpdMatrix, params: &InvWishartParams) -> Result<f64> {
    let p = params.dim();
    check_dim(x, p)?;
    let nu = params.dof;
    let pf = p as f64;
    let c = nu - pf - 1.0;
    let x_chol = x.cholesky()?;
    let log_det_scale = params.mean.log_det()? + pf * c.ln();
    let tr = c * params.mean.trace_product(&x_chol.spd_inverse());
    Ok(0.5 * nu * log_det_scale - 0.5 * nu * pf * LN_2 - ln_mvgamma(p, 0.5 * nu)
        - 0.5 * (nu + pf + 1.0) * x_chol.log_det()
        - 0.5 * tr)
}

/// Bartlett factor `A`: lower triangular, `A_ii^2 ~ chi2(dof - i)`,
/// `A_ij ~ N(0, 1)` below the diagonal.
fn bartlett_factor<R: Rng + ?Sized>(p: usize, dof: f64, rng: &mut R) -> LowerTriangular {
    let mut a = Packed::from_elem(0.0, packed_len(p));
    let mut idx = 0;
    for i in 0..p {
        for j in 0..=i {
            a[idx] = if i == j {
                let chi = ChiSquared::new(dof - i as f64).expect("dof checked by caller");
                chi.sample(rng).sqrt()
            } else {
                rng.sample(StandardNormal)
            };
            idx += 1;
        }
    }
    LowerTriangular::from_packed_unchecked(p, a)
}

/// Standard Wishart draw with scale `L L^T` and `dof > p - 1`.
pub(crate) fn sample_wishart_standard<R: Rng + ?Sized>(
    scale_chol: &LowerTriangular,
    dof: f64,
    rng: &mut R,
) -> SpdMatrix {
    let a = bartlett_factor(scale_chol.dim(), dof, rng);
    scale_chol.product(&a).gram()
}

/// Draw from `W_p(V, n)`.
pub fn wishart_sample<R: Rng + ?Sized>(params: &WishartParams, rng: &mut R) -> SpdMatrix {
    sample_wishart_standard(&params.scale_chol, params.dof, rng)
}

/// Draw from `IW_p(Psi, nu)` as the inverse of a Wishart draw.
pub fn invwishart_sample<R: Rng + ?Sized>(params: &InvWishartParams, rng: &mut R) -> SpdMatrix {
    let a = bartlett_factor(params.dim(), params.dof, rng);
    // (L A)(L A)^T has inverse (L A)^{-T} (L A)^{-1}; L A has a positive diagonal.
    params.inv_scale_chol.product(&a).spd_inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Continuous, Gamma};

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    // Integral over (0, inf) via x = t / (1 - t).
    fn integrate_positive<F: Fn(f64) -> f64>(f: F) -> f64 {
        simpson(
            |t| {
                if t <= 0.0 || t >= 1.0 {
                    0.0
                } else {
                    let x = t / (1.0 - t);
                    f(x) / ((1.0 - t) * (1.0 - t))
                }
            },
            0.0,
            1.0,
            200_000,
        )
    }

    fn scalar(x: f64) -> SpdMatrix {
        SpdMatrix::from_upper(1, &[x]).unwrap()
    }

    #[test]
    fn mvgamma_reduces_to_gamma() {
        for a in [0.7, 1.5, 4.0] {
            assert!((ln_mvgamma(1, a) - ln_gamma(a)).abs() < 1e-14);
        }
        // Gamma_2(a) = sqrt(pi) Gamma(a) Gamma(a - 1/2)
        let a = 3.3;
        let direct = 0.5 * PI.ln() + ln_gamma(a) + ln_gamma(a - 0.5);
        assert!((ln_mvgamma(2, a) - direct).abs() < 1e-12);
    }

    #[test]
    fn wishart_scalar_is_gamma() {
        // p = 1: W_1(V, n) is Gamma(shape n/2, scale 2V/n).
        let params = WishartParams::new(scalar(1.0), 3.0).unwrap();
        let gamma = Gamma::new(1.5, 1.5).unwrap(); // rate n / (2V)
        for x in [0.2, 1.0, 2.7] {
            let lp = wishart_logpdf(&scalar(x), &params).unwrap();
            assert!((lp - gamma.ln_pdf(x)).abs() < 1e-12, "{lp} vs {}", gamma.ln_pdf(x));
        }
    }

    #[test]
    fn wishart_scalar_normalises() {
        let params = WishartParams::new(scalar(1.0), 3.0).unwrap();
        let total = integrate_positive(|x| wishart_logpdf(&scalar(x), &params).unwrap().exp());
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn invwishart_scalar_normalises() {
        let params = InvWishartParams::new(scalar(1.0), 4.0).unwrap();
        let total = integrate_positive(|x| invwishart_logpdf(&scalar(x), &params).unwrap().exp());
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn wishart_identity_matches_transcription() {
        // X = V = I_3, n = 6, written out term by term:
        // -(np/2) ln 2 - (n/2) ln|I/n| - ln Gamma_3(n/2) + 0 - (1/2) tr(n I)
        let n = 6.0_f64;
        let expected = -9.0 * LN_2 + 9.0 * n.ln()
            - (1.5 * PI.ln() + ln_gamma(3.0) + ln_gamma(2.5) + ln_gamma(2.0))
            - 9.0;
        let params = WishartParams::new(SpdMatrix::identity(3), n).unwrap();
        let lp = wishart_logpdf(&SpdMatrix::identity(3), &params).unwrap();
        assert!((lp - expected).abs() < 1e-12, "{lp} vs {expected}");
    }

    #[test]
    fn invwishart_matches_change_of_variables() {
        // If X ~ IW_p(Psi, nu) then X^{-1} ~ W_p(nu ((nu-p-1) Psi)^{-1}, nu), and
        // f_IW(X) = f_W(X^{-1}) |X|^{-(p+1)}.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in 1..=3 {
            for _ in 0..5 {
                let psi = wishart_sample(
                    &WishartParams::new(SpdMatrix::identity(p), p as f64 + 4.0).unwrap(),
                    &mut rng,
                );
                let nu = p as f64 + 1.0 + rng.random_range(0.5..10.0);
                let iw = InvWishartParams::new(psi.clone(), nu).unwrap();
                let x = invwishart_sample(&iw, &mut rng);
                let w_mean = psi.scale(nu - p as f64 - 1.0).inverse().unwrap().scale(nu);
                let w = WishartParams::new(w_mean, nu).unwrap();
                let lhs = invwishart_logpdf(&x, &iw).unwrap();
                let rhs = wishart_logpdf(&x.inverse().unwrap(), &w).unwrap()
                    - (p as f64 + 1.0) * x.log_det().unwrap();
                assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1.0), "p={p}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn dof_constraints() {
        assert!(matches!(
            InvWishartParams::new(SpdMatrix::identity(3), 4.0),
            Err(Error::InvalidDof { .. })
        ));
        assert!(matches!(
            InvWishartParams::new(SpdMatrix::identity(3), 3.5),
            Err(Error::InvalidDof { .. })
        ));
        assert!(InvWishartParams::new(SpdMatrix::identity(3), 4.01).is_ok());
        assert!(matches!(WishartParams::new(SpdMatrix::identity(3), 3.0), Err(Error::InvalidDof { .. })));
        assert!(matches!(
            WishartParams::new(SpdMatrix::identity(2), f64::NAN),
            Err(Error::InvalidDof { .. })
        ));
    }

    #[test]
    fn draws_are_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = WishartParams::new(SpdMatrix::identity(3), 3.2).unwrap();
        let iw = InvWishartParams::new(SpdMatrix::identity(3), 4.2).unwrap();
        for _ in 0..20_000 {
            assert!(wishart_sample(&w, &mut rng).cholesky().is_ok());
            assert!(invwishart_sample(&iw, &mut rng).cholesky().is_ok());
        }
    }

    #[test]
    fn scalar_wishart_moments() {
        // p = 1, W_1(2, 10): mean 2, variance 2 V^2 / n = 0.8.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = WishartParams::new(scalar(2.0), 10.0).unwrap();
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| wishart_sample(&params, &mut rng).get(0, 0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 2.0).abs() < 3.0 * (0.8f64 / n as f64).sqrt(), "{mean}");
        // sd of the sample variance for a gamma: sqrt((mu4 - s^4)/n); loose 3-sigma
        let shape: f64 = 5.0;
        let scale: f64 = 0.4;
        let mu4 = 3.0 * shape * (shape + 2.0) * scale.powi(4);
        let se_var = ((mu4 - 0.64) / n as f64).sqrt();
        assert!((var - 0.8).abs() < 3.0 * se_var, "{var}");
    }
}
