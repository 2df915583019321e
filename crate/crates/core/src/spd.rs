//! Symmetric positive-definite matrices in packed upper-triangular storage.
//!
//! Everything here is sized for small `p` (diffusion tensors have `p = 3`),
//! so the routines are plain loops over packed storage rather than calls into
//! a dense linear-algebra backend.

use smallvec::SmallVec;

use crate::error::{Error, Result};

pub(crate) type Packed = SmallVec<[f64; 6]>;

/// Relative Cholesky pivot threshold, scaled by the largest diagonal entry.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Number of stored values for a `p x p` symmetric matrix.
#[inline]
pub const fn packed_len(p: usize) -> usize {
    p * (p + 1) / 2
}

#[inline]
pub(crate) const fn upper_index(p: usize, i: usize, j: usize) -> usize {
    // caller guarantees i <= j
    i * (2 * p - i + 1) / 2 + (j - i)
}

#[inline]
const fn lower_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// A `p x p` symmetric positive-definite matrix.
///
/// Only the upper triangle is stored, row-major: `(0,0), (0,1), .., (0,p-1),
/// (1,1), ..`. Construction through the checked constructors guarantees a
/// successful Cholesky factorisation and finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    upper: Packed,
}

/// Lower-triangular factor with positive diagonal, packed row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerTriangular {
    dim: usize,
    data: Packed,
}

impl SpdMatrix {
    /// Builds a matrix from its packed upper triangle, validating finiteness
    /// and positive definiteness.
    pub fn from_upper(dim: usize, values: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if values.len() != packed_len(dim) {
            return Err(Error::DimensionMismatch {
                expected: packed_len(dim),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        cholesky_packed(dim, values)?;
        Ok(Self { dim, upper: Packed::from_slice(values) })
    }

    /// Builds a matrix without the positive-definiteness check. Only for
    /// values that are SPD by construction (Gram products, positive sums).
    pub(crate) fn from_upper_unchecked(dim: usize, upper: Packed) -> Self {
        debug_assert_eq!(upper.len(), packed_len(dim));
        Self { dim, upper }
    }

    /// Builds a matrix from a dense row-major array. The input must be
    /// symmetric to within `1e-12` relative; the upper triangle is kept.
    pub fn from_dense(dim: usize, row_major: &[f64]) -> Result<Self> {
        if row_major.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: row_major.len() });
        }
        let scale = row_major.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut upper = Packed::with_capacity(packed_len(dim));
        for i in 0..dim {
            for j in i..dim {
                let a = row_major[i * dim + j];
                let b = row_major[j * dim + i];
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::Format(format!("matrix not symmetric at ({i},{j})")));
                }
                upper.push(a);
            }
        }
        Self::from_upper(dim, &upper)
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    /// `c * I_p`; panics unless `c` is finite and positive.
    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        assert!(c.is_finite() && c > 0.0, "scaled identity needs c > 0");
        let mut upper = Packed::from_elem(0.0, packed_len(dim));
        for i in 0..dim {
            upper[upper_index(dim, i, i)] = c;
        }
        Self { dim, upper }
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let dim = values.len();
        let mut upper = Packed::from_elem(0.0, packed_len(dim));
        for (i, &v) in values.iter().enumerate() {
            upper[upper_index(dim, i, i)] = v;
        }
        Self::from_upper(dim, &upper)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Packed upper triangle, row-major.
    #[inline]
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.upper[upper_index(self.dim, a, b)]
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let p = self.dim;
        let mut out = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                out[i * p + j] = self.get(i, j);
            }
        }
        out
    }

    pub fn cholesky(&self) -> Result<LowerTriangular> {
        cholesky_packed(self.dim, &self.upper)
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        Ok(self.cholesky()?.spd_inverse())
    }

    pub fn log_det(&self) -> Result<f64> {
        Ok(self.cholesky()?.log_det())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.upper[upper_index(self.dim, i, i)]).sum()
    }

    /// `tr(A B)` for symmetric `A`, `B` of the same dimension.
    pub fn trace_product(&self, other: &SpdMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        trace_product_packed(self.dim, &self.upper, &other.upper)
    }

    /// Squared Frobenius norm `tr(A^T A)`.
    pub fn frobenius_sq(&self) -> f64 {
        self.trace_product(self)
    }

    /// `c * A` for `c > 0`.
    pub fn scale(&self, c: f64) -> SpdMatrix {
        assert!(c.is_finite() && c > 0.0, "scale factor must be positive");
        Self { dim: self.dim, upper: self.upper.iter().map(|v| v * c).collect() }
    }

}

pub(crate) fn trace_weights_packed(p: usize, upper: &[f64]) -> Packed {
    let mut w = Packed::from_slice(upper);
    for i in 0..p {
        for j in (i + 1)..p {
            w[upper_index(p, i, j)] *= 2.0;
        }
    }
    w
}

pub(crate) fn trace_product_packed(p: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..p {
        acc += a[upper_index(p, i, i)] * b[upper_index(p, i, i)];
        for j in (i + 1)..p {
            let k = upper_index(p, i, j);
            acc += 2.0 * a[k] * b[k];
        }
    }
    acc
}

/// Cholesky factorisation `A = L L^T` of a packed symmetric matrix.
pub(crate) fn cholesky_packed(p: usize, upper: &[f64]) -> Result<LowerTriangular> {
    let max_diag = (0..p).map(|i| upper[upper_index(p, i, i)]).fold(f64::NEG_INFINITY, f64::max);
    if !(max_diag > 0.0) {
        return Err(Error::NotPositiveDefinite { row: 0, pivot: max_diag });
    }
    let tol = PIVOT_TOLERANCE * max_diag;
    let mut l = Packed::from_elem(0.0, packed_len(p));
    for j in 0..p {
        let mut pivot = upper[upper_index(p, j, j)];
        for k in 0..j {
            let v = l[lower_index(j, k)];
            pivot -= v * v;
        }
        if !(pivot > tol) {
            return Err(Error::NotPositiveDefinite { row: j, pivot });
        }
        let d = pivot.sqrt();
        l[lower_index(j, j)] = d;
        for i in (j + 1)..p {
            let mut s = upper[upper_index(p, j, i)];
            for k in 0..j {
                s -= l[lower_index(i, k)] * l[lower_index(j, k)];
            }
            l[lower_index(i, j)] = s / d;
        }
    }
    Ok(LowerTriangular { dim: p, data: l })
}

/// Cholesky factor of an SPD matrix.
pub fn cholesky(a: &SpdMatrix) -> Result<LowerTriangular> {
    a.cholesky()
}

/// Squared Frobenius distance `tr[(A - B)^T (A - B)]`.
pub fn frobenius_sq_diff(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    Ok(frobenius_sq_diff_packed(a.dim, &a.upper, &b.upper))
}

#[inline]
pub(crate) fn frobenius_sq_diff_packed(p: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..p {
        let k = upper_index(p, i, i);
        let d = a[k] - b[k];
        acc += d * d;
        for j in (i + 1)..p {
            let k = upper_index(p, i, j);
            let d = a[k] - b[k];
            acc += 2.0 * d * d;
        }
    }
    acc
}

impl LowerTriangular {
    /// Builds a factor from packed row-major lower values. The diagonal must
    /// be strictly positive.
    pub fn from_lower(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != packed_len(dim) {
            return Err(Error::DimensionMismatch { expected: packed_len(dim), found: values.len() });
        }
        for i in 0..dim {
            let d = values[lower_index(i, i)];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: i, pivot: d });
            }
        }
        Ok(Self { dim, data: Packed::from_slice(values) })
    }

    pub(crate) fn from_packed_unchecked(dim: usize, data: Packed) -> Self {
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `(i, j)`; zero above the diagonal.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[lower_index(i, j)]
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `log |L L^T|`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.data[lower_index(i, i)].ln()).sum::<f64>()
    }

    /// `L L^T`.
    pub fn gram(&self) -> SpdMatrix {
        let p = self.dim;
        let mut upper = Packed::from_elem(0.0, packed_len(p));
        for i in 0..p {
            for j in i..p {
                let mut s = 0.0;
                for k in 0..=i {
                    s += self.data[lower_index(i, k)] * self.data[lower_index(j, k)];
                }
                upper[upper_index(p, i, j)] = s;
            }
        }
        SpdMatrix::from_upper_unchecked(p, upper)
    }

    /// Product of two lower-triangular factors, itself lower triangular.
    pub fn product(&self, other: &LowerTriangular) -> LowerTriangular {
        debug_assert_eq!(self.dim, other.dim);
        let p = self.dim;
        let mut out = Packed::from_elem(0.0, packed_len(p));
        for i in 0..p {
            for j in 0..=i {
                let mut s = 0.0;
                for k in j..=i {
                    s += self.data[lower_index(i, k)] * other.data[lower_index(k, j)];
                }
                out[lower_index(i, j)] = s;
            }
        }
        LowerTriangular { dim: p, data: out }
    }

    /// `L^{-1}` by forward substitution.
    pub fn inverse(&self) -> LowerTriangular {
        let p = self.dim;
        let mut inv = Packed::from_elem(0.0, packed_len(p));
        for j in 0..p {
            inv[lower_index(j, j)] = 1.0 / self.data[lower_index(j, j)];
            for i in (j + 1)..p {
                let mut s = 0.0;
                for k in j..i {
                    s += self.data[lower_index(i, k)] * inv[lower_index(k, j)];
                }
                inv[lower_index(i, j)] = -s / self.data[lower_index(i, i)];
            }
        }
        LowerTriangular { dim: p, data: inv }
    }

    /// `(L L^T)^{-1} = L^{-T} L^{-1}`.
    pub fn spd_inverse(&self) -> SpdMatrix {
        let p = self.dim;
        let li = self.inverse();
        let mut upper = Packed::from_elem(0.0, packed_len(p));
        for i in 0..p {
            for j in i..p {
                // (L^{-T} L^{-1})_{ij} = sum_k Li[k][i] Li[k][j], k >= max(i, j) = j
                let mut s = 0.0;
                for k in j..p {
                    s += li.data[lower_index(k, i)] * li.data[lower_index(k, j)];
                }
                upper[upper_index(p, i, j)] = s;
            }
        }
        SpdMatrix::from_upper_unchecked(p, upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_spd(p: usize, seed: u64) -> SpdMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut l = Packed::new();
        for i in 0..p {
            for j in 0..=i {
                l.push(if i == j { rng.random_range(0.5..2.0) } else { rng.random_range(-1.0..1.0) });
            }
        }
        LowerTriangular::from_packed_unchecked(p, l).gram()
    }

    #[test]
    fn cholesky_of_identity_is_identity() {
        let l = cholesky(&SpdMatrix::identity(3)).unwrap();
        assert_eq!(l.gram(), SpdMatrix::identity(3));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn cholesky_of_diagonal() {
        let l = cholesky(&SpdMatrix::diag(&[4.0, 9.0]).unwrap()).unwrap();
        assert_eq!(l.as_slice(), &[2.0, 0.0, 3.0]);
    }

    #[test]
    fn rejects_indefinite_and_singular() {
        assert!(matches!(
            SpdMatrix::from_upper(2, &[1.0, 2.0, 1.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            SpdMatrix::from_upper(2, &[1.0, 1.0, 1.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(SpdMatrix::from_upper(1, &[f64::NAN]), Err(Error::NonFinite)));
        assert!(matches!(SpdMatrix::from_upper(2, &[1.0, 0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pivot_threshold_is_scale_relative() {
        // Tiny DTI-like magnitudes are still accepted.
        assert!(SpdMatrix::diag(&[1e-9, 2e-9, 3e-9]).is_ok());
        assert!(SpdMatrix::diag(&[1.0, 1e-13]).is_err());
    }

    #[test]
    fn frobenius_examples() {
        let i3 = SpdMatrix::identity(3);
        assert_eq!(frobenius_sq_diff(&i3, &i3).unwrap(), 0.0);
        let a = SpdMatrix::diag(&[2.0, 1.0]).unwrap();
        let b = SpdMatrix::identity(2);
        assert_eq!(frobenius_sq_diff(&a, &b).unwrap(), 1.0);
        assert!(matches!(frobenius_sq_diff(&a, &i3), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn from_dense_checks_symmetry() {
        assert!(SpdMatrix::from_dense(2, &[2.0, 0.5, 0.5, 1.0]).is_ok());
        assert!(SpdMatrix::from_dense(2, &[2.0, 0.5, 0.4, 1.0]).is_err());
    }

    #[test]
    fn inverse_and_log_det() {
        let a = random_spd(3, 7);
        let inv = a.inverse().unwrap();
        let (d, di) = (a.to_dense(), inv.to_dense());
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| d[i * 3 + k] * di[k * 3 + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
        // det via cofactor expansion
        let det = d[0] * (d[4] * d[8] - d[5] * d[7]) - d[1] * (d[3] * d[8] - d[5] * d[6])
            + d[2] * (d[3] * d[7] - d[4] * d[6]);
        assert!((a.log_det().unwrap() - det.ln()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn cholesky_round_trip(seed in any::<u64>(), p in 1usize..6) {
            let a = random_spd(p, seed);
            let l = cholesky(&a).unwrap();
            let back = l.gram();
            let scale = a.upper().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in a.upper().iter().zip(back.upper()) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
            }
            for i in 0..p {
                prop_assert!(l.get(i, i) > 0.0);
            }
        }

        #[test]
        fn frobenius_matches_elementwise(s1 in any::<u64>(), s2 in any::<u64>(), p in 1usize..5) {
            let a = random_spd(p, s1);
            let b = random_spd(p, s2);
            let (da, db) = (a.to_dense(), b.to_dense());
            let direct: f64 = da.iter().zip(&db).map(|(x, y)| (x - y) * (x - y)).sum();
            let f = frobenius_sq_diff(&a, &b).unwrap();
            prop_assert!((f - direct).abs() <= 1e-12 * direct.max(1.0));
            prop_assert!((f - frobenius_sq_diff(&b, &a).unwrap()).abs() == 0.0);
            prop_assert!(f >= 0.0);
        }
    }
}
