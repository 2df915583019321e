//! Posterior summaries, the group-difference decision map and chain
//! diagnostics.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::hash::Hash;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::potts::PottsHyper;
use crate::sampler::{Acceptance, HyperSample, TraceStore};

/// Per-site posterior probability that the two group labels differ, and
/// the resulting decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceMap {
    pub prob_diff: Vec<f64>,
    pub decision: Vec<bool>,
    pub threshold: f64,
}

impl DifferenceMap {
    pub fn n_differences(&self) -> usize {
        self.decision.iter().filter(|&&d| d).count()
    }

    /// `site,prob_diff,decision` with active-site indices.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "site,prob_diff,decision")?;
        for (v, (p, d)) in self.prob_diff.iter().zip(&self.decision).enumerate() {
            writeln!(w, "{v},{p},{}", *d as u8)?;
        }
        Ok(())
    }
}

/// A site is declared different when `P(h_0v != h_1v) > threshold`.
pub fn difference_map(trace: &TraceStore, threshold: f64) -> Result<DifferenceMap> {
    let n = trace.n_retained();
    if n == 0 {
        return Err(Error::EmptyTrace);
    }
    let prob_diff: Vec<f64> = trace.difference_counts().iter().map(|&c| c as f64 / n as f64).collect();
    let decision = prob_diff.iter().map(|&p| p > threshold).collect();
    Ok(DifferenceMap { prob_diff, decision, threshold })
}

/// Mixture weights of a subject observation given its group label `h`
/// (1-based), with the neighbourhood factor treated as common:
/// `w_k ∝ exp(-k^xi + alpha * 1(h = k))`.
pub fn marginal_mixture_weights(h: usize, theta: &PottsHyper, k: usize) -> Result<Vec<f64>> {
    if h == 0 || h > k {
        return Err(Error::InvalidConfig(format!("group label {h} outside 1..={k}")));
    }
    let mut w = theta.offsets(k);
    w[h - 1] += theta.alpha;
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    w.iter_mut().for_each(|x| *x = (*x - max).exp());
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeidelbergerWelch {
    pub passed: bool,
    /// Start of the retained segment when passed; the last start tried
    /// otherwise.
    pub retained_start: usize,
    pub statistic: f64,
    pub p_value: f64,
}

const HW_MIN_LEN: usize = 100;
const AR_ORDER: usize = 4;

/// Heidelberger and Welch stationarity test. The spectral density at zero
/// comes from an AR(4) fit to the second half of the chain; starts are
/// moved forward in steps of 10% of the chain until the Cramér-von Mises
/// test passes or half of the chain is discarded.
pub fn heidelberger_welch(chain: &[f64], alpha_level: f64) -> Result<HeidelbergerWelch> {
    let n = chain.len();
    if n < HW_MIN_LEN {
        return Err(Error::ChainTooShort { len: n, min: HW_MIN_LEN });
    }
    let s0 = spectrum0_ar(&chain[n / 2..]);
    if !(s0 > 0.0) {
        // no variability left: nothing to reject
        return Ok(HeidelbergerWelch { passed: true, retained_start: 0, statistic: 0.0, p_value: 1.0 });
    }
    let mut last = HeidelbergerWelch { passed: false, retained_start: 0, statistic: f64::NAN, p_value: 0.0 };
    for step in 0..=5 {
        let start = step * n / 10;
        let y = &chain[start..];
        let m = y.len() as f64;
        let mean = y.iter().sum::<f64>() / m;
        let mut partial = 0.0;
        let mut sum_sq = 0.0;
        for (t, &x) in y.iter().enumerate() {
            partial += x;
            let b = partial - mean * (t + 1) as f64;
            sum_sq += b * b;
        }
        let statistic = sum_sq / (m * m * s0);
        let p_value = 1.0 - pcramer(statistic);
        last = HeidelbergerWelch { passed: p_value > alpha_level, retained_start: start, statistic, p_value };
        if last.passed {
            break;
        }
    }
    Ok(last)
}

/// Spectral density at frequency zero from a Yule-Walker AR fit.
fn spectrum0_ar(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let acov: Vec<f64> = (0..=AR_ORDER)
        .map(|lag| x.iter().zip(&x[lag..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / n)
        .collect();
    if acov[0] <= f64::EPSILON * mean.abs().max(1.0).powi(2) {
        return 0.0;
    }
    // Levinson-Durbin
    let mut phi = vec![0.0; AR_ORDER + 1];
    let mut err = acov[0];
    for k in 1..=AR_ORDER {
        let acc: f64 = (1..k).map(|j| phi[j] * acov[k - j]).sum();
        let reflect = (acov[k] - acc) / err;
        let prev = phi.clone();
        phi[k] = reflect;
        for j in 1..k {
            phi[j] = prev[j] - reflect * prev[k - j];
        }
        err *= 1.0 - reflect * reflect;
    }
    let sum: f64 = phi[1..].iter().sum();
    // innovation variance with the usual n / (n - order - 1) correction
    let var_pred = err * n / (n - AR_ORDER as f64 - 1.0);
    var_pred / (1.0 - sum).powi(2)
}

/// Limiting distribution function of the Cramér-von Mises statistic.
///
/// The series is summed until its terms vanish. Stopping after a fixed four
/// terms, as is common, badly underestimates the tail for large statistics
/// (the sum then decays like `q^-1/4`), so grossly non-stationary chains
/// would pass.
fn pcramer(q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    // the upper tail beyond this is below 1e-16
    if q >= 8.0 {
        return 1.0;
    }
    let cutoff = -(1e-5f64).ln();
    let mut total = 0.0;
    for k in 0.. {
        let kf = k as f64;
        let u = (4.0 * kf + 1.0).powi(2) / (16.0 * q);
        if u > cutoff {
            break;
        }
        let log_z = ln_gamma(kf + 0.5) - ln_gamma(kf + 1.0) + 0.5 * (4.0 * kf + 1.0).ln() - 1.5 * PI.ln() - 0.5 * q.ln();
        total += log_z.exp() * (-u).exp() * bessel_k(0.25, u);
    }
    total.min(1.0)
}

/// Modified Bessel function of the second kind, from
/// `K_v(x) = ∫_0^∞ exp(-x cosh t) cosh(v t) dt`.
fn bessel_k(v: f64, x: f64) -> f64 {
    // integrand is negligible once x cosh t exceeds x + 745
    let upper = ((x + 745.0) / x).acosh();
    let steps = 4000;
    let h = upper / steps as f64;
    let f = |t: f64| (-x * t.cosh()).exp() * (v * t).cosh();
    let interior: f64 = (1..steps).map(|i| f(i as f64 * h)).sum();
    h * (0.5 * (f(0.0) + f(upper)) + interior)
}

/// Rand index between two labellings of the same items.
pub fn rand_index<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidConfig("Rand index needs at least two items".into()));
    }
    let pairs = |c: u64| c * c.saturating_sub(1) / 2;
    let mut joint: HashMap<(&T, &T), u64> = HashMap::new();
    let mut rows: HashMap<&T, u64> = HashMap::new();
    let mut cols: HashMap<&T, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let total = pairs(n as u64);
    let together_both: u64 = joint.values().map(|&c| pairs(c)).sum();
    let together_a: u64 = rows.values().map(|&c| pairs(c)).sum();
    let together_b: u64 = cols.values().map(|&c| pairs(c)).sum();
    let apart_both = total + together_both - together_a - together_b;
    Ok((together_both + apart_both) as f64 / total as f64)
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed credible interval.
pub fn credible_interval(chain: &[f64], level: f64) -> Result<(f64, f64)> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidConfig(format!("credible level must lie in [0, 1], got {level}")));
    }
    let mut s = chain.to_vec();
    s.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&s, tail), quantile(&s, 1.0 - tail)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `None` when the chain is too short for the diagnostic.
    pub heidelberger_welch: Option<HeidelbergerWelch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_retained: usize,
    pub interrupted: bool,
    pub params: Vec<ParamSummary>,
    pub acceptance: Acceptance,
    pub threshold: f64,
    pub n_differences: usize,
}

/// Means, 95% intervals and stationarity checks for every scalar chain.
pub fn summarize(trace: &TraceStore, threshold: f64) -> Result<FitSummary> {
    let map = difference_map(trace, threshold)?;
    let params = HyperSample::NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| -> Result<ParamSummary> {
            let chain = trace.chain(i);
            let n = chain.len() as f64;
            let mean = chain.iter().sum::<f64>() / n;
            let sd = (chain.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            let (ci_lo, ci_hi) = credible_interval(&chain, 0.95)?;
            let heidelberger_welch =
                (chain.len() >= HW_MIN_LEN).then(|| heidelberger_welch(&chain, 0.05)).transpose()?;
            Ok(ParamSummary { name: name.to_string(), mean, sd, ci_lo, ci_hi, heidelberger_welch })
        })
        .collect::<Result<_>>()?;
    Ok(FitSummary {
        n_retained: trace.n_retained(),
        interrupted: trace.interrupted,
        params,
        acceptance: trace.acceptance,
        threshold,
        n_differences: map.n_differences(),
    })
}
