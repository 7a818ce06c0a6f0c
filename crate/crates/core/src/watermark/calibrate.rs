//! Overlap thresholds for a target false-positive rate.
//!
//! Two null models for the overlap count `X` between a registered watermark
//! and the pairs extracted from an unrelated image:
//!
//! - binomial: each of the `K` registered pairs is re-activated independently
//!   with probability 1/2, so `X ~ Binomial(K, 1/2)`;
//! - hypergeometric: the suspect set is a uniform random `K`-subset of the
//!   `M` pairs, so `X ~ Hypergeometric(M, K, K)`.
//!
//! Probability mass functions are built in log space by exact ratio
//! recurrences and summed from the far tail inwards.

use std::fmt;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CalibrationMode {
    Binomial,
    Hypergeometric,
}

impl CalibrationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CalibrationMode::Binomial => "binomial",
            CalibrationMode::Hypergeometric => "hypergeometric",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binom" | "binomial" => Ok(CalibrationMode::Binomial),
            "hyper" | "hypergeometric" => Ok(CalibrationMode::Hypergeometric),
            other => Err(Error::InvalidArgument(format!("unknown calibration mode {other:?}"))),
        }
    }
}

impl fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub mode: CalibrationMode,
    pub k: usize,
    /// Pair universe size; only meaningful in hypergeometric mode.
    pub m: Option<usize>,
    /// Smallest overlap count whose tail probability meets the target.
    pub threshold: usize,
    pub target_fpr: f64,
    pub achieved_fpr: f64,
}

impl CalibrationResult {
    /// `threshold / K`.
    pub fn tau(&self) -> f64 {
        self.threshold as f64 / self.k as f64
    }
}

/// Log-pmf of `Binomial(k, 1/2)` for `0..=k`.
fn binomial_log_pmf(k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut log_c = 0.0f64;
    let base = -(k as f64) * std::f64::consts::LN_2;
    for i in 0..=k {
        if i > 0 {
            log_c += ((k - i + 1) as f64).ln() - (i as f64).ln();
        }
        out.push(log_c + base);
    }
    out
}

/// Log-pmf of the overlap of two independent uniform `k`-subsets of an
/// `m`-set, for `0..=k`. Impossible counts get `-inf`.
fn hypergeometric_log_pmf(k: usize, m: usize) -> Vec<f64> {
    // Support is max(0, 2k - m) ..= k.
    let lo = (2 * k).saturating_sub(m);
    let mut out = vec![f64::NEG_INFINITY; k + 1];
    // pmf(lo) = C(k, lo) C(m - k, k - lo) / C(m, k), expanded as products.
    let mut log_p = 0.0f64;
    for t in 0..k {
        log_p -= ((m - t) as f64).ln();
        log_p += ((t + 1) as f64).ln();
    }
    log_p += log_binom(k, lo) + log_binom(m - k, k - lo);
    out[lo] = log_p;
    for i in lo..k {
        // pmf(i + 1) / pmf(i) = (k - i)^2 / ((i + 1)(m - 2k + i + 1))
        let num = 2.0 * ((k - i) as f64).ln();
        let den = ((i + 1) as f64).ln() + ((m + i + 1 - 2 * k) as f64).ln();
        log_p += num - den;
        out[i + 1] = log_p;
    }
    out
}

fn log_binom(n: usize, r: usize) -> f64 {
    let r = r.min(n - r);
    (0..r).map(|t| ((n - t) as f64).ln() - ((t + 1) as f64).ln()).sum()
}

/// `tails[m] = P(X >= m)` for `m` in `0..=k`, summed from `k` downwards.
fn tails_from_log_pmf(log_pmf: &[f64]) -> Vec<f64> {
    let mut tails = vec![0.0; log_pmf.len()];
    let mut acc = 0.0;
    for i in (0..log_pmf.len()).rev() {
        acc += log_pmf[i].exp();
        tails[i] = acc.min(1.0);
    }
    // The full sum is a probability; pin rounding drift at the top.
    tails[0] = 1.0;
    tails
}

/// `P(X >= m)` for every `m` in `0..=k`.
pub fn tail_probabilities(mode: CalibrationMode, k: usize, m: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    match mode {
        CalibrationMode::Binomial => Ok(tails_from_log_pmf(&binomial_log_pmf(k))),
        CalibrationMode::Hypergeometric => {
            if m < k {
                return Err(Error::InvalidArgument(format!("M = {m} is smaller than K = {k}")));
            }
            Ok(tails_from_log_pmf(&hypergeometric_log_pmf(k, m)))
        }
    }
}

/// Smallest overlap count `m` with `P(X >= m) <= target_fpr`.
pub fn calibrate(k: usize, target_fpr: f64, mode: CalibrationMode, m: usize) -> Result<CalibrationResult> {
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::InvalidArgument(format!("target FPR {target_fpr} not in (0, 1)")));
    }
    let tails = tail_probabilities(mode, k, m)?;
    let threshold = tails
        .iter()
        .position(|t| *t <= target_fpr)
        .ok_or_else(|| {
            Error::UnreachableTarget(format!(
                "P(X >= {k}) = {:.3e} exceeds target {target_fpr:e} for K = {k}",
                tails[k]
            ))
        })?;
    Ok(CalibrationResult {
        mode,
        k,
        m: (mode == CalibrationMode::Hypergeometric).then_some(m),
        threshold,
        target_fpr,
        achieved_fpr: tails[threshold],
    })
}
