//! Statistics over distance matrices and watermark sets: distance-distance
//! regression, rank correlation, residual histograms, self-similarity
//! residuals, cross-image uniqueness and robustness sweeps.
//!
//! Reports serialize to CSV with a fixed header row.

use std::fmt::Write as _;

use crate::imaging::{extract_mean_rgb, ImageBuffer};
use crate::perturb::{apply_attack, Attack};
use crate::predictor::{extract_watermark, PredictorModel};
use crate::relational::{canonical_pairs, pair_count, DistanceMatrix, PairIndexSet};
use crate::watermark::{encrypt, verify, ArnoldKey, CalibrationResult, RecordMeta};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionReport {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub spearman_rho: f64,
    pub n: usize,
}

pub const REGRESSION_HEADER: &str = "alpha,beta,r2,rho,n";

impl RegressionReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.alpha, self.beta, self.r_squared, self.spearman_rho, self.n
        )
    }
}

pub fn regression_csv(reports: &[RegressionReport]) -> String {
    let mut out = format!("{REGRESSION_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Least-squares fit `y ≈ alpha·x + beta`; returns `(alpha, beta, r²)`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} x values, {} y values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("regression needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("zero variance in the regressor; slope undefined".into()));
    }
    let alpha = sxy / sxx;
    let beta = my - alpha * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (alpha * a + beta);
            r * r
        })
        .sum();
    let r2 = if syy == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / syy
    };
    Ok((alpha, beta, r2))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Spearman rank correlation with average-rank ties. A constant input has
/// no rank order and yields 0.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "spearman needs two equal-length samples of at least 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

fn check_same_p(a: &DistanceMatrix, b: &DistanceMatrix) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "distance matrices over {} and {} patches",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// OLS of after-edit distances on before-edit distances over all canonical
/// pairs.
pub fn fit_distance_regression(before: &DistanceMatrix, after: &DistanceMatrix) -> Result<RegressionReport> {
    check_same_p(before, after)?;
    let x = before.upper();
    let y = after.upper();
    let (alpha, beta, r_squared) = ols(&x, &y)?;
    Ok(RegressionReport {
        alpha,
        beta,
        r_squared,
        spearman_rho: spearman(&x, &y)?,
        n: x.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualHistogram {
    pub bins: Vec<HistogramBin>,
    pub mean: f64,
    pub std_dev: f64,
    pub n: usize,
}

pub const RESIDUALS_HEADER: &str = "bin_lo,bin_hi,count";

impl ResidualHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{RESIDUALS_HEADER}\n");
        for b in &self.bins {
            let _ = writeln!(out, "{},{},{}", b.lo, b.hi, b.count);
        }
        out
    }
}

/// Equal-width bins over `[0, max]`; the last bin is closed. When every
/// value is zero the range is `[0, 1]`.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let max = values.iter().copied().fold(0.0f64, f64::max);
    let hi = if max > 0.0 { max } else { 1.0 };
    let width = hi / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = ((v / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: i as f64 * width,
            hi: if i + 1 == bins { hi } else { (i + 1) as f64 * width },
            count,
        })
        .collect())
}

/// Histogram of `|d_after − d_before|` over canonical pairs.
pub fn residual_distribution(before: &DistanceMatrix, after: &DistanceMatrix, bins: usize) -> Result<ResidualHistogram> {
    check_same_p(before, after)?;
    let res: Vec<f64> = canonical_pairs(before.len())
        .map(|(i, j)| (after.get(i, j) - before.get(i, j)).abs())
        .collect();
    let n = res.len();
    let (mean, std_dev) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = res.iter().sum::<f64>() / n as f64;
        let var = res.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    Ok(ResidualHistogram {
        bins: histogram(&res, bins)?,
        mean,
        std_dev,
        n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsmResidual {
    pub p: usize,
    /// `|after − before|`, row-major `p × p`.
    pub raw: Vec<f64>,
    /// `|after − alpha·before|` with the fitted slope.
    pub adjusted: Vec<f64>,
    pub alpha: f64,
    pub raw_mean: f64,
    pub raw_max: f64,
    pub adjusted_mean: f64,
    pub adjusted_max: f64,
}

pub const SSM_HEADER: &str = "kind,mean,max,alpha";

impl SsmResidual {
    pub fn to_csv(&self) -> String {
        format!(
            "{SSM_HEADER}\nraw,{},{},1\nscale_adjusted,{},{},{}\n",
            self.raw_mean, self.raw_max, self.adjusted_mean, self.adjusted_max, self.alpha
        )
    }
}

/// Self-similarity residuals before and after removing the fitted global
/// scale. Summaries are over off-diagonal pairs.
pub fn ssm_residual(before: &DistanceMatrix, after: &DistanceMatrix) -> Result<SsmResidual> {
    check_same_p(before, after)?;
    let p = before.len();
    let alpha = fit_distance_regression(before, after)?.alpha;
    let raw: Vec<f64> = before.values().iter().zip(after.values()).map(|(b, a)| (a - b).abs()).collect();
    let adjusted: Vec<f64> = before
        .values()
        .iter()
        .zip(after.values())
        .map(|(b, a)| (a - alpha * b).abs())
        .collect();
    let summarize = |m: &[f64]| {
        let vals: Vec<f64> = canonical_pairs(p).map(|(i, j)| m[i * p + j]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let max = vals.iter().copied().fold(0.0f64, f64::max);
        (mean, max)
    };
    let (raw_mean, raw_max) = summarize(&raw);
    let (adjusted_mean, adjusted_max) = summarize(&adjusted);
    Ok(SsmResidual {
        p,
        raw,
        adjusted,
        alpha,
        raw_mean,
        raw_max,
        adjusted_mean,
        adjusted_max,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    /// `(a, b, eta)` for every `a < b`.
    pub etas: Vec<(usize, usize, f64)>,
    pub mean: f64,
    pub max: f64,
    /// `overlap_histogram[c]` counts image pairs sharing exactly `c` pairs.
    pub overlap_histogram: Vec<usize>,
    pub k: usize,
    pub m: usize,
    /// `K² / M`, the null expectation of the shared count.
    pub expected_overlap: f64,
}

pub const UNIQUENESS_HEADER: &str = "id_a,id_b,eta";

impl UniquenessReport {
    /// Null expectation of `eta`, `K / M`.
    pub fn expected_eta(&self) -> f64 {
        self.expected_overlap / self.k as f64
    }

    /// Image pairs with `eta > threshold`.
    pub fn count_exceeding(&self, threshold: f64) -> usize {
        self.etas.iter().filter(|e| e.2 > threshold).count()
    }

    pub fn to_csv(&self, ids: &[String]) -> String {
        let mut out = format!("{UNIQUENESS_HEADER}\n");
        for &(a, b, eta) in &self.etas {
            let _ = writeln!(out, "{},{},{eta}", ids[a], ids[b]);
        }
        out
    }
}

/// Pairwise overlap of every two watermarks.
pub fn uniqueness_study(watermarks: &[PairIndexSet], k: usize) -> Result<UniquenessReport> {
    if watermarks.len() < 2 {
        return Err(Error::InvalidArgument("uniqueness needs at least two watermarks".into()));
    }
    let p = watermarks[0].patch_count();
    if let Some(w) = watermarks.iter().find(|w| w.len() != k || w.patch_count() != p) {
        return Err(Error::DimensionMismatch(format!(
            "watermark of {} pairs over {} patches, expected {k} over {p}",
            w.len(),
            w.patch_count()
        )));
    }
    let mut etas = Vec::with_capacity(watermarks.len() * (watermarks.len() - 1) / 2);
    let mut overlap_histogram = vec![0usize; k + 1];
    for a in 0..watermarks.len() {
        for b in a + 1..watermarks.len() {
            let shared = watermarks[a].intersection_count(&watermarks[b]);
            overlap_histogram[shared] += 1;
            etas.push((a, b, shared as f64 / k as f64));
        }
    }
    let mean = etas.iter().map(|e| e.2).sum::<f64>() / etas.len() as f64;
    let max = etas.iter().map(|e| e.2).fold(0.0f64, f64::max);
    let m = pair_count(p);
    Ok(UniquenessReport {
        etas,
        mean,
        max,
        overlap_histogram,
        k,
        m,
        expected_overlap: (k * k) as f64 / m as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub attack: String,
    pub tpr: f64,
    pub n: usize,
    pub authenticated: usize,
    pub threshold_m: usize,
    pub calib_mode: String,
}

pub const ROBUSTNESS_HEADER: &str = "attack,tpr,n,threshold_m,calib_mode";

pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut out = format!("{ROBUSTNESS_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.attack, r.tpr, r.n, r.threshold_m, r.calib_mode);
    }
    out
}

/// Seed of stochastic attacks on the `index`-th image of a sweep.
pub fn attack_seed(base: u64, index: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

pub struct SweepConfig<'a> {
    pub model: &'a PredictorModel,
    pub key: &'a ArnoldKey,
    pub calib: &'a CalibrationResult,
    pub patch_side: usize,
    pub seed: u64,
}

/// Registers every image, attacks it with every attack, re-extracts and
/// verifies. Images are processed in id order; stochastic attacks are
/// reseeded per image with [`attack_seed`].
pub fn robustness_sweep(
    cfg: &SweepConfig<'_>,
    images: &[(String, ImageBuffer)],
    attacks: &[Attack],
) -> Result<Vec<RobustnessRow>> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    let k = cfg.calib.k;
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|a, b| images[*a].0.cmp(&images[*b].0));

    let mut hits = vec![0usize; attacks.len()];
    for (pos, &idx) in order.iter().enumerate() {
        let (id, img) = &images[idx];
        let fm = extract_mean_rgb(img, cfg.patch_side)?;
        let registered = extract_watermark(cfg.model, &fm, k)?;
        let meta = RecordMeta {
            content_id: id.clone(),
            patch_side: cfg.patch_side,
            image_side: img.width(),
            feature_source: fm.source(),
            created: 0,
        };
        let record = encrypt(&registered, cfg.key, &meta)?;
        for (a, attack) in attacks.iter().enumerate() {
            let attacked = apply_attack(img, &attack.with_seed(attack_seed(cfg.seed, pos)))?;
            let suspect = extract_watermark(cfg.model, &extract_mean_rgb(&attacked, cfg.patch_side)?, k)?;
            if verify(&record, cfg.key, &suspect, cfg.calib)?.authenticated {
                hits[a] += 1;
            }
        }
    }
    Ok(attacks
        .iter()
        .zip(hits)
        .map(|(attack, authenticated)| RobustnessRow {
            attack: attack.label(),
            tpr: authenticated as f64 / images.len() as f64,
            n: images.len(),
            authenticated,
            threshold_m: cfg.calib.threshold,
            calib_mode: cfg.calib.mode.as_str().to_string(),
        })
        .collect())
}
