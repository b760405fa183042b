//! IPCW Gaussian kernel density estimator with cross-validated bandwidth.
//!
//! Each observed event is weighted by `1 / Ŝ_cens(T_i-)`, the inverse of the
//! Kaplan-Meier censoring survival just before the event:
//!
//! ```text
//! f̂_h(t) = (1 / nh) Σ_i δ_i / Ŝ_cens(T_i-) · φ((T_i - t) / h)
//! ```
//!
//! The bandwidth minimizes `∫ f̂_h² − 2 Ĵ(h)` with the leave-one-out cross
//! term `Ĵ(h) = (1 / n(n-1)h) Σ_{i≠j} w_i w_j φ((T_i - T_j) / h)`.

use std::f64::consts::{SQRT_2, TAU};

use crate::error::{Error, Result};
use crate::survival::{km_fit, km_fit_censoring, StepCdf, SurvivalSample};

/// Number of points in the default bandwidth grid.
pub const DEFAULT_GRID_POINTS: usize = 40;

#[inline]
fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / TAU.sqrt()
}

/// Candidate bandwidths for cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeConfig {
    bandwidth_grid: Vec<f64>,
}

impl KdeConfig {
    pub fn new(bandwidth_grid: Vec<f64>) -> Result<Self> {
        if bandwidth_grid.is_empty() {
            return Err(Error::InvalidConfig("bandwidth grid is empty".into()));
        }
        if bandwidth_grid.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidConfig(
                "bandwidths must be positive and finite".into(),
            ));
        }
        if bandwidth_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "bandwidth grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { bandwidth_grid })
    }

    /// `count` log-spaced bandwidths from `lo` to `hi`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || count < 2 {
            return Err(Error::InvalidConfig(format!(
                "bad log-spaced bandwidth grid [{lo}, {hi}] x {count}"
            )));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let step = (b - a) / (count - 1) as f64;
        let mut grid: Vec<f64> = (0..count).map(|i| (a + i as f64 * step).exp()).collect();
        grid[0] = lo;
        grid[count - 1] = hi;
        Self::new(grid)
    }

    /// 40 log-spaced points over `[0.05 s, 2 s]`, `s` the standard deviation
    /// of the event times.
    pub fn default_for(sample: &SurvivalSample) -> Result<Self> {
        let times: Vec<f64> = sample
            .records()
            .iter()
            .filter(|o| o.event)
            .map(|o| o.time)
            .collect();
        if times.len() < 2 {
            return Err(Error::InvalidInput(
                "need at least two events to scale the bandwidth grid".into(),
            ));
        }
        let m = times.len() as f64;
        let mean = times.iter().sum::<f64>() / m;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let s = var.sqrt();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidInput(
                "event times have zero spread; cannot scale the bandwidth grid".into(),
            ));
        }
        Self::log_spaced(0.05 * s, 2.0 * s, DEFAULT_GRID_POINTS)
    }

    pub fn bandwidth_grid(&self) -> &[f64] {
        &self.bandwidth_grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeEstimate {
    pub value: f64,
    pub bandwidth: f64,
    pub eval_point: f64,
}

/// `(T_i, δ_i / Ŝ_cens(T_i-))` for every event; censored records carry no
/// weight and are dropped.
pub fn ipcw_weights(sample: &SurvivalSample, cens_curve: &StepCdf) -> Result<Vec<(f64, f64)>> {
    sample
        .records()
        .iter()
        .filter(|o| o.event)
        .map(|o| {
            let surv = 1.0 - cens_curve.eval_left(o.time);
            if surv > 0.0 {
                Ok((o.time, 1.0 / surv))
            } else {
                Err(Error::DegenerateWeight { time: o.time })
            }
        })
        .collect()
}

/// IPCW kernel estimate at `t` with bandwidth `h`.
pub fn kde_density(sample: &SurvivalSample, cens_curve: &StepCdf, t: f64, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let weights = ipcw_weights(sample, cens_curve)?;
    Ok(density_from_weights(&weights, sample.len(), t, h))
}

fn density_from_weights(weights: &[(f64, f64)], n: usize, t: f64, h: f64) -> f64 {
    let sum: f64 = weights
        .iter()
        .map(|&(ti, w)| w * std_normal_pdf((ti - t) / h))
        .sum();
    sum / (n as f64 * h)
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "bandwidth must be positive and finite, got {h}"
        )))
    }
}

/// Closed-form `∫ f̂_h(x)² dx`, from `∫ φ_h(x−a) φ_h(x−b) dx = φ_{h√2}(a−b)`.
pub fn integrated_square(sample: &SurvivalSample, cens_curve: &StepCdf, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let weights = ipcw_weights(sample, cens_curve)?;
    Ok(pair_sums(&weights, h).0 / (sample.len() as f64).powi(2))
}

/// Leave-one-out cross term `Ĵ(h)`.
pub fn cross_term(sample: &SurvivalSample, cens_curve: &StepCdf, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let n = sample.len();
    if n < 2 {
        return Err(Error::InvalidInput("cross-validation needs n >= 2".into()));
    }
    let weights = ipcw_weights(sample, cens_curve)?;
    Ok(pair_sums(&weights, h).1 / (n as f64 * (n - 1) as f64))
}

/// Returns `(n² ∫f̂², n(n−1) Ĵ)`.
fn pair_sums(weights: &[(f64, f64)], h: f64) -> (f64, f64) {
    let h2 = h * SQRT_2;
    let mut conv = 0.0;
    let mut loo = 0.0;
    for (i, &(ti, wi)) in weights.iter().enumerate() {
        conv += wi * wi * std_normal_pdf(0.0) / h2;
        for &(tj, wj) in &weights[i + 1..] {
            let d = ti - tj;
            let ww = 2.0 * wi * wj;
            conv += ww * std_normal_pdf(d / h2) / h2;
            loo += ww * std_normal_pdf(d / h) / h;
        }
    }
    (conv, loo)
}

/// Cross-validation criterion `∫ f̂_h² − 2 Ĵ(h)`.
pub fn cv_score(sample: &SurvivalSample, cens_curve: &StepCdf, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let n = sample.len();
    if n < 2 {
        return Err(Error::InvalidInput("cross-validation needs n >= 2".into()));
    }
    let weights = ipcw_weights(sample, cens_curve)?;
    let nf = n as f64;
    let (conv, loo) = pair_sums(&weights, h);
    Ok(conv / (nf * nf) - 2.0 * loo / (nf * (nf - 1.0)))
}

/// Grid bandwidth with the smallest criterion; the first one on exact ties.
pub fn cv_bandwidth(sample: &SurvivalSample, cens_curve: &StepCdf, config: &KdeConfig) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &h in config.bandwidth_grid() {
        let score = cv_score(sample, cens_curve, h)?;
        if score.is_finite() && best.is_none_or(|(_, s)| score < s) {
            best = Some((h, score));
        }
    }
    best.map(|(h, _)| h).ok_or_else(|| {
        Error::SelectionFailure("no bandwidth in the grid has a finite score".into())
    })
}

/// Kernel baseline at the estimated `p`-quantile, bandwidth by cross-validation.
///
/// Uses [`KdeConfig::default_for`] when `config` is `None`.
pub fn kde_at_quantile(
    sample: &SurvivalSample,
    p: f64,
    config: Option<&KdeConfig>,
) -> Result<KdeEstimate> {
    let q_hat = km_fit(sample)?.quantile(p)?.q_hat;
    let cens_curve = km_fit_censoring(sample)?;
    let default;
    let config = match config {
        Some(c) => c,
        None => {
            default = KdeConfig::default_for(sample)?;
            &default
        }
    };
    let bandwidth = cv_bandwidth(sample, &cens_curve, config)?;
    let value = kde_density(sample, &cens_curve, q_hat, bandwidth)?;
    Ok(KdeEstimate {
        value,
        bandwidth,
        eval_point: q_hat,
    })
}
