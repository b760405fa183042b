//! Grid search for the perturbation scale `σ_n`.
//!
//! Estimates are computed over an increasing grid of `σ` values and the
//! selector looks for the stretch where they stay flat:
//!
//! 1. Every interior point that is the maximum or minimum of its `2h+1`
//!    window is a candidate; the candidate with the smallest total variation
//!    over its window wins and the window is the plateau.
//! 2. With no candidate, the window of `h` consecutive differences with the
//!    smallest total variation is the plateau (`h+1` grid points).
//!
//! Ties keep the earliest (smallest `σ`) window. Indices are zero-based.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::resampler::{ls_density_on_stream, LsConfig, LsEstimate};
use crate::survival::StepCdf;

/// Strictly increasing grid of positive `σ` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaGrid {
    values: Vec<f64>,
}

impl SigmaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("sigma grid is empty".into()));
        }
        if values.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput(
                "sigma grid values must be positive and finite".into(),
            ));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "sigma grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    /// `lo, lo + step, ...` up to `hi` inclusive (with a small tolerance for
    /// accumulated rounding in `(hi - lo) / step`).
    pub fn uniform(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || !(hi >= lo) {
            return Err(Error::InvalidInput(format!(
                "bad sigma grid range {lo}:{hi}:{step}"
            )));
        }
        let count = ((hi - lo) / step + 1e-6).floor() as usize + 1;
        Self::new((0..count).map(|i| lo + i as f64 * step).collect())
    }

    /// 0.05 to 10 in steps of 0.05; zero is left out since it gives no
    /// perturbation at all.
    pub fn default_grid() -> Self {
        Self::uniform(0.05, 10.0, 0.05).expect("default grid is valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Default neighborhood half-width.
pub const DEFAULT_H: usize = 20;

/// Estimates aligned with a [`SigmaGrid`], plus the neighborhood width `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTrace {
    estimates: Vec<f64>,
    h: usize,
}

impl EstimateTrace {
    pub fn new(estimates: Vec<f64>, h: usize) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidInput("neighborhood width h must be >= 1".into()));
        }
        if estimates.len() < 2 * h + 1 {
            return Err(Error::InvalidInput(format!(
                "trace of length {} is shorter than 2h+1 = {}",
                estimates.len(),
                2 * h + 1
            )));
        }
        if let Some(i) = estimates.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("estimate {i} is not finite")));
        }
        Ok(Self { estimates, h })
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// Which stage of the search produced the plateau.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionStage {
    Extremum,
    SlidingWindow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaSelection {
    pub sigma: f64,
    /// Inclusive grid index range of the plateau.
    pub plateau: (usize, usize),
    pub stage: SelectionStage,
}

/// Picks `σ` in the flattest stretch of the trace.
pub fn select_sigma(grid: &SigmaGrid, trace: &EstimateTrace) -> Result<SigmaSelection> {
    if grid.len() != trace.len() {
        return Err(Error::InvalidInput(format!(
            "grid has {} values but trace has {}",
            grid.len(),
            trace.len()
        )));
    }
    let f = trace.estimates();
    let h = trace.h();
    let n = f.len();
    let variation = |lo: usize, hi: usize| -> f64 {
        f[lo..=hi].windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    };

    let mut best: Option<(usize, f64)> = None;
    for i in h..n - h {
        let window = &f[i - h..=i + h];
        let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = window.iter().copied().fold(f64::INFINITY, f64::min);
        if f[i] == max || f[i] == min {
            let v = variation(i - h, i + h);
            if best.is_none_or(|(_, bv)| v < bv) {
                best = Some((i, v));
            }
        }
    }
    if let Some((c, _)) = best {
        let plateau = (c - h, c + h);
        return Ok(SigmaSelection {
            sigma: plateau_center(grid, plateau),
            plateau,
            stage: SelectionStage::Extremum,
        });
    }

    let diffs: Vec<f64> = f.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mut best_start = 0;
    let mut best_v = f64::INFINITY;
    for j in 0..n - h {
        let v: f64 = diffs[j..j + h].iter().sum();
        if v < best_v {
            best_v = v;
            best_start = j;
        }
    }
    let plateau = (best_start, best_start + h);
    Ok(SigmaSelection {
        sigma: plateau_center(grid, plateau),
        plateau,
        stage: SelectionStage::SlidingWindow,
    })
}

/// Central grid value of the plateau; the mean of the two central values
/// when it holds an even number of points.
fn plateau_center(grid: &SigmaGrid, (lo, hi): (usize, usize)) -> f64 {
    let s = grid.values();
    if (hi - lo) % 2 == 0 {
        s[(lo + hi) / 2]
    } else {
        let mid = (lo + hi) / 2;
        0.5 * (s[mid] + s[mid + 1])
    }
}

/// One estimate per grid value; grid point `i` draws from RNG stream `i`.
pub fn grid_estimates(
    curve: &StepCdf,
    p: f64,
    grid: &SigmaGrid,
    resamples: usize,
    seed: u64,
    h: usize,
) -> Result<EstimateTrace> {
    EstimateTrace::new(estimates_over_grid(curve, p, grid, resamples, seed)?, h)
}

/// Raw per-`σ` estimates behind [`grid_estimates`], without a width `h`.
pub fn estimates_over_grid(
    curve: &StepCdf,
    p: f64,
    grid: &SigmaGrid,
    resamples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    grid.values()
        .par_iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let config = LsConfig::new(resamples, sigma, seed)?;
            ls_density_on_stream(curve, p, &config, i as u64).map(|e| e.value)
        })
        .collect()
}

/// Output of [`auto_ls_density`].
#[derive(Debug, Clone)]
pub struct AutoEstimate {
    pub trace: EstimateTrace,
    pub selection: SigmaSelection,
    /// Fresh estimate at the selected `σ`.
    pub estimate: LsEstimate,
}

/// Grid estimates, plateau selection, then a final estimate at the selected
/// `σ` drawn from stream `grid.len()` so it does not reuse any grid draws.
pub fn auto_ls_density(
    curve: &StepCdf,
    p: f64,
    grid: &SigmaGrid,
    h: usize,
    resamples: usize,
    seed: u64,
) -> Result<AutoEstimate> {
    let trace = grid_estimates(curve, p, grid, resamples, seed, h)?;
    let selection = select_sigma(grid, &trace)?;
    let config = LsConfig::new(resamples, selection.sigma, seed)?;
    let estimate = ls_density_on_stream(curve, p, &config, grid.len() as u64)?;
    Ok(AutoEstimate {
        trace,
        selection,
        estimate,
    })
}
