//! Monte-Carlo harness: scenario generation, censoring calibration, LS vs
//! KDE comparison tables and MSE-versus-`σ` curves.
//!
//! Replicate `r` draws its data from ChaCha8 stream `r` of the master seed
//! and its perturbations from seed `mix_seed(master_seed, r)`, so results
//! do not depend on how replicates are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kde::{kde_at_quantile, KdeConfig};
use crate::resampler::{ls_density, LsConfig};
use crate::rng::mix_seed;
use crate::select::{auto_ls_density, estimates_over_grid, SigmaGrid};
use crate::survival::{km_fit, Observation, SurvivalSample};

/// Distribution of the true event times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurvivalLaw {
    Exponential { rate: f64 },
    Cauchy { location: f64, scale: f64 },
}

impl SurvivalLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SurvivalLaw::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            SurvivalLaw::Cauchy { location, scale } => {
                location.is_finite() && scale > 0.0 && scale.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid survival law {self:?}")))
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            SurvivalLaw::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-rate * t).exp_m1()
                }
            }
            SurvivalLaw::Cauchy { location, scale } => {
                0.5 + ((t - location) / scale).atan() / std::f64::consts::PI
            }
        }
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match *self {
            SurvivalLaw::Exponential { rate } => {
                if t < 0.0 {
                    0.0
                } else {
                    rate * (-rate * t).exp()
                }
            }
            SurvivalLaw::Cauchy { location, scale } => {
                let z = (t - location) / scale;
                1.0 / (std::f64::consts::PI * scale * (1.0 + z * z))
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            SurvivalLaw::Exponential { rate } => -(-p).ln_1p() / rate,
            SurvivalLaw::Cauchy { location, scale } => {
                location + scale * (std::f64::consts::PI * (p - 0.5)).tan()
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            SurvivalLaw::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            SurvivalLaw::Cauchy { location, scale } => Cauchy::new(location, scale)
                .expect("validated scale")
                .sample(rng),
        }
    }
}

/// How the exponential censoring times are specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CensoringSpec {
    /// Target fraction of censored observations; the rate is calibrated.
    Fraction(f64),
    /// Exponential censoring rate used as is; zero means no censoring.
    Rate(f64),
}

/// Generative model and Monte-Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub survival: SurvivalLaw,
    pub censoring: CensoringSpec,
    pub n: usize,
    pub p: f64,
    pub replications: usize,
    /// Number of Gaussian perturbations per LS estimate.
    pub resamples: usize,
    pub master_seed: u64,
}

impl ScenarioSpec {
    /// Exponential(1.5) survival.
    pub fn scenario1(n: usize, censoring: f64) -> Self {
        Self {
            survival: SurvivalLaw::Exponential { rate: 1.5 },
            censoring: CensoringSpec::Fraction(censoring),
            n,
            p: 0.5,
            replications: 500,
            resamples: 1000,
            master_seed: 20_240_601,
        }
    }

    /// Standard Cauchy survival.
    pub fn scenario2(n: usize, censoring: f64) -> Self {
        Self {
            survival: SurvivalLaw::Cauchy {
                location: 0.0,
                scale: 1.0,
            },
            ..Self::scenario1(n, censoring)
        }
    }

    /// Setting of the MSE-versus-`σ` study: Exponential(1.5) survival,
    /// Exponential(0.12) censoring, 100 replications.
    pub fn mse_study(n: usize) -> Self {
        Self {
            censoring: CensoringSpec::Rate(0.12),
            replications: 100,
            resamples: 100_000,
            ..Self::scenario1(n, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.survival.validate()?;
        match self.censoring {
            CensoringSpec::Fraction(f) if !(0.0..=0.95).contains(&f) => {
                return Err(Error::InvalidConfig(format!(
                    "target censoring {f} outside [0, 0.95]"
                )))
            }
            CensoringSpec::Rate(r) if !(r >= 0.0 && r.is_finite()) => {
                return Err(Error::InvalidConfig(format!("censoring rate {r} must be >= 0")))
            }
            _ => {}
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("sample size must be at least 2".into()));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidConfig(format!("p = {} outside (0, 1)", self.p)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        if self.resamples < 2 {
            return Err(Error::InvalidConfig("need at least two resamples".into()));
        }
        Ok(())
    }

    /// Exponential censoring rate for this scenario.
    pub fn censoring_rate(&self) -> Result<f64> {
        match self.censoring {
            CensoringSpec::Rate(r) => Ok(r),
            CensoringSpec::Fraction(f) => calibrate_censoring(&self.survival, f),
        }
    }

    /// Nominal censoring fraction, for reporting.
    pub fn censoring_fraction(&self) -> f64 {
        match self.censoring {
            CensoringSpec::Fraction(f) => f,
            CensoringSpec::Rate(r) => censoring_probability(&self.survival, r),
        }
    }
}

/// `f(F⁻¹(p))` for the scenario's survival law.
pub fn true_density_at_quantile(spec: &ScenarioSpec) -> f64 {
    spec.survival.pdf(spec.survival.quantile(spec.p))
}

/// `P(C < T̃)` for `C ~ Exp(rate)` independent of `T̃`.
pub fn censoring_probability(law: &SurvivalLaw, rate: f64) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    match *law {
        SurvivalLaw::Exponential { rate: event_rate } => rate / (rate + event_rate),
        // E[S(X / rate)], X ~ Exp(1).
        _ => adaptive_simpson(&|x: f64| (-x).exp() * (1.0 - law.cdf(x / rate)), 0.0, 60.0, 1e-12),
    }
}

/// Exponential censoring rate reaching the `target` censored fraction.
pub fn calibrate_censoring(law: &SurvivalLaw, target: f64) -> Result<f64> {
    law.validate()?;
    if !(0.0..=0.95).contains(&target) {
        return Err(Error::InvalidConfig(format!(
            "target censoring {target} outside [0, 0.95]"
        )));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    if let SurvivalLaw::Exponential { rate } = *law {
        return Ok(target * rate / (1.0 - target));
    }
    // P(C < T̃) increases from 0 towards P(T̃ > 0) as the rate grows.
    let reach = |rate: f64| censoring_probability(law, rate) - target;
    let mut hi = 1.0;
    let mut doublings = 0;
    while reach(hi) < 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::CalibrationFailure(format!(
                "censoring fraction {target} is not reachable for {law:?}"
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if reach(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Draws replicate `replicate` of the scenario with the given censoring rate.
pub fn generate_sample(spec: &ScenarioSpec, censoring_rate: f64, replicate: u64) -> Result<SurvivalSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.master_seed);
    rng.set_stream(replicate);
    let censor = (censoring_rate > 0.0)
        .then(|| Exp::new(censoring_rate))
        .transpose()
        .map_err(|e| Error::InvalidConfig(format!("censoring rate: {e}")))?;
    let records = (0..spec.n)
        .map(|_| {
            let event_time = spec.survival.sample(&mut rng);
            let censor_time = censor.map_or(f64::INFINITY, |d| d.sample(&mut rng));
            if event_time <= censor_time {
                Observation::new(event_time, true)
            } else {
                Observation::new(censor_time, false)
            }
        })
        .collect();
    SurvivalSample::with_any_finite_times(records)
}

/// How the LS perturbation scale is chosen per replicate.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaChoice {
    Fixed(f64),
    /// Plateau search over `grid` with neighborhood width `h`.
    GridSearch { grid: SigmaGrid, h: usize },
}

impl SigmaChoice {
    pub fn default_grid_search() -> Self {
        SigmaChoice::GridSearch {
            grid: SigmaGrid::default_grid(),
            h: crate::select::DEFAULT_H,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ls,
    Kde,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Ls => "LS",
            Method::Kde => "KDE",
        }
    }
}

/// Bias, variance and MSE of one method over the retained replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub method: Method,
    pub censoring: f64,
    pub n: usize,
    pub bias: f64,
    /// Population variance (divide by the replicate count).
    pub variance: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub truth: f64,
    pub censoring_rate: f64,
    /// Mean observed censored fraction over retained replicates.
    pub realized_censoring: f64,
    /// Mean selected `σ` over retained replicates.
    pub mean_sigma: f64,
    pub retained: usize,
    /// Replicates dropped because the quantile or the kernel weights could
    /// not be estimated from the sample.
    pub excluded: usize,
}

/// Summary statistics of `values` around `truth`.
pub fn summarize(values: &[f64], truth: f64) -> (f64, f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r;
    let mse = values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / r;
    (mean - truth, variance, mse)
}

/// Data problems that exclude a replicate instead of failing the run.
fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::UnreachableQuantile { .. }
            | Error::DegenerateWeight { .. }
            | Error::SelectionFailure(_)
            | Error::InvalidInput(_)
    )
}

struct ReplicateOutcome {
    ls: f64,
    kde: f64,
    sigma: f64,
    censored: f64,
}

/// LS and KDE estimates over all replicates, summarized per method.
///
/// `kde` fixes the bandwidth grid; `None` uses [`KdeConfig::default_for`]
/// on each sample.
pub fn run_comparison(
    spec: &ScenarioSpec,
    sigma: &SigmaChoice,
    kde: Option<&KdeConfig>,
) -> Result<ComparisonReport> {
    spec.validate()?;
    if let SigmaChoice::GridSearch { grid, h } = sigma {
        if *h == 0 || grid.len() < 2 * h + 1 {
            return Err(Error::InvalidConfig(format!(
                "sigma grid of {} points is too short for h = {h}",
                grid.len()
            )));
        }
    }
    let censoring_rate = spec.censoring_rate()?;
    let truth = true_density_at_quantile(spec);

    let outcomes: Vec<Result<Option<ReplicateOutcome>>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| {
            let sample = generate_sample(spec, censoring_rate, r as u64)?;
            let seed = mix_seed(spec.master_seed, r as u64);
            match replicate(&sample, spec, sigma, kde, seed) {
                Ok(o) => Ok(Some(o)),
                Err(e) if is_degenerate(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut kept = Vec::with_capacity(outcomes.len());
    let mut excluded = 0;
    for o in outcomes {
        match o? {
            Some(o) => kept.push(o),
            None => excluded += 1,
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidInput(format!(
            "all {} replicates were excluded",
            spec.replications
        )));
    }

    let censoring = spec.censoring_fraction();
    let row = |method: Method, values: Vec<f64>| {
        let (bias, variance, mse) = summarize(&values, truth);
        ComparisonRow {
            method,
            censoring,
            n: spec.n,
            bias,
            variance,
            mse,
        }
    };
    let k = kept.len() as f64;
    Ok(ComparisonReport {
        rows: vec![
            row(Method::Ls, kept.iter().map(|o| o.ls).collect()),
            row(Method::Kde, kept.iter().map(|o| o.kde).collect()),
        ],
        truth,
        censoring_rate,
        realized_censoring: kept.iter().map(|o| o.censored).sum::<f64>() / k,
        mean_sigma: kept.iter().map(|o| o.sigma).sum::<f64>() / k,
        retained: kept.len(),
        excluded,
    })
}

fn replicate(
    sample: &SurvivalSample,
    spec: &ScenarioSpec,
    sigma: &SigmaChoice,
    kde: Option<&KdeConfig>,
    seed: u64,
) -> Result<ReplicateOutcome> {
    let curve = km_fit(sample)?;
    let (ls, sigma) = match sigma {
        SigmaChoice::Fixed(s) => {
            let est = ls_density(&curve, spec.p, &LsConfig::new(spec.resamples, *s, seed)?)?;
            (est.value, *s)
        }
        SigmaChoice::GridSearch { grid, h } => {
            let auto = auto_ls_density(&curve, spec.p, grid, *h, spec.resamples, seed)?;
            (auto.estimate.value, auto.selection.sigma)
        }
    };
    let kde = kde_at_quantile(sample, spec.p, kde)?.value;
    Ok(ReplicateOutcome {
        ls,
        kde,
        sigma,
        censored: sample.censoring_fraction(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseCurvePoint {
    pub sigma: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub points: Vec<MseCurvePoint>,
    pub retained: usize,
    pub excluded: usize,
}

impl MseCurve {
    /// Contiguous `σ` range around the minimum where `mse <= factor * min`.
    pub fn low_mse_window(&self, factor: f64) -> (f64, f64) {
        let pts = &self.points;
        let (argmin, min) = pts
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bm), (i, p)| {
                if p.mse < bm {
                    (i, p.mse)
                } else {
                    (bi, bm)
                }
            });
        let limit = factor * min;
        let mut lo = argmin;
        while lo > 0 && pts[lo - 1].mse <= limit {
            lo -= 1;
        }
        let mut hi = argmin;
        while hi + 1 < pts.len() && pts[hi + 1].mse <= limit {
            hi += 1;
        }
        (pts[lo].sigma, pts[hi].sigma)
    }

    pub fn low_mse_width(&self, factor: f64) -> f64 {
        let (lo, hi) = self.low_mse_window(factor);
        hi - lo
    }
}

/// MSE of the LS estimate at every `σ` of the grid.
pub fn mse_curve(spec: &ScenarioSpec, grid: &SigmaGrid) -> Result<MseCurve> {
    spec.validate()?;
    let censoring_rate = spec.censoring_rate()?;
    let truth = true_density_at_quantile(spec);

    let per_rep: Vec<Result<Option<Vec<f64>>>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| {
            let sample = generate_sample(spec, censoring_rate, r as u64)?;
            let seed = mix_seed(spec.master_seed, r as u64);
            let estimates = km_fit(&sample)
                .and_then(|curve| estimates_over_grid(&curve, spec.p, grid, spec.resamples, seed));
            match estimates {
                Ok(v) => Ok(Some(v)),
                Err(e) if is_degenerate(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut sq_err = vec![0.0; grid.len()];
    let mut retained = 0;
    let mut excluded = 0;
    for rep in per_rep {
        match rep? {
            Some(v) => {
                retained += 1;
                for (acc, e) in sq_err.iter_mut().zip(v) {
                    *acc += (e - truth).powi(2);
                }
            }
            None => excluded += 1,
        }
    }
    if retained == 0 {
        return Err(Error::InvalidInput("all replicates were excluded".into()));
    }
    let points = grid
        .values()
        .iter()
        .zip(sq_err)
        .map(|(&sigma, s)| MseCurvePoint {
            sigma,
            mse: s / retained as f64,
        })
        .collect();
    Ok(MseCurve {
        points,
        retained,
        excluded,
    })
}
