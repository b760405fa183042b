//! Resampling least-squares estimator of the density at a quantile.
//!
//! Draw `ε_b ~ N(0, σ²)`, form `Y_b = √n (F(q̂ + ε_b/√n) − p)` and regress
//! `Y` on `ε` through the origin: `f̂ = Σ ε_b Y_b / Σ ε_b²`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::NormalStream;
use crate::survival::StepCdf;

/// Draws per work unit. Fixed so the reduction tree does not depend on the
/// number of threads.
const CHUNK: usize = 16_384;

/// Resampling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsConfig {
    /// Number of Gaussian perturbations `B`.
    pub resamples: usize,
    /// Standard deviation `σ_n` of the perturbations.
    pub sigma: f64,
    pub seed: u64,
}

impl LsConfig {
    pub fn new(resamples: usize, sigma: f64, seed: u64) -> Result<Self> {
        let config = Self {
            resamples,
            sigma,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resamples < 2 {
            return Err(Error::InvalidConfig(format!(
                "number of resamples must be at least 2, got {}",
                self.resamples
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Result of [`ls_density`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsEstimate {
    /// Estimated density at the quantile.
    pub value: f64,
    pub q_hat: f64,
    pub p: f64,
    /// Monte-Carlo standard error of `value` given the data (sandwich form).
    pub std_error: f64,
    pub config: LsConfig,
}

/// Slope and its Monte-Carlo standard error from [`ls_slope`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsFit {
    pub value: f64,
    pub std_error: f64,
}

/// Estimates `f(q)` at the `p`-quantile of `curve` using perturbation stream 0.
pub fn ls_density(curve: &StepCdf, p: f64, config: &LsConfig) -> Result<LsEstimate> {
    ls_density_on_stream(curve, p, config, 0)
}

/// As [`ls_density`], drawing perturbations from the given RNG stream.
pub fn ls_density_on_stream(
    curve: &StepCdf,
    p: f64,
    config: &LsConfig,
    stream: u64,
) -> Result<LsEstimate> {
    config.validate()?;
    let q_hat = curve.quantile(p)?.q_hat;
    let fit = ls_slope(|t| curve.eval(t), q_hat, p, curve.sample_size(), config, stream)?;
    Ok(LsEstimate {
        value: fit.value,
        q_hat,
        p,
        std_error: fit.std_error,
        config: *config,
    })
}

/// Least-squares slope for an arbitrary distribution function `cdf`.
///
/// Perturbed points `q̂ + ε/√n` below the support are kept; `cdf` must
/// return zero there.
pub fn ls_slope<F>(
    cdf: F,
    q_hat: f64,
    p: f64,
    n: usize,
    config: &LsConfig,
    stream: u64,
) -> Result<LsFit>
where
    F: Fn(f64) -> f64 + Sync,
{
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let root_n = (n as f64).sqrt();
    let b_total = config.resamples;
    let n_chunks = b_total.div_ceil(CHUNK);

    let partials: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(b_total);
            let mut normals = NormalStream::new(config.seed, stream, start as u64);
            let mut m = Moments::default();
            for _ in start..end {
                let eps = config.sigma * normals.next_normal();
                let y = root_n * (cdf(q_hat + eps / root_n) - p);
                m.push(eps, y);
            }
            m
        })
        .collect();

    let total = partials
        .into_iter()
        .fold(Moments::default(), |acc, m| acc.merge(m));
    total.fit()
}

/// Least-squares slope for explicitly supplied perturbations `ε_b`.
pub fn ls_from_perturbations<F>(
    cdf: F,
    q_hat: f64,
    p: f64,
    n: usize,
    perturbations: &[f64],
) -> Result<LsFit>
where
    F: Fn(f64) -> f64,
{
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let root_n = (n as f64).sqrt();
    let mut m = Moments::default();
    for &eps in perturbations {
        m.push(eps, root_n * (cdf(q_hat + eps / root_n) - p));
    }
    m.fit()
}

/// Closed-form limit of [`ls_density`] as the number of resamples grows:
/// `(√n/σ²) ∫ u (F(q̂ + u/√n) − F(q̂)) φ_σ(u) du`.
///
/// Integrating by parts over the steps of `F` gives
/// `√n Σ_j ΔF_j φ_σ(√n (t_j − q̂))`, i.e. a Gaussian smoothing of the
/// jumps with bandwidth `σ/√n`, centered at `q̂`.
pub fn conditional_expectation_oracle(
    curve: &StepCdf,
    q_hat: f64,
    sigma: f64,
    n: usize,
) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let root_n = (n as f64).sqrt();
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (&t, &v) in curve.jump_times().iter().zip(curve.values()) {
        acc += (v - prev) * gaussian_pdf(root_n * (t - q_hat), sigma);
        prev = v;
    }
    Ok(root_n * acc)
}

pub(crate) fn gaussian_pdf(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    (-0.5 * z * z).exp() / (sigma * (std::f64::consts::TAU).sqrt())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }

    fn merge(mut self, other: Self) -> Self {
        self.add(other.sum);
        self.add(other.carry);
        self
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    e2: CompensatedSum,
    ey: CompensatedSum,
    e2y2: CompensatedSum,
    e3y: CompensatedSum,
    e4: CompensatedSum,
}

impl Moments {
    #[inline]
    fn push(&mut self, eps: f64, y: f64) {
        let e2 = eps * eps;
        self.e2.add(e2);
        self.ey.add(eps * y);
        self.e2y2.add(e2 * y * y);
        self.e3y.add(e2 * eps * y);
        self.e4.add(e2 * e2);
    }

    fn merge(self, o: Self) -> Self {
        Self {
            e2: self.e2.merge(o.e2),
            ey: self.ey.merge(o.ey),
            e2y2: self.e2y2.merge(o.e2y2),
            e3y: self.e3y.merge(o.e3y),
            e4: self.e4.merge(o.e4),
        }
    }

    fn fit(&self) -> Result<LsFit> {
        let sxx = self.e2.value();
        if !(sxx > 0.0) {
            return Err(Error::InvalidConfig(
                "perturbations have zero energy; increase sigma or resamples".into(),
            ));
        }
        let value = self.ey.value() / sxx;
        // Σ ε²(Y − f̂ε)², expanded.
        let rss_w = self.e2y2.value() - 2.0 * value * self.e3y.value()
            + value * value * self.e4.value();
        let std_error = rss_w.max(0.0).sqrt() / sxx;
        if !value.is_finite() {
            return Err(Error::InvalidInput("least-squares slope is not finite".into()));
        }
        Ok(LsFit { value, std_error })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_at;
    use crate::survival::{km_fit, SurvivalSample};

    #[test]
    fn recovers_linear_slope() {
        let (p, q, c) = (0.5, 3.0, 0.3);
        let cfg = LsConfig::new(5000, 0.5, 11).unwrap();
        // |ε|/√n stays far below the 1/(2c) half-width of the linear region.
        let fit = ls_slope(
            |t| (p + c * (t - q)).clamp(0.0, 1.0),
            q,
            p,
            100,
            &cfg,
            0,
        )
        .unwrap();
        assert!((fit.value - c).abs() < 1e-12, "{}", fit.value);
        assert!(fit.std_error < 1e-10);
    }

    #[test]
    fn matches_brute_force_summation() {
        let curve = km_fit(&SurvivalSample::uncensored(&[1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let cfg = LsConfig::new(3, 1.0, 5).unwrap();
        let est = ls_density(&curve, 0.5, &cfg).unwrap();
        // Direct evaluation with the same draws.
        let ecdf = |t: f64| [1.0, 2.0, 3.0, 4.0].iter().filter(|&&x| x <= t).count() as f64 / 4.0;
        let (mut num, mut den) = (0.0, 0.0);
        for b in 0..3 {
            let e = normal_at(5, 0, b);
            let y = 2.0 * (ecdf(2.0 + e / 2.0) - 0.5);
            num += e * y;
            den += e * e;
        }
        assert!((est.value - num / den).abs() < 1e-14);
        assert_eq!(est.q_hat, 2.0);
    }

    #[test]
    fn fixed_perturbations_by_hand() {
        // ECDF of {1,2,3,4}, q̂ = 2, √n = 2: Y = (-0.5, 0, 0.5).
        let curve = km_fit(&SurvivalSample::uncensored(&[1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let fit = ls_from_perturbations(|t| curve.eval(t), 2.0, 0.5, 4, &[-1.0, 0.5, 2.0]).unwrap();
        assert!((fit.value - 1.5 / 5.25).abs() < 1e-15);
        assert!(ls_from_perturbations(|t| curve.eval(t), 2.0, 0.5, 4, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let curve = km_fit(&SurvivalSample::uncensored(&[0.3, 0.9, 1.4, 2.2, 3.1]).unwrap()).unwrap();
        let cfg = LsConfig::new(40_000, 1.3, 99).unwrap();
        let a = ls_density(&curve, 0.5, &cfg).unwrap();
        let b = ls_density(&curve, 0.5, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        let c = ls_density(&curve, 0.5, &LsConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(LsConfig::new(1, 1.0, 0).is_err());
        assert!(LsConfig::new(10, 0.0, 0).is_err());
        assert!(LsConfig::new(10, -1.0, 0).is_err());
        assert!(LsConfig::new(10, f64::NAN, 0).is_err());
    }

    #[test]
    fn unreachable_quantile_propagates() {
        let s = SurvivalSample::from_slices(&[1.0, 2.0], &[true, false]).unwrap();
        let curve = km_fit(&s).unwrap();
        let cfg = LsConfig::new(10, 1.0, 0).unwrap();
        assert!(matches!(
            ls_density(&curve, 0.75, &cfg),
            Err(Error::UnreachableQuantile { .. })
        ));
    }

    #[test]
    fn oracle_single_jump_half_moment() {
        let curve = StepCdf::from_parts(vec![2.0], vec![1.0], 9).unwrap();
        let sigma = 1.7;
        let got = conditional_expectation_oracle(&curve, 2.0, sigma, 9).unwrap();
        let expect = 3.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn oracle_on_fine_staircase_returns_slope() {
        // Staircase approximation of a line of slope f around q̂.
        let (f, q_hat, n, sigma) = (0.2, 5.0, 64usize, 1.5);
        let delta = 1e-4;
        let half_width = 12.0 * sigma / (n as f64).sqrt();
        let steps = (half_width / delta) as i64;
        let times: Vec<f64> = (-steps..=steps).map(|k| q_hat + k as f64 * delta).collect();
        let values: Vec<f64> = (0..times.len()).map(|i| (i + 1) as f64 * f * delta).collect();
        let curve = StepCdf::from_parts(times, values, n).unwrap();
        let got = conditional_expectation_oracle(&curve, q_hat, sigma, n).unwrap();
        assert!((got - f).abs() < 1e-9, "{got}");
    }

    #[test]
    fn oracle_rejects_bad_sigma() {
        let curve = StepCdf::from_parts(vec![1.0], vec![1.0], 1).unwrap();
        assert!(conditional_expectation_oracle(&curve, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn negative_perturbations_see_zero_cdf() {
        // q̂ = 0.1 with n = 1: most perturbed points fall below zero.
        let curve = StepCdf::from_parts(vec![0.1, 0.2], vec![0.5, 1.0], 1).unwrap();
        let cfg = LsConfig::new(1000, 3.0, 4).unwrap();
        let est = ls_density(&curve, 0.5, &cfg).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for b in 0..1000 {
            let e = 3.0 * normal_at(4, 0, b);
            let t = 0.1 + e;
            let f = if t < 0.1 { 0.0 } else if t < 0.2 { 0.5 } else { 1.0 };
            num += e * (f - 0.5);
            den += e * e;
        }
        assert!((est.value - num / den).abs() < 1e-12);
    }
}
