//! Right-censored samples, the Kaplan-Meier product-limit CDF, and quantiles.
//!
//! The CDF update is written segment-wise: between two censorings the
//! product `∏ (r_j - d_j) / r_j` telescopes to `r_after / r_start`, so the
//! estimator is carried as `(1 - S0) + S0 * (r_start - r_after) / r_start`.
//! On uncensored data this is exactly `#{T_i <= t} / n`, bit for bit.

use crate::error::{Error, Result};

/// One observed pair `(T_i, Δ_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    /// `true` when the event was observed, `false` when censored.
    pub event: bool,
}

impl Observation {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event }
    }
}

/// Right-censored sample, sorted by time with events before censorings on ties.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSample {
    records: Vec<Observation>,
}

impl SurvivalSample {
    /// Builds a sample of strictly positive, finite times.
    pub fn new(records: Vec<Observation>) -> Result<Self> {
        if let Some((i, o)) = records
            .iter()
            .enumerate()
            .find(|(_, o)| !(o.time.is_finite() && o.time > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "record {i}: time {} must be finite and positive",
                o.time
            )));
        }
        Self::with_any_finite_times(records)
    }

    /// Builds a sample whose times only need to be finite.
    ///
    /// Needed for location families such as the Cauchy, whose observed times
    /// can be negative. Every estimator in this crate accepts such samples.
    pub fn with_any_finite_times(mut records: Vec<Observation>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("sample is empty".into()));
        }
        if let Some((i, o)) = records
            .iter()
            .enumerate()
            .find(|(_, o)| !o.time.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "record {i}: time {} is not finite",
                o.time
            )));
        }
        records.sort_by(|a, b| a.time.total_cmp(&b.time).then(b.event.cmp(&a.event)));
        Ok(Self { records })
    }

    pub fn from_slices(times: &[f64], events: &[bool]) -> Result<Self> {
        if times.len() != events.len() {
            return Err(Error::InvalidInput(format!(
                "{} times but {} event indicators",
                times.len(),
                events.len()
            )));
        }
        Self::new(
            times
                .iter()
                .zip(events)
                .map(|(&t, &e)| Observation::new(t, e))
                .collect(),
        )
    }

    /// Uncensored sample.
    pub fn uncensored(times: &[f64]) -> Result<Self> {
        Self::new(times.iter().map(|&t| Observation::new(t, true)).collect())
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|o| o.event).count()
    }

    /// Fraction of censored records.
    pub fn censoring_fraction(&self) -> f64 {
        1.0 - self.n_events() as f64 / self.len() as f64
    }

    /// Same records with every event indicator flipped.
    pub fn flipped(&self) -> Self {
        let records = self
            .records
            .iter()
            .map(|o| Observation::new(o.time, !o.event))
            .collect();
        // Re-sort: the tie order depends on the indicator.
        Self::with_any_finite_times(records).expect("flipping keeps a valid sample valid")
    }

    /// Shifts every time by `offset`, keeping indicators.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        Self::with_any_finite_times(
            self.records
                .iter()
                .map(|o| Observation::new(o.time + offset, o.event))
                .collect(),
        )
    }
}

/// Right-continuous, non-decreasing step CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    jump_times: Vec<f64>,
    values: Vec<f64>,
    reaches_one: bool,
    n: usize,
}

impl StepCdf {
    /// Builds a curve from explicit jumps; `n` is the size of the sample it
    /// was estimated from.
    pub fn from_parts(jump_times: Vec<f64>, values: Vec<f64>, n: usize) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::InvalidInput(
                "jump times and values differ in length".into(),
            ));
        }
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be positive".into()));
        }
        if jump_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("jump times must be finite".into()));
        }
        if jump_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "jump times must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) || values.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidInput(
                "values must be non-decreasing within [0, 1]".into(),
            ));
        }
        let reaches_one = values.last() == Some(&1.0);
        Ok(Self {
            jump_times,
            values,
            reaches_one,
            n,
        })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    /// Value of the CDF from each jump up to the next one.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `false` when the product-limit estimate plateaus below one.
    pub fn reaches_one(&self) -> bool {
        self.reaches_one
    }

    /// Size of the sample behind the curve.
    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// Right-continuous evaluation `F(t)`; zero below the first jump.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.jump_times.partition_point(|&x| x <= t);
        if idx == 0 {
            0.0
        } else {
            self.values[idx - 1]
        }
    }

    /// Left limit `F(t-)`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let idx = self.jump_times.partition_point(|&x| x < t);
        if idx == 0 {
            0.0
        } else {
            self.values[idx - 1]
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `q̂ = inf { t : F(t) >= p }`.
    pub fn quantile(&self, p: f64) -> Result<QuantileEstimate> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidInput(format!(
                "quantile order {p} outside (0, 1)"
            )));
        }
        let idx = self.values.partition_point(|&v| v < p);
        match self.jump_times.get(idx) {
            Some(&q_hat) => Ok(QuantileEstimate { p, q_hat }),
            None => Err(Error::UnreachableQuantile {
                p,
                max_value: self.max_value(),
            }),
        }
    }
}

/// Estimated quantile of order `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate {
    pub p: f64,
    pub q_hat: f64,
}

/// Kaplan-Meier estimate of the event-time CDF.
pub fn km_fit(sample: &SurvivalSample) -> Result<StepCdf> {
    product_limit(sample.records(), |o| o.event)
}

/// Kaplan-Meier estimate of the censoring-time CDF (indicators flipped).
///
/// The censoring survival is `1 - value`.
pub fn km_fit_censoring(sample: &SurvivalSample) -> Result<StepCdf> {
    product_limit(&sample.flipped().records, |o| o.event)
}

/// `records` must be sorted by time.
fn product_limit(records: &[Observation], is_event: impl Fn(&Observation) -> bool) -> Result<StepCdf> {
    let n = records.len();
    if n == 0 {
        return Err(Error::InvalidInput("sample is empty".into()));
    }
    let mut jump_times = Vec::new();
    let mut values = Vec::new();

    let mut at_risk = n;
    // Survival and risk-set size at the start of the current censoring-free run.
    let mut seg_survival = 1.0_f64;
    let mut seg_risk = n;

    let mut i = 0;
    while i < n {
        let t = records[i].time;
        let mut events = 0;
        let mut censored = 0;
        while i < n && records[i].time == t {
            if is_event(&records[i]) {
                events += 1;
            } else {
                censored += 1;
            }
            i += 1;
        }
        if events > 0 {
            at_risk -= events;
            let value = if at_risk == 0 {
                1.0
            } else {
                let removed = (seg_risk - at_risk) as f64 / seg_risk as f64;
                ((1.0 - seg_survival) + seg_survival * removed).clamp(0.0, 1.0)
            };
            jump_times.push(t);
            values.push(value);
        }
        if censored > 0 {
            seg_survival *= at_risk as f64 / seg_risk as f64;
            at_risk -= censored;
            seg_risk = at_risk;
        }
    }

    let reaches_one = values.last() == Some(&1.0);
    Ok(StepCdf {
        jump_times,
        values,
        reaches_one,
        n,
    })
}
