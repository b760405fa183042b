//! Acceptance checks. Each test prints one `criterion N: PASS|FAIL` line
//! with the measured quantities, then asserts.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` to see
//! the report lines.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use quantile_density::kde::{integrated_square, kde_density};
use quantile_density::rng::mix_seed;
use quantile_density::select::{auto_ls_density, SelectionStage, DEFAULT_H};
use quantile_density::sim::{
    generate_sample, mse_curve, run_comparison, true_density_at_quantile, CensoringSpec, Method,
    ScenarioSpec, SigmaChoice,
};
use quantile_density::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: u32, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn criterion_1_km_matches_ecdf() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        // Coarse rounding produces ties.
        let times: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0.01..5.0f64) * 8.0).ceil() / 8.0)
            .collect();
        let curve = km_fit(&SurvivalSample::uncensored(&times).unwrap()).unwrap();
        let mut probes = times.clone();
        probes.extend(times.iter().map(|t| t - 1.0 / 16.0));
        probes.extend([0.0, 10.0]);
        for t in probes {
            let ecdf = times.iter().filter(|&&x| x <= t).count() as f64 / n as f64;
            checked += 1;
            if curve.eval(t) != ecdf {
                mismatches += 1;
            }
        }
    }
    let pass = mismatches == 0;
    report(
        1,
        pass,
        &format!(
            "{mismatches} mismatches over {checked} points ({:.2?})",
            start.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_ls_matches_conditional_expectation() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        master_seed: 77,
        ..ScenarioSpec::scenario1(100, 0.25)
    };
    let rate = spec.censoring_rate().unwrap();
    let sigma = 2.0;
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for r in 0..20 {
        let sample = generate_sample(&spec, rate, r).unwrap();
        let curve = km_fit(&sample).unwrap();
        let est = ls_density(&curve, 0.5, &LsConfig::new(1_000_000, sigma, 1000 + r).unwrap()).unwrap();
        let oracle = conditional_expectation_oracle(&curve, est.q_hat, sigma, sample.len()).unwrap();
        let z = (est.value - oracle).abs() / est.std_error;
        worst = worst.max(z);
        if z <= 5.0 {
            passed += 1;
        }
    }
    let pass = passed >= 19;
    report(
        2,
        pass,
        &format!(
            "{passed}/20 within 5 MC standard errors, worst {worst:.2} ({:.2?})",
            start.elapsed()
        ),
    );
    assert!(pass);
}

fn comparison(spec: &ScenarioSpec) -> sim::ComparisonReport {
    run_comparison(spec, &SigmaChoice::default_grid_search(), None).unwrap()
}

fn row(report: &sim::ComparisonReport, method: Method) -> sim::ComparisonRow {
    *report.rows.iter().find(|r| r.method == method).unwrap()
}

#[test]
fn criterion_3_exponential_table() {
    let start = Instant::now();
    let big = comparison(&ScenarioSpec::scenario1(200, 0.1));
    let small = comparison(&ScenarioSpec::scenario1(50, 0.4));
    let ls_big = row(&big, Method::Ls);
    let kde_big = row(&big, Method::Kde);
    let ls_small = row(&small, Method::Ls);

    let checks = [
        (
            (0.005..=0.015).contains(&ls_big.mse),
            format!("n=200/10% LS mse {:.4} in [0.005, 0.015]", ls_big.mse),
        ),
        (
            (kde_big.bias + 0.183).abs() <= 0.03,
            format!("n=200/10% KDE bias {:.4} in -0.183±0.03", kde_big.bias),
        ),
        (
            (0.015..=0.035).contains(&ls_small.mse),
            format!("n=50/40% LS mse {:.4} in [0.015, 0.035]", ls_small.mse),
        ),
    ];
    let pass = checks.iter().all(|(ok, _)| *ok);
    let detail: Vec<String> = checks
        .iter()
        .map(|(ok, s)| format!("[{}] {s}", if *ok { "ok" } else { "x" }))
        .collect();
    report(
        3,
        pass,
        &format!(
            "{}; LS bias {:.4}/{:.4}, mean sigma {:.2}/{:.2}, excluded {}/{} ({:.2?})",
            detail.join("; "),
            ls_big.bias,
            ls_small.bias,
            big.mean_sigma,
            small.mean_sigma,
            big.excluded,
            small.excluded,
            start.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_cauchy_table() {
    let start = Instant::now();
    let spec = ScenarioSpec::scenario2(200, 0.25);
    assert!((true_density_at_quantile(&spec) - std::f64::consts::FRAC_1_PI).abs() < 1e-15);
    let rep = comparison(&spec);
    let ls = row(&rep, Method::Ls);
    let pass = (0.0015..=0.0045).contains(&ls.mse) && ls.bias.abs() <= 0.02;
    report(
        4,
        pass,
        &format!(
            "LS mse {:.4} in [0.0015, 0.0045], |bias| {:.4} <= 0.02, mean sigma {:.2} ({:.2?})",
            ls.mse,
            ls.bias.abs(),
            rep.mean_sigma,
            start.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_plateau_widens_with_n() {
    let start = Instant::now();
    let grid = SigmaGrid::uniform(0.1, 15.0, 0.1).unwrap();
    let mut widths = Vec::new();
    let mut windows = Vec::new();
    for n in [50, 200, 1000] {
        let spec = ScenarioSpec {
            resamples: 10_000,
            ..ScenarioSpec::mse_study(n)
        };
        let curve = mse_curve(&spec, &grid).unwrap();
        windows.push(curve.low_mse_window(2.0));
        widths.push(curve.low_mse_width(2.0));
    }
    let pass = widths[0] < widths[1] && widths[1] < widths[2];
    let detail: Vec<String> = [50, 200, 1000]
        .iter()
        .zip(&windows)
        .map(|(n, (lo, hi))| format!("n={n} [{lo:.1}, {hi:.1}]"))
        .collect();
    report(
        5,
        pass,
        &format!(
            "low-MSE windows {} (B=1e4, {:.2?})",
            detail.join(", "),
            start.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_selector_fixtures() {
    let grid = SigmaGrid::uniform(0.1, 10.1, 0.1).unwrap();
    let sigma = |one_based: usize| grid.values()[one_based - 1];

    let constant = EstimateTrace::new(vec![0.7; 101], 20).unwrap();
    let a = select_sigma(&grid, &constant).unwrap();

    let linear = EstimateTrace::new((0..101).map(|i| 0.25 * i as f64).collect(), 20).unwrap();
    let b = select_sigma(&grid, &linear).unwrap();

    // Flat over 40..=80 (1-based), centered at 60.
    let valley: Vec<f64> = (1..=101)
        .map(|i: i32| {
            if i < 40 {
                (40 - i) as f64
            } else if i > 80 {
                (i - 80) as f64
            } else {
                0.0
            }
        })
        .collect();
    let c = select_sigma(&grid, &EstimateTrace::new(valley, 20).unwrap()).unwrap();

    // Plateau indices below are 0-based.
    let checks = [
        grid.len() == 101,
        a.plateau == (0, 40) && a.sigma == sigma(21) && a.stage == SelectionStage::Extremum,
        b.plateau == (0, 20) && b.sigma == sigma(11) && b.stage == SelectionStage::SlidingWindow,
        c.plateau == (39, 79) && c.sigma == sigma(60) && c.stage == SelectionStage::Extremum,
    ];
    let pass = checks.iter().all(|&ok| ok);
    report(
        6,
        pass,
        &format!(
            "constant {:?} σ={}, linear {:?} σ={}, valley {:?} σ={}",
            a.plateau, a.sigma, b.plateau, b.sigma, c.plateau, c.sigma
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_worked_example_selection() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        n: 200,
        censoring: CensoringSpec::Rate(0.12),
        ..ScenarioSpec::scenario1(200, 0.0)
    };
    let grid = SigmaGrid::default_grid();
    let resamples = 100_000;
    let mut in_range = 0;
    let mut beats_median = 0;
    let mut sigmas = Vec::new();
    for r in 0..50 {
        let sample = generate_sample(&spec, 0.12, r).unwrap();
        let curve = km_fit(&sample).unwrap();
        let auto = auto_ls_density(&curve, 0.5, &grid, DEFAULT_H, resamples, mix_seed(2024, r)).unwrap();
        let sigma = auto.selection.sigma;
        sigmas.push(sigma);
        if (1.5..=4.5).contains(&sigma) {
            in_range += 1;
        }
        let mut errors: Vec<f64> = auto
            .trace
            .estimates()
            .iter()
            .map(|e| (e - 0.75).abs())
            .collect();
        errors.sort_by(f64::total_cmp);
        let median = (errors[errors.len() / 2 - 1] + errors[errors.len() / 2]) / 2.0;
        if (auto.estimate.value - 0.75).abs() < median {
            beats_median += 1;
        }
    }
    let pass = in_range >= 40 && beats_median >= 45;
    sigmas.sort_by(f64::total_cmp);
    report(
        7,
        pass,
        &format!(
            "σ in [1.5, 4.5] {in_range}/50 (need 40), below median trace error {beats_median}/50 (need 45), median σ {:.2} (B=1e5, {:.2?})",
            sigmas[25],
            start.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_kde_consistency() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_rel: f64 = 0.0;
    let mut argmin_ok = true;
    let mut worst_mass: f64 = 0.0;
    for k in 0..100 {
        let n = rng.random_range(10..40);
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.75)).collect();
        let sample = match SurvivalSample::from_slices(&times, &events) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let cens = km_fit_censoring(&sample).unwrap();
        let h = rng.random_range(0.1..1.0);
        let closed = match integrated_square(&sample, &cens, h) {
            Ok(v) => v,
            // Largest time censored with nobody left at risk.
            Err(Error::DegenerateWeight { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        let quad = simpson(
            |t| kde_density(&sample, &cens, t, h).unwrap().powi(2),
            -10.0 * h,
            4.0 + 10.0 * h,
            4000,
        );
        worst_rel = worst_rel.max((closed - quad).abs() / quad);

        let config = KdeConfig::default_for(&sample).unwrap();
        let chosen = cv_bandwidth(&sample, &cens, &config).unwrap();
        let mut best = (f64::NAN, f64::INFINITY);
        for &b in config.bandwidth_grid() {
            let s = cv_score(&sample, &cens, b).unwrap();
            if s < best.1 {
                best = (b, s);
            }
        }
        argmin_ok &= chosen == best.0;

        if k % 10 == 0 {
            let unc = SurvivalSample::uncensored(&times).unwrap();
            let unc_cens = km_fit_censoring(&unc).unwrap();
            let mass = simpson(
                |t| kde_density(&unc, &unc_cens, t, h).unwrap(),
                -10.0 * h,
                4.0 + 10.0 * h,
                4000,
            );
            worst_mass = worst_mass.max((mass - 1.0).abs());
        }
    }
    let pass = worst_rel <= 1e-6 && argmin_ok && worst_mass <= 1e-6;
    report(
        8,
        pass,
        &format!(
            "∫f² rel err {worst_rel:.1e}, cv argmin exact {argmin_ok}, mass err {worst_mass:.1e} ({:.2?})",
            start.elapsed()
        ),
    );
    assert!(pass);
}

fn simulate(dir: &Path, threads: usize) {
    let status = Command::new(env!("CARGO_BIN_EXE_qdensity"))
        .args(["--threads", &threads.to_string(), "simulate"])
        .args(["--n", "40,80", "--censoring", "0.3", "--reps", "30", "--B", "300"])
        .args(["--seed", "11", "--out-dir"])
        .arg(dir)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

#[test]
fn criterion_9_simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), 1);
    simulate(b.path(), 4);
    let mut same = true;
    for file in ["results.csv", "metadata.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        same &= !x.is_empty() && x == y;
    }
    report(9, same, "results.csv and metadata.json identical at 1 and 4 threads");
    assert!(same);
}
