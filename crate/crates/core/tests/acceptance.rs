//! Acceptance checks, one line per criterion. Exits nonzero if any fails.
//!
//! Run with `cargo test --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use common::*;
use mimo_cfo::bounds::{beta_floor, compute_beta, evaluate_bounds, fisher_oracle};
use mimo_cfo::channel::{synthesize_rx, Cfo, CfoPrior, CorrelationModel, MeanSpec, SpatialSpec};
use mimo_cfo::estimator::*;
use mimo_cfo::linalg::{hermitize, HermitianFactor};
use mimo_cfo::pilots::{PilotMatrix, PilotStructure};
use mimo_cfo::rng::trial_stream;
use mimo_cfo::sim::{self, ExperimentConfig};
use mimo_cfo::{wrap_frequency, C64};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn pilot_orthogonality() -> Outcome {
    let mut rng = trial_stream(1, 0, 0);
    let mut worst: f64 = 0.0;
    for l_t in 1..=4 {
        for m in 1..=8 {
            for _ in 0..10 {
                let code = random_code(l_t * m, &mut rng);
                for p in [
                    PilotMatrix::periodic(l_t, m, 1.0, Some(&code), None).unwrap(),
                    PilotMatrix::time_division(l_t, m, 1.0, Some(&code)).unwrap(),
                ] {
                    worst = worst.max(p.orthogonality_defect());
                }
            }
        }
    }
    outcome(worst < 1e-12, format!("max |S^H S - (n rho / l_t) I| = {worst:.2e}"))
}

fn gradient_oracle() -> Outcome {
    let mut rng = trial_stream(2, 0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = random_setup(&mut rng, 12);
        let prior = CfoPrior::gaussian(rng.random_range(-0.3..0.3), rng.random_range(1e-4..1.0)).unwrap();
        let ws = EstimatorWorkspace::build(&s.pilot, s.l_r, &s.stats, prior).unwrap();
        let h = s.model.sample_trajectory(s.pilot.n(), &mut rng);
        let f_true = rng.random_range(-0.5..0.5);
        let y = synthesize_rx(&s.pilot, s.l_r, &Cfo::Common(f_true), &h, Some(&mut rng)).unwrap();
        let f = rng.random_range(-0.5..0.5);
        // g from its matrix definition, differentiated numerically.
        let g = |x: f64| map_metric(&y, x, &ws).unwrap();
        let central = |h: f64| (g(f + h) - g(f - h)) / (2.0 * h);
        let fd = (4.0 * central(5e-5) - central(1e-4)) / 3.0;
        let exact = metric_gradient(&y, f, &ws).unwrap();
        worst = worst.max((exact - fd).abs() / exact.abs());
    }
    outcome(worst < 1e-6, format!("max relative error {worst:.2e} over 100 configs"))
}

fn fisher_equivalence() -> Outcome {
    let mut rng = trial_stream(3, 0, 0);
    let cases: [(f64, f64); 5] = [(0.0, 1.0), (0.5, 0.0), (0.5, 2.0), (0.99, 0.5), (1.0, 1.0)];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (rho_h, k) in cases {
        let code = random_code(6, &mut rng);
        let pilot = if rng.random_bool(0.5) {
            PilotMatrix::periodic(2, 3, 2.0, Some(&code), None).unwrap()
        } else {
            PilotMatrix::time_division(2, 3, 2.0, Some(&code)).unwrap()
        };
        let stats = CorrelationModel::exponential(2, 2, rho_h, 0.5, 0.5, 1.0)
            .unwrap()
            .with_rician_mean(k)
            .unwrap()
            .build_stats(6)
            .unwrap();
        let beta = compute_beta(&pilot, 2, &stats).unwrap();
        let f = rng.random_range(-0.4..0.4);
        let oracle = fisher_oracle(&pilot, 2, &stats, f, 100_000, &mut rng).unwrap();
        let rel = (oracle.beta - beta).abs() / beta;
        worst = worst.max(rel);
        parts.push(format!("rho_h={rho_h},K={k}: {:.2}%", 100.0 * rel));
    }
    outcome(worst < 0.03, parts.join("; "))
}

fn log_det_invariance() -> Outcome {
    let mut rng = trial_stream(4, 0, 0);
    let mut worst_c: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    for rho_h in [1.0, 0.9, 0.3] {
        let code = random_code(6, &mut rng);
        let pilot = PilotMatrix::periodic(2, 3, 3.0, Some(&code), None).unwrap();
        let stats = CorrelationModel::exponential(2, 2, rho_h, 0.4, 0.6, 1.0)
            .unwrap()
            .with_rician_mean(1.0)
            .unwrap()
            .build_stats(6)
            .unwrap();
        let dim = stats.sigma_h.nrows();
        let sigma_inv = (rho_h < 1.0).then(|| HermitianFactor::new(&stats.sigma_h).unwrap().inverse());
        let (mut c_vals, mut a_vals) = (Vec::new(), Vec::new());
        for i in 0..20 {
            let f = -0.5 + i as f64 / 20.0 + 0.013;
            let x = x_matrix(&pilot, 2, &[f, f]);
            let m = DMatrix::<C64>::identity(dim, dim) + &stats.sigma_h * x.adjoint() * &x;
            c_vals.push(m.determinant().ln().re);
            if let Some(si) = &sigma_inv {
                let a_inv = hermitize(&(x.adjoint() * &x + si));
                a_vals.push(-HermitianFactor::new(&a_inv).unwrap().log_det());
            }
        }
        let spread = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max((x - v[0]).abs()));
        worst_c = worst_c.max(spread(&c_vals));
        if !a_vals.is_empty() {
            worst_a = worst_a.max(spread(&a_vals));
        }
    }
    outcome(
        worst_c < 1e-8 && worst_a < 1e-8,
        format!("log det(I + Sigma X^H X) spread {worst_c:.2e}, log det A spread {worst_a:.2e}"),
    )
}

fn bound_ordering() -> Outcome {
    let mut rng = trial_stream(5, 0, 0);
    let mut violations = 0;
    for _ in 0..200 {
        let s = random_setup(&mut rng, 12);
        let var = 10f64.powf(rng.random_range(-8.0..1.0));
        let prior = CfoPrior::gaussian(rng.random_range(-0.3..0.3), var).unwrap();
        let b = evaluate_bounds(&s.pilot, s.l_r, &s.stats, &prior).unwrap();
        if b.bcrlb > b.crlb.min(var) + 1e-15 {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations in 200 configs"))
}

fn noiseless_consistency() -> Outcome {
    let pilot = PilotMatrix::time_division(4, 5, 100.0, None).unwrap();
    let model = CorrelationModel::uncorrelated(4, 4, 1.0, 1.0).unwrap();
    let stats = model.build_stats(20).unwrap();
    let ws = EstimatorWorkspace::build(&pilot, 4, &stats, CfoPrior::ml(0.0)).unwrap();
    let mut worst: f64 = 0.0;
    for (i, f) in [-0.3, 0.0, 0.1, 0.45].into_iter().enumerate() {
        let mut rng = trial_stream(6, 0, i as u32);
        let h = model.sample_trajectory(20, &mut rng);
        let y = synthesize_rx::<ChaCha8Rng>(&pilot, 4, &Cfo::Common(f), &h, None).unwrap();
        let est = estimate_cfo_universal(&y, &ws, &UniversalOptions::default()).unwrap();
        worst = worst.max((est.f_hat - f).abs());
    }
    outcome(worst < 1e-8, format!("TD pilot, ML: max |f_hat - f| = {worst:.2e}"))
}

fn reference_setup() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn bound_achievement() -> Outcome {
    let mut cfg = reference_setup();
    cfg.trials = 2000;
    cfg.sweep.rho_h = vec![1.0, 0.99];
    cfg.sweep.snr_db = vec![10.0, 20.0, 30.0];
    let res = sim::run_mse_vs_snr(&cfg).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for curve in &res {
        for row in &curve.rows {
            let ratio = row.mse.unwrap_or(f64::NAN) / row.bcrlb;
            ok &= (0.5..=2.0).contains(&ratio) && row.failures == 0;
            parts.push(format!("{} {}dB: {ratio:.3}", curve.label, row.value));
        }
    }
    outcome(ok, format!("MSE/BCRLB {}", parts.join(", ")))
}

fn error_floor() -> Outcome {
    let mut cfg = reference_setup();
    cfg.sweep.rho_h = vec![0.99, 1.0];
    cfg.sweep.snr_db = vec![20.0, 40.0];
    let res = sim::run_bounds_vs_snr(&cfg).unwrap();
    let ratio = |i: usize| res[i].rows[1].crlb / res[i].rows[0].crlb;
    let (floor, clean) = (ratio(0), ratio(1));
    outcome(
        floor > 0.1 && clean < 0.02,
        format!("CRLB(40dB)/CRLB(20dB): rho_h=0.99 {floor:.3}, rho_h=1 {clean:.4}"),
    )
}

fn non_monotonicity() -> Outcome {
    let mut cfg = reference_setup();
    cfg.pilot.structure = PilotStructure::TimeDivision;
    cfg.channel.spatial = SpatialSpec::Exponential {
        a: 0.5,
        b: 0.5,
        variance: 1.0,
    };
    cfg.channel.mean = MeanSpec::Rician { k_factor: 1.0 };
    cfg.sweep.snr_db = vec![20.0];
    cfg.sweep.pilots = vec![PilotStructure::TimeDivision];
    cfg.sweep.rho_h = (0..50).map(|i| i as f64 / 49.0).collect();
    let res = sim::run_bounds_vs_rho(&cfg).unwrap();
    let crlb: Vec<f64> = res[0].rows.iter().map(|r| r.crlb).collect();
    // b is a witness if it sits strictly above (or below) some point on
    // each side of it.
    let witness = (1..crlb.len() - 1).find(|&b| {
        let (before, after) = (&crlb[..b], &crlb[b + 1..]);
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (crlb[b] > min(before) && crlb[b] > min(after)) || (crlb[b] < max(before) && crlb[b] < max(after))
    });
    let peak = (0..crlb.len()).max_by(|&i, &j| crlb[i].total_cmp(&crlb[j])).unwrap();
    match witness {
        Some(b) => outcome(
            true,
            format!(
                "first witness at rho_h={:.3}; curve peaks at rho_h={:.3} (CRLB {:.3e}) and ends at {:.3e}",
                res[0].rows[b].value,
                res[0].rows[peak].value,
                crlb[peak],
                crlb[crlb.len() - 1]
            ),
        ),
        None => outcome(false, "CRLB is monotone over the grid"),
    }
}

fn degenerate_identifiability() -> Outcome {
    let pilot = PilotMatrix::periodic(4, 5, 100.0, None, None).unwrap();
    let stats = CorrelationModel::uncorrelated(4, 4, 0.0, 1.0)
        .unwrap()
        .build_stats(20)
        .unwrap();
    let beta = compute_beta(&pilot, 4, &stats).unwrap();
    let b = evaluate_bounds(&pilot, 4, &stats, &CfoPrior::gaussian(0.1, 1e-5).unwrap()).unwrap();
    outcome(
        beta < beta_floor(20, 100.0) && b.crlb == f64::INFINITY,
        format!("beta = {beta:.2e}, floor {:.2e}, CRLB = {}", beta_floor(20, 100.0), b.crlb),
    )
}

fn ml_limit() -> Outcome {
    let pilot_opts = UniversalOptions::default();
    let mut worst: f64 = 0.0;
    for t in 0..50u32 {
        let mut rng = trial_stream(11, 0, t);
        let rho_h = [1.0, 0.99, 0.9][rng.random_range(0..3)];
        let snr = 10f64.powf(rng.random_range(0.0..3.0));
        let pilot = PilotMatrix::periodic(4, 5, snr, None, None).unwrap();
        let model = CorrelationModel::uncorrelated(4, 4, rho_h, 1.0).unwrap();
        let stats = model.build_stats(20).unwrap();
        let ml = EstimatorWorkspace::build(&pilot, 4, &stats, CfoPrior::ml(0.1)).unwrap();
        let wide = ml.with_prior(CfoPrior::gaussian(0.1, 1e12).unwrap());
        let f = rng.random_range(-0.5..0.5);
        let h = model.sample_trajectory(20, &mut rng);
        let y = synthesize_rx(&pilot, 4, &Cfo::Common(f), &h, Some(&mut rng)).unwrap();
        let a = estimate_cfo_universal(&y, &ml, &pilot_opts).unwrap().f_hat;
        let b = estimate_cfo_universal(&y, &wide, &pilot_opts).unwrap().f_hat;
        worst = worst.max(wrap_frequency(a - b).abs());
    }
    outcome(worst < 1e-9, format!("max |f_ML - f_MAP(1e12)| = {worst:.2e}"))
}

fn determinism() -> Outcome {
    let mut cfg = reference_setup();
    cfg.trials = 200;
    cfg.sweep.rho_h = vec![1.0, 0.99];
    cfg.sweep.snr_db = vec![0.0, 20.0];
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut buf = Vec::new();
            sim::write_csv(&sim::run_mse_vs_snr(&cfg).unwrap(), &mut buf).unwrap();
            sim::write_csv(&sim::run_bounds_vs_rho(&cfg).unwrap(), &mut buf).unwrap();
            sim::write_csv(&sim::run_bounds_vs_snr(&cfg).unwrap(), &mut buf).unwrap();
            buf
        })
    };
    let one = run(1);
    let many = run(4);
    let again = run(1);
    outcome(
        one == many && one == again,
        format!("{} CSV bytes, 1 vs 4 workers and rerun identical: {}", one.len(), one == many && one == again),
    )
}

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let secs = Duration::from_secs;
    let criteria: [Criterion; 12] = [
        ("pilot orthogonality", secs(1), pilot_orthogonality),
        ("gradient oracle", secs(30), gradient_oracle),
        ("Fisher oracle equivalence", secs(300), fisher_equivalence),
        ("separability / log det invariance", secs(10), log_det_invariance),
        ("bound ordering", secs(60), bound_ordering),
        ("noiseless consistency", secs(5), noiseless_consistency),
        ("bound-achieving estimator", secs(600), bound_achievement),
        ("error-floor phenomenology", secs(5), error_floor),
        ("non-monotonicity witness", secs(10), non_monotonicity),
        ("degenerate identifiability", secs(1), degenerate_identifiability),
        ("MAP to ML limit", secs(30), ml_limit),
        ("determinism", secs(600), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let passed = out.passed && in_time;
        if !passed {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.2}s{}]",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            elapsed.as_secs_f64(),
            if in_time { String::new() } else { format!(" > {}s budget", budget.as_secs()) },
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
