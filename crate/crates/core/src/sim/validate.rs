//! Quick oracle and invariant suite behind `mimo-cfo validate`.
//!
//! Each check is a reduced version of a property exercised in full by the
//! test suite, sized to finish in a few seconds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{compute_bounds, compute_beta, fisher_oracle};
use crate::channel::{synthesize_rx, Cfo, CfoPrior, CorrelationModel};
use crate::estimator::{
    estimate_cfo_universal, map_metric, metric_gradient, rotated_block, EstimatorWorkspace,
    UniversalOptions,
};
use crate::linalg::{hermitize, HermitianFactor};
use crate::pilots::PilotMatrix;
use crate::rng::trial_stream;
use crate::{Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_phase_code<R: Rng>(n: usize, rng: &mut R) -> Vec<C64> {
    (0..n)
        .map(|_| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
        .collect()
}

/// A small random pilot and channel model with a nonzero mean.
fn random_setup<R: Rng>(rng: &mut R) -> Result<(PilotMatrix, usize, CorrelationModel)> {
    let l_t = rng.random_range(1..=2);
    let l_r = rng.random_range(1..=2);
    let m = rng.random_range(2..=12 / l_t);
    let rho = rng.random_range(0.5..10.0);
    let code = random_phase_code(m * l_t, rng);
    let pilot = if rng.random_bool(0.5) {
        PilotMatrix::periodic(l_t, m, rho, Some(&code), None)?
    } else {
        PilotMatrix::time_division(l_t, m, rho, Some(&code))?
    };
    let rho_h = [0.0, 0.5, 0.9, 0.99, 1.0][rng.random_range(0..5)];
    let model = CorrelationModel::exponential(
        l_t,
        l_r,
        rho_h,
        rng.random_range(0.0..0.9),
        rng.random_range(0.0..0.9),
        1.0,
    )?
    .with_rician_mean(rng.random_range(0.0..2.0))?;
    Ok((pilot, l_r, model))
}

fn pilot_orthogonality(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for l_t in 1..=4 {
        for m in 1..=8 {
            let code = random_phase_code(m * l_t, rng);
            for p in [
                PilotMatrix::periodic(l_t, m, 2.0, Some(&code), None)?,
                PilotMatrix::time_division(l_t, m, 2.0, Some(&code))?,
            ] {
                worst = worst.max(p.orthogonality_defect());
            }
        }
    }
    Ok(Check {
        name: "pilot orthogonality",
        passed: worst < 1e-12,
        detail: format!("max defect {worst:.2e}"),
    })
}

fn gradient_oracle(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (pilot, l_r, model) = random_setup(rng)?;
        let stats = model.build_stats(pilot.n())?;
        let prior = CfoPrior::gaussian(rng.random_range(-0.2..0.2), rng.random_range(1e-4..1e-1))?;
        let ws = EstimatorWorkspace::build(&pilot, l_r, &stats, prior)?;
        let h = model.sample_trajectory(pilot.n(), rng);
        let y = synthesize_rx(&pilot, l_r, &Cfo::Common(rng.random_range(-0.4..0.4)), &h, Some(&mut *rng))?;
        let f = rng.random_range(-0.45..0.45);
        let g = |x: f64| map_metric(&y, x, &ws);
        let step = 1e-4;
        let d1 = (g(f + step)? - g(f - step)?) / (2.0 * step);
        let d2 = (g(f + step / 2.0)? - g(f - step / 2.0)?) / step;
        let fd = (4.0 * d2 - d1) / 3.0;
        let exact = metric_gradient(&y, f, &ws)?;
        worst = worst.max((exact - fd).abs() / exact.abs().max(1e-12));
    }
    Ok(Check {
        name: "gradient vs finite differences",
        passed: worst < 1e-6,
        detail: format!("max relative error {worst:.2e}"),
    })
}

fn woodbury(rng: &mut ChaCha8Rng) -> Result<Check> {
    let pilot = PilotMatrix::periodic(2, 3, 3.0, Some(&random_phase_code(6, rng)), None)?;
    let model = CorrelationModel::exponential(2, 2, 0.6, 0.4, 0.3, 1.0)?;
    let stats = model.build_stats(pilot.n())?;
    let ws = EstimatorWorkspace::build(&pilot, 2, &stats, CfoPrior::ml(0.0))?;
    let s = ws.s_block();
    let direct = HermitianFactor::new(&hermitize(
        &(s.adjoint() * s + HermitianFactor::new(&stats.sigma_h)?.inverse()),
    ))?
    .inverse();
    let err = (ws.a() - &direct).camax() / direct.camax();
    Ok(Check {
        name: "Woodbury vs direct inverse",
        passed: err < 1e-10,
        detail: format!("relative error {err:.2e}"),
    })
}

fn log_det_invariance(rng: &mut ChaCha8Rng) -> Result<Check> {
    let (pilot, l_r, model) = random_setup(rng)?;
    let stats = model.build_stats(pilot.n())?;
    let dim = stats.sigma_h.nrows();
    let mut values = Vec::new();
    for i in 0..20 {
        let f = -0.5 + i as f64 / 20.0;
        let x = rotated_block(&pilot, l_r, &Cfo::Common(f))?;
        let m = DMatrix::<C64>::identity(dim, dim) + &stats.sigma_h * x.adjoint() * x;
        values.push(m.determinant().ln().re);
    }
    let spread = values.iter().fold(0.0f64, |a, v| a.max((v - values[0]).abs()));
    Ok(Check {
        name: "log det invariance in f",
        passed: spread < 1e-8,
        detail: format!("spread {spread:.2e}"),
    })
}

fn fisher(rng: &mut ChaCha8Rng) -> Result<Check> {
    let pilot = PilotMatrix::periodic(2, 3, 2.0, Some(&random_phase_code(6, rng)), None)?;
    let model = CorrelationModel::exponential(2, 2, 0.5, 0.5, 0.5, 1.0)?.with_rician_mean(1.0)?;
    let stats = model.build_stats(pilot.n())?;
    let beta = compute_beta(&pilot, 2, &stats)?;
    let oracle = fisher_oracle(&pilot, 2, &stats, 0.1, 20_000, rng)?;
    let diff = (oracle.beta - beta).abs();
    Ok(Check {
        name: "Fisher information vs likelihood oracle",
        passed: diff <= 4.0 * oracle.std_error + 0.01 * beta,
        detail: format!(
            "closed form {beta:.4e}, oracle {:.4e} +- {:.1e}",
            oracle.beta, oracle.std_error
        ),
    })
}

fn bound_ordering(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut violations = 0;
    for _ in 0..50 {
        let (pilot, l_r, model) = random_setup(rng)?;
        let stats = model.build_stats(pilot.n())?;
        let prior = CfoPrior::gaussian(0.0, rng.random_range(1e-6..1.0))?;
        let b = compute_bounds(compute_beta(&pilot, l_r, &stats)?, &prior);
        if b.bcrlb > b.crlb.min(prior.variance()) + 1e-15 {
            violations += 1;
        }
    }
    Ok(Check {
        name: "BCRLB <= min(CRLB, prior variance)",
        passed: violations == 0,
        detail: format!("{violations} violations in 50 configs"),
    })
}

fn noiseless(rng: &mut ChaCha8Rng) -> Result<Check> {
    let pilot = PilotMatrix::time_division(4, 5, 10.0, None)?;
    let model = CorrelationModel::uncorrelated(4, 4, 1.0, 1.0)?;
    let stats = model.build_stats(pilot.n())?;
    let ws = EstimatorWorkspace::build(&pilot, 4, &stats, CfoPrior::ml(0.0))?;
    let mut worst: f64 = 0.0;
    for f in [-0.3, 0.0, 0.1, 0.45] {
        let h = model.sample_trajectory(pilot.n(), rng);
        let y = synthesize_rx::<ChaCha8Rng>(&pilot, 4, &Cfo::Common(f), &h, None)?;
        let est = estimate_cfo_universal(&y, &ws, &UniversalOptions::default())?;
        worst = worst.max((est.f_hat - f).abs());
    }
    Ok(Check {
        name: "noiseless consistency",
        passed: worst < 1e-8,
        detail: format!("max |f_hat - f| {worst:.2e}"),
    })
}

fn ml_limit(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (pilot, l_r, model) = random_setup(rng)?;
        let stats = model.build_stats(pilot.n())?;
        let ws = EstimatorWorkspace::build(&pilot, l_r, &stats, CfoPrior::ml(0.05))?;
        let wide = ws.with_prior(CfoPrior::gaussian(0.05, 1e12)?);
        let h = model.sample_trajectory(pilot.n(), rng);
        let y: DVector<C64> =
            synthesize_rx(&pilot, l_r, &Cfo::Common(0.05), &h, Some(&mut *rng))?;
        let opts = UniversalOptions::default();
        let a = estimate_cfo_universal(&y, &ws, &opts)?.f_hat;
        let b = estimate_cfo_universal(&y, &wide, &opts)?.f_hat;
        worst = worst.max(crate::wrap_frequency(a - b).abs());
    }
    Ok(Check {
        name: "MAP estimate tends to ML as the prior widens",
        passed: worst < 1e-9,
        detail: format!("max difference {worst:.2e}"),
    })
}

/// Runs every check; a check that errors is reported as failed.
pub fn run_checks(seed: u64) -> Vec<Check> {
    type CheckFn = fn(&mut ChaCha8Rng) -> Result<Check>;
    let checks: [(&'static str, CheckFn); 8] = [
        ("pilot orthogonality", pilot_orthogonality),
        ("gradient vs finite differences", gradient_oracle),
        ("Woodbury vs direct inverse", woodbury),
        ("log det invariance in f", log_det_invariance),
        ("Fisher information vs likelihood oracle", fisher),
        ("BCRLB <= min(CRLB, prior variance)", bound_ordering),
        ("noiseless consistency", noiseless),
        ("MAP estimate tends to ML as the prior widens", ml_limit),
    ];
    checks
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = trial_stream(seed, u32::MAX, i as u32);
            check(&mut rng).unwrap_or_else(|e| Check {
                name,
                passed: false,
                detail: format!("error: {e}"),
            })
        })
        .collect()
}
