use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, TruthMode};
use crate::bounds::{beta_from_workspace, bounds_with_floor, BoundResult};
use crate::channel::{synthesize_rx, Cfo, CfoPrior, ChannelStats, CorrelationModel};
use crate::estimator::{estimate_cfo_universal, estimate_channel_mmse, EstimatorWorkspace};
use crate::pilots::{PilotMatrix, PilotStructure};
use crate::rng::trial_stream;
use crate::{wrap_frequency, Error, Result};

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_var: String,
    pub value: f64,
    /// Empirical MSE; `None` for bound-only sweeps or when every trial failed.
    pub mse: Option<f64>,
    pub crlb: f64,
    pub bcrlb: f64,
    pub trials: u32,
    pub failures: u32,
    pub mean_iters: Option<f64>,
}

/// One curve: a label and a row per grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub label: String,
    pub rows: Vec<SweepRow>,
}

fn structure_label(s: PilotStructure) -> &'static str {
    match s {
        PilotStructure::Periodic => "periodic",
        PilotStructure::TimeDivision => "td",
        PilotStructure::Custom => "custom",
    }
}

fn pilot_at(cfg: &ExperimentConfig, structure: PilotStructure, snr_db: f64) -> Result<PilotMatrix> {
    let mut spec = cfg.pilot.clone();
    spec.structure = structure;
    spec.rho = cfg.pilot_power(snr_db)?;
    spec.build()
}

fn point_bounds(
    pilot: &PilotMatrix,
    l_r: usize,
    stats: &ChannelStats,
    prior: CfoPrior,
) -> Result<(EstimatorWorkspace, BoundResult)> {
    let ws = EstimatorWorkspace::build(pilot, l_r, stats, prior)?;
    let beta = beta_from_workspace(&ws, stats);
    let bounds = bounds_with_floor(beta, pilot, &prior);
    Ok((ws, bounds))
}

fn bound_row(sweep_var: String, value: f64, b: BoundResult) -> SweepRow {
    SweepRow {
        sweep_var,
        value,
        mse: None,
        crlb: b.crlb,
        bcrlb: b.bcrlb,
        trials: 0,
        failures: 0,
        mean_iters: None,
    }
}

/// CRLB/BCRLB over the `rho_h` grid at the first SNR of the grid, once per
/// pilot structure in `sweep.pilots` (a custom pilot is swept on its own).
pub fn run_bounds_vs_rho(cfg: &ExperimentConfig) -> Result<Vec<SweepResult>> {
    cfg.validate()?;
    let snr = cfg.sweep.snr_db[0];
    let prior = cfg.cfo_prior()?;
    let structures = if cfg.pilot.structure == PilotStructure::Custom {
        vec![PilotStructure::Custom]
    } else {
        cfg.sweep.pilots.clone()
    };
    let mut out = Vec::with_capacity(structures.len());
    for s in structures {
        let label = structure_label(s);
        let pilot = pilot_at(cfg, s, snr)?;
        let rows = cfg
            .sweep
            .rho_h
            .par_iter()
            .map(|&rho_h| {
                let stats = cfg.channel_model(rho_h)?.build_stats(pilot.n())?;
                let (_, b) = point_bounds(&pilot, cfg.l_r, &stats, prior)?;
                Ok(bound_row(format!("rho_h:{label}"), rho_h, b))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(SweepResult {
            label: label.to_string(),
            rows,
        });
    }
    Ok(out)
}

/// CRLB/BCRLB over the SNR grid, one curve per `rho_h`.
pub fn run_bounds_vs_snr(cfg: &ExperimentConfig) -> Result<Vec<SweepResult>> {
    cfg.validate()?;
    let prior = cfg.cfo_prior()?;
    let mut out = Vec::with_capacity(cfg.sweep.rho_h.len());
    for &rho_h in &cfg.sweep.rho_h {
        let label = format!("rho_h={rho_h}");
        let stats = cfg.channel_model(rho_h)?.build_stats(cfg.pilot_matrix()?.n())?;
        let rows = cfg
            .sweep
            .snr_db
            .par_iter()
            .map(|&snr| {
                let pilot = pilot_at(cfg, cfg.pilot.structure, snr)?;
                let (_, b) = point_bounds(&pilot, cfg.l_r, &stats, prior)?;
                Ok(bound_row(format!("snr_db:{label}"), snr, b))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(SweepResult { label, rows });
    }
    Ok(out)
}

struct TrialInput<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a CorrelationModel,
    ws: &'a EstimatorWorkspace,
}

struct Trial {
    f_true: f64,
    h: nalgebra::DVector<crate::C64>,
    y: nalgebra::DVector<crate::C64>,
}

impl TrialInput<'_> {
    fn draw<R: Rng>(&self, f_override: Option<f64>, rng: &mut R) -> Result<Trial> {
        let prior = self.ws.prior();
        let f_true = match (f_override, self.cfg.truth) {
            (Some(f), _) => f,
            (None, TruthMode::Prior) if !prior.is_ml() => {
                let z: f64 = rng.sample(StandardNormal);
                wrap_frequency(prior.mean + prior.variance().sqrt() * z)
            }
            _ => prior.mean,
        };
        let pilot = self.ws.pilot();
        let h = self.model.sample_trajectory(pilot.n(), rng);
        let noise = if self.cfg.noiseless { None } else { Some(rng) };
        let y = synthesize_rx(pilot, self.cfg.l_r, &Cfo::Common(f_true), &h, noise)?;
        Ok(Trial { f_true, h, y })
    }
}

/// Empirical MSE of the universal estimator over the SNR grid, one curve
/// per `rho_h`, with the matching closed-form bounds.
///
/// Sweep point `(i, j)` (rho index, SNR index) uses stream point
/// `i * snr_count + j`; trial `t` uses stream `t` within it.
pub fn run_mse_vs_snr(cfg: &ExperimentConfig) -> Result<Vec<SweepResult>> {
    cfg.validate()?;
    let prior = cfg.cfo_prior()?;
    let snr_count = cfg.sweep.snr_db.len();
    let mut out = Vec::with_capacity(cfg.sweep.rho_h.len());
    for (i, &rho_h) in cfg.sweep.rho_h.iter().enumerate() {
        let label = format!("rho_h={rho_h}");
        let model = cfg.channel_model(rho_h)?;
        let stats = model.build_stats(cfg.pilot_matrix()?.n())?;
        let mut rows = Vec::with_capacity(snr_count);
        for (j, &snr) in cfg.sweep.snr_db.iter().enumerate() {
            let pilot = pilot_at(cfg, cfg.pilot.structure, snr)?;
            let (ws, b) = point_bounds(&pilot, cfg.l_r, &stats, prior)?;
            let input = TrialInput {
                cfg,
                model: &model,
                ws: &ws,
            };
            let point = (i * snr_count + j) as u32;
            let outcomes: Vec<Option<(f64, usize)>> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_stream(cfg.seed, point, t);
                    let trial = input.draw(None, &mut rng).ok()?;
                    let est = estimate_cfo_universal(&trial.y, &ws, &cfg.estimator).ok()?;
                    let err = wrap_frequency(est.f_hat - trial.f_true);
                    err.is_finite().then_some((err * err, est.iterations))
                })
                .collect();
            // Reduced in trial order so the sum is independent of scheduling.
            let (mut sq, mut iters, mut ok) = (0.0, 0usize, 0u32);
            for (e, it) in outcomes.iter().flatten() {
                sq += e;
                iters += it;
                ok += 1;
            }
            rows.push(SweepRow {
                sweep_var: format!("snr_db:{label}"),
                value: snr,
                mse: (ok > 0).then(|| sq / ok as f64),
                crlb: b.crlb,
                bcrlb: b.bcrlb,
                trials: cfg.trials,
                failures: cfg.trials - ok,
                mean_iters: (ok > 0).then(|| iters as f64 / ok as f64),
            });
        }
        out.push(SweepResult { label, rows });
    }
    Ok(out)
}

/// Overrides for [`run_single`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SingleOptions {
    pub f_true: Option<f64>,
    /// Defaults to the first SNR of the grid.
    pub snr_db: Option<f64>,
    /// Defaults to the first `rho_h` of the grid.
    pub rho_h: Option<f64>,
    /// Replace the received vector by zeros.
    pub zero_rx: bool,
}

/// Everything computed in one synthesize/estimate cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub snr_db: f64,
    pub rho_h: f64,
    pub f_true: f64,
    pub f_hat: Option<f64>,
    pub squared_error: Option<f64>,
    /// `g(y, f_hat)`.
    pub metric: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Mean squared error of the MMSE channel estimate at `f_hat`.
    pub channel_mse: Option<f64>,
    /// Lag statistics `z_1 .. z_{n-1}` as `[re, im]`.
    pub z: Vec<[f64; 2]>,
    /// `[f, g(y, f)]` over the search grid.
    pub grid: Vec<[f64; 2]>,
    /// Set when the metric is flat over the grid, the search failed or did
    /// not converge.
    pub low_confidence: bool,
    pub failure: Option<String>,
    pub crlb: f64,
    pub bcrlb: f64,
}

/// One trial with all intermediates, drawn from stream `(seed, 0, 0)`.
pub fn run_single(cfg: &ExperimentConfig, opts: &SingleOptions) -> Result<TrialRecord> {
    cfg.validate()?;
    let snr = opts.snr_db.unwrap_or(cfg.sweep.snr_db[0]);
    let rho_h = opts.rho_h.unwrap_or(cfg.sweep.rho_h[0]);
    if let Some(f) = opts.f_true {
        if !f.is_finite() {
            return Err(Error::Config("f_true must be finite".into()));
        }
    }
    let prior = cfg.cfo_prior()?;
    let model = cfg.channel_model(rho_h)?;
    let pilot = pilot_at(cfg, cfg.pilot.structure, snr)?;
    let stats = model.build_stats(pilot.n())?;
    let (ws, bounds) = point_bounds(&pilot, cfg.l_r, &stats, prior)?;
    let input = TrialInput {
        cfg,
        model: &model,
        ws: &ws,
    };
    let mut rng = trial_stream(cfg.seed, 0, 0);
    let mut trial = input.draw(opts.f_true, &mut rng)?;
    if opts.zero_rx {
        trial.y.fill(crate::C64::new(0.0, 0.0));
    }

    let lags = ws.lag_statistics(&trial.y)?;
    let n = pilot.n();
    let grid_size = cfg.estimator.grid_size.unwrap_or(4 * n).max(1);
    let grid: Vec<[f64; 2]> = (0..grid_size)
        .map(|i| {
            let f = -0.5 + i as f64 / grid_size as f64;
            [f, lags.metric(f, &prior)]
        })
        .collect();
    let (lo, hi) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g[1]), hi.max(g[1])));
    let flat = hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0);

    let mut record = TrialRecord {
        seed: cfg.seed,
        snr_db: snr,
        rho_h,
        f_true: trial.f_true,
        f_hat: None,
        squared_error: None,
        metric: None,
        iterations: 0,
        converged: false,
        channel_mse: None,
        z: lags.z.iter().map(|c| [c.re, c.im]).collect(),
        grid,
        low_confidence: true,
        failure: None,
        crlb: bounds.crlb,
        bcrlb: bounds.bcrlb,
    };
    match estimate_cfo_universal(&trial.y, &ws, &cfg.estimator) {
        Ok(est) => {
            let err = wrap_frequency(est.f_hat - trial.f_true);
            let h_hat = estimate_channel_mmse(&trial.y, &Cfo::Common(est.f_hat), &ws)?;
            record.channel_mse = Some((h_hat - &trial.h).norm_squared() / trial.h.len() as f64);
            record.f_hat = Some(est.f_hat);
            record.squared_error = Some(err * err);
            record.metric = Some(est.metric);
            record.iterations = est.iterations;
            record.converged = est.converged;
            record.low_confidence = flat || !est.converged;
        }
        Err(e) => record.failure = Some(e.to_string()),
    }
    Ok(record)
}
