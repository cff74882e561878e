//! Fisher information and Cramér-Rao bounds for a common CFO.
//!
//! The Fisher information is
//! `beta = 8 pi^2 Re sum_k k^2 E[z_k]` with `y` drawn at the true offset and
//! de-rotated, which expands into second moments of the channel:
//! `E[u u^H] = G (Sigma_h + mu mu^H) G + G` with `u = S^H y` and
//! `G = S^H S`. It does not depend on the true offset.
//! `CRLB = 1 / beta` and `BCRLB = 1 / (beta + 1/sigma_f^2)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::channel::{CfoPrior, Cfo, ChannelStats};
use crate::estimator::{gram_mul, gram_mul_vec, rotated_block, EstimatorWorkspace};
use crate::linalg::{hermitize, HermitianFactor};
use crate::pilots::PilotMatrix;
use crate::rng::complex_normal;
use crate::{Result, C64};

/// Finite-difference step of the Fisher oracle.
pub const ORACLE_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundResult {
    pub beta: f64,
    /// `+inf` when `beta` is zero.
    pub crlb: f64,
    pub bcrlb: f64,
}

/// Closed-form Fisher information for the given pilot and channel statistics.
pub fn compute_beta(pilot: &PilotMatrix, l_r: usize, stats: &ChannelStats) -> Result<f64> {
    let ws = EstimatorWorkspace::build(pilot, l_r, stats, CfoPrior::ml(0.0))?;
    Ok(beta_from_workspace(&ws, stats))
}

/// Same as [`compute_beta`] but reuses an existing workspace.
pub fn beta_from_workspace(ws: &EstimatorWorkspace, stats: &ChannelStats) -> f64 {
    let d = ws.dims();
    let pilot = ws.pilot();
    let mu = &stats.mu_h;
    let second_moment = &stats.sigma_h + mu * mu.adjoint();
    // R = G M G + G with G = S^H S Hermitian, so M G = (G M)^H when M is.
    let gm = gram_mul(pilot, d, &second_moment);
    let mut r = gram_mul(pilot, d, &gm.adjoint()).adjoint();
    r += gram_mul(pilot, d, &DMatrix::identity(d.len(), d.len()));
    let eu = gram_mul_vec(pilot, d, mu);
    let a = ws.a();
    let b = ws.b();

    let time: Vec<usize> = (0..d.len()).map(|i| d.split(i).2).collect();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..d.len() {
        let kj = time[j];
        for i in 0..d.len() {
            let ki = time[i];
            if ki > kj {
                let lag = (ki - kj) as f64;
                acc += a[(i, j)] * r[(j, i)] * (lag * lag);
            }
        }
        let k = kj as f64;
        acc += b[j] * eu[j].conj() * (k * k);
    }
    8.0 * PI * PI * acc.re
}

/// Bounds from a Fisher information value.
pub fn compute_bounds(beta: f64, prior: &CfoPrior) -> BoundResult {
    let beta = beta.max(0.0);
    let crlb = if beta > 0.0 { 1.0 / beta } else { f64::INFINITY };
    let total = beta + prior.precision;
    let bcrlb = if total > 0.0 { 1.0 / total } else { f64::INFINITY };
    BoundResult { beta, crlb, bcrlb }
}

/// Fisher information below which the offset is treated as unidentifiable:
/// `1e-14 n^2 rho^2`.
pub fn beta_floor(n: usize, rho: f64) -> f64 {
    1e-14 * (n * n) as f64 * rho * rho
}

/// Closed-form bounds with `beta` clamped to zero below [`beta_floor`].
pub fn evaluate_bounds(
    pilot: &PilotMatrix,
    l_r: usize,
    stats: &ChannelStats,
    prior: &CfoPrior,
) -> Result<BoundResult> {
    let beta = compute_beta(pilot, l_r, stats)?;
    Ok(bounds_with_floor(beta, pilot, prior))
}

pub(crate) fn bounds_with_floor(beta: f64, pilot: &PilotMatrix, prior: &CfoPrior) -> BoundResult {
    let beta = if beta < beta_floor(pilot.n(), pilot.rho()) {
        0.0
    } else {
        beta
    };
    compute_bounds(beta, prior)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub beta: f64,
    /// Standard error of the Monte-Carlo mean.
    pub std_error: f64,
}

/// Monte-Carlo Fisher information from the exact Gaussian likelihood
/// `y | f ~ CN(X(f) mu_h, X(f) Sigma_h X(f)^H + I)`.
///
/// Each sample is drawn at `f_probe`; the negative second derivative of the
/// log-likelihood is taken by central differences with step [`ORACLE_STEP`].
/// The prior is not included.
pub fn fisher_oracle<R: Rng + ?Sized>(
    pilot: &PilotMatrix,
    l_r: usize,
    stats: &ChannelStats,
    f_probe: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<OracleEstimate> {
    if n_samples == 0 {
        return Err(crate::Error::param("fisher oracle needs at least one sample"));
    }
    let h = ORACLE_STEP;
    let mut models = Vec::with_capacity(3);
    for f in [f_probe - h, f_probe, f_probe + h] {
        let x = rotated_block(pilot, l_r, &Cfo::Common(f))?;
        let mut cov = &x * &stats.sigma_h * x.adjoint();
        for i in 0..cov.nrows() {
            cov[(i, i)] += C64::new(1.0, 0.0);
        }
        let factor = HermitianFactor::new(&hermitize(&cov))?;
        models.push((x * &stats.mu_h, factor));
    }
    let (mean0, factor0) = &models[1];
    let l0 = factor0.l();
    let dim = mean0.len();

    let loglik = |y: &DVector<C64>, (mean, factor): &(DVector<C64>, HermitianFactor)| {
        -factor.log_det() - factor.quad_inv(&(y - mean))
    };
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_samples {
        let w = DVector::from_fn(dim, |_, _| complex_normal(rng));
        let y = mean0 + &l0 * w;
        let second = (loglik(&y, &models[0]) - 2.0 * loglik(&y, &models[1]) + loglik(&y, &models[2])) / (h * h);
        sum -= second;
        sum_sq += second * second;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(OracleEstimate {
        beta: mean,
        std_error: (var / n).sqrt(),
    })
}
