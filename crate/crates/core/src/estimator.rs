//! Separable MAP estimation of the CFO and the channel.
//!
//! For a CFO that is common to all transmit antennas of a receive antenna,
//! the channel posterior given `(y, f)` is Gaussian with a covariance `A`
//! that does not depend on `f`. The CFO can therefore be estimated first by
//! maximising
//!
//! ```text
//! g(y, f) = 2 Re<X(f)^H y, b> + (X(f)^H y)^H A (X(f)^H y) - f^2 / (2 s2) + mu f / s2
//! ```
//!
//! where `X(f)` is the rotated block pilot, `A = (S^H S + Sigma_h^-1)^-1`
//! and `b = (I - A S^H S) mu_h`. The channel estimate is then the MMSE
//! estimate `A X(f)^H y + b`.
//!
//! With a common CFO, `g` collapses onto `n - 1` lag statistics `z_k`:
//! `g(f) = c + 2 Re sum_k e^{j 2 pi f k} z_k + prior(f)`. The universal
//! search evaluates a Newton step from every point of a coarse grid, keeps
//! the best candidate and refines it; no phase unwrapping is involved.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::channel::{rotation, CfoPrior, Cfo, ChannelStats};
use crate::linalg::{hermitize, HermitianFactor};
use crate::pilots::PilotMatrix;
use crate::{wrap_frequency, Dims, Error, Result, C64};

/// Newton denominators smaller than this are treated as degenerate.
const MIN_DENOMINATOR: f64 = 1e-300;
/// Relative metric tolerance below which two candidates tie.
const TIE_TOL: f64 = 1e-12;

/// Precomputed `A`, `b` and index tables for one pilot and channel model.
#[derive(Debug, Clone)]
pub struct EstimatorWorkspace {
    dims: Dims,
    pilot: PilotMatrix,
    s_block: DMatrix<C64>,
    a: DMatrix<C64>,
    b: DVector<C64>,
    mu_h: DVector<C64>,
    prior: CfoPrior,
    condition: f64,
}

impl EstimatorWorkspace {
    /// Computes `A` through the Woodbury form
    /// `A = Sigma - Sigma S^H (I + S Sigma S^H)^-1 S Sigma`, which never
    /// inverts `Sigma_h` and so also covers rank-deficient (e.g. `rho_h = 1`)
    /// covariances.
    pub fn build(pilot: &PilotMatrix, l_r: usize, stats: &ChannelStats, prior: CfoPrior) -> Result<Self> {
        let dims = Dims::new(pilot.l_t(), l_r, pilot.n());
        if stats.dims() != dims {
            return Err(Error::param(format!(
                "channel statistics are for {:?}, pilot and l_r give {:?}",
                stats.dims(),
                dims
            )));
        }
        let s_block = pilot.expand_block(l_r)?;
        let sigma = &stats.sigma_h;
        // S Sigma, using that row (r, k) of S only touches columns (r, ., k).
        let s_sigma = DMatrix::from_fn(dims.rx_len(), dims.len(), |p, j| {
            let k = p % dims.n;
            (0..dims.l_t)
                .map(|t| pilot.symbol(t, k) * sigma[(p * dims.l_t + t, j)])
                .sum::<C64>()
        });
        let mut inner = DMatrix::from_fn(dims.rx_len(), dims.rx_len(), |p, q| {
            let k = q % dims.n;
            (0..dims.l_t)
                .map(|t| s_sigma[(p, q * dims.l_t + t)] * pilot.symbol(t, k).conj())
                .sum::<C64>()
        });
        for i in 0..inner.nrows() {
            inner[(i, i)] += C64::new(1.0, 0.0);
        }
        let factor = HermitianFactor::new(&hermitize(&inner))?;
        let w = factor.whiten(&s_sigma);
        let a = hermitize(&(sigma - w.ad_mul(&w)));
        let b = &stats.mu_h - &a * gram_mul_vec(pilot, dims, &stats.mu_h);
        Ok(EstimatorWorkspace {
            dims,
            pilot: pilot.clone(),
            s_block,
            a,
            b,
            mu_h: stats.mu_h.clone(),
            prior,
            condition: factor.condition,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn pilot(&self) -> &PilotMatrix {
        &self.pilot
    }

    pub fn prior(&self) -> CfoPrior {
        self.prior
    }

    /// Same `A` and `b` with another CFO prior.
    pub fn with_prior(&self, prior: CfoPrior) -> Self {
        EstimatorWorkspace {
            prior,
            ..self.clone()
        }
    }

    /// `A`, which is also the MMSE error covariance of the channel estimate.
    pub fn a(&self) -> &DMatrix<C64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<C64> {
        &self.b
    }

    pub fn mu_h(&self) -> &DVector<C64> {
        &self.mu_h
    }

    /// Block pilot `S` (no rotation), `(n l_r) x (l_t l_r n)`.
    pub fn s_block(&self) -> &DMatrix<C64> {
        &self.s_block
    }

    /// Condition estimate of `I + S Sigma_h S^H` from its Cholesky factor.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    fn check_rx(&self, y: &DVector<C64>) -> Result<()> {
        if y.len() != self.dims.rx_len() {
            return Err(Error::param(format!(
                "received vector has length {}, expected {}",
                y.len(),
                self.dims.rx_len()
            )));
        }
        Ok(())
    }

    /// `X(f)^H y` with entries `conj(s_{t,k}) e^{-j2pi f_r k} y[r,k]`.
    fn matched(&self, y: &DVector<C64>, cfo: &Cfo) -> DVector<C64> {
        let d = self.dims;
        DVector::from_fn(d.len(), |i, _| {
            let (r, t, k) = d.split(i);
            self.pilot.symbol(t, k).conj() * rotation(cfo.for_antenna(r), k).conj() * y[d.rx_index(r, k)]
        })
    }

    /// Contracts `A` and `b` with the de-rotated matched filter output into a
    /// table over receive-antenna/time positions `p = r n + k`:
    /// `W[p1, p2] = sum_{t1,t2} conj(u[p1,t1]) A u[p2,t2]` and
    /// `L[p] = sum_t conj(u[p,t]) b[p,t]`.
    pub fn pair_table(&self, y: &DVector<C64>) -> Result<PairTable> {
        self.check_rx(y)?;
        let d = self.dims;
        let u = self.s_block.adjoint() * y;
        let positions = d.rx_len();
        let mut w = DMatrix::<C64>::zeros(positions, positions);
        let mut lin = DVector::<C64>::zeros(positions);
        let lt = d.l_t;
        for j in 0..d.len() {
            let uj = u[j];
            let pj = j / lt;
            let col = self.a.column(j);
            for i in 0..d.len() {
                w[(i / lt, pj)] += u[i].conj() * col[i] * uj;
            }
            lin[pj] += u[j].conj() * self.b[j];
        }
        Ok(PairTable { dims: d, w, lin })
    }

    /// Lag statistics `z_1 .. z_{n-1}` plus the `f`-independent part of `g`.
    pub fn lag_statistics(&self, y: &DVector<C64>) -> Result<LagStatistics> {
        Ok(self.pair_table(y)?.common_lags())
    }
}

/// `S^H S M`. The Gram matrix is block diagonal with one `l_t x l_t` block
/// `conj(s_k) s_k^T` per receive position, so this costs `O(l_t)` per entry.
pub(crate) fn gram_mul(pilot: &PilotMatrix, dims: Dims, m: &DMatrix<C64>) -> DMatrix<C64> {
    let lt = dims.l_t;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        let col = m.column(j);
        for p in 0..dims.rx_len() {
            let k = p % dims.n;
            let acc: C64 = (0..lt).map(|t| pilot.symbol(t, k) * col[p * lt + t]).sum();
            for t in 0..lt {
                out[(p * lt + t, j)] = pilot.symbol(t, k).conj() * acc;
            }
        }
    }
    out
}

pub(crate) fn gram_mul_vec(pilot: &PilotMatrix, dims: Dims, v: &DVector<C64>) -> DVector<C64> {
    let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    DVector::from_column_slice(gram_mul(pilot, dims, &m).as_slice())
}

/// Output of [`EstimatorWorkspace::pair_table`].
#[derive(Debug, Clone)]
pub struct PairTable {
    dims: Dims,
    w: DMatrix<C64>,
    lin: DVector<C64>,
}

impl PairTable {
    /// Lags for a CFO common to all receive antennas.
    pub fn common_lags(&self) -> LagStatistics {
        let d = self.dims;
        self.lags_over(0..d.l_r)
    }

    /// Lags that only use receive antenna `r` (cross-antenna terms dropped).
    pub fn antenna_lags(&self, r: usize) -> LagStatistics {
        self.lags_over(r..r + 1)
    }

    fn lags_over(&self, antennas: std::ops::Range<usize>) -> LagStatistics {
        let d = self.dims;
        let n = d.n;
        let mut z = vec![C64::new(0.0, 0.0); n.saturating_sub(1)];
        let mut constant = 0.0;
        for r1 in antennas.clone() {
            for k1 in 0..n {
                let p1 = d.rx_index(r1, k1);
                for r2 in antennas.clone() {
                    for k2 in 0..=k1 {
                        let v = self.w[(p1, d.rx_index(r2, k2))];
                        if k1 == k2 {
                            constant += v.re;
                        } else {
                            z[k1 - k2 - 1] += v;
                        }
                    }
                }
                if k1 == 0 {
                    constant += 2.0 * self.lin[p1].re;
                } else {
                    z[k1 - 1] += self.lin[p1];
                }
            }
        }
        LagStatistics { z, constant }
    }

    /// `g` for per-antenna offsets `f[r]`.
    pub fn metric(&self, f: &[f64], priors: &[CfoPrior]) -> f64 {
        let phi = self.phases(f);
        let v = &self.w * &phi;
        let mut g = phi.dotc(&v).re;
        for (p, ph) in phi.iter().enumerate() {
            g += 2.0 * (ph.conj() * self.lin[p]).re;
        }
        g + f
            .iter()
            .zip(priors)
            .map(|(fr, pr)| pr.log_density_terms(*fr))
            .sum::<f64>()
    }

    /// Gradient and Hessian of [`PairTable::metric`] with respect to `f`.
    pub fn derivatives(&self, f: &[f64], priors: &[CfoPrior]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dims;
        let l_r = d.l_r;
        let phi = self.phases(f);
        let v = &self.w * &phi;
        let two_pi = 2.0 * PI;
        let mut grad = DVector::zeros(l_r);
        let mut hess = DMatrix::zeros(l_r, l_r);
        for r in 0..l_r {
            let (mut g, mut h) = (0.0, 0.0);
            for k in 0..d.n {
                let p = d.rx_index(r, k);
                let kk = k as f64;
                let quad = v[p].conj() * phi[p];
                let lin = phi[p].conj() * self.lin[p];
                // d/df of phi_p is -j 2 pi k phi_p.
                g += 2.0 * (quad * C64::new(0.0, -two_pi * kk)).re;
                g += 2.0 * (lin * C64::new(0.0, two_pi * kk)).re;
                h -= 2.0 * two_pi * two_pi * kk * kk * (quad.re + lin.re);
            }
            grad[r] = g - priors[r].precision * (f[r] - priors[r].mean);
            hess[(r, r)] = h - priors[r].precision;
        }
        for p1 in 0..d.rx_len() {
            let (r1, k1) = (p1 / d.n, (p1 % d.n) as f64);
            for p2 in 0..d.rx_len() {
                let (r2, k2) = (p2 / d.n, (p2 % d.n) as f64);
                let term = phi[p1].conj() * self.w[(p1, p2)] * phi[p2];
                hess[(r1, r2)] += 2.0 * two_pi * two_pi * k1 * k2 * term.re;
            }
        }
        (grad, hess)
    }

    fn phases(&self, f: &[f64]) -> DVector<C64> {
        let d = self.dims;
        DVector::from_fn(d.rx_len(), |p, _| rotation(f[p / d.n], p % d.n).conj())
    }
}

/// `z_k` for lags `k = 1 .. n-1` (stored 0-based) and the constant part of
/// the metric.
#[derive(Debug, Clone, PartialEq)]
pub struct LagStatistics {
    pub z: Vec<C64>,
    pub constant: f64,
}

impl LagStatistics {
    /// `sum_k k^p e^{j 2 pi f k} z_k`.
    fn weighted_sum(&self, f: f64, power: i32) -> C64 {
        self.z
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let k = i + 1;
                rotation(f, k) * z * (k as f64).powi(power)
            })
            .sum()
    }

    /// `g(y, f)` in lag form.
    pub fn metric(&self, f: f64, prior: &CfoPrior) -> f64 {
        self.constant + 2.0 * self.weighted_sum(f, 0).re + prior.log_density_terms(f)
    }

    /// `dg/df = -4 pi Im sum_k k e^{j2pi f k} z_k - p (f - mu)`.
    pub fn gradient(&self, f: f64, prior: &CfoPrior) -> f64 {
        -4.0 * PI * self.weighted_sum(f, 1).im - prior.precision * (f - prior.mean)
    }

    /// `d^2 g / df^2`.
    pub fn curvature(&self, f: f64, prior: &CfoPrior) -> f64 {
        -8.0 * PI * PI * self.weighted_sum(f, 2).re - prior.precision
    }

    /// Linearized correction `f_e` around `f0`, or `None` when the
    /// denominator vanishes.
    pub fn newton_step(&self, f0: f64, prior: &CfoPrior) -> Option<f64> {
        let scaled = prior.precision / (8.0 * PI * PI);
        let num = -self.weighted_sum(f0, 1).im / (2.0 * PI) + scaled * (prior.mean - f0);
        let den = self.weighted_sum(f0, 2).re + scaled;
        if den.abs() < MIN_DENOMINATOR || !den.is_finite() {
            return None;
        }
        let step = num / den;
        step.is_finite().then_some(step)
    }
}

/// `z_1 .. z_{n-1}` for a common CFO. Depends only on `y`, the pilot, `A`
/// and `b`.
pub fn compute_z(y: &DVector<C64>, ws: &EstimatorWorkspace) -> Result<Vec<C64>> {
    Ok(ws.lag_statistics(y)?.z)
}

/// Rotated block pilot `X(f)`: row `(r, k)` is `e^{j2pi f_r k}` times the
/// corresponding row of the block pilot.
pub fn rotated_block(pilot: &PilotMatrix, l_r: usize, cfo: &Cfo) -> Result<DMatrix<C64>> {
    let mut x = pilot.expand_block(l_r)?;
    let n = pilot.n();
    for (row, mut line) in x.row_iter_mut().enumerate() {
        line *= rotation(cfo.for_antenna(row / n), row % n);
    }
    Ok(x)
}

/// `g(y, f)` evaluated directly from `X(f)`, `A` and `b`.
pub fn map_metric(y: &DVector<C64>, f: f64, ws: &EstimatorWorkspace) -> Result<f64> {
    ws.check_rx(y)?;
    let x = rotated_block(ws.pilot(), ws.dims().l_r, &Cfo::Common(f))?;
    let m = x.adjoint() * y;
    let lin = 2.0 * m.dotc(ws.b()).re;
    let quad = m.dotc(&(ws.a() * &m)).re;
    Ok(lin + quad + ws.prior().log_density_terms(f))
}

/// `dg/df` at a common CFO `f`.
pub fn metric_gradient(y: &DVector<C64>, f: f64, ws: &EstimatorWorkspace) -> Result<f64> {
    Ok(ws.lag_statistics(y)?.gradient(f, &ws.prior()))
}

/// Tuning of the grid-plus-Newton CFO search.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniversalOptions {
    /// Grid points over `[-0.5, 0.5)`; `None` means `4 n`.
    pub grid_size: Option<usize>,
    pub epsilon: f64,
    pub max_iter: usize,
    /// De-rotate by the prior mean first and estimate the residual, so the
    /// acquisition window is centred on the prior mean.
    pub derotate_prior_mean: bool,
}

impl Default for UniversalOptions {
    fn default() -> Self {
        UniversalOptions {
            grid_size: None,
            epsilon: 1e-10,
            max_iter: 10,
            derotate_prior_mean: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CfoEstimate {
    /// Estimate in `[-0.5, 0.5)`.
    pub f_hat: f64,
    /// `g(y, f_hat)`.
    pub metric: f64,
    /// Newton refinements after the grid stage.
    pub iterations: usize,
    pub converged: bool,
}

/// Grid search followed by Newton refinement on precomputed lag statistics.
pub fn search_lags(
    lags: &LagStatistics,
    prior: &CfoPrior,
    n: usize,
    opts: &UniversalOptions,
) -> Result<CfoEstimate> {
    let grid = opts.grid_size.unwrap_or(4 * n).max(1);
    let mut best: Option<(f64, f64)> = None;
    for i in 0..grid {
        let f0 = -0.5 + i as f64 / grid as f64;
        let Some(step) = lags.newton_step(f0, prior) else {
            continue;
        };
        let cand = wrap_frequency(f0 + step);
        let g = lags.metric(cand, prior);
        best = match best {
            None => Some((cand, g)),
            Some((bf, bg)) => {
                let tol = TIE_TOL * bg.abs().max(g.abs()).max(1.0);
                if g > bg + tol
                    || ((g - bg).abs() <= tol && (cand - prior.mean).abs() < (bf - prior.mean).abs())
                {
                    Some((cand, g))
                } else {
                    Some((bf, bg))
                }
            }
        };
    }
    let (mut f, _) = best.ok_or_else(|| {
        Error::Estimation("metric is degenerate at every grid point".into())
    })?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let Some(step) = lags.newton_step(f, prior) else {
            break;
        };
        f += step;
        iterations += 1;
        if step.abs() <= opts.epsilon {
            converged = true;
            break;
        }
    }
    let f_hat = wrap_frequency(f);
    Ok(CfoEstimate {
        f_hat,
        metric: lags.metric(f_hat, prior),
        iterations,
        converged,
    })
}

fn derotate(y: &DVector<C64>, dims: Dims, f: f64) -> DVector<C64> {
    DVector::from_fn(y.len(), |p, _| y[p] * rotation(f, p % dims.n).conj())
}

/// MAP estimate of a CFO common to all antennas.
pub fn estimate_cfo_universal(
    y: &DVector<C64>,
    ws: &EstimatorWorkspace,
    opts: &UniversalOptions,
) -> Result<CfoEstimate> {
    let prior = ws.prior();
    let n = ws.dims().n;
    if opts.derotate_prior_mean && prior.mean != 0.0 {
        let shifted = derotate(y, ws.dims(), prior.mean);
        let centred = CfoPrior {
            mean: 0.0,
            ..prior
        };
        let est = search_lags(&ws.lag_statistics(&shifted)?, &centred, n, opts)?;
        let f_hat = wrap_frequency(est.f_hat + prior.mean);
        let lags = ws.lag_statistics(y)?;
        return Ok(CfoEstimate {
            f_hat,
            metric: lags.metric(f_hat, &prior),
            ..est
        });
    }
    search_lags(&ws.lag_statistics(y)?, &prior, n, opts)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PerAntennaCfoEstimate {
    pub f_hat: Vec<f64>,
    pub metric: f64,
    /// Joint refinement iterations.
    pub iterations: usize,
    pub converged: bool,
    /// The joint refinement was singular or lowered the metric; `f_hat`
    /// holds the single-antenna estimates.
    pub degraded: bool,
}

/// MAP estimate with one CFO per receive antenna and independent Gaussian
/// priors.
///
/// Each antenna is first searched on its own (cross-antenna terms ignored);
/// the offsets are then refined jointly by Newton steps on the full metric.
pub fn estimate_cfo_per_antenna(
    y: &DVector<C64>,
    ws: &EstimatorWorkspace,
    priors: &[CfoPrior],
    opts: &UniversalOptions,
) -> Result<PerAntennaCfoEstimate> {
    let d = ws.dims();
    if priors.len() != d.l_r {
        return Err(Error::param(format!(
            "need {} per-antenna priors, got {}",
            d.l_r,
            priors.len()
        )));
    }
    let table = ws.pair_table(y)?;
    let mut start = Vec::with_capacity(d.l_r);
    for (r, prior) in priors.iter().enumerate() {
        start.push(search_lags(&table.antenna_lags(r), prior, d.n, opts)?.f_hat);
    }
    let start_metric = table.metric(&start, priors);

    let mut f = start.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut singular = false;
    while iterations < opts.max_iter {
        let (grad, hess) = table.derivatives(&f, priors);
        let Some(step) = hess.lu().solve(&(-grad)) else {
            singular = true;
            break;
        };
        if step.iter().any(|s| !s.is_finite()) {
            singular = true;
            break;
        }
        for (fr, s) in f.iter_mut().zip(step.iter()) {
            *fr += s;
        }
        iterations += 1;
        if step.amax() <= opts.epsilon {
            converged = true;
            break;
        }
    }
    let f: Vec<f64> = f.into_iter().map(wrap_frequency).collect();
    let metric = table.metric(&f, priors);
    let tol = TIE_TOL * metric.abs().max(start_metric.abs()).max(1.0);
    if singular || metric < start_metric - tol {
        return Ok(PerAntennaCfoEstimate {
            f_hat: start,
            metric: start_metric,
            iterations,
            converged: false,
            degraded: true,
        });
    }
    Ok(PerAntennaCfoEstimate {
        f_hat: f,
        metric,
        iterations,
        converged,
        degraded: false,
    })
}

/// MMSE (= MAP) channel estimate `A X(f)^H y + b`. Its error covariance is
/// [`EstimatorWorkspace::a`].
pub fn estimate_channel_mmse(y: &DVector<C64>, cfo: &Cfo, ws: &EstimatorWorkspace) -> Result<DVector<C64>> {
    ws.check_rx(y)?;
    match cfo {
        Cfo::Common(f) if !f.is_finite() => return Err(Error::param("CFO must be finite")),
        Cfo::PerAntenna(v) if v.len() != ws.dims().l_r || v.iter().any(|f| !f.is_finite()) => {
            return Err(Error::param("per-antenna CFO must be finite with one entry per antenna"))
        }
        _ => {}
    }
    Ok(ws.a() * ws.matched(y, cfo) + ws.b())
}
