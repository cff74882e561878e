//! Independent reference computations shared by the integration tests.
//! Nothing here goes through the pair table, the lag statistics or the
//! closed-form Fisher information.
#![allow(dead_code)]

use std::f64::consts::PI;

use mimo_cfo::channel::{rotation, CfoPrior, ChannelStats, CorrelationModel};
use mimo_cfo::pilots::PilotMatrix;
use mimo_cfo::{Dims, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn random_code<R: Rng>(n: usize, rng: &mut R) -> Vec<C64> {
    (0..n)
        .map(|_| C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
        .collect()
}

pub struct Setup {
    pub pilot: PilotMatrix,
    pub l_r: usize,
    pub model: CorrelationModel,
    pub stats: ChannelStats,
}

/// Small random pilot and correlated channel, `n <= max_n`,
/// `l_t, l_r <= 2`, possibly with a nonzero mean.
pub fn random_setup<R: Rng>(rng: &mut R, max_n: usize) -> Setup {
    let l_t = rng.random_range(1..=2);
    let l_r = rng.random_range(1..=2);
    let m = rng.random_range(2..=max_n / l_t);
    let rho = rng.random_range(0.3..20.0);
    let code = random_code(m * l_t, rng);
    let pilot = if rng.random_bool(0.5) {
        PilotMatrix::periodic(l_t, m, rho, Some(&code), None).unwrap()
    } else {
        PilotMatrix::time_division(l_t, m, rho, Some(&code)).unwrap()
    };
    let rho_h = [0.0, 0.3, 0.8, 0.95, 0.999, 1.0][rng.random_range(0..6)];
    let mut model = CorrelationModel::exponential(
        l_t,
        l_r,
        rho_h,
        rng.random_range(0.0..0.9),
        rng.random_range(0.0..0.9),
        rng.random_range(0.5..2.0),
    )
    .unwrap();
    if rng.random_bool(0.5) {
        model = model.with_rician_mean(rng.random_range(0.1..3.0)).unwrap();
    }
    let stats = model.build_stats(pilot.n()).unwrap();
    Setup {
        pilot,
        l_r,
        model,
        stats,
    }
}

/// `X(f)` built entry by entry: row `(r, k)`, column `(r, t, k)` holds
/// `e^{j2pi f k} s_{t,k}`.
pub fn x_matrix(pilot: &PilotMatrix, l_r: usize, f: &[f64]) -> DMatrix<C64> {
    let d = Dims::new(pilot.l_t(), l_r, pilot.n());
    let mut x = DMatrix::zeros(d.rx_len(), d.len());
    for r in 0..l_r {
        for k in 0..d.n {
            for t in 0..d.l_t {
                x[(r * d.n + k, d.index(r, t, k))] = rotation(f[r], k) * pilot.symbol(t, k);
            }
        }
    }
    x
}

fn inverse(m: &DMatrix<C64>) -> DMatrix<C64> {
    m.clone().try_inverse().expect("invertible")
}

/// Covariance of `y` given `f`.
pub fn rx_cov(x: &DMatrix<C64>, stats: &ChannelStats) -> DMatrix<C64> {
    let n = x.nrows();
    x * &stats.sigma_h * x.adjoint() + DMatrix::identity(n, n)
}

/// `log p(y | f)` up to an `f`-independent constant (the determinant of
/// the covariance does not depend on `f`).
pub fn log_likelihood(y: &DVector<C64>, x: &DMatrix<C64>, stats: &ChannelStats) -> f64 {
    let e = y - x * &stats.mu_h;
    -(e.adjoint() * inverse(&rx_cov(x, stats)) * &e)[(0, 0)].re
}

/// Linear MMSE channel estimate `mu + Sigma X^H C^-1 (y - X mu)`.
pub fn lmmse(y: &DVector<C64>, x: &DMatrix<C64>, stats: &ChannelStats) -> DVector<C64> {
    let e = y - x * &stats.mu_h;
    &stats.mu_h + &stats.sigma_h * x.adjoint() * inverse(&rx_cov(x, stats)) * e
}

/// Fisher information of `f` for `y ~ CN(m(f), C(f))` by the Slepian-Bangs
/// formula `tr(C^-1 C' C^-1 C') + 2 Re m'^H C^-1 m'`.
pub fn slepian_bangs(pilot: &PilotMatrix, l_r: usize, stats: &ChannelStats, f: f64) -> f64 {
    let n = pilot.n();
    let x = x_matrix(pilot, l_r, &vec![f; l_r]);
    let dim = x.nrows();
    let k = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            c(0.0, 2.0 * PI * (i % n) as f64)
        } else {
            c(0.0, 0.0)
        }
    });
    let c0 = &x * &stats.sigma_h * x.adjoint();
    let dc = &k * &c0 - &c0 * &k;
    let dm = &k * &x * &stats.mu_h;
    let ci = inverse(&(c0 + DMatrix::identity(dim, dim)));
    let t = &ci * &dc;
    (t.clone() * t).trace().re + 2.0 * (dm.adjoint() * &ci * &dm)[(0, 0)].re
}

/// `A` by explicit inversion of `S^H S + Sigma^-1` (needs a regular `Sigma`).
pub fn a_direct(pilot: &PilotMatrix, l_r: usize, stats: &ChannelStats) -> DMatrix<C64> {
    let s = x_matrix(pilot, l_r, &vec![0.0; l_r]);
    inverse(&(s.adjoint() * &s + inverse(&stats.sigma_h)))
}

/// Lag statistics by six nested loops over `(r, t, k)` pairs:
/// `z_l = sum_{k1 - k2 = l} conj(v1) A v2 + sum_{k = l} conj(v) b`,
/// `v = S^H y`.
pub fn z_six_loops(
    y: &DVector<C64>,
    pilot: &PilotMatrix,
    l_r: usize,
    a: &DMatrix<C64>,
    b: &DVector<C64>,
) -> Vec<C64> {
    let d = Dims::new(pilot.l_t(), l_r, pilot.n());
    let v = |r: usize, t: usize, k: usize| pilot.symbol(t, k).conj() * y[r * d.n + k];
    let mut z = vec![c(0.0, 0.0); d.n - 1];
    for r1 in 0..l_r {
        for t1 in 0..d.l_t {
            for k1 in 0..d.n {
                let i = d.index(r1, t1, k1);
                if k1 > 0 {
                    z[k1 - 1] += v(r1, t1, k1).conj() * b[i];
                }
                for r2 in 0..l_r {
                    for t2 in 0..d.l_t {
                        for k2 in 0..k1 {
                            let j = d.index(r2, t2, k2);
                            z[k1 - k2 - 1] += v(r1, t1, k1).conj() * a[(i, j)] * v(r2, t2, k2);
                        }
                    }
                }
            }
        }
    }
    z
}

/// `g(y, f)` straight from its definition with `u = X(f)^H y`.
pub fn metric_definition(
    y: &DVector<C64>,
    f: f64,
    pilot: &PilotMatrix,
    l_r: usize,
    a: &DMatrix<C64>,
    b: &DVector<C64>,
    prior: &CfoPrior,
) -> f64 {
    let u = x_matrix(pilot, l_r, &vec![f; l_r]).adjoint() * y;
    let quad = (u.adjoint() * a * &u)[(0, 0)].re;
    let lin = 2.0 * u.dotc(b).re;
    let p = prior.precision;
    quad + lin - p * f * f / 2.0 + p * prior.mean * f
}
