//! Channel statistics, AR(1) fading and received-signal synthesis.
//!
//! Fading is separable in space and time:
//! `Cov[h(r,t,k), h(r',t',k')] = rho_h^|k-k'| * c[(r,t),(r',t')]`, with a
//! constant mean per antenna pair. Spatial quantities are indexed by
//! `r * l_t + t`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{hermitian_defect, psd_sqrt};
use crate::pilots::PilotMatrix;
use crate::rng::complex_normal;
use crate::{Dims, Error, Result, C64};

const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// AR(1) temporal correlation with a fixed spatial covariance and mean.
#[derive(Debug, Clone)]
pub struct CorrelationModel {
    rho_h: f64,
    l_t: usize,
    l_r: usize,
    spatial_cov: DMatrix<C64>,
    mean: DVector<C64>,
    spatial_sqrt: DMatrix<C64>,
}

impl CorrelationModel {
    pub fn new(
        rho_h: f64,
        l_t: usize,
        l_r: usize,
        spatial_cov: DMatrix<C64>,
        mean: DVector<C64>,
    ) -> Result<Self> {
        if l_t == 0 || l_r == 0 {
            return Err(Error::param("antenna counts must be at least 1"));
        }
        if !(0.0..=1.0).contains(&rho_h) {
            return Err(Error::Model(format!("rho_h = {rho_h} is outside [0, 1]")));
        }
        let dim = l_t * l_r;
        if spatial_cov.shape() != (dim, dim) || mean.len() != dim {
            return Err(Error::param(format!(
                "spatial covariance must be {dim}x{dim} and the mean of length {dim}"
            )));
        }
        let defect = hermitian_defect(&spatial_cov);
        if defect > HERMITIAN_TOL {
            return Err(Error::Model(format!(
                "spatial covariance is not Hermitian (defect {defect:.3e})"
            )));
        }
        let spatial_sqrt = psd_sqrt(&spatial_cov, PSD_TOL)?;
        Ok(CorrelationModel {
            rho_h,
            l_t,
            l_r,
            spatial_cov,
            mean,
            spatial_sqrt,
        })
    }

    /// Zero-mean fading, independent across antenna pairs with variance `sigma_h_sq`.
    pub fn uncorrelated(l_t: usize, l_r: usize, rho_h: f64, sigma_h_sq: f64) -> Result<Self> {
        let dim = l_t * l_r;
        Self::new(
            rho_h,
            l_t,
            l_r,
            DMatrix::identity(dim, dim).scale(sigma_h_sq),
            DVector::zeros(dim),
        )
    }

    /// Zero-mean fading with `c[(r,t),(r',t')] = a^|r-r'| b^|t-t'| sigma_h_sq`.
    pub fn exponential(
        l_t: usize,
        l_r: usize,
        rho_h: f64,
        a: f64,
        b: f64,
        sigma_h_sq: f64,
    ) -> Result<Self> {
        Self::new(
            rho_h,
            l_t,
            l_r,
            exponential_spatial(l_t, l_r, a, b, sigma_h_sq),
            DVector::zeros(l_t * l_r),
        )
    }

    /// Rician-style mean: every coefficient gets mean `sqrt(K/(K+1) * p)` and
    /// the covariance is scaled by `1/(K+1)`, where `p` is the average
    /// diagonal of the current covariance. Total per-coefficient power stays `p`.
    pub fn with_rician_mean(self, k_factor: f64) -> Result<Self> {
        if !(k_factor >= 0.0 && k_factor.is_finite()) {
            return Err(Error::param(format!("Rician K must be >= 0, got {k_factor}")));
        }
        let dim = self.l_t * self.l_r;
        let power = (0..dim).map(|i| self.spatial_cov[(i, i)].re).sum::<f64>() / dim as f64;
        let mu = (k_factor / (k_factor + 1.0) * power).sqrt();
        Self::new(
            self.rho_h,
            self.l_t,
            self.l_r,
            self.spatial_cov.scale(1.0 / (k_factor + 1.0)),
            DVector::from_element(dim, C64::new(mu, 0.0)),
        )
    }

    /// Same spatial structure with a different temporal correlation.
    pub fn with_rho_h(&self, rho_h: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho_h) {
            return Err(Error::Model(format!("rho_h = {rho_h} is outside [0, 1]")));
        }
        Ok(CorrelationModel {
            rho_h,
            ..self.clone()
        })
    }

    pub fn rho_h(&self) -> f64 {
        self.rho_h
    }

    pub fn l_t(&self) -> usize {
        self.l_t
    }

    pub fn l_r(&self) -> usize {
        self.l_r
    }

    pub fn spatial_cov(&self) -> &DMatrix<C64> {
        &self.spatial_cov
    }

    pub fn mean(&self) -> &DVector<C64> {
        &self.mean
    }

    /// Mean and covariance of the full space-time channel vector for a pilot
    /// of length `n`.
    pub fn build_stats(&self, n: usize) -> Result<ChannelStats> {
        if n == 0 {
            return Err(Error::param("pilot length must be at least 1"));
        }
        let dims = Dims::new(self.l_t, self.l_r, n);
        let d = dims.len();
        let lt = self.l_t;
        let mu_h = DVector::from_fn(d, |i, _| {
            let (r, t, _) = dims.split(i);
            self.mean[r * lt + t]
        });
        // rho^|k-k'| via a power table; 0^0 = 1.
        let powers: Vec<f64> = (0..n).map(|j| self.rho_h.powi(j as i32)).collect();
        let sigma_h = DMatrix::from_fn(d, d, |i, j| {
            let (r1, t1, k1) = dims.split(i);
            let (r2, t2, k2) = dims.split(j);
            self.spatial_cov[(r1 * lt + t1, r2 * lt + t2)] * powers[k1.abs_diff(k2)]
        });
        Ok(ChannelStats { dims, mu_h, sigma_h })
    }

    /// Draws one fading trajectory over `n` symbols:
    /// `h_1 = w_1 + mu`, `h_k = rho h_{k-1} + sqrt(1 - rho^2) w_k + (1 - rho) mu`.
    pub fn sample_trajectory<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DVector<C64> {
        let dims = Dims::new(self.l_t, self.l_r, n);
        let dim = self.l_t * self.l_r;
        let innov = (1.0 - self.rho_h * self.rho_h).max(0.0).sqrt();
        let mut h = DVector::zeros(dims.len());
        let mut prev = DVector::<C64>::zeros(dim);
        for k in 0..n {
            let white = DVector::from_fn(dim, |_, _| complex_normal(rng));
            let w = &self.spatial_sqrt * white;
            let cur = if k == 0 {
                w + &self.mean
            } else {
                prev.scale(self.rho_h) + w.scale(innov) + self.mean.scale(1.0 - self.rho_h)
            };
            for r in 0..self.l_r {
                for t in 0..self.l_t {
                    h[dims.index(r, t, k)] = cur[r * self.l_t + t];
                }
            }
            prev = cur;
        }
        h
    }
}

/// `c[(r,t),(r',t')] = a^|r-r'| b^|t-t'| sigma_h_sq`.
pub fn exponential_spatial(l_t: usize, l_r: usize, a: f64, b: f64, sigma_h_sq: f64) -> DMatrix<C64> {
    let dim = l_t * l_r;
    DMatrix::from_fn(dim, dim, |i, j| {
        let (r1, t1) = (i / l_t, i % l_t);
        let (r2, t2) = (j / l_t, j % l_t);
        C64::new(
            a.powi(r1.abs_diff(r2) as i32) * b.powi(t1.abs_diff(t2) as i32) * sigma_h_sq,
            0.0,
        )
    })
}

/// Mean and covariance of the vectorized space-time channel.
#[derive(Debug, Clone)]
pub struct ChannelStats {
    dims: Dims,
    pub mu_h: DVector<C64>,
    pub sigma_h: DMatrix<C64>,
}

impl ChannelStats {
    /// Wraps explicit statistics. `sigma_h` must be Hermitian PSD.
    pub fn new(dims: Dims, mu_h: DVector<C64>, sigma_h: DMatrix<C64>) -> Result<Self> {
        let d = dims.len();
        if mu_h.len() != d || sigma_h.shape() != (d, d) {
            return Err(Error::param(format!("channel statistics must have dimension {d}")));
        }
        if hermitian_defect(&sigma_h) > HERMITIAN_TOL * sigma_h.camax().max(1.0) {
            return Err(Error::Model("channel covariance is not Hermitian".into()));
        }
        Ok(ChannelStats { dims, mu_h, sigma_h })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Restriction to receive antenna `r` (an `l_r = 1` problem).
    pub fn receive_antenna(&self, r: usize) -> ChannelStats {
        let d = self.dims;
        let blk = d.l_t * d.n;
        ChannelStats {
            dims: Dims::new(d.l_t, 1, d.n),
            mu_h: self.mu_h.rows(r * blk, blk).into_owned(),
            sigma_h: self.sigma_h.view((r * blk, r * blk), (blk, blk)).into_owned(),
        }
    }
}

/// Gaussian prior on the normalized CFO, stored as mean and precision so the
/// maximum-likelihood case (`precision = 0`) is exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfoPrior {
    pub mean: f64,
    pub precision: f64,
}

impl CfoPrior {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if variance.is_nan() || variance <= 0.0 || !mean.is_finite() {
            return Err(Error::param(format!(
                "CFO prior needs a finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        Ok(CfoPrior {
            mean,
            precision: 1.0 / variance,
        })
    }

    /// No prior information. The mean is kept only for tie-breaking.
    pub fn ml(mean: f64) -> Self {
        CfoPrior {
            mean,
            precision: 0.0,
        }
    }

    pub fn is_ml(&self) -> bool {
        self.precision == 0.0
    }

    /// `+inf` in ML mode.
    pub fn variance(&self) -> f64 {
        if self.is_ml() {
            f64::INFINITY
        } else {
            1.0 / self.precision
        }
    }

    /// `-0.5 p f^2 + p mu f`.
    pub fn log_density_terms(&self, f: f64) -> f64 {
        if self.is_ml() {
            0.0
        } else {
            -0.5 * self.precision * f * f + self.precision * self.mean * f
        }
    }
}

/// Frequency offset seen by the receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cfo {
    /// Same offset on every receive antenna.
    Common(f64),
    /// One offset per receive antenna.
    PerAntenna(Vec<f64>),
}

impl Cfo {
    pub fn for_antenna(&self, r: usize) -> f64 {
        match self {
            Cfo::Common(f) => *f,
            Cfo::PerAntenna(v) => v[r],
        }
    }

    fn check(&self, l_r: usize) -> Result<()> {
        match self {
            Cfo::Common(f) if f.is_finite() => Ok(()),
            Cfo::PerAntenna(v) if v.len() == l_r && v.iter().all(|f| f.is_finite()) => Ok(()),
            _ => Err(Error::param(format!("CFO must be finite with {l_r} entries"))),
        }
    }
}

/// `e^{j 2 pi f k}` for 0-based symbol index `k`.
#[inline]
pub fn rotation(f: f64, k: usize) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * f * k as f64)
}

/// Received vector `y[r,k] = e^{j2pi f_r k} sum_t s_{t,k} h[r,t,k] + n[r,k]`
/// with unit-variance complex Gaussian noise; `noise = None` gives the
/// noiseless signal.
pub fn synthesize_rx<R: Rng + ?Sized>(
    pilot: &PilotMatrix,
    l_r: usize,
    cfo: &Cfo,
    h: &DVector<C64>,
    noise: Option<&mut R>,
) -> Result<DVector<C64>> {
    let dims = Dims::new(pilot.l_t(), l_r, pilot.n());
    if l_r == 0 || h.len() != dims.len() {
        return Err(Error::param(format!(
            "channel vector has length {}, expected {}",
            h.len(),
            dims.len()
        )));
    }
    cfo.check(l_r)?;
    let mut y = DVector::zeros(dims.rx_len());
    for r in 0..l_r {
        let f = cfo.for_antenna(r);
        for k in 0..dims.n {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..dims.l_t {
                acc += pilot.symbol(t, k) * h[dims.index(r, t, k)];
            }
            y[dims.rx_index(r, k)] = rotation(f, k) * acc;
        }
    }
    if let Some(rng) = noise {
        for v in y.iter_mut() {
            *v += complex_normal(rng);
        }
    }
    Ok(y)
}

/// Spatial covariance in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialSpec {
    Identity {
        #[serde(default = "unit")]
        variance: f64,
    },
    Exponential {
        #[serde(default = "half")]
        a: f64,
        #[serde(default = "half")]
        b: f64,
        #[serde(default = "unit")]
        variance: f64,
    },
    /// Rows of `[re, im]` pairs over the `(r, t)` index.
    Explicit { matrix: Vec<Vec<[f64; 2]>> },
}

/// Channel mean in a configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanSpec {
    #[default]
    Zero,
    Rician {
        #[serde(default = "unit")]
        k_factor: f64,
    },
    Explicit { values: Vec<[f64; 2]> },
}

fn unit() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl Default for SpatialSpec {
    fn default() -> Self {
        SpatialSpec::Identity { variance: 1.0 }
    }
}

/// Serializable fading model without the temporal coefficient.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default)]
    pub spatial: SpatialSpec,
    #[serde(default)]
    pub mean: MeanSpec,
}

impl ChannelSpec {
    pub fn build(&self, l_t: usize, l_r: usize, rho_h: f64) -> Result<CorrelationModel> {
        let dim = l_t * l_r;
        let cov = match &self.spatial {
            SpatialSpec::Identity { variance } => DMatrix::identity(dim, dim).scale(*variance),
            SpatialSpec::Exponential { a, b, variance } => {
                exponential_spatial(l_t, l_r, *a, *b, *variance)
            }
            SpatialSpec::Explicit { matrix } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(Error::Config(format!("spatial matrix must be {dim}x{dim}")));
                }
                DMatrix::from_fn(dim, dim, |i, j| C64::new(matrix[i][j][0], matrix[i][j][1]))
            }
        };
        match &self.mean {
            MeanSpec::Zero => CorrelationModel::new(rho_h, l_t, l_r, cov, DVector::zeros(dim)),
            MeanSpec::Rician { k_factor } => {
                CorrelationModel::new(rho_h, l_t, l_r, cov, DVector::zeros(dim))?
                    .with_rician_mean(*k_factor)
            }
            MeanSpec::Explicit { values } => {
                if values.len() != dim {
                    return Err(Error::Config(format!("mean must have {dim} entries")));
                }
                let mean = DVector::from_iterator(dim, values.iter().map(|p| C64::new(p[0], p[1])));
                CorrelationModel::new(rho_h, l_t, l_r, cov, mean)
            }
        }
    }
}
