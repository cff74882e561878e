//! Pilot (training) matrices.
//!
//! A pilot is an `n x l_t` matrix `S` whose column `t` is sent from transmit
//! antenna `t`. Average power is `rho = tr(S^H S) / n`. Two orthogonal
//! structures are built in:
//!
//! * scrambled periodic, `S = sqrt(rho) C [O; O; ...; O]` with `m` stacked
//!   copies of a unitary `O`;
//! * time-division, `S = sqrt(rho) C blockdiag(1_m, ..., 1_m)`, where antenna
//!   `t` alone sends `m` consecutive symbols.
//!
//! `C = diag(c)` is a unit-modulus scrambling code. Both structures satisfy
//! `S^H S = (n rho / l_t) I`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

const UNITARY_TOL: f64 = 1e-12;
const UNIT_MODULUS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotStructure {
    Periodic,
    #[serde(alias = "td")]
    TimeDivision,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    entries: DMatrix<C64>,
    rho: f64,
    structure: PilotStructure,
    scrambling: DVector<C64>,
    unitary_core: Option<DMatrix<C64>>,
}

fn check_scrambling(scrambling: Option<&[C64]>, n: usize) -> Result<DVector<C64>> {
    match scrambling {
        None => Ok(DVector::from_element(n, C64::new(1.0, 0.0))),
        Some(c) => {
            if c.len() != n {
                return Err(Error::param(format!(
                    "scrambling code has length {}, expected {n}",
                    c.len()
                )));
            }
            if let Some((k, v)) = c
                .iter()
                .enumerate()
                .find(|(_, v)| (v.norm() - 1.0).abs() > UNIT_MODULUS_TOL)
            {
                return Err(Error::param(format!(
                    "scrambling entry {k} has modulus {}",
                    v.norm()
                )));
            }
            Ok(DVector::from_column_slice(c))
        }
    }
}

fn check_shape(l_t: usize, m: usize, rho: f64) -> Result<()> {
    if l_t == 0 || m == 0 {
        return Err(Error::param("l_t and m must be at least 1"));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param(format!("pilot power must be positive, got {rho}")));
    }
    Ok(())
}

impl PilotMatrix {
    /// Scrambled periodic pilot. `scrambling` defaults to all ones and
    /// `unitary_core` to the identity.
    pub fn periodic(
        l_t: usize,
        m: usize,
        rho: f64,
        scrambling: Option<&[C64]>,
        unitary_core: Option<DMatrix<C64>>,
    ) -> Result<Self> {
        check_shape(l_t, m, rho)?;
        let n = m * l_t;
        let c = check_scrambling(scrambling, n)?;
        let core = unitary_core.unwrap_or_else(|| DMatrix::identity(l_t, l_t));
        if core.shape() != (l_t, l_t) {
            return Err(Error::param(format!(
                "unitary core is {}x{}, expected {l_t}x{l_t}",
                core.nrows(),
                core.ncols()
            )));
        }
        let defect = (core.adjoint() * &core - DMatrix::<C64>::identity(l_t, l_t)).camax();
        if defect > UNITARY_TOL {
            return Err(Error::param(format!(
                "core is not unitary (max |O^H O - I| = {defect:.3e})"
            )));
        }
        let amp = rho.sqrt();
        let entries = DMatrix::from_fn(n, l_t, |k, t| c[k] * core[(k % l_t, t)] * amp);
        Ok(PilotMatrix {
            entries,
            rho,
            structure: PilotStructure::Periodic,
            scrambling: c,
            unitary_core: Some(core),
        })
    }

    /// Time-division pilot: antenna `t` sends symbols `t*m .. (t+1)*m`.
    pub fn time_division(l_t: usize, m: usize, rho: f64, scrambling: Option<&[C64]>) -> Result<Self> {
        check_shape(l_t, m, rho)?;
        let n = m * l_t;
        let c = check_scrambling(scrambling, n)?;
        let amp = rho.sqrt();
        let entries = DMatrix::from_fn(n, l_t, |k, t| {
            if k / m == t {
                c[k] * amp
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Ok(PilotMatrix {
            entries,
            rho,
            structure: PilotStructure::TimeDivision,
            scrambling: c,
            unitary_core: None,
        })
    }

    /// Arbitrary `n x l_t` pilot. Power is read off the matrix; orthogonality
    /// is not required (see [`PilotMatrix::orthogonality_defect`]).
    pub fn custom(entries: DMatrix<C64>) -> Result<Self> {
        let (n, l_t) = entries.shape();
        if n == 0 || l_t == 0 {
            return Err(Error::param("custom pilot must be non-empty"));
        }
        let rho = entries.norm_squared() / n as f64;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::param("custom pilot has zero or non-finite power"));
        }
        Ok(PilotMatrix {
            entries,
            rho,
            structure: PilotStructure::Custom,
            scrambling: DVector::from_element(n, C64::new(1.0, 0.0)),
            unitary_core: None,
        })
    }

    /// Same structure, scrambling and core with a different average power.
    pub fn with_power(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::param(format!("pilot power must be positive, got {rho}")));
        }
        let scale = (rho / self.rho).sqrt();
        Ok(PilotMatrix {
            entries: self.entries.scale(scale),
            rho,
            ..self.clone()
        })
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn structure(&self) -> PilotStructure {
        self.structure
    }

    pub fn scrambling(&self) -> &DVector<C64> {
        &self.scrambling
    }

    pub fn unitary_core(&self) -> Option<&DMatrix<C64>> {
        self.unitary_core.as_ref()
    }

    /// Pilot length in symbols.
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn l_t(&self) -> usize {
        self.entries.ncols()
    }

    /// `s_{t,k}` with 0-based `t` and `k`.
    #[inline]
    pub fn symbol(&self, t: usize, k: usize) -> C64 {
        self.entries[(k, t)]
    }

    /// `S^H S`.
    pub fn gram(&self) -> DMatrix<C64> {
        self.entries.adjoint() * &self.entries
    }

    /// `max |S^H S - (n rho / l_t) I|`; zero for an orthogonal pilot.
    pub fn orthogonality_defect(&self) -> f64 {
        let l_t = self.l_t();
        let target = self.n() as f64 * self.rho / l_t as f64;
        (self.gram() - DMatrix::<C64>::identity(l_t, l_t).scale(target)).camax()
    }

    pub fn is_orthogonal(&self, tol: f64) -> bool {
        self.orthogonality_defect() <= tol
    }

    /// Block matrix mapping the channel vector to the noiseless, un-rotated
    /// received vector: shape `(n l_r) x (l_t l_r n)`.
    ///
    /// Row `(r, k)` holds `s_{1,k} .. s_{l_t,k}` at the columns of
    /// `h[r, :, k]`.
    pub fn expand_block(&self, l_r: usize) -> Result<DMatrix<C64>> {
        if l_r == 0 {
            return Err(Error::param("l_r must be at least 1"));
        }
        let dims = crate::Dims::new(self.l_t(), l_r, self.n());
        let mut out = DMatrix::zeros(dims.rx_len(), dims.len());
        for r in 0..l_r {
            for k in 0..dims.n {
                for t in 0..dims.l_t {
                    out[(dims.rx_index(r, k), dims.index(r, t, k))] = self.symbol(t, k);
                }
            }
        }
        Ok(out)
    }
}

/// Scrambling code in a configuration file: `"ones"` or explicit `[re, im]`
/// pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScramblingSpec {
    Named(String),
    Explicit(Vec<[f64; 2]>),
}

/// Unitary core in a configuration file: `"identity"` or rows of `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Explicit(Vec<Vec<[f64; 2]>>),
}

impl Default for ScramblingSpec {
    fn default() -> Self {
        ScramblingSpec::Named("ones".into())
    }
}

impl Default for MatrixSpec {
    fn default() -> Self {
        MatrixSpec::Named("identity".into())
    }
}

/// Serializable pilot description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSpec {
    pub structure: PilotStructure,
    pub l_t: usize,
    #[serde(default)]
    pub m: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub scrambling: ScramblingSpec,
    #[serde(default)]
    pub core: MatrixSpec,
    /// Custom pilots only: `n` rows of `l_t` `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<[f64; 2]>>>,
}

fn default_rho() -> f64 {
    1.0
}

fn parse_matrix(rows: &[Vec<[f64; 2]>]) -> Result<DMatrix<C64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("matrix rows have unequal length".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

impl PilotSpec {
    pub fn build(&self) -> Result<PilotMatrix> {
        let scrambling = match &self.scrambling {
            ScramblingSpec::Named(s) if s == "ones" => None,
            ScramblingSpec::Named(s) => {
                return Err(Error::Config(format!("unknown scrambling code '{s}'")))
            }
            ScramblingSpec::Explicit(v) => {
                Some(v.iter().map(|p| C64::new(p[0], p[1])).collect::<Vec<_>>())
            }
        };
        let core = match &self.core {
            MatrixSpec::Named(s) if s == "identity" => None,
            MatrixSpec::Named(s) => return Err(Error::Config(format!("unknown core '{s}'"))),
            MatrixSpec::Explicit(rows) => Some(parse_matrix(rows)?),
        };
        match self.structure {
            PilotStructure::Periodic => {
                PilotMatrix::periodic(self.l_t, self.m, self.rho, scrambling.as_deref(), core)
            }
            PilotStructure::TimeDivision => {
                if core.is_some() {
                    return Err(Error::Config("time-division pilots take no unitary core".into()));
                }
                PilotMatrix::time_division(self.l_t, self.m, self.rho, scrambling.as_deref())
            }
            PilotStructure::Custom => {
                let rows = self
                    .entries
                    .as_ref()
                    .ok_or_else(|| Error::Config("custom pilot needs `entries`".into()))?;
                let s = PilotMatrix::custom(parse_matrix(rows)?)?;
                if s.l_t() != self.l_t {
                    return Err(Error::Config(format!(
                        "custom pilot has {} columns but l_t = {}",
                        s.l_t(),
                        self.l_t
                    )));
                }
                s.with_power(self.rho)
            }
        }
    }
}
