use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{CfoPrior, ChannelSpec, CorrelationModel, MeanSpec, SpatialSpec};
use crate::estimator::UniversalOptions;
use crate::pilots::{MatrixSpec, PilotMatrix, PilotSpec, PilotStructure, ScramblingSpec};
use crate::{Error, Result};

/// CFO prior as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub mu_f: f64,
    pub sigma_f_sq: f64,
    /// Ignore `sigma_f_sq` and estimate by maximum likelihood.
    pub ml: bool,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            mu_f: 0.1,
            sigma_f_sq: 1e-5,
            ml: false,
        }
    }
}

impl PriorSpec {
    pub fn build(&self) -> Result<CfoPrior> {
        if self.ml {
            if !self.mu_f.is_finite() {
                return Err(Error::Config("mu_f must be finite".into()));
            }
            Ok(CfoPrior::ml(self.mu_f))
        } else {
            CfoPrior::gaussian(self.mu_f, self.sigma_f_sq)
        }
    }
}

/// Sweep grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub rho_h: Vec<f64>,
    pub snr_db: Vec<f64>,
    /// Pilot structures compared by `bounds-vs-rho`.
    pub pilots: Vec<PilotStructure>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            rho_h: vec![1.0],
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            pilots: vec![PilotStructure::Periodic, PilotStructure::TimeDivision],
        }
    }
}

/// How the true offset of each Monte-Carlo trial is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMode {
    /// Drawn from the prior (fixed at the prior mean in ML mode).
    #[default]
    Prior,
    /// Always the prior mean.
    Fixed,
}

/// One experiment, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: u32,
    pub out: Option<PathBuf>,
    pub l_r: usize,
    /// Optional cross-check of the pilot length `m * l_t`.
    pub n: Option<usize>,
    pub noiseless: bool,
    pub truth: TruthMode,
    pub pilot: PilotSpec,
    pub channel: ChannelSpec,
    pub prior: PriorSpec,
    pub sweep: SweepSpec,
    pub estimator: UniversalOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            trials: 2000,
            out: None,
            l_r: 4,
            n: None,
            noiseless: false,
            truth: TruthMode::Prior,
            pilot: PilotSpec {
                structure: PilotStructure::Periodic,
                l_t: 4,
                m: 5,
                rho: 1.0,
                scrambling: ScramblingSpec::default(),
                core: MatrixSpec::default(),
                entries: None,
            },
            channel: ChannelSpec {
                spatial: SpatialSpec::Identity { variance: 1.0 },
                mean: MeanSpec::Zero,
            },
            prior: PriorSpec::default(),
            sweep: SweepSpec::default(),
            estimator: UniversalOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    /// Checks grids, counts and dimensions, and that every model builds.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.l_r == 0 {
            return Err(Error::Config("l_r must be at least 1".into()));
        }
        if self.sweep.rho_h.is_empty() || self.sweep.snr_db.is_empty() {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        if let Some(bad) = self.sweep.rho_h.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Config(format!("rho_h = {bad} is outside [0, 1]")));
        }
        if self.sweep.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR values must be finite".into()));
        }
        let pilot = self.pilot.build()?;
        if let Some(n) = self.n {
            if n != pilot.n() {
                return Err(Error::Config(format!(
                    "n = {n} does not match the pilot length {}",
                    pilot.n()
                )));
            }
        }
        self.prior.build()?;
        self.channel.build(pilot.l_t(), self.l_r, self.sweep.rho_h[0])?;
        if self.estimator.epsilon.is_nan() || self.estimator.epsilon <= 0.0 {
            return Err(Error::Config("estimator epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn pilot_matrix(&self) -> Result<PilotMatrix> {
        self.pilot.build()
    }

    pub fn cfo_prior(&self) -> Result<CfoPrior> {
        self.prior.build()
    }

    pub fn channel_model(&self, rho_h: f64) -> Result<CorrelationModel> {
        self.channel.build(self.pilot.l_t, self.l_r, rho_h)
    }

    /// Pilot power for a given SNR, with `SNR = rho * sigma_h^2` and unit
    /// noise; `sigma_h^2` is the average per-coefficient channel power.
    pub fn pilot_power(&self, snr_db: f64) -> Result<f64> {
        let model = self.channel_model(self.sweep.rho_h[0])?;
        let dim = model.spatial_cov().nrows();
        let power = (0..dim)
            .map(|i| model.spatial_cov()[(i, i)].re + model.mean()[i].norm_sqr())
            .sum::<f64>()
            / dim as f64;
        if power.is_nan() || power <= 0.0 {
            return Err(Error::Config("channel has zero power".into()));
        }
        Ok(10f64.powf(snr_db / 10.0) / power)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_setup() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let pilot = cfg.pilot_matrix().unwrap();
        assert_eq!((pilot.l_t(), pilot.n(), cfg.l_r), (4, 20, 4));
        let prior = cfg.cfo_prior().unwrap();
        assert_eq!(prior.mean, 0.1);
        assert!((prior.variance() - 1e-5).abs() < 1e-20);
        assert!((cfg.pilot_power(20.0).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn parses_nested_sections() {
        let text = r#"
            seed = 9
            trials = 50
            l_r = 2
            n = 8

            [pilot]
            structure = "td"
            l_t = 2
            m = 4

            [channel.spatial]
            kind = "exponential"
            a = 0.5
            b = 0.5

            [channel.mean]
            kind = "rician"
            k_factor = 1.0

            [prior]
            ml = true
            mu_f = 0.0

            [sweep]
            rho_h = [0.9, 0.99]
            snr_db = [10.0]

            [estimator]
            max_iter = 5
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert!(cfg.cfo_prior().unwrap().is_ml());
        assert_eq!(cfg.estimator.max_iter, 5);
        assert_eq!(cfg.estimator.epsilon, 1e-10);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "trials = 0",
            "[sweep]\nrho_h = []",
            "[sweep]\nrho_h = [1.5]",
            "n = 7",
            "[prior]\nsigma_f_sq = -1.0",
            "unknown_key = 3",
        ];
        for text in bad {
            assert!(
                matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_)) | Err(Error::Parameter(_))),
                "accepted: {text}"
            );
        }
    }
}
