//! Experiment description, loaded from TOML.

use crate::chain_sim::PowerSave;
use crate::detectors::{Detector, EstimateVector, StepSize};
use crate::interconnect::{self, FrameConfig, RateScenario};
use crate::rng::{derive_seed, stream};
use crate::signal_model::QamOrder;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MseSweep,
    BerSweep,
    RateTable,
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Zf,
    Rls,
    Sgd,
    Asgd,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Zero,
    Random,
}

/// One detector configuration of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    /// Constant step size (SGD, ASGD).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Per-antenna step sizes; overrides `mu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    /// Averaging onset (ASGD).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    #[serde(default)]
    pub init: InitMode,
    /// Only used by `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_save: Option<PowerSave>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl AlgorithmSpec {
    pub fn new(kind: AlgorithmKind) -> Self {
        Self {
            kind,
            mu: None,
            schedule: None,
            n0: None,
            init: InitMode::Zero,
            power_save: None,
            label: None,
        }
    }

    pub fn zf() -> Self {
        Self::new(AlgorithmKind::Zf)
    }

    pub fn rls() -> Self {
        Self::new(AlgorithmKind::Rls)
    }

    pub fn sgd(mu: f64) -> Self {
        Self {
            mu: Some(mu),
            ..Self::new(AlgorithmKind::Sgd)
        }
    }

    pub fn asgd(mu: f64, n0: usize) -> Self {
        Self {
            mu: Some(mu),
            n0: Some(n0),
            ..Self::new(AlgorithmKind::Asgd)
        }
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mu = match (&self.schedule, self.mu) {
            (Some(_), _) => "_sched".to_string(),
            (None, Some(mu)) => format!("_mu{mu}"),
            (None, None) => String::new(),
        };
        match self.kind {
            AlgorithmKind::Zf => "zf".into(),
            AlgorithmKind::Rls => "rls".into(),
            AlgorithmKind::Sgd => format!("sgd{mu}"),
            AlgorithmKind::Asgd => format!("asgd{mu}_n0{}", self.n0.unwrap_or(0)),
        }
    }

    fn step(&self) -> Result<StepSize> {
        let step = match (&self.schedule, self.mu) {
            (Some(s), _) => StepSize::Schedule(s.clone()),
            (None, Some(mu)) => StepSize::Constant(mu),
            (None, None) => {
                return Err(Error::Config(format!(
                    "{} needs `mu` or `schedule`",
                    self.label()
                )))
            }
        };
        step.validate()?;
        Ok(step)
    }

    /// The recursive detector, or `None` for ZF.
    pub fn detector(&self) -> Result<Option<Detector>> {
        Ok(match self.kind {
            AlgorithmKind::Zf => None,
            AlgorithmKind::Rls => Some(Detector::Rls),
            AlgorithmKind::Sgd => Some(Detector::Sgd { step: self.step()? }),
            AlgorithmKind::Asgd => {
                let n0 = self
                    .n0
                    .ok_or_else(|| Error::Config(format!("{} needs `n0`", self.label())))?;
                let d = Detector::Asgd {
                    step: self.step()?,
                    n0,
                };
                d.validate()?;
                Some(d)
            }
        })
    }

    pub fn initial_estimate(&self, k: usize, master_seed: u64, trial: u64) -> EstimateVector {
        match self.init {
            InitMode::Zero => EstimateVector::zeros(k),
            InitMode::Random => {
                EstimateVector::random(k, derive_seed(master_seed, &[trial, stream::INIT]))
            }
        }
    }
}

/// Array geometry; `c` defaults to one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub m: usize,
    pub k: usize,
    #[serde(default = "one")]
    pub c: usize,
}

fn one() -> usize {
    1
}

/// Tick costs for the chain simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSpec {
    pub re_cost: u64,
    pub prep_cost: u64,
}

impl Default for TimingSpec {
    fn default() -> Self {
        Self {
            re_cost: 1,
            prep_cost: 0,
        }
    }
}

/// Rate-table column; the frame comes from the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub m: usize,
    pub k: usize,
    pub c: usize,
    #[serde(default = "three")]
    pub n_iter: u32,
}

fn three() -> u32 {
    3
}

/// Full description of one run. Every field maps to a config key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub frame: FrameConfig,
    /// Rate-table columns; empty means the four reference configurations.
    #[serde(default)]
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmSpec>,
    /// SNR grid in dB; `inf` gives the noiseless model.
    #[serde(default = "default_snr")]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_order")]
    pub constellation: QamOrder,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Resource elements per channel draw (BER sweep, simulate).
    #[serde(default = "default_res")]
    pub res_per_block: usize,
    /// BER early stop once every algorithm has this many bit errors.
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    #[serde(default)]
    pub timing: TimingSpec,
}

fn default_snr() -> Vec<f64> {
    vec![12.0]
}
fn default_order() -> QamOrder {
    QamOrder::try_from(16).expect("16 is supported")
}
fn default_trials() -> usize {
    1000
}
fn default_res() -> usize {
    10
}
fn default_min_errors() -> u64 {
    500
}

impl ExperimentSpec {
    /// A spec of `kind` with every optional field at its default.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            topology: None,
            frame: FrameConfig::default(),
            scenarios: Vec::new(),
            algorithms: Vec::new(),
            snr_db: default_snr(),
            constellation: default_order(),
            trials: default_trials(),
            seed: 0,
            res_per_block: default_res(),
            min_errors: default_min_errors(),
            timing: TimingSpec::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn topology(&self) -> Result<TopologySpec> {
        self.topology
            .ok_or_else(|| Error::Config("`topology` (m, k) is required".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.res_per_block == 0 {
            return Err(Error::Config("res_per_block must be >= 1".into()));
        }
        if self
            .snr_db
            .iter()
            .any(|s| s.is_nan() || *s == f64::NEG_INFINITY)
        {
            return Err(Error::Config("SNR values must be numbers or +inf".into()));
        }
        self.frame.validate()?;
        match self.kind {
            ExperimentKind::RateTable => {
                self.rate_scenarios()?;
            }
            kind => {
                let t = self.topology()?;
                if t.k == 0 || t.m < t.k {
                    return Err(Error::Config(format!(
                        "topology needs m >= k >= 1, got m = {}, k = {}",
                        t.m, t.k
                    )));
                }
                if self.algorithms.is_empty() {
                    return Err(Error::Config("at least one algorithm is required".into()));
                }
                if self.snr_db.is_empty() {
                    return Err(Error::Config("snr_db must not be empty".into()));
                }
                for a in &self.algorithms {
                    a.detector()?;
                    if let Some(ps) = a.power_save {
                        if ps.threshold.is_nan() || ps.threshold < 0.0 {
                            return Err(Error::Config("power_save.threshold must be >= 0".into()));
                        }
                    }
                }
                if kind == ExperimentKind::Simulate {
                    crate::chain_sim::TopologyConfig::new(t.m, t.k, t.c)?;
                }
            }
        }
        Ok(())
    }

    pub fn rate_scenarios(&self) -> Result<Vec<RateScenario>> {
        if self.scenarios.is_empty() {
            return Ok(interconnect::reference_scenarios()
                .into_iter()
                .map(|s| RateScenario {
                    frame: self.frame,
                    ..s
                })
                .collect());
        }
        self.scenarios
            .iter()
            .map(|s| RateScenario::new(self.frame, s.m, s.k, s.c, s.n_iter))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let spec = ExperimentSpec::from_toml_str(
            r#"
            kind = "mse_sweep"
            trials = 10
            seed = 42
            snr_db = [12.0, inf]
            constellation = 64

            [topology]
            m = 32
            k = 4

            [[algorithms]]
            kind = "sgd"
            mu = 0.04

            [[algorithms]]
            kind = "asgd"
            mu = 0.02
            n0 = 10
            init = "random"

            [[algorithms]]
            kind = "rls"
            power_save = { policy = "freeze", threshold = 0.1 }
            "#,
        )
        .unwrap();
        assert_eq!(spec.algorithms.len(), 3);
        assert_eq!(spec.algorithms[1].label(), "asgd_mu0.02_n010");
        assert_eq!(spec.snr_db[1], f64::INFINITY);
        assert_eq!(spec.topology.unwrap().c, 1);
        let echo = ExperimentSpec::from_toml_str(&spec.to_toml_string().unwrap()).unwrap();
        assert_eq!(echo, spec);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = ExperimentSpec::from_toml_str("kind = \"rate_table\"\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = ExperimentSpec::from_toml_str(
            "kind = \"rate_table\"\n[frame]\nt_slot = 1e-3\nwidth = 3\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("width"), "{err}");
    }

    #[test]
    fn validation() {
        assert!(ExperimentSpec::from_toml_str("kind = \"mse_sweep\"\n").is_err());
        assert!(ExperimentSpec::from_toml_str(
            "kind = \"ber_sweep\"\nsnr_db = []\n[topology]\nm = 8\nk = 2\n[[algorithms]]\nkind = \"zf\"\n"
        )
        .is_err());
        assert!(ExperimentSpec::from_toml_str(
            "kind = \"mse_sweep\"\ntrials = 0\n[topology]\nm = 8\nk = 2\n[[algorithms]]\nkind = \"zf\"\n"
        )
        .is_err());
        assert!(ExperimentSpec::from_toml_str(
            "kind = \"mse_sweep\"\n[topology]\nm = 8\nk = 2\n[[algorithms]]\nkind = \"sgd\"\n"
        )
        .is_err());
        assert!(ExperimentSpec::from_toml_str(
            "kind = \"simulate\"\n[topology]\nm = 10\nk = 2\nc = 4\n[[algorithms]]\nkind = \"rls\"\n"
        )
        .is_err());
        assert!(
            ExperimentSpec::from_toml_str("kind = \"mse_sweep\"\nconstellation = 8\n").is_err()
        );
    }

    #[test]
    fn default_rate_table_uses_reference_scenarios() {
        let spec = ExperimentSpec::from_toml_str("kind = \"rate_table\"\n").unwrap();
        let s = spec.rate_scenarios().unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!((s[3].m, s[3].k, s[3].c, s[3].b), (1024, 128, 16, 64));
    }
}
