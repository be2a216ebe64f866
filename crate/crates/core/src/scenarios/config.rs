//! Declarative scenario description, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::da::{DAConfig, PriorSpec};
use crate::error::{Error, Result};
use crate::kmc::WorldParams;
use crate::network::{NetworkConfig, DEFAULT_DEACTIVATION_RATE};
use crate::observations::AssaySpec;
use crate::riskmodel::IntegratorConfig;

use super::{InterventionPolicy, PolicyKind, Topology, TracingRule};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserBaseConfig {
    pub fraction: f64,
    pub topology: Topology,
}

impl Default for UserBaseConfig {
    fn default() -> Self {
        Self {
            fraction: 1.0,
            topology: Topology::Neighbor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestingConfig {
    /// Daily test budget as a fraction `f` of the user base.
    pub rate: f64,
    pub assay: AssaySpec,
}

impl Default for TestingConfig {
    fn default() -> Self {
        Self {
            rate: 0.05,
            assay: AssaySpec::DIAGNOSTIC,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub enabled: bool,
    /// Fraction of users wearing a sensor.
    pub participation: f64,
    pub assay: AssaySpec,
    pub keep_negative: bool,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            participation: 0.75,
            assay: AssaySpec::SENSOR,
            keep_negative: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssimilationConfig {
    /// Without assimilation no ensemble is kept and only the baselines are scored.
    pub enabled: bool,
    pub da: DAConfig,
    pub prior: PriorSpec,
    pub integrator: IntegratorConfig,
}

impl Default for AssimilationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            da: DAConfig::default(),
            prior: PriorSpec::default(),
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationConfig {
    /// `c_I`.
    pub threshold: f64,
    /// Days whose full ROC curve is written; empty means every day.
    pub roc_days: Vec<u32>,
    pub roc_min_threshold: f64,
    pub roc_max_threshold: f64,
    pub roc_points: usize,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            threshold: 0.01,
            roc_days: Vec::new(),
            roc_min_threshold: 1e-4,
            roc_max_threshold: 0.5,
            roc_points: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracingConfig {
    pub window_days: u32,
    pub min_minutes: f64,
    pub rule: TracingRule,
}

impl Default for TracingConfig {
    fn default() -> Self {
        Self {
            window_days: 10,
            min_minutes: 15.0,
            rule: TracingRule::DailyCumulative,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub write_observations: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub replicas: u32,
    pub days: u32,
    /// Edge deactivation rate μ, day⁻¹.
    pub mu: f64,
    pub network: NetworkConfig,
    /// Load the network from this file instead of generating it.
    pub network_file: Option<PathBuf>,
    pub world: WorldParams,
    pub initial_fraction: f64,
    pub user_base: UserBaseConfig,
    pub testing: TestingConfig,
    pub sensors: SensorConfig,
    pub assimilation: AssimilationConfig,
    pub classification: ClassificationConfig,
    pub policy: InterventionPolicy,
    pub tracing: TracingConfig,
    pub output: OutputConfig,
    /// Observation CSV to assimilate instead of generating data.
    pub replay_observations: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            name: "scenario".into(),
            seed: 1,
            replicas: 1,
            days: 90,
            mu: DEFAULT_DEACTIVATION_RATE,
            network: NetworkConfig::default(),
            network_file: None,
            world: WorldParams::default(),
            initial_fraction: 0.0016,
            user_base: UserBaseConfig::default(),
            testing: TestingConfig::default(),
            sensors: SensorConfig::default(),
            assimilation: AssimilationConfig::default(),
            classification: ClassificationConfig::default(),
            policy: InterventionPolicy::default(),
            tracing: TracingConfig::default(),
            output: OutputConfig::default(),
            replay_observations: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate a config file. Relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.network_file, &mut cfg.replay_observations].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical TOML serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.version != CONFIG_VERSION {
            return bad(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        if self.replicas == 0 || self.days == 0 {
            return bad("replicas and days must be at least 1".into());
        }
        if !(self.mu > 0.0) {
            return bad(format!("deactivation rate {} must be positive", self.mu));
        }
        if !(0.0..=1.0).contains(&self.initial_fraction) {
            return bad(format!("initial fraction {} must lie in [0, 1]", self.initial_fraction));
        }
        if !(self.user_base.fraction > 0.0 && self.user_base.fraction <= 1.0) {
            return bad(format!("user base fraction {} must lie in (0, 1]", self.user_base.fraction));
        }
        if !(0.0..=1.0).contains(&self.testing.rate) {
            return bad(format!("test rate {} must lie in [0, 1]", self.testing.rate));
        }
        self.testing.assay.validate()?;
        if self.sensors.enabled {
            self.sensors.assay.validate()?;
            if !(0.0..=1.0).contains(&self.sensors.participation) {
                return bad(format!("sensor participation {} must lie in [0, 1]", self.sensors.participation));
            }
        }
        if self.assimilation.enabled {
            self.assimilation.da.validate()?;
            self.assimilation.prior.validate()?;
        }
        let c = &self.classification;
        if !(0.0..=1.0).contains(&c.threshold) {
            return bad(format!("classification threshold {} must lie in [0, 1]", c.threshold));
        }
        if !(c.roc_min_threshold > 0.0 && c.roc_min_threshold < c.roc_max_threshold) || c.roc_points < 2 {
            return bad("ROC threshold grid needs 0 < min < max and at least 2 points".into());
        }
        self.policy.validate()?;
        if self.policy.kind == PolicyKind::DaIsolation && !self.assimilation.enabled {
            return bad("da_isolation needs assimilation enabled".into());
        }
        if self.tracing.window_days == 0 || !(self.tracing.min_minutes >= 0.0) {
            return bad("tracing window must be at least one day and the duration non-negative".into());
        }
        Ok(())
    }
}
