//! User bases, risk classification, baselines, contact interventions and
//! the scenario runner that ties the other modules into a twin experiment.

mod classify;
mod config;
mod policy;
mod runner;
mod userbase;

pub use classify::{
    baseline_contact_tracing, baseline_test_only, classify, default_thresholds, mean_infectious, randomized_tpr,
    roc_curve, score,
    tpr_at_ppf, truth_infectious, ClassificationResult, ContactHistory, RocPoint, TracingRule,
};
pub use config::{
    AssimilationConfig, ClassificationConfig, OutputConfig, ScenarioConfig, SensorConfig, TestingConfig,
    TracingConfig, UserBaseConfig, CONFIG_VERSION,
};
pub use policy::{
    write_isolation_ledger, InterventionPolicy, IsolationReason, IsolationRecord, PolicyInputs, PolicyKind,
    PolicyState,
};
pub use runner::{
    read_roc_csv, replica_dir, run_replica, CLOSURE_MIN_DENOMINATOR, run_scenario, scenario_network, write_replica, DailyRow, Manifest, ReplicaResult,
    ReplicaStatus, RocRow,
};
pub use userbase::{select_user_base, Topology, UserBase};
