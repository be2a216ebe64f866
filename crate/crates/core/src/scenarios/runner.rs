//! The daily loop of a twin experiment and its output files.
//!
//! For day `d` (the window `[d, d + 1]`):
//! 1. the policy updates contact bounds from the results of day `d - 1`;
//! 2. the day's contacts are sampled and recorded for tracing;
//! 3. the surrogate world advances to `d + 1`;
//! 4. tests, sensor readings and status data are stamped at `d + 1`;
//! 5. the ensemble is forecast with the day's contacts among living users (and updated after spin-up) over the window;
//! 6. users are classified from the ensemble at `d + 1` and scored.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::da::{da_cycle, forecast, init_ensemble, write_diagnostics_file, CycleDiagnostics};
use crate::error::{Error, Result};
use crate::kmc::{age_outcome_rates, init_world, write_daily_csv, DailyAggregate, DailyTracker, Health};
use crate::network::{generate_static_network, io as netio, sample_day_schedule, ActivityCache, ContactNetwork};
use crate::observations::{
    administer_tests, read_observations, select_participants, sensor_readings, status_observations,
    write_observations, ObservationKind, ObservationRecord,
};
use crate::riskmodel::{closure_band_fraction, estimate_prevalence, Ensemble, ModelContacts, Outcomes};
use crate::rng::{Purpose, Seeds};

use super::{
    baseline_contact_tracing, baseline_test_only, classify, default_thresholds, mean_infectious, roc_curve,
    select_user_base, truth_infectious, write_isolation_ledger, ClassificationResult, ContactHistory,
    IsolationRecord, PolicyInputs, PolicyState, RocPoint, ScenarioConfig, UserBase,
};

/// Closure coefficients with a smaller mean-field product are not scored.
pub const CLOSURE_MIN_DENOMINATOR: f64 = 1e-4;

/// One line of `daily.csv`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DailyRow {
    pub day: u32,
    pub susceptible: usize,
    pub exposed: usize,
    pub infectious: usize,
    pub hospitalized: usize,
    pub resistant: usize,
    pub deceased: usize,
    pub new_infections: u64,
    pub new_hospitalizations: u64,
    pub new_deaths: u64,
    pub isolated: usize,
    pub isolated_fraction: f64,
    pub lockdown: bool,
    pub tests: usize,
    pub positive_tests: usize,
    pub prevalence_estimate: f64,
    pub da_tpr: Option<f64>,
    pub da_ppf: Option<f64>,
    pub test_only_tpr: f64,
    pub test_only_ppf: f64,
    pub tracing_tpr: f64,
    pub tracing_ppf: f64,
    pub conservation_error: Option<f64>,
    /// Share of active-pair closure coefficients in [0.8, 1.2].
    pub closure_in_band: Option<f64>,
}

/// One line of `roc.csv`. Baselines have no threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub day: u32,
    /// `da`, `test_only` or `contact_tracing`.
    pub method: String,
    pub threshold: Option<f64>,
    pub ppf: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ReplicaResult {
    pub replica: u32,
    pub population: usize,
    pub users: usize,
    pub daily: Vec<DailyRow>,
    pub aggregates: Vec<DailyAggregate>,
    pub roc: Vec<RocRow>,
    pub ledger: Vec<IsolationRecord>,
    pub diagnostics: Vec<CycleDiagnostics>,
    pub observations: Vec<ObservationRecord>,
}

impl ReplicaResult {
    pub fn cumulative_deaths(&self) -> u64 {
        self.aggregates.last().map_or(0, |a| a.cumulative_deaths)
    }

    /// ROC curve of the DA classifier on `day`, descending thresholds.
    pub fn da_curve(&self, day: u32) -> Vec<RocPoint> {
        self.roc
            .iter()
            .filter(|r| r.day == day && r.method == "da")
            .map(|r| RocPoint {
                threshold: r.threshold.unwrap_or(f64::NAN),
                ppf: r.ppf,
                tpr: r.tpr,
            })
            .collect()
    }
}

fn outcomes_of(network: &ContactNetwork, users: &UserBase) -> Vec<Outcomes> {
    users
        .users()
        .iter()
        .map(|&u| {
            let band = network.nodes()[u].age_band.expect("users are people");
            let (h, d, d_prime) = age_outcome_rates(band);
            Outcomes { h, d, d_prime }
        })
        .collect()
}

/// Build or load the scenario's network.
pub fn scenario_network(config: &ScenarioConfig) -> Result<ContactNetwork> {
    match &config.network_file {
        Some(p) => netio::read_any(p),
        None => generate_static_network(&config.network, config.seed),
    }
}

/// Run one replica in memory on a copy of `base`.
pub fn run_replica(config: &ScenarioConfig, base: &ContactNetwork, replica: u32) -> Result<ReplicaResult> {
    let seeds = Seeds::new(config.seed, u64::from(replica));
    let mut net = base.clone();
    let users = select_user_base(
        &net,
        config.user_base.fraction,
        config.user_base.topology,
        &mut seeds.rng(Purpose::UserBase, 0),
    )?;
    users.annotate(&mut net);
    let n_users = users.len();
    let eligible = users.community_mask(&net);

    let mut world = init_world(&mut net, config.initial_fraction, config.world, &seeds)?;
    let mut tracker = DailyTracker::new(&world);

    let asm = &config.assimilation;
    let mut ensemble: Option<Ensemble> = if asm.enabled {
        Some(init_ensemble(outcomes_of(&net, &users), &asm.prior, asm.da.members, &seeds)?)
    } else {
        None
    };
    let mut cache = ActivityCache::new(net.mean_degree_community(), config.mu);

    let replay = match &config.replay_observations {
        Some(p) => Some(read_observations(p)?),
        None => None,
    };
    let participants = if config.sensors.enabled {
        select_participants(users.users(), config.sensors.participation, &mut seeds.rng(Purpose::Sensors, 0))
    } else {
        Vec::new()
    };
    let budget = (config.testing.rate * n_users as f64).round() as usize;
    let thresholds = default_thresholds(
        config.classification.roc_min_threshold,
        config.classification.roc_max_threshold,
        config.classification.roc_points,
    );

    let mut policy = PolicyState::new(config.policy.clone(), net.population());
    let mut history = ContactHistory::new(config.tracing.window_days, config.tracing.min_minutes, config.tracing.rule);
    let mut known_dead = vec![false; net.population()];
    let mut prev_flags: Option<Vec<bool>> = None;
    let mut prev_traced: Vec<usize> = Vec::new();

    let mut out = ReplicaResult {
        replica,
        population: net.population(),
        users: n_users,
        ..Default::default()
    };

    for day in 0..config.days {
        let t0 = f64::from(day);
        let t1 = t0 + 1.0;

        let changed = policy.apply(
            &mut net,
            &users,
            day,
            PolicyInputs {
                flags: prev_flags.as_deref(),
                tti_targets: &prev_traced,
            },
        )?;
        if let Some(ens) = ensemble.as_mut() {
            if changed || day == 0 {
                ens.set_exogenous(users.exogenous_weights(&net, &mut cache))?;
            }
        }

        let schedule = sample_day_schedule(&net, day, config.mu, &seeds);
        history.record_day(day, &net, &schedule, &users);

        world.run(&mut net, &schedule, t1, None)?;
        let agg = tracker.record(day, &world);
        let truth = world.health_slice();

        let prevalence = match &ensemble {
            Some(ens) => estimate_prevalence(ens, n_users),
            None => 1.0 / n_users.max(1) as f64,
        };
        let obs: Vec<ObservationRecord> = match &replay {
            Some(all) => all.iter().copied().filter(|o| o.day == day).collect(),
            None => {
                let mut obs = Vec::new();
                if config.sensors.enabled {
                    let mut rng = seeds.rng(Purpose::Sensors, u64::from(day) + 1);
                    obs.extend(sensor_readings(
                        truth,
                        &participants,
                        &config.sensors.assay,
                        prevalence,
                        config.sensors.keep_negative,
                        day,
                        t1,
                        &mut rng,
                    ));
                }
                let mut rng = seeds.rng(Purpose::Tests, u64::from(day));
                obs.extend(administer_tests(
                    truth,
                    users.users(),
                    budget,
                    &config.testing.assay,
                    prevalence,
                    day,
                    t1,
                    &mut rng,
                ));
                obs.extend(status_observations(truth, users.users(), day, t1));
                obs
            }
        };
        for o in &obs {
            if o.kind == ObservationKind::Deceased {
                known_dead[o.node as usize] = true;
            }
        }

        // Ward occupancy and deaths as of the window end, which the status
        // data report.
        let contacts = ensemble.as_ref().map(|_| {
            ModelContacts::from_schedule(
                &net,
                &schedule,
                users.index(),
                config.world.hospital_modifier,
                config.world.community_modifier,
                |p| !known_dead[p],
            )
        });
        let mut conservation = None;
        let mut closure = None;
        if let (Some(ens), Some(contacts)) = (ensemble.as_mut(), contacts.as_ref()) {
            if day >= asm.da.spin_up_days {
                let diag = da_cycle(
                    ens,
                    contacts,
                    t0,
                    &obs,
                    users.index(),
                    &asm.da,
                    &asm.prior,
                    &asm.integrator,
                    day,
                    &seeds,
                )?;
                out.diagnostics.push(diag);
            } else {
                forecast(ens, contacts, t0, t1, 1, &asm.integrator)?;
            }
            conservation = Some(ens.max_conservation_error());
            let mut active = Vec::new();
            contacts.step_weights(t0, t1, &mut active);
            closure = closure_band_fraction(ens, &active, 0.8, 1.2, CLOSURE_MIN_DENOMINATOR);
        }

        let infectious = truth_infectious(truth, &users);
        let test_only = baseline_test_only(&obs, &users, &eligible, &infectious);
        let tracing = baseline_contact_tracing(&obs, &history, &users, &eligible, &infectious);
        let da: Option<ClassificationResult> = ensemble.as_ref().map(|ens| {
            let mean_i = mean_infectious(ens);
            let write_roc =
                config.classification.roc_days.is_empty() || config.classification.roc_days.contains(&day);
            if write_roc {
                for p in roc_curve(&mean_i, &eligible, &infectious, &thresholds) {
                    out.roc.push(RocRow {
                        day,
                        method: "da".into(),
                        threshold: Some(p.threshold),
                        ppf: p.ppf,
                        tpr: p.tpr,
                    });
                }
            }
            classify(&mean_i, &eligible, &infectious, config.classification.threshold)
        });
        for (method, r) in [("test_only", &test_only), ("contact_tracing", &tracing)] {
            out.roc.push(RocRow {
                day,
                method: method.into(),
                threshold: None,
                ppf: r.ppf,
                tpr: r.tpr,
            });
        }

        let counts = world.counts();
        let tests: Vec<&ObservationRecord> = obs.iter().filter(|o| o.fidelity == crate::observations::Fidelity::Medium).collect();
        out.daily.push(DailyRow {
            day,
            susceptible: counts[Health::S.index()],
            exposed: counts[Health::E.index()],
            infectious: counts[Health::I.index()],
            hospitalized: counts[Health::H.index()],
            resistant: counts[Health::R.index()],
            deceased: counts[Health::D.index()],
            new_infections: agg.new_infections,
            new_hospitalizations: agg.new_hospitalizations,
            new_deaths: agg.new_deaths,
            isolated: policy.isolated_count(),
            isolated_fraction: policy.isolated_count() as f64 / net.population() as f64,
            lockdown: policy.lockdown_on(),
            tests: tests.len(),
            positive_tests: tests.iter().filter(|o| o.kind == ObservationKind::TestPositive).count(),
            prevalence_estimate: prevalence,
            da_tpr: da.as_ref().map(|r| r.tpr),
            da_ppf: da.as_ref().map(|r| r.ppf),
            test_only_tpr: test_only.tpr,
            test_only_ppf: test_only.ppf,
            tracing_tpr: tracing.tpr,
            tracing_ppf: tracing.ppf,
            conservation_error: conservation,
            closure_in_band: closure,
        });

        if let Some(row) = out.daily.last() {
            log::debug!(
                "replica {replica} day {day}: I={} D={} isolated={} estimate={:.4}",
                row.infectious,
                row.deceased,
                row.isolated,
                row.prevalence_estimate
            );
        }
        prev_traced = (0..n_users).filter(|&k| tracing.flags[k]).collect();
        prev_flags = da.map(|r| r.flags);
        if config.output.write_observations {
            out.observations.extend(obs);
        }
    }

    out.aggregates = tracker.rows().to_vec();
    out.ledger = policy.ledger().to_vec();
    Ok(out)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a replica's CSV files into `dir`.
/// Read a `roc.csv` written by [`write_replica`].
pub fn read_roc_csv(path: &Path) -> Result<Vec<RocRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<RocRow>, _>>()?;
    Ok(rows)
}

pub fn write_replica(dir: &Path, result: &ReplicaResult, write_obs: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_rows(&dir.join("daily.csv"), &result.daily)?;
    write_daily_csv(&dir.join("daily_per_100k.csv"), &result.aggregates, result.population)?;
    write_rows(&dir.join("roc.csv"), &result.roc)?;
    write_isolation_ledger(&dir.join("isolation.csv"), &result.ledger)?;
    write_diagnostics_file(&dir.join("da_diagnostics.csv"), &result.diagnostics)?;
    if write_obs {
        write_observations(&dir.join("observations.csv"), &result.observations)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaStatus {
    pub replica: u32,
    pub seed: u64,
    pub directory: String,
    pub status: String,
    pub error: Option<String>,
    pub cumulative_deaths: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub tool_version: String,
    pub config_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub population: Option<usize>,
    pub status: String,
    pub error: Option<String>,
    pub replicas: Vec<ReplicaStatus>,
}

impl Manifest {
    /// Read `manifest.json` from a run directory.
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut f, manifest)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn replica_dir(out_dir: &Path, replica: u32) -> PathBuf {
    out_dir.join(format!("replica_{replica:03}"))
}

/// Run every replica in parallel and write all outputs under `out_dir`.
/// The manifest is written even when a replica fails; the first error is
/// returned afterwards.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = Manifest {
        name: config.name.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_version: config.version,
        config_hash: config.hash()?,
        seed: config.seed,
        population: None,
        status: "ok".into(),
        error: None,
        replicas: Vec::new(),
    };
    std::fs::write(out_dir.join("config.toml"), config.to_toml()?)?;
    let net = match scenario_network(config) {
        Ok(n) => n,
        Err(e) => {
            manifest.status = "error".into();
            manifest.error = Some(e.to_string());
            write_manifest(out_dir, &manifest)?;
            return Err(e);
        }
    };
    manifest.population = Some(net.population());

    let results: Vec<(u32, Result<u64>)> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let res = run_replica(config, &net, r).and_then(|res| {
                write_replica(&replica_dir(out_dir, r), &res, config.output.write_observations)?;
                Ok(res.cumulative_deaths())
            });
            (r, res)
        })
        .collect();

    let mut first_err: Option<Error> = None;
    for (r, res) in results {
        let dir = replica_dir(out_dir, r).file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut status = ReplicaStatus {
            replica: r,
            seed: config.seed,
            directory: dir,
            status: "ok".into(),
            error: None,
            cumulative_deaths: None,
        };
        match res {
            Ok(deaths) => status.cumulative_deaths = Some(deaths),
            Err(e) => {
                log::warn!("replica {r} failed: {e}");
                status.status = "error".into();
                status.error = Some(e.to_string());
                if first_err.is_none() {
                    manifest.status = "error".into();
                    manifest.error = Some(format!("replica {r}: {e}"));
                    first_err = Some(e);
                }
            }
        }
        manifest.replicas.push(status);
    }
    write_manifest(out_dir, &manifest)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}
