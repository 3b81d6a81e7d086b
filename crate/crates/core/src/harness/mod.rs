//! Configuration, solver assembly, experiment orchestration and results
//! output.

mod experiment;
mod results;

pub use experiment::{run_experiment, ExperimentId, ExperimentOutput, ExperimentPlan, Sweep};
pub use results::{read_results_csv, summarize, write_outputs, write_results_csv, ResultsRow, SummaryRow, TraceRow};

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::compression::{CachedSolver, DqnConfig, ExhaustiveSolver, P1Solver, PolicySolver, QPolicy};
use crate::error::{Error, Result};
use crate::matching::MatchingConfig;
use crate::netmodel::ScenarioConfig;
use crate::semantics::{fit_fidelity, synth_table, FidelityTable, FitConfig, FitReport, SynthParams, TaskKind, TaskModels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backing {
    /// Multilinear interpolation of the tables.
    #[default]
    Table,
    /// MLPs fitted to the tables.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelityConfig {
    pub synth: SynthParams,
    pub epsilon: f64,
    /// CSV tables replacing the synthetic ones.
    pub single_table: Option<PathBuf>,
    pub bimodal_table: Option<PathBuf>,
    pub backing: Backing,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        FidelityConfig {
            synth: SynthParams::default(),
            epsilon: 0.05,
            single_table: None,
            bimodal_table: None,
            backing: Backing::Table,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Exhaustive,
    Dqn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Trained policies, required when `kind = "dqn"`.
    pub single_policy: Option<PathBuf>,
    pub bimodal_policy: Option<PathBuf>,
    /// SINR bin width of the P1 cache used inside matching; `None` disables it.
    pub cache_step_db: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Exhaustive,
            single_policy: None,
            bimodal_policy: None,
            cache_step_db: Some(CachedSolver::<ExhaustiveSolver>::DEFAULT_STEP_DB),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub drops: usize,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    /// Record wall time per method; off keeps outputs byte-identical.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { drops: 20, threads: None, timing: false }
    }
}

/// Everything a run needs, loadable from one TOML or JSON file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub fidelity: FidelityConfig,
    pub solver: SolverConfig,
    pub matching: MatchingConfig,
    pub dqn: DqnConfig,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    /// Reads `.json` as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if !(self.fidelity.epsilon > 0.0 && self.fidelity.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {} not in (0,1)", self.fidelity.epsilon)));
        }
        if self.experiment.drops == 0 {
            return Err(Error::Config("drop count must be at least 1".into()));
        }
        if self.experiment.threads == Some(0) {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        if !(self.matching.delta >= 0.0) {
            return Err(Error::Config("matching delta must be nonnegative".into()));
        }
        if self.solver.kind == SolverKind::Dqn && (self.solver.single_policy.is_none() || self.solver.bimodal_policy.is_none()) {
            return Err(Error::Config("dqn solver needs single_policy and bimodal_policy".into()));
        }
        Ok(())
    }
}

/// Fidelity tables, task models and the two P1 solvers of a run.
pub struct Toolkit {
    pub single_table: FidelityTable,
    pub bimodal_table: FidelityTable,
    pub models: Arc<TaskModels>,
    /// Chooses and scores final budgets.
    pub exact: Arc<dyn P1Solver>,
    /// Drives matching utilities; `exact` behind the P1 cache.
    pub matching: Arc<dyn P1Solver>,
    pub fit_reports: Vec<FitReport>,
}

pub fn load_tables(cfg: &FidelityConfig) -> Result<(FidelityTable, FidelityTable)> {
    let load = |path: &Option<PathBuf>, kind: TaskKind| -> Result<FidelityTable> {
        match path {
            Some(p) => {
                let t = FidelityTable::read_csv(fs::File::open(p)?)?;
                if t.kind() != kind {
                    return Err(Error::Table(format!("{} holds a {:?} table", p.display(), t.kind())));
                }
                Ok(t)
            }
            None => synth_table(kind, &cfg.synth),
        }
    };
    Ok((load(&cfg.single_table, TaskKind::SingleText)?, load(&cfg.bimodal_table, TaskKind::BimodalVqa)?))
}

impl Toolkit {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let (single_table, bimodal_table) = load_tables(&cfg.fidelity)?;
        let mut models = TaskModels::from_tables(
            single_table.clone(),
            bimodal_table.clone(),
            cfg.fidelity.epsilon,
            cfg.scenario.bandwidth_hz,
        )?;
        let mut fit_reports = Vec::new();
        if cfg.fidelity.backing == Backing::Mlp {
            let (s, rs) = fit_fidelity(&single_table, &FitConfig::for_kind(TaskKind::SingleText))?;
            let (b, rb) = fit_fidelity(&bimodal_table, &FitConfig::for_kind(TaskKind::BimodalVqa))?;
            models.single = s;
            models.bimodal = b;
            fit_reports = vec![rs, rb];
        }
        let models = Arc::new(models);
        let exact: Arc<dyn P1Solver> = match cfg.solver.kind {
            SolverKind::Exhaustive => Arc::new(ExhaustiveSolver::new(models.clone())),
            SolverKind::Dqn => {
                let read = |p: &Option<PathBuf>| -> Result<QPolicy> {
                    let p = p.as_ref().ok_or_else(|| Error::Config("missing policy path".into()))?;
                    QPolicy::from_json(&fs::read_to_string(p)?)
                };
                Arc::new(PolicySolver::new(models.clone(), read(&cfg.solver.single_policy)?, read(&cfg.solver.bimodal_policy)?)?)
            }
        };
        let matching: Arc<dyn P1Solver> = Arc::new(CachedSolver::new(exact.clone(), cfg.solver.cache_step_db));
        Ok(Toolkit { single_table, bimodal_table, models, exact, matching, fit_reports })
    }

    pub fn solvers(&self) -> crate::baselines::Solvers<'_> {
        crate::baselines::Solvers { matching: &*self.matching, exact: &*self.exact }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 9\n[scenario]\nchannels = 4\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scenario.channels, 4);
        assert_eq!(cfg.scenario.n_single, 6);
        assert_eq!(cfg.experiment.drops, 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[scenario]\nchanels = 4\n").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.experiment.drops = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.solver.kind = SolverKind::Dqn;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_config_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"seed": 3, "experiment": {"drops": 2}}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!((cfg.seed, cfg.experiment.drops), (3, 2));
    }

    #[test]
    fn toolkit_uses_csv_tables_when_given() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        let (s, b) = load_tables(&cfg.fidelity).unwrap();
        let (ps, pb) = (dir.path().join("s.csv"), dir.path().join("b.csv"));
        s.write_csv(fs::File::create(&ps).unwrap()).unwrap();
        b.write_csv(fs::File::create(&pb).unwrap()).unwrap();
        cfg.fidelity.single_table = Some(ps.clone());
        cfg.fidelity.bimodal_table = Some(pb);
        let kit = Toolkit::build(&cfg).unwrap();
        assert_eq!(kit.single_table, s);
        cfg.fidelity.bimodal_table = Some(ps);
        assert!(Toolkit::build(&cfg).is_err());
    }
}
