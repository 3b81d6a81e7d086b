use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::results::{ResultsRow, TraceRow};
use super::{RunConfig, Toolkit};
use crate::baselines::{run_methods, Method};
use crate::error::{Error, Result};
use crate::netmodel::{generate_scenario, ScenarioConfig};
use crate::semantics::{fit_fidelity, FitConfig, FitReport, TaskKind};
use crate::solution::{audit_constraints, Criterion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Fit,
    GThSweep,
    AlgoCompare,
    ConventionalCompare,
    Cooperation,
    SettingsSweep,
    CoexistenceQoe,
    CoexistenceSr,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::Fit,
        ExperimentId::GThSweep,
        ExperimentId::AlgoCompare,
        ExperimentId::ConventionalCompare,
        ExperimentId::Cooperation,
        ExperimentId::SettingsSweep,
        ExperimentId::CoexistenceQoe,
        ExperimentId::CoexistenceSr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Fit => "fit",
            ExperimentId::GThSweep => "g_th_sweep",
            ExperimentId::AlgoCompare => "algo_compare",
            ExperimentId::ConventionalCompare => "conventional_compare",
            ExperimentId::Cooperation => "cooperation",
            ExperimentId::SettingsSweep => "settings_sweep",
            ExperimentId::CoexistenceQoe => "coexistence_qoe",
            ExperimentId::CoexistenceSr => "coexistence_sr",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// The swept scenario variable and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variable", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    None,
    GTh(Vec<f64>),
    Channels(Vec<usize>),
    /// `base`, `users44`, `nr1`, `p4`.
    Setting(Vec<String>),
}

impl Sweep {
    pub fn variable(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::GTh(_) => "g_th",
            Sweep::Channels(_) => "channels",
            Sweep::Setting(_) => "setting",
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            Sweep::None => vec!["-".into()],
            Sweep::GTh(v) => v.iter().map(|x| x.to_string()).collect(),
            Sweep::Channels(v) => v.iter().map(|x| x.to_string()).collect(),
            Sweep::Setting(v) => v.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels().len()
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Sweep::None => false,
            Sweep::GTh(v) => v.is_empty(),
            Sweep::Channels(v) => v.is_empty(),
            Sweep::Setting(v) => v.is_empty(),
        }
    }

    /// Scenario configuration at sweep point `i`.
    pub fn apply(&self, i: usize, base: &ScenarioConfig) -> Result<ScenarioConfig> {
        let mut c = base.clone();
        match self {
            Sweep::None => {}
            Sweep::GTh(v) => c.g_th = v[i],
            Sweep::Channels(v) => c.channels = v[i],
            Sweep::Setting(v) => match v[i].as_str() {
                "base" => {}
                "users44" => {
                    c.n_single = 4;
                    c.n_bimodal = 4;
                }
                "nr1" => c.rx_antennas = 1,
                "p4" => c.power_levels_dbm = vec![-10.0, 0.0, 10.0, 20.0],
                other => return Err(Error::Config(format!("unknown setting '{other}'"))),
            },
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub id: ExperimentId,
    pub sweep: Sweep,
    pub drops: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub criterion: Criterion,
    /// Half of each user type runs the conventional system.
    pub coexistence: bool,
    /// Export per-swap traces of the proposed method.
    pub traces: bool,
}

impl ExperimentPlan {
    pub fn default_for(id: ExperimentId, cfg: &RunConfig) -> Self {
        let channels = Sweep::Channels(vec![2, 4, 6, 8]);
        let conventional: Vec<Method> = std::iter::once(Method::Proposed)
            .chain(Method::CONVENTIONAL_K.iter().map(|&k_text| Method::ConventionalFixedK { k_text }))
            .chain([Method::ConventionalOptimalK])
            .collect();
        let (sweep, methods, criterion, coexistence) = match id {
            ExperimentId::Fit => (Sweep::None, vec![], Criterion::Qoe, false),
            ExperimentId::GThSweep => (
                Sweep::GTh((1..=9).map(|i| i as f64 / 10.0).collect()),
                vec![Method::Proposed, Method::SumSrMax, Method::UpperBound],
                Criterion::Qoe,
                false,
            ),
            ExperimentId::AlgoCompare => (
                channels,
                vec![Method::Proposed, Method::RandomMatching, Method::UpperBound],
                Criterion::Qoe,
                false,
            ),
            ExperimentId::ConventionalCompare => (channels, conventional, Criterion::Qoe, false),
            ExperimentId::Cooperation => (channels, vec![Method::Proposed, Method::NoCooperation], Criterion::Qoe, false),
            ExperimentId::SettingsSweep => (
                Sweep::Setting(["base", "users44", "nr1", "p4"].map(String::from).to_vec()),
                vec![Method::Proposed],
                Criterion::Qoe,
                false,
            ),
            ExperimentId::CoexistenceQoe => (channels, vec![Method::Proposed, Method::UpperBound], Criterion::Qoe, true),
            ExperimentId::CoexistenceSr => (channels, vec![Method::SumSrMax], Criterion::SRate, true),
        };
        ExperimentPlan {
            id,
            sweep,
            drops: cfg.experiment.drops,
            base_seed: cfg.seed,
            methods,
            criterion,
            coexistence,
            traces: id == ExperimentId::AlgoCompare,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.drops == 0 {
            return Err(Error::Config("drop count must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep values are empty".into()));
        }
        if self.id != ExperimentId::Fit && self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        Ok(())
    }

    pub fn drop_seed(&self, drop: usize) -> u64 {
        self.base_seed.wrapping_add(drop as u64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultsRow>,
    pub traces: Vec<TraceRow>,
    pub fit: Vec<FitReport>,
}

struct DropResult {
    rows: Vec<ResultsRow>,
    traces: Vec<TraceRow>,
}

fn run_drop(plan: &ExperimentPlan, cfg: &RunConfig, kit: &Toolkit, point: usize, drop: usize) -> Result<DropResult> {
    let mut sc_cfg = plan.sweep.apply(point, &cfg.scenario)?;
    if plan.coexistence {
        sc_cfg = sc_cfg.coexistence();
    }
    let seed = plan.drop_seed(drop);
    let scenario = generate_scenario(&sc_cfg, seed)?;
    let label = plan.sweep.labels()[point].clone();
    let runs = run_methods(&plan.methods, &scenario, kit.solvers(), cfg.matching, plan.criterion, seed)?;
    let mut rows = Vec::with_capacity(runs.len());
    let mut traces = Vec::new();
    for run in runs {
        let mut row = ResultsRow {
            experiment: plan.id.to_string(),
            method: run.method.name(),
            sweep_variable: plan.sweep.variable().to_string(),
            sweep_value: label.clone(),
            drop_seed: seed,
            total_qoe: run.value,
            wall_ms: if cfg.experiment.timing { run.wall_ms } else { 0.0 },
            ..Default::default()
        };
        if let Some(sol) = &run.solution {
            let report = audit_constraints(&scenario, &*kit.exact, sol);
            if !report.is_clean() {
                return Err(Error::Audit(format!(
                    "{} {} {}={} seed {}: {:?}",
                    plan.id, row.method, row.sweep_variable, label, seed, report.violations
                )));
            }
            let served = sol.served_counts();
            row.total_sr_ksuts = sol.total_sr_ksuts;
            row.served_sem_single = served.semantic_single;
            row.served_sem_bimodal = served.semantic_bimodal;
            row.served_conv_single = served.conventional_single;
            row.served_conv_bimodal = served.conventional_bimodal;
            row.power_mw = sol.power_mw;
        }
        if let Some(t) = &run.trace {
            row.swaps = t.swaps;
            if plan.traces && run.method == Method::Proposed {
                traces.push(TraceRow {
                    experiment: plan.id.to_string(),
                    sweep_variable: plan.sweep.variable().to_string(),
                    sweep_value: label.clone(),
                    drop_seed: seed,
                    swap_index: 0,
                    total_qoe: t.initial_utility,
                    searches: 0,
                });
                traces.extend(t.entries.iter().map(|e| TraceRow {
                    experiment: plan.id.to_string(),
                    sweep_variable: plan.sweep.variable().to_string(),
                    sweep_value: label.clone(),
                    drop_seed: seed,
                    swap_index: e.swap,
                    total_qoe: e.total_utility,
                    searches: e.searches,
                }));
            }
        }
        rows.push(row);
    }
    Ok(DropResult { rows, traces })
}

/// Runs every sweep point and drop, in parallel across drops. Rows come
/// back ordered by sweep point, drop, then method.
pub fn run_experiment(plan: &ExperimentPlan, cfg: &RunConfig, kit: &Toolkit) -> Result<ExperimentOutput> {
    plan.validate()?;
    if plan.id == ExperimentId::Fit {
        if !kit.fit_reports.is_empty() {
            return Ok(ExperimentOutput { fit: kit.fit_reports.clone(), ..Default::default() });
        }
        let (_, rs) = fit_fidelity(&kit.single_table, &FitConfig::for_kind(TaskKind::SingleText))?;
        let (_, rb) = fit_fidelity(&kit.bimodal_table, &FitConfig::for_kind(TaskKind::BimodalVqa))?;
        return Ok(ExperimentOutput { fit: vec![rs, rb], ..Default::default() });
    }
    let jobs: Vec<(usize, usize)> = (0..plan.sweep.len()).flat_map(|p| (0..plan.drops).map(move |d| (p, d))).collect();
    let threads = cfg
        .experiment
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .min(jobs.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<DropResult>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (p, d) = jobs[i];
                let r = run_drop(plan, cfg, kit, p, d);
                let failed = r.is_err();
                slots.lock().expect("result lock")[i] = Some(r);
                if failed {
                    next.store(jobs.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let mut out = ExperimentOutput::default();
    for slot in slots.into_inner().expect("result lock").into_iter().flatten() {
        let r = slot?;
        out.rows.extend(r.rows);
        out.traces.extend(r.traces);
    }
    Ok(out)
}
