//! Comparison methods sharing the swap-matching engine.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compression::{P1Solver, P1State};
use crate::error::{Error, Result};
use crate::matching::{Engine, Matching, MatchingConfig, Objective, Player, QoeObjective, Trace};
use crate::netmodel::{substream, Scenario, Stream, UserGroup};
use crate::semantics::TaskKind;
use crate::solution::{conventional_sr_ksuts, evaluate, semantic_sr_ksuts, sr_best_action, Criterion, KPolicy, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Proposed,
    RandomMatching,
    SumSrMax,
    /// Bit-rate matching, then a fixed words budget.
    ConventionalFixedK { k_text: f64 },
    /// Bit-rate matching, then the QoE-optimal budget per group.
    ConventionalOptimalK,
    NoCooperation,
    UpperBound,
}

impl Method {
    /// The fixed-budget conventional models 1 to 4.
    pub const CONVENTIONAL_K: [f64; 4] = [1.0, 3.0, 5.0, 7.0];

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Proposed => write!(f, "proposed"),
            Method::RandomMatching => write!(f, "random"),
            Method::SumSrMax => write!(f, "sum_sr_max"),
            Method::ConventionalFixedK { k_text } => write!(f, "conventional_k{k_text}"),
            Method::ConventionalOptimalK => write!(f, "conventional_opt_k"),
            Method::NoCooperation => write!(f, "no_coop"),
            Method::UpperBound => write!(f, "upper_bound"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "proposed" => Method::Proposed,
            "random" => Method::RandomMatching,
            "sum_sr_max" => Method::SumSrMax,
            "conventional_opt_k" => Method::ConventionalOptimalK,
            "no_coop" => Method::NoCooperation,
            "upper_bound" => Method::UpperBound,
            _ => match s.strip_prefix("conventional_k").and_then(|k| k.parse::<f64>().ok()) {
                Some(k_text) if k_text > 0.0 => Method::ConventionalFixedK { k_text },
                _ => return Err(Error::Config(format!("unknown method '{s}'"))),
            },
        })
    }
}

/// Group sum of S-R over the scale, zero unless every member meets its
/// S-R requirement.
pub struct SrObjective<'a> {
    pub solver: &'a dyn P1Solver,
    pub scale_ksuts: f64,
}

impl<'a> SrObjective<'a> {
    pub fn new(solver: &'a dyn P1Solver) -> Self {
        SrObjective { solver, scale_ksuts: sr_scale_ksuts(solver) }
    }
}

/// Largest single-member S-R any catalog action reaches at the top of the
/// modelled SINR range.
pub fn sr_scale_ksuts(solver: &dyn P1Solver) -> f64 {
    let models = solver.models();
    let mut best = 0.0f64;
    for kind in [TaskKind::SingleText, TaskKind::BimodalVqa] {
        let top = match kind {
            TaskKind::SingleText => [models.single.sinr_bounds_db(0).1; 2],
            TaskKind::BimodalVqa => [models.bimodal.sinr_bounds_db(0).1, models.bimodal.sinr_bounds_db(1).1],
        };
        let state = P1State {
            kind,
            sinr_db: top,
            params: Default::default(),
            g_th: 0.0,
        };
        for a in &solver.catalog(kind).actions {
            let sr = semantic_sr_ksuts(models, &state, a).expect("catalog actions lie on the model grid");
            best = best.max(sr[0]).max(sr[1]);
        }
    }
    best
}

impl Objective for SrObjective<'_> {
    fn group_utility(&self, scenario: &Scenario, group: &UserGroup, sinr: &[f64]) -> f64 {
        let reqs: Vec<f64> = group.members.iter().map(|&u| scenario.users[u].sr_req_ksuts).collect();
        match QoeObjective::p1_state(scenario, group, sinr) {
            Some(state) => {
                let (_, feasible, total) = sr_best_action(self.solver, &state, &reqs);
                if feasible {
                    total / self.scale_ksuts
                } else {
                    0.0
                }
            }
            None => {
                let sr = conventional_sr_ksuts(scenario, self.solver.models(), group, sinr);
                if sr.iter().zip(&reqs).all(|(s, r)| s >= r) {
                    sr.iter().sum::<f64>() / self.scale_ksuts
                } else {
                    0.0
                }
            }
        }
    }
}

/// Sum spectral efficiency `log2(1 + gamma)` of the group.
pub struct BitRateObjective;

impl Objective for BitRateObjective {
    fn group_utility(&self, _: &Scenario, _: &UserGroup, sinr: &[f64]) -> f64 {
        sinr.iter().map(|s| (1.0 + s).log2()).sum()
    }
}

/// Uniformly random channel deal with uniformly random power levels.
pub fn random_matching(scenario: &Scenario, seed: u64) -> Matching {
    let mut rng = substream(seed, Stream::Baseline);
    let mut m = Matching::dealt(scenario, &mut rng);
    let levels = scenario.resources.levels();
    for cm in &mut m.cells {
        for (p, pl) in cm.players.iter().enumerate() {
            if matches!(pl, Player::Group { .. }) {
                for l in cm.powers[p].iter_mut() {
                    *l = rng.random_range(0..levels);
                }
            }
        }
    }
    m
}

/// `sum_b min(|U^b|, |M|)`: every servable user at QoE 1.
pub fn qoe_upper_bound(scenario: &Scenario) -> f64 {
    let m = scenario.resources.channels();
    (0..scenario.cells()).map(|b| scenario.users_in(b).min(m) as f64).sum()
}

pub fn proposed_matching(
    scenario: &Scenario,
    solver: &dyn P1Solver,
    config: MatchingConfig,
    seed: u64,
) -> Result<(Matching, Trace)> {
    let obj = QoeObjective::new(solver);
    Engine::new(scenario, &obj, config).run(Matching::initial(scenario, seed))
}

pub fn sum_sr_matching(
    scenario: &Scenario,
    solver: &dyn P1Solver,
    config: MatchingConfig,
    seed: u64,
) -> Result<(Matching, Trace)> {
    let obj = SrObjective::new(solver);
    Engine::new(scenario, &obj, config).run(Matching::initial(scenario, seed))
}

pub fn bitrate_matching(scenario: &Scenario, config: MatchingConfig, seed: u64) -> Result<(Matching, Trace)> {
    Engine::new(scenario, &BitRateObjective, config).run(Matching::initial(scenario, seed))
}

/// Runs with inter-cell interference ignored during matching.
pub fn no_cooperation_matching(
    scenario: &Scenario,
    solver: &dyn P1Solver,
    config: MatchingConfig,
    seed: u64,
) -> Result<(Matching, Trace)> {
    proposed_matching(scenario, solver, MatchingConfig { cooperation: false, ..config }, seed)
}

/// Solvers used by a run: `matching` drives the engine's utilities,
/// `exact` chooses and scores final budgets.
#[derive(Clone, Copy)]
pub struct Solvers<'a> {
    pub matching: &'a dyn P1Solver,
    pub exact: &'a dyn P1Solver,
}

pub struct MethodRun {
    pub method: Method,
    /// `None` for the upper bound.
    pub solution: Option<Solution>,
    pub matching: Option<Matching>,
    pub trace: Option<Trace>,
    pub value: f64,
    pub wall_ms: f64,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs several methods on one scenario, sharing the bit-rate matching
/// between the conventional variants.
pub fn run_methods(
    methods: &[Method],
    scenario: &Scenario,
    solvers: Solvers,
    config: MatchingConfig,
    criterion: Criterion,
    seed: u64,
) -> Result<Vec<MethodRun>> {
    let mut bitrate: Option<(Matching, Trace)> = None;
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let started = Instant::now();
        let name = method.name();
        let (matching, trace, policy) = match method {
            Method::UpperBound => {
                out.push(MethodRun {
                    method,
                    solution: None,
                    matching: None,
                    trace: None,
                    value: qoe_upper_bound(scenario),
                    wall_ms: ms(started),
                });
                continue;
            }
            Method::Proposed => {
                let (m, t) = proposed_matching(scenario, solvers.matching, config, seed)?;
                (m, Some(t), KPolicy::QoeOptimal)
            }
            Method::NoCooperation => {
                let (m, t) = no_cooperation_matching(scenario, solvers.matching, config, seed)?;
                (m, Some(t), KPolicy::QoeOptimal)
            }
            Method::RandomMatching => (random_matching(scenario, seed), None, KPolicy::QoeOptimal),
            Method::SumSrMax => {
                let (m, t) = sum_sr_matching(scenario, solvers.exact, config, seed)?;
                (m, Some(t), KPolicy::SrOptimal)
            }
            Method::ConventionalFixedK { .. } | Method::ConventionalOptimalK => {
                if bitrate.is_none() {
                    bitrate = Some(bitrate_matching(scenario, config, seed)?);
                }
                let (m, t) = bitrate.clone().expect("computed above");
                let policy = match method {
                    Method::ConventionalFixedK { k_text } => KPolicy::Fixed { k_text },
                    _ => KPolicy::QoeOptimal,
                };
                (m, Some(t), policy)
            }
        };
        let solution = evaluate(scenario, &matching, solvers.exact, policy, criterion, &name)?;
        out.push(MethodRun {
            method,
            value: solution.total_qoe,
            solution: Some(solution),
            matching: Some(matching),
            trace,
            wall_ms: ms(started),
        });
    }
    Ok(out)
}
