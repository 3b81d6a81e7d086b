use crate::compression::{task_kind, P1Solver, P1State};
use crate::netmodel::{linear_to_db, Scenario, UserGroup};
use crate::qoe::{conventional_group_qoe, ConventionalQoe, SemanticQoe};
use crate::semantics::{conventional_bit_rate, TaskKind};

/// Utility of a transmitting group given each member's linear SINR.
pub trait Objective: Sync {
    fn group_utility(&self, scenario: &Scenario, group: &UserGroup, sinr: &[f64]) -> f64;
}

pub fn group_sinr_db(sinr: &[f64]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (o, &s) in out.iter_mut().zip(sinr) {
        *o = linear_to_db(s);
    }
    out
}

/// Semantic groups score their best compression choice; conventional groups
/// score their Shannon bit rate. Groups missing the threshold score 0.
pub struct QoeObjective<'a> {
    pub solver: &'a dyn P1Solver,
}

impl<'a> QoeObjective<'a> {
    pub fn new(solver: &'a dyn P1Solver) -> Self {
        QoeObjective { solver }
    }

    pub fn p1_state(scenario: &Scenario, group: &UserGroup, sinr: &[f64]) -> Option<P1State> {
        let kind = task_kind(group.kind)?;
        let params: Vec<SemanticQoe> = group
            .members
            .iter()
            .map(|&u| *scenario.users[u].qoe.semantic().expect("semantic group member"))
            .collect();
        let db = group_sinr_db(sinr);
        Some(match kind {
            TaskKind::SingleText => P1State::single(db[0], params[0], scenario.g_th),
            TaskKind::BimodalVqa => P1State::bimodal(db, [params[0], params[1]], scenario.g_th),
        })
    }
}

pub(crate) fn conventional_reward(scenario: &Scenario, group: &UserGroup, sinr: &[f64]) -> f64 {
    let params: Vec<ConventionalQoe> = group
        .members
        .iter()
        .map(|&u| *scenario.users[u].qoe.conventional().expect("conventional group member"))
        .collect();
    let w = scenario.resources.bandwidth_hz();
    let rates: Vec<f64> = sinr.iter().map(|&s| conventional_bit_rate(s, w)).collect();
    conventional_group_qoe(&params, &rates, scenario.g_th)
        .map(|b| b.reward())
        .unwrap_or(0.0)
}

impl Objective for QoeObjective<'_> {
    fn group_utility(&self, scenario: &Scenario, group: &UserGroup, sinr: &[f64]) -> f64 {
        match Self::p1_state(scenario, group, sinr) {
            Some(state) => self.solver.solve(&state).reward(),
            None => conventional_reward(scenario, group, sinr),
        }
    }
}
