//! Complete solutions (assignment, power, compression) with their QoE and
//! S-R accounting, and the C1–C7 constraint auditor.

use serde::{Deserialize, Serialize};

use crate::compression::{breakdown, rates_and_fidelity, task_kind, Action, P1Solver, P1State};
use crate::error::{Error, Result};
use crate::matching::{group_sinr_db, Matching};
use crate::netmodel::{compute_sinr, dbm_to_mw, Allocation, GroupKind, Link, MemberRole, Scenario, UserGroup};
use crate::qoe::{conventional_group_qoe, ksuts};
use crate::semantics::{
    conventional_bit_rate, equivalent_s_rate, TaskKind, TaskModels, MU_IMAGE_BITS_PER_IMAGE, MU_TEXT_BITS_PER_WORD,
};

pub const SOLUTION_SCHEMA_VERSION: u32 = 1;

/// How each semantic group's symbol budget is chosen once SINRs are known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum KPolicy {
    /// The P1 solver's choice.
    QoeOptimal,
    /// Fixed words budget; VQA budgets snap upward onto the grid, the image
    /// budget being `k_text` times the patch count.
    Fixed { k_text: f64 },
    /// Largest total S-R subject to every member's S-R requirement.
    SrOptimal,
}

/// What "served" means for a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Every score clears `G_th`.
    #[default]
    Qoe,
    /// Every member's S-R meets its requirement.
    SRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub channel: usize,
    pub power_level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub group: usize,
    pub kind: GroupKind,
    pub transmitting: bool,
    pub action: Option<Action>,
    /// Member SINRs in dB; empty when silent.
    pub sinr_db: Vec<f64>,
    pub group_score: f64,
    /// QoE contribution: the group score when every score clears `G_th`.
    pub qoe: f64,
    pub served: bool,
    /// Delivered S-R per member in Ksuts/s.
    pub sr_ksuts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub schema_version: u32,
    pub scenario_seed: u64,
    pub method: String,
    pub criterion: Criterion,
    pub matching: Matching,
    pub links: Vec<Option<LinkRecord>>,
    pub groups: Vec<GroupOutcome>,
    pub total_qoe: f64,
    /// S-R summed over served groups.
    pub total_sr_ksuts: f64,
    pub power_mw: f64,
}

/// Served user counts split by system and task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ServedCounts {
    pub semantic_single: usize,
    pub semantic_bimodal: usize,
    pub conventional_single: usize,
    pub conventional_bimodal: usize,
}

impl Solution {
    pub fn served_counts(&self) -> ServedCounts {
        let mut c = ServedCounts::default();
        for g in self.groups.iter().filter(|g| g.served) {
            let n = g.kind.members();
            match g.kind {
                GroupKind::SingleText => c.semantic_single += n,
                GroupKind::BimodalPair => c.semantic_bimodal += n,
                GroupKind::ConvText => c.conventional_single += n,
                GroupKind::ConvBimodalPair => c.conventional_bimodal += n,
                GroupKind::Virtual => {}
            }
        }
        c
    }

    pub fn allocation(&self, scenario: &Scenario) -> Allocation {
        Allocation {
            links: self
                .links
                .iter()
                .map(|l| {
                    l.map(|l| Link {
                        channel: l.channel,
                        power_w: scenario.resources.power_w(l.power_level.min(scenario.resources.levels() - 1)),
                    })
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sol: Solution = serde_json::from_str(s)?;
        if sol.schema_version != SOLUTION_SCHEMA_VERSION {
            return Err(Error::Schema { found: sol.schema_version, expected: SOLUTION_SCHEMA_VERSION });
        }
        Ok(sol)
    }
}

/// Entropy in suts per source unit of a member's task.
pub fn member_entropy(models: &TaskModels, kind: GroupKind, role: MemberRole) -> f64 {
    match (kind.is_bimodal(), role) {
        (false, _) => models.entropy.single_text_suts,
        (true, MemberRole::Text) => models.entropy.bimodal_text_suts,
        (true, MemberRole::Image) => models.entropy.bimodal_image_suts,
    }
}

pub fn member_mu_bits(role: MemberRole) -> f64 {
    match role {
        MemberRole::Text => MU_TEXT_BITS_PER_WORD,
        MemberRole::Image => MU_IMAGE_BITS_PER_IMAGE,
    }
}

/// Smallest grid value at or above `v`, else the largest.
pub fn snap_up(grid: &[f64], v: f64) -> f64 {
    grid.iter().copied().find(|&g| g >= v - 1e-9).unwrap_or(grid[grid.len() - 1])
}

pub fn fixed_action(models: &TaskModels, kind: TaskKind, k_text: f64) -> Action {
    match kind {
        TaskKind::SingleText => Action { k_text: snap_up(models.single.k_grid(0), k_text), k_image: None },
        TaskKind::BimodalVqa => {
            let kt = snap_up(models.bimodal.k_grid(0), k_text);
            let ki = snap_up(models.bimodal.k_grid(1), k_text * crate::semantics::IMAGE_PATCHES);
            Action { k_text: kt, k_image: Some(ki) }
        }
    }
}

/// Per-member S-R in Ksuts/s of a semantic action.
pub fn semantic_sr_ksuts(models: &TaskModels, state: &P1State, action: &Action) -> Result<[f64; 2]> {
    let (phi, xi) = rates_and_fidelity(models, state, action)?;
    Ok([ksuts(phi[0] * xi), ksuts(phi[1] * xi)])
}

/// Action maximising total S-R subject to every member's requirement;
/// `(action, feasible, total)`. The first catalog action when infeasible.
pub fn sr_best_action(solver: &dyn P1Solver, state: &P1State, req_ksuts: &[f64]) -> (Action, bool, f64) {
    let models = solver.models();
    let catalog = solver.catalog(state.kind);
    let n = state.members();
    let mut best: Option<(Action, f64)> = None;
    for a in &catalog.actions {
        let sr = semantic_sr_ksuts(models, state, a).expect("catalog actions lie on the model grid");
        if sr[..n].iter().zip(req_ksuts).all(|(s, r)| s >= r) {
            let total: f64 = sr[..n].iter().sum();
            if best.is_none_or(|(_, b)| total > b) {
                best = Some((*a, total));
            }
        }
    }
    match best {
        Some((a, t)) => (a, true, t),
        None => (catalog.actions[0], false, 0.0),
    }
}

/// Per-member equivalent S-R in Ksuts/s of a conventional group.
pub fn conventional_sr_ksuts(scenario: &Scenario, models: &TaskModels, group: &UserGroup, sinr: &[f64]) -> Vec<f64> {
    let w = scenario.resources.bandwidth_hz();
    group
        .members
        .iter()
        .zip(sinr)
        .map(|(&u, &s)| {
            let role = scenario.users[u].role;
            let c = conventional_bit_rate(s, w);
            ksuts(equivalent_s_rate(c, member_mu_bits(role), member_entropy(models, group.kind, role)).expect("mu > 0"))
        })
        .collect()
}

/// Evaluates a matching under true interference with the given budget
/// policy.
pub fn evaluate(
    scenario: &Scenario,
    matching: &Matching,
    solver: &dyn P1Solver,
    policy: KPolicy,
    criterion: Criterion,
    method: &str,
) -> Result<Solution> {
    matching.check(scenario)?;
    let alloc = matching.allocation(scenario);
    let sinr = compute_sinr(scenario, &alloc)?;
    let levels = matching.power_levels(scenario);
    let links: Vec<Option<LinkRecord>> = alloc
        .links
        .iter()
        .zip(&levels)
        .map(|(l, lv)| l.map(|l| LinkRecord { channel: l.channel, power_level: lv.expect("transmitting user has a level") }))
        .collect();
    let mut groups = Vec::with_capacity(scenario.groups.len());
    for g in &scenario.groups {
        groups.push(evaluate_group(scenario, solver, g, &alloc, &sinr, policy, criterion)?);
    }
    let power_mw = links
        .iter()
        .flatten()
        .map(|l| dbm_to_mw(scenario.resources.power_levels_dbm[l.power_level]))
        .sum();
    Ok(Solution {
        schema_version: SOLUTION_SCHEMA_VERSION,
        scenario_seed: scenario.seed,
        method: method.to_string(),
        criterion,
        matching: matching.clone(),
        links,
        total_qoe: groups.iter().map(|g| g.qoe).sum(),
        total_sr_ksuts: groups.iter().filter(|g| g.served).flat_map(|g| &g.sr_ksuts).sum(),
        groups,
        power_mw,
    })
}

fn evaluate_group(
    scenario: &Scenario,
    solver: &dyn P1Solver,
    g: &UserGroup,
    alloc: &Allocation,
    sinr: &[f64],
    policy: KPolicy,
    criterion: Criterion,
) -> Result<GroupOutcome> {
    let models = solver.models();
    let silent = GroupOutcome {
        group: g.id,
        kind: g.kind,
        transmitting: false,
        action: None,
        sinr_db: Vec::new(),
        group_score: 0.0,
        qoe: 0.0,
        served: false,
        sr_ksuts: vec![0.0; g.members.len()],
    };
    if g.members.iter().any(|&u| alloc.links[u].is_none()) {
        return Ok(silent);
    }
    let lin: Vec<f64> = g.members.iter().map(|&u| sinr[u]).collect();
    let reqs: Vec<f64> = g.members.iter().map(|&u| scenario.users[u].sr_req_ksuts).collect();
    let n = g.members.len();
    if let Some(state) = crate::matching::QoeObjective::p1_state(scenario, g, &lin) {
        let action = match policy {
            KPolicy::QoeOptimal => solver.solve(&state).action,
            KPolicy::Fixed { k_text } => fixed_action(models, state.kind, k_text),
            KPolicy::SrOptimal => sr_best_action(solver, &state, &reqs).0,
        };
        let b = breakdown(models, &state, &action)?;
        let sr = semantic_sr_ksuts(models, &state, &action)?;
        let served = match criterion {
            Criterion::Qoe => b.served,
            Criterion::SRate => sr[..n].iter().zip(&reqs).all(|(s, r)| s >= r),
        };
        Ok(GroupOutcome {
            transmitting: true,
            action: Some(action),
            sinr_db: state.sinr_db[..n].to_vec(),
            group_score: b.group_score,
            qoe: b.reward(),
            served,
            sr_ksuts: sr[..n].to_vec(),
            ..silent
        })
    } else {
        let params: Vec<_> = g.members.iter().map(|&u| *scenario.users[u].qoe.conventional().expect("conventional member")).collect();
        let w = scenario.resources.bandwidth_hz();
        let rates: Vec<f64> = lin.iter().map(|&s| conventional_bit_rate(s, w)).collect();
        let b = conventional_group_qoe(&params, &rates, scenario.g_th)?;
        let sr = conventional_sr_ksuts(scenario, models, g, &lin);
        let served = match criterion {
            Criterion::Qoe => b.served,
            Criterion::SRate => sr.iter().zip(&reqs).all(|(s, r)| s >= r),
        };
        Ok(GroupOutcome {
            transmitting: true,
            sinr_db: group_sinr_db(&lin)[..n].to_vec(),
            group_score: b.group_score,
            qoe: b.reward(),
            served,
            sr_ksuts: sr,
            ..silent
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `C1`–`C7`, or `schema` for malformed solution files.
    pub constraint: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn flag(&mut self, constraint: &str, detail: String) {
        self.violations.push(Violation { constraint: constraint.into(), detail });
    }
}

const QOE_TOL: f64 = 1e-9;

/// Checks C1–C7 on a solution's explicit assignment and reported outcomes.
pub fn audit_constraints(scenario: &Scenario, solver: &dyn P1Solver, solution: &Solution) -> AuditReport {
    let mut r = AuditReport::default();
    let models = solver.models();
    let users = scenario.users.len();
    let m = scenario.resources.channels();
    let levels = scenario.resources.levels();
    if solution.links.len() != users {
        r.flag("schema", format!("{} links for {} users", solution.links.len(), users));
        return r;
    }
    if solution.groups.len() != scenario.groups.len() {
        r.flag("schema", format!("{} group outcomes for {} groups", solution.groups.len(), scenario.groups.len()));
        return r;
    }
    // C1: assignment indicators address existing channels.
    for (u, l) in solution.links.iter().enumerate() {
        if let Some(l) = l {
            if l.channel >= m {
                r.flag("C1", format!("user {u} assigned to nonexistent channel {}", l.channel));
            }
        }
    }
    // C2: one user per channel per cell.
    let mut occ = vec![vec![None::<usize>; m]; scenario.cells()];
    for (u, l) in solution.links.iter().enumerate() {
        if let Some(l) = l.filter(|l| l.channel < m) {
            let cell = scenario.users[u].cell;
            if let Some(v) = occ[cell][l.channel].replace(u) {
                r.flag("C2", format!("users {v} and {u} share channel {} in cell {cell}", l.channel));
            }
        }
    }
    // C3 holds by construction: a link record carries a single channel.
    // C4: pairs transmit on two channels or none.
    for g in scenario.groups.iter().filter(|g| g.kind.is_bimodal()) {
        let on = g.members.iter().filter(|&&u| solution.links[u].is_some()).count();
        if on == 1 {
            r.flag("C4", format!("pair {} holds exactly one channel", g.id));
        }
    }
    // C6: power levels from the discrete set, within the power cap.
    let pmax = scenario.resources.max_power_dbm;
    for (u, l) in solution.links.iter().enumerate() {
        if let Some(l) = l {
            if l.power_level >= levels {
                r.flag("C6", format!("user {u} power level {} outside the set", l.power_level));
            } else if scenario.resources.power_levels_dbm[l.power_level] > pmax {
                r.flag("C6", format!("user {u} exceeds max power"));
            }
        }
    }
    // The assignment must be the one the matching implies.
    let implied = solution.matching.check(scenario).map(|_| solution.matching.allocation(scenario));
    match implied {
        Ok(a) => {
            if a != solution.allocation(scenario) {
                r.flag("C1", "assignment differs from the one implied by the matching".into());
            }
        }
        Err(e) => r.flag("C2", format!("matching malformed: {e}")),
    }
    if !r.is_clean() {
        return r;
    }
    let alloc = solution.allocation(scenario);
    let sinr = match compute_sinr(scenario, &alloc) {
        Ok(s) => s,
        Err(e) => {
            r.flag("C2", e.to_string());
            return r;
        }
    };
    for (g, out) in scenario.groups.iter().zip(&solution.groups) {
        let transmitting = g.members.iter().all(|&u| alloc.links[u].is_some());
        if out.group != g.id || out.transmitting != transmitting {
            r.flag("C4", format!("group {} transmission state misreported", g.id));
            continue;
        }
        if !transmitting {
            if out.served || out.qoe != 0.0 {
                r.flag("C7", format!("silent group {} reported as served", g.id));
            }
            continue;
        }
        let lin: Vec<f64> = g.members.iter().map(|&u| sinr[u]).collect();
        let n = g.members.len();
        let reqs: Vec<f64> = g.members.iter().map(|&u| scenario.users[u].sr_req_ksuts).collect();
        match task_kind(g.kind) {
            Some(kind) => {
                let Some(a) = out.action else {
                    r.flag("C5", format!("semantic group {} has no symbol budget", g.id));
                    continue;
                };
                let model = match kind {
                    TaskKind::SingleText => &models.single,
                    TaskKind::BimodalVqa => &models.bimodal,
                };
                let on_grid = |grid: &[f64], k: f64| grid.iter().any(|&x| x == k);
                let ok = on_grid(model.k_grid(0), a.k_text)
                    && match (kind, a.k_image) {
                        (TaskKind::SingleText, None) => true,
                        (TaskKind::BimodalVqa, Some(ki)) => on_grid(model.k_grid(1), ki),
                        _ => false,
                    };
                if !ok {
                    r.flag("C5", format!("group {} budget {:?} outside the grid", g.id, a));
                    continue;
                }
                let state = crate::matching::QoeObjective::p1_state(scenario, g, &lin).expect("semantic group");
                let (b, sr) = match (breakdown(models, &state, &a), semantic_sr_ksuts(models, &state, &a)) {
                    (Ok(b), Ok(sr)) => (b, sr),
                    _ => {
                        r.flag("C5", format!("group {} budget not evaluable", g.id));
                        continue;
                    }
                };
                let served = match solution.criterion {
                    Criterion::Qoe => b.served,
                    Criterion::SRate => sr[..n].iter().zip(&reqs).all(|(s, q)| s >= q),
                };
                check_c7(&mut r, g.id, out, served, b.reward());
            }
            None => {
                let params: Vec<_> = g.members.iter().map(|&u| *scenario.users[u].qoe.conventional().expect("conventional member")).collect();
                let w = scenario.resources.bandwidth_hz();
                let rates: Vec<f64> = lin.iter().map(|&s| conventional_bit_rate(s, w)).collect();
                let b = conventional_group_qoe(&params, &rates, scenario.g_th).expect("rates for every member");
                let sr = conventional_sr_ksuts(scenario, models, g, &lin);
                let served = match solution.criterion {
                    Criterion::Qoe => b.served,
                    Criterion::SRate => sr.iter().zip(&reqs).all(|(s, q)| s >= q),
                };
                check_c7(&mut r, g.id, out, served, b.reward());
            }
        }
    }
    let total: f64 = solution.groups.iter().map(|g| g.qoe).sum();
    if (total - solution.total_qoe).abs() > QOE_TOL * (1.0 + total.abs()) {
        r.flag("C7", format!("total QoE {} does not match group sum {total}", solution.total_qoe));
    }
    r
}

fn check_c7(r: &mut AuditReport, id: usize, out: &GroupOutcome, served: bool, reward: f64) {
    if out.served != served {
        r.flag("C7", format!("group {id} served flag {} but thresholds give {served}", out.served));
    }
    if (out.qoe - reward).abs() > QOE_TOL {
        r.flag("C7", format!("group {id} QoE {} but recomputed {reward}", out.qoe));
    }
}
