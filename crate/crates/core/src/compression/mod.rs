//! Semantic compression (P1): per-group choice of symbol budgets that
//! maximises group QoE subject to the per-user score threshold.

mod cache;
mod dqn;

pub use cache::CachedSolver;
pub use dqn::{
    epsilon_at, policy_ratio, train_dqn, DqnConfig, PolicySolver, QPolicy, StateSampler, TrainingLog, TrainingRow,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::GroupKind;
use crate::qoe::{group_qoe, QoeBreakdown, SemanticQoe};
use crate::semantics::{TaskKind, TaskModels};

/// Symbol budgets of one group: text budget per word and, for VQA, image
/// budget per image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub k_text: f64,
    pub k_image: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCatalog {
    pub kind: TaskKind,
    pub actions: Vec<Action>,
}

impl ActionCatalog {
    /// Every budget combination on the model's grids, text budget major.
    pub fn full(models: &TaskModels, kind: TaskKind) -> Self {
        let actions = match kind {
            TaskKind::SingleText => models
                .single
                .k_grid(0)
                .iter()
                .map(|&k| Action { k_text: k, k_image: None })
                .collect(),
            TaskKind::BimodalVqa => {
                let m = &models.bimodal;
                m.k_grid(0)
                    .iter()
                    .flat_map(|&kt| m.k_grid(1).iter().map(move |&ki| Action { k_text: kt, k_image: Some(ki) }))
                    .collect()
            }
        };
        ActionCatalog { kind, actions }
    }

    /// At most `max_actions` actions spread evenly over the full catalog,
    /// always keeping the first and last.
    pub fn truncated(models: &TaskModels, kind: TaskKind, max_actions: usize) -> Self {
        let full = Self::full(models, kind);
        let n = full.actions.len();
        if max_actions >= n || max_actions == 0 {
            return full;
        }
        let mut picks: Vec<usize> = if max_actions == 1 {
            vec![0]
        } else {
            (0..max_actions).map(|i| i * (n - 1) / (max_actions - 1)).collect()
        };
        picks.dedup();
        ActionCatalog {
            kind,
            actions: picks.into_iter().map(|i| full.actions[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Everything P1 needs for one semantic group. Unused second entries of
/// single-modal states are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P1State {
    pub kind: TaskKind,
    pub sinr_db: [f64; 2],
    pub params: [SemanticQoe; 2],
    pub g_th: f64,
}

impl P1State {
    pub fn single(sinr_db: f64, params: SemanticQoe, g_th: f64) -> Self {
        P1State {
            kind: TaskKind::SingleText,
            sinr_db: [sinr_db, 0.0],
            params: [params, SemanticQoe::default()],
            g_th,
        }
    }

    pub fn bimodal(sinr_db: [f64; 2], params: [SemanticQoe; 2], g_th: f64) -> Self {
        P1State {
            kind: TaskKind::BimodalVqa,
            sinr_db,
            params,
            g_th,
        }
    }

    pub fn members(&self) -> usize {
        self.kind.members()
    }
}

pub fn task_kind(kind: GroupKind) -> Option<TaskKind> {
    match kind {
        GroupKind::SingleText => Some(TaskKind::SingleText),
        GroupKind::BimodalPair => Some(TaskKind::BimodalVqa),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    /// Sum of member scores regardless of the threshold.
    pub group_score: f64,
    pub served: bool,
}

impl ActionValue {
    /// Reward: the group score when every threshold is met, else 0.
    pub fn reward(&self) -> f64 {
        if self.served {
            self.group_score
        } else {
            0.0
        }
    }
}

/// Semantic rate(s) and fidelity of an action at the state's SINRs.
pub fn rates_and_fidelity(models: &TaskModels, state: &P1State, action: &Action) -> Result<([f64; 2], f64)> {
    match (state.kind, action.k_image) {
        (TaskKind::SingleText, None) => {
            let phi = models.single_rate(action.k_text)?;
            let xi = models.single.single(action.k_text, state.sinr_db[0])?;
            Ok(([phi, 0.0], xi))
        }
        (TaskKind::BimodalVqa, Some(ki)) => {
            let (pt, pi) = models.bimodal_rates(action.k_text, ki)?;
            let xi = models.bimodal.bimodal(action.k_text, ki, state.sinr_db[0], state.sinr_db[1])?;
            Ok(([pt, pi], xi))
        }
        _ => Err(Error::Config("action does not match the task kind".into())),
    }
}

/// Exact QoE of an action.
pub fn evaluate_action(models: &TaskModels, state: &P1State, action: &Action) -> Result<ActionValue> {
    let (phi, xi) = rates_and_fidelity(models, state, action)?;
    let mut group_score = 0.0;
    let mut served = true;
    for (p, &phi) in state.params[..state.members()].iter().zip(&phi) {
        let rate = p.rate_score(phi);
        let fidelity = p.fidelity_score(xi);
        group_score += p.weight * rate + (1.0 - p.weight) * fidelity;
        served &= rate >= state.g_th && fidelity >= state.g_th;
    }
    Ok(ActionValue { group_score, served })
}

/// Per-user score breakdown of an action.
pub fn breakdown(models: &TaskModels, state: &P1State, action: &Action) -> Result<QoeBreakdown> {
    let (phi, xi) = rates_and_fidelity(models, state, action)?;
    let n = state.members();
    group_qoe(&state.params[..n], &phi[..n], xi, state.g_th)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P1Solution {
    pub action_index: usize,
    pub action: Action,
    pub value: ActionValue,
}

impl P1Solution {
    pub fn reward(&self) -> f64 {
        self.value.reward()
    }

    pub fn served(&self) -> bool {
        self.value.served
    }
}

pub trait P1Solver: Send + Sync {
    fn solve(&self, state: &P1State) -> P1Solution;
    fn models(&self) -> &TaskModels;
    fn catalog(&self, kind: TaskKind) -> &ActionCatalog;
}

impl<T: P1Solver + ?Sized> P1Solver for Arc<T> {
    fn solve(&self, state: &P1State) -> P1Solution {
        (**self).solve(state)
    }

    fn models(&self) -> &TaskModels {
        (**self).models()
    }

    fn catalog(&self, kind: TaskKind) -> &ActionCatalog {
        (**self).catalog(kind)
    }
}

fn catalog_for<'a>(single: &'a ActionCatalog, bimodal: &'a ActionCatalog, kind: TaskKind) -> &'a ActionCatalog {
    match kind {
        TaskKind::SingleText => single,
        TaskKind::BimodalVqa => bimodal,
    }
}

/// Evaluates every action; ties go to the lowest index.
#[derive(Debug, Clone)]
pub struct ExhaustiveSolver {
    models: Arc<TaskModels>,
    single: ActionCatalog,
    bimodal: ActionCatalog,
}

impl ExhaustiveSolver {
    pub fn new(models: Arc<TaskModels>) -> Self {
        let single = ActionCatalog::full(&models, TaskKind::SingleText);
        let bimodal = ActionCatalog::full(&models, TaskKind::BimodalVqa);
        ExhaustiveSolver { models, single, bimodal }
    }

    pub fn with_catalogs(models: Arc<TaskModels>, single: ActionCatalog, bimodal: ActionCatalog) -> Result<Self> {
        if single.is_empty() || bimodal.is_empty() {
            return Err(Error::Config("empty action catalog".into()));
        }
        Ok(ExhaustiveSolver { models, single, bimodal })
    }

    pub fn models_arc(&self) -> &Arc<TaskModels> {
        &self.models
    }
}

/// Argmax of the reward over a catalog.
pub fn solve_exhaustive(models: &TaskModels, catalog: &ActionCatalog, state: &P1State) -> P1Solution {
    let mut best: Option<P1Solution> = None;
    for (i, a) in catalog.actions.iter().enumerate() {
        let value = evaluate_action(models, state, a).expect("catalog actions lie on the model grid");
        if best.is_none_or(|b| value.reward() > b.reward()) {
            best = Some(P1Solution { action_index: i, action: *a, value });
        }
    }
    let best = best.expect("nonempty catalog");
    if best.served() {
        best
    } else {
        // Nothing meets the thresholds: report the first action, unserved.
        let a = catalog.actions[0];
        P1Solution {
            action_index: 0,
            action: a,
            value: evaluate_action(models, state, &a).expect("catalog actions lie on the model grid"),
        }
    }
}

impl P1Solver for ExhaustiveSolver {
    fn solve(&self, state: &P1State) -> P1Solution {
        solve_exhaustive(&self.models, self.catalog(state.kind), state)
    }

    fn models(&self) -> &TaskModels {
        &self.models
    }

    fn catalog(&self, kind: TaskKind) -> &ActionCatalog {
        catalog_for(&self.single, &self.bimodal, kind)
    }
}
