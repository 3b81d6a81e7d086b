use std::io::Write;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{catalog_for, evaluate_action, ActionCatalog, P1Solution, P1Solver, P1State};
use crate::error::{Error, Result};
use crate::mlp::{Activation, AdamConfig, Mlp};
use crate::qoe::{SemanticQoe, SemanticQoeDist, UniformRange};
use crate::semantics::{TaskKind, TaskModels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub episodes: usize,
    /// Episodes over which epsilon falls linearly from `epsilon_start` to
    /// `epsilon_end`; it stays at `epsilon_end` afterwards.
    pub anneal_episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// `None` picks the per-task default.
    pub learning_rate: Option<f64>,
    pub hidden: Vec<usize>,
    pub discount: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub sync_interval: u64,
    pub train_steps_per_episode: usize,
    pub seed: u64,
    /// Held-out states used for the evaluation column of the training log.
    pub eval_states: usize,
    /// Log a row every this many episodes.
    pub log_every: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            episodes: 2000,
            anneal_episodes: 1800,
            epsilon_start: 1.0,
            epsilon_end: 0.02,
            learning_rate: None,
            hidden: vec![256, 256, 256],
            discount: 0.9,
            buffer_capacity: 50_000,
            batch_size: 64,
            sync_interval: 200,
            train_steps_per_episode: 1,
            seed: 0,
            eval_states: 200,
            log_every: 100,
        }
    }
}

impl DqnConfig {
    pub fn learning_rate_for(&self, kind: TaskKind) -> f64 {
        self.learning_rate.unwrap_or(match kind {
            TaskKind::SingleText => 1e-4,
            TaskKind::BimodalVqa => 5e-5,
        })
    }
}

pub fn epsilon_at(episode: usize, config: &DqnConfig) -> f64 {
    if episode >= config.anneal_episodes || config.anneal_episodes == 0 {
        return config.epsilon_end;
    }
    let t = episode as f64 / config.anneal_episodes as f64;
    config.epsilon_start + (config.epsilon_end - config.epsilon_start) * t
}

/// State distribution for training and evaluation, also used to scale Q-net
/// inputs onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StateSampler {
    pub text: SemanticQoeDist,
    pub image: SemanticQoeDist,
    pub sinr_db: UniformRange,
    pub g_th: UniformRange,
}

impl Default for StateSampler {
    fn default() -> Self {
        StateSampler {
            text: SemanticQoeDist::text(),
            image: SemanticQoeDist::image(),
            sinr_db: UniformRange::new(-10.0, 20.0),
            g_th: UniformRange::new(0.1, 0.9),
        }
    }
}

fn unit(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

impl StateSampler {
    fn dists(&self, kind: TaskKind) -> [SemanticQoeDist; 2] {
        match kind {
            TaskKind::SingleText => [self.text, self.text],
            TaskKind::BimodalVqa => [self.text, self.image],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, kind: TaskKind, rng: &mut R) -> P1State {
        let d = self.dists(kind);
        match kind {
            TaskKind::SingleText => {
                let g = self.sinr_db.sample(rng);
                P1State::single(g, d[0].sample(rng), self.g_th.sample(rng))
            }
            TaskKind::BimodalVqa => {
                let g = [self.sinr_db.sample(rng), self.sinr_db.sample(rng)];
                let p = [d[0].sample(rng), d[1].sample(rng)];
                P1State::bimodal(g, p, self.g_th.sample(rng))
            }
        }
    }

    pub fn feature_dim(kind: TaskKind) -> usize {
        6 * kind.members() + 1
    }

    /// Per member: SINR, weight, rate growth, rate requirement, fidelity
    /// growth, fidelity requirement; then the threshold.
    pub fn features(&self, state: &P1State) -> Vec<f64> {
        let d = self.dists(state.kind);
        let mut f = Vec::with_capacity(Self::feature_dim(state.kind));
        for i in 0..state.members() {
            let p: &SemanticQoe = &state.params[i];
            let dist = &d[i];
            let (blo, bhi) = dist.rate_growth_per_ksuts.span();
            let (llo, lhi) = dist.fidelity_growth.span();
            f.push(unit(state.sinr_db[i], self.sinr_db.lo, self.sinr_db.hi));
            f.push(unit(p.weight, dist.weight.lo, dist.weight.hi));
            f.push(unit(p.rate_growth_per_ksuts, blo, bhi));
            f.push(unit(p.rate_req_ksuts, dist.rate_req_ksuts.lo, dist.rate_req_ksuts.hi));
            f.push(unit(p.fidelity_growth, llo, lhi));
            f.push(unit(p.fidelity_req, dist.fidelity_req.lo, dist.fidelity_req.hi));
        }
        f.push(unit(state.g_th, self.g_th.lo, self.g_th.hi));
        f
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QPolicy {
    pub kind: TaskKind,
    pub catalog: ActionCatalog,
    pub sampler: StateSampler,
    pub config: DqnConfig,
    eval_net: Mlp,
    target_net: Mlp,
}

fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

impl QPolicy {
    pub fn new(kind: TaskKind, catalog: ActionCatalog, sampler: StateSampler, config: DqnConfig) -> Result<Self> {
        if catalog.kind != kind || catalog.is_empty() {
            return Err(Error::Config("action catalog does not match the task".into()));
        }
        let mut sizes = vec![StateSampler::feature_dim(kind)];
        sizes.extend(&config.hidden);
        sizes.push(catalog.len());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let eval_net = Mlp::new(
            &sizes,
            Activation::Relu,
            Activation::Identity,
            AdamConfig::with_lr(config.learning_rate_for(kind)),
            &mut rng,
        );
        let target_net = eval_net.clone();
        Ok(QPolicy {
            kind,
            catalog,
            sampler,
            config,
            eval_net,
            target_net,
        })
    }

    pub fn q_values(&self, state: &P1State) -> Vec<f64> {
        self.eval_net
            .predict(&self.sampler.features(state))
            .expect("feature width matches the network")
    }

    pub fn greedy(&self, state: &P1State) -> usize {
        argmax(self.q_values(state))
    }

    pub fn eval_net(&self) -> &Mlp {
        &self.eval_net
    }

    pub fn target_net(&self) -> &Mlp {
        &self.target_net
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: QPolicy = serde_json::from_str(s)?;
        let n = p.catalog.len();
        let dim = StateSampler::feature_dim(p.kind);
        for net in [&p.eval_net, &p.target_net] {
            if net.input_dim() != dim || net.output_dim() != n {
                return Err(Error::Config("policy network does not match its catalog".into()));
            }
        }
        Ok(p)
    }

    /// One minibatch update of the evaluation net on the squared TD error;
    /// terminal transitions use the reward alone as the target.
    pub fn train_batch(&mut self, batch: &[&Transition]) -> Result<f64> {
        let dim = self.eval_net.input_dim();
        let rows = batch.len();
        let mut x = Array2::zeros((rows, dim));
        for (r, t) in batch.iter().enumerate() {
            x.row_mut(r).assign(&ArrayView2::from_shape((1, dim), &t.features).expect("feature width").row(0));
        }
        let mut targets = Vec::with_capacity(rows);
        for t in batch {
            let mut y = t.reward;
            if let Some(next) = &t.next {
                let q = self.target_net.predict(next)?;
                y += self.config.discount * q.into_iter().fold(f64::NEG_INFINITY, f64::max);
            }
            targets.push(y);
        }
        self.eval_net.step_with(x.view(), |out| {
            let mut grad = Array2::zeros(out.raw_dim());
            let mut loss = 0.0;
            for (r, t) in batch.iter().enumerate() {
                let err = out[[r, t.action]] - targets[r];
                loss += err * err;
                grad[[r, t.action]] = 2.0 * err / rows as f64;
            }
            (loss / rows as f64, grad)
        })
    }

    pub fn sync_target(&mut self) {
        self.target_net.copy_weights_from(&self.eval_net);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    /// `None` marks a terminal transition.
    pub next: Option<Vec<f64>>,
}

struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            items: Vec::new(),
            next: 0,
        }
    }

    fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub episode: usize,
    pub epsilon: f64,
    /// Mean minibatch loss since the previous row.
    pub loss: f64,
    /// Mean greedy-policy reward over the oracle's on held-out states.
    pub eval_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<TrainingRow>,
    pub train_steps: u64,
    pub syncs: u64,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "epsilon", "loss", "eval_ratio"])?;
        for r in &self.rows {
            w.write_record([
                r.episode.to_string(),
                r.epsilon.to_string(),
                r.loss.to_string(),
                r.eval_ratio.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean policy reward divided by mean oracle reward over `states`.
pub fn policy_ratio(policy: &QPolicy, models: &TaskModels, states: &[P1State], oracle: &[f64]) -> f64 {
    let got: f64 = states
        .iter()
        .map(|s| {
            let a = policy.catalog.actions[policy.greedy(s)];
            evaluate_action(models, s, &a).expect("catalog on grid").reward()
        })
        .sum();
    let best: f64 = oracle.iter().sum();
    if best > 0.0 {
        got / best
    } else {
        1.0
    }
}

/// Trains a Q-network on one-step P1 episodes.
pub fn train_dqn(
    models: &TaskModels,
    kind: TaskKind,
    catalog: ActionCatalog,
    sampler: StateSampler,
    config: &DqnConfig,
) -> Result<(QPolicy, TrainingLog)> {
    let mut policy = QPolicy::new(kind, catalog, sampler, config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed);
    eval_rng.set_stream(2);
    let eval_states: Vec<P1State> = (0..config.eval_states).map(|_| sampler.sample(kind, &mut eval_rng)).collect();
    let oracle: Vec<f64> = eval_states
        .iter()
        .map(|s| super::solve_exhaustive(models, &policy.catalog, s).reward())
        .collect();

    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut log = TrainingLog::default();
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    let n_actions = policy.catalog.len();
    for episode in 0..config.episodes {
        let eps = epsilon_at(episode, config);
        let state = sampler.sample(kind, &mut rng);
        let features = sampler.features(&state);
        let action = if rng.random::<f64>() < eps {
            rng.random_range(0..n_actions)
        } else {
            argmax(policy.eval_net.predict(&features)?)
        };
        let reward = evaluate_action(models, &state, &policy.catalog.actions[action])?.reward();
        buffer.push(Transition {
            features,
            action,
            reward,
            next: None,
        });
        if buffer.items.len() >= config.batch_size {
            for _ in 0..config.train_steps_per_episode {
                let batch = buffer.sample(config.batch_size, &mut rng);
                let loss = policy.train_batch(&batch).map_err(|e| match e {
                    Error::Diverged { loss, .. } => Error::Diverged { step: log.train_steps, loss },
                    other => other,
                })?;
                loss_sum += loss;
                loss_n += 1;
                log.train_steps += 1;
                if log.train_steps % config.sync_interval.max(1) == 0 {
                    policy.sync_target();
                    log.syncs += 1;
                }
            }
        }
        let last = episode + 1 == config.episodes;
        if config.log_every > 0 && ((episode + 1) % config.log_every == 0 || last) {
            let eval_ratio = (!eval_states.is_empty()).then(|| policy_ratio(&policy, models, &eval_states, &oracle));
            log.rows.push(TrainingRow {
                episode: episode + 1,
                epsilon: eps,
                loss: if loss_n > 0 { loss_sum / loss_n as f64 } else { 0.0 },
                eval_ratio,
            });
            loss_sum = 0.0;
            loss_n = 0;
        }
    }
    Ok((policy, log))
}

/// P1 solver answering with the greedy action of a trained policy per task.
#[derive(Debug, Clone)]
pub struct PolicySolver {
    models: Arc<TaskModels>,
    single: QPolicy,
    bimodal: QPolicy,
}

impl PolicySolver {
    pub fn new(models: Arc<TaskModels>, single: QPolicy, bimodal: QPolicy) -> Result<Self> {
        if single.kind != TaskKind::SingleText || bimodal.kind != TaskKind::BimodalVqa {
            return Err(Error::Config("policies passed for the wrong tasks".into()));
        }
        Ok(PolicySolver { models, single, bimodal })
    }

    fn policy(&self, kind: TaskKind) -> &QPolicy {
        match kind {
            TaskKind::SingleText => &self.single,
            TaskKind::BimodalVqa => &self.bimodal,
        }
    }
}

impl P1Solver for PolicySolver {
    fn solve(&self, state: &P1State) -> P1Solution {
        let policy = self.policy(state.kind);
        let index = policy.greedy(state);
        let action = policy.catalog.actions[index];
        P1Solution {
            action_index: index,
            action,
            value: evaluate_action(&self.models, state, &action).expect("catalog on grid"),
        }
    }

    fn models(&self) -> &TaskModels {
        &self.models
    }

    fn catalog(&self, kind: TaskKind) -> &ActionCatalog {
        catalog_for(&self.single.catalog, &self.bimodal.catalog, kind)
    }
}
