use serde::{Deserialize, Serialize};

use super::{CellMatching, Matching, Objective, PaddingCase, Player, Resource};
use crate::error::{Error, Result};
use crate::netmodel::{LinkModel, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    /// Account for inter-cell interference and other-cell players.
    pub cooperation: bool,
    /// Strict-improvement margin.
    pub delta: f64,
    pub swap_cap: u64,
    /// Fail when a cell's per-iteration searches exceed the complexity bound.
    pub enforce_bound: bool,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        MatchingConfig {
            cooperation: true,
            delta: 1e-9,
            swap_cap: 1_000_000,
            enforce_bound: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapProposal {
    pub cell: usize,
    pub player: usize,
    pub from: Resource,
    pub to: Resource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub swap: u64,
    pub iteration: usize,
    pub cell: usize,
    pub player: usize,
    /// Sum of player utilities after the swap.
    pub total_utility: f64,
    /// Searches performed so far.
    pub searches: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub initial_utility: f64,
    pub final_utility: f64,
    pub swaps: u64,
    pub iterations: usize,
    pub entries: Vec<TraceEntry>,
    /// `searches[iteration][cell]`.
    pub searches: Vec<Vec<u64>>,
    /// Per-cell search bound for one iteration.
    pub bounds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub per_iteration: Vec<Vec<u64>>,
    pub bounds: Vec<u64>,
    pub max_searches: u64,
    pub within_bound: bool,
}

pub fn complexity_counters(trace: &Trace) -> ComplexityReport {
    let within_bound = trace
        .searches
        .iter()
        .all(|row| row.iter().zip(&trace.bounds).all(|(s, b)| s <= b));
    ComplexityReport {
        per_iteration: trace.searches.clone(),
        bounds: trace.bounds.clone(),
        max_searches: trace.searches.iter().flatten().copied().max().unwrap_or(0),
        within_bound,
    }
}

/// Searches one iteration may spend in a cell: every single player scans
/// every (channel, power) pair, every pair scans every channel pair and
/// power pair.
pub fn complexity_bound(cm: &CellMatching, levels: usize) -> u64 {
    let s = cm.slots() as u64;
    let l = levels as u64;
    cm.channels
        .iter()
        .map(|ch| if ch.len() == 2 { s * (s - 1) / 2 * l * l } else { s * l })
        .sum()
}

type TxRow = Vec<Option<(usize, f64)>>;

struct TxView<'v> {
    base: &'v [TxRow],
    cell: usize,
    row: &'v TxRow,
}

impl TxView<'_> {
    fn get(&self, b: usize, m: usize) -> Option<(usize, f64)> {
        if b == self.cell {
            self.row[m]
        } else {
            self.base[b][m]
        }
    }
}

struct State {
    matching: Matching,
    tx: Vec<TxRow>,
    owners: Vec<Vec<(usize, usize)>>,
    util: Vec<Vec<f64>>,
}

impl State {
    fn total(&self) -> f64 {
        self.util.iter().flatten().sum()
    }
}

struct Outcome {
    cm: CellMatching,
    row: TxRow,
    updates: Vec<(usize, usize, f64)>,
}

/// Swap-matching engine over one scenario and objective.
pub struct Engine<'a> {
    scenario: &'a Scenario,
    link: LinkModel,
    objective: &'a dyn Objective,
    config: MatchingConfig,
}

impl<'a> Engine<'a> {
    pub fn new(scenario: &'a Scenario, objective: &'a dyn Objective, config: MatchingConfig) -> Self {
        Engine {
            scenario,
            link: LinkModel::new(scenario),
            objective,
            config,
        }
    }

    pub fn config(&self) -> &MatchingConfig {
        &self.config
    }

    fn tx_row(&self, cm: &CellMatching) -> TxRow {
        let mut row = vec![None; cm.real_channels];
        for (p, pl) in cm.players.iter().enumerate() {
            if let (Player::Group { group }, true) = (*pl, cm.is_active(p)) {
                for (j, &u) in self.scenario.groups[group].members.iter().enumerate() {
                    row[cm.channels[p][j]] = Some((u, self.scenario.resources.power_w(cm.powers[p][j])));
                }
            }
        }
        row
    }

    fn utility(&self, cm: &CellMatching, p: usize, view: &TxView) -> f64 {
        let Player::Group { group } = cm.players[p] else {
            return 0.0;
        };
        if !cm.is_active(p) {
            return 0.0;
        }
        let g = &self.scenario.groups[group];
        let mut sinr = [0.0; 2];
        for (j, &u) in g.members.iter().enumerate() {
            let ch = cm.channels[p][j];
            let pw = self.scenario.resources.power_w(cm.powers[p][j]);
            let cells = if self.config.cooperation { self.scenario.cells() } else { 0 };
            let interferers = (0..cells).filter(|&b| b != cm.cell).filter_map(|b| view.get(b, ch));
            sinr[j] = self.link.sinr(u, ch, pw, interferers);
        }
        self.objective.group_utility(self.scenario, g, &sinr[..g.members.len()])
    }

    fn state(&self, matching: Matching) -> State {
        let tx: Vec<TxRow> = matching.cells.iter().map(|cm| self.tx_row(cm)).collect();
        let owners = matching.cells.iter().map(CellMatching::owners).collect();
        let util = matching
            .cells
            .iter()
            .map(|cm| {
                let view = TxView { base: &tx, cell: cm.cell, row: &tx[cm.cell] };
                (0..cm.players.len()).map(|p| self.utility(cm, p, &view)).collect()
            })
            .collect();
        State { matching, tx, owners, util }
    }

    /// Utility of every player, `[cell][player]`.
    pub fn utilities(&self, matching: &Matching) -> Vec<Vec<f64>> {
        self.state(matching.clone()).util
    }

    pub fn total_utility(&self, matching: &Matching) -> f64 {
        self.state(matching.clone()).total()
    }

    fn channel_utility(cm: &CellMatching, owners: &[(usize, usize)], c: usize, util: impl Fn(usize) -> f64) -> f64 {
        if cm.is_virtual_channel(c) {
            return 0.0;
        }
        let (q, _) = owners[c];
        match cm.players[q] {
            Player::VirtualUser => 0.0,
            Player::Group { .. } if cm.channels[q].len() == 2 => util(q) / 2.0,
            Player::Group { .. } => util(q),
        }
    }

    /// Returns the new cell state and utilities when `to` is a blocking
    /// proposal of player `p` in cell `b`.
    fn propose(&self, st: &State, b: usize, p: usize, to: &Resource) -> Option<Outcome> {
        let delta = self.config.delta;
        let old_cm = &st.matching.cells[b];
        let mut cm = old_cm.clone();
        let involved = cm.apply(p, to);
        let row = self.tx_row(&cm);
        let view = TxView { base: &st.tx, cell: b, row: &row };
        let inv_old: Vec<f64> = involved.iter().map(|&q| st.util[b][q]).collect();
        let inv_new: Vec<f64> = involved.iter().map(|&q| self.utility(&cm, q, &view)).collect();
        let mut touched: Vec<usize> = involved.iter().flat_map(|&q| old_cm.channels[q].iter().copied()).collect();
        touched.sort_unstable();

        let individually = match old_cm.case {
            PaddingCase::VirtualUsers => {
                inv_new.iter().zip(&inv_old).all(|(n, o)| n >= o)
                    && inv_new.iter().zip(&inv_old).any(|(n, o)| *n > o + delta)
            }
            PaddingCase::VirtualChannels => {
                let new_owners = cm.owners();
                let new_util = |q: usize| match involved.iter().position(|&x| x == q) {
                    Some(i) => inv_new[i],
                    None => st.util[b][q],
                };
                let pairs: Vec<(f64, f64)> = touched
                    .iter()
                    .map(|&c| {
                        (
                            Self::channel_utility(old_cm, &st.owners[b], c, |q| st.util[b][q]),
                            Self::channel_utility(&cm, &new_owners, c, new_util),
                        )
                    })
                    .collect();
                pairs.iter().all(|(o, n)| n >= o) && pairs.iter().any(|(o, n)| *n > o + delta)
            }
        };
        if !individually {
            return None;
        }

        let mut updates: Vec<(usize, usize, f64)> = involved.iter().zip(&inv_new).map(|(&q, &u)| (b, q, u)).collect();
        let mut v_old: f64 = inv_old.iter().sum();
        let mut v_new: f64 = inv_new.iter().sum();
        if self.config.cooperation {
            for b2 in (0..self.scenario.cells()).filter(|&x| x != b) {
                let other = &st.matching.cells[b2];
                let mut seen: Vec<usize> = Vec::new();
                for &c in touched.iter().filter(|&&c| c < old_cm.real_channels) {
                    let (q, _) = st.owners[b2][c];
                    if seen.contains(&q) {
                        continue;
                    }
                    seen.push(q);
                    let u = self.utility(other, q, &view);
                    v_old += st.util[b2][q];
                    v_new += u;
                    updates.push((b2, q, u));
                }
            }
        }
        (v_new > v_old + delta).then_some(Outcome { cm, row, updates })
    }

    fn accept(st: &mut State, b: usize, o: Outcome) {
        st.owners[b] = o.cm.owners();
        st.matching.cells[b] = o.cm;
        st.tx[b] = o.row;
        for (c, q, u) in o.updates {
            st.util[c][q] = u;
        }
    }

    /// Runs swap rounds until a full pass over every player of every cell
    /// finds no blocking proposal.
    pub fn run(&self, init: Matching) -> Result<(Matching, Trace)> {
        init.check(self.scenario)?;
        let levels = self.scenario.resources.levels();
        let mut st = self.state(init);
        let mut trace = Trace {
            initial_utility: st.total(),
            bounds: st.matching.cells.iter().map(|cm| complexity_bound(cm, levels)).collect(),
            ..Default::default()
        };
        let mut searches_total = 0u64;
        loop {
            let iteration = trace.iterations;
            let mut per_cell = vec![0u64; self.scenario.cells()];
            let mut changed = false;
            for b in 0..self.scenario.cells() {
                for p in 0..st.matching.cells[b].players.len() {
                    for to in st.matching.cells[b].candidates(p, levels) {
                        if to == st.matching.cells[b].resource(p) {
                            continue;
                        }
                        per_cell[b] += 1;
                        searches_total += 1;
                        if let Some(o) = self.propose(&st, b, p, &to) {
                            Self::accept(&mut st, b, o);
                            changed = true;
                            trace.swaps += 1;
                            if trace.swaps > self.config.swap_cap {
                                return Err(Error::NonConvergence { cap: self.config.swap_cap });
                            }
                            trace.entries.push(TraceEntry {
                                swap: trace.swaps,
                                iteration,
                                cell: b,
                                player: p,
                                total_utility: st.total(),
                                searches: searches_total,
                            });
                        }
                    }
                }
                if self.config.enforce_bound && per_cell[b] > trace.bounds[b] {
                    return Err(Error::ComplexityBound {
                        cell: b,
                        iteration,
                        searches: per_cell[b],
                        bound: trace.bounds[b],
                    });
                }
            }
            trace.searches.push(per_cell);
            trace.iterations += 1;
            if !changed {
                break;
            }
        }
        trace.final_utility = st.total();
        Ok((st.matching, trace))
    }

    /// Every blocking proposal against `matching`, up to `limit`.
    pub fn blocking_proposals(&self, matching: &Matching, limit: usize) -> Result<Vec<SwapProposal>> {
        matching.check(self.scenario)?;
        let levels = self.scenario.resources.levels();
        let st = self.state(matching.clone());
        let mut out = Vec::new();
        for (b, cm) in st.matching.cells.iter().enumerate() {
            for p in 0..cm.players.len() {
                let from = cm.resource(p);
                for to in cm.candidates(p, levels) {
                    if to != from && self.propose(&st, b, p, &to).is_some() {
                        out.push(SwapProposal { cell: b, player: p, from, to });
                        if out.len() >= limit {
                            return Ok(out);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn is_stable(&self, matching: &Matching) -> Result<bool> {
        Ok(self.blocking_proposals(matching, 1)?.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::compression::tests::fixture;
    use crate::compression::{ActionCatalog, CachedSolver, ExhaustiveSolver, P1Solver};
    use crate::matching::QoeObjective;
    use crate::netmodel::{generate_scenario, Link, ScenarioConfig};
    use crate::semantics::TaskKind;

    fn small_solver() -> ExhaustiveSolver {
        let m: Arc<_> = fixture();
        let s = ActionCatalog::truncated(&m, TaskKind::SingleText, 4);
        let bi = ActionCatalog::truncated(&m, TaskKind::BimodalVqa, 4);
        ExhaustiveSolver::with_catalogs(m, s, bi).unwrap()
    }

    fn tiny(seed: u64, single: usize, bimodal: usize, channels: usize, levels: usize) -> Scenario {
        let cfg = ScenarioConfig {
            cells: 1,
            n_single: single,
            n_bimodal: bimodal,
            channels,
            power_levels_dbm: vec![-10.0, 5.0, 20.0][..levels].to_vec(),
            ..Default::default()
        };
        generate_scenario(&cfg, seed).unwrap()
    }

    /// Best total over every physical allocation, both member orientations
    /// and idle groups included.
    fn brute_force(sc: &Scenario, solver: &dyn P1Solver) -> f64 {
        let obj = QoeObjective::new(solver);
        let link = LinkModel::new(sc);
        let m = sc.resources.channels();
        let l = sc.resources.levels();
        let users = sc.users.len();
        let mut best = 0.0f64;
        let mut links: Vec<Option<Link>> = vec![None; users];
        fn rec(
            u: usize,
            used: &mut Vec<bool>,
            links: &mut Vec<Option<Link>>,
            sc: &Scenario,
            m: usize,
            l: usize,
            eval: &dyn Fn(&[Option<Link>]) -> f64,
            best: &mut f64,
        ) {
            if u == links.len() {
                *best = best.max(eval(links));
                return;
            }
            links[u] = None;
            rec(u + 1, used, links, sc, m, l, eval, best);
            for c in 0..m {
                if used[c] {
                    continue;
                }
                used[c] = true;
                for lv in 0..l {
                    links[u] = Some(Link { channel: c, power_w: sc.resources.power_w(lv) });
                    rec(u + 1, used, links, sc, m, l, eval, best);
                }
                used[c] = false;
            }
            links[u] = None;
        }
        let eval = |links: &[Option<Link>]| -> f64 {
            sc.groups
                .iter()
                .map(|g| {
                    let ls: Vec<_> = g.members.iter().map(|&u| links[u]).collect();
                    if ls.iter().any(Option::is_none) {
                        return 0.0;
                    }
                    let sinr: Vec<f64> = ls.iter().flatten().zip(&g.members).map(|(lk, &u)| link.sinr(u, lk.channel, lk.power_w, [])).collect();
                    obj.group_utility(sc, g, &sinr)
                })
                .sum()
        };
        rec(0, &mut vec![false; m], &mut links, sc, m, l, &eval, &mut best);
        best
    }

    #[test]
    fn never_exceeds_and_nearly_reaches_exhaustive_optimum() {
        let solver = small_solver();
        let obj = QoeObjective::new(&solver);
        let mut ratios = Vec::new();
        for seed in 0..20 {
            let sc = tiny(seed, 1 + (seed as usize % 2), 1, 3, 2);
            let engine = Engine::new(&sc, &obj, MatchingConfig::default());
            let (m, trace) = engine.run(Matching::initial(&sc, seed)).unwrap();
            let opt = brute_force(&sc, &solver);
            let got = engine.total_utility(&m);
            assert!((got - trace.final_utility).abs() < 1e-12);
            assert!(got <= opt + 1e-9, "seed {seed}: {got} > {opt}");
            ratios.push(if opt > 0.0 { got / opt } else { 1.0 });
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(mean >= 0.95, "mean ratio {mean}");
    }

    #[test]
    fn single_user_single_channel_picks_best_power() {
        let sc = tiny(7, 1, 0, 1, 2);
        let solver = small_solver();
        let obj = QoeObjective::new(&solver);
        let engine = Engine::new(&sc, &obj, MatchingConfig::default());
        let (m, _) = engine.run(Matching::initial(&sc, 0)).unwrap();
        let link = LinkModel::new(&sc);
        let best = (0..2)
            .map(|lv| obj.group_utility(&sc, &sc.groups[0], &[link.sinr(0, 0, sc.resources.power_w(lv), [])]))
            .fold(f64::MIN, f64::max);
        assert_eq!(engine.total_utility(&m), best);
    }

    #[test]
    fn default_run_is_stable_monotone_and_bounded() {
        let sc = generate_scenario(&ScenarioConfig::default(), 11).unwrap();
        let solver = CachedSolver::new(ExhaustiveSolver::new(fixture()), Some(0.5));
        let obj = QoeObjective::new(&solver);
        let engine = Engine::new(&sc, &obj, MatchingConfig::default());
        let (m, trace) = engine.run(Matching::initial(&sc, 11)).unwrap();
        m.check(&sc).unwrap();
        assert!(engine.is_stable(&m).unwrap());
        let mut prev = trace.initial_utility;
        for e in &trace.entries {
            assert!(e.total_utility > prev);
            prev = e.total_utility;
        }
        let report = complexity_counters(&trace);
        assert!(report.within_bound);
        assert_eq!(report.bounds, vec![1554; 3]);
        assert!(trace.final_utility >= trace.initial_utility);
    }

    #[test]
    fn virtual_channel_case_converges_stably() {
        let cfg = ScenarioConfig { n_single: 12, n_bimodal: 6, ..Default::default() };
        let sc = generate_scenario(&cfg, 5).unwrap();
        let solver = CachedSolver::new(ExhaustiveSolver::new(fixture()), Some(0.5));
        let obj = QoeObjective::new(&solver);
        let engine = Engine::new(&sc, &obj, MatchingConfig::default());
        let (m, _) = engine.run(Matching::initial(&sc, 5)).unwrap();
        assert!(m.cells.iter().all(|c| c.case == PaddingCase::VirtualChannels));
        assert!(engine.is_stable(&m).unwrap());
        crate::netmodel::compute_sinr(&sc, &m.allocation(&sc)).unwrap();
    }

    #[test]
    fn runs_are_deterministic() {
        let sc = generate_scenario(&ScenarioConfig::default(), 3).unwrap();
        let solver = CachedSolver::new(ExhaustiveSolver::new(fixture()), Some(0.5));
        let obj = QoeObjective::new(&solver);
        let engine = Engine::new(&sc, &obj, MatchingConfig::default());
        let a = engine.run(Matching::initial(&sc, 3)).unwrap();
        let b = engine.run(Matching::initial(&sc, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn swap_cap_is_enforced() {
        let sc = generate_scenario(&ScenarioConfig::default(), 4).unwrap();
        let solver = CachedSolver::new(ExhaustiveSolver::new(fixture()), Some(0.5));
        let obj = QoeObjective::new(&solver);
        let cfg = MatchingConfig { swap_cap: 0, ..Default::default() };
        let engine = Engine::new(&sc, &obj, cfg);
        assert!(matches!(engine.run(Matching::initial(&sc, 4)), Err(Error::NonConvergence { cap: 0 })));
    }

    #[test]
    fn two_player_blocking_matches_enumeration() {
        // One cell, two singles, two channels, two powers: enumerate every
        // proposal against a fixed matching and check the blocking rule.
        let sc = tiny(21, 2, 0, 2, 2);
        let solver = small_solver();
        let obj = QoeObjective::new(&solver);
        let engine = Engine::new(&sc, &obj, MatchingConfig::default());
        let m = Matching::initial(&sc, 0);
        let old = engine.utilities(&m)[0].clone();
        let found = engine.blocking_proposals(&m, usize::MAX).unwrap();
        let cm = &m.cells[0];
        for p in 0..2 {
            for to in cm.candidates(p, 2) {
                if to == cm.resource(p) {
                    continue;
                }
                let mut next = m.clone();
                next.cells[0].apply(p, &to);
                let new = engine.utilities(&next)[0].clone();
                let weak = new.iter().zip(&old).all(|(n, o)| n >= o);
                let strict = new.iter().zip(&old).any(|(n, o)| *n > o + 1e-9);
                let sum = new.iter().sum::<f64>() > old.iter().sum::<f64>() + 1e-9;
                let expect = weak && strict && sum;
                let got = found.iter().any(|s| s.player == p && s.to == to);
                assert_eq!(got, expect, "player {p} -> {to:?}");
            }
        }
    }
}
