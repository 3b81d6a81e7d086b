use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use super::{evaluate_action, ActionCatalog, P1Solution, P1Solver, P1State};
use crate::qoe::SemanticQoe;
use crate::semantics::{TaskKind, TaskModels};

type Key = (TaskKind, [i64; 2], [[u64; 5]; 2], u64);

fn param_bits(p: &SemanticQoe) -> [u64; 5] {
    [
        p.weight.to_bits(),
        p.rate_growth_per_ksuts.to_bits(),
        p.rate_req_ksuts.to_bits(),
        p.fidelity_growth.to_bits(),
        p.fidelity_req.to_bits(),
    ]
}

/// Memoises the wrapped solver's action on SINRs quantised to `step_db`.
///
/// The cached action is the one chosen at the bin centre; its QoE is always
/// re-evaluated at the exact state, so results depend only on the state.
pub struct CachedSolver<S> {
    inner: S,
    step_db: Option<f64>,
    table: RwLock<HashMap<Key, usize>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<S: P1Solver> CachedSolver<S> {
    pub const DEFAULT_STEP_DB: f64 = 0.5;

    /// `step_db = None` disables caching.
    pub fn new(inner: S, step_db: Option<f64>) -> Self {
        CachedSolver {
            inner,
            step_db: step_db.filter(|s| *s > 0.0),
            table: RwLock::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn hit_rate(&self) -> f64 {
        let (h, m) = (self.hits(), self.misses());
        if h + m == 0 {
            0.0
        } else {
            h as f64 / (h + m) as f64
        }
    }

    fn model_bounds(&self, kind: TaskKind, member: usize) -> (f64, f64) {
        let m = self.inner.models();
        match kind {
            TaskKind::SingleText => m.single.sinr_bounds_db(member),
            TaskKind::BimodalVqa => m.bimodal.sinr_bounds_db(member),
        }
    }
}

impl<S: P1Solver> P1Solver for CachedSolver<S> {
    fn solve(&self, state: &P1State) -> P1Solution {
        let Some(step) = self.step_db else {
            return self.inner.solve(state);
        };
        let n = state.members();
        let mut bins = [0i64; 2];
        let mut centre = *state;
        for i in 0..n {
            let (lo, hi) = self.model_bounds(state.kind, i);
            let g = state.sinr_db[i].clamp(lo, hi);
            bins[i] = (g / step).round() as i64;
            centre.sinr_db[i] = bins[i] as f64 * step;
        }
        let key: Key = (state.kind, bins, [param_bits(&state.params[0]), param_bits(&state.params[1])], state.g_th.to_bits());
        let cached = self.table.read().expect("cache lock").get(&key).copied();
        let index = match cached {
            Some(i) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                i
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                let i = self.inner.solve(&centre).action_index;
                self.table.write().expect("cache lock").insert(key, i);
                i
            }
        };
        let action = self.inner.catalog(state.kind).actions[index];
        P1Solution {
            action_index: index,
            action,
            value: evaluate_action(self.inner.models(), state, &action).expect("catalog actions lie on the model grid"),
        }
    }

    fn models(&self) -> &TaskModels {
        self.inner.models()
    }

    fn catalog(&self, kind: TaskKind) -> &ActionCatalog {
        self.inner.catalog(kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::tests::fixture;
    use crate::compression::ExhaustiveSolver;
    use crate::qoe::SemanticQoeDist;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn repeated_query_hits() {
        let c = CachedSolver::new(ExhaustiveSolver::new(fixture()), Some(0.5));
        let st = P1State::single(3.1, SemanticQoeDist::text().sample(&mut ChaCha8Rng::seed_from_u64(1)), 0.5);
        let a = c.solve(&st);
        let b = c.solve(&st);
        assert_eq!(a, b);
        assert_eq!((c.hits(), c.misses()), (1, 1));
    }

    #[test]
    fn disabled_cache_is_transparent() {
        let inner = ExhaustiveSolver::new(fixture());
        let c = CachedSolver::new(inner.clone(), None);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let st = P1State::bimodal(
                [rng.random_range(-10.0..20.0), rng.random_range(-10.0..20.0)],
                [SemanticQoeDist::text().sample(&mut rng), SemanticQoeDist::image().sample(&mut rng)],
                0.5,
            );
            assert_eq!(c.solve(&st), inner.solve(&st));
        }
        assert_eq!(c.hits() + c.misses(), 0);
    }

    #[test]
    fn result_independent_of_query_history() {
        let m = fixture();
        let p = SemanticQoeDist::text().sample(&mut ChaCha8Rng::seed_from_u64(3));
        let (a, b) = (P1State::single(4.0, p, 0.5), P1State::single(4.2, p, 0.5));
        let c1 = CachedSolver::new(ExhaustiveSolver::new(m.clone()), Some(0.5));
        let first = (c1.solve(&a), c1.solve(&b));
        let c2 = CachedSolver::new(ExhaustiveSolver::new(m), Some(0.5));
        let second = (c2.solve(&b), c2.solve(&a));
        assert_eq!(first, (second.1, second.0));
    }

    #[test]
    fn never_beats_the_exact_solver() {
        let inner = ExhaustiveSolver::new(fixture());
        let c = CachedSolver::new(inner.clone(), Some(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let st = P1State::single(rng.random_range(-10.0..20.0), SemanticQoeDist::text().sample(&mut rng), 0.5);
            assert!(c.solve(&st).reward() <= inner.solve(&st).reward());
        }
    }
}
