use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::qnet::Scorer;

/// ε decays linearly from `start` to `end` over the first `decay_fraction`
/// of the run, then stays at `end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self {
            start: 0.9,
            end: 0.1,
            decay_fraction: 0.6,
        }
    }
}

impl ExplorationSchedule {
    pub fn epsilon(&self, step: usize, total_steps: usize) -> f64 {
        let horizon = self.decay_fraction * total_steps as f64;
        let progress = if horizon <= 0.0 {
            1.0
        } else {
            (step as f64 / horizon).min(1.0)
        };
        let eps = self.start + (self.end - self.start) * progress;
        eps.clamp(self.start.min(self.end), self.start.max(self.end))
    }
}

/// ε-greedy choice over candidate action representations.
///
/// With probability ε a uniform candidate; otherwise the argmax of
/// `Q(state ⊕ candidate)`, lowest index on ties.
pub fn select_action<S: Scorer, R: Rng>(
    q: &S,
    state: &[f64],
    candidates: &[Vec<f64>],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Empty("no candidate actions"));
    }
    if rng.gen::<f64>() < epsilon {
        return Ok(rng.gen_range(0..candidates.len()));
    }
    Ok(greedy_action(q, state, candidates))
}

pub fn greedy_action<S: Scorer>(q: &S, state: &[f64], candidates: &[Vec<f64>]) -> usize {
    let mut input = Vec::with_capacity(state.len() + candidates[0].len());
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        input.clear();
        input.extend_from_slice(state);
        input.extend_from_slice(c);
        let v = q.score(&input);
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Scores a candidate by its first entry.
    struct Stub;

    impl Scorer for Stub {
        fn params(&self) -> &[f64] {
            &[]
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut []
        }
        fn score(&self, input: &[f64]) -> f64 {
            input[1]
        }
        fn backward(&self, input: &[f64], _: f64, _: &mut [f64]) -> f64 {
            input[1]
        }
    }

    #[test]
    fn schedule_endpoints() {
        let s = ExplorationSchedule::default();
        assert_eq!(s.epsilon(0, 100), 0.9);
        assert!((s.epsilon(30, 100) - 0.5).abs() < 1e-12);
        assert!((s.epsilon(60, 100) - 0.1).abs() < 1e-12);
        assert!((s.epsilon(99, 100) - 0.1).abs() < 1e-12);
        for step in 0..200 {
            let e = s.epsilon(step, 137);
            assert!((0.1..=0.9).contains(&e));
        }
    }

    #[test]
    fn greedy_picks_maximum_with_lowest_index_on_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = vec![vec![0.2], vec![0.9], vec![0.9], vec![-1.0]];
        assert_eq!(select_action(&Stub, &[0.0], &c, 0.0, &mut rng).unwrap(), 1);
        assert_eq!(select_action(&Stub, &[0.0], &c[3..], 0.0, &mut rng).unwrap(), 0);
        assert!(select_action(&Stub, &[0.0], &[], 0.0, &mut rng).is_err());
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let c: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let draws = 10_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            counts[select_action(&Stub, &[0.0], &c, 1.0, &mut rng).unwrap()] += 1;
        }
        let p = 0.2;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for &k in &counts {
            assert!((k as f64 - draws as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }
}
