//! Revelation probabilities and average-feedback-information accounting.
//!
//! `r[k]` is the probability that action `k`'s loss is observed in a round,
//! either by playing it or by inferring it from a lost round. The ratio
//! `r[k] / w[k]` measures how much more a bidder learns about `k` than plain
//! bandit feedback would give it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::MixedStrategy;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct RevelationProbs<S>(Vec<S>);

impl<S: Scalar> RevelationProbs<S> {
    pub fn probs(&self) -> &[S] {
        &self.0
    }

    pub fn full(k: usize) -> Self {
        Self(vec![S::one(); k])
    }

    pub fn bandit(w: &MixedStrategy<S>) -> Self {
        Self(w.probs().to_vec())
    }
}

/// Marginal-price markets: every losing action reveals the whole losing set,
/// so each losing action is observed with the total losing probability mass.
pub fn revelation_simple<S: Scalar>(w: &MixedStrategy<S>, losing_set: &[usize], won: bool) -> RevelationProbs<S> {
    let mut r = w.probs().to_vec();
    if !won {
        let mass: S = losing_set.iter().map(|&j| w[j]).sum();
        for &k in losing_set {
            r[k] = mass;
        }
    }
    RevelationProbs(r)
}

/// Exact revelation probabilities for epigraph-based inference: a losing
/// action `k` is observed whenever some losing action `j` with `k` in its
/// epigraph is played. `full_losing_set` is the set of all actions that would
/// have lost this round; `reveal_sets[k]` lists the actions `j` whose curve
/// lies at or below `k`'s.
pub fn revelation_general<S: Scalar>(
    w: &MixedStrategy<S>,
    losing_set: &[usize],
    full_losing_set: &[usize],
    reveal_sets: &[Vec<usize>],
    won: bool,
) -> Result<RevelationProbs<S>> {
    let mut r = w.probs().to_vec();
    if won {
        return Ok(RevelationProbs(r));
    }
    if let Some(k) = losing_set.iter().find(|k| !full_losing_set.contains(k)) {
        return Err(Error::InvalidRevelation(format!(
            "action {k} inferred as losing but it would have won"
        )));
    }
    for &k in losing_set {
        r[k] = reveal_sets[k]
            .iter()
            .filter(|j| full_losing_set.contains(j))
            .map(|&j| w[j])
            .sum();
    }
    Ok(RevelationProbs(r))
}

/// Heuristic stand-in for [`revelation_general`] when the full losing set is
/// unknown: every revealing action is assumed to lose unless it has won every
/// time it was played.
pub fn revelation_heuristic<S: Scalar>(
    w: &MixedStrategy<S>,
    losing_set: &[usize],
    reveal_sets: &[Vec<usize>],
    winners: &WinnerHistory,
    won: bool,
) -> RevelationProbs<S> {
    let mut r = w.probs().to_vec();
    if won {
        return RevelationProbs(r);
    }
    for &k in losing_set {
        let extra: S = reveal_sets[k]
            .iter()
            .filter(|&&j| j != k && !winners.contains(j))
            .map(|&j| w[j])
            .sum();
        r[k] = (w[k] + extra).min(S::one());
    }
    RevelationProbs(r)
}

/// Per-action record of plays and wins. An action belongs to the winner set
/// once it has been played and every play received a positive allocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinnerHistory {
    played: Vec<u64>,
    won: Vec<u64>,
}

impl WinnerHistory {
    pub fn new(k: usize) -> Self {
        Self { played: vec![0; k], won: vec![0; k] }
    }

    pub fn record(&mut self, action: usize, allocated: bool) {
        self.played[action] += 1;
        if allocated {
            self.won[action] += 1;
        }
    }

    pub fn contains(&self, action: usize) -> bool {
        self.played[action] > 0 && self.played[action] == self.won[action]
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.played.len()).filter(|&k| self.contains(k)).collect()
    }
}

/// Running `Σ_t Σ_k w_t[k] / r_t[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct AlphaAccumulator<S> {
    inverse_sum: S,
    rounds: usize,
    actions: usize,
}

impl<S: Scalar> AlphaAccumulator<S> {
    pub fn new(actions: usize) -> Self {
        Self { inverse_sum: S::zero(), rounds: 0, actions }
    }

    /// Adds one round. An action with `r[k] = w[k]` (including both zero)
    /// contributes exactly one.
    pub fn record(&mut self, w: &MixedStrategy<S>, r: &RevelationProbs<S>) {
        let round: S = w
            .probs()
            .iter()
            .zip(r.probs())
            .map(|(&p, &q)| if p == q { S::one() } else { p / q })
            .sum();
        self.inverse_sum = self.inverse_sum + round;
        self.rounds += 1;
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// `(1/(T K) Σ 1/α)^-1`, clamped to `[1, K]` against rounding.
    pub fn finalize(&self) -> S {
        if self.rounds == 0 {
            return S::one();
        }
        let denom = S::of_usize(self.rounds) * S::of_usize(self.actions);
        (denom / self.inverse_sum).max(S::one()).min(S::of_usize(self.actions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(w: &[f64]) -> MixedStrategy<f64> {
        MixedStrategy::new(w.to_vec()).unwrap()
    }

    fn chain() -> Vec<Vec<usize>> {
        vec![vec![0], vec![0, 1], vec![0, 1, 2]]
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn simple_examples() {
        let w = ms(&[0.2, 0.3, 0.5]);
        assert!(close(revelation_simple(&w, &[0, 1], false).probs(), &[0.5, 0.5, 0.5]));
        assert_eq!(revelation_simple(&w, &[0, 1], true).probs(), w.probs());
        assert!(close(revelation_simple(&w, &[0, 1, 2], false).probs(), &[1.0, 1.0, 1.0]));
    }

    #[test]
    fn general_examples() {
        let w = ms(&[0.2, 0.3, 0.5]);
        let r = revelation_general(&w, &[0, 1, 2], &[0, 1, 2], &chain(), false).unwrap();
        assert!(close(r.probs(), &[0.2, 0.5, 1.0]));
        let reflexive = vec![vec![0], vec![1], vec![2]];
        let r = revelation_general(&w, &[0, 1, 2], &[0, 1, 2], &reflexive, false).unwrap();
        assert!(close(r.probs(), w.probs()));
        let r = revelation_general(&w, &[2], &[1, 2], &chain(), false).unwrap();
        assert!(close(r.probs(), &[0.2, 0.3, 0.8]));
        assert!(revelation_general(&w, &[0, 2], &[2], &chain(), false).is_err());
        assert_eq!(revelation_general(&w, &[0], &[0], &chain(), true).unwrap().probs(), w.probs());
    }

    #[test]
    fn general_reduces_to_simple_when_every_loser_reveals_all() {
        // the three losing actions share one curve, so each lies in the others'
        // epigraphs and every loser reveals the whole losing set
        use crate::bids::{QuadraticBid, StrategySet};
        let set = StrategySet::new(
            [5.0, 12.0, 12.0, 12.0]
                .iter()
                .map(|&d| QuadraticBid::new(0.1, d, 10.0).unwrap().into())
                .collect(),
        )
        .unwrap();
        let reveal: Vec<Vec<usize>> = (0..4).map(|k| set.reveal_set(k).to_vec()).collect();
        let losing = [1, 2, 3];
        for &k in &losing {
            assert!(losing.iter().all(|j| reveal[k].contains(j)));
        }
        let w = ms(&[0.1, 0.2, 0.3, 0.4]);
        let general = revelation_general(&w, &losing, &losing, &reveal, false).unwrap();
        let simple = revelation_simple(&w, &losing, false);
        assert_eq!(general, simple);
    }

    #[test]
    fn heuristic_examples() {
        let w = ms(&[0.2, 0.3, 0.5]);
        let none = WinnerHistory::new(3);
        let r = revelation_heuristic(&w, &[0, 1, 2], &chain(), &none, false);
        assert!(close(r.probs(), &[0.2, 0.5, 1.0]));

        let mut h = WinnerHistory::new(3);
        h.record(0, true);
        let r = revelation_heuristic(&w, &[2], &chain(), &h, false);
        assert!((r.probs()[2] - 0.8).abs() < 1e-12);
        assert_eq!(revelation_heuristic(&w, &[2], &chain(), &h, true).probs(), w.probs());
    }

    #[test]
    fn winner_history_semantics() {
        let mut h = WinnerHistory::new(3);
        h.record(0, true);
        assert!(h.contains(0));
        h.record(1, true);
        h.record(1, false);
        assert!(!h.contains(1));
        assert!(!h.contains(2));
        assert_eq!(h.members(), vec![0]);
    }

    #[test]
    fn alpha_examples() {
        let w = ms(&[0.2, 0.3, 0.5]);
        let mut bandit = AlphaAccumulator::new(3);
        let mut full = AlphaAccumulator::new(3);
        for _ in 0..10 {
            bandit.record(&w, &RevelationProbs::bandit(&w));
            full.record(&w, &RevelationProbs::full(3));
        }
        assert_eq!(bandit.finalize(), 1.0);
        assert!((full.finalize() - 3.0).abs() < 1e-12);

        let w = ms(&[0.5, 0.5]);
        let mut acc = AlphaAccumulator::new(2);
        acc.record(&w, &RevelationProbs(vec![0.5, 1.0]));
        assert!((acc.finalize() - 4.0 / 3.0).abs() < 1e-12);
    }
}
