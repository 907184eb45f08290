//! Multiplicative-weights learners and the three loss-vector estimators:
//! full information (Hedge), importance-weighted bandit (Exp3) and the
//! partial-observation estimator that also credits losing actions revealed by
//! a lost round.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Slack allowed when checking simplex and revelation constraints.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    FullInformation,
    Bandit,
    ExtendedTrue,
    ExtendedHeuristic,
}

impl FeedbackMode {
    pub fn is_extended(self) -> bool {
        matches!(self, FeedbackMode::ExtendedTrue | FeedbackMode::ExtendedHeuristic)
    }

    pub fn label(self) -> &'static str {
        match self {
            FeedbackMode::FullInformation => "hedge",
            FeedbackMode::Bandit => "exp3",
            FeedbackMode::ExtendedTrue => "extended_true",
            FeedbackMode::ExtendedHeuristic => "extended_heuristic",
        }
    }
}

/// Probability vector over a bidder's actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct MixedStrategy<S>(Vec<S>);

impl<S: Scalar> MixedStrategy<S> {
    pub fn new(w: Vec<S>) -> Result<Self> {
        let sum: S = w.iter().copied().sum();
        let tol = S::tol(PROB_TOL, S::of_usize(w.len()));
        if w.is_empty() || w.iter().any(|&p| !(p >= S::zero())) || (sum - S::one()).abs() > tol {
            return Err(Error::InvalidRevelation(format!("not a probability vector (sum {sum})")));
        }
        Ok(Self(w))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "strategy over zero actions");
        Self(vec![S::one() / S::of_usize(k); k])
    }

    /// Softmax of log-weights, shifted by their maximum before exponentiating.
    pub fn from_log_weights(log_w: &[S]) -> Result<Self> {
        let max = log_w.iter().copied().fold(S::neg_infinity(), S::max);
        if !max.is_finite() {
            return Err(Error::NumericalUnderflow);
        }
        let mut w: Vec<S> = log_w.iter().map(|&x| (x - max).exp()).collect();
        let total: S = w.iter().copied().sum();
        if !(total > S::zero()) || !total.is_finite() {
            return Err(Error::NumericalUnderflow);
        }
        for p in &mut w {
            *p = *p / total;
        }
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[S] {
        &self.0
    }
}

impl<S> std::ops::Index<usize> for MixedStrategy<S> {
    type Output = S;
    fn index(&self, k: usize) -> &S {
        &self.0[k]
    }
}

/// Estimated loss vector; entries are nonnegative but may exceed one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct LossEstimate<S>(pub Vec<S>);

impl<S> LossEstimate<S> {
    pub fn values(&self) -> &[S] {
        &self.0
    }
}

/// One multiplicative-weights step: `w'[i] ∝ w[i]·exp(-η·l̃[i])`.
pub fn mwu_update<S: Scalar>(w: &MixedStrategy<S>, estimate: &LossEstimate<S>, eta: S) -> Result<MixedStrategy<S>> {
    assert!(eta > S::zero(), "learning rate must be positive");
    assert_eq!(w.len(), estimate.0.len(), "estimate length");
    let logs: Vec<S> = w.0.iter().zip(&estimate.0).map(|(&p, &l)| p.ln() - eta * l).collect();
    MixedStrategy::from_log_weights(&logs)
}

/// Inverse-CDF draw of an action index.
pub fn sample_action<S: Scalar, R: Rng + ?Sized>(w: &MixedStrategy<S>, rng: &mut R) -> usize {
    let u = S::of(rng.random::<f64>());
    let mut acc = S::zero();
    for (k, &p) in w.0.iter().enumerate() {
        acc = acc + p;
        if u < acc {
            return k;
        }
    }
    // rounding left the cumulative sum just below one
    w.0.iter().rposition(|&p| p > S::zero()).unwrap_or(0)
}

/// Hedge uses the counterfactual loss vector as is.
pub fn estimate_full<S: Scalar>(counterfactual: &[S]) -> LossEstimate<S> {
    LossEstimate(counterfactual.to_vec())
}

/// Exp3 importance-weighted estimate: only the played entry is nonzero.
pub fn estimate_bandit<S: Scalar>(played: usize, loss: S, w: &MixedStrategy<S>) -> LossEstimate<S> {
    let mut v = vec![S::zero(); w.len()];
    v[played] = loss / w[played];
    LossEstimate(v)
}

/// What the bidder observed after the round.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundOutcome<'a, S> {
    Won { played: usize, loss: S },
    Lost { played: usize, losing_set: &'a [usize] },
}

/// Partial-observation estimate. A win reduces to the bandit estimate; a loss
/// credits every action in the losing set with `loser_loss / r[k]`.
pub fn estimate_extended<S: Scalar>(
    outcome: &RoundOutcome<'_, S>,
    loser_loss: S,
    revelation: &[S],
    w: &MixedStrategy<S>,
) -> Result<LossEstimate<S>> {
    check_revelation(revelation, w)?;
    if let RoundOutcome::Lost { played, losing_set } = outcome {
        if !losing_set.contains(played) {
            return Err(Error::InvalidRevelation(format!(
                "played action {played} missing from its losing set"
            )));
        }
    }
    Ok(extended_unchecked(outcome, loser_loss, revelation, w))
}

pub(crate) fn extended_unchecked<S: Scalar>(
    outcome: &RoundOutcome<'_, S>,
    loser_loss: S,
    revelation: &[S],
    w: &MixedStrategy<S>,
) -> LossEstimate<S> {
    match *outcome {
        RoundOutcome::Won { played, loss } => estimate_bandit(played, loss, w),
        RoundOutcome::Lost { losing_set, .. } => {
            let mut v = vec![S::zero(); w.len()];
            for &k in losing_set {
                v[k] = loser_loss / revelation[k];
            }
            LossEstimate(v)
        }
    }
}

/// `w[k] <= r[k] <= 1` for every action, up to [`PROB_TOL`].
pub fn check_revelation<S: Scalar>(revelation: &[S], w: &MixedStrategy<S>) -> Result<()> {
    if revelation.len() != w.len() {
        return Err(Error::InvalidRevelation("length differs from the strategy".into()));
    }
    let tol = S::tol(PROB_TOL, S::one());
    for (k, (&r, &p)) in revelation.iter().zip(w.probs()).enumerate() {
        if !(r >= p - tol && r <= S::one() + tol) {
            return Err(Error::InvalidRevelation(format!(
                "r[{k}] = {r} outside [w[{k}] = {p}, 1]"
            )));
        }
    }
    Ok(())
}

/// Learning rates tuned for horizon `horizon`: `sqrt(8 ln K / T)` for Hedge,
/// `sqrt(2 ln K / (K T))` for Exp3 and `sqrt(2 α̂ ln K / (K T))` for the
/// extended estimators.
pub fn default_eta<S: Scalar>(mode: FeedbackMode, k: usize, horizon: usize, alpha_hat: Option<S>) -> Result<S> {
    if k < 2 || horizon == 0 {
        return Err(Error::Config(format!(
            "default learning rate needs K >= 2 and T >= 1 (K = {k}, T = {horizon})"
        )));
    }
    let (kk, t) = (S::of_usize(k), S::of_usize(horizon));
    let ln_k = kk.ln();
    let eta = match mode {
        FeedbackMode::FullInformation => (S::of(8.0) * ln_k / t).sqrt(),
        FeedbackMode::Bandit => (S::of(2.0) * ln_k / (kk * t)).sqrt(),
        FeedbackMode::ExtendedTrue | FeedbackMode::ExtendedHeuristic => {
            let alpha = alpha_hat
                .ok_or_else(|| Error::Config("extended feedback needs alpha_hat or an explicit eta".into()))?;
            if !(alpha >= S::one() && alpha <= kk) {
                return Err(Error::BadAlpha { alpha: alpha.to_f64_lossy(), k });
            }
            (S::of(2.0) * alpha * ln_k / (kk * t)).sqrt()
        }
    };
    Ok(eta)
}

/// A bidder's multiplicative-weights state, kept as log-weights and shifted
/// to a zero maximum after every update.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner<S> {
    log_weights: Vec<S>,
    eta: S,
}

impl<S: Scalar> Learner<S> {
    pub fn new(k: usize, eta: S) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("learner needs at least one action".into()));
        }
        if !(eta > S::zero() && eta.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {eta}")));
        }
        Ok(Self { log_weights: vec![S::zero(); k], eta })
    }

    pub fn eta(&self) -> S {
        self.eta
    }

    pub fn strategy(&self) -> MixedStrategy<S> {
        MixedStrategy::from_log_weights(&self.log_weights).expect("log-weights stay normalized")
    }

    pub fn update(&mut self, estimate: &LossEstimate<S>) -> Result<()> {
        for (lw, &l) in self.log_weights.iter_mut().zip(&estimate.0) {
            *lw = *lw - self.eta * l;
        }
        let max = self.log_weights.iter().copied().fold(S::neg_infinity(), S::max);
        if !max.is_finite() {
            return Err(Error::NumericalUnderflow);
        }
        for lw in &mut self.log_weights {
            *lw = *lw - max;
        }
        Ok(())
    }
}
