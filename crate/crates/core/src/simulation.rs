//! The repeated auction game and the measurements taken on it.
//!
//! Every round each bidder samples an action from its mixed strategy, the
//! market is cleared, and each bidder's whole counterfactual row (its utility
//! and loss under every alternative action with opponents held fixed) is
//! computed by re-clearing. Counterfactual rows drive regret for every bidder
//! and the loss estimate for full-information learners; the other learners
//! only see what their feedback mode allows.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bids::losing_set_from_price;
use crate::clearing::{ClearingResult, MarketFamily, MarketInstance};
use crate::error::{Error, Result};
use crate::feedback::{
    revelation_general, revelation_heuristic, revelation_simple, AlphaAccumulator, RevelationProbs,
    WinnerHistory,
};
use crate::learning::{
    estimate_bandit, estimate_extended, estimate_full, sample_action, FeedbackMode, Learner, MixedStrategy,
    RoundOutcome,
};
use crate::payments::PaymentRule;
use crate::scalar::Scalar;

/// How a losing bidder infers which of its other actions would also have lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LosingSetRule {
    /// Announced marginal price: every action with marginal cost at zero at or
    /// above the price loses.
    MarginalPrice,
    /// Every action whose curve lies in the epigraph of the played bid loses.
    Epigraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct BidderSetup<S> {
    pub mode: FeedbackMode,
    pub eta: S,
}

/// A configured repeated game.
#[derive(Debug, Clone)]
pub struct Simulation<S> {
    market: MarketInstance<S>,
    setups: Vec<BidderSetup<S>>,
    horizon: usize,
    keep_records: bool,
}

/// One bidder's view of one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct BidderRound<S> {
    pub action: usize,
    pub strategy: Vec<S>,
    pub allocation: S,
    pub payment: S,
    pub utility: S,
    pub loss: S,
    pub counterfactual_utilities: Vec<S>,
    pub counterfactual_losses: Vec<S>,
    /// Revelation probabilities fed to the estimator.
    pub revelation: Vec<S>,
    /// Exact revelation probabilities, used for feedback accounting.
    pub true_revelation: Vec<S>,
    /// Losing actions the bidder could infer (empty when it won).
    pub losing_set: Vec<usize>,
    /// Every action that would have lost against this round's opponents.
    pub full_losing_set: Vec<usize>,
    /// Winner set before this round's update.
    pub winner_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct RoundRecord<S> {
    pub round: usize,
    pub profile: Vec<usize>,
    pub clearing_cost: S,
    pub marginal_price: Option<S>,
    pub social_cost: S,
    pub bidders: Vec<BidderRound<S>>,
}

/// Cumulative regret after each round, in dollars and in loss units.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct RegretTrajectory<S> {
    pub dollars: Vec<S>,
    pub losses: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct BidderReport<S> {
    pub mode: FeedbackMode,
    pub eta: S,
    pub actions: usize,
    pub regret: RegretTrajectory<S>,
    pub alpha_avg: S,
    /// Expected-regret bound in loss units for the realized `alpha_avg`.
    pub regret_bound: S,
    /// The same bound scaled by the bidder's utility span.
    pub regret_bound_dollars: S,
    pub zero_allocations: usize,
    pub cce_gap: S,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct JointFrequency {
    pub profile: Vec<usize>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct RunReport<S> {
    pub seed: u64,
    pub horizon: usize,
    pub bidders: Vec<BidderReport<S>>,
    pub social_cost_per_round: Vec<S>,
    pub average_social_cost: S,
    pub truthful_social_cost: S,
    pub joint_distribution: Vec<JointFrequency>,
    /// Largest positive part of the per-bidder CCE gaps.
    pub cce_gap: S,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<S> {
    pub report: RunReport<S>,
    pub records: Vec<RoundRecord<S>>,
}

struct BidderState<S> {
    learner: Learner<S>,
    history: WinnerHistory,
    alpha: AlphaAccumulator<S>,
    rng: ChaCha8Rng,
}

/// Memoized clearings keyed by joint profile.
struct ClearingCache<'a, S> {
    market: &'a MarketInstance<S>,
    results: HashMap<Vec<usize>, ClearingResult<S>>,
}

impl<'a, S: Scalar> ClearingCache<'a, S> {
    fn get(&mut self, profile: &[usize]) -> Result<&ClearingResult<S>> {
        if !self.results.contains_key(profile) {
            let r = self.market.clear(profile)?;
            self.results.insert(profile.to_vec(), r);
        }
        Ok(&self.results[profile])
    }
}

impl<S: Scalar> Simulation<S> {
    pub fn new(market: MarketInstance<S>, setups: Vec<BidderSetup<S>>, horizon: usize) -> Result<Self> {
        if setups.len() != market.num_bidders() {
            return Err(Error::Config(format!(
                "{} learner setups for {} bidders",
                setups.len(),
                market.num_bidders()
            )));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least one round".into()));
        }
        for (l, s) in setups.iter().enumerate() {
            if !(s.eta > S::zero() && s.eta.is_finite()) {
                return Err(Error::Config(format!("bidder {l}: learning rate must be positive")));
            }
        }
        Ok(Self { market, setups, horizon, keep_records: true })
    }

    /// Drop per-round records after the report is built.
    pub fn without_records(mut self) -> Self {
        self.keep_records = false;
        self
    }

    pub fn market(&self) -> &MarketInstance<S> {
        &self.market
    }

    pub fn setups(&self) -> &[BidderSetup<S>] {
        &self.setups
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn losing_set_rule(&self) -> LosingSetRule {
        if self.market.family() == MarketFamily::ConvexSingleGood
            && self.market.payment_rule() == PaymentRule::MarginalPrice
        {
            LosingSetRule::MarginalPrice
        } else {
            LosingSetRule::Epigraph
        }
    }

    /// Plays the game for the configured horizon. Deterministic in `seed`.
    pub fn run(&self, seed: u64) -> Result<RunOutcome<S>> {
        let market = &self.market;
        let n = market.num_bidders();
        let mut states: Vec<BidderState<S>> = (0..n)
            .map(|l| {
                let k = market.bidders()[l].len();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(l as u64 + 1);
                Ok(BidderState {
                    learner: Learner::new(k, self.setups[l].eta)?,
                    history: WinnerHistory::new(k),
                    alpha: AlphaAccumulator::new(k),
                    rng,
                })
            })
            .collect::<Result<_>>()?;
        let mut cache = ClearingCache { market, results: HashMap::new() };
        let mut records = Vec::with_capacity(self.horizon);
        let rule = self.losing_set_rule();

        for round in 0..self.horizon {
            let strategies: Vec<MixedStrategy<S>> = states.iter().map(|s| s.learner.strategy()).collect();
            let profile: Vec<usize> = states
                .iter_mut()
                .zip(&strategies)
                .map(|(s, w)| sample_action(w, &mut s.rng))
                .collect();
            let wrap = |e: Error| Error::Round { round: round + 1, profile: profile.clone(), source: Box::new(e) };
            let realized = cache.get(&profile).map_err(wrap)?.clone();

            let mut bidder_rounds = Vec::with_capacity(n);
            for l in 0..n {
                let set = &market.bidders()[l];
                let k_count = set.len();
                let mut alt = profile.clone();
                let mut cf_util = Vec::with_capacity(k_count);
                let mut cf_loss = Vec::with_capacity(k_count);
                let mut full_losing_set = Vec::new();
                for k in 0..k_count {
                    alt[l] = k;
                    let r = cache.get(&alt).map_err(wrap)?;
                    cf_util.push(r.utilities[l]);
                    cf_loss.push(r.losses[l]);
                    if r.allocation[l] <= S::zero() {
                        full_losing_set.push(k);
                    }
                }

                let w = &strategies[l];
                let played = profile[l];
                let allocation = realized.allocation[l];
                let won = allocation > S::zero();
                let loss = realized.losses[l];
                let loser_loss = market.loss_maps()[l].loss(S::zero());
                let state = &mut states[l];
                let winner_set = state.history.members();
                let mode = self.setups[l].mode;

                let losing_set = if won || !mode.is_extended() {
                    Vec::new()
                } else {
                    match rule {
                        LosingSetRule::MarginalPrice => {
                            let price = realized.marginal_price.expect("convex clearing has a price");
                            losing_set_from_price(set, price).map_err(wrap)?
                        }
                        LosingSetRule::Epigraph => set.epigraph_losing_set(played),
                    }
                };

                let (estimate, used, exact) = match mode {
                    FeedbackMode::FullInformation => {
                        let r = RevelationProbs::full(k_count);
                        (estimate_full(&cf_loss), r.clone(), r)
                    }
                    FeedbackMode::Bandit => {
                        let r = RevelationProbs::bandit(w);
                        (estimate_bandit(played, loss, w), r.clone(), r)
                    }
                    FeedbackMode::ExtendedTrue | FeedbackMode::ExtendedHeuristic => {
                        let exact = match rule {
                            LosingSetRule::MarginalPrice => {
                                if !won && losing_set.iter().any(|k| !full_losing_set.contains(k)) {
                                    return Err(wrap(Error::InvalidRevelation(
                                        "price-inferred losing set disagrees with re-clearing".into(),
                                    )));
                                }
                                revelation_simple(w, &losing_set, won)
                            }
                            LosingSetRule::Epigraph => revelation_general(
                                w,
                                &losing_set,
                                &full_losing_set,
                                set.reveal_sets(),
                                won,
                            )
                            .map_err(wrap)?,
                        };
                        let used = if mode == FeedbackMode::ExtendedHeuristic {
                            revelation_heuristic(w, &losing_set, set.reveal_sets(), &state.history, won)
                        } else {
                            exact.clone()
                        };
                        let outcome = if won {
                            RoundOutcome::Won { played, loss }
                        } else {
                            RoundOutcome::Lost { played, losing_set: &losing_set }
                        };
                        let est = estimate_extended(&outcome, loser_loss, used.probs(), w).map_err(wrap)?;
                        (est, used, exact)
                    }
                };

                state.alpha.record(w, &exact);
                state.history.record(played, won);
                state.learner.update(&estimate).map_err(wrap)?;

                bidder_rounds.push(BidderRound {
                    action: played,
                    strategy: w.probs().to_vec(),
                    allocation,
                    payment: realized.payments[l],
                    utility: realized.utilities[l],
                    loss,
                    counterfactual_utilities: cf_util,
                    counterfactual_losses: cf_loss,
                    revelation: used.probs().to_vec(),
                    true_revelation: exact.probs().to_vec(),
                    losing_set,
                    full_losing_set,
                    winner_set,
                });
            }

            records.push(RoundRecord {
                round: round + 1,
                social_cost: market.social_cost(&realized.allocation).map_err(wrap)?,
                clearing_cost: realized.cost,
                marginal_price: realized.marginal_price,
                profile,
                bidders: bidder_rounds,
            });
        }

        let alphas: Vec<S> = states.iter().map(|s| s.alpha.finalize()).collect();
        let truthful = market.allocate(&vec![0; n])?;
        let report = self.report(seed, &records, &alphas, market.social_cost(&truthful.allocation)?)?;
        if !self.keep_records {
            records = Vec::new();
        }
        Ok(RunOutcome { report, records })
    }

    fn report(&self, seed: u64, records: &[RoundRecord<S>], alphas: &[S], truthful: S) -> Result<RunReport<S>> {
        let gaps = cce_gap(records);
        let t = self.horizon;
        let bidders = (0..self.market.num_bidders())
            .map(|l| {
                let k = self.market.bidders()[l].len();
                let bound = theorem_bound(k, t, alphas[l])?;
                Ok(BidderReport {
                    mode: self.setups[l].mode,
                    eta: self.setups[l].eta,
                    actions: k,
                    regret: regret(records, l),
                    alpha_avg: alphas[l],
                    regret_bound: bound,
                    regret_bound_dollars: bound * self.market.loss_maps()[l].span(),
                    zero_allocations: records.iter().filter(|r| r.bidders[l].allocation <= S::zero()).count(),
                    cce_gap: gaps.per_bidder[l],
                })
            })
            .collect::<Result<_>>()?;
        let mut joint: BTreeMap<&[usize], usize> = BTreeMap::new();
        for r in records {
            *joint.entry(&r.profile).or_default() += 1;
        }
        Ok(RunReport {
            seed,
            horizon: t,
            bidders,
            social_cost_per_round: records.iter().map(|r| r.social_cost).collect(),
            average_social_cost: social_cost(records),
            truthful_social_cost: truthful,
            joint_distribution: joint
                .into_iter()
                .map(|(p, count)| JointFrequency { profile: p.to_vec(), count })
                .collect(),
            cce_gap: gaps.max_positive,
        })
    }
}

/// Regret of bidder `bidder` after every prefix of `records`: best fixed
/// action's cumulative counterfactual utility minus realized cumulative utility
/// (and the same in losses, realized minus best).
pub fn regret<S: Scalar>(records: &[RoundRecord<S>], bidder: usize) -> RegretTrajectory<S> {
    let Some(first) = records.first() else {
        return RegretTrajectory { dollars: vec![], losses: vec![] };
    };
    let k = first.bidders[bidder].counterfactual_utilities.len();
    let mut cf_util = vec![S::zero(); k];
    let mut cf_loss = vec![S::zero(); k];
    let (mut util, mut loss) = (S::zero(), S::zero());
    let mut dollars = Vec::with_capacity(records.len());
    let mut losses = Vec::with_capacity(records.len());
    for r in records {
        let b = &r.bidders[bidder];
        for a in 0..k {
            cf_util[a] = cf_util[a] + b.counterfactual_utilities[a];
            cf_loss[a] = cf_loss[a] + b.counterfactual_losses[a];
        }
        util = util + b.utility;
        loss = loss + b.loss;
        dollars.push(cf_util.iter().copied().fold(S::neg_infinity(), S::max) - util);
        losses.push(loss - cf_loss.iter().copied().fold(S::infinity(), S::min));
    }
    RegretTrajectory { dollars, losses }
}

/// `sqrt(2 (K / α) T ln K)`, in loss units.
pub fn theorem_bound<S: Scalar>(actions: usize, horizon: usize, alpha_avg: S) -> Result<S> {
    let k = S::of_usize(actions);
    let slack = S::tol(1e-9, k);
    if !(alpha_avg >= S::one() - slack && alpha_avg <= k + slack) {
        return Err(Error::BadAlpha { alpha: alpha_avg.to_f64_lossy(), k: actions });
    }
    Ok((S::of(2.0) * (k / alpha_avg) * S::of_usize(horizon) * k.ln()).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct CceGap<S> {
    pub per_bidder: Vec<S>,
    pub max_positive: S,
}

/// How far the empirical distribution of played profiles is from a coarse
/// correlated equilibrium: per bidder, the best fixed deviation's average
/// utility minus the realized average utility.
pub fn cce_gap<S: Scalar>(records: &[RoundRecord<S>]) -> CceGap<S> {
    let Some(first) = records.first() else {
        return CceGap { per_bidder: vec![], max_positive: S::zero() };
    };
    let t = S::of_usize(records.len());
    let per_bidder: Vec<S> = (0..first.bidders.len())
        .map(|l| *regret(records, l).dollars.last().expect("nonempty") / t)
        .collect();
    let max_positive = per_bidder.iter().copied().fold(S::zero(), S::max);
    CceGap { per_bidder, max_positive }
}

/// Average over rounds of the total true production cost.
pub fn social_cost<S: Scalar>(records: &[RoundRecord<S>]) -> S {
    if records.is_empty() {
        return S::zero();
    }
    records.iter().map(|r| r.social_cost).sum::<S>() / S::of_usize(records.len())
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct Stat<S> {
    pub mean: S,
    pub std: S,
}

impl<S: Scalar> Stat<S> {
    pub fn of(values: impl IntoIterator<Item = S>) -> Self {
        let v: Vec<S> = values.into_iter().collect();
        if v.is_empty() {
            return Self { mean: S::nan(), std: S::nan() };
        }
        let n = S::of_usize(v.len());
        let mean = v.iter().copied().sum::<S>() / n;
        let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct BidderSummary<S> {
    pub mode: FeedbackMode,
    pub regret: Vec<Stat<S>>,
    pub loss_regret: Vec<Stat<S>>,
    pub final_regret: Stat<S>,
    pub final_loss_regret: Stat<S>,
    pub alpha_avg: Stat<S>,
    pub regret_bound: Stat<S>,
    pub zero_allocations: Stat<S>,
    pub cce_gap: Stat<S>,
}

/// Statistics across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct Summary<S> {
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub bidders: Vec<BidderSummary<S>>,
    /// Regret trajectories pooled over every (seed, bidder) pair.
    pub regret_all: Vec<Stat<S>>,
    pub loss_regret_all: Vec<Stat<S>>,
    pub final_regret_all: Stat<S>,
    pub alpha_avg_all: Stat<S>,
    pub social_cost: Stat<S>,
    pub truthful_social_cost: S,
    pub cce_gap: Stat<S>,
}

/// Folds per-seed reports (all from the same market shape) into a summary.
pub fn aggregate_runs<S: Scalar>(reports: &[RunReport<S>]) -> Result<Summary<S>> {
    let Some(first) = reports.first() else {
        return Err(Error::Config("no runs to aggregate".into()));
    };
    let horizon = first.horizon;
    let n = first.bidders.len();
    if reports.iter().any(|r| r.horizon != horizon || r.bidders.len() != n) {
        return Err(Error::Config("runs disagree on horizon or bidder count".into()));
    }
    let per_round = |f: &dyn Fn(&RunReport<S>, usize) -> Vec<S>| -> Vec<Stat<S>> {
        (0..horizon)
            .map(|t| Stat::of(reports.iter().flat_map(|r| f(r, t))))
            .collect()
    };
    let bidders = (0..n)
        .map(|l| BidderSummary {
            mode: first.bidders[l].mode,
            regret: per_round(&|r, t| vec![r.bidders[l].regret.dollars[t]]),
            loss_regret: per_round(&|r, t| vec![r.bidders[l].regret.losses[t]]),
            final_regret: Stat::of(reports.iter().map(|r| r.bidders[l].regret.dollars[horizon - 1])),
            final_loss_regret: Stat::of(reports.iter().map(|r| r.bidders[l].regret.losses[horizon - 1])),
            alpha_avg: Stat::of(reports.iter().map(|r| r.bidders[l].alpha_avg)),
            regret_bound: Stat::of(reports.iter().map(|r| r.bidders[l].regret_bound)),
            zero_allocations: Stat::of(reports.iter().map(|r| S::of_usize(r.bidders[l].zero_allocations))),
            cce_gap: Stat::of(reports.iter().map(|r| r.bidders[l].cce_gap)),
        })
        .collect();
    Ok(Summary {
        seeds: reports.iter().map(|r| r.seed).collect(),
        horizon,
        bidders,
        regret_all: per_round(&|r, t| r.bidders.iter().map(|b| b.regret.dollars[t]).collect()),
        loss_regret_all: per_round(&|r, t| r.bidders.iter().map(|b| b.regret.losses[t]).collect()),
        final_regret_all: Stat::of(
            reports.iter().flat_map(|r| r.bidders.iter().map(|b| b.regret.dollars[horizon - 1])),
        ),
        alpha_avg_all: Stat::of(reports.iter().flat_map(|r| r.bidders.iter().map(|b| b.alpha_avg))),
        social_cost: Stat::of(reports.iter().map(|r| r.average_social_cost)),
        truthful_social_cost: first.truthful_social_cost,
        cce_gap: Stat::of(reports.iter().map(|r| r.cce_gap)),
    })
}

/// Runs `run` for every seed on a pool of `workers` threads (`0` = rayon's
/// default). Results come back in seed order.
pub fn run_seeds<S, F>(seeds: &[u64], workers: usize, run: F) -> Result<Vec<RunReport<S>>>
where
    S: Scalar,
    F: Fn(u64) -> Result<RunReport<S>> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| run(s)).collect())
}
