//! Brute-force oracles and the property suites built on them.
//!
//! The oracles here deliberately avoid the production solvers: the convex
//! oracle scans a fixed price grid, the discrete oracle enumerates every
//! prefix vector, and the estimator checks take exact expectations by summing
//! over every action the bidder could have played. Suites accept injected
//! faults so negative controls can confirm they actually detect breakage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bids::{BidFunction, DiscreteBid, QuadraticBid, StrategySet};
use crate::clearing::{clear_convex, clear_discrete, DiscreteClearing, MarketInstance};
use crate::error::{Error, Result};
use crate::feedback::revelation_simple;
use crate::learning::{
    estimate_bandit, estimate_extended, extended_unchecked, mwu_update, LossEstimate, MixedStrategy,
    RoundOutcome,
};
use crate::payments::{PaymentRule, VcgSign};

/// Price (and allocation) from scanning `λ = i·step`, taking the first grid
/// price whose aggregate supply reaches `demand`.
pub fn convex_grid_oracle(bids: &[&QuadraticBid<f64>], demand: f64, step: f64) -> (f64, Vec<f64>) {
    let supply_at = |lambda: f64| -> f64 {
        bids.iter()
            .map(|b| ((lambda - b.d) / (2.0 * b.a)).clamp(0.0, b.x_max))
            .sum()
    };
    let top = bids.iter().map(|b| b.d + 2.0 * b.a * b.x_max).fold(0.0, f64::max);
    let last = (top / step).ceil() as u64 + 1;
    // coarse pass over every 1000th grid point, then the fine points in the
    // first coarse cell that reaches demand; supply is monotone so this finds
    // the same grid point as a full scan
    let coarse = 1000;
    let mut hit = last;
    let mut i = 0;
    while i <= last {
        if supply_at(i as f64 * step) >= demand - 1e-9 {
            hit = i;
            break;
        }
        i += coarse;
    }
    let start = hit.saturating_sub(coarse);
    let index = (start..=hit)
        .find(|&j| supply_at(j as f64 * step) >= demand - 1e-9)
        .unwrap_or(hit);
    let lambda = index as f64 * step;
    let alloc = bids
        .iter()
        .map(|b| ((lambda - b.d) / (2.0 * b.a)).clamp(0.0, b.x_max))
        .collect();
    (lambda, alloc)
}

/// Enumerates every prefix-length vector in lexicographic order and keeps the
/// first strictly cheaper feasible one.
pub fn discrete_enumeration_oracle(bids: &[&DiscreteBid<f64>], demand: f64) -> Result<DiscreteClearing<f64>> {
    fn walk(bids: &[&DiscreteBid<f64>], current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == bids.len() {
            out.push(current.clone());
            return;
        }
        for p in 0..bids[current.len()].prefixes().len() {
            current.push(p);
            walk(bids, current, out);
            current.pop();
        }
    }
    let mut all = Vec::new();
    walk(bids, &mut Vec::new(), &mut all);
    let max_value: f64 = bids.iter().map(|b| b.prefixes().last().unwrap().1).sum();
    let cost_tol = 1e-9f64.max(64.0 * f64::EPSILON * max_value.max(1.0));
    let qty_tol = 1e-9f64.max(64.0 * f64::EPSILON * demand.max(1.0));
    let mut best: Option<(f64, Vec<usize>)> = None;
    for v in all {
        let qty: f64 = v.iter().zip(bids).map(|(&p, b)| b.prefixes()[p].0).sum();
        let cost: f64 = v.iter().zip(bids).map(|(&p, b)| b.prefixes()[p].1).sum();
        if qty < demand - qty_tol {
            continue;
        }
        if best.as_ref().is_none_or(|(c, _)| cost < c - cost_tol) {
            best = Some((cost, v));
        }
    }
    let (cost, prefixes) = best.ok_or(Error::Infeasible {
        capacity: bids.iter().map(|b| b.capacity()).sum(),
        demand,
    })?;
    let allocation = bids.iter().zip(&prefixes).map(|(b, &p)| b.prefixes()[p].0).collect();
    Ok(DiscreteClearing { allocation, prefixes, cost })
}

/// Deliberate defects for negative-control runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    /// Halve the revelation probabilities of losing actions, so `r[k] < w[k]`.
    pub revelation_below_w: bool,
    /// Use the literal sign on the VCG externality.
    pub vcg_wrong_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub trials: usize,
    pub violations: usize,
    pub detail: String,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.trials > 0
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn random_quads(rng: &mut ChaCha8Rng) -> (Vec<QuadraticBid<f64>>, f64) {
    let n = rng.random_range(1..=6);
    let bids: Vec<_> = (0..n)
        .map(|_| {
            QuadraticBid::new(
                rng.random_range(0.05..0.5),
                rng.random_range(1.0..30.0),
                rng.random_range(1.0..20.0),
            )
            .unwrap()
        })
        .collect();
    let cap: f64 = bids.iter().map(|b| b.x_max).sum();
    let demand = rng.random_range(0.01..=1.0) * cap;
    (bids, demand)
}

fn random_discrete(rng: &mut ChaCha8Rng) -> (Vec<DiscreteBid<f64>>, f64) {
    let n = rng.random_range(1..=5);
    let bids: Vec<_> = (0..n)
        .map(|_| {
            let steps = (0..rng.random_range(1..=3))
                .map(|_| (rng.random_range(1..=5) as f64, rng.random_range(0..=8) as f64))
                .collect();
            DiscreteBid::new(steps).unwrap()
        })
        .collect();
    let cap: f64 = bids.iter().map(|b| b.capacity()).sum();
    let demand = rng.random_range(0.05..=1.0) * cap;
    (bids, demand)
}

/// Bisection against the 1e-5 price grid: price within 1e-4, allocations
/// within 1e-3 MW, KKT certificate within 1e-6.
pub fn convex_oracle_suite(instances: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..instances {
        let (bids, demand) = random_quads(&mut rng);
        let refs: Vec<_> = bids.iter().collect();
        let c = clear_convex(&refs, demand).expect("feasible by construction");
        let (price, alloc) = convex_grid_oracle(&refs, demand, 1e-5);
        let dp = (price - c.price).abs();
        let dx = alloc.iter().zip(&c.allocation).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = (worst.0.max(dp), worst.1.max(dx));
        let kkt = bids.iter().zip(&c.allocation).all(|(b, &x)| {
            if x <= 0.0 {
                b.d >= c.price - 1e-6
            } else if x >= b.x_max {
                b.marginal(b.x_max) <= c.price + 1e-6
            } else {
                (b.marginal(x) - c.price).abs() <= 1e-6
            }
        });
        let feasible = c.allocation.iter().sum::<f64>() >= demand - 1e-6;
        if dp > 1e-4 || dx > 1e-3 || !kkt || !feasible {
            violations += 1;
        }
    }
    PropertyResult {
        name: "convex clearing matches price-grid oracle",
        trials: instances,
        violations,
        detail: format!("max |Δλ| = {:.2e}, max |Δx| = {:.2e} MW", worst.0, worst.1),
    }
}

/// Branch-and-bound against full enumeration, exact equality.
pub fn discrete_oracle_suite(instances: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..instances {
        let (bids, demand) = random_discrete(&mut rng);
        let refs: Vec<_> = bids.iter().collect();
        if clear_discrete(&refs, demand).ok() != discrete_enumeration_oracle(&refs, demand).ok() {
            violations += 1;
        }
    }
    PropertyResult {
        name: "discrete clearing matches exhaustive enumerator",
        trials: instances,
        violations,
        detail: String::new(),
    }
}

fn single_action_market(bids: Vec<BidFunction<f64>>, demand: f64, sign: VcgSign) -> Result<MarketInstance<f64>> {
    let sets = bids
        .into_iter()
        .map(|b| StrategySet::new(vec![b]))
        .collect::<Result<_>>()?;
    MarketInstance::new(demand, PaymentRule::Vcg, sign, sets, None)
}

/// Removing a bidder never lowers the clearing cost, and VCG payments are at
/// least the bid value at the allocation.
pub fn vcg_externality_suite(instances: usize, seed: u64, faults: Faults) -> PropertyResult {
    let sign = if faults.vcg_wrong_sign { VcgSign::Paper } else { VcgSign::Standard };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut trials = 0;
    for i in 0..instances {
        let (bids, demand): (Vec<BidFunction<f64>>, f64) = if i % 2 == 0 {
            let (b, d) = random_quads(&mut rng);
            (b.into_iter().map(Into::into).collect(), d)
        } else {
            let (b, d) = random_discrete(&mut rng);
            (b.into_iter().map(Into::into).collect(), d)
        };
        let n = bids.len();
        let Ok(market) = single_action_market(bids, demand, sign) else { continue };
        let profile = vec![0; n];
        let Ok(result) = market.clear(&profile) else { continue };
        for l in 0..n {
            let Ok(without) = market.clear_without(&profile, l) else { continue };
            trials += 1;
            let x = result.allocation[l];
            let bid_value = market.bidders()[l].bid(0).evaluate(x).unwrap();
            let monotone = without >= result.cost - 1e-6;
            let covers_bid = x <= 0.0 || result.payments[l] >= bid_value - 1e-6;
            if !(monotone && covers_bid) {
                violations += 1;
            }
        }
    }
    PropertyResult {
        name: "VCG externality is nonnegative",
        trials,
        violations,
        detail: format!("sign convention {sign:?}"),
    }
}

/// One random single-bidder round under the marginal-price losing structure:
/// strategy, true loss vector, and the set of actions that would lose (all
/// sharing the loser's loss).
struct Round {
    w: MixedStrategy<f64>,
    losses: Vec<f64>,
    losing: Vec<usize>,
    loser_loss: f64,
}

fn random_round(rng: &mut ChaCha8Rng) -> Round {
    let k = rng.random_range(2..=8);
    let w = MixedStrategy::new(random_simplex(rng, k)).unwrap();
    let loser_loss = rng.random::<f64>();
    let losing: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
    let losses = (0..k)
        .map(|i| if losing.contains(&i) { loser_loss } else { rng.random::<f64>() })
        .collect();
    Round { w, losses, losing, loser_loss }
}

/// Extended estimate the bidder would form after playing `played`.
fn extended_after(round: &Round, played: usize, faults: Faults) -> Result<LossEstimate<f64>> {
    let won = !round.losing.contains(&played);
    let outcome = if won {
        RoundOutcome::Won { played, loss: round.losses[played] }
    } else {
        RoundOutcome::Lost { played, losing_set: &round.losing }
    };
    let mut r = revelation_simple(&round.w, &round.losing, won).probs().to_vec();
    if faults.revelation_below_w && !won {
        for &k in &round.losing {
            r[k] = 0.5 * round.w[k];
        }
        return Ok(extended_unchecked(&outcome, round.loser_loss, &r, &round.w));
    }
    estimate_extended(&outcome, round.loser_loss, &r, &round.w)
}

/// `E_{k~w}[l̃^(k)[i]]` computed exactly by summing over every playable action.
fn exact_expectation(round: &Round, faults: Faults) -> Result<Vec<f64>> {
    let k = round.w.len();
    let mut mean = vec![0.0; k];
    for played in 0..k {
        let est = extended_after(round, played, faults)?;
        for i in 0..k {
            mean[i] += round.w[played] * est.values()[i];
        }
    }
    Ok(mean)
}

/// The extended estimator's exact expectation equals the true loss vector.
pub fn unbiasedness_suite(configs: usize, seed: u64, faults: Faults) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..configs {
        let round = random_round(&mut rng);
        match exact_expectation(&round, faults) {
            Ok(mean) => {
                let err = mean.iter().zip(&round.losses).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst = worst.max(err);
                if err > 1e-12 {
                    violations += 1;
                }
            }
            Err(_) => violations += 1,
        }
    }
    PropertyResult {
        name: "extended estimator is unbiased",
        trials: configs,
        violations,
        detail: format!("max |E[l̃] - l| = {worst:.2e}"),
    }
}

/// Per-coordinate second moment of the extended estimator never exceeds the
/// bandit estimator's.
pub fn variance_dominance_suite(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..trials {
        let round = random_round(&mut rng);
        let k = round.w.len();
        let (mut ext, mut band) = (vec![0.0; k], vec![0.0; k]);
        for played in 0..k {
            let e = extended_after(&round, played, Faults::default()).expect("valid revelation");
            let b = estimate_bandit(played, round.losses[played], &round.w);
            for i in 0..k {
                ext[i] += round.w[played] * e.values()[i].powi(2);
                band[i] += round.w[played] * b.values()[i].powi(2);
            }
        }
        if ext.iter().zip(&band).any(|(e, b)| *e > b * (1.0 + 1e-12) + 1e-12) {
            violations += 1;
        }
    }
    PropertyResult {
        name: "extended estimator second moment <= bandit",
        trials,
        violations,
        detail: String::new(),
    }
}

/// Chains of multiplicative-weights updates stay on the simplex.
pub fn simplex_suite(trials: usize, steps: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..trials {
        let k = rng.random_range(1..=15);
        let mut w = MixedStrategy::new(random_simplex(&mut rng, k)).unwrap();
        let eta = rng.random_range(0.001..2.0);
        for _ in 0..steps {
            let l = LossEstimate((0..k).map(|_| rng.random_range(0.0..20.0)).collect());
            w = match mwu_update(&w, &l, eta) {
                Ok(next) => next,
                Err(_) => {
                    violations += 1;
                    break;
                }
            };
            let sum: f64 = w.probs().iter().sum();
            if (sum - 1.0).abs() > 1e-12 || w.probs().iter().any(|&p| p < 0.0) {
                violations += 1;
                break;
            }
        }
    }
    PropertyResult {
        name: "MWU preserves the simplex",
        trials,
        violations,
        detail: format!("{steps} chained updates per trial"),
    }
}

/// Adding a constant to every loss estimate leaves the update unchanged.
pub fn shift_invariance_suite(trials: usize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..trials {
        let k = rng.random_range(1..=15);
        let w = MixedStrategy::new(random_simplex(&mut rng, k)).unwrap();
        let eta = rng.random_range(0.001..2.0);
        let c = rng.random_range(-10.0..10.0);
        let l: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..10.0)).collect();
        let shifted: Vec<f64> = l.iter().map(|x| x + c).collect();
        let a = mwu_update(&w, &LossEstimate(l), eta).unwrap();
        let b = mwu_update(&w, &LossEstimate(shifted), eta).unwrap();
        if a.probs().iter().zip(b.probs()).any(|(x, y)| (x - y).abs() > 1e-12) {
            violations += 1;
        }
    }
    PropertyResult {
        name: "MWU is invariant to uniform loss shifts",
        trials,
        violations,
        detail: String::new(),
    }
}

/// Every suite at its default size.
pub fn run_all(faults: Faults) -> Vec<PropertyResult> {
    vec![
        convex_oracle_suite(100, 1),
        discrete_oracle_suite(500, 2),
        vcg_externality_suite(200, 3, faults),
        unbiasedness_suite(100, 4, faults),
        variance_dominance_suite(10_000, 5),
        simplex_suite(10_000, 100, 6),
        shift_invariance_suite(10_000, 7),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_oracle_table1() {
        let b = [
            QuadraticBid::new(0.1, 8.0, 10.0).unwrap(),
            QuadraticBid::new(0.095, 9.0, 10.0).unwrap(),
            QuadraticBid::new(0.105, 10.0, 10.0).unwrap(),
        ];
        let refs: Vec<_> = b.iter().collect();
        let (price, alloc) = convex_grid_oracle(&refs, 15.0, 1e-5);
        assert!((price - 9.97436).abs() < 2e-5, "{price}");
        assert!((alloc[0] - 9.8718).abs() < 1e-3 && (alloc[1] - 5.1282).abs() < 1e-3);
        assert_eq!(alloc[2], 0.0);
    }

    #[test]
    fn enumerator_examples() {
        let x = DiscreteBid::new(vec![(5.0, 1.0)]).unwrap();
        let y = DiscreteBid::new(vec![(5.0, 2.0)]).unwrap();
        let z = DiscreteBid::new(vec![(5.0, 3.0)]).unwrap();
        let r = discrete_enumeration_oracle(&[&x, &y, &z], 10.0).unwrap();
        assert_eq!((r.prefixes, r.cost), (vec![1, 1, 0], 15.0));
        assert!(discrete_enumeration_oracle(&[&x], 6.0).is_err());
    }

    #[test]
    fn suites_pass_without_faults() {
        for r in run_all(Faults::default()) {
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn negative_controls_fail() {
        let bad_r = Faults { revelation_below_w: true, ..Faults::default() };
        assert!(!unbiasedness_suite(100, 4, bad_r).passed());
        let bad_vcg = Faults { vcg_wrong_sign: true, ..Faults::default() };
        assert!(!vcg_externality_suite(200, 3, bad_vcg).passed());
    }
}
