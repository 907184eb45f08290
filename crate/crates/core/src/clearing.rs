//! Per-round market clearing for the two single-good families.
//!
//! The convex family (strictly convex quadratic bids) is cleared by
//! water-filling: every bidder supplies `clamp((λ - d) / 2a, 0, x_max)` at price
//! `λ`, and the price is bisected until aggregate supply meets demand. The
//! discrete family (step bids accepted as prefixes) is cleared by exact
//! branch-and-bound over prefix-length vectors.

use serde::{Deserialize, Serialize};

use crate::bids::{BidFamily, BidFunction, DiscreteBid, QuadraticBid, StrategySet, DOMAIN_TOL, VALUE_TOL};
use crate::error::{Error, Result};
use crate::payments::{pay_as_bid, pay_marginal, pay_vcg, LossMap, PaymentRule, VcgSign};
use crate::scalar::Scalar;

/// Price tolerance for the bisection.
pub const PRICE_TOL: f64 = 1e-9;
pub const MAX_BISECTION_ITERS: usize = 200;
/// Cap on the number of joint prefix choices the discrete solver will consider.
pub const DISCRETE_SEARCH_CAP: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketFamily {
    ConvexSingleGood,
    DiscreteSingleGood,
}

/// Solution of the convex allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexClearing<S> {
    pub allocation: Vec<S>,
    pub price: S,
    pub cost: S,
}

/// Solution of the discrete allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteClearing<S> {
    pub allocation: Vec<S>,
    /// Number of accepted steps per bidder.
    pub prefixes: Vec<usize>,
    pub cost: S,
}

fn supply<S: Scalar>(bids: &[&QuadraticBid<S>], excluded: Option<usize>, price: S) -> S {
    bids.iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != excluded)
        .map(|(_, b)| offer(b, price))
        .sum()
}

fn offer<S: Scalar>(bid: &QuadraticBid<S>, price: S) -> S {
    ((price - bid.d) / (S::of(2.0) * bid.a)).max(S::zero()).min(bid.x_max)
}

/// Clears strictly convex quadratic bids against demand `demand`.
pub fn clear_convex<S: Scalar>(bids: &[&QuadraticBid<S>], demand: S) -> Result<ConvexClearing<S>> {
    clear_convex_excluding(bids, demand, None)
}

fn clear_convex_excluding<S: Scalar>(
    bids: &[&QuadraticBid<S>],
    demand: S,
    excluded: Option<usize>,
) -> Result<ConvexClearing<S>> {
    if let Some(b) = bids.iter().find(|b| b.a <= S::zero()) {
        return Err(Error::InvalidBid(format!(
            "convex clearing needs strictly convex bids, got a = {}",
            b.a
        )));
    }
    let capacity: S = bids
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != excluded)
        .map(|(_, b)| b.x_max)
        .sum();
    if capacity < demand - S::tol(DOMAIN_TOL, demand) {
        return Err(infeasible(capacity, demand));
    }

    let mut lo = S::zero();
    let mut hi = bids
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != excluded)
        .map(|(_, b)| b.marginal(b.x_max))
        .fold(S::zero(), S::max);
    let tol = S::tol(PRICE_TOL, hi);
    for _ in 0..MAX_BISECTION_ITERS {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + (hi - lo) / S::of(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if supply(bids, excluded, mid) >= demand {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // supply(hi) >= demand, so reading allocations at hi keeps the point feasible
    let price = hi;
    let zero_tol = S::tol(DOMAIN_TOL, S::one());
    let allocation: Vec<S> = bids
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if Some(i) == excluded {
                return S::zero();
            }
            let x = offer(b, price);
            if x <= zero_tol {
                S::zero()
            } else {
                x
            }
        })
        .collect();
    let cost = bids.iter().zip(&allocation).map(|(b, &x)| b.value(x)).sum();
    Ok(ConvexClearing { allocation, price, cost })
}

/// Clears discrete step bids against demand `demand`. Returns the cheapest
/// feasible prefix choice; among equal-cost choices the lexicographically
/// smallest prefix-length vector wins.
pub fn clear_discrete<S: Scalar>(bids: &[&DiscreteBid<S>], demand: S) -> Result<DiscreteClearing<S>> {
    clear_discrete_excluding(bids, demand, None)
}

fn clear_discrete_excluding<S: Scalar>(
    bids: &[&DiscreteBid<S>],
    demand: S,
    excluded: Option<usize>,
) -> Result<DiscreteClearing<S>> {
    let combinations: f64 = bids.iter().map(|b| b.prefixes().len() as f64).product();
    if combinations > DISCRETE_SEARCH_CAP {
        return Err(Error::InstanceTooLarge { combinations, cap: DISCRETE_SEARCH_CAP });
    }
    let caps: Vec<S> = bids
        .iter()
        .enumerate()
        .map(|(i, b)| if Some(i) == excluded { S::zero() } else { b.capacity() })
        .collect();
    let capacity: S = caps.iter().copied().sum();
    let qty_tol = S::tol(DOMAIN_TOL, demand);
    if capacity < demand - qty_tol {
        return Err(infeasible(capacity, demand));
    }
    // remaining[i] = capacity of bidders i..n
    let mut remaining = vec![S::zero(); bids.len() + 1];
    for i in (0..bids.len()).rev() {
        remaining[i] = remaining[i + 1] + caps[i];
    }
    let max_value = bids
        .iter()
        .map(|b| b.prefixes().last().map(|p| p.1).unwrap_or_else(S::zero))
        .sum::<S>();

    let mut search = BranchAndBound {
        bids,
        demand,
        excluded,
        remaining,
        qty_tol,
        cost_tol: S::tol(VALUE_TOL, max_value),
        current: vec![0; bids.len()],
        best: None,
    };
    search.descend(0, S::zero(), S::zero());
    let (cost, prefixes) = search.best.expect("capacity check guarantees a feasible choice");
    let allocation = bids.iter().zip(&prefixes).map(|(b, &p)| b.prefixes()[p].0).collect();
    Ok(DiscreteClearing { allocation, prefixes, cost })
}

struct BranchAndBound<'a, S> {
    bids: &'a [&'a DiscreteBid<S>],
    demand: S,
    excluded: Option<usize>,
    remaining: Vec<S>,
    qty_tol: S,
    cost_tol: S,
    current: Vec<usize>,
    best: Option<(S, Vec<usize>)>,
}

impl<S: Scalar> BranchAndBound<'_, S> {
    fn beaten(&self, cost: S) -> bool {
        matches!(&self.best, Some((best, _)) if cost >= *best - self.cost_tol)
    }

    fn descend(&mut self, i: usize, qty: S, cost: S) {
        if i == self.bids.len() {
            if qty >= self.demand - self.qty_tol && !self.beaten(cost) {
                self.best = Some((cost, self.current.clone()));
            }
            return;
        }
        let options = if Some(i) == self.excluded { 1 } else { self.bids[i].prefixes().len() };
        for p in 0..options {
            let (q, v) = self.bids[i].prefixes()[p];
            // costs are nonnegative, so a partial cost already at the incumbent cannot win
            if self.beaten(cost + v) {
                break;
            }
            if qty + q + self.remaining[i + 1] < self.demand - self.qty_tol {
                continue;
            }
            self.current[i] = p;
            self.descend(i + 1, qty + q, cost + v);
        }
        self.current[i] = 0;
    }
}

fn infeasible<S: Scalar>(capacity: S, demand: S) -> Error {
    Error::Infeasible { capacity: capacity.to_f64_lossy(), demand: demand.to_f64_lossy() }
}

/// Allocation and objective of a cleared profile, before payments.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<S> {
    pub allocation: Vec<S>,
    pub price: Option<S>,
    pub cost: S,
}

/// Clears a list of same-family bids, optionally forcing one bidder to zero.
pub fn clear_bids<S: Scalar>(
    bids: &[&BidFunction<S>],
    demand: S,
    excluded: Option<usize>,
) -> Result<Allocation<S>> {
    let Some(first) = bids.first() else {
        return Err(infeasible(S::zero(), demand));
    };
    match first.family() {
        BidFamily::Quadratic => {
            let quads = bids
                .iter()
                .map(|b| b.as_quadratic().ok_or_else(mixed))
                .collect::<Result<Vec<_>>>()?;
            let c = clear_convex_excluding(&quads, demand, excluded)?;
            Ok(Allocation { allocation: c.allocation, price: Some(c.price), cost: c.cost })
        }
        BidFamily::Discrete => {
            let discs = bids
                .iter()
                .map(|b| b.as_discrete().ok_or_else(mixed))
                .collect::<Result<Vec<_>>>()?;
            let c = clear_discrete_excluding(&discs, demand, excluded)?;
            Ok(Allocation { allocation: c.allocation, price: None, cost: c.cost })
        }
    }
}

fn mixed() -> Error {
    Error::FamilyMismatch("market mixes quadratic and discrete bidders".into())
}

/// Everything a round's clearing produces for one joint profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearingResult<S> {
    pub allocation: Vec<S>,
    /// Objective value `J` of the allocation problem.
    pub cost: S,
    pub marginal_price: Option<S>,
    pub payments: Vec<S>,
    pub utilities: Vec<S>,
    pub losses: Vec<S>,
}

/// The auction: demand, payment rule and the bidders' strategy sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct MarketInstance<S> {
    demand: S,
    family: MarketFamily,
    payment_rule: PaymentRule,
    vcg_sign: VcgSign,
    bidders: Vec<StrategySet<S>>,
    loss_maps: Vec<LossMap<S>>,
}

impl<S: Scalar> MarketInstance<S> {
    /// Builds and validates a market. `loss_maps` defaults per bidder to
    /// [`LossMap::from_strategies`].
    pub fn new(
        demand: S,
        payment_rule: PaymentRule,
        vcg_sign: VcgSign,
        bidders: Vec<StrategySet<S>>,
        loss_maps: Option<Vec<LossMap<S>>>,
    ) -> Result<Self> {
        if !(demand.is_finite() && demand > S::zero()) {
            return Err(Error::Config(format!("demand must be positive, got {demand}")));
        }
        let Some(first) = bidders.first() else {
            return Err(Error::Config("market needs at least one bidder".into()));
        };
        let family = match first.family() {
            BidFamily::Quadratic => MarketFamily::ConvexSingleGood,
            BidFamily::Discrete => MarketFamily::DiscreteSingleGood,
        };
        if bidders.iter().any(|b| b.family() != first.family()) {
            return Err(mixed());
        }
        if payment_rule == PaymentRule::MarginalPrice && family != MarketFamily::ConvexSingleGood {
            return Err(Error::Config("marginal pricing requires the convex family".into()));
        }
        if family == MarketFamily::ConvexSingleGood {
            for (l, set) in bidders.iter().enumerate() {
                if let Some(k) = set.bids().iter().position(|b| b.as_quadratic().is_some_and(|q| q.a <= S::zero())) {
                    return Err(Error::Config(format!(
                        "bidder {l} action {k}: convex market needs a > 0"
                    )));
                }
            }
        } else {
            let combinations: f64 = bidders
                .iter()
                .map(|s| {
                    s.bids()
                        .iter()
                        .map(|b| b.as_discrete().map_or(1, |d| d.prefixes().len()))
                        .max()
                        .unwrap_or(1) as f64
                })
                .product();
            if combinations > DISCRETE_SEARCH_CAP {
                return Err(Error::InstanceTooLarge { combinations, cap: DISCRETE_SEARCH_CAP });
            }
        }
        let capacity: S = bidders.iter().map(|s| s.max_capacity()).sum();
        if capacity < demand - S::tol(DOMAIN_TOL, demand) {
            return Err(infeasible(capacity, demand));
        }
        let loss_maps = match loss_maps {
            Some(maps) if maps.len() != bidders.len() => {
                return Err(Error::Config(format!(
                    "{} utility bounds given for {} bidders",
                    maps.len(),
                    bidders.len()
                )))
            }
            Some(maps) => maps,
            None => bidders
                .iter()
                .map(|s| LossMap::from_strategies(s.bids()))
                .collect::<Result<_>>()?,
        };
        Ok(Self { demand, family, payment_rule, vcg_sign, bidders, loss_maps })
    }

    pub fn demand(&self) -> S {
        self.demand
    }

    pub fn family(&self) -> MarketFamily {
        self.family
    }

    pub fn payment_rule(&self) -> PaymentRule {
        self.payment_rule
    }

    pub fn vcg_sign(&self) -> VcgSign {
        self.vcg_sign
    }

    pub fn bidders(&self) -> &[StrategySet<S>] {
        &self.bidders
    }

    pub fn num_bidders(&self) -> usize {
        self.bidders.len()
    }

    pub fn loss_maps(&self) -> &[LossMap<S>] {
        &self.loss_maps
    }

    /// Number of actions per bidder.
    pub fn action_counts(&self) -> Vec<usize> {
        self.bidders.iter().map(|s| s.len()).collect()
    }

    fn profile_bids(&self, profile: &[usize]) -> Vec<&BidFunction<S>> {
        assert_eq!(profile.len(), self.bidders.len(), "profile length");
        self.bidders.iter().zip(profile).map(|(s, &k)| s.bid(k)).collect()
    }

    /// Allocation and objective for a joint profile.
    pub fn allocate(&self, profile: &[usize]) -> Result<Allocation<S>> {
        clear_bids(&self.profile_bids(profile), self.demand, None)
    }

    /// `J(B_-l)`: objective with bidder `excluded` forced to zero.
    pub fn clear_without(&self, profile: &[usize], excluded: usize) -> Result<S> {
        Ok(clear_bids(&self.profile_bids(profile), self.demand, Some(excluded))?.cost)
    }

    /// Clears `profile` and computes payments, utilities and losses.
    pub fn clear(&self, profile: &[usize]) -> Result<ClearingResult<S>> {
        let bids = self.profile_bids(profile);
        let alloc = clear_bids(&bids, self.demand, None)?;
        let n = bids.len();
        let mut payments = Vec::with_capacity(n);
        for l in 0..n {
            let x = alloc.allocation[l];
            let p = if x <= S::zero() {
                S::zero()
            } else {
                match self.payment_rule {
                    PaymentRule::MarginalPrice => {
                        pay_marginal(alloc.price.expect("convex clearing has a price"), x)
                    }
                    PaymentRule::PayAsBid => pay_as_bid(bids[l], x)?,
                    PaymentRule::Vcg => {
                        let without = clear_bids(&bids, self.demand, Some(l))?.cost;
                        pay_vcg(bids[l], x, alloc.cost, without, self.vcg_sign)?
                    }
                }
            };
            payments.push(p);
        }
        let mut utilities = Vec::with_capacity(n);
        let mut losses = Vec::with_capacity(n);
        for l in 0..n {
            let (u, loss) = crate::payments::utility_and_loss(
                payments[l],
                self.bidders[l].true_cost(),
                alloc.allocation[l],
                &self.loss_maps[l],
            )?;
            utilities.push(u);
            losses.push(loss);
        }
        Ok(ClearingResult {
            allocation: alloc.allocation,
            cost: alloc.cost,
            marginal_price: alloc.price,
            payments,
            utilities,
            losses,
        })
    }

    /// Total true production cost of an allocation.
    pub fn social_cost(&self, allocation: &[S]) -> Result<S> {
        self.bidders
            .iter()
            .zip(allocation)
            .map(|(s, &x)| s.true_cost().evaluate(x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{convex_grid_oracle, discrete_enumeration_oracle};
    use proptest::prelude::*;

    fn q(a: f64, d: f64, m: f64) -> QuadraticBid<f64> {
        QuadraticBid::new(a, d, m).unwrap()
    }

    fn disc(steps: &[(f64, f64)]) -> DiscreteBid<f64> {
        DiscreteBid::new(steps.to_vec()).unwrap()
    }

    fn table1() -> Vec<QuadraticBid<f64>> {
        vec![q(0.1, 8.0, 10.0), q(0.095, 9.0, 10.0), q(0.105, 10.0, 10.0)]
    }

    fn assert_kkt(bids: &[QuadraticBid<f64>], c: &ConvexClearing<f64>) {
        for (b, &x) in bids.iter().zip(&c.allocation) {
            if x <= 0.0 {
                assert!(b.d >= c.price - 1e-6);
            } else if x >= b.x_max {
                assert!(b.marginal(b.x_max) <= c.price + 1e-6);
            } else {
                assert!((b.marginal(x) - c.price).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn table1_clearing_matches_grid_oracle() {
        let bids = table1();
        let refs: Vec<_> = bids.iter().collect();
        let c = clear_convex(&refs, 15.0).unwrap();
        // frozen from the 1e-5 price-grid oracle: λ* = 9.97436, x* = (9.8718, 5.1282, 0)
        assert!((c.price - 9.974_36).abs() < 1e-4, "{}", c.price);
        assert!((c.allocation[0] - 9.8718).abs() < 1e-3);
        assert!((c.allocation[1] - 5.1282).abs() < 1e-3);
        assert_eq!(c.allocation[2], 0.0);
        let (price, alloc) = convex_grid_oracle(&refs, 15.0, 1e-5);
        assert!((price - c.price).abs() <= 1e-4);
        for (x, y) in alloc.iter().zip(&c.allocation) {
            assert!((x - y).abs() <= 1e-3);
        }
        assert_kkt(&bids, &c);
        assert!(c.allocation.iter().sum::<f64>() >= 15.0 - 1e-6);
    }

    #[test]
    fn convex_small_cases() {
        let one = q(0.1, 8.0, 10.0);
        let c = clear_convex(&[&one], 4.0).unwrap();
        assert!((c.allocation[0] - 4.0).abs() < 1e-6);
        assert!((c.price - 8.8).abs() < 1e-8);
        let sym = q(1.0, 0.0, 10.0);
        let c = clear_convex(&[&sym, &sym], 10.0).unwrap();
        assert!((c.allocation[0] - 5.0).abs() < 1e-6 && (c.allocation[1] - 5.0).abs() < 1e-6);
        assert!((c.price - 10.0).abs() < 1e-8);
    }

    #[test]
    fn convex_full_capacity_and_infeasible() {
        let b = table1();
        let refs: Vec<_> = b.iter().collect();
        let c = clear_convex(&refs, 30.0).unwrap();
        for x in &c.allocation {
            assert!((x - 10.0).abs() < 1e-9);
        }
        assert!(matches!(clear_convex(&refs, 30.5), Err(Error::Infeasible { .. })));
        let flat = q(0.0, 1.0, 1.0);
        assert!(clear_convex(&[&flat], 0.5).is_err());
    }

    #[test]
    fn discrete_examples() {
        let (a, b, c) = (disc(&[(10.0, 5.0)]), disc(&[(10.0, 6.0)]), disc(&[(5.0, 3.0)]));
        let r = clear_discrete(&[&a, &b], 10.0).unwrap();
        assert_eq!(r.prefixes, vec![1, 0]);
        assert_eq!(r.cost, 50.0);
        let r = clear_discrete(&[&a, &b], 15.0).unwrap();
        assert_eq!(r.prefixes, vec![1, 1]);
        assert_eq!(r.cost, 110.0);
        let (x, y) = (disc(&[(5.0, 1.0)]), disc(&[(5.0, 2.0)]));
        let r = clear_discrete(&[&x, &y, &c], 10.0).unwrap();
        assert_eq!(r.prefixes, vec![1, 1, 0]);
        assert_eq!(r.cost, 15.0);
        assert_eq!(r, discrete_enumeration_oracle(&[&x, &y, &c], 10.0).unwrap());
        assert!(matches!(clear_discrete(&[&a], 11.0), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn discrete_ties_prefer_short_prefixes_of_early_bidders() {
        let (a, b) = (disc(&[(10.0, 5.0)]), disc(&[(10.0, 5.0)]));
        let r = clear_discrete(&[&a, &b], 10.0).unwrap();
        assert_eq!(r.prefixes, vec![0, 1]);
    }

    #[test]
    fn discrete_size_cap() {
        let big = disc(&[(1.0, 1.0); 99]);
        let bids = vec![&big; 4];
        assert!(matches!(clear_discrete(&bids, 1.0), Err(Error::InstanceTooLarge { .. })));
    }

    fn market(bids: Vec<Vec<BidFunction<f64>>>, demand: f64, rule: PaymentRule) -> MarketInstance<f64> {
        let sets = bids.into_iter().map(|b| StrategySet::new(b).unwrap()).collect();
        MarketInstance::new(demand, rule, VcgSign::Standard, sets, None).unwrap()
    }

    #[test]
    fn clear_without_examples() {
        let m = market(
            table1().into_iter().map(|b| vec![b.into()]).collect(),
            15.0,
            PaymentRule::MarginalPrice,
        );
        let without = m.clear_without(&[0, 0, 0], 2).unwrap();
        let b = table1();
        let two = clear_convex(&[&b[0], &b[1]], 15.0).unwrap();
        assert!((without - two.cost).abs() < 1e-9);

        let d = market(
            vec![vec![disc(&[(10.0, 5.0)]).into()], vec![disc(&[(10.0, 6.0)]).into()]],
            10.0,
            PaymentRule::Vcg,
        );
        assert_eq!(d.clear_without(&[0, 0], 0).unwrap(), 60.0);
        let r = d.clear(&[0, 0]).unwrap();
        assert_eq!(r.payments, vec![60.0, 0.0]);
        assert_eq!(r.utilities, vec![10.0, 0.0]);

        let single = market(vec![vec![disc(&[(10.0, 5.0)]).into()]], 10.0, PaymentRule::Vcg);
        assert!(matches!(single.clear_without(&[0], 0), Err(Error::Infeasible { .. })));
        assert!(single.clear(&[0]).unwrap_err().is_infeasible());
    }

    #[test]
    fn market_validation() {
        let sets = vec![StrategySet::new(vec![disc(&[(10.0, 5.0)]).into()]).unwrap()];
        let r = MarketInstance::new(10.0, PaymentRule::MarginalPrice, VcgSign::Standard, sets.clone(), None);
        assert!(matches!(r, Err(Error::Config(_))));
        let r = MarketInstance::new(20.0, PaymentRule::PayAsBid, VcgSign::Standard, sets.clone(), None);
        assert!(matches!(r, Err(Error::Infeasible { .. })));
        let r = MarketInstance::new(-1.0, PaymentRule::PayAsBid, VcgSign::Standard, sets.clone(), None);
        assert!(r.is_err());
        let r = MarketInstance::new(10.0, PaymentRule::PayAsBid, VcgSign::Standard, sets, Some(vec![]));
        assert!(r.is_err());
    }

    #[test]
    fn marginal_price_payments_and_losers() {
        let m = market(
            table1().into_iter().map(|b| vec![b.into()]).collect(),
            15.0,
            PaymentRule::MarginalPrice,
        );
        let r = m.clear(&[0, 0, 0]).unwrap();
        let price = r.marginal_price.unwrap();
        assert!((r.payments[0] - 98.46).abs() < 0.01, "{}", r.payments[0]);
        assert!((r.payments[0] - price * r.allocation[0]).abs() < 1e-12);
        assert_eq!((r.payments[2], r.utilities[2]), (0.0, 0.0));
        for l in 0..3 {
            let c = m.bidders()[l].true_cost().evaluate(r.allocation[l]).unwrap();
            assert!((r.utilities[l] - (r.payments[l] - c)).abs() < 1e-12);
        }
    }

    fn arb_quads() -> impl Strategy<Value = (Vec<QuadraticBid<f64>>, f64)> {
        prop::collection::vec((0.05..0.5f64, 1.0..30.0f64, 1.0..20.0f64), 1..6).prop_flat_map(|v| {
            let bids: Vec<_> = v.iter().map(|&(a, d, m)| q(a, d, m)).collect();
            let cap: f64 = bids.iter().map(|b| b.x_max).sum();
            (Just(bids), 0.01..=cap)
        })
    }

    fn arb_discrete() -> impl Strategy<Value = (Vec<DiscreteBid<f64>>, f64)> {
        prop::collection::vec(prop::collection::vec((1u8..6, 0u8..8), 1..4), 1..5).prop_flat_map(|v| {
            let bids: Vec<_> = v
                .iter()
                .map(|steps| disc(&steps.iter().map(|&(q, p)| (q as f64, p as f64)).collect::<Vec<_>>()))
                .collect();
            let cap: f64 = bids.iter().map(|b| b.capacity()).sum();
            (Just(bids), 0.5..=cap)
        })
    }

    proptest! {
        #[test]
        fn convex_satisfies_kkt((bids, demand) in arb_quads()) {
            let refs: Vec<_> = bids.iter().collect();
            let c = clear_convex(&refs, demand).unwrap();
            assert_kkt(&bids, &c);
            prop_assert!(c.allocation.iter().sum::<f64>() >= demand - 1e-6);
        }

        #[test]
        fn discrete_matches_enumerator((bids, demand) in arb_discrete()) {
            let refs: Vec<_> = bids.iter().collect();
            prop_assert_eq!(clear_discrete(&refs, demand).unwrap(),
                            discrete_enumeration_oracle(&refs, demand).unwrap());
        }

        #[test]
        fn removing_a_bidder_never_lowers_cost((bids, demand) in arb_discrete(), who in 0usize..5) {
            let refs: Vec<_> = bids.iter().collect();
            let who = who % refs.len();
            let full = clear_discrete(&refs, demand).unwrap().cost;
            if let Ok(without) = clear_discrete_excluding(&refs, demand, Some(who)) {
                prop_assert!(without.cost >= full - 1e-9);
            }
        }

        #[test]
        fn removing_a_convex_bidder_never_lowers_cost((bids, demand) in arb_quads(), who in 0usize..6) {
            let refs: Vec<_> = bids.iter().collect();
            let who = who % refs.len();
            let full = clear_convex(&refs, demand).unwrap().cost;
            if let Ok(without) = clear_convex_excluding(&refs, demand, Some(who)) {
                prop_assert!(without.cost >= full - 1e-6);
            }
        }
    }
}
