//! Bid and cost curves, the epigraph (domination) relation between them, and
//! the losing sets derived from it.
//!
//! Action indices are zero-based throughout the crate; index `0` of every
//! [`StrategySet`] is the bidder's true cost function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute tolerance (MW) when matching a quantity against a bid domain.
pub const DOMAIN_TOL: f64 = 1e-9;
/// Absolute tolerance ($) when comparing two bid curves pointwise.
pub const VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidFamily {
    Quadratic,
    Discrete,
}

/// `a·x² + d·x` on `[0, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuadratic<S>", deny_unknown_fields)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct QuadraticBid<S> {
    pub a: S,
    pub d: S,
    pub x_max: S,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadratic<S> {
    a: S,
    d: S,
    x_max: S,
}

impl<S: Scalar> TryFrom<RawQuadratic<S>> for QuadraticBid<S> {
    type Error = Error;
    fn try_from(raw: RawQuadratic<S>) -> Result<Self> {
        QuadraticBid::new(raw.a, raw.d, raw.x_max)
    }
}

impl<S: Scalar> QuadraticBid<S> {
    pub fn new(a: S, d: S, x_max: S) -> Result<Self> {
        if !(a.is_finite() && d.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidBid("non-finite quadratic coefficient".into()));
        }
        if a < S::zero() || d < S::zero() {
            return Err(Error::InvalidBid(format!(
                "quadratic bid must be nondecreasing (a = {a}, d = {d})"
            )));
        }
        if x_max <= S::zero() {
            return Err(Error::InvalidBid(format!("capacity must be positive, got {x_max}")));
        }
        Ok(Self { a, d, x_max })
    }

    pub fn value(&self, x: S) -> S {
        (self.a * x + self.d) * x
    }

    /// Derivative at zero, the quantity compared against the marginal price.
    pub fn marginal_at_zero(&self) -> S {
        self.d
    }

    pub fn marginal(&self, x: S) -> S {
        self.d + S::of(2.0) * self.a * x
    }
}

/// Quantity/price steps accepted as a prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscrete<S>", into = "RawDiscrete<S>")]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct DiscreteBid<S> {
    steps: Vec<(S, S)>,
    // (cumulative quantity, cumulative value), starting at (0, 0)
    cumulative: Vec<(S, S)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscrete<S> {
    steps: Vec<(S, S)>,
}

impl<S: Scalar> TryFrom<RawDiscrete<S>> for DiscreteBid<S> {
    type Error = Error;
    fn try_from(raw: RawDiscrete<S>) -> Result<Self> {
        DiscreteBid::new(raw.steps)
    }
}

impl<S: Scalar> From<DiscreteBid<S>> for RawDiscrete<S> {
    fn from(bid: DiscreteBid<S>) -> Self {
        RawDiscrete { steps: bid.steps }
    }
}

impl<S: Scalar> DiscreteBid<S> {
    pub fn new(steps: Vec<(S, S)>) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(steps.len() + 1);
        cumulative.push((S::zero(), S::zero()));
        let (mut q, mut v) = (S::zero(), S::zero());
        for &(qty, price) in &steps {
            if !(qty.is_finite() && price.is_finite()) || qty <= S::zero() || price < S::zero() {
                return Err(Error::InvalidBid(format!(
                    "step ({qty}, {price}) needs quantity > 0 and price >= 0"
                )));
            }
            q = q + qty;
            v = v + qty * price;
            cumulative.push((q, v));
        }
        Ok(Self { steps, cumulative })
    }

    pub fn steps(&self) -> &[(S, S)] {
        &self.steps
    }

    /// `(quantity, value)` for every accepted prefix, including the empty one.
    pub fn prefixes(&self) -> &[(S, S)] {
        &self.cumulative
    }

    pub fn capacity(&self) -> S {
        self.cumulative.last().map(|c| c.0).unwrap_or_else(S::zero)
    }

    /// Index of the prefix whose cumulative quantity matches `x`.
    pub fn prefix_at(&self, x: S) -> Option<usize> {
        let tol = S::tol(DOMAIN_TOL, x);
        self.cumulative.iter().position(|&(q, _)| (q - x).abs() <= tol)
    }

    /// Same bid with every unit price scaled by `factor`.
    pub fn scale_prices(&self, factor: S) -> Result<Self> {
        Self::new(self.steps.iter().map(|&(q, p)| (q, p * factor)).collect())
    }
}

/// A bid or cost curve of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub enum BidFunction<S> {
    Quadratic(QuadraticBid<S>),
    Discrete(DiscreteBid<S>),
}

impl<S: Scalar> From<QuadraticBid<S>> for BidFunction<S> {
    fn from(b: QuadraticBid<S>) -> Self {
        BidFunction::Quadratic(b)
    }
}

impl<S: Scalar> From<DiscreteBid<S>> for BidFunction<S> {
    fn from(b: DiscreteBid<S>) -> Self {
        BidFunction::Discrete(b)
    }
}

impl<S: Scalar> BidFunction<S> {
    pub fn family(&self) -> BidFamily {
        match self {
            BidFunction::Quadratic(_) => BidFamily::Quadratic,
            BidFunction::Discrete(_) => BidFamily::Discrete,
        }
    }

    pub fn capacity(&self) -> S {
        match self {
            BidFunction::Quadratic(q) => q.x_max,
            BidFunction::Discrete(d) => d.capacity(),
        }
    }

    /// Value of the curve at `x`; `x` must lie in the domain.
    pub fn evaluate(&self, x: S) -> Result<S> {
        match self {
            BidFunction::Quadratic(q) => {
                let tol = S::tol(DOMAIN_TOL, q.x_max);
                if x < -tol || x > q.x_max + tol {
                    return Err(domain_err(x, q.x_max));
                }
                Ok(q.value(x.max(S::zero()).min(q.x_max)))
            }
            BidFunction::Discrete(d) => d
                .prefix_at(x)
                .map(|i| d.cumulative[i].1)
                .ok_or_else(|| domain_err(x, d.capacity())),
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticBid<S>> {
        match self {
            BidFunction::Quadratic(q) => Some(q),
            BidFunction::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteBid<S>> {
        match self {
            BidFunction::Discrete(d) => Some(d),
            BidFunction::Quadratic(_) => None,
        }
    }
}

fn domain_err<S: Scalar>(x: S, max: S) -> Error {
    Error::Domain { x: x.to_f64_lossy(), max: max.to_f64_lossy() }
}

/// Derivative at zero of a quadratic bid.
pub fn marginal_at_zero<S: Scalar>(bid: &QuadraticBid<S>) -> S {
    bid.marginal_at_zero()
}

/// True iff `k` lies in the epigraph of `j`: `j`'s domain contains `k`'s and
/// `j(x) <= k(x)` on all of `k`'s domain. Ties count as domination.
pub fn dominates<S: Scalar>(j: &BidFunction<S>, k: &BidFunction<S>) -> Result<bool> {
    match (j, k) {
        (BidFunction::Quadratic(j), BidFunction::Quadratic(k)) => Ok(quadratic_dominates(j, k)),
        (BidFunction::Discrete(j), BidFunction::Discrete(k)) => Ok(discrete_dominates(j, k)),
        _ => Err(Error::FamilyMismatch("cannot compare quadratic and discrete bids".into())),
    }
}

fn quadratic_dominates<S: Scalar>(j: &QuadraticBid<S>, k: &QuadraticBid<S>) -> bool {
    let m = k.x_max;
    if j.x_max < m - S::tol(DOMAIN_TOL, m) {
        return false;
    }
    // difference f(x) = A x² + D x, f(0) = 0; find its maximum on [0, m]
    let a = j.a - k.a;
    let d = j.d - k.d;
    let f = |x: S| (a * x + d) * x;
    let mut peak = f(m).max(S::zero());
    if a < S::zero() {
        let vertex = -d / (S::of(2.0) * a);
        if vertex > S::zero() && vertex < m {
            peak = peak.max(f(vertex));
        }
    }
    let scale = j.value(m).abs().max(k.value(m).abs());
    peak <= S::tol(VALUE_TOL, scale)
}

fn discrete_dominates<S: Scalar>(j: &DiscreteBid<S>, k: &DiscreteBid<S>) -> bool {
    k.prefixes().iter().all(|&(q, v)| match j.prefix_at(q) {
        Some(i) => j.prefixes()[i].1 <= v + S::tol(VALUE_TOL, v),
        None => false,
    })
}

/// A bidder's fixed menu of bids. Index 0 is the true cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct StrategySet<S> {
    bids: Vec<BidFunction<S>>,
    #[serde(skip)]
    reveal: Vec<Vec<usize>>,
}

impl<S: Scalar> StrategySet<S> {
    /// Every bid must share the true cost's family and stay inside its domain,
    /// so the true cost can be evaluated at any allocation.
    pub fn new(bids: Vec<BidFunction<S>>) -> Result<Self> {
        let Some(truth) = bids.first() else {
            return Err(Error::InvalidBid("strategy set is empty".into()));
        };
        let family = truth.family();
        for (k, bid) in bids.iter().enumerate() {
            if bid.family() != family {
                return Err(Error::FamilyMismatch(format!(
                    "action {k} is {:?} but the true cost is {family:?}",
                    bid.family()
                )));
            }
            let inside = match (truth, bid) {
                (BidFunction::Quadratic(t), BidFunction::Quadratic(b)) => {
                    b.x_max <= t.x_max + S::tol(DOMAIN_TOL, t.x_max)
                }
                (BidFunction::Discrete(t), BidFunction::Discrete(b)) => {
                    b.prefixes().iter().all(|&(q, _)| t.prefix_at(q).is_some())
                }
                _ => unreachable!(),
            };
            if !inside {
                return Err(Error::InvalidBid(format!(
                    "action {k} has quantities outside the true cost's domain"
                )));
            }
        }
        let reveal = (0..bids.len())
            .map(|k| {
                (0..bids.len())
                    .filter(|&j| dominates(&bids[j], &bids[k]).expect("family checked"))
                    .collect()
            })
            .collect();
        Ok(Self { bids, reveal })
    }

    pub fn len(&self) -> usize {
        self.bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty()
    }

    pub fn bids(&self) -> &[BidFunction<S>] {
        &self.bids
    }

    pub fn bid(&self, k: usize) -> &BidFunction<S> {
        &self.bids[k]
    }

    pub fn true_cost(&self) -> &BidFunction<S> {
        &self.bids[0]
    }

    pub fn family(&self) -> BidFamily {
        self.bids[0].family()
    }

    /// Largest capacity among the actions.
    pub fn max_capacity(&self) -> S {
        self.bids.iter().map(|b| b.capacity()).fold(S::zero(), S::max)
    }

    /// Actions whose curve lies at or below action `k`'s on `k`'s domain.
    pub fn reveal_set(&self, k: usize) -> &[usize] {
        &self.reveal[k]
    }

    pub fn reveal_sets(&self) -> &[Vec<usize>] {
        &self.reveal
    }

    /// Actions `k` whose curve lies in the epigraph of `played`; all of them
    /// lose whenever `played` loses.
    pub fn epigraph_losing_set(&self, played: usize) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.reveal[k].contains(&played)).collect()
    }
}

impl<'de, S: Scalar> Deserialize<'de> for StrategySet<S> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let bids = Vec::<BidFunction<S>>::deserialize(de)?;
        StrategySet::new(bids).map_err(serde::de::Error::custom)
    }
}

/// `{ j : dominates(bid_j, bid_k) }`; always contains `k`.
pub fn reveal_set<S: Scalar>(set: &StrategySet<S>, k: usize) -> Vec<usize> {
    set.reveal_set(k).to_vec()
}

/// Actions whose marginal cost at zero is at least `price`. Only defined for
/// quadratic strategy sets. A cleared price overshoots the exact one by up to
/// the bisection tolerance, so the comparison allows twice that slack.
pub fn losing_set_from_price<S: Scalar>(set: &StrategySet<S>, price: S) -> Result<Vec<usize>> {
    let threshold = price - S::of(2.0) * S::tol(crate::clearing::PRICE_TOL, price);
    set.bids()
        .iter()
        .enumerate()
        .filter_map(|(k, bid)| match bid.as_quadratic() {
            Some(q) => (q.marginal_at_zero() >= threshold).then_some(Ok(k)),
            None => Some(Err(Error::FamilyMismatch(
                "marginal price is undefined for discrete bids".into(),
            ))),
        })
        .collect()
}
