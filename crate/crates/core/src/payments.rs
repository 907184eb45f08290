//! Payment rules, utilities and the utility-to-loss map.

use serde::{Deserialize, Serialize};

use crate::bids::BidFunction;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentRule {
    MarginalPrice,
    PayAsBid,
    Vcg,
}

/// Sign convention for the VCG externality term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VcgSign {
    /// `b(x*) + (J(B_-l) - J(B))`: the bidder is paid its externality.
    #[default]
    Standard,
    /// `b(x*) + (J(B) - J(B_-l))`, literal form.
    Paper,
}

/// Affine map from utility to a loss in `[0, 1]`: `u_max -> 0`, `u_min -> 1`,
/// clamped outside the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct LossMap<S> {
    pub u_min: S,
    pub u_max: S,
}

impl<S: Scalar> LossMap<S> {
    pub fn new(u_min: S, u_max: S) -> Result<Self> {
        if !(u_min.is_finite() && u_max.is_finite()) || u_min >= u_max {
            return Err(Error::Config(format!(
                "utility bounds need u_min < u_max, got [{u_min}, {u_max}]"
            )));
        }
        Ok(Self { u_min, u_max })
    }

    /// Default bounds for a strategy set: the worst utility is producing at
    /// full true-cost capacity for free, the best is being paid the largest
    /// bid value at full capacity with zero cost.
    pub fn from_strategies(bids: &[BidFunction<S>]) -> Result<Self> {
        let truth = &bids[0];
        let worst_cost = truth.evaluate(truth.capacity())?;
        let best_revenue = bids
            .iter()
            .map(|b| b.evaluate(b.capacity()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(S::zero(), S::max);
        Self::new(-worst_cost, best_revenue)
    }

    pub fn span(&self) -> S {
        self.u_max - self.u_min
    }

    pub fn loss(&self, utility: S) -> S {
        let s = ((utility - self.u_min) / self.span()).max(S::zero()).min(S::one());
        S::one() - s
    }
}

/// `λ*·x*`; losers are paid nothing.
pub fn pay_marginal<S: Scalar>(price: S, allocation: S) -> S {
    if allocation > S::zero() {
        price * allocation
    } else {
        S::zero()
    }
}

/// The bid's own value at the allocation.
pub fn pay_as_bid<S: Scalar>(bid: &BidFunction<S>, allocation: S) -> Result<S> {
    if allocation > S::zero() {
        bid.evaluate(allocation)
    } else {
        Ok(S::zero())
    }
}

/// Bid value plus the clearing-cost externality. `cost` is `J(B)` and
/// `cost_without` is `J(B_-l)`.
pub fn pay_vcg<S: Scalar>(
    bid: &BidFunction<S>,
    allocation: S,
    cost: S,
    cost_without: S,
    sign: VcgSign,
) -> Result<S> {
    let base = bid.evaluate(allocation)?;
    Ok(match sign {
        VcgSign::Standard => base + (cost_without - cost),
        VcgSign::Paper => base + (cost - cost_without),
    })
}

/// `u = p - c(x*)` and its loss under `map`.
pub fn utility_and_loss<S: Scalar>(
    payment: S,
    true_cost: &BidFunction<S>,
    allocation: S,
    map: &LossMap<S>,
) -> Result<(S, S)> {
    let u = payment - true_cost.evaluate(allocation)?;
    Ok((u, map.loss(u)))
}
