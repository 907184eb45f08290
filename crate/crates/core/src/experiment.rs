//! Experiment configuration: the TOML schema, strategy-set generation and the
//! resolved view written to run manifests.
//!
//! A config describes one market and a list of arms. Each arm is a feedback
//! mode handed to every bidder that does not pin its own mode, so a single
//! file can compare Hedge, Exp3 and the extended estimators on identical
//! strategy sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bids::{BidFunction, StrategySet};
use crate::clearing::{MarketInstance, MAX_BISECTION_ITERS, PRICE_TOL};
use crate::error::{Error, Result};
use crate::learning::{default_eta, FeedbackMode};
use crate::payments::{LossMap, PaymentRule, VcgSign};
use crate::simulation::{BidderSetup, Simulation};

/// Version of the config and output schemas.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketConfig,
    pub bidders: Vec<BidderConfig>,
    pub learning: LearningConfig,
    pub runs: RunsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub demand: f64,
    pub payment_rule: PaymentRule,
    #[serde(default)]
    pub vcg_sign: VcgSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidderConfig {
    pub true_cost: BidFunction<f64>,
    #[serde(default)]
    pub strategies: StrategySpec,
    /// `[u_min, u_max]` for the utility-to-loss map.
    pub utility_bounds: Option<[f64; 2]>,
    /// Pins this bidder's feedback mode across all arms.
    pub mode: Option<FeedbackMode>,
    pub eta: Option<f64>,
    pub alpha_hat: Option<f64>,
}

/// How a bidder's actions are built from its true cost. Action 0 is always
/// the true cost itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    #[default]
    TrueOnly,
    /// Quadratic costs only: `K - 1` extra actions with coefficients shifted
    /// by uniform draws from the given intervals, clamped at zero.
    Perturb {
        actions: usize,
        linear: Option<[f64; 2]>,
        quadratic: Option<[f64; 2]>,
    },
    /// Prices scaled by each multiplier in turn; the first must be 1.
    PriceMultipliers { multipliers: Vec<f64> },
    /// Extra actions listed in full.
    Explicit { bids: Vec<BidFunction<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningConfig {
    pub arms: Vec<FeedbackMode>,
    pub horizon: usize,
    /// Fixed learning rate for every bidder; overrides the tuned defaults.
    pub eta: Option<f64>,
    /// Multiplies whichever learning rate is in effect.
    #[serde(default = "one")]
    pub eta_scale: f64,
    pub alpha_hat: Option<f64>,
    /// `α̂` as a fraction of each bidder's action count.
    pub alpha_hat_fraction: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunsConfig {
    pub seeds: Option<Vec<u64>>,
    pub count: Option<usize>,
    #[serde(default)]
    pub first_seed: u64,
    #[serde(default)]
    pub generation_seed: u64,
    #[serde(default = "yes")]
    pub freeze_strategy_sets: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    /// Also write every run's full report as JSON.
    #[serde(default)]
    pub keep_runs: bool,
}

fn default_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), formats: default_formats(), keep_runs: false }
    }
}

/// Parameters `sweep` can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Number of actions per perturbed bidder.
    Actions,
    AlphaHat,
    Eta,
    EtaScale,
    Horizon,
    Demand,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "k" | "K" | "actions" => Self::Actions,
            "alpha_hat" | "alpha" => Self::AlphaHat,
            "eta" => Self::Eta,
            "eta_scale" => Self::EtaScale,
            "t" | "T" | "horizon" => Self::Horizon,
            "q" | "Q" | "demand" => Self::Demand,
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter `{other}` (expected K, alpha_hat, eta, eta_scale, T or Q)"
                )))
            }
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Actions => "K",
            Self::AlphaHat => "alpha_hat",
            Self::Eta => "eta",
            Self::EtaScale => "eta_scale",
            Self::Horizon => "T",
            Self::Demand => "Q",
        }
    }
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn interval(name: &str, iv: Option<[f64; 2]>) -> Result<Option<[f64; 2]>> {
    match iv {
        Some([lo, hi]) if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
            Err(cfg(format!("{name} interval [{lo}, {hi}] is empty or not finite")))
        }
        other => Ok(other),
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

impl StrategySpec {
    fn generate(&self, truth: &BidFunction<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<BidFunction<f64>>> {
        let mut bids = vec![truth.clone()];
        match self {
            Self::TrueOnly => {}
            Self::Perturb { actions, linear, quadratic } => {
                let q = truth
                    .as_quadratic()
                    .ok_or_else(|| cfg("perturb strategies need a quadratic true cost"))?;
                if *actions == 0 {
                    return Err(cfg("perturb needs at least one action"));
                }
                let linear = interval("linear", *linear)?;
                let quadratic = interval("quadratic", *quadratic)?;
                for _ in 1..*actions {
                    let a = quadratic.map_or(q.a, |iv| (q.a + uniform(rng, iv)).max(0.0));
                    let d = linear.map_or(q.d, |iv| (q.d + uniform(rng, iv)).max(0.0));
                    bids.push(crate::bids::QuadraticBid::new(a, d, q.x_max)?.into());
                }
            }
            Self::PriceMultipliers { multipliers } => {
                if multipliers.first() != Some(&1.0) {
                    return Err(cfg("the first price multiplier must be 1 (the true cost)"));
                }
                for &m in &multipliers[1..] {
                    if !(m.is_finite() && m > 0.0) {
                        return Err(cfg(format!("price multiplier {m} must be positive")));
                    }
                    bids.push(match truth {
                        BidFunction::Quadratic(q) => {
                            crate::bids::QuadraticBid::new(q.a * m, q.d * m, q.x_max)?.into()
                        }
                        BidFunction::Discrete(d) => d.scale_prices(m)?.into(),
                    });
                }
            }
            Self::Explicit { bids: extra } => bids.extend(extra.iter().cloned()),
        }
        Ok(bids)
    }

    fn set_actions(&mut self, k: usize) -> bool {
        match self {
            Self::Perturb { actions, .. } => {
                *actions = k;
                true
            }
            _ => false,
        }
    }
}

/// Everything an arm needs for one bidder after defaults are filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedBidder {
    pub mode: FeedbackMode,
    pub eta: f64,
    pub eta_rule: String,
    pub alpha_hat: Option<f64>,
    pub actions: usize,
    pub utility_bounds: [f64; 2],
    pub utility_bounds_source: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedArm {
    pub label: String,
    pub bidders: Vec<ResolvedBidder>,
}

/// Tolerances and fixed choices baked into the engine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineDefaults {
    pub price_tolerance: f64,
    pub max_bisection_iterations: usize,
    pub domain_tolerance: f64,
    pub value_tolerance: f64,
    pub probability_tolerance: f64,
    pub discrete_search_cap: f64,
    pub rng: &'static str,
    pub bidder_streams: &'static str,
    pub discrete_tie_break: &'static str,
}

impl EngineDefaults {
    pub fn current() -> Self {
        Self {
            price_tolerance: PRICE_TOL,
            max_bisection_iterations: MAX_BISECTION_ITERS,
            domain_tolerance: crate::bids::DOMAIN_TOL,
            value_tolerance: crate::bids::VALUE_TOL,
            probability_tolerance: crate::learning::PROB_TOL,
            discrete_search_cap: crate::clearing::DISCRETE_SEARCH_CAP,
            rng: "ChaCha8, seed_from_u64(run seed)",
            bidder_streams: "stream = bidder index + 1",
            discrete_tie_break: "lexicographically smallest prefix vector",
        }
    }
}

/// Fully materialized experiment, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub demand: f64,
    pub payment_rule: PaymentRule,
    pub vcg_sign: VcgSign,
    pub losing_set_rule: crate::simulation::LosingSetRule,
    pub arms: Vec<ResolvedArm>,
    /// Strategy sets per bidder when they are frozen across runs.
    pub strategy_sets: Option<Vec<Vec<BidFunction<f64>>>>,
    pub engine: EngineDefaults,
}

impl ExperimentConfig {
    /// Parses and validates a config. Parse errors carry TOML line numbers.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| cfg(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bidders.is_empty() {
            return Err(cfg("at least one [[bidders]] entry is required"));
        }
        if self.learning.arms.is_empty() {
            return Err(cfg("learning.arms must list at least one feedback mode"));
        }
        if self.learning.horizon == 0 {
            return Err(cfg("learning.horizon must be at least 1"));
        }
        if !(self.learning.eta_scale.is_finite() && self.learning.eta_scale > 0.0) {
            return Err(cfg("learning.eta_scale must be positive"));
        }
        if self.learning.alpha_hat.is_some() && self.learning.alpha_hat_fraction.is_some() {
            return Err(cfg("set learning.alpha_hat or learning.alpha_hat_fraction, not both"));
        }
        if self.output.formats.is_empty() {
            return Err(cfg("output.formats must not be empty"));
        }
        self.seeds()?;
        // builds every arm once so bad bids, bad α̂ and infeasible demand
        // surface at load time
        for arm in 0..self.learning.arms.len() {
            self.build_simulation(arm, self.seeds()?[0])?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> Result<Vec<u64>> {
        match (&self.runs.seeds, self.runs.count) {
            (Some(_), Some(_)) => Err(cfg("set runs.seeds or runs.count, not both")),
            (Some(s), None) if s.is_empty() => Err(cfg("runs.seeds is empty")),
            (Some(s), None) => Ok(s.clone()),
            (None, Some(0)) => Err(cfg("runs.count must be at least 1")),
            (None, Some(n)) => Ok((0..n as u64).map(|i| self.runs.first_seed + i).collect()),
            (None, None) => Err(cfg("runs needs `seeds` or `count`")),
        }
    }

    /// Replaces the seed list.
    pub fn override_seeds(&mut self, seeds: Vec<u64>) -> Result<()> {
        if seeds.is_empty() {
            return Err(cfg("seed override is empty"));
        }
        self.runs.seeds = Some(seeds);
        self.runs.count = None;
        Ok(())
    }

    /// A copy with one parameter replaced, for sweeps.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(cfg(format!("{} must be a positive integer, got {v}", param.label())))
            }
        };
        match param {
            SweepParam::Actions => {
                let k = as_count(value)?;
                let touched = c.bidders.iter_mut().map(|b| b.strategies.set_actions(k)).filter(|&t| t).count();
                if touched == 0 {
                    return Err(cfg("sweeping K needs at least one bidder with perturb strategies"));
                }
            }
            SweepParam::AlphaHat => {
                c.learning.alpha_hat = Some(value);
                c.learning.alpha_hat_fraction = None;
                for b in &mut c.bidders {
                    b.alpha_hat = None;
                }
            }
            SweepParam::Eta => {
                c.learning.eta = Some(value);
                for b in &mut c.bidders {
                    b.eta = None;
                }
            }
            SweepParam::EtaScale => c.learning.eta_scale = value,
            SweepParam::Horizon => c.learning.horizon = as_count(value)?,
            SweepParam::Demand => c.market.demand = value,
        }
        c.validate()?;
        Ok(c)
    }

    fn generation_rng(&self, bidder: usize, run_seed: u64) -> ChaCha8Rng {
        let seed = if self.runs.freeze_strategy_sets {
            self.runs.generation_seed
        } else {
            self.runs.generation_seed ^ run_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(bidder as u64);
        rng
    }

    /// Strategy sets for every bidder in the run with seed `run_seed`.
    pub fn strategy_sets(&self, run_seed: u64) -> Result<Vec<Vec<BidFunction<f64>>>> {
        self.bidders
            .iter()
            .enumerate()
            .map(|(l, b)| {
                let mut rng = self.generation_rng(l, run_seed);
                b.strategies
                    .generate(&b.true_cost, &mut rng)
                    .map_err(|e| cfg(format!("bidders[{l}].strategies: {e}")))
            })
            .collect()
    }

    fn resolve_bidder(&self, arm: usize, l: usize, bids: &[BidFunction<f64>]) -> Result<ResolvedBidder> {
        let b = &self.bidders[l];
        let mode = b.mode.unwrap_or(self.learning.arms[arm]);
        let k = bids.len();
        let alpha_hat = b
            .alpha_hat
            .or(self.learning.alpha_hat)
            .or(self.learning.alpha_hat_fraction.map(|f| f * k as f64));
        let (base, rule) = match b.eta.or(self.learning.eta) {
            Some(eta) => (eta, "fixed".to_string()),
            None if k == 1 => (1.0, "single action: any rate".to_string()),
            None => {
                let eta = default_eta(mode, k, self.learning.horizon, alpha_hat)
                    .map_err(|e| match e {
                        Error::BadAlpha { .. } => e,
                        other => cfg(format!("bidders[{l}]: {other}")),
                    })?;
                let rule = match mode {
                    FeedbackMode::FullInformation => "sqrt(8 ln K / T)",
                    FeedbackMode::Bandit => "sqrt(2 ln K / (K T))",
                    _ => "sqrt(2 alpha_hat ln K / (K T))",
                };
                (eta, rule.to_string())
            }
        };
        let scale = self.learning.eta_scale;
        let (eta, eta_rule) = if scale == 1.0 { (base, rule) } else { (base * scale, format!("{scale} * {rule}")) };
        let (bounds, source) = match b.utility_bounds {
            Some(ub) => (LossMap::new(ub[0], ub[1]).map_err(|e| cfg(format!("bidders[{l}]: {e}")))?, "config"),
            None => (LossMap::from_strategies(bids)?, "strategy set"),
        };
        Ok(ResolvedBidder {
            mode,
            eta,
            eta_rule,
            alpha_hat,
            actions: k,
            utility_bounds: [bounds.u_min, bounds.u_max],
            utility_bounds_source: source,
        })
    }

    /// Resolves every arm against the strategy sets of `run_seed`.
    pub fn resolve_arm(&self, arm: usize, sets: &[Vec<BidFunction<f64>>]) -> Result<ResolvedArm> {
        let bidders = (0..self.bidders.len())
            .map(|l| self.resolve_bidder(arm, l, &sets[l]))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResolvedArm { label: self.learning.arms[arm].label().to_string(), bidders })
    }

    pub fn build_simulation(&self, arm: usize, run_seed: u64) -> Result<Simulation<f64>> {
        let sets = self.strategy_sets(run_seed)?;
        let resolved = self.resolve_arm(arm, &sets)?;
        let strategy_sets = sets
            .into_iter()
            .enumerate()
            .map(|(l, bids)| StrategySet::new(bids).map_err(|e| cfg(format!("bidders[{l}]: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let maps = resolved
            .bidders
            .iter()
            .map(|b| LossMap::new(b.utility_bounds[0], b.utility_bounds[1]))
            .collect::<Result<Vec<_>>>()?;
        let market = MarketInstance::new(
            self.market.demand,
            self.market.payment_rule,
            self.market.vcg_sign,
            strategy_sets,
            Some(maps),
        )?;
        let setups = resolved.bidders.iter().map(|b| BidderSetup { mode: b.mode, eta: b.eta }).collect();
        Simulation::new(market, setups, self.learning.horizon)
    }

    /// The manifest view of this config.
    pub fn resolve(&self) -> Result<Resolved> {
        let seeds = self.seeds()?;
        let sets = self.strategy_sets(seeds[0])?;
        let arms = (0..self.learning.arms.len())
            .map(|a| self.resolve_arm(a, &sets))
            .collect::<Result<Vec<_>>>()?;
        let rule = self.build_simulation(0, seeds[0])?.losing_set_rule();
        Ok(Resolved {
            schema_version: SCHEMA_VERSION,
            seeds,
            horizon: self.learning.horizon,
            demand: self.market.demand,
            payment_rule: self.market.payment_rule,
            vcg_sign: self.market.vcg_sign,
            losing_set_rule: rule,
            arms,
            strategy_sets: self.runs.freeze_strategy_sets.then_some(sets),
            engine: EngineDefaults::current(),
        })
    }
}
