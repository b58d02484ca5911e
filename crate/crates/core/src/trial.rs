//! Trial configuration, block records and the block-level randomization
//! schemes.
//!
//! A trial consists of up to `K` blocks of `T` time points each. Every block
//! receives a single binary assignment drawn at its start with a propensity
//! that may depend on the assignments of earlier blocks only.

use std::fmt;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, HajekSums, PairSums};

/// Largest `K` accepted by [`enumerate_paths`].
pub const MAX_ENUMERATION_BLOCKS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Each consecutive pair of blocks receives one treatment and one control
    /// block in random order.
    Pairwise,
    /// Assignment probability is steered towards equal arm counts but never
    /// reaches 0 or 1.
    Restricted,
    /// Independent coin flip per block.
    Unrestricted,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Pairwise => "pairwise",
            Scheme::Restricted => "restricted",
            Scheme::Unrestricted => "unrestricted",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The block summary `f(Y_{k,1:T})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryFn {
    #[default]
    BlockMean,
    BlockSum,
    LastValue,
}

impl SummaryFn {
    pub fn apply(self, outcomes: &[f64]) -> Result<f64> {
        estimators::block_summary(outcomes, self)
    }
}

/// Treatment arm of a block. Serialized as `0` (control) or `1` (treatment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub fn from_bit(bit: u8) -> Option<Arm> {
        match bit {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treatment),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treatment => 1,
        }
    }

    pub fn is_treated(self) -> bool {
        self == Arm::Treatment
    }

    pub fn complement(self) -> Arm {
        match self {
            Arm::Control => Arm::Treatment,
            Arm::Treatment => Arm::Control,
        }
    }
}

impl From<Arm> for u8 {
    fn from(arm: Arm) -> u8 {
        arm.bit()
    }
}

impl TryFrom<u8> for Arm {
    type Error = String;

    fn try_from(bit: u8) -> std::result::Result<Arm, String> {
        Arm::from_bit(bit).ok_or_else(|| format!("assignment must be 0 or 1, got {bit}"))
    }
}

/// Immutable design parameters of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrialConfig")]
pub struct TrialConfig {
    /// Maximum number of blocks `K`.
    #[serde(rename = "k")]
    pub num_blocks: usize,
    /// Time points per block `T`.
    #[serde(rename = "t")]
    pub block_len: usize,
    pub alpha: f64,
    /// Mixture scale of the confidence sequence.
    pub eta: f64,
    pub scheme: Scheme,
    pub restricted_clip_eps: f64,
    pub summary_fn: SummaryFn,
    /// Known bound `M` on the absolute outcome, if any.
    pub outcome_bound: Option<f64>,
    pub base_propensity: f64,
    pub seed: u64,
}

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_ETA: f64 = 1.0;
pub const DEFAULT_CLIP_EPS: f64 = 0.05;
pub const DEFAULT_BASE_PROPENSITY: f64 = 0.5;

impl TrialConfig {
    /// Unrestricted design with default parameters.
    pub fn new(num_blocks: usize, block_len: usize) -> Self {
        TrialConfig {
            num_blocks,
            block_len,
            alpha: DEFAULT_ALPHA,
            eta: DEFAULT_ETA,
            scheme: Scheme::Unrestricted,
            restricted_clip_eps: DEFAULT_CLIP_EPS,
            summary_fn: SummaryFn::BlockMean,
            outcome_bound: None,
            base_propensity: DEFAULT_BASE_PROPENSITY,
            seed: 0,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, message: impl Into<String>) -> Result<()> {
            Err(Error::InvalidConfig { field, message: message.into() })
        }
        if self.num_blocks < 1 {
            return bad("k", "must be at least 1");
        }
        if self.block_len < 1 {
            return bad("t", "must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta", format!("must be a positive finite number, got {}", self.eta));
        }
        if !(self.restricted_clip_eps > 0.0 && self.restricted_clip_eps < 0.5) {
            return bad(
                "restricted_clip_eps",
                format!("must lie in (0, 0.5), got {}", self.restricted_clip_eps),
            );
        }
        if !(self.base_propensity > 0.0 && self.base_propensity < 1.0) {
            return bad(
                "base_propensity",
                format!("must lie in (0, 1), got {}", self.base_propensity),
            );
        }
        if let Some(m) = self.outcome_bound {
            if !(m > 0.0 && m.is_finite()) {
                return bad("outcome_bound", format!("must be a positive finite number, got {m}"));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrialConfig {
    k: usize,
    t: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_eta")]
    eta: f64,
    #[serde(default = "default_scheme")]
    scheme: Scheme,
    #[serde(default = "default_clip_eps")]
    restricted_clip_eps: f64,
    #[serde(default)]
    summary_fn: SummaryFn,
    #[serde(default)]
    outcome_bound: Option<f64>,
    #[serde(default = "default_base_propensity")]
    base_propensity: f64,
    #[serde(default)]
    seed: u64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_eta() -> f64 {
    DEFAULT_ETA
}
fn default_scheme() -> Scheme {
    Scheme::Unrestricted
}
fn default_clip_eps() -> f64 {
    DEFAULT_CLIP_EPS
}
fn default_base_propensity() -> f64 {
    DEFAULT_BASE_PROPENSITY
}

impl TrialConfig {
    /// Parses a JSON config. Range violations name the offending field;
    /// structural problems (unknown or missing keys, wrong types) are
    /// reported against `config`.
    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let raw: RawTrialConfig = serde_json::from_value(value)
            .map_err(|e| Error::InvalidConfig { field: "config", message: e.to_string() })?;
        TrialConfig::try_from(raw)
    }
}

impl TryFrom<RawTrialConfig> for TrialConfig {
    type Error = Error;

    fn try_from(raw: RawTrialConfig) -> Result<Self> {
        let config = TrialConfig {
            num_blocks: raw.k,
            block_len: raw.t,
            alpha: raw.alpha,
            eta: raw.eta,
            scheme: raw.scheme,
            restricted_clip_eps: raw.restricted_clip_eps,
            summary_fn: raw.summary_fn,
            outcome_bound: raw.outcome_bound,
            base_propensity: raw.base_propensity,
            seed: raw.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// The assignment made at the start of a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub k: usize,
    pub arm: Arm,
    /// Probability of treatment used by the design for this block.
    pub propensity: f64,
    /// The arm was forced as the complement of the pair opener. The
    /// propensity is then not a valid weight for this block alone.
    #[serde(default)]
    pub forced: bool,
}

/// One closed treatment period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub k: usize,
    pub assignment: Arm,
    pub propensity: f64,
    #[serde(default)]
    pub forced: bool,
    pub outcomes: Vec<f64>,
    /// Per-time-point covariate payloads. Stored, never used by the estimators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<serde_json::Value>>,
    pub summary: f64,
}

impl BlockRecord {
    pub fn new(assignment: Assignment, outcomes: Vec<f64>, summary_fn: SummaryFn) -> Result<Self> {
        let summary = summary_fn.apply(&outcomes)?;
        Ok(BlockRecord {
            k: assignment.k,
            assignment: assignment.arm,
            propensity: assignment.propensity,
            forced: assignment.forced,
            outcomes,
            covariates: None,
            summary,
        })
    }

    pub fn with_covariates(mut self, covariates: Vec<serde_json::Value>) -> Self {
        self.covariates = Some(covariates);
        self
    }

    pub fn header(&self) -> Assignment {
        Assignment {
            k: self.k,
            arm: self.assignment,
            propensity: self.propensity,
            forced: self.forced,
        }
    }
}

/// Result of [`next_propensity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propensity {
    /// Treatment probability in (0, 1).
    pub g: f64,
    /// The next block closes a pair; its arm is the complement of the
    /// previous block's arm and must not be drawn.
    pub deterministic_complement: bool,
}

/// Treatment probability for the next block, given the closed blocks so far.
///
/// Only the assignments of `blocks` are read.
pub fn next_propensity(config: &TrialConfig, blocks: &[BlockRecord]) -> Result<Propensity> {
    let n_treated = blocks.iter().filter(|b| b.assignment.is_treated()).count();
    let prev = blocks.last().map(|b| b.assignment);
    propensity_for(config, blocks.len() + 1, n_treated, prev)
}

/// Propensity rule on a bare assignment history.
pub fn propensity_for_history(config: &TrialConfig, history: &[Arm]) -> Result<Propensity> {
    let n_treated = history.iter().filter(|a| a.is_treated()).count();
    propensity_for(config, history.len() + 1, n_treated, history.last().copied())
}

fn propensity_for(
    config: &TrialConfig,
    next_k: usize,
    n_treated: usize,
    prev: Option<Arm>,
) -> Result<Propensity> {
    let k_max = config.num_blocks;
    if next_k > k_max {
        return Err(Error::TrialComplete { k_max });
    }
    let fresh = |g| Ok(Propensity { g, deterministic_complement: false });
    match config.scheme {
        Scheme::Unrestricted => fresh(config.base_propensity),
        Scheme::Pairwise => {
            if next_k % 2 == 1 || prev.is_none() {
                fresh(config.base_propensity)
            } else {
                Ok(Propensity { g: config.base_propensity, deterministic_complement: true })
            }
        }
        Scheme::Restricted => {
            let eps = config.restricted_clip_eps;
            let target = k_max.div_ceil(2) as f64;
            let remaining = (k_max - next_k + 1) as f64;
            let raw = (target - n_treated as f64) / remaining;
            fresh(raw.clamp(eps, 1.0 - eps))
        }
    }
}

/// Draws the arm of a block with treatment probability `g`.
pub fn draw_assignment<R: Rng + ?Sized>(g: f64, rng: &mut R) -> Result<Arm> {
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::PositivityViolation { g });
    }
    let u: f64 = rng.random();
    Ok(if u < g { Arm::Treatment } else { Arm::Control })
}

/// Assignment for the next block: either drawn, or forced as the pair
/// complement.
pub fn assign_next<R: Rng + ?Sized>(
    config: &TrialConfig,
    blocks: &[BlockRecord],
    rng: &mut R,
) -> Result<Assignment> {
    let p = next_propensity(config, blocks)?;
    let k = blocks.len() + 1;
    if p.deterministic_complement {
        let prev = blocks.last().expect("pair closer always has an opener").assignment;
        Ok(Assignment { k, arm: prev.complement(), propensity: p.g, forced: true })
    } else {
        let arm = draw_assignment(p.g, rng)?;
        Ok(Assignment { k, arm, propensity: p.g, forced: false })
    }
}

/// Number of treatment paths a scheme can generate over `K` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathCount {
    pub scheme: Scheme,
    pub k: usize,
    /// Exact number of paths with positive probability.
    pub count: BigUint,
    /// Closed-form count in the usual design tables. For the restricted
    /// scheme this counts only the balanced paths.
    pub balanced_approx: BigUint,
}

pub fn count_treatment_paths(scheme: Scheme, k: usize) -> PathCount {
    let pow2 = |e: usize| BigUint::from(1u8) << e;
    let (count, balanced_approx) = match scheme {
        Scheme::Unrestricted => (pow2(k), pow2(k)),
        Scheme::Pairwise => {
            let c = pow2(k.div_ceil(2));
            (c.clone(), c)
        }
        // Clipping keeps every step's probability strictly inside (0, 1), so
        // every binary sequence is reachable.
        Scheme::Restricted => {
            let approx = if k.is_multiple_of(2) {
                binomial(k, k / 2)
            } else {
                binomial(k, (k - 1) / 2) * 2u8
            };
            (pow2(k), approx)
        }
    };
    PathCount { scheme, k, count, balanced_approx }
}

fn binomial(n: usize, r: usize) -> BigUint {
    let r = r.min(n - r);
    let mut acc = BigUint::from(1u8);
    for i in 0..r {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentPath {
    pub arms: Vec<Arm>,
    pub probability: f64,
}

/// All positive-probability assignment paths of `config.num_blocks` blocks
/// with their exact probabilities.
pub fn enumerate_paths(config: &TrialConfig) -> Result<Vec<TreatmentPath>> {
    let k = config.num_blocks;
    if k > MAX_ENUMERATION_BLOCKS {
        return Err(Error::EnumerationLimit { k, max: MAX_ENUMERATION_BLOCKS });
    }
    let mut out = Vec::new();
    let mut history = Vec::with_capacity(k);
    extend_paths(config, &mut history, 1.0, &mut out)?;
    Ok(out)
}

fn extend_paths(
    config: &TrialConfig,
    history: &mut Vec<Arm>,
    prob: f64,
    out: &mut Vec<TreatmentPath>,
) -> Result<()> {
    if history.len() == config.num_blocks {
        out.push(TreatmentPath { arms: history.clone(), probability: prob });
        return Ok(());
    }
    let p = propensity_for_history(config, history)?;
    let branches: Vec<(Arm, f64)> = if p.deterministic_complement {
        vec![(history[history.len() - 1].complement(), 1.0)]
    } else {
        vec![(Arm::Treatment, p.g), (Arm::Control, 1.0 - p.g)]
    };
    for (arm, q) in branches {
        history.push(arm);
        extend_paths(config, history, prob * q, out)?;
        history.pop();
    }
    Ok(())
}

/// Closed blocks of one trial plus running accumulators for the estimators.
///
/// The accumulators are always equal to what [`TrialState::recompute`]
/// would produce from `blocks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub config: TrialConfig,
    pub blocks: Vec<BlockRecord>,
    pub n_treated: usize,
    /// Sum of per-block IPTW estimates (non-pairwise schemes).
    pub sum_psi_hat: f64,
    /// Sum of per-block variance estimates `S_k` (non-pairwise schemes).
    pub s_k: f64,
    pub hajek: HajekSums,
    /// Pair-level sums (pairwise scheme).
    pub pairs: PairSums,
}

impl TrialState {
    pub fn new(config: TrialConfig) -> Result<Self> {
        config.validate()?;
        Ok(TrialState {
            config,
            blocks: Vec::new(),
            n_treated: 0,
            sum_psi_hat: 0.0,
            s_k: 0.0,
            hajek: HajekSums::default(),
            pairs: PairSums::default(),
        })
    }

    pub fn closed_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_complete(&self) -> bool {
        self.blocks.len() >= self.config.num_blocks
    }

    pub fn next_propensity(&self) -> Result<Propensity> {
        next_propensity(&self.config, &self.blocks)
    }

    pub fn assign_next<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Assignment> {
        assign_next(&self.config, &self.blocks, rng)
    }

    /// Checks that `assignment` is what the design allows for the next block.
    pub fn check_assignment(&self, assignment: &Assignment) -> Result<()> {
        let expected_k = self.blocks.len() + 1;
        if assignment.k != expected_k {
            return Err(Error::IndexError(format!(
                "expected block {expected_k}, got {}",
                assignment.k
            )));
        }
        let p = self.next_propensity()?;
        if assignment.propensity.to_bits() != p.g.to_bits() {
            return Err(Error::DesignMismatch(format!(
                "block {} recorded propensity {} but the design gives {}",
                assignment.k, assignment.propensity, p.g
            )));
        }
        if assignment.forced != p.deterministic_complement {
            return Err(Error::DesignMismatch(format!(
                "block {} forced flag does not match the design",
                assignment.k
            )));
        }
        if p.deterministic_complement {
            let prev = self.blocks[self.blocks.len() - 1].assignment;
            if assignment.arm != prev.complement() {
                return Err(Error::InvalidPair(format!(
                    "block {} must complement block {}",
                    assignment.k,
                    assignment.k - 1
                )));
            }
        }
        Ok(())
    }

    /// Appends a closed block and updates the accumulators.
    pub fn push_block(&mut self, block: BlockRecord) -> Result<()> {
        if self.is_complete() {
            return Err(Error::TrialComplete { k_max: self.config.num_blocks });
        }
        self.check_assignment(&block.header())?;
        if block.outcomes.len() != self.config.block_len {
            return Err(Error::InsufficientData(format!(
                "block {} has {} outcomes, expected {}",
                block.k,
                block.outcomes.len(),
                self.config.block_len
            )));
        }
        let summary = self.config.summary_fn.apply(&block.outcomes)?;
        if summary.to_bits() != block.summary.to_bits() {
            return Err(Error::DesignMismatch(format!(
                "block {} summary {} does not match its outcomes ({summary})",
                block.k, block.summary
            )));
        }

        if block.assignment.is_treated() {
            self.n_treated += 1;
        }
        if self.config.scheme == Scheme::Pairwise {
            if block.forced {
                let opener = &self.blocks[self.blocks.len() - 1];
                let inc = estimators::pair_increment(opener, &block, self.config.base_propensity)?;
                self.pairs.push(opener, &block, &inc);
            }
        } else {
            let ice = estimators::iptw_ice(&block)?;
            self.sum_psi_hat += ice.psi_hat;
            self.s_k += ice.sigma2_hat;
            self.hajek.push(&block);
        }
        self.blocks.push(block);
        Ok(())
    }

    /// Rebuilds the state from scratch by replaying `blocks`.
    pub fn recompute(&self) -> Result<TrialState> {
        let mut fresh = TrialState::new(self.config.clone())?;
        for b in &self.blocks {
            fresh.push_block(b.clone())?;
        }
        Ok(fresh)
    }

    pub fn arms(&self) -> Vec<Arm> {
        self.blocks.iter().map(|b| b.assignment).collect()
    }
}
