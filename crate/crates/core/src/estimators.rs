//! Design-based estimators of the immediate causal effect (ICE) and its
//! running average (AICE).
//!
//! All randomness is attributed to the assignment mechanism; potential
//! outcomes are treated as fixed. Each per-block estimate is an
//! inverse-propensity-weighted contrast whose conditional mean, given the
//! past, is the block's causal effect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::{Arm, Assignment, BlockRecord, Scheme, SummaryFn, TrialState};

/// Per-block (or per-pair) estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IceEstimate {
    /// Block index, or pair index for pair-level increments.
    pub k: usize,
    pub psi_hat: f64,
    /// Upper-bound variance estimate; its conditional mean bounds the
    /// conditional variance of `psi_hat`.
    pub sigma2_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iptw,
    Hajek,
    PairIptw,
    PairHajek,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Iptw, Method::Hajek, Method::PairIptw, Method::PairHajek];

    /// Short label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Method::Iptw => "IPTW",
            Method::Hajek => "S-IPTW",
            Method::PairIptw => "Pair IPTW",
            Method::PairHajek => "Pair S-IPTW",
        }
    }

    pub fn is_pair(self) -> bool {
        matches!(self, Method::PairIptw | Method::PairHajek)
    }

    /// Methods that apply to trials run under `scheme`.
    pub fn for_scheme(scheme: Scheme) -> [Method; 2] {
        match scheme {
            Scheme::Pairwise => [Method::PairIptw, Method::PairHajek],
            Scheme::Restricted | Scheme::Unrestricted => [Method::Iptw, Method::Hajek],
        }
    }
}

/// Running-average estimate fed to the confidence sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AiceEstimate {
    /// Number of blocks covered by the estimate.
    pub k: usize,
    pub method: Method,
    pub point: f64,
    /// Cumulative variance proxy `S` entering the interval width.
    pub variance_proxy: f64,
    /// Number of martingale increments: blocks, or completed pairs.
    pub effective_steps: usize,
}

pub fn block_summary(outcomes: &[f64], summary_fn: SummaryFn) -> Result<f64> {
    let last = *outcomes.last().ok_or(Error::EmptyBlock)?;
    Ok(match summary_fn {
        SummaryFn::BlockMean => outcomes.iter().sum::<f64>() / outcomes.len() as f64,
        SummaryFn::BlockSum => outcomes.iter().sum(),
        SummaryFn::LastValue => last,
    })
}

fn ipw_contrast(k: usize, arm: Arm, g: f64, summary: f64) -> Result<IceEstimate> {
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::PositivityViolation { g });
    }
    let psi_hat = match arm {
        Arm::Treatment => summary / g,
        Arm::Control => -summary / (1.0 - g),
    };
    Ok(IceEstimate { k, psi_hat, sigma2_hat: psi_hat * psi_hat })
}

fn forced_violation(arm: Arm) -> Error {
    Error::PositivityViolation { g: if arm.is_treated() { 1.0 } else { 0.0 } }
}

/// IPTW estimate of the block's immediate causal effect.
pub fn iptw_ice(block: &BlockRecord) -> Result<IceEstimate> {
    if block.forced {
        return Err(forced_violation(block.assignment));
    }
    ipw_contrast(block.k, block.assignment, block.propensity, block.summary)
}

/// IPTW estimate of the time-`t` ICE from the first `t` outcomes of a
/// (possibly still open) block.
pub fn ice_t(
    assignment: &Assignment,
    outcomes: &[f64],
    t: usize,
    summary_fn: SummaryFn,
) -> Result<IceEstimate> {
    if t == 0 || t > outcomes.len() {
        return Err(Error::InsufficientData(format!(
            "time point {t} requested but {} outcomes recorded",
            outcomes.len()
        )));
    }
    if assignment.forced {
        return Err(forced_violation(assignment.arm));
    }
    let summary = block_summary(&outcomes[..t], summary_fn)?;
    ipw_contrast(assignment.k, assignment.arm, assignment.propensity, summary)
}

/// IPTW running average over all closed blocks.
pub fn aice_iptw(state: &TrialState) -> Result<AiceEstimate> {
    if state.config.scheme == Scheme::Pairwise {
        return Err(Error::SchemeMismatch("pairwise"));
    }
    let k = state.blocks.len();
    if k == 0 {
        return Err(Error::InsufficientData("no closed blocks".into()));
    }
    Ok(AiceEstimate {
        k,
        method: Method::Iptw,
        point: state.sum_psi_hat / k as f64,
        variance_proxy: state.s_k,
        effective_steps: k,
    })
}

/// Weighted sums for one arm of the Hájek estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmSums {
    pub count: usize,
    /// Σ w
    pub weight: f64,
    /// Σ w·y
    pub weighted: f64,
    /// Σ w²
    pub sq_weight: f64,
    /// Σ w²·y²
    pub sq_weighted_sq: f64,
}

impl ArmSums {
    pub fn push(&mut self, weight: f64, y: f64) {
        let wy = weight * y;
        self.count += 1;
        self.weight += weight;
        self.weighted += wy;
        self.sq_weight += weight * weight;
        self.sq_weighted_sq += wy * wy;
    }

    pub fn mean(&self) -> f64 {
        self.weighted / self.weight
    }
}

/// Accumulators of the stabilized (Hájek) estimator over per-block arms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HajekSums {
    pub treated: ArmSums,
    pub control: ArmSums,
}

impl HajekSums {
    pub fn push(&mut self, block: &BlockRecord) {
        let g = block.propensity;
        match block.assignment {
            Arm::Treatment => self.treated.push(1.0 / g, block.summary),
            Arm::Control => self.control.push(1.0 / (1.0 - g), block.summary),
        }
    }

    fn check_arms(&self) -> Result<()> {
        if self.treated.count == 0 {
            return Err(Error::ArmNotYetObserved { arm: "treatment" });
        }
        if self.control.count == 0 {
            return Err(Error::ArmNotYetObserved { arm: "control" });
        }
        Ok(())
    }

    /// Difference of the per-arm inverse-propensity-weighted means.
    pub fn point(&self) -> Result<f64> {
        self.check_arms()?;
        Ok(self.treated.mean() - self.control.mean())
    }

    /// Squared-weight-normalized second moments summed over arms,
    /// `Σ w²y² / Σ w²` per arm.
    pub fn sigma2(&self) -> Result<f64> {
        self.check_arms()?;
        Ok(self.treated.sq_weighted_sq / self.treated.sq_weight
            + self.control.sq_weighted_sq / self.control.sq_weight)
    }

    /// Ratio estimate of the mean per-block variance bound,
    /// `Σ w²y² / Σ w` per arm. Each numerator term has conditional mean
    /// `Y(a)²/P(a)` and each denominator term has conditional mean 1, so
    /// `k` times this estimates the same cumulative variance the IPTW
    /// `S_k` does.
    pub fn per_step_variance(&self) -> Result<f64> {
        self.check_arms()?;
        Ok(self.treated.sq_weighted_sq / self.treated.weight
            + self.control.sq_weighted_sq / self.control.weight)
    }
}

/// Stabilized IPTW (Hájek) running average. Requires both arms observed.
pub fn aice_hajek(state: &TrialState) -> Result<AiceEstimate> {
    if state.config.scheme == Scheme::Pairwise {
        return Err(Error::SchemeMismatch("pairwise"));
    }
    let k = state.blocks.len();
    let point = state.hajek.point()?;
    let per_step = state.hajek.per_step_variance()?;
    Ok(AiceEstimate {
        k,
        method: Method::Hajek,
        point,
        variance_proxy: k as f64 * per_step,
        effective_steps: k,
    })
}

/// Squared-weight-normalized Hájek variance estimate of the current state.
pub fn hajek_sigma2(state: &TrialState) -> Result<f64> {
    state.hajek.sigma2()
}

/// Importance weight of a completed pair relative to the uniform order
/// distribution, plus the treated-minus-control contrast.
fn pair_parts(opener: &BlockRecord, closer: &BlockRecord, base: f64) -> Result<(usize, f64, f64)> {
    if opener.k % 2 != 1 || closer.k != opener.k + 1 {
        return Err(Error::InvalidPair(format!(
            "blocks {} and {} do not form a pair",
            opener.k, closer.k
        )));
    }
    if opener.assignment == closer.assignment {
        return Err(Error::InvalidPair(format!(
            "blocks {} and {} have the same assignment",
            opener.k, closer.k
        )));
    }
    if opener.forced || (opener.propensity - base).abs() > 1e-12 {
        return Err(Error::InvalidPair(format!(
            "pair opener {} was not randomized with propensity {base}",
            opener.k
        )));
    }
    if !(base > 0.0 && base < 1.0) {
        return Err(Error::PositivityViolation { g: base });
    }
    let (order_prob, diff) = match opener.assignment {
        Arm::Treatment => (base, opener.summary - closer.summary),
        Arm::Control => (1.0 - base, closer.summary - opener.summary),
    };
    Ok((opener.k.div_ceil(2), 0.5 / order_prob, diff))
}

/// Martingale increment of one completed pair.
///
/// The pair's estimand is the average of the treated-minus-control contrast
/// over both orders. The realized contrast is weighted by
/// `(1/2) / P(order)`, which reduces to the plain contrast when the order is
/// a fair coin.
pub fn pair_increment(opener: &BlockRecord, closer: &BlockRecord, base_propensity: f64) -> Result<IceEstimate> {
    let (pair, w, d) = pair_parts(opener, closer, base_propensity)?;
    let psi_hat = w * d;
    Ok(IceEstimate { k: pair, psi_hat, sigma2_hat: psi_hat * psi_hat })
}

/// Pair-level accumulators for the pairwise scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairSums {
    pub n_pairs: usize,
    pub sum_psi: f64,
    pub sum_sigma2: f64,
    /// Σ w over pairs
    pub weight: f64,
}

impl PairSums {
    pub fn push(&mut self, opener: &BlockRecord, closer: &BlockRecord, inc: &IceEstimate) {
        let w = 0.5 / if opener.assignment.is_treated() {
            opener.propensity
        } else {
            1.0 - opener.propensity
        };
        debug_assert!(closer.k == opener.k + 1);
        self.n_pairs += 1;
        self.sum_psi += inc.psi_hat;
        self.sum_sigma2 += inc.sigma2_hat;
        self.weight += w;
    }
}

fn pair_state(state: &TrialState) -> Result<&PairSums> {
    if state.config.scheme != Scheme::Pairwise {
        return Err(Error::SchemeMismatch(state.config.scheme.name()));
    }
    if state.pairs.n_pairs == 0 {
        return Err(Error::InsufficientData("no completed pair".into()));
    }
    Ok(&state.pairs)
}

/// Running average of pair increments, updated once per completed pair.
pub fn aice_pair_iptw(state: &TrialState) -> Result<AiceEstimate> {
    let p = pair_state(state)?;
    Ok(AiceEstimate {
        k: 2 * p.n_pairs,
        method: Method::PairIptw,
        point: p.sum_psi / p.n_pairs as f64,
        variance_proxy: p.sum_sigma2,
        effective_steps: p.n_pairs,
    })
}

/// Self-normalized version of [`aice_pair_iptw`]: the pair weights are
/// divided by their sum instead of by the pair count. With a fair order coin
/// all weights are 1 and both estimators coincide.
pub fn aice_pair_hajek(state: &TrialState) -> Result<AiceEstimate> {
    let p = pair_state(state)?;
    let n = p.n_pairs as f64;
    Ok(AiceEstimate {
        k: 2 * p.n_pairs,
        method: Method::PairHajek,
        point: p.sum_psi / p.weight,
        variance_proxy: n * p.sum_sigma2 / p.weight,
        effective_steps: p.n_pairs,
    })
}

pub fn aice(state: &TrialState, method: Method) -> Result<AiceEstimate> {
    match method {
        Method::Iptw => aice_iptw(state),
        Method::Hajek => aice_hajek(state),
        Method::PairIptw => aice_pair_iptw(state),
        Method::PairHajek => aice_pair_hajek(state),
    }
}
