//! Exact enumeration over assignment histories for fixed potential-outcome
//! tables with arbitrary carryover.

#![allow(dead_code)]

use std::collections::HashMap;

use nof1_core::estimators::iptw_ice;
use nof1_core::trial::{propensity_for_history, Arm, Assignment, BlockRecord, Scheme, SummaryFn, TrialConfig};
use rand::Rng;

/// `Y_k(a_1..a_k)` for every treatment prefix, `T` values each.
pub struct PotentialTable {
    pub num_blocks: usize,
    pub block_len: usize,
    pub outcomes: HashMap<Vec<Arm>, Vec<f64>>,
}

fn all_prefixes(len: usize) -> Vec<Vec<Arm>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                [Arm::Control, Arm::Treatment].into_iter().map(move |a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

impl PotentialTable {
    pub fn random<R: Rng>(num_blocks: usize, block_len: usize, rng: &mut R) -> Self {
        let mut outcomes = HashMap::new();
        for k in 1..=num_blocks {
            for prefix in all_prefixes(k) {
                let ys = (0..block_len).map(|_| rng.random_range(-10.0..10.0)).collect();
                outcomes.insert(prefix, ys);
            }
        }
        PotentialTable { num_blocks, block_len, outcomes }
    }

    pub fn block(&self, history: &[Arm], arm: Arm) -> &[f64] {
        let mut key = history.to_vec();
        key.push(arm);
        &self.outcomes[&key]
    }
}

fn summarize(ys: &[f64], f: SummaryFn) -> f64 {
    match f {
        SummaryFn::BlockMean => ys.iter().sum::<f64>() / ys.len() as f64,
        SummaryFn::BlockSum => ys.iter().sum(),
        SummaryFn::LastValue => ys[ys.len() - 1],
    }
}

/// Treatment probability written out independently of the library.
pub fn oracle_propensity(config: &TrialConfig, history: &[Arm]) -> f64 {
    match config.scheme {
        Scheme::Unrestricted => config.base_propensity,
        Scheme::Restricted => {
            let k_max = config.num_blocks as f64;
            let k = history.len() as f64 + 1.0;
            let treated = history.iter().filter(|a| a.is_treated()).count() as f64;
            let raw = ((k_max / 2.0).ceil() - treated) / (k_max - k + 1.0);
            raw.clamp(config.restricted_clip_eps, 1.0 - config.restricted_clip_eps)
        }
        Scheme::Pairwise => unreachable!("pairwise blocks are not individually randomized"),
    }
}

/// Worst deviations over every history prefix with positive probability.
#[derive(Debug, Default, Clone, Copy)]
pub struct EnumerationCheck {
    pub histories: usize,
    /// max |E[ψ̂ | history] − ψ(history)|
    pub max_bias: f64,
    /// max (Var[ψ̂ | history] − E[σ̂² | history]); nonpositive when the bound holds.
    pub max_variance_excess: f64,
    /// max |library propensity − oracle propensity|
    pub max_propensity_gap: f64,
}

pub fn enumerate_conditional_moments(table: &PotentialTable, config: &TrialConfig) -> EnumerationCheck {
    let mut check = EnumerationCheck { max_variance_excess: f64::NEG_INFINITY, ..Default::default() };
    // Histories reached with positive probability, grown one block at a time.
    let mut frontier: Vec<Vec<Arm>> = vec![Vec::new()];
    for k in 1..=table.num_blocks {
        let mut next = Vec::new();
        for history in &frontier {
            let g = oracle_propensity(config, history);
            let lib = propensity_for_history(config, history).expect("history within the trial");
            check.max_propensity_gap = check.max_propensity_gap.max((lib.g - g).abs());

            let truth = summarize(table.block(history, Arm::Treatment), config.summary_fn)
                - summarize(table.block(history, Arm::Control), config.summary_fn);
            let (mut mean, mut second, mut sigma2) = (0.0, 0.0, 0.0);
            for (arm, p) in [(Arm::Treatment, g), (Arm::Control, 1.0 - g)] {
                let a = Assignment { k, arm, propensity: lib.g, forced: false };
                let block = BlockRecord::new(a, table.block(history, arm).to_vec(), config.summary_fn).unwrap();
                let est = iptw_ice(&block).unwrap();
                mean += p * est.psi_hat;
                second += p * est.psi_hat * est.psi_hat;
                sigma2 += p * est.sigma2_hat;
                let mut h = history.clone();
                h.push(arm);
                next.push(h);
            }
            check.max_bias = check.max_bias.max((mean - truth).abs());
            let variance = second - mean * mean;
            check.max_variance_excess = check.max_variance_excess.max(variance - sigma2);
            check.histories += 1;
        }
        frontier = next;
    }
    check
}
