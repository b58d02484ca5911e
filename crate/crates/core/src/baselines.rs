//! Fixed-sample comparators applied at every look: a Welch two-sample t-test
//! and an O'Brien–Fleming-shaped boundary without multiplicity correction.
//! Both are invalid under continuous monitoring; they exist to show how
//! quickly repeated looks inflate the type-I error.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::trial::{Arm, TrialState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    NaiveT,
    Obf,
}

impl BaselineMethod {
    pub fn label(self) -> &'static str {
        match self {
            BaselineMethod::NaiveT => "NaiveT",
            BaselineMethod::Obf => "OBF",
        }
    }
}

/// What enters the two-sample test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One observation per block: its summary.
    #[default]
    BlockSummary,
    /// Every raw outcome, pooled by arm.
    TimePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    /// Look index: closed blocks, or observed time points.
    pub k: usize,
    pub z_stat: f64,
    pub critical: f64,
    pub reject: bool,
    pub method: BaselineMethod,
}

impl BaselineResult {
    fn new(k: usize, z_stat: f64, critical: f64, method: BaselineMethod) -> Self {
        BaselineResult { k, z_stat, critical, reject: z_stat.abs() >= critical, method }
    }
}

/// Running mean and sum of squared deviations (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmMoments {
    pub n: usize,
    pub mean: f64,
    pub m2: f64,
}

impl ArmMoments {
    pub fn push(&mut self, y: f64) {
        self.n += 1;
        let delta = y - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (y - self.mean);
    }

    pub fn variance(&self) -> f64 {
        self.m2 / (self.n - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchStat {
    pub t: f64,
    pub df: f64,
}

/// Welch statistic for treated minus control. Each arm needs two
/// observations for its variance.
pub fn welch(treated: &ArmMoments, control: &ArmMoments) -> Result<WelchStat> {
    if treated.n < 2 || control.n < 2 {
        return Err(Error::InsufficientData(format!(
            "Welch test needs two observations per arm, have {} treated and {} control",
            treated.n, control.n
        )));
    }
    let a = treated.variance() / treated.n as f64;
    let b = control.variance() / control.n as f64;
    let diff = treated.mean - control.mean;
    let se2 = a + b;
    if se2 == 0.0 {
        let t = if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
        return Ok(WelchStat { t, df: (treated.n + control.n - 2) as f64 });
    }
    let df = se2 * se2
        / (a * a / (treated.n - 1) as f64 + b * b / (control.n - 1) as f64);
    Ok(WelchStat { t: diff / se2.sqrt(), df })
}

/// Two-sided Student t critical value.
pub fn t_critical(df: f64, alpha: f64) -> f64 {
    if df >= 1e3 {
        // The library inversion loses accuracy for very large df; the
        // Cornish-Fisher expansion is exact to ~1e-10 here.
        let z = z_critical(alpha);
        let (z3, z5) = (z.powi(3), z.powi(5));
        return z + (z3 + z) / (4.0 * df) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * df * df);
    }
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha / 2.0)
}

/// Two-sided standard normal critical value.
pub fn z_critical(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Naive O'Brien–Fleming boundary at look `look` of `total`, on the z scale.
pub fn obf_boundary(look: usize, total: usize, alpha: f64) -> f64 {
    debug_assert!(look >= 1 && look <= total);
    z_critical(alpha) * (total as f64 / look as f64).sqrt()
}

fn moments(state: &TrialState, granularity: Granularity) -> (ArmMoments, ArmMoments, usize) {
    let mut treated = ArmMoments::default();
    let mut control = ArmMoments::default();
    let mut look = 0;
    for b in &state.blocks {
        let arm = match b.assignment {
            Arm::Treatment => &mut treated,
            Arm::Control => &mut control,
        };
        match granularity {
            Granularity::BlockSummary => {
                arm.push(b.summary);
                look += 1;
            }
            Granularity::TimePoint => {
                for &y in &b.outcomes {
                    arm.push(y);
                }
                look += b.outcomes.len();
            }
        }
    }
    (treated, control, look)
}

/// Welch t-test on the closed blocks at level `alpha`, ignoring that this
/// is one look of many.
pub fn naive_t_test(state: &TrialState, alpha: f64, granularity: Granularity) -> Result<BaselineResult> {
    let (treated, control, look) = moments(state, granularity);
    let w = welch(&treated, &control)?;
    Ok(BaselineResult::new(look, w.t, t_critical(w.df, alpha), BaselineMethod::NaiveT))
}

/// The naive t statistic compared against an O'Brien–Fleming-shaped
/// boundary. The boundary is inflated from the t critical value by
/// `sqrt(total/look)`, so it is never below the naive critical value.
/// `k_planned` counts blocks; with time-point granularity the look
/// schedule has `k_planned·T` looks.
pub fn obf_test(
    state: &TrialState,
    k_planned: usize,
    alpha: f64,
    granularity: Granularity,
) -> Result<BaselineResult> {
    let (treated, control, look) = moments(state, granularity);
    let total = match granularity {
        Granularity::BlockSummary => k_planned,
        Granularity::TimePoint => k_planned * state.config.block_len,
    };
    if look > total {
        return Err(Error::IndexError(format!("look {look} beyond planned {total}")));
    }
    let w = welch(&treated, &control)?;
    let critical = t_critical(w.df, alpha) * (total as f64 / look as f64).sqrt();
    Ok(BaselineResult::new(look, w.t, critical, BaselineMethod::Obf))
}

/// Tracks the first block at which each baseline rejects when the data
/// are tested at every look of a trial.
#[derive(Debug, Clone)]
pub struct PeekingTracker {
    granularity: Granularity,
    alpha: f64,
    total_looks: usize,
    look: usize,
    treated: ArmMoments,
    control: ArmMoments,
    pub naive_first: Option<usize>,
    pub obf_first: Option<usize>,
}

impl PeekingTracker {
    pub fn new(granularity: Granularity, alpha: f64, num_blocks: usize, block_len: usize) -> Self {
        let total_looks = match granularity {
            Granularity::BlockSummary => num_blocks,
            Granularity::TimePoint => num_blocks * block_len,
        };
        PeekingTracker {
            granularity,
            alpha,
            total_looks,
            look: 0,
            treated: ArmMoments::default(),
            control: ArmMoments::default(),
            naive_first: None,
            obf_first: None,
        }
    }

    fn observe(&mut self, k: usize, arm: Arm, y: f64) {
        match arm {
            Arm::Treatment => self.treated.push(y),
            Arm::Control => self.control.push(y),
        }
        self.look += 1;
        if self.naive_first.is_some() && self.obf_first.is_some() {
            return;
        }
        let Ok(w) = welch(&self.treated, &self.control) else {
            return;
        };
        let crit = t_critical(w.df, self.alpha);
        if self.naive_first.is_none() && w.t.abs() >= crit {
            self.naive_first = Some(k);
        }
        let obf = crit * (self.total_looks as f64 / self.look as f64).sqrt();
        if self.obf_first.is_none() && w.t.abs() >= obf {
            self.obf_first = Some(k);
        }
    }

    /// Feeds one raw outcome of block `k`. Ignored at block granularity.
    pub fn outcome(&mut self, k: usize, arm: Arm, y: f64) {
        if self.granularity == Granularity::TimePoint {
            self.observe(k, arm, y);
        }
    }

    /// Feeds the summary of closed block `k`. Ignored at time-point
    /// granularity.
    pub fn block_closed(&mut self, k: usize, arm: Arm, summary: f64) {
        if self.granularity == Granularity::BlockSummary {
            self.observe(k, arm, summary);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::{Assignment, BlockRecord, SummaryFn, TrialConfig};

    fn state_with(summaries: &[(Arm, Vec<f64>)]) -> TrialState {
        let t = summaries[0].1.len();
        let mut state = TrialState::new(TrialConfig::new(summaries.len(), t)).unwrap();
        for (i, (arm, ys)) in summaries.iter().enumerate() {
            let a = Assignment { k: i + 1, arm: *arm, propensity: 0.5, forced: false };
            state.push_block(BlockRecord::new(a, ys.clone(), SummaryFn::BlockMean).unwrap()).unwrap();
        }
        state
    }

    #[test]
    fn welch_matches_textbook_values() {
        // x = [1,2,3,4], y = [2,4,6]: means 2.5 and 4, variances 5/3 and 4.
        let mut x = ArmMoments::default();
        let mut y = ArmMoments::default();
        [1.0, 2.0, 3.0, 4.0].iter().for_each(|v| x.push(*v));
        [2.0, 4.0, 6.0].iter().for_each(|v| y.push(*v));
        let w = welch(&x, &y).unwrap();
        let (a, b): (f64, f64) = (5.0 / 3.0 / 4.0, 4.0 / 3.0);
        assert!((w.t - (-1.5 / (a + b).sqrt())).abs() < 1e-12);
        let df = (a + b) * (a + b) / (a * a / 3.0 + b * b / 2.0);
        assert!((w.df - df).abs() < 1e-12);
    }

    #[test]
    fn t_quantiles() {
        assert!((t_critical(10.0, 0.05) - 2.228138851986274).abs() < 1e-9);
        assert!((t_critical(1e7, 0.05) - 1.959964).abs() < 1e-5);
        // Reference quantiles from an independent implementation.
        for (df, q) in [(999.0, 1.962341), (1000.0, 1.962339), (1e4, 1.960201), (30.0, 2.042272)] {
            assert!((t_critical(df, 0.05) - q).abs() < 1e-6, "df {df}");
        }
    }

    #[test]
    fn constant_arms_do_not_reject() {
        let s = state_with(&[
            (Arm::Treatment, vec![2.0]),
            (Arm::Control, vec![2.0]),
            (Arm::Treatment, vec![2.0]),
            (Arm::Control, vec![2.0]),
        ]);
        let r = naive_t_test(&s, 0.05, Granularity::BlockSummary).unwrap();
        assert_eq!((r.z_stat, r.reject), (0.0, false));
        let r = obf_test(&s, 4, 0.05, Granularity::BlockSummary).unwrap();
        assert!(!r.reject);
    }

    #[test]
    fn separated_arms_reject() {
        let blocks: Vec<(Arm, Vec<f64>)> = (0..10)
            .map(|i| {
                let jitter = 1e-3 * i as f64;
                if i % 2 == 0 {
                    (Arm::Treatment, vec![10.0 + jitter])
                } else {
                    (Arm::Control, vec![jitter])
                }
            })
            .collect();
        let s = state_with(&blocks);
        assert!(naive_t_test(&s, 0.05, Granularity::BlockSummary).unwrap().reject);
    }

    #[test]
    fn insufficient_blocks() {
        let s = state_with(&[(Arm::Treatment, vec![1.0]), (Arm::Control, vec![0.0]), (Arm::Control, vec![0.5])]);
        assert!(matches!(
            naive_t_test(&s, 0.05, Granularity::BlockSummary),
            Err(Error::InsufficientData(_))
        ));
        // Raw time points give enough observations per arm sooner.
        let s = state_with(&[(Arm::Treatment, vec![1.0, 1.2]), (Arm::Control, vec![0.0, 0.3])]);
        assert_eq!(naive_t_test(&s, 0.05, Granularity::TimePoint).unwrap().k, 4);
    }

    #[test]
    fn obf_boundary_examples() {
        assert!((obf_boundary(30, 30, 0.05) - 1.959964).abs() < 1e-6);
        assert!((obf_boundary(30, 30, 0.05) - 1.959963984540054).abs() < 1e-9);
        assert!((obf_boundary(10, 40, 0.05) - 2.0 * obf_boundary(40, 40, 0.05)).abs() < 1e-12);
        assert!((obf_boundary(2, 30, 0.05) - 1.959963984540054 * 15f64.sqrt()).abs() < 1e-9);
        assert!((obf_boundary(2, 30, 0.05) - 7.59).abs() < 0.01);
        for k in 1..30 {
            assert!(obf_boundary(k, 30, 0.05) > obf_boundary(k + 1, 30, 0.05));
        }
    }

    #[test]
    fn obf_dominates_naive() {
        let blocks: Vec<(Arm, Vec<f64>)> = (0..8)
            .map(|i| (if i % 3 == 0 { Arm::Treatment } else { Arm::Control }, vec![i as f64 * 0.7, 1.0]))
            .collect();
        let s = state_with(&blocks);
        for g in [Granularity::BlockSummary, Granularity::TimePoint] {
            let n = naive_t_test(&s, 0.05, g).unwrap();
            let o = obf_test(&s, 8, 0.05, g).unwrap();
            assert_eq!(n.z_stat, o.z_stat);
            assert!(o.critical >= n.critical);
        }
    }

    #[test]
    fn tracker_matches_direct_tests() {
        let blocks: Vec<(Arm, Vec<f64>)> = (0..12)
            .map(|i| {
                let arm = if i % 2 == 0 { Arm::Treatment } else { Arm::Control };
                let shift = if arm.is_treated() { 1.5 } else { 0.0 };
                (arm, vec![shift + (i as f64 * 1.7).sin(), shift + (i as f64 * 0.9).cos()])
            })
            .collect();
        let full = state_with(&blocks);
        let mut tracker = PeekingTracker::new(Granularity::BlockSummary, 0.05, 12, 2);
        let mut naive_first = None;
        let mut obf_first = None;
        for k in 1..=12 {
            let b = &full.blocks[k - 1];
            tracker.block_closed(k, b.assignment, b.summary);
            let mut prefix = TrialState::new(full.config.clone()).unwrap();
            for b in &full.blocks[..k] {
                prefix.push_block(b.clone()).unwrap();
            }
            if let Ok(r) = naive_t_test(&prefix, 0.05, Granularity::BlockSummary) {
                if r.reject && naive_first.is_none() {
                    naive_first = Some(k);
                }
            }
            if let Ok(r) = obf_test(&prefix, 12, 0.05, Granularity::BlockSummary) {
                if r.reject && obf_first.is_none() {
                    obf_first = Some(k);
                }
            }
        }
        assert_eq!(tracker.naive_first, naive_first);
        assert_eq!(tracker.obf_first, obf_first);
        assert!(naive_first.is_some());
    }
}
