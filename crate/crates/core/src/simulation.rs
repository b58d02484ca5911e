//! Potential-outcome oracles, single-trial execution and parallel Monte
//! Carlo studies.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineMethod, Granularity, PeekingTracker};
use crate::confseq::{cs_interval, tune_eta, CsInterval};
use crate::error::{Error, Result};
use crate::estimators::{aice, block_summary, Method};
use crate::rng::{trial_rng, StreamPurpose};
use crate::trial::{Arm, Assignment, BlockRecord, Scheme, TrialConfig, TrialState};

pub const DEFAULT_NOISE_SD: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    Null,
    /// Effect `5 + 1/k` in block `k`.
    DecreasingEffect,
    /// Effects listed in [`DgpSpec::custom_effects`].
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    #[default]
    Gaussian,
    /// Gaussian noise resampled until both potential outcomes respect the
    /// trial's outcome bound.
    TruncatedGaussian,
}

/// Data-generating process without carryover: both arms of a time point
/// share the same noise draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    /// Control-arm mean.
    pub baseline_mean: f64,
    pub noise_sd: f64,
    #[serde(default)]
    pub noise_law: NoiseLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_effects: Option<Vec<f64>>,
}

impl DgpSpec {
    pub fn new(kind: DgpKind) -> Self {
        DgpSpec {
            kind,
            baseline_mean: 0.0,
            noise_sd: DEFAULT_NOISE_SD,
            noise_law: NoiseLaw::Gaussian,
            custom_effects: None,
        }
    }

    pub fn null() -> Self {
        DgpSpec::new(DgpKind::Null)
    }

    pub fn decreasing_effect() -> Self {
        DgpSpec::new(DgpKind::DecreasingEffect)
    }

    pub fn custom(effects: Vec<f64>) -> Self {
        DgpSpec { custom_effects: Some(effects), ..DgpSpec::new(DgpKind::Custom) }
    }

    pub fn with_noise_sd(mut self, sd: f64) -> Self {
        self.noise_sd = sd;
        self
    }

    pub fn effect(&self, k: usize) -> Result<f64> {
        match self.kind {
            DgpKind::Null => Ok(0.0),
            DgpKind::DecreasingEffect => Ok(5.0 + 1.0 / k as f64),
            DgpKind::Custom => self
                .custom_effects
                .as_ref()
                .and_then(|e| e.get(k.wrapping_sub(1)))
                .copied()
                .ok_or_else(|| Error::IndexError(format!("no custom effect for block {k}"))),
        }
    }

    pub fn validate(&self, num_blocks: usize) -> Result<()> {
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidConfig { field: "noise_sd", message: "must be positive".into() });
        }
        if !self.baseline_mean.is_finite() {
            return Err(Error::InvalidConfig { field: "baseline_mean", message: "must be finite".into() });
        }
        if self.kind == DgpKind::Custom {
            match &self.custom_effects {
                Some(e) if e.len() >= num_blocks && e.iter().all(|x| x.is_finite()) => {}
                _ => {
                    return Err(Error::InvalidConfig {
                        field: "custom_effects",
                        message: format!("need {num_blocks} finite effects"),
                    })
                }
            }
        }
        Ok(())
    }
}

/// Supplies outcomes to a running trial.
pub trait OutcomeSource {
    /// Called once per block, after its assignment is drawn and before any
    /// of its outcomes is requested.
    fn on_assignment(&mut self, _assignment: &Assignment) {}

    /// Potential outcome at `(k, t)` under `arm`, given the realized
    /// history of assignments so far.
    fn outcome(&mut self, k: usize, t: usize, arm: Arm) -> Result<f64>;
}

/// Pre-drawn noise for one simulated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomeOracle {
    pub dgp: DgpSpec,
    pub num_blocks: usize,
    pub block_len: usize,
    noise: Vec<f64>,
}

impl PotentialOutcomeOracle {
    pub fn generate<R: Rng + ?Sized>(config: &TrialConfig, dgp: &DgpSpec, rng: &mut R) -> Result<Self> {
        dgp.validate(config.num_blocks)?;
        let normal = Normal::new(0.0, dgp.noise_sd)
            .map_err(|e| Error::InvalidConfig { field: "noise_sd", message: e.to_string() })?;
        let mut noise = Vec::with_capacity(config.num_blocks * config.block_len);
        for k in 1..=config.num_blocks {
            let effect = dgp.effect(k)?;
            for _ in 0..config.block_len {
                let eps = match (dgp.noise_law, config.outcome_bound) {
                    (NoiseLaw::TruncatedGaussian, Some(m)) => {
                        let lo = -m - dgp.baseline_mean - effect.min(0.0);
                        let hi = m - dgp.baseline_mean - effect.max(0.0);
                        if lo > hi {
                            return Err(Error::InvalidConfig {
                                field: "outcome_bound",
                                message: format!("bound {m} cannot contain both arms of block {k}"),
                            });
                        }
                        let mut tries = 0;
                        loop {
                            let e = normal.sample(rng);
                            if (lo..=hi).contains(&e) {
                                break e;
                            }
                            tries += 1;
                            if tries == 100_000 {
                                return Err(Error::InvalidConfig {
                                    field: "outcome_bound",
                                    message: format!("bound {m} leaves almost no noise mass in block {k}"),
                                });
                            }
                        }
                    }
                    (NoiseLaw::TruncatedGaussian, None) => {
                        return Err(Error::InvalidConfig {
                            field: "noise_law",
                            message: "truncated noise needs an outcome bound".into(),
                        })
                    }
                    (NoiseLaw::Gaussian, _) => normal.sample(rng),
                };
                noise.push(eps);
            }
        }
        Ok(PotentialOutcomeOracle {
            dgp: dgp.clone(),
            num_blocks: config.num_blocks,
            block_len: config.block_len,
            noise,
        })
    }

    /// Oracle with explicit noise, laid out block by block.
    pub fn from_noise(dgp: DgpSpec, num_blocks: usize, block_len: usize, noise: Vec<f64>) -> Result<Self> {
        if noise.len() != num_blocks * block_len {
            return Err(Error::IndexError(format!(
                "expected {} noise values, got {}",
                num_blocks * block_len,
                noise.len()
            )));
        }
        dgp.validate(num_blocks)?;
        Ok(PotentialOutcomeOracle { dgp, num_blocks, block_len, noise })
    }

    pub fn noise(&self, k: usize, t: usize) -> Result<f64> {
        if k == 0 || k > self.num_blocks || t == 0 || t > self.block_len {
            return Err(Error::IndexError(format!(
                "(k, t) = ({k}, {t}) outside {}x{}",
                self.num_blocks, self.block_len
            )));
        }
        Ok(self.noise[(k - 1) * self.block_len + (t - 1)])
    }
}

impl OutcomeSource for PotentialOutcomeOracle {
    fn outcome(&mut self, k: usize, t: usize, arm: Arm) -> Result<f64> {
        oracle_outcome(self, k, t, arm)
    }
}

/// `baseline + a·effect(k) + ε_{k,t}`.
pub fn oracle_outcome(oracle: &PotentialOutcomeOracle, k: usize, t: usize, arm: Arm) -> Result<f64> {
    let eps = oracle.noise(k, t)?;
    let effect = if arm.is_treated() { oracle.dgp.effect(k)? } else { 0.0 };
    Ok(oracle.dgp.baseline_mean + effect + eps)
}

fn block_ice(source: &mut dyn OutcomeSource, config: &TrialConfig, k: usize) -> Result<f64> {
    let mut arms = [0.0; 2];
    for arm in [Arm::Control, Arm::Treatment] {
        let ys = (1..=config.block_len)
            .map(|t| source.outcome(k, t, arm))
            .collect::<Result<Vec<_>>>()?;
        arms[arm.bit() as usize] = block_summary(&ys, config.summary_fn)?;
    }
    Ok(arms[1] - arms[0])
}

/// Running average of the true block effects along `assignments`.
pub fn true_aice(oracle: &PotentialOutcomeOracle, config: &TrialConfig, assignments: &[Arm]) -> Result<Vec<f64>> {
    let mut source = oracle.clone();
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(assignments.len());
    for k in 1..=assignments.len() {
        sum += block_ice(&mut source, config, k)?;
        out.push(sum / k as f64);
    }
    Ok(out)
}

/// Everything reported for one trial: confidence-sequence estimators and
/// peeking baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMethod {
    Iptw,
    Hajek,
    PairIptw,
    PairHajek,
    NaiveT,
    Obf,
}

impl ReportMethod {
    pub fn label(self) -> &'static str {
        match self {
            ReportMethod::Iptw => Method::Iptw.label(),
            ReportMethod::Hajek => Method::Hajek.label(),
            ReportMethod::PairIptw => Method::PairIptw.label(),
            ReportMethod::PairHajek => Method::PairHajek.label(),
            ReportMethod::NaiveT => BaselineMethod::NaiveT.label(),
            ReportMethod::Obf => BaselineMethod::Obf.label(),
        }
    }

    pub fn has_intervals(self) -> bool {
        !matches!(self, ReportMethod::NaiveT | ReportMethod::Obf)
    }
}

impl From<Method> for ReportMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Iptw => ReportMethod::Iptw,
            Method::Hajek => ReportMethod::Hajek,
            Method::PairIptw => ReportMethod::PairIptw,
            Method::PairHajek => ReportMethod::PairHajek,
        }
    }
}

impl From<BaselineMethod> for ReportMethod {
    fn from(m: BaselineMethod) -> Self {
        match m {
            BaselineMethod::NaiveT => ReportMethod::NaiveT,
            BaselineMethod::Obf => ReportMethod::Obf,
        }
    }
}

/// One simulated setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub config: TrialConfig,
    pub dgp: DgpSpec,
    /// Run the peeking baselines at this granularity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<Granularity>,
}

impl SimulationSpec {
    pub fn new(config: TrialConfig, dgp: DgpSpec) -> Self {
        SimulationSpec { config, dgp, baselines: None }
    }

    pub fn with_baselines(mut self, granularity: Granularity) -> Self {
        self.baselines = Some(granularity);
        self
    }

    pub fn methods(&self) -> Vec<ReportMethod> {
        let mut out: Vec<ReportMethod> =
            Method::for_scheme(self.config.scheme).into_iter().map(ReportMethod::from).collect();
        if self.baselines.is_some() {
            out.extend([ReportMethod::NaiveT, ReportMethod::Obf]);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.dgp.validate(self.config.num_blocks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTrace {
    pub method: ReportMethod,
    /// Interval in force after each block; `None` while the method abstains.
    /// Empty for the baselines.
    pub intervals: Vec<Option<CsInterval>>,
    /// First block whose look rejects the null.
    pub stopping_block: Option<usize>,
    /// First block whose interval misses the truth.
    pub first_miss: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub trial_index: u64,
    pub state: TrialState,
    /// True running-average effect after each block.
    pub truth: Vec<f64>,
    pub methods: Vec<MethodTrace>,
}

impl TrialTrace {
    pub fn method(&self, method: ReportMethod) -> Option<&MethodTrace> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Runs trial `trial_index` of `spec` against its seeded oracle.
pub fn run_trial(spec: &SimulationSpec, trial_index: u64) -> Result<TrialTrace> {
    spec.validate()?;
    let seed = spec.config.seed;
    let mut noise_rng = trial_rng(seed, trial_index, StreamPurpose::Noise);
    let mut oracle = PotentialOutcomeOracle::generate(&spec.config, &spec.dgp, &mut noise_rng)?;
    run_trial_with(spec, trial_index, &mut oracle)
}

/// Runs one trial drawing outcomes from `source`. Assignments use the
/// `(seed, trial_index)` stream.
pub fn run_trial_with(
    spec: &SimulationSpec,
    trial_index: u64,
    source: &mut dyn OutcomeSource,
) -> Result<TrialTrace> {
    let config = &spec.config;
    let mut rng = trial_rng(config.seed, trial_index, StreamPurpose::Assignment);
    let mut state = TrialState::new(config.clone())?;
    let mut tracker = spec
        .baselines
        .map(|g| PeekingTracker::new(g, config.alpha, config.num_blocks, config.block_len));
    let cs_methods = Method::for_scheme(config.scheme);
    let mut traces: Vec<MethodTrace> = spec
        .methods()
        .into_iter()
        .map(|method| MethodTrace { method, intervals: Vec::new(), stopping_block: None, first_miss: None })
        .collect();
    let mut truth = Vec::with_capacity(config.num_blocks);
    let mut ice_sum = 0.0;

    for k in 1..=config.num_blocks {
        let assignment = state.assign_next(&mut rng)?;
        source.on_assignment(&assignment);
        let mut outcomes = Vec::with_capacity(config.block_len);
        for t in 1..=config.block_len {
            let y = source.outcome(k, t, assignment.arm)?;
            if let Some(bound) = config.outcome_bound {
                if y.is_nan() || y.abs() > bound {
                    return Err(Error::BoundViolation { value: y, bound });
                }
            }
            if let Some(tr) = tracker.as_mut() {
                tr.outcome(k, assignment.arm, y);
            }
            outcomes.push(y);
        }
        ice_sum += block_ice(source, config, k)?;
        truth.push(ice_sum / k as f64);

        let block = BlockRecord::new(assignment, outcomes, config.summary_fn)?;
        let summary = block.summary;
        state.push_block(block)?;
        if let Some(tr) = tracker.as_mut() {
            tr.block_closed(k, assignment.arm, summary);
        }

        for (trace, method) in traces.iter_mut().zip(cs_methods) {
            let interval = if method.is_pair() && k % 2 == 1 {
                trace.intervals.last().copied().flatten()
            } else {
                match aice(&state, method) {
                    Ok(est) => Some(cs_interval(&est, config.alpha, config.eta)),
                    Err(Error::ArmNotYetObserved { .. }) | Err(Error::InsufficientData(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            if let Some(iv) = interval {
                if trace.stopping_block.is_none() && iv.excludes_null {
                    trace.stopping_block = Some(k);
                }
                if trace.first_miss.is_none() && !iv.covers(truth[iv.k - 1]) {
                    trace.first_miss = Some(k);
                }
            }
            trace.intervals.push(interval);
        }
    }
    if let Some(tr) = tracker {
        for trace in traces.iter_mut() {
            match trace.method {
                ReportMethod::NaiveT => trace.stopping_block = tr.naive_first,
                ReportMethod::Obf => trace.stopping_block = tr.obf_first,
                _ => {}
            }
        }
    }
    Ok(TrialTrace { trial_index, state, truth, methods: traces })
}

/// Integer tallies for one method; merging is exact and commutative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodTally {
    pub method: ReportMethod,
    /// `first_stop[k-1]` trials first rejected at block `k`.
    pub first_stop: Vec<u64>,
    /// `first_miss[k-1]` trials whose interval first missed the truth at
    /// block `k`.
    pub first_miss: Vec<u64>,
    /// Sum over trials of the stopping block, `K` when never stopped.
    pub stop_sum: u64,
    pub stop_sq_sum: u64,
}

impl MethodTally {
    fn new(method: ReportMethod, k_max: usize) -> Self {
        MethodTally { method, first_stop: vec![0; k_max], first_miss: vec![0; k_max], stop_sum: 0, stop_sq_sum: 0 }
    }

    fn add(&mut self, trace: &MethodTrace, k_max: usize) {
        if let Some(k) = trace.stopping_block {
            self.first_stop[k - 1] += 1;
        }
        if let Some(k) = trace.first_miss {
            self.first_miss[k - 1] += 1;
        }
        let s = trace.stopping_block.unwrap_or(k_max) as u64;
        self.stop_sum += s;
        self.stop_sq_sum += s * s;
    }

    fn merge(&mut self, other: &MethodTally) {
        for (a, b) in self.first_stop.iter_mut().zip(&other.first_stop) {
            *a += b;
        }
        for (a, b) in self.first_miss.iter_mut().zip(&other.first_miss) {
            *a += b;
        }
        self.stop_sum += other.stop_sum;
        self.stop_sq_sum += other.stop_sq_sum;
    }
}

/// Aggregated results of `m` trials of one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub spec: SimulationSpec,
    pub m: usize,
    pub tallies: Vec<MethodTally>,
}

impl SimulationReport {
    fn empty(spec: &SimulationSpec) -> Self {
        let k = spec.config.num_blocks;
        SimulationReport {
            spec: spec.clone(),
            m: 0,
            tallies: spec.methods().into_iter().map(|m| MethodTally::new(m, k)).collect(),
        }
    }

    fn add(&mut self, trace: &TrialTrace) {
        let k = self.spec.config.num_blocks;
        self.m += 1;
        for (tally, mt) in self.tallies.iter_mut().zip(&trace.methods) {
            debug_assert_eq!(tally.method, mt.method);
            tally.add(mt, k);
        }
    }

    fn merge(mut self, other: SimulationReport) -> Self {
        self.m += other.m;
        for (a, b) in self.tallies.iter_mut().zip(&other.tallies) {
            a.merge(b);
        }
        self
    }

    pub fn tally(&self, method: ReportMethod) -> Option<&MethodTally> {
        self.tallies.iter().find(|t| t.method == method)
    }

    /// Fraction of trials stopped (the null rejected) by each block.
    pub fn cumulative_stop(&self, method: ReportMethod) -> Option<Vec<f64>> {
        let t = self.tally(method)?;
        Some(cumulative_fraction(&t.first_stop, self.m))
    }

    /// Fraction of trials whose intervals covered the truth at every block
    /// up to each block.
    pub fn uniform_coverage(&self, method: ReportMethod) -> Option<Vec<f64>> {
        let t = self.tally(method)?;
        if !method.has_intervals() {
            return None;
        }
        Some(cumulative_fraction(&t.first_miss, self.m).into_iter().map(|p| 1.0 - p).collect())
    }

    pub fn summary(&self, method: ReportMethod) -> Option<MethodSummary> {
        let t = self.tally(method)?;
        let m = self.m as f64;
        let mean = t.stop_sum as f64 / m;
        let sd = if self.m > 1 {
            // Exact integer arithmetic for the centered sum of squares.
            let n = self.m as i128;
            let centered = n * t.stop_sq_sum as i128 - (t.stop_sum as i128) * (t.stop_sum as i128);
            (centered as f64 / (m * (m - 1.0))).sqrt()
        } else {
            0.0
        };
        let stopped: u64 = t.first_stop.iter().sum();
        let missed: u64 = t.first_miss.iter().sum();
        Some(MethodSummary {
            scheme: self.spec.config.scheme,
            method,
            label: method.label().to_string(),
            stopping_mean: mean,
            stopping_sd: sd,
            stopped_fraction: stopped as f64 / m,
            coverage: method.has_intervals().then(|| 1.0 - missed as f64 / m),
        })
    }
}

fn cumulative_fraction(counts: &[u64], m: usize) -> Vec<f64> {
    let mut acc = 0u64;
    counts
        .iter()
        .map(|c| {
            acc += c;
            acc as f64 / m as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub scheme: Scheme,
    pub method: ReportMethod,
    pub label: String,
    /// Mean first-rejection block, counting `K` for trials that never stop.
    pub stopping_mean: f64,
    pub stopping_sd: f64,
    pub stopped_fraction: f64,
    /// Time-uniform coverage of the truth; absent for the baselines.
    pub coverage: Option<f64>,
}

/// Runs trials `0..m` of `spec` on `jobs` threads. The result does not
/// depend on `jobs`.
pub fn monte_carlo(spec: &SimulationSpec, m: usize, jobs: usize) -> Result<SimulationReport> {
    if m == 0 {
        return Err(Error::InvalidConfig { field: "m", message: "need at least one trial".into() });
    }
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig { field: "jobs", message: e.to_string() })?;
    pool.install(|| {
        (0..m as u64)
            .into_par_iter()
            .try_fold(
                || SimulationReport::empty(spec),
                |mut acc, i| {
                    let trace = run_trial(spec, i)
                        .map_err(|e| Error::TrialFailed { trial_index: i, source: Box::new(e) })?;
                    acc.add(&trace);
                    Ok(acc)
                },
            )
            .try_reduce(|| SimulationReport::empty(spec), |a, b| Ok(a.merge(b)))
    })
}

/// Reports of one or more settings written together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub name: String,
    pub sections: Vec<SimulationReport>,
}

#[derive(Serialize)]
struct JsonSection<'a> {
    config: &'a TrialConfig,
    dgp: &'a DgpSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    baselines: Option<Granularity>,
    m: usize,
    methods: Vec<MethodSummary>,
}

#[derive(Serialize)]
struct JsonStudy<'a> {
    name: &'a str,
    sections: Vec<JsonSection<'a>>,
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl StudyReport {
    pub fn summaries(&self) -> Vec<MethodSummary> {
        self.sections
            .iter()
            .flat_map(|s| s.tallies.iter().filter_map(|t| s.summary(t.method)))
            .collect()
    }

    pub fn find(&self, scheme: Scheme, method: ReportMethod) -> Option<&SimulationReport> {
        self.sections
            .iter()
            .find(|s| s.spec.config.scheme == scheme && s.tally(method).is_some())
    }

    /// One row per (scheme, method, block).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,method,block,cumulative_rejection,uniform_coverage\n");
        for section in &self.sections {
            let scheme = section.spec.config.scheme;
            for tally in &section.tallies {
                let stop = section.cumulative_stop(tally.method).unwrap_or_default();
                let cover = section.uniform_coverage(tally.method);
                for (i, s) in stop.iter().enumerate() {
                    let c = cover.as_ref().map(|c| fmt_float(c[i])).unwrap_or_default();
                    writeln!(out, "{scheme},{},{},{},{c}", tally.method.label(), i + 1, fmt_float(*s))
                        .expect("writing to a String");
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let study = JsonStudy {
            name: &self.name,
            sections: self
                .sections
                .iter()
                .map(|s| JsonSection {
                    config: &s.spec.config,
                    dgp: &s.spec.dgp,
                    baselines: s.spec.baselines,
                    m: s.m,
                    methods: s.tallies.iter().filter_map(|t| s.summary(t.method)).collect(),
                })
                .collect(),
        };
        let mut json = serde_json::to_string_pretty(&study).expect("report serializes");
        json.push('\n');
        json
    }
}

/// Named study configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Null effect, K = 30, T = 10: type-I error of repeated looks.
    Fig1,
    /// Effect `5 + 1/k`, K = 100, T = 10, unrestricted and pairwise.
    Table2,
}

/// Block count at which the preset intervals are tuned to be narrowest.
pub const PRESET_ETA_TARGET_BLOCKS: usize = 50;
/// Expected per-block variance proxy of the effect preset at `p = 0.5`.
pub const PRESET_ETA_SIGMA2: f64 = 80.0;

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Table2 => "table2",
        }
    }

    pub fn parse(s: &str) -> Option<Preset> {
        match s {
            "fig1" => Some(Preset::Fig1),
            "table2" => Some(Preset::Table2),
            _ => None,
        }
    }

    pub fn eta(alpha: f64) -> f64 {
        tune_eta(PRESET_ETA_TARGET_BLOCKS, PRESET_ETA_SIGMA2, alpha)
    }

    pub fn specs(self, seed: u64) -> Vec<SimulationSpec> {
        let alpha = crate::trial::DEFAULT_ALPHA;
        let base = |k: usize, scheme: Scheme| {
            TrialConfig::new(k, 10).with_scheme(scheme).with_seed(seed).with_eta(Preset::eta(alpha))
        };
        match self {
            Preset::Fig1 => vec![SimulationSpec::new(base(30, Scheme::Unrestricted), DgpSpec::null())
                .with_baselines(Granularity::TimePoint)],
            Preset::Table2 => [Scheme::Unrestricted, Scheme::Pairwise]
                .into_iter()
                .map(|s| SimulationSpec::new(base(100, s), DgpSpec::decreasing_effect()))
                .collect(),
        }
    }
}

/// Runs every setting of a preset (or of explicit specs) and collects the
/// reports.
pub fn run_study(name: &str, specs: &[SimulationSpec], m: usize, jobs: usize) -> Result<StudyReport> {
    let sections = specs.iter().map(|s| monte_carlo(s, m, jobs)).collect::<Result<Vec<_>>>()?;
    Ok(StudyReport { name: name.to_string(), sections })
}
