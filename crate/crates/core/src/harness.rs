//! Experiment pipeline: draw a random target tree, sample, corrupt, learn,
//! and measure the learned hypothesis against the guarantee for its method.
//!
//! Every random draw comes from a ChaCha8 stream keyed by the config seed,
//! the trial index and the purpose of the draw, so a trial's report does not
//! depend on which other trials run or on thread scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{corrupt, draw_clean, AdversaryStrategy};
use crate::error::{Error, Result};
pub use crate::evaluation::Method;
use crate::evaluation::{guarantee_margin, measure_error, measure_opt, ErrorReport, Hypothesis};
use crate::find::{find_with, FindOptions};
use crate::poly::monomial_count;
use crate::regression::{
    l1_regress_with, l2_regress_with, pipeline_degree, PredictionMode, RegressionOptions,
    TruncatedPolyHypothesis,
};
use crate::trees::{random_tree, StochasticTree};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Number of leaves of the random target.
    pub s: usize,
    pub stoch_fraction: f64,
    pub m: usize,
    pub eta: f64,
    pub eps: f64,
    /// Seeded repetitions; the success-rate target stands in for δ.
    pub trials: usize,
    pub method: Method,
    pub adversary: AdversaryStrategy,
    pub seed: u64,
    /// Cap on the find depth budget.
    pub max_depth: usize,
    /// Inputs sampled when `n` is beyond the enumeration cap.
    pub mc_trials: usize,
    pub memoize: bool,
    pub threads: usize,
    pub feature_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 10,
            s: 8,
            stoch_fraction: 0.3,
            m: 50_000,
            eta: 0.0,
            eps: 0.15,
            trials: 1,
            method: Method::Find,
            adversary: AdversaryStrategy::LabelFlipMargin,
            seed: 0,
            max_depth: 6,
            mc_trials: 200_000,
            memoize: true,
            threads: 0,
            feature_cap: RegressionOptions::default().feature_cap,
        }
    }
}

const FIND_WORK_CAP: f64 = 1e13;

/// `ceil(log2(S / eps))` with `log2 S = ceil(1/eps^2) * log2 s`, capped
/// at `max_depth`.
pub fn find_depth(s: usize, eps: f64, max_depth: usize) -> usize {
    let copies = (1.0 / (eps * eps)).ceil();
    let log_size = copies * (s.max(1) as f64).log2();
    let d = (log_size - eps.log2()).ceil().max(0.0);
    if d >= max_depth as f64 {
        max_depth
    } else {
        d as usize
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |name: &'static str, value: f64, ok: bool, range: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(Error::OutOfRange { name, value, range })
            }
        };
        if self.n == 0 || self.n > crate::MAX_VARIABLES {
            return Err(Error::Config(format!("n = {} must be in 1..=64", self.n)));
        }
        if self.s == 0 {
            return Err(Error::Config("s must be at least 1".into()));
        }
        if self.stoch_fraction == 0.0 && self.n < 64 && (self.s as u128) > (1u128 << self.n) {
            return Err(Error::Config(format!(
                "a deterministic tree over {} variables has at most 2^{} leaves",
                self.n, self.n
            )));
        }
        range("stoch_fraction", self.stoch_fraction, (0.0..=1.0).contains(&self.stoch_fraction), "[0, 1]")?;
        range("eta", self.eta, (0.0..=1.0).contains(&self.eta), "[0, 1]")?;
        range("eps", self.eps, self.eps > 0.0 && self.eps <= 1.0, "(0, 1]")?;
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.mc_trials == 0 {
            return Err(Error::Config("mc_trials must be at least 1".into()));
        }
        self.check_budget()?;
        Ok(())
    }

    /// Depth (find) or degree (l1, l2) the learner will use.
    pub fn budget(&self) -> Result<usize> {
        match self.method {
            Method::Find => Ok(find_depth(self.s, self.eps, self.max_depth)),
            Method::L1 | Method::L2 => pipeline_degree(self.n, self.s, self.eps),
        }
    }

    fn check_budget(&self) -> Result<()> {
        let b = self.budget()?;
        match self.method {
            Method::Find => {
                let work = (2.0 * self.n as f64).powi(b as i32) * self.m as f64;
                if work > FIND_WORK_CAP {
                    return Err(Error::Budget(format!(
                        "find at depth {b} over n = {} would take about {work:.1e} steps; lower max_depth",
                        self.n
                    )));
                }
            }
            Method::L1 | Method::L2 => {
                let f = monomial_count(self.n, b);
                if f > self.feature_cap {
                    return Err(Error::FeatureCap {
                        features: f,
                        cap: self.feature_cap,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
        }
        let v = value.trim();
        match key.trim() {
            "n" => self.n = num(key, v)?,
            "s" => self.s = num(key, v)?,
            "stoch_fraction" => self.stoch_fraction = num(key, v)?,
            "m" => self.m = num(key, v)?,
            "eta" => self.eta = num(key, v)?,
            "eps" => self.eps = num(key, v)?,
            "trials" => self.trials = num(key, v)?,
            "method" => self.method = v.parse()?,
            "adversary" => self.adversary = v.parse()?,
            "seed" => self.seed = num(key, v)?,
            "max_depth" => self.max_depth = num(key, v)?,
            "mc_trials" => self.mc_trials = num(key, v)?,
            "memoize" => self.memoize = num(key, v)?,
            "threads" => self.threads = num(key, v)?,
            "feature_cap" => self.feature_cap = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Flat `key=value` lines; `#` starts a comment. Values may be
    /// comma-separated lists, and the result is their Cartesian product in
    /// file order (last key varying fastest). Every config is validated.
    pub fn grid_from_str(text: &str) -> Result<Vec<ExperimentConfig>> {
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected key=value, got `{line}`")))?;
            let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
            if values.iter().any(|s| s.is_empty()) {
                return Err(Error::parse(i + 1, format!("empty value for `{}`", k.trim())));
            }
            entries.push((k.trim().to_string(), values));
        }
        let mut grid = vec![ExperimentConfig::default()];
        for (k, values) in &entries {
            let mut next = Vec::with_capacity(grid.len() * values.len());
            for base in &grid {
                for v in values {
                    let mut c = base.clone();
                    c.set(k, v)?;
                    next.push(c);
                }
            }
            grid = next;
        }
        for c in &grid {
            c.validate()?;
        }
        Ok(grid)
    }

    /// Single config from `key=value` text; lists are rejected.
    pub fn from_str_single(text: &str) -> Result<ExperimentConfig> {
        let mut grid = Self::grid_from_str(text)?;
        if grid.len() != 1 {
            return Err(Error::Config(format!(
                "expected a single configuration, got a grid of {}",
                grid.len()
            )));
        }
        Ok(grid.pop().expect("one config"))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let value = serde_json::to_value(self).expect("config serializes");
        for (k, v) in value.as_object().expect("struct") {
            let v = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
enum Stream {
    Tree = 0,
    Sample = 1,
    Corrupt = 2,
    Measure = 3,
}

fn stream(seed: u64, trial: usize, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 8) | purpose as u64);
    rng
}

/// Outcome of one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub trial: usize,
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub adversary: AdversaryStrategy,
    /// find depth or regression degree.
    pub budget: usize,
    pub corrupted: usize,
    pub report: ErrorReport,
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str =
        "seed,trial,n,s,m,adversary,budget,corrupted,method,opt,hypothesis_error,eta,eps,bound,margin,exact";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.trial,
            self.n,
            self.s,
            self.m,
            self.adversary.as_str(),
            self.budget,
            self.corrupted,
            self.report.to_csv_row()
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Everything a trial produces, for callers that need more than the report.
#[derive(Clone, Debug)]
pub struct TrialArtifacts {
    pub target: StochasticTree,
    pub dataset: crate::data::Dataset,
    pub hypothesis: Hypothesis,
    pub report: ExperimentReport,
}

/// Target tree of trial `trial`.
pub fn trial_target(cfg: &ExperimentConfig, trial: usize) -> Result<StochasticTree> {
    random_tree(cfg.n, cfg.s, cfg.stoch_fraction, &mut stream(cfg.seed, trial, Stream::Tree))
}

pub fn learn(cfg: &ExperimentConfig, samples: &crate::data::Samples) -> Result<(Hypothesis, usize)> {
    let budget = cfg.budget()?;
    let opts = RegressionOptions {
        feature_cap: cfg.feature_cap,
        ..Default::default()
    };
    let h = match cfg.method {
        Method::Find => {
            let fopts = FindOptions {
                memoize: cfg.memoize,
                threads: cfg.threads,
            };
            Hypothesis::Tree(find_with(samples, budget, &fopts)?.tree)
        }
        Method::L2 => Hypothesis::Poly(TruncatedPolyHypothesis::new(
            l2_regress_with(samples, budget, &opts)?,
            PredictionMode::Rounded,
        )),
        Method::L1 => Hypothesis::Poly(TruncatedPolyHypothesis::new(
            l1_regress_with(samples, budget, &opts)?.poly,
            PredictionMode::Randomized,
        )),
    };
    Ok((h, budget))
}

pub fn run_trial_artifacts(cfg: &ExperimentConfig, trial: usize) -> Result<TrialArtifacts> {
    cfg.validate()?;
    let target = trial_target(cfg, trial)?;
    let clean = draw_clean(&target, cfg.m, &mut stream(cfg.seed, trial, Stream::Sample));
    let dataset = corrupt(
        &clean,
        cfg.eta,
        cfg.adversary,
        &target,
        &mut stream(cfg.seed, trial, Stream::Corrupt),
    )?;
    let (hypothesis, budget) = learn(cfg, dataset.samples())?;
    let mut mrng = stream(cfg.seed, trial, Stream::Measure);
    let (opt, opt_exact) = measure_opt(&target, cfg.mc_trials, &mut mrng)?;
    let (err, err_exact) = measure_error(&target, &hypothesis, cfg.mc_trials, &mut mrng)?;
    let report = guarantee_margin(
        cfg.method,
        opt,
        err,
        dataset.corrupted_fraction(),
        cfg.eps,
        opt_exact && err_exact,
    );
    let report = ExperimentReport {
        seed: cfg.seed,
        trial,
        n: cfg.n,
        s: cfg.s,
        m: cfg.m,
        adversary: cfg.adversary,
        budget,
        corrupted: dataset.corrupted_count(),
        report,
    };
    Ok(TrialArtifacts {
        target,
        dataset,
        hypothesis,
        report,
    })
}

pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<ExperimentReport> {
    Ok(run_trial_artifacts(cfg, trial)?.report)
}

/// First trial of `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_trial(cfg, 0)
}

/// All `cfg.trials` trials, in trial order.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    cfg.validate()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub method: Method,
    pub adversary: AdversaryStrategy,
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub eta: f64,
    pub eps: f64,
    pub trials: usize,
    /// Fraction of trials whose guarantee held.
    pub success_rate: f64,
    pub mean_error: f64,
    pub mean_opt: f64,
    pub max_margin: f64,
}

impl SweepSummary {
    pub fn from_reports(cfg: &ExperimentConfig, reports: &[ExperimentReport]) -> Self {
        let t = reports.len().max(1) as f64;
        SweepSummary {
            method: cfg.method,
            adversary: cfg.adversary,
            n: cfg.n,
            s: cfg.s,
            m: cfg.m,
            eta: cfg.eta,
            eps: cfg.eps,
            trials: reports.len(),
            success_rate: reports.iter().filter(|r| r.report.holds()).count() as f64 / t,
            mean_error: reports.iter().map(|r| r.report.hypothesis_error).sum::<f64>() / t,
            mean_opt: reports.iter().map(|r| r.report.opt).sum::<f64>() / t,
            max_margin: reports
                .iter()
                .map(|r| r.report.margin)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub const CSV_HEADER: &'static str =
        "method,adversary,n,s,m,eta,eps,trials,success_rate,mean_error,mean_opt,max_margin";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:?},{:?},{},{:?},{:?},{:?},{:?}",
            self.method.as_str(),
            self.adversary.as_str(),
            self.n,
            self.s,
            self.m,
            self.eta,
            self.eps,
            self.trials,
            self.success_rate,
            self.mean_error,
            self.mean_opt,
            self.max_margin
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub reports: Vec<ExperimentReport>,
    pub summaries: Vec<SweepSummary>,
}

impl SweepResult {
    pub fn reports_csv(&self) -> String {
        let mut out = String::from(ExperimentReport::CSV_HEADER);
        out.push('\n');
        for r in &self.reports {
            out.push_str(&r.to_csv_row());
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SweepSummary::CSV_HEADER);
        out.push('\n');
        for s in &self.summaries {
            out.push_str(&s.to_csv_row());
            out.push('\n');
        }
        out
    }
}

/// Runs every config of the grid; all budgets are checked before any trial
/// starts.
pub fn run_sweep(grid: &[ExperimentConfig]) -> Result<SweepResult> {
    for c in grid {
        c.validate()?;
    }
    let mut reports = Vec::new();
    let mut summaries = Vec::new();
    for c in grid {
        let r = run_trials(c)?;
        summaries.push(SweepSummary::from_reports(c, &r));
        reports.extend(r);
    }
    Ok(SweepResult { reports, summaries })
}

/// Groups reports by adversary and returns, per adversary, the fraction of
/// trials with `hypothesis_error > opt + eta_used`.
pub fn exceed_rates(reports: &[ExperimentReport]) -> BTreeMap<&'static str, f64> {
    let mut counts: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
    for r in reports {
        let e = counts.entry(r.adversary.as_str()).or_default();
        e.1 += 1;
        if r.report.hypothesis_error > r.report.opt + r.report.eta {
            e.0 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(k, (hit, total))| (k, hit as f64 / total as f64))
        .collect()
}
