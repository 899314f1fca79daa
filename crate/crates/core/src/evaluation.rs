//! Error measurement against a known target tree.
//!
//! Every quantity here is an expectation over uniform `x in {0,1}^n`. For
//! `n <= ENUMERATION_CAP` it is computed exactly by enumeration; the cube
//! is cut into fixed blocks that are summed independently and then added in
//! block order, so results do not depend on the number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::input::Input;
use crate::regression::{trunc, TruncatedPolyHypothesis};
use crate::trees::StochasticTree;

pub const ENUMERATION_CAP: usize = 24;

const BLOCK_BITS: usize = 12;

/// `2^-n * sum_x f(x)` over the whole cube.
pub fn cube_average<F>(n: usize, f: F) -> Result<f64>
where
    F: Fn(Input) -> f64 + Sync,
{
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    let total = 1u64 << n;
    let block = 1u64 << BLOCK_BITS.min(n);
    let blocks = total / block;
    let sum_block = |b: u64| -> f64 { (b * block..(b + 1) * block).map(|x| f(Input(x))).sum() };
    let sum: f64 = if blocks == 1 {
        sum_block(0)
    } else {
        let partial: Vec<f64> = (0..blocks).into_par_iter().map(sum_block).collect();
        partial.iter().sum()
    };
    Ok(sum / total as f64)
}

/// Anything that outputs 1 on `x` with a known probability.
pub trait Predictor {
    fn prob_one(&self, x: Input) -> f64;
}

impl Predictor for StochasticTree {
    fn prob_one(&self, x: Input) -> f64 {
        self.mean(x)
    }
}

impl Predictor for TruncatedPolyHypothesis {
    fn prob_one(&self, x: Input) -> f64 {
        TruncatedPolyHypothesis::prob_one(self, x)
    }
}

impl<F: Fn(Input) -> f64> Predictor for F {
    fn prob_one(&self, x: Input) -> f64 {
        self(x)
    }
}

/// A learned hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub enum Hypothesis {
    Tree(StochasticTree),
    Poly(TruncatedPolyHypothesis),
}

impl Predictor for Hypothesis {
    fn prob_one(&self, x: Input) -> f64 {
        match self {
            Hypothesis::Tree(t) => t.mean(x),
            Hypothesis::Poly(h) => h.prob_one(x),
        }
    }
}

// Pr[f(x) != h(x)] for independent f ~ Bernoulli(mu), h ~ Bernoulli(q).
#[inline]
fn disagreement(mu: f64, q: f64) -> f64 {
    q * (1.0 - mu) + (1.0 - q) * mu
}

/// Bayes optimal error `E_x[min(mu_T, 1 - mu_T)]`.
pub fn exact_opt(target: &StochasticTree) -> Result<f64> {
    cube_average(target.n(), |x| {
        let mu = target.mean(x);
        mu.min(1.0 - mu)
    })
}

/// `error_T(h) = E_x Pr[T(x) != h(x)]`, in closed form over the internal
/// randomness of both.
pub fn exact_error<H: Predictor + Sync + ?Sized>(target: &StochasticTree, h: &H) -> Result<f64> {
    cube_average(target.n(), |x| disagreement(target.mean(x), h.prob_one(x)))
}

/// `E_x |mu_T(x) - q(x)|`.
pub fn exact_l1_distance<H: Predictor + Sync + ?Sized>(target: &StochasticTree, h: &H) -> Result<f64> {
    cube_average(target.n(), |x| (target.mean(x) - h.prob_one(x)).abs())
}

/// `E_x (mu_T(x) - q(x))^2`.
pub fn exact_squared_distance<H: Predictor + Sync + ?Sized>(
    target: &StochasticTree,
    h: &H,
) -> Result<f64> {
    cube_average(target.n(), |x| {
        let d = target.mean(x) - h.prob_one(x);
        d * d
    })
}

/// `E_x |trunc(p(x)) - T(x)|` where `T(x)` is the random label: equals
/// `E_x[q(1 - mu) + (1 - q) mu]` with `q = trunc(p(x))`.
pub fn exact_label_l1(target: &StochasticTree, q: impl Fn(Input) -> f64 + Sync) -> Result<f64> {
    cube_average(target.n(), |x| disagreement(target.mean(x), trunc(q(x))))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

/// Monte Carlo estimate of `error_T(h)` from `trials` uniform inputs; the
/// disagreement at each sampled input is taken in closed form.
pub fn mc_error<H, R>(target: &StochasticTree, h: &H, trials: usize, rng: &mut R) -> McEstimate
where
    H: Predictor + ?Sized,
    R: Rng + ?Sized,
{
    let mask = crate::input::mask(target.n());
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let x = Input(rng.random::<u64>() & mask);
        let v = disagreement(target.mean(x), h.prob_one(x));
        sum += v;
        sum_sq += v * v;
    }
    let t = trials.max(1) as f64;
    let mean = sum / t;
    let var = if trials > 1 {
        ((sum_sq - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    McEstimate {
        mean,
        std_err: (var / t).sqrt(),
        trials,
    }
}

/// Learning method, which selects the guarantee a report is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Find,
    L1,
    L2,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Find => "find",
            Method::L1 => "l1",
            Method::L2 => "l2",
        }
    }

    /// Upper bound on the hypothesis error promised for this method:
    /// `opt + 2 eta + eps` (find), `opt + 2 sqrt(3 eps + 2 eta) + eps` (l2),
    /// `2 opt + 2 eta + eps` (l1).
    pub fn bound(self, opt: f64, eta: f64, eps: f64) -> f64 {
        match self {
            Method::Find => opt + 2.0 * eta + eps,
            Method::L2 => opt + 2.0 * (3.0 * eps + 2.0 * eta).sqrt() + eps,
            Method::L1 => 2.0 * opt + 2.0 * eta + eps,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "find" => Ok(Method::Find),
            "l1" => Ok(Method::L1),
            "l2" => Ok(Method::L2),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Measured error of one hypothesis against the guarantee for its method.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub method: Method,
    pub opt: f64,
    pub hypothesis_error: f64,
    /// Corruption budget actually used: corrupted rows / m.
    pub eta: f64,
    pub eps: f64,
    pub bound: f64,
    /// `hypothesis_error - bound`; the guarantee holds iff `margin <= 0`.
    pub margin: f64,
    /// False when `hypothesis_error` is a Monte Carlo estimate.
    pub exact: bool,
}

impl ErrorReport {
    pub fn holds(&self) -> bool {
        self.margin <= 0.0
    }

    pub const CSV_HEADER: &'static str = "method,opt,hypothesis_error,eta,eps,bound,margin,exact";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            self.method.as_str(),
            self.opt,
            self.hypothesis_error,
            self.eta,
            self.eps,
            self.bound,
            self.margin,
            self.exact
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Builds the report for `method` from measured quantities.
pub fn guarantee_margin(
    method: Method,
    opt: f64,
    hypothesis_error: f64,
    eta: f64,
    eps: f64,
    exact: bool,
) -> ErrorReport {
    let bound = method.bound(opt, eta, eps);
    ErrorReport {
        method,
        opt,
        hypothesis_error,
        eta,
        eps,
        bound,
        margin: hypothesis_error - bound,
        exact,
    }
}

/// Error of `h` against `target`: exact when enumerable, otherwise a Monte
/// Carlo estimate from `mc_trials` inputs. Returns `(error, exact)`.
pub fn measure_error<H, R>(
    target: &StochasticTree,
    h: &H,
    mc_trials: usize,
    rng: &mut R,
) -> Result<(f64, bool)>
where
    H: Predictor + Sync + ?Sized,
    R: Rng + ?Sized,
{
    match exact_error(target, h) {
        Ok(e) => Ok((e, true)),
        Err(Error::EnumerationCap { .. }) => Ok((mc_error(target, h, mc_trials, rng).mean, false)),
        Err(e) => Err(e),
    }
}

/// Bayes error, falling back to Monte Carlo beyond the enumeration cap.
pub fn measure_opt<R: Rng + ?Sized>(
    target: &StochasticTree,
    mc_trials: usize,
    rng: &mut R,
) -> Result<(f64, bool)> {
    match exact_opt(target) {
        Ok(o) => Ok((o, true)),
        Err(Error::EnumerationCap { .. }) => {
            let bayes = |x: Input| if target.bayes_label(x) { 1.0 } else { 0.0 };
            Ok((mc_error(target, &bayes, mc_trials, rng).mean, false))
        }
        Err(e) => Err(e),
    }
}
