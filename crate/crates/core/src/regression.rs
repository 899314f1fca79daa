//! L2 (low-degree) and L1 polynomial regression over degree-`d`
//! multilinear monomials, and the truncated-polynomial hypotheses built from
//! their solutions.

use std::collections::HashMap;
use std::time::Duration;

use microlp::{
    ComparisonOp, OptimizationDirection, Problem, SolutionStatus, SolveOptions, SolveOutcome,
    Solution, Variable,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::input::Input;
use crate::poly::{subsets_up_to, Monomial, MultilinearPolynomial};
use crate::trees::round;

/// Clamps to `[0, 1]`. NaN maps to 0.
pub fn trunc(t: f64) -> f64 {
    if t > 1.0 {
        1.0
    } else if t > 0.0 {
        t
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionMode {
    /// `round(trunc(p(x)))`.
    Rounded,
    /// 1 with probability `trunc(p(x))`.
    Randomized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedPolyHypothesis {
    pub poly: MultilinearPolynomial,
    pub mode: PredictionMode,
}

impl TruncatedPolyHypothesis {
    pub fn new(poly: MultilinearPolynomial, mode: PredictionMode) -> Self {
        TruncatedPolyHypothesis { poly, mode }
    }

    /// Probability that the hypothesis outputs 1 on `x`.
    pub fn prob_one(&self, x: Input) -> f64 {
        let q = trunc(self.poly.eval(x));
        match self.mode {
            PredictionMode::Randomized => q,
            PredictionMode::Rounded => {
                if round(q) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Draws a prediction; the rounded mode never touches `rng`.
    pub fn predict<R: Rng + ?Sized>(&self, x: Input, rng: &mut R) -> bool {
        match self.mode {
            PredictionMode::Rounded => self.prob_one(x) == 1.0,
            PredictionMode::Randomized => {
                let q = self.prob_one(x);
                q >= 1.0 || (q > 0.0 && rng.random::<f64>() < q)
            }
        }
    }
}

/// Which linear program `l1_regress` solves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpFormulation {
    /// Pick the smaller tableau.
    #[default]
    Auto,
    /// Least absolute deviations over the monomial coefficients: one row
    /// per distinct observed input.
    Coefficient,
    /// Function values on the whole cube with the high-degree Fourier
    /// coefficients forced to zero: one row per monomial of degree `> d`.
    ValueSpace,
}

/// Largest `n` for which the value-space formulation is considered.
pub const VALUE_SPACE_MAX_N: usize = 16;

#[derive(Clone, Debug)]
pub struct RegressionOptions {
    /// Maximum number of monomial features.
    pub feature_cap: usize,
    /// Wall-clock limit for one LP solve; `None` waits indefinitely.
    pub lp_time_limit: Option<Duration>,
    pub formulation: LpFormulation,
    /// Compare the L1 solution against the L2 solution's L1 objective.
    pub certify: bool,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        RegressionOptions {
            feature_cap: 4096,
            lp_time_limit: Some(Duration::from_secs(600)),
            formulation: LpFormulation::Auto,
            certify: true,
        }
    }
}

/// Mean absolute error `E_S |p(x) - y|`.
pub fn l1_objective(poly: &MultilinearPolynomial, samples: &Samples) -> f64 {
    objective(poly, samples, |r| r.abs())
}

/// Mean squared error `E_S (p(x) - y)^2`.
pub fn l2_objective(poly: &MultilinearPolynomial, samples: &Samples) -> f64 {
    objective(poly, samples, |r| r * r)
}

fn objective(poly: &MultilinearPolynomial, samples: &Samples, loss: impl Fn(f64) -> f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .label_counts()
        .iter()
        .map(|&(x, zeros, ones)| {
            let v = poly.eval(x);
            zeros as f64 * loss(v) + ones as f64 * loss(v - 1.0)
        })
        .sum();
    total / samples.len() as f64
}

fn check_degree(samples: &Samples, d: usize) -> Result<()> {
    if d > samples.n() {
        return Err(Error::Config(format!(
            "degree {d} exceeds the number of variables {}",
            samples.n()
        )));
    }
    Ok(())
}

/// Monomials of degree `<= d` satisfied by at least one sample, ordered by
/// degree then mask, with for every distinct input the indices of the
/// monomials it satisfies.
struct Features {
    monomials: Vec<Monomial>,
    per_input: Vec<(Input, u64, u64, Vec<usize>)>,
}

fn features(samples: &Samples, d: usize, cap: usize) -> Result<Features> {
    let counts = samples.label_counts();
    let mut seen: HashMap<u64, ()> = HashMap::new();
    let mut buf = Vec::new();
    for &(x, _, _) in &counts {
        subsets_up_to(x.0, d, &mut buf);
        for &s in &buf {
            seen.insert(s, ());
        }
        if seen.len() > cap {
            return Err(Error::FeatureCap {
                features: seen.len(),
                cap,
            });
        }
    }
    let mut monomials: Vec<Monomial> = seen.into_keys().map(Monomial).collect();
    monomials.sort_unstable_by_key(|m| (m.degree(), m.0));
    let index: HashMap<u64, usize> = monomials.iter().enumerate().map(|(i, m)| (m.0, i)).collect();
    let per_input = counts
        .into_iter()
        .map(|(x, zeros, ones)| {
            subsets_up_to(x.0, d, &mut buf);
            let mut idx: Vec<usize> = buf.iter().map(|s| index[s]).collect();
            idx.sort_unstable();
            (x, zeros, ones, idx)
        })
        .collect();
    Ok(Features {
        monomials,
        per_input,
    })
}

/// Least-squares fit over degree-`d` monomials.
pub fn l2_regress(samples: &Samples, d: usize) -> Result<MultilinearPolynomial> {
    l2_regress_with(samples, d, &RegressionOptions::default())
}

/// As [`l2_regress`]. Monomials never satisfied by a sample get
/// coefficient 0, which is also what the minimum-norm solution assigns
/// them; the remaining normal equations are solved by Cholesky after
/// diagonal scaling, falling back to an eigendecomposition pseudo-inverse
/// when the Gram matrix is numerically singular.
pub fn l2_regress_with(
    samples: &Samples,
    d: usize,
    opts: &RegressionOptions,
) -> Result<MultilinearPolynomial> {
    check_degree(samples, d)?;
    let n = samples.n();
    if samples.is_empty() {
        return Ok(MultilinearPolynomial::zero(n, d));
    }
    let feats = features(samples, d, opts.feature_cap)?;
    let f = feats.monomials.len();
    let mut gram = DMatrix::<f64>::zeros(f, f);
    let mut rhs = DVector::<f64>::zeros(f);
    for (_, zeros, ones, idx) in &feats.per_input {
        let w = (zeros + ones) as f64;
        for (a, &i) in idx.iter().enumerate() {
            rhs[i] += *ones as f64;
            for &j in &idx[a..] {
                gram[(i, j)] += w;
            }
        }
    }
    for j in 0..f {
        for i in 0..j {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    let coeffs = solve_normal_equations(&gram, &rhs)?;
    MultilinearPolynomial::from_terms(
        n,
        d,
        feats.monomials.iter().copied().zip(coeffs.iter().copied()),
    )
}

fn solve_normal_equations(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let f = gram.nrows();
    let scale = DVector::from_iterator(f, (0..f).map(|i| 1.0 / gram[(i, i)].sqrt()));
    let mut scaled = gram.clone();
    for j in 0..f {
        for i in 0..f {
            scaled[(i, j)] *= scale[i] * scale[j];
        }
    }
    if let Some(chol) = scaled.clone().cholesky() {
        let l = chol.l_dirty();
        let min_pivot = (0..f).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if min_pivot > 1e-11 {
            let z = chol.solve(&rhs.component_mul(&scale));
            let c = z.component_mul(&scale);
            let resid = (gram * &c - rhs).norm();
            if resid.is_finite() && resid <= 1e-8 * (1.0 + rhs.norm()) {
                return Ok(c);
            }
        }
    }
    // Pseudo-inverse from the symmetric eigendecomposition. The Gram matrix
    // is PSD, and nalgebra's general SVD is unreliable on rank-deficient
    // input.
    let eig = gram.clone().symmetric_eigen();
    let top = eig.eigenvalues.max();
    if !top.is_finite() {
        return Err(Error::LinearAlgebra("non-finite Gram matrix".into()));
    }
    let tol = top * 1e-11;
    let mut c = DVector::<f64>::zeros(f);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let v = eig.eigenvectors.column(k);
            c.axpy(v.dot(rhs) / lambda, &v, 1.0);
        }
    }
    Ok(c)
}

/// Details of an L1 fit.
#[derive(Clone, Debug)]
pub struct L1Fit {
    pub poly: MultilinearPolynomial,
    /// `E_S |p(x) - y|` of `poly`.
    pub objective: f64,
    /// Optimal value reported by the linear program.
    pub lp_objective: f64,
    /// L1 objective of the least-squares solution, when certified.
    pub l2_candidate_objective: Option<f64>,
    pub formulation: LpFormulation,
}

/// Minimizer of the empirical absolute error over degree-`d` polynomials,
/// solved exactly as a linear program.
pub fn l1_regress(samples: &Samples, d: usize) -> Result<MultilinearPolynomial> {
    Ok(l1_regress_with(samples, d, &RegressionOptions::default())?.poly)
}

pub fn l1_regress_with(samples: &Samples, d: usize, opts: &RegressionOptions) -> Result<L1Fit> {
    check_degree(samples, d)?;
    let n = samples.n();
    if samples.is_empty() {
        return Ok(L1Fit {
            poly: MultilinearPolynomial::zero(n, d),
            objective: 0.0,
            lp_objective: 0.0,
            l2_candidate_objective: None,
            formulation: opts.formulation,
        });
    }
    let candidate = if opts.certify {
        Some(l2_regress_with(samples, d, opts)?)
    } else {
        None
    };
    let candidate_objective = candidate.as_ref().map(|p| l1_objective(p, samples));

    let formulation = match opts.formulation {
        LpFormulation::Auto => choose_formulation(samples, d, opts.feature_cap)?,
        other => other,
    };
    let solved = match formulation {
        LpFormulation::ValueSpace => solve_value_space(samples, d, opts),
        _ => solve_coefficient(samples, d, opts),
    };
    let (poly, lp_objective) = match solved {
        Ok(s) => s,
        Err(Error::LpTimeLimit { seconds, incumbent }) => {
            let best = match (incumbent, candidate) {
                (Some(i), Some(c)) => {
                    if l1_objective(&i, samples) <= l1_objective(&c, samples) {
                        Some(i)
                    } else {
                        Some(Box::new(c))
                    }
                }
                (Some(i), None) => Some(i),
                (None, c) => c.map(Box::new),
            };
            return Err(Error::LpTimeLimit {
                seconds,
                incumbent: best,
            });
        }
        Err(e) => return Err(e),
    };

    let objective = l1_objective(&poly, samples);
    if (objective - lp_objective).abs() > 1e-7 * (1.0 + lp_objective.abs()) {
        return Err(Error::LpFailure(format!(
            "solution objective {objective} disagrees with the LP value {lp_objective}"
        )));
    }
    if let Some(c) = candidate_objective {
        if objective > c + 1e-9 {
            return Err(Error::LpFailure(format!(
                "L1 objective {objective} exceeds that of the least-squares candidate {c}"
            )));
        }
    }
    Ok(L1Fit {
        poly,
        objective,
        lp_objective,
        l2_candidate_objective: candidate_objective,
        formulation,
    })
}

// Compares constraint-matrix nonzeros.
fn choose_formulation(samples: &Samples, d: usize, cap: usize) -> Result<LpFormulation> {
    let n = samples.n();
    if n > VALUE_SPACE_MAX_N {
        return Ok(LpFormulation::Coefficient);
    }
    let cube = 1usize << n;
    let value_rows = cube - crate::poly::monomial_count(n, d);
    let value_size = value_rows * 3 * cube;
    let coeff_size = match features(samples, d, cap) {
        Ok(f) => f.per_input.iter().map(|p| p.3.len() + 3).sum(),
        Err(Error::FeatureCap { .. }) => usize::MAX,
        Err(e) => return Err(e),
    };
    Ok(if value_size <= coeff_size {
        LpFormulation::ValueSpace
    } else {
        LpFormulation::Coefficient
    })
}

/// Adds the variables of one function value. With `a` zero-labels and `b`
/// one-labels the value is `q + p - r`, `q in [0,1]` at cost `a - b` and
/// `p, r >= 0` at cost `a + b`, so the cost plus `b` is
/// `a |f| + b |1 - f|`. Unobserved inputs get one free variable.
fn value_terms(lp: &mut Problem, a: f64, b: f64, constant: &mut f64) -> Vec<(Variable, f64)> {
    if a + b == 0.0 {
        return vec![(lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)), 1.0)];
    }
    *constant += b;
    vec![
        (lp.add_var(a - b, (0.0, 1.0)), 1.0),
        (lp.add_var(a + b, (0.0, f64::INFINITY)), 1.0),
        (lp.add_var(a + b, (0.0, f64::INFINITY)), -1.0),
    ]
}

fn eval_terms(sol: &Solution, terms: &[(Variable, f64)]) -> f64 {
    terms.iter().map(|&(v, k)| k * sol.var_value_raw(v)).sum()
}

enum Solved {
    Optimal(Solution),
    Stopped(Option<Solution>),
}

fn run(lp: &Problem, opts: &RegressionOptions) -> Result<Solved> {
    let mut options = SolveOptions::default();
    options.time_limit = opts.lp_time_limit;
    match lp.solve_with(options) {
        Ok(SolveOutcome::Solution(s)) if s.status() == SolutionStatus::Optimal => Ok(Solved::Optimal(s)),
        Ok(SolveOutcome::Solution(s)) => Ok(Solved::Stopped(Some(s))),
        Ok(SolveOutcome::Interrupted(_)) => Ok(Solved::Stopped(None)),
        Err(e) => Err(Error::LpFailure(e.to_string())),
    }
}

fn time_limit(opts: &RegressionOptions, incumbent: Option<MultilinearPolynomial>) -> Error {
    Error::LpTimeLimit {
        seconds: opts.lp_time_limit.map_or(f64::INFINITY, |t| t.as_secs_f64()),
        incumbent: incumbent.map(Box::new),
    }
}

/// Least absolute deviations over the monomial coefficients: one row
/// `sum_S c_S - f(x) = 0` per observed input.
fn solve_coefficient(
    samples: &Samples,
    d: usize,
    opts: &RegressionOptions,
) -> Result<(MultilinearPolynomial, f64)> {
    let n = samples.n();
    let feats = features(samples, d, opts.feature_cap)?;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let coeffs: Vec<Variable> = feats
        .monomials
        .iter()
        .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let mut constant = 0.0;
    for (_, zeros, ones, idx) in &feats.per_input {
        let terms = value_terms(&mut lp, *zeros as f64, *ones as f64, &mut constant);
        let row: Vec<(Variable, f64)> = idx
            .iter()
            .map(|&i| (coeffs[i], 1.0))
            .chain(terms.iter().map(|&(v, k)| (v, -k)))
            .collect();
        lp.add_constraint(row, ComparisonOp::Eq, 0.0);
    }
    let poly_of = |sol: &Solution| {
        MultilinearPolynomial::from_terms(
            n,
            d,
            feats
                .monomials
                .iter()
                .zip(&coeffs)
                .map(|(&m, &v)| (m, clean(sol.var_value_raw(v)))),
        )
    };
    match run(&lp, opts)? {
        Solved::Optimal(sol) => {
            let m = samples.len() as f64;
            Ok((poly_of(&sol)?, (sol.objective() + constant) / m))
        }
        Solved::Stopped(sol) => Err(time_limit(opts, sol.map(|s| poly_of(&s)).transpose()?)),
    }
}

/// Function values on the whole cube, with one row
/// `sum_x (-1)^{|S & x|} f(x) = 0` for every `|S| > d`.
fn solve_value_space(
    samples: &Samples,
    d: usize,
    opts: &RegressionOptions,
) -> Result<(MultilinearPolynomial, f64)> {
    let n = samples.n();
    if n > VALUE_SPACE_MAX_N {
        return Err(Error::EnumerationCap {
            n,
            cap: VALUE_SPACE_MAX_N,
        });
    }
    let cube = 1usize << n;
    let mut zeros = vec![0u64; cube];
    let mut ones = vec![0u64; cube];
    for r in samples.rows() {
        if r.y {
            ones[r.x.0 as usize] += 1;
        } else {
            zeros[r.x.0 as usize] += 1;
        }
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut constant = 0.0;
    let values: Vec<Vec<(Variable, f64)>> = (0..cube)
        .map(|x| value_terms(&mut lp, zeros[x] as f64, ones[x] as f64, &mut constant))
        .collect();
    let mut row = Vec::with_capacity(3 * cube);
    for s in (0..cube as u64).filter(|s| s.count_ones() as usize > d) {
        row.clear();
        for (x, terms) in values.iter().enumerate() {
            let chi = if (s & x as u64).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            row.extend(terms.iter().map(|&(v, k)| (v, chi * k)));
        }
        lp.add_constraint(&row[..], ComparisonOp::Eq, 0.0);
    }
    let poly_of = |sol: &Solution| mobius(n, d, values.iter().map(|t| eval_terms(sol, t)).collect());
    match run(&lp, opts)? {
        Solved::Optimal(sol) => {
            let m = samples.len() as f64;
            Ok((poly_of(&sol)?, (sol.objective() + constant) / m))
        }
        Solved::Stopped(sol) => Err(time_limit(opts, sol.map(|s| poly_of(&s)).transpose()?)),
    }
}

/// Monomial coefficients of the multilinear extension of `f`, keeping
/// degrees `<= d`.
fn mobius(n: usize, d: usize, mut f: Vec<f64>) -> Result<MultilinearPolynomial> {
    for i in 0..n {
        let bit = 1usize << i;
        for s in 0..f.len() {
            if s & bit != 0 {
                f[s] -= f[s ^ bit];
            }
        }
    }
    MultilinearPolynomial::from_terms(
        n,
        d,
        f.into_iter()
            .enumerate()
            .filter(|(s, _)| s.count_ones() as usize <= d)
            .map(|(s, c)| (Monomial(s as u64), clean(c))),
    )
}

// flush solver round-off
fn clean(c: f64) -> f64 {
    if c.abs() < 1e-12 {
        0.0
    } else {
        c
    }
}

/// Degree used by the regression pipelines: `min(ceil(log2(s / eps)), n)`.
pub fn pipeline_degree(n: usize, s: usize, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::OutOfRange {
            name: "eps",
            value: eps,
            range: "(0, 1]",
        });
    }
    if s == 0 {
        return Err(Error::Config("size hint must be at least 1".into()));
    }
    let d = (s as f64 / eps).log2().ceil().max(0.0) as usize;
    Ok(d.min(n))
}

/// Low-degree algorithm: L2 regression at the pipeline degree, rounded.
pub fn learn_l2_pipeline(samples: &Samples, s: usize, eps: f64) -> Result<TruncatedPolyHypothesis> {
    let d = pipeline_degree(samples.n(), s, eps)?;
    Ok(TruncatedPolyHypothesis::new(
        l2_regress(samples, d)?,
        PredictionMode::Rounded,
    ))
}

/// L1 regression at the pipeline degree, randomized.
pub fn learn_l1_pipeline(samples: &Samples, s: usize, eps: f64) -> Result<TruncatedPolyHypothesis> {
    let d = pipeline_degree(samples.n(), s, eps)?;
    Ok(TruncatedPolyHypothesis::new(
        l1_regress(samples, d)?,
        PredictionMode::Randomized,
    ))
}
