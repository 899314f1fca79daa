//! Sparse multilinear polynomials over `{0,1}^n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::input::{check_dimension, Input};

/// A set of variable indices, packed as a bitmask. Evaluates to
/// `prod_{i in S} x_i` on 0/1 inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(pub u64);

impl Monomial {
    pub const CONSTANT: Monomial = Monomial(0);

    pub fn from_vars(vars: &[usize]) -> Monomial {
        Monomial(vars.iter().fold(0, |acc, &v| acc | (1 << v)))
    }

    pub fn degree(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn vars(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..64).filter(move |&i| (bits >> i) & 1 == 1)
    }

    #[inline]
    pub fn is_satisfied_by(self, x: Input) -> bool {
        x.0 & self.0 == self.0
    }
}

/// `sum_S coeff(S) * prod_{i in S} x_i` with `|S| <= degree_bound` for all
/// stored `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultilinearPolynomial {
    n: usize,
    degree_bound: usize,
    coeffs: BTreeMap<Monomial, f64>,
}

impl MultilinearPolynomial {
    pub fn zero(n: usize, degree_bound: usize) -> Self {
        MultilinearPolynomial {
            n,
            degree_bound,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        let mut p = Self::zero(n, 0);
        p.add_term(Monomial::CONSTANT, value);
        p
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs; repeated
    /// monomials are summed and exact zeros dropped.
    pub fn from_terms(
        n: usize,
        degree_bound: usize,
        terms: impl IntoIterator<Item = (Monomial, f64)>,
    ) -> Result<Self> {
        check_dimension(n)?;
        let mut p = Self::zero(n, degree_bound);
        for (m, c) in terms {
            if m.degree() > degree_bound {
                return Err(Error::Config(format!(
                    "monomial of degree {} exceeds degree bound {degree_bound}",
                    m.degree()
                )));
            }
            if n < 64 && m.0 >> n != 0 {
                return Err(Error::Config(format!(
                    "monomial uses a variable >= n = {n}"
                )));
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    pub(crate) fn add_term(&mut self, m: Monomial, c: f64) {
        let entry = self.coeffs.entry(m).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.coeffs.remove(&m);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The declared bound `d` on monomial size.
    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    /// Size of the largest monomial with a nonzero coefficient.
    pub fn degree(&self) -> usize {
        self.coeffs.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn coefficient(&self, m: Monomial) -> f64 {
        self.coeffs.get(&m).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (Monomial, f64)> + '_ {
        self.coeffs.iter().map(|(&m, &c)| (m, c))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: Input) -> f64 {
        self.coeffs
            .iter()
            .filter(|(m, _)| m.is_satisfied_by(x))
            .map(|(_, c)| c)
            .sum()
    }

    /// One `<vars>:<coefficient>` line per term, preceded by a
    /// `# n=<n> d=<d>` comment.
    pub fn to_text(&self) -> String {
        let mut out = format!("# n={} d={}\n", self.n, self.degree_bound);
        for (m, c) in &self.coeffs {
            let vars: Vec<String> = m.vars().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}:{}", vars.join(","), c);
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. Without a header, `n` is
    /// one past the largest variable index and `d` the largest monomial.
    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut terms = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(h) = parse_header(comment) {
                    header = Some(h);
                }
                continue;
            }
            let (vars, coeff) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, "expected `<vars>:<coefficient>`"))?;
            let coeff: f64 = coeff
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad coefficient `{coeff}`")))?;
            let mut indices = Vec::new();
            if !vars.trim().is_empty() {
                for v in vars.split(',') {
                    let v: usize = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad variable `{v}`")))?;
                    if v >= crate::MAX_VARIABLES {
                        return Err(Error::parse(lineno, format!("variable {v} out of range")));
                    }
                    indices.push(v);
                }
            }
            let mut sorted = indices.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted != indices {
                return Err(Error::parse(lineno, "variable indices must be sorted and distinct"));
            }
            terms.push((Monomial::from_vars(&indices), coeff));
        }
        let (n, d) = header.unwrap_or_else(|| {
            let n = terms
                .iter()
                .map(|(m, _)| 64 - m.0.leading_zeros() as usize)
                .max()
                .unwrap_or(0);
            let d = terms.iter().map(|(m, _)| m.degree()).max().unwrap_or(0);
            (n, d)
        });
        Self::from_terms(n, d, terms)
    }
}

fn parse_header(comment: &str) -> Option<(usize, usize)> {
    let mut n = None;
    let mut d = None;
    for field in comment.split_whitespace() {
        if let Some(v) = field.strip_prefix("n=") {
            n = v.parse().ok();
        } else if let Some(v) = field.strip_prefix("d=") {
            d = v.parse().ok();
        }
    }
    Some((n?, d?))
}

/// Number of monomials of degree at most `d` over `n` variables.
pub fn monomial_count(n: usize, d: usize) -> usize {
    let mut total: usize = 0;
    let mut binom: usize = 1;
    for k in 0..=d.min(n) {
        total = total.saturating_add(binom);
        binom = binom.saturating_mul(n - k) / (k + 1);
    }
    total
}

/// Every monomial over `n` variables of degree at most `d`, ordered by
/// degree and then by bitmask.
pub fn monomials_up_to(n: usize, d: usize) -> Vec<Monomial> {
    let mut out = Vec::with_capacity(monomial_count(n, d));
    for k in 0..=d.min(n) {
        if k == 0 {
            out.push(Monomial::CONSTANT);
            continue;
        }
        // Gosper's hack over k-subsets of n bits.
        let mut s: u64 = (1u64 << k) - 1;
        let limit = if n == 64 { u64::MAX } else { 1u64 << n };
        while s < limit {
            out.push(Monomial(s));
            let c = s & s.wrapping_neg();
            let r = s + c;
            if r == 0 {
                break;
            }
            s = (((r ^ s) >> 2) / c) | r;
        }
    }
    out
}

/// Subsets of `support` with at most `d` elements, including the empty set.
pub(crate) fn subsets_up_to(support: u64, d: usize, out: &mut Vec<u64>) {
    out.clear();
    out.push(0);
    let mut bits = support;
    while bits != 0 {
        let b = bits & bits.wrapping_neg();
        bits ^= b;
        let len = out.len();
        for i in 0..len {
            let s = out[i];
            if (s.count_ones() as usize) < d {
                out.push(s | b);
            }
        }
    }
}
