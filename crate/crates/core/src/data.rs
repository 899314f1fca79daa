//! Uniform samples and η-corruption.
//!
//! A [`Dataset`] keeps, for every row, whether an adversary touched it.
//! Learners only ever see the [`Samples`] view, which carries no flags.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::input::{check_dimension, mask, Input};
use crate::trees::{round, StochasticTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Sample {
    pub x: Input,
    pub y: bool,
}

/// Labeled examples as seen by a learner.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Samples {
    n: usize,
    rows: Vec<Sample>,
}

impl Samples {
    pub fn new(n: usize, rows: Vec<Sample>) -> Result<Self> {
        check_dimension(n)?;
        let m = mask(n);
        if let Some(r) = rows.iter().find(|r| r.x.0 & !m != 0) {
            return Err(Error::Config(format!(
                "input {} has bits beyond n = {n}",
                r.x
            )));
        }
        Ok(Samples { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    /// Distinct inputs in increasing order with their `(label 0, label 1)`
    /// counts.
    pub fn label_counts(&self) -> Vec<(Input, u64, u64)> {
        let mut counts: HashMap<Input, (u64, u64)> = HashMap::new();
        for r in &self.rows {
            let e = counts.entry(r.x).or_default();
            if r.y {
                e.1 += 1;
            } else {
                e.0 += 1;
            }
        }
        let mut out: Vec<_> = counts.into_iter().map(|(x, (a, b))| (x, a, b)).collect();
        out.sort_unstable_by_key(|&(x, _, _)| x);
        out
    }

    /// Empirical mean of `err(x, y)` over the rows.
    pub fn average(&self, err: impl Fn(Input, bool) -> f64) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| err(r.x, r.y)).sum::<f64>() / self.rows.len() as f64
    }

    /// Parses the dataset file format, ignoring the corruption column.
    pub fn parse(text: &str) -> Result<Samples> {
        Ok(Dataset::parse(text)?.samples)
    }
}

/// Samples plus per-row corruption flags.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    samples: Samples,
    corrupted: Vec<bool>,
}

impl Dataset {
    pub fn clean(samples: Samples) -> Self {
        let corrupted = vec![false; samples.len()];
        Dataset { samples, corrupted }
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn into_samples(self) -> Samples {
        self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.n
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn corrupted_flags(&self) -> &[bool] {
        &self.corrupted
    }

    pub fn corrupted_count(&self) -> usize {
        self.corrupted.iter().filter(|&&c| c).count()
    }

    /// Fraction of rows marked corrupted.
    pub fn corrupted_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.corrupted_count() as f64 / self.len() as f64
        }
    }

    pub fn to_text(&self) -> String {
        let n = self.n();
        let mut out = format!("n={} m={}\n", n, self.len());
        for (r, &c) in self.samples.rows.iter().zip(&self.corrupted) {
            let _ = writeln!(out, "{} {} {}", r.x.to_bit_string(n), r.y as u8, c as u8);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Dataset> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty dataset file"))?;
        let mut n = None;
        let mut m = None;
        for field in header.split_whitespace() {
            if let Some(v) = field.strip_prefix("n=") {
                n = v.parse::<usize>().ok();
            } else if let Some(v) = field.strip_prefix("m=") {
                m = v.parse::<usize>().ok();
            }
        }
        let (n, m) = match (n, m) {
            (Some(n), Some(m)) => (n, m),
            _ => return Err(Error::parse(hline, "expected header `n=<n> m=<m>`")),
        };
        check_dimension(n)?;
        let mut rows = Vec::with_capacity(m);
        let mut corrupted = Vec::with_capacity(m);
        for (line, text) in lines {
            let mut fields = text.split_whitespace();
            let (bits, label, flag) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(b), Some(l), Some(f), None) => (b, l, f),
                _ => return Err(Error::parse(line, "expected `<bits> <label> <flag>`")),
            };
            let x = match Input::parse_bits(bits) {
                Some((x, len)) if len == n => x,
                _ => return Err(Error::parse(line, format!("expected {n} input bits, got `{bits}`"))),
            };
            let bit = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(Error::parse(line, format!("expected 0 or 1, got `{s}`"))),
            };
            rows.push(Sample { x, y: bit(label)? });
            corrupted.push(bit(flag)?);
        }
        if rows.len() != m {
            return Err(Error::parse(
                hline,
                format!("header declares m={m} rows but {} were found", rows.len()),
            ));
        }
        Ok(Dataset {
            samples: Samples { n, rows },
            corrupted,
        })
    }
}

/// `m` i.i.d. rows `(x, T(x))` with `x` uniform on `{0,1}^n`.
pub fn draw_clean<R: Rng + ?Sized>(target: &StochasticTree, m: usize, rng: &mut R) -> Dataset {
    let mask = mask(target.n());
    let rows = (0..m)
        .map(|_| {
            let x = Input(rng.random::<u64>() & mask);
            Sample {
                x,
                y: target.sample(x, rng),
            }
        })
        .collect();
    Dataset::clean(Samples {
        n: target.n(),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryStrategy {
    None,
    /// Flip the labels of uniformly chosen rows.
    LabelFlipRandom,
    /// Flip labels on inputs where `|mu_T - 1/2|` is largest, just enough
    /// per input to invert its empirical majority.
    LabelFlipMargin,
    /// Replace rows by anti-Bayes examples concentrated in one subcube.
    ExampleReplace,
}

impl AdversaryStrategy {
    pub const ALL: [AdversaryStrategy; 4] = [
        AdversaryStrategy::None,
        AdversaryStrategy::LabelFlipRandom,
        AdversaryStrategy::LabelFlipMargin,
        AdversaryStrategy::ExampleReplace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AdversaryStrategy::None => "none",
            AdversaryStrategy::LabelFlipRandom => "label_flip_random",
            AdversaryStrategy::LabelFlipMargin => "label_flip_margin",
            AdversaryStrategy::ExampleReplace => "example_replace",
        }
    }
}

impl FromStr for AdversaryStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        AdversaryStrategy::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown adversary `{s}`")))
    }
}

/// Number of rows an η-adversary may modify out of `m`: `floor(eta * m)`.
pub fn corruption_budget(eta: f64, m: usize) -> usize {
    // the small offset absorbs binary rounding of decimal etas (0.29 * 100)
    ((eta * m as f64 + 1e-9).floor() as usize).min(m)
}

/// Applies an η-corruption to a clean dataset. The adversary sees the
/// target and every clean row; exactly `floor(eta * m)` rows are modified
/// and flagged.
pub fn corrupt<R: Rng + ?Sized>(
    clean: &Dataset,
    eta: f64,
    strategy: AdversaryStrategy,
    target: &StochasticTree,
    rng: &mut R,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::OutOfRange {
            name: "eta",
            value: eta,
            range: "[0, 1]",
        });
    }
    if clean.corrupted_count() != 0 {
        return Err(Error::Config("corrupt expects an uncorrupted dataset".into()));
    }
    if clean.n() != target.n() {
        return Err(Error::DimensionMismatch {
            expected: target.n(),
            got: clean.n(),
        });
    }
    let m = clean.len();
    let budget = if strategy == AdversaryStrategy::None {
        0
    } else {
        corruption_budget(eta, m)
    };
    let mut out = clean.clone();
    if budget == 0 {
        return Ok(out);
    }
    match strategy {
        AdversaryStrategy::None => {}
        AdversaryStrategy::LabelFlipRandom => {
            for i in sample_indices(rng, m, budget) {
                out.samples.rows[i].y = !out.samples.rows[i].y;
                out.corrupted[i] = true;
            }
        }
        AdversaryStrategy::LabelFlipMargin => flip_margin(&mut out, budget, target),
        AdversaryStrategy::ExampleReplace => replace_examples(&mut out, budget, eta, target, rng),
    }
    debug_assert_eq!(out.corrupted_count(), budget);
    Ok(out)
}

fn rows_by_input(rows: &[Sample]) -> HashMap<Input, Vec<usize>> {
    let mut by_input: HashMap<Input, Vec<usize>> = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_input.entry(r.x).or_default().push(i);
    }
    by_input
}

fn flip_margin(data: &mut Dataset, budget: usize, target: &StochasticTree) {
    let by_input = rows_by_input(&data.samples.rows);
    let mut inputs: Vec<(Input, f64)> = by_input.keys().map(|&x| (x, target.mean(x))).collect();
    inputs.sort_by(|a, b| {
        let (ma, mb) = ((a.1 - 0.5).abs(), (b.1 - 0.5).abs());
        mb.total_cmp(&ma).then(a.0.cmp(&b.0))
    });

    let mut remaining = budget;
    let flip = |data: &mut Dataset, i: usize, remaining: &mut usize| {
        data.samples.rows[i].y = !data.samples.rows[i].y;
        data.corrupted[i] = true;
        *remaining -= 1;
    };

    for &(x, mu) in &inputs {
        if remaining == 0 {
            break;
        }
        let bayes = round(mu);
        let rows = &by_input[&x];
        let agree: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| data.samples.rows[i].y == bayes)
            .collect();
        let disagree = rows.len() - agree.len();
        if agree.len() < disagree {
            continue;
        }
        // smallest f with agree - f < disagree + f
        let needed = (agree.len() - disagree) / 2 + 1;
        for &i in agree.iter().take(needed.min(remaining)) {
            flip(data, i, &mut remaining);
        }
    }

    // leftover budget: any untouched rows, same input order
    for &(x, _) in &inputs {
        for &i in &by_input[&x] {
            if remaining == 0 {
                return;
            }
            if !data.corrupted[i] {
                flip(data, i, &mut remaining);
            }
        }
    }
}

fn replace_examples<R: Rng + ?Sized>(
    data: &mut Dataset,
    budget: usize,
    eta: f64,
    target: &StochasticTree,
    rng: &mut R,
) {
    let n = data.n();
    // largest subcube mass 2^-k strictly below 2 eta
    let mut k = 0usize;
    while k < n && 0.5f64.powi(k as i32) >= 2.0 * eta {
        k += 1;
    }
    let region_mask = mask(k);

    let mut damage = vec![0.0f64; 1 << k];
    let mus: Vec<f64> = data.samples.rows.iter().map(|r| target.mean(r.x)).collect();
    for (r, mu) in data.samples.rows.iter().zip(&mus) {
        damage[(r.x.0 & region_mask) as usize] += (2.0 * mu - 1.0).abs();
    }
    let pattern = damage
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best })
        .0 as u64;

    let in_region = |x: Input| x.0 & region_mask == pattern;
    let rows = &data.samples.rows;
    let mut victims: Vec<usize> = (0..rows.len())
        .filter(|&i| in_region(rows[i].x) && rows[i].y == round(mus[i]))
        .collect();
    if victims.len() < budget {
        let mut rest: Vec<usize> = (0..rows.len()).filter(|&i| !victims.contains(&i)).collect();
        // prefer rows that support the Bayes label elsewhere, then the rest
        rest.sort_by_key(|&i| (rows[i].y != round(mus[i]), i));
        victims.extend(rest.into_iter().take(budget - victims.len()));
    }
    victims.truncate(budget);

    let free_mask = mask(n) & !region_mask;
    for i in victims {
        let x = Input((rng.random::<u64>() & free_mask) | pattern);
        data.samples.rows[i] = Sample {
            x,
            y: !target.bayes_label(x),
        };
        data.corrupted[i] = true;
    }
}
