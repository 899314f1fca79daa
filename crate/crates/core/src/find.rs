//! Exhaustive search for a depth-`d` decision tree of minimum empirical
//! error.
//!
//! Rows are first aggregated into distinct inputs with per-label counts;
//! sub-datasets are index lists into that table. Each subproblem depends
//! only on the set of variables fixed on its path and their values, so
//! results are memoized on that restriction together with the remaining
//! depth.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use dashmap::DashMap;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::input::{mask, Input};
use crate::trees::{Node, StochasticTree};

/// Variables fixed on a root-to-node path: bit `i` of `fixed` says `x_i` is
/// set, and then bit `i` of `values` is its value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Restriction {
    pub fixed: u64,
    pub values: u64,
}

impl Restriction {
    pub fn with(self, var: usize, value: bool) -> Restriction {
        let bit = 1u64 << var;
        Restriction {
            fixed: self.fixed | bit,
            values: if value { self.values | bit } else { self.values & !bit },
        }
    }

    pub fn get(self, var: usize) -> Option<bool> {
        (self.fixed >> var & 1 == 1).then_some(self.values >> var & 1 == 1)
    }

    pub fn admits(self, x: Input) -> bool {
        x.0 & self.fixed == self.values
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FindOptions {
    pub memoize: bool,
    /// Worker threads; 0 uses the ambient rayon pool.
    pub threads: usize,
}

impl Default for FindOptions {
    fn default() -> Self {
        FindOptions {
            memoize: true,
            threads: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    /// Subproblems solved, counting the constant-leaf subproblems below
    /// depth-1 nodes.
    pub nodes_expanded: u64,
    pub cache_hits: u64,
    #[serde(serialize_with = "seconds")]
    pub wall_time: Duration,
}

fn seconds<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl SearchStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }
}

#[derive(Clone, Debug)]
pub struct FindOutput {
    pub tree: StochasticTree,
    /// Misclassified rows.
    pub mistakes: u64,
    /// `mistakes / m`, or 0 on empty data.
    pub error: f64,
    pub stats: SearchStats,
}

enum Sub {
    Leaf(bool),
    Query(u32, Arc<Sub>, Arc<Sub>),
}

impl Sub {
    fn to_node(&self) -> Node {
        match self {
            Sub::Leaf(b) => Node::Leaf(*b),
            Sub::Query(v, z, o) => Node::query(*v as usize, z.to_node(), o.to_node()),
        }
    }
}

const PARALLEL_MIN_ROWS: usize = 1024;

struct Search {
    n: usize,
    inputs: Vec<u64>,
    zeros: Vec<u64>,
    ones: Vec<u64>,
    memoize: bool,
    parallel: bool,
    cache: DashMap<(Restriction, u32), (u64, Arc<Sub>)>,
    expanded: AtomicU64,
    hits: AtomicU64,
}

#[inline]
fn majority(zeros: u64, ones: u64) -> (u64, bool) {
    if ones > zeros {
        (zeros, true)
    } else {
        (ones, false)
    }
}

impl Search {
    fn totals(&self, idx: &[u32]) -> (u64, u64) {
        idx.iter().fold((0, 0), |(z, o), &i| {
            (z + self.zeros[i as usize], o + self.ones[i as usize])
        })
    }

    fn solve(&self, idx: &[u32], r: Restriction, depth: u32) -> (u64, Arc<Sub>) {
        if idx.is_empty() {
            self.expanded.fetch_add(1, Ordering::Relaxed);
            return (0, Arc::new(Sub::Leaf(false)));
        }
        let free = mask(self.n) & !r.fixed;
        if depth == 0 || free == 0 {
            self.expanded.fetch_add(1, Ordering::Relaxed);
            let (z, o) = self.totals(idx);
            let (err, label) = majority(z, o);
            return (err, Arc::new(Sub::Leaf(label)));
        }
        let key = (r, depth);
        if self.memoize {
            if let Some(hit) = self.cache.get(&key) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                let (e, t) = &*hit;
                return (*e, Arc::clone(t));
            }
        }
        let result = if depth == 1 {
            self.solve_stump(idx, free)
        } else {
            self.expanded.fetch_add(1, Ordering::Relaxed);
            let vars: Vec<u32> = (0..self.n as u32).filter(|&v| free >> v & 1 == 1).collect();
            let split = |&v: &u32| {
                let (mut lo, mut hi) = (Vec::new(), Vec::new());
                for &i in idx {
                    if self.inputs[i as usize] >> v & 1 == 1 {
                        hi.push(i);
                    } else {
                        lo.push(i);
                    }
                }
                let (e0, t0) = self.solve(&lo, r.with(v as usize, false), depth - 1);
                let (e1, t1) = self.solve(&hi, r.with(v as usize, true), depth - 1);
                (e0 + e1, v, t0, t1)
            };
            let children: Vec<_> = if self.parallel && idx.len() >= PARALLEL_MIN_ROWS {
                vars.par_iter().map(split).collect()
            } else {
                vars.iter().map(split).collect()
            };
            // first strict minimum in variable order
            let mut best = None::<(u64, u32, Arc<Sub>, Arc<Sub>)>;
            for c in children {
                if best.as_ref().is_none_or(|b| c.0 < b.0) {
                    best = Some(c);
                }
            }
            let (e, v, t0, t1) = best.expect("at least one free variable");
            (e, Arc::new(Sub::Query(v, t0, t1)))
        };
        if self.memoize {
            self.cache.insert(key, (result.0, Arc::clone(&result.1)));
        }
        result
    }

    /// Depth 1 from counts: one pass over the rows per subproblem.
    fn solve_stump(&self, idx: &[u32], free: u64) -> (u64, Arc<Sub>) {
        let free_count = free.count_ones() as u64;
        self.expanded.fetch_add(1 + 2 * free_count, Ordering::Relaxed);
        let mut z1 = vec![0u64; self.n];
        let mut o1 = vec![0u64; self.n];
        let (mut z, mut o) = (0, 0);
        for &i in idx {
            let (zi, oi) = (self.zeros[i as usize], self.ones[i as usize]);
            z += zi;
            o += oi;
            let mut bits = self.inputs[i as usize] & free;
            while bits != 0 {
                let v = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                z1[v] += zi;
                o1[v] += oi;
            }
        }
        let mut best: Option<(u64, u32, bool, bool)> = None;
        for v in 0..self.n {
            if free >> v & 1 == 0 {
                continue;
            }
            let (e0, l0) = majority(z - z1[v], o - o1[v]);
            let (e1, l1) = majority(z1[v], o1[v]);
            if best.is_none_or(|b| e0 + e1 < b.0) {
                best = Some((e0 + e1, v as u32, l0, l1));
            }
        }
        let (e, v, l0, l1) = best.expect("at least one free variable");
        (
            e,
            Arc::new(Sub::Query(v, Arc::new(Sub::Leaf(l0)), Arc::new(Sub::Leaf(l1)))),
        )
    }
}

/// Minimum-error tree of depth at most `d`, with default options.
pub fn find(samples: &Samples, d: usize) -> FindOutput {
    find_with(samples, d, &FindOptions::default()).expect("default options build no thread pool")
}

/// Among minimum-error trees, the one returned splits on the smallest
/// variable index at every node where several variables tie; constant
/// leaves break ties toward 0, and empty sub-datasets get `Leaf(0)`.
/// Variables already fixed on the path are not queried again, and a node
/// whose variables are all fixed becomes a majority leaf.
pub fn find_with(samples: &Samples, d: usize, opts: &FindOptions) -> Result<FindOutput> {
    let start = Instant::now();
    let counts = samples.label_counts();
    let search = Search {
        n: samples.n(),
        inputs: counts.iter().map(|c| c.0 .0).collect(),
        zeros: counts.iter().map(|c| c.1).collect(),
        ones: counts.iter().map(|c| c.2).collect(),
        memoize: opts.memoize,
        parallel: opts.threads != 1,
        cache: DashMap::new(),
        expanded: AtomicU64::new(0),
        hits: AtomicU64::new(0),
    };
    let all: Vec<u32> = (0..counts.len() as u32).collect();
    let depth = d.min(u32::MAX as usize) as u32;
    let (mistakes, sub) = if opts.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| search.solve(&all, Restriction::default(), depth))
    } else {
        search.solve(&all, Restriction::default(), depth)
    };
    let tree = StochasticTree::new(samples.n(), sub.to_node())?;
    let m = samples.len();
    Ok(FindOutput {
        tree,
        mistakes,
        error: if m == 0 { 0.0 } else { mistakes as f64 / m as f64 },
        stats: SearchStats {
            nodes_expanded: search.expanded.load(Ordering::Relaxed),
            cache_hits: search.hits.load(Ordering::Relaxed),
            wall_time: start.elapsed(),
        },
    })
}

/// `Pr_{(x,y) in S}[T(x) != y]`, averaged over the tree's internal
/// randomness when it has any.
pub fn empirical_error(tree: &StochasticTree, samples: &Samples) -> f64 {
    samples.average(|x, y| {
        let mu = tree.mean(x);
        if y {
            1.0 - mu
        } else {
            mu
        }
    })
}

fn eval_node(node: &Node, x: u64) -> bool {
    match node {
        Node::Leaf(b) => *b,
        Node::Query { var, zero, one } => {
            if x >> var & 1 == 1 {
                eval_node(one, x)
            } else {
                eval_node(zero, x)
            }
        }
        Node::Stoch { .. } => unreachable!("enumerated trees are deterministic"),
    }
}

/// Every deterministic tree of depth at most `d` over `n` variables,
/// including ones that re-query a variable on the same path.
pub fn all_trees(n: usize, d: usize) -> Vec<Node> {
    let mut level = vec![Node::Leaf(false), Node::Leaf(true)];
    for _ in 0..d {
        let mut next = vec![Node::Leaf(false), Node::Leaf(true)];
        for v in 0..n {
            for a in &level {
                for b in &level {
                    next.push(Node::query(v, a.clone(), b.clone()));
                }
            }
        }
        level = next;
    }
    level
}

/// Minimum empirical error over [`all_trees`]; only feasible for tiny
/// `n` and `d` (1298 trees for `n = 4, d = 2`).
pub fn find_brute_oracle(samples: &Samples, d: usize) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let counts = samples.label_counts();
    let best = all_trees(samples.n(), d)
        .iter()
        .map(|t| {
            counts
                .iter()
                .map(|&(x, z, o)| if eval_node(t, x.0) { z } else { o })
                .sum::<u64>()
        })
        .min()
        .expect("at least the constant trees");
    best as f64 / samples.len() as f64
}
