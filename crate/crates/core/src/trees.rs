//! Stochastic decision trees over `{0,1}^n`.
//!
//! A tree is built from [`Node`] values and stored as a flat preorder arena,
//! which is also the order of the text format and the canonical order of
//! stochastic nodes used by [`RandomnessString`].

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::evaluation::cube_average;
use crate::input::{check_dimension, Input};
use crate::poly::{Monomial, MultilinearPolynomial};

/// `round(t) = 1[t >= 1/2]`.
#[inline]
pub fn round(t: f64) -> bool {
    t >= 0.5
}

/// Owned recursive form of a tree node, used to build and rewrite trees.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// Branch on `x_var`: `zero` when the bit is 0, `one` otherwise.
    Query {
        var: usize,
        zero: Box<Node>,
        one: Box<Node>,
    },
    /// Go to `heads` with probability `p`, `tails` otherwise.
    Stoch {
        p: f64,
        heads: Box<Node>,
        tails: Box<Node>,
    },
    Leaf(bool),
}

impl Node {
    pub fn query(var: usize, zero: Node, one: Node) -> Node {
        Node::Query {
            var,
            zero: Box::new(zero),
            one: Box::new(one),
        }
    }

    pub fn stoch(p: f64, heads: Node, tails: Node) -> Node {
        Node::Stoch {
            p,
            heads: Box::new(heads),
            tails: Box::new(tails),
        }
    }

    pub fn leaf(label: bool) -> Node {
        Node::Leaf(label)
    }
}

// The first child (zero / heads) of slot `i` is always slot `i + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Query { var: u32, one: u32 },
    Stoch { p: f64, tails: u32, index: u32 },
    Leaf(bool),
}

/// An immutable stochastic decision tree over `n` Boolean variables.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticTree {
    n: usize,
    slots: Vec<Slot>,
    stoch_probs: Vec<f64>,
    leaves: usize,
}

/// One bit per stochastic node, in preorder; bit `j` set means node `j`
/// takes its heads branch.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RandomnessString {
    pub bits: Vec<bool>,
}

impl RandomnessString {
    pub fn new(bits: Vec<bool>) -> Self {
        RandomnessString { bits }
    }

    /// The string whose bits are the low `m` bits of `code`.
    pub fn from_code(code: u64, m: usize) -> Self {
        RandomnessString {
            bits: (0..m).map(|j| (code >> j) & 1 == 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl StochasticTree {
    pub fn new(n: usize, root: Node) -> Result<Self> {
        check_dimension(n)?;
        let mut tree = StochasticTree {
            n,
            slots: Vec::new(),
            stoch_probs: Vec::new(),
            leaves: 0,
        };
        tree.push(&root)?;
        Ok(tree)
    }

    pub fn leaf(n: usize, label: bool) -> Self {
        StochasticTree {
            n,
            slots: vec![Slot::Leaf(label)],
            stoch_probs: Vec::new(),
            leaves: 1,
        }
    }

    fn push(&mut self, node: &Node) -> Result<()> {
        match node {
            Node::Query { var, zero, one } => {
                if *var >= self.n {
                    return Err(Error::InvalidTree(format!(
                        "query on x_{var} but n = {}",
                        self.n
                    )));
                }
                let at = self.slots.len();
                self.slots.push(Slot::Query {
                    var: *var as u32,
                    one: 0,
                });
                self.push(zero)?;
                let one_at = self.slots.len() as u32;
                self.slots[at] = Slot::Query {
                    var: *var as u32,
                    one: one_at,
                };
                self.push(one)
            }
            Node::Stoch { p, heads, tails } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidTree(format!(
                        "stochastic node probability {p} outside [0, 1]"
                    )));
                }
                let at = self.slots.len();
                let index = self.stoch_probs.len() as u32;
                self.stoch_probs.push(*p);
                self.slots.push(Slot::Stoch {
                    p: *p,
                    tails: 0,
                    index,
                });
                self.push(heads)?;
                let tails_at = self.slots.len() as u32;
                self.slots[at] = Slot::Stoch {
                    p: *p,
                    tails: tails_at,
                    index,
                };
                self.push(tails)
            }
            Node::Leaf(b) => {
                self.slots.push(Slot::Leaf(*b));
                self.leaves += 1;
                Ok(())
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of leaves.
    pub fn size(&self) -> usize {
        self.leaves
    }

    /// Total number of nodes.
    pub fn node_count(&self) -> usize {
        self.slots.len()
    }

    /// Number of stochastic nodes, `m`.
    pub fn stochastic_count(&self) -> usize {
        self.stoch_probs.len()
    }

    /// Heads probabilities of the stochastic nodes in preorder.
    pub fn stochastic_probabilities(&self) -> &[f64] {
        &self.stoch_probs
    }

    pub fn is_deterministic(&self) -> bool {
        self.stoch_probs.is_empty()
    }

    /// True when every stochastic node has two leaf children.
    pub fn is_stochastic_leaf(&self) -> bool {
        self.slots.iter().enumerate().all(|(i, s)| match *s {
            Slot::Stoch { tails, .. } => {
                matches!(self.slots[i + 1], Slot::Leaf(_))
                    && matches!(self.slots[tails as usize], Slot::Leaf(_))
            }
            _ => true,
        })
    }

    /// Maximum number of query nodes on a root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.leaf_depths().into_iter().max().unwrap_or(0)
    }

    /// Deterministic depth of every leaf, in preorder.
    pub fn leaf_depths(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.leaves);
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            match self.slots[i] {
                Slot::Query { one, .. } => {
                    stack.push((one as usize, depth + 1));
                    stack.push((i + 1, depth + 1));
                }
                Slot::Stoch { tails, .. } => {
                    stack.push((tails as usize, depth));
                    stack.push((i + 1, depth));
                }
                Slot::Leaf(_) => out.push(depth),
            }
        }
        out
    }

    /// `mu_T(x)`: the probability that the tree outputs 1 on `x`.
    pub fn mean(&self, x: Input) -> f64 {
        self.mean_from(0, x)
    }

    fn mean_from(&self, mut i: usize, x: Input) -> f64 {
        loop {
            match self.slots[i] {
                Slot::Query { var, one } => {
                    i = if x.bit(var as usize) { one as usize } else { i + 1 };
                }
                Slot::Stoch { p, tails, .. } => {
                    let heads = if p > 0.0 { p * self.mean_from(i + 1, x) } else { 0.0 };
                    let tails = if p < 1.0 {
                        (1.0 - p) * self.mean_from(tails as usize, x)
                    } else {
                        0.0
                    };
                    return heads + tails;
                }
                Slot::Leaf(b) => return if b { 1.0 } else { 0.0 },
            }
        }
    }

    /// Draws one output of the stochastic function at `x`.
    pub fn sample<R: Rng + ?Sized>(&self, x: Input, rng: &mut R) -> bool {
        let mut i = 0;
        loop {
            match self.slots[i] {
                Slot::Query { var, one } => {
                    i = if x.bit(var as usize) { one as usize } else { i + 1 };
                }
                Slot::Stoch { p, tails, .. } => {
                    i = if rng.random::<f64>() < p { i + 1 } else { tails as usize };
                }
                Slot::Leaf(b) => return b,
            }
        }
    }

    /// Evaluates with every stochastic transition fixed by `r`.
    pub fn evaluate_fixed(&self, x: Input, r: &RandomnessString) -> Result<bool> {
        self.check_randomness(r)?;
        let mut i = 0;
        loop {
            match self.slots[i] {
                Slot::Query { var, one } => {
                    i = if x.bit(var as usize) { one as usize } else { i + 1 };
                }
                Slot::Stoch { tails, index, .. } => {
                    i = if r.bits[index as usize] { i + 1 } else { tails as usize };
                }
                Slot::Leaf(b) => return Ok(b),
            }
        }
    }

    fn check_randomness(&self, r: &RandomnessString) -> Result<()> {
        if r.len() != self.stochastic_count() {
            return Err(Error::RandomnessLength {
                expected: self.stochastic_count(),
                got: r.len(),
            });
        }
        Ok(())
    }

    /// Samples a randomness string, bit `j` set with the heads probability
    /// of stochastic node `j`.
    pub fn sample_randomness<R: Rng + ?Sized>(&self, rng: &mut R) -> RandomnessString {
        RandomnessString {
            bits: self
                .stoch_probs
                .iter()
                .map(|&p| rng.random::<f64>() < p)
                .collect(),
        }
    }

    /// Probability of drawing `r` under [`sample_randomness`](Self::sample_randomness).
    pub fn randomness_probability(&self, r: &RandomnessString) -> Result<f64> {
        self.check_randomness(r)?;
        Ok(self
            .stoch_probs
            .iter()
            .zip(&r.bits)
            .map(|(&p, &b)| if b { p } else { 1.0 - p })
            .product())
    }

    /// The deterministic tree `x -> evaluate_fixed(x, r)`.
    pub fn fix_randomness(&self, r: &RandomnessString) -> Result<StochasticTree> {
        self.check_randomness(r)?;
        let root = self.rebuild(0, &mut |tree, i| match tree.slots[i] {
            Slot::Stoch { tails, index, .. } => Some(Rewrite::Follow(if r.bits[index as usize] {
                i + 1
            } else {
                tails as usize
            })),
            _ => None,
        });
        StochasticTree::new(self.n, root)
    }

    /// Recursive form of the tree.
    pub fn to_node(&self) -> Node {
        self.rebuild(0, &mut |_, _| None)
    }

    fn rebuild(&self, i: usize, rewrite: &mut dyn FnMut(&Self, usize) -> Option<Rewrite>) -> Node {
        match rewrite(self, i) {
            Some(Rewrite::Follow(j)) => return self.rebuild(j, rewrite),
            Some(Rewrite::Replace(node)) => return node,
            None => {}
        }
        match self.slots[i] {
            Slot::Query { var, one } => Node::query(
                var as usize,
                self.rebuild(i + 1, rewrite),
                self.rebuild(one as usize, rewrite),
            ),
            Slot::Stoch { p, tails, .. } => Node::stoch(
                p,
                self.rebuild(i + 1, rewrite),
                self.rebuild(tails as usize, rewrite),
            ),
            Slot::Leaf(b) => Node::Leaf(b),
        }
    }

    /// Bayes optimal label `round(mu_T(x))`.
    pub fn bayes_label(&self, x: Input) -> bool {
        round(self.mean(x))
    }

    /// The Bayes optimal classifier as a closure.
    pub fn bayes_classifier(&self) -> impl Fn(Input) -> bool + '_ {
        move |x| self.bayes_label(x)
    }

    /// Replaces each stochastic node (whose children must be leaves) by the
    /// leaf `round(Pr[1-leaf])`.
    pub fn stochastic_leaf_to_deterministic(&self) -> Result<StochasticTree> {
        if !self.is_stochastic_leaf() {
            return Err(Error::NotStochasticLeaf);
        }
        let root = self.rebuild(0, &mut |tree, i| match tree.slots[i] {
            Slot::Stoch { .. } => Some(Rewrite::Replace(Node::Leaf(round(tree.mean_from(i, Input::ZERO))))),
            _ => None,
        });
        StochasticTree::new(self.n, root)
    }

    /// Cuts every path after `depth` query nodes; a query that would exceed
    /// the budget becomes a 1-leaf. Stochastic nodes are kept.
    pub fn truncate(&self, depth: usize) -> StochasticTree {
        let root = self.truncate_from(0, depth);
        StochasticTree::new(self.n, root).expect("truncation preserves validity")
    }

    fn truncate_from(&self, i: usize, budget: usize) -> Node {
        match self.slots[i] {
            Slot::Query { var, one } => {
                if budget == 0 {
                    Node::Leaf(true)
                } else {
                    Node::query(
                        var as usize,
                        self.truncate_from(i + 1, budget - 1),
                        self.truncate_from(one as usize, budget - 1),
                    )
                }
            }
            Slot::Stoch { p, tails, .. } => Node::stoch(
                p,
                self.truncate_from(i + 1, budget),
                self.truncate_from(tails as usize, budget),
            ),
            Slot::Leaf(b) => Node::Leaf(b),
        }
    }

    /// Exact multilinear expansion of `mu_T'`, where `T'` outputs 0 on every
    /// leaf of deterministic depth greater than `depth_cutoff`.
    pub fn mean_polynomial(&self, depth_cutoff: usize) -> MultilinearPolynomial {
        let cutoff = depth_cutoff.min(self.n);
        let mut poly = MultilinearPolynomial::zero(self.n, cutoff);
        self.expand(0, 0, 0, 0, 1.0, depth_cutoff, &mut poly);
        poly
    }

    #[allow(clippy::too_many_arguments)]
    fn expand(
        &self,
        i: usize,
        fixed: u64,
        values: u64,
        depth: usize,
        prob: f64,
        cutoff: usize,
        poly: &mut MultilinearPolynomial,
    ) {
        if prob == 0.0 {
            return;
        }
        match self.slots[i] {
            Slot::Query { var, one } => {
                if depth >= cutoff {
                    // every leaf below is deeper than the cutoff
                    return;
                }
                let bit = 1u64 << var;
                for (value, child) in [(0u64, i + 1), (bit, one as usize)] {
                    if fixed & bit != 0 && values & bit != value {
                        continue;
                    }
                    self.expand(child, fixed | bit, values | value, depth + 1, prob, cutoff, poly);
                }
            }
            Slot::Stoch { p, tails, .. } => {
                self.expand(i + 1, fixed, values, depth, prob * p, cutoff, poly);
                self.expand(tails as usize, fixed, values, depth, prob * (1.0 - p), cutoff, poly);
            }
            Slot::Leaf(true) => {
                // prod_{i in A} x_i prod_{j in B} (1 - x_j)
                let ones = values;
                let zeros = fixed & !values;
                let mut sub = zeros;
                loop {
                    let sign = if sub.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                    poly.add_term(Monomial(ones | sub), sign * prob);
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & zeros;
                }
            }
            Slot::Leaf(false) => {}
        }
    }

    /// Approximates the tree by a stochastic-leaf tree: `c = ceil(1/eps^2)`
    /// deterministic trees are obtained by fixing sampled randomness
    /// strings, stacked on top of one another, and each leaf of the stack
    /// becomes a coin that outputs 1 with the fraction of copies that
    /// classified its region as 1.
    ///
    /// Queries on variables already fixed along the stacked path are
    /// resolved rather than repeated, so the result has at most
    /// `min(s^c, 2^n)` leaves. The L1 guarantee holds in expectation over
    /// `rng`; the achieved distance is reported when `n` is small enough
    /// to enumerate.
    pub fn stochastic_leaf_approx<R: Rng + ?Sized>(
        &self,
        eps: f64,
        rng: &mut R,
    ) -> Result<LeafApproximation> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::OutOfRange {
                name: "eps",
                value: eps,
                range: "(0, 1/2)",
            });
        }
        let copies = (1.0 / (eps * eps)).ceil() as usize;
        let fixed: Vec<StochasticTree> = (0..copies)
            .map(|_| {
                let r = self.sample_randomness(rng);
                self.fix_randomness(&r)
            })
            .collect::<Result<_>>()?;
        let mut builder = Stacker {
            trees: &fixed,
            nodes: 0,
        };
        let root = builder.build(0, 0, 0, 0)?;
        let tree = StochasticTree::new(self.n, root)?;
        let l1_distance = cube_average(self.n, |x| (self.mean(x) - tree.mean(x)).abs()).ok();
        Ok(LeafApproximation {
            tree,
            copies,
            l1_distance,
        })
    }

    /// Text form: `n=<n>` then one preorder node per line (`Q <var>`,
    /// `S <p>`, `L <0|1>`).
    pub fn to_text(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for slot in &self.slots {
            match *slot {
                Slot::Query { var, .. } => writeln!(out, "Q {var}"),
                Slot::Stoch { p, .. } => writeln!(out, "S {p:?}"),
                Slot::Leaf(b) => writeln!(out, "L {}", b as u8),
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn parse(text: &str) -> Result<StochasticTree> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty tree file"))?;
        let n: usize = header
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::parse(hline, "expected header `n=<n>`"))?;
        check_dimension(n)?;
        let mut iter = lines.peekable();
        let root = parse_node(&mut iter, hline)?;
        if let Some((line, _)) = iter.next() {
            return Err(Error::parse(line, "trailing nodes after a complete tree"));
        }
        StochasticTree::new(n, root).map_err(|e| Error::parse(hline, e.to_string()))
    }
}

enum Rewrite {
    Follow(usize),
    Replace(Node),
}

fn parse_node<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    last: usize,
) -> Result<Node> {
    let (line, text) = lines
        .next()
        .ok_or_else(|| Error::parse(last + 1, "unexpected end of tree"))?;
    let (kind, arg) = text
        .split_once(char::is_whitespace)
        .ok_or_else(|| Error::parse(line, format!("malformed node `{text}`")))?;
    let arg = arg.trim();
    match kind {
        "Q" => {
            let var = arg
                .parse()
                .map_err(|_| Error::parse(line, format!("bad variable `{arg}`")))?;
            let zero = parse_node(lines, line)?;
            let one = parse_node(lines, line)?;
            Ok(Node::query(var, zero, one))
        }
        "S" => {
            let p: f64 = arg
                .parse()
                .map_err(|_| Error::parse(line, format!("bad probability `{arg}`")))?;
            let heads = parse_node(lines, line)?;
            let tails = parse_node(lines, line)?;
            Ok(Node::stoch(p, heads, tails))
        }
        "L" => match arg {
            "0" => Ok(Node::Leaf(false)),
            "1" => Ok(Node::Leaf(true)),
            _ => Err(Error::parse(line, format!("bad leaf label `{arg}`"))),
        },
        _ => Err(Error::parse(line, format!("unknown node kind `{kind}`"))),
    }
}

/// Result of [`StochasticTree::stochastic_leaf_approx`].
#[derive(Clone, Debug)]
pub struct LeafApproximation {
    pub tree: StochasticTree,
    /// Number of stacked copies, `c`.
    pub copies: usize,
    /// Exact `E_x |mu_T(x) - mu_approx(x)|`, when `n` is enumerable.
    pub l1_distance: Option<f64>,
}

const STACK_NODE_LIMIT: usize = 20_000_000;

struct Stacker<'a> {
    trees: &'a [StochasticTree],
    nodes: usize,
}

impl Stacker<'_> {
    fn build(&mut self, copy: usize, slot: usize, fixed: u64, values: u64) -> Result<Node> {
        self.build_counting(copy, slot, fixed, values, 0)
    }

    fn created(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > STACK_NODE_LIMIT {
            return Err(Error::Budget(format!(
                "stacked tree exceeds {STACK_NODE_LIMIT} nodes"
            )));
        }
        Ok(())
    }

    fn build_counting(
        &mut self,
        copy: usize,
        slot: usize,
        fixed: u64,
        values: u64,
        ones: usize,
    ) -> Result<Node> {
        if copy == self.trees.len() {
            self.created()?;
            let p = ones as f64 / self.trees.len() as f64;
            return Ok(Node::stoch(p, Node::Leaf(true), Node::Leaf(false)));
        }
        match self.trees[copy].slots[slot] {
            Slot::Query { var, one } => {
                let bit = 1u64 << var;
                if fixed & bit != 0 {
                    let next = if values & bit != 0 { one as usize } else { slot + 1 };
                    return self.build_counting(copy, next, fixed, values, ones);
                }
                self.created()?;
                let zero = self.build_counting(copy, slot + 1, fixed | bit, values, ones)?;
                let one = self.build_counting(copy, one as usize, fixed | bit, values | bit, ones)?;
                Ok(Node::query(var as usize, zero, one))
            }
            Slot::Leaf(b) => self.build_counting(copy + 1, 0, fixed, values, ones + b as usize),
            Slot::Stoch { .. } => unreachable!("stacked copies are deterministic"),
        }
    }
}

/// Random tree with exactly `s` leaves: each internal node is stochastic
/// with probability `stoch_fraction` (heads probability uniform in [0,1)),
/// otherwise a query on a variable not yet queried on its path. Leaf
/// counts are split uniformly between the two subtrees.
pub fn random_tree<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    stoch_fraction: f64,
    rng: &mut R,
) -> Result<StochasticTree> {
    check_dimension(n)?;
    if s < 1 {
        return Err(Error::Config("tree size must be at least 1".into()));
    }
    if n == 0 && s > 1 {
        return Err(Error::Config("a tree over 0 variables has a single leaf".into()));
    }
    if !(0.0..=1.0).contains(&stoch_fraction) {
        return Err(Error::OutOfRange {
            name: "stoch_fraction",
            value: stoch_fraction,
            range: "[0, 1]",
        });
    }
    let deterministic = stoch_fraction == 0.0;
    if deterministic && n < 64 && (s as u128) > (1u128 << n) {
        return Err(Error::Config(format!(
            "a deterministic tree over {n} variables has at most 2^{n} leaves"
        )));
    }
    let mut free: Vec<usize> = (0..n).collect();
    let root = grow(s, &mut free, stoch_fraction, deterministic, rng);
    StochasticTree::new(n, root)
}

fn grow<R: Rng + ?Sized>(
    leaves: usize,
    free: &mut Vec<usize>,
    stoch_fraction: f64,
    deterministic: bool,
    rng: &mut R,
) -> Node {
    if leaves == 1 {
        return Node::Leaf(rng.random());
    }
    let stochastic = free.is_empty() || rng.random::<f64>() < stoch_fraction;
    if stochastic {
        let p: f64 = rng.random();
        let left = rng.random_range(1..leaves);
        let heads = grow(left, free, stoch_fraction, deterministic, rng);
        let tails = grow(leaves - left, free, stoch_fraction, deterministic, rng);
        return Node::stoch(p, heads, tails);
    }
    let pick = rng.random_range(0..free.len());
    let var = free.swap_remove(pick);
    // a deterministic subtree over r free variables holds at most 2^r leaves
    let cap = if deterministic && free.len() < 63 {
        1usize << free.len()
    } else {
        usize::MAX
    };
    let lo = leaves.saturating_sub(cap).max(1);
    let hi = (leaves - 1).min(cap);
    let left = rng.random_range(lo..=hi);
    let zero = grow(left, free, stoch_fraction, deterministic, rng);
    let one = grow(leaves - left, free, stoch_fraction, deterministic, rng);
    free.push(var);
    let last = free.len() - 1;
    free.swap(pick, last);
    Node::query(var, zero, one)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coin(p: f64) -> StochasticTree {
        StochasticTree::new(1, Node::stoch(p, Node::Leaf(true), Node::Leaf(false))).unwrap()
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(StochasticTree::new(2, Node::query(2, Node::Leaf(false), Node::Leaf(true))).is_err());
        assert!(StochasticTree::new(2, Node::stoch(1.5, Node::Leaf(false), Node::Leaf(true))).is_err());
    }

    #[test]
    fn round_is_inclusive_at_half() {
        assert!(round(0.5));
        assert!(!round(0.499));
    }

    #[test]
    fn degenerate_coins_are_deterministic_when_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| coin(1.0).sample(Input::ZERO, &mut rng)));
        assert!((0..100).all(|_| !coin(0.0).sample(Input::ZERO, &mut rng)));
        assert!(!StochasticTree::leaf(3, false).sample(Input(5), &mut rng));
    }

    #[test]
    fn randomness_length_is_checked() {
        let t = coin(0.5);
        assert!(matches!(
            t.evaluate_fixed(Input::ZERO, &RandomnessString::default()),
            Err(Error::RandomnessLength { expected: 1, got: 0 })
        ));
        assert!(t.fix_randomness(&RandomnessString::new(vec![true, false])).is_err());
    }

    #[test]
    fn stochastic_leaf_to_deterministic_rounds_coins() {
        let half = coin(0.5).stochastic_leaf_to_deterministic().unwrap();
        assert_eq!(half.to_node(), Node::Leaf(true));
        let below = coin(0.49).stochastic_leaf_to_deterministic().unwrap();
        assert_eq!(below.to_node(), Node::Leaf(false));
        // tails-is-one orientation
        let flipped = StochasticTree::new(1, Node::stoch(0.3, Node::Leaf(false), Node::Leaf(true))).unwrap();
        assert_eq!(flipped.stochastic_leaf_to_deterministic().unwrap().to_node(), Node::Leaf(true));
    }

    #[test]
    fn non_stochastic_leaf_input_is_rejected() {
        let t = StochasticTree::new(
            1,
            Node::stoch(0.5, Node::query(0, Node::Leaf(false), Node::Leaf(true)), Node::Leaf(true)),
        )
        .unwrap();
        assert!(!t.is_stochastic_leaf());
        assert!(matches!(t.stochastic_leaf_to_deterministic(), Err(Error::NotStochasticLeaf)));
    }

    #[test]
    fn truncate_edges() {
        let t = StochasticTree::new(
            2,
            Node::query(0, Node::query(1, Node::Leaf(false), Node::Leaf(false)), Node::Leaf(false)),
        )
        .unwrap();
        assert_eq!(t.truncate(0).to_node(), Node::Leaf(true));
        assert_eq!(t.truncate(2), t);
        assert_eq!(t.truncate(7), t);
        assert_eq!(t.truncate(1).depth(), 1);
    }

    #[test]
    fn mean_polynomial_edges() {
        let one = StochasticTree::leaf(3, true);
        let p = one.mean_polynomial(4);
        assert_eq!(p.len(), 1);
        assert_eq!(p.coefficient(Monomial::CONSTANT), 1.0);
        let q = StochasticTree::new(2, Node::query(0, Node::Leaf(true), Node::Leaf(true))).unwrap();
        assert!(q.mean_polynomial(0).is_empty());
    }

    #[test]
    fn mean_polynomial_handles_repeated_queries() {
        // x0 queried twice on the same path; the inconsistent branch is unreachable
        let t = StochasticTree::new(
            2,
            Node::query(
                0,
                Node::Leaf(false),
                Node::query(0, Node::Leaf(true), Node::query(1, Node::Leaf(false), Node::Leaf(true))),
            ),
        )
        .unwrap();
        let p = t.mean_polynomial(3);
        for x in Input::all(2) {
            assert!((p.eval(x) - t.mean(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_tree_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tree(4, 1, 0.5, &mut rng).unwrap();
        assert!(matches!(t.to_node(), Node::Leaf(_)));
        assert!(random_tree(4, 0, 0.5, &mut rng).is_err());
        assert!(random_tree(0, 2, 0.5, &mut rng).is_err());
        assert!(random_tree(2, 5, 0.0, &mut rng).is_err());
        let full = random_tree(2, 4, 0.0, &mut rng).unwrap();
        assert!(full.is_deterministic());
        assert_eq!(full.size(), 4);
    }

    #[test]
    fn text_format_layout() {
        let t = StochasticTree::new(
            2,
            Node::query(1, Node::stoch(0.25, Node::Leaf(true), Node::Leaf(false)), Node::Leaf(true)),
        )
        .unwrap();
        assert_eq!(t.to_text(), "n=2\nQ 1\nS 0.25\nL 1\nL 0\nL 1\n");
        assert_eq!(StochasticTree::parse(&t.to_text()).unwrap(), t);
        assert!(StochasticTree::parse("n=2\nQ 1\nL 0\n").is_err());
        assert!(StochasticTree::parse("n=2\nL 0\nL 1\n").is_err());
        assert!(StochasticTree::parse("Q 0\nL 0\nL 1\n").is_err());
    }

    #[test]
    fn leaf_approx_rejects_bad_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for eps in [0.0, 0.5, -0.1, f64::NAN] {
            assert!(coin(0.5).stochastic_leaf_approx(eps, &mut rng).is_err());
        }
    }
}
