//! Oracles shared by the integration tests. Nothing here calls into the
//! library's own evaluation code: means, errors and optimal trees are
//! recomputed from the recursive node form.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochtree::{Input, Node, Samples, StochasticTree};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The running example: x1 = 0 -> x2 (0 -> 1; 1 -> S(0.2: 1, 0));
/// x1 = 1 -> S(0.7: x3 (0 -> 0, 1 -> 1); 1). Variables x1..x3 are indices
/// 0..2 of a 3-variable input.
pub fn worked_example() -> StochasticTree {
    let left = Node::query(
        1,
        Node::Leaf(true),
        Node::stoch(0.2, Node::Leaf(true), Node::Leaf(false)),
    );
    let right = Node::stoch(
        0.7,
        Node::query(2, Node::Leaf(false), Node::Leaf(true)),
        Node::Leaf(true),
    );
    StochasticTree::new(3, Node::query(0, left, right)).unwrap()
}

/// `Pr[T(x) = 1]` by recursion on the node form.
pub fn node_mean(node: &Node, x: u64) -> f64 {
    match node {
        Node::Leaf(b) => *b as u8 as f64,
        Node::Query { var, zero, one } => {
            if x >> var & 1 == 1 {
                node_mean(one, x)
            } else {
                node_mean(zero, x)
            }
        }
        Node::Stoch { p, heads, tails } => p * node_mean(heads, x) + (1.0 - p) * node_mean(tails, x),
    }
}

/// Output under a fixed assignment of the coins, indexed in preorder.
pub fn node_eval_fixed(node: &Node, x: u64, coins: &[bool]) -> bool {
    fn count(node: &Node) -> usize {
        match node {
            Node::Leaf(_) => 0,
            Node::Query { zero, one, .. } => count(zero) + count(one),
            Node::Stoch { heads, tails, .. } => 1 + count(heads) + count(tails),
        }
    }
    let (mut node, mut next) = (node, 0);
    loop {
        match node {
            Node::Leaf(b) => return *b,
            Node::Query { var, zero, one } => {
                if x >> var & 1 == 1 {
                    next += count(zero);
                    node = one;
                } else {
                    node = zero;
                }
            }
            Node::Stoch { heads, tails, .. } => {
                let c = coins[next];
                next += 1;
                if c {
                    node = heads;
                } else {
                    next += count(heads);
                    node = tails;
                }
            }
        }
    }
}

pub fn stoch_probs(node: &Node, out: &mut Vec<f64>) {
    match node {
        Node::Leaf(_) => {}
        Node::Query { zero, one, .. } => {
            stoch_probs(zero, out);
            stoch_probs(one, out);
        }
        Node::Stoch { p, heads, tails } => {
            out.push(*p);
            stoch_probs(heads, out);
            stoch_probs(tails, out);
        }
    }
}

/// `mu(x)` as `sum_r Pr[r] T_r(x)` over all `2^m` coin assignments.
pub fn mean_by_coins(node: &Node, x: u64) -> f64 {
    let mut probs = Vec::new();
    stoch_probs(node, &mut probs);
    let m = probs.len();
    let mut total = 0.0;
    for code in 0..1u64 << m {
        let coins: Vec<bool> = (0..m).map(|j| code >> j & 1 == 1).collect();
        let pr: f64 = probs
            .iter()
            .zip(&coins)
            .map(|(&p, &c)| if c { p } else { 1.0 - p })
            .product();
        if node_eval_fixed(node, x, &coins) {
            total += pr;
        }
    }
    total
}

pub fn cube_mean(n: usize, mut f: impl FnMut(u64) -> f64) -> f64 {
    let mut s = 0.0;
    for x in 0..1u64 << n {
        s += f(x);
    }
    s / (1u64 << n) as f64
}

pub fn oracle_opt(t: &StochasticTree) -> f64 {
    let node = t.to_node();
    cube_mean(t.n(), |x| {
        let mu = node_mean(&node, x);
        mu.min(1.0 - mu)
    })
}

/// Error of a hypothesis that outputs 1 with probability `q(x)`.
pub fn oracle_error(t: &StochasticTree, q: impl Fn(u64) -> f64) -> f64 {
    let node = t.to_node();
    cube_mean(t.n(), |x| {
        let mu = node_mean(&node, x);
        let q = q(x);
        mu * (1.0 - q) + (1.0 - mu) * q
    })
}

fn node_label(node: &Node, x: u64) -> bool {
    node_mean(node, x) >= 0.5
}

/// Every depth-`<= d` deterministic tree over `n` variables as a truth
/// table on `{0,1}^n`, deduplicated.
pub fn all_tree_tables(n: usize, d: usize) -> Vec<Vec<bool>> {
    let size = 1usize << n;
    let mut level: Vec<Vec<bool>> = vec![vec![false; size], vec![true; size]];
    for _ in 0..d {
        let mut next = level.clone();
        for v in 0..n {
            for a in &level {
                for b in &level {
                    next.push((0..size).map(|x| if x >> v & 1 == 1 { b[x] } else { a[x] }).collect());
                }
            }
        }
        next.sort();
        next.dedup();
        level = next;
    }
    level
}

/// Minimum number of misclassified rows over all depth-`<= d` trees.
pub fn brute_min_mistakes(samples: &Samples, d: usize) -> u64 {
    all_tree_tables(samples.n(), d)
        .iter()
        .map(|table| {
            samples
                .rows()
                .iter()
                .filter(|r| table[r.x.0 as usize] != r.y)
                .count() as u64
        })
        .min()
        .unwrap()
}

pub fn tree_mistakes(t: &StochasticTree, samples: &Samples) -> u64 {
    let node = t.to_node();
    samples
        .rows()
        .iter()
        .filter(|r| node_label(&node, r.x.0) != r.y)
        .count() as u64
}

pub fn random_samples<R: Rng>(n: usize, m: usize, rng: &mut R) -> Samples {
    let rows = (0..m)
        .map(|_| stochtree::Sample {
            x: Input(rng.random::<u64>() & ((1u64 << n) - 1)),
            y: rng.random(),
        })
        .collect();
    Samples::new(n, rows).unwrap()
}

/// Random tree over `n` variables built directly from nodes; queries may
/// repeat variables, coins have random probabilities.
pub fn random_node<R: Rng>(n: usize, depth: usize, rng: &mut R) -> Node {
    if depth == 0 || rng.random::<f64>() < 0.2 {
        return Node::Leaf(rng.random());
    }
    if rng.random::<f64>() < 0.35 {
        let p = match rng.random_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            2 => 0.5,
            _ => rng.random(),
        };
        Node::stoch(p, random_node(n, depth - 1, rng), random_node(n, depth - 1, rng))
    } else {
        Node::query(
            rng.random_range(0..n),
            random_node(n, depth - 1, rng),
            random_node(n, depth - 1, rng),
        )
    }
}
