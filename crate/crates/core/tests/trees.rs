mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use stochtree::trees::random_tree;
use stochtree::{Error, Input, Node, RandomnessString, StochasticTree};

fn bits(x: &[u8]) -> Input {
    Input::from_bits(&x.iter().map(|&b| b == 1).collect::<Vec<_>>()).unwrap()
}

#[test]
fn worked_example_means() {
    let t = worked_example();
    assert_eq!(t.mean(bits(&[0, 0, 0])), 1.0);
    assert_eq!(t.mean(bits(&[0, 0, 1])), 1.0);
    assert!((t.mean(bits(&[1, 0, 0])) - 0.3).abs() < 1e-15);
    assert!((t.mean(bits(&[1, 1, 0])) - 0.3).abs() < 1e-15);
    assert_eq!(StochasticTree::leaf(4, true).mean(Input(9)), 1.0);
    assert!((oracle_opt(&t) - 0.125).abs() < 1e-15);
    assert_eq!(t.size(), 6);
    assert_eq!(t.stochastic_count(), 2);
    assert_eq!(t.depth(), 2);
}

#[test]
fn sampling_matches_mean() {
    let t = worked_example();
    let x = bits(&[1, 0, 0]);
    let mut r = rng(5);
    let draws = 1_000_000;
    let ones = (0..draws).filter(|_| t.sample(x, &mut r)).count();
    assert!((ones as f64 / draws as f64 - 0.3).abs() < 0.002);

    let zero = StochasticTree::leaf(2, false);
    assert!((0..100).all(|_| !zero.sample(Input(3), &mut r)));
    let sure = StochasticTree::new(2, Node::stoch(1.0, Node::Leaf(true), Node::Leaf(false))).unwrap();
    assert!((0..100).all(|_| sure.sample(Input(0), &mut r)));
}

#[test]
fn worked_example_polynomial() {
    let t = worked_example();
    let expected = |x: u64| {
        let v = |i: u64| (x >> i & 1) as f64;
        (1.0 - v(0)) * (1.0 - v(1)) + 0.2 * (1.0 - v(0)) * v(1) + 0.7 * v(0) * v(2) + 0.3 * v(0)
    };
    for cutoff in [2, 3, 7] {
        let p = t.mean_polynomial(cutoff);
        for x in 0..8 {
            assert!((p.eval(Input(x)) - expected(x)).abs() < 1e-12);
            assert!((p.eval(Input(x)) - t.mean(Input(x))).abs() < 1e-12);
        }
    }
    let p = StochasticTree::leaf(3, true).mean_polynomial(4);
    assert_eq!(p.len(), 1);
    assert_eq!(p.eval(Input(5)), 1.0);
    let p = t.mean_polynomial(0);
    assert!(p.is_empty());
}

#[test]
fn evaluate_fixed_rejects_wrong_length() {
    let t = worked_example();
    let r = RandomnessString::new(vec![true]);
    assert!(matches!(
        t.evaluate_fixed(Input(0), &r),
        Err(Error::RandomnessLength { expected: 2, got: 1 })
    ));
}

#[test]
fn invalid_trees_are_rejected() {
    assert!(StochasticTree::new(2, Node::query(2, Node::Leaf(true), Node::Leaf(false))).is_err());
    assert!(StochasticTree::new(2, Node::Stoch {
        p: 1.5,
        heads: Box::new(Node::Leaf(true)),
        tails: Box::new(Node::Leaf(false)),
    })
    .is_err());
    assert!(StochasticTree::parse("n=2\nQ 0\nL 1\n").is_err());
}

#[test]
fn generated_trees_satisfy_invariants() {
    fn check(node: &Node, n: usize, used: u64) -> usize {
        match node {
            Node::Leaf(_) => 1,
            Node::Query { var, zero, one } => {
                assert!(*var < n);
                assert_eq!(used >> var & 1, 0, "variable re-queried on a path");
                check(zero, n, used | 1 << var) + check(one, n, used | 1 << var)
            }
            Node::Stoch { p, heads, tails } => {
                assert!((0.0..=1.0).contains(p));
                check(heads, n, used) + check(tails, n, used)
            }
        }
    }
    for seed in 0..1000 {
        let mut r = rng(seed);
        let n = r.random_range(1..12);
        let frac = [0.0, 0.3, 1.0][seed as usize % 3];
        let max_s = if frac == 0.0 { 19.min(1 << n) } else { 19 };
        let s = r.random_range(1..=max_s);
        let t = random_tree(n, s, frac, &mut r).unwrap();
        assert_eq!(check(&t.to_node(), n, 0), s);
        assert_eq!(t.size(), s);
        if frac == 0.0 || s == 1 {
            assert!(t.is_deterministic());
        }
    }
    assert!(random_tree(3, 0, 0.5, &mut rng(0)).is_err());
    assert!(random_tree(0, 2, 0.5, &mut rng(0)).is_err());
    assert!(random_tree(0, 1, 0.5, &mut rng(0)).unwrap().size() == 1);
}

/// All `2^(2^n)` deterministic functions lose to the Bayes classifier.
#[test]
fn bayes_classifier_is_optimal_over_all_functions() {
    for seed in 0..6 {
        let n = 1 + seed as usize % 4;
        let mut r = rng(seed);
        let t = StochasticTree::new(n, random_node(n, 4, &mut r)).unwrap();
        let opt = oracle_opt(&t);
        let bayes = t.bayes_classifier();
        let bayes_err = oracle_error(&t, |x| bayes(Input(x)) as u8 as f64);
        assert!((bayes_err - opt).abs() < 1e-12);
        for table in 0..1u64 << (1 << n) {
            let err = oracle_error(&t, |x| (table >> x & 1) as f64);
            assert!(err >= opt - 1e-12);
        }
    }
}

/// `mu` of the tree cut after `budget` queries, cut paths valued `fill`.
fn mean_cut(node: &Node, x: u64, budget: usize, fill: f64) -> f64 {
    match node {
        Node::Leaf(b) => *b as u8 as f64,
        Node::Query { .. } if budget == 0 => fill,
        Node::Query { var, zero, one } => {
            let next = if x >> var & 1 == 1 { one } else { zero };
            mean_cut(next, x, budget - 1, fill)
        }
        Node::Stoch { p, heads, tails } => {
            p * mean_cut(heads, x, budget, fill) + (1.0 - p) * mean_cut(tails, x, budget, fill)
        }
    }
}

fn tree_strategy() -> impl Strategy<Value = (usize, Node)> {
    (1usize..7, any::<u64>()).prop_map(|(n, seed)| {
        let mut r = rng(seed);
        (n, random_node(n, 5, &mut r))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mean_matches_recursive_oracle((n, node) in tree_strategy()) {
        let t = StochasticTree::new(n, node.clone()).unwrap();
        prop_assert_eq!(t.to_node(), node.clone());
        for x in 0..1u64 << n {
            let mu = t.mean(Input(x));
            prop_assert!((0.0..=1.0).contains(&mu));
            prop_assert!((mu - node_mean(&node, x)).abs() < 1e-12);
            if t.is_deterministic() {
                prop_assert!(mu == 0.0 || mu == 1.0);
            }
        }
    }

    #[test]
    fn mean_is_expectation_over_randomness((n, node) in tree_strategy()) {
        let t = StochasticTree::new(n, node.clone()).unwrap();
        let m = t.stochastic_count();
        prop_assume!(m <= 10);
        for x in 0..1u64 << n {
            prop_assert!((t.mean(Input(x)) - mean_by_coins(&node, x)).abs() < 1e-12);
        }
        // the library's own enumeration must agree too
        for x in 0..1u64 << n {
            let mut total = 0.0;
            for code in 0..1u64 << m {
                let r = RandomnessString::from_code(code, m);
                let fixed = t.fix_randomness(&r).unwrap();
                prop_assert!(fixed.is_deterministic());
                let out = t.evaluate_fixed(Input(x), &r).unwrap();
                prop_assert_eq!(fixed.mean(Input(x)) == 1.0, out);
                let coins = r.bits.clone();
                prop_assert_eq!(node_eval_fixed(&node, x, &coins), out);
                if out {
                    total += t.randomness_probability(&r).unwrap();
                }
            }
            prop_assert!((total - t.mean(Input(x))).abs() < 1e-12);
        }
    }

    #[test]
    fn text_round_trip_is_exact((n, node) in tree_strategy()) {
        let t = StochasticTree::new(n, node).unwrap();
        let back = StochasticTree::parse(&t.to_text()).unwrap();
        prop_assert_eq!(back.to_node(), t.to_node());
        prop_assert_eq!(back.n(), n);
    }

    #[test]
    fn mean_polynomial_respects_cutoff((n, node) in tree_strategy(), cutoff in 0usize..6) {
        let t = StochasticTree::new(n, node).unwrap();
        let p = t.mean_polynomial(cutoff);
        prop_assert!(p.degree() <= cutoff);
        let truncated = t.truncate(cutoff);
        prop_assert!(truncated.depth() <= cutoff);
        let node = t.to_node();
        for x in 0..1u64 << n {
            let v = p.eval(Input(x));
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
            if cutoff >= t.depth() {
                prop_assert!((v - t.mean(Input(x))).abs() < 1e-12);
            }
            prop_assert!((v - mean_cut(&node, x, cutoff, 0.0)).abs() < 1e-12);
            prop_assert!((truncated.mean(Input(x)) - mean_cut(&node, x, cutoff, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn leaf_approximation_is_stochastic_leaf(seed in any::<u64>(), eps in 0.2f64..0.45) {
        let mut r = rng(seed);
        let t = random_tree(6, 6, 0.4, &mut r).unwrap();
        let approx = t.stochastic_leaf_approx(eps, &mut r).unwrap();
        prop_assert!(approx.tree.is_stochastic_leaf());
        prop_assert_eq!(approx.copies, (1.0 / (eps * eps)).ceil() as usize);
        let l1 = cube_mean(6, |x| (t.mean(Input(x)) - approx.tree.mean(Input(x))).abs());
        prop_assert!((approx.l1_distance.unwrap() - l1).abs() < 1e-12);
        let det = approx.tree.stochastic_leaf_to_deterministic().unwrap();
        prop_assert!(det.is_deterministic());
        for x in 0..64 {
            let mu = approx.tree.mean(Input(x));
            if (mu - 0.5).abs() > 1e-12 {
                prop_assert_eq!(det.mean(Input(x)) == 1.0, mu > 0.5);
            }
        }
    }

    /// `Pr[round(h) != T] <= opt + 2 E|mu - h|`.
    #[test]
    fn rounding_loses_at_most_twice_the_l1_distance((n, node) in tree_strategy(), seed in any::<u64>()) {
        let t = StochasticTree::new(n, node).unwrap();
        let mut r = rng(seed);
        let h: Vec<f64> = (0..1u64 << n).map(|_| r.random()).collect();
        let rounded = oracle_error(&t, |x| if h[x as usize] >= 0.5 { 1.0 } else { 0.0 });
        let l1 = cube_mean(n, |x| (node_mean(&t.to_node(), x) - h[x as usize]).abs());
        prop_assert!(rounded <= oracle_opt(&t) + 2.0 * l1 + 1e-12);
    }
}

#[test]
fn truncation_of_worked_example() {
    let t = worked_example();
    let p = t.mean_polynomial(1);
    // x1 = 0 needs two queries, so only x1 = 1 with the tails leaf survives
    for x in 0..8u64 {
        let expected = if x & 1 == 1 { 0.3 } else { 0.0 };
        assert!((p.eval(Input(x)) - expected).abs() < 1e-12);
    }
    let cut = t.truncate(1);
    assert_eq!(cut.depth(), 1);
    for x in 0..8u64 {
        assert_eq!(cut.mean(Input(x)), 1.0);
    }
    assert_eq!(t.truncate(2).to_node(), t.to_node());
}

#[test]
fn truncation_disagrees_only_below_the_cut() {
    for seed in 0..200 {
        let mut r = rng(seed);
        let t = random_tree(8, r.random_range(1..30), 0.0, &mut r).unwrap();
        let node = t.to_node();
        for d in 0..=t.depth() {
            let cut = t.truncate(d).to_node();
            let differ = cube_mean(8, |x| (node_mean(&node, x) != node_mean(&cut, x)) as u8 as f64);
            let deep = t.leaf_depths().iter().filter(|&&k| k > d).count();
            assert!(differ <= deep as f64 * 0.5f64.powi(d as i32) + 1e-12);
        }
        assert_eq!(t.truncate(0).to_node(), if t.depth() == 0 { node.clone() } else { Node::Leaf(true) });
    }
}
