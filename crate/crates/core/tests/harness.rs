use std::path::PathBuf;

use stochtree::harness::*;
use stochtree::{AdversaryStrategy, Error, ExperimentConfig};

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn render(reports: &[ExperimentReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.to_json());
        out.push('\n');
    }
    out
}

/// Canned configs whose reports were pinned on first run. Set
/// `STOCHTREE_BLESS=1` to rewrite them.
#[test]
fn golden_reports() {
    for name in ["find", "l2", "l1"] {
        let dir = golden_dir();
        let cfg_text = std::fs::read_to_string(dir.join(format!("{name}.cfg"))).unwrap();
        let cfg = ExperimentConfig::from_str_single(&cfg_text).unwrap();
        let got = render(&run_trials(&cfg).unwrap());
        let path = dir.join(format!("{name}.jsonl"));
        if std::env::var_os("STOCHTREE_BLESS").is_some() {
            std::fs::write(&path, &got).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap();
        assert_eq!(got, want, "{name} report drifted from {}", path.display());
        let first = run_experiment(&cfg).unwrap();
        assert_eq!(first.to_json(), got.lines().next().unwrap());
    }
}

#[test]
fn reports_are_self_describing() {
    let cfg = ExperimentConfig::from_str_single(&std::fs::read_to_string(golden_dir().join("find.cfg")).unwrap()).unwrap();
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.budget, cfg.budget().unwrap());
    assert_eq!(r.budget, 3);
    assert_eq!(r.corrupted, 200);
    assert!((r.report.eta - 0.05).abs() < 1e-15);
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    for key in ["seed", "trial", "n", "s", "m", "adversary", "budget", "corrupted", "report"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r.to_csv_row().split(',').count(), ExperimentReport::CSV_HEADER.split(',').count());
}

#[test]
fn infeasible_budgets_fail_before_compute() {
    let mut cfg = ExperimentConfig {
        n: 40,
        m: 1_000_000,
        max_depth: 8,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    assert!(matches!(run_experiment(&cfg), Err(Error::Budget(_))));
    cfg.method = Method::L2;
    cfg.eps = 0.01;
    assert!(matches!(run_experiment(&cfg), Err(Error::FeatureCap { .. })));
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn config_validation() {
    for bad in [
        "eta=1.5",
        "eps=0",
        "n=0",
        "s=0",
        "m=0",
        "trials=0",
        "stoch_fraction=-0.1",
        "method=svm",
        "adversary=gentle",
        "colour=blue",
        "n=ten",
        "n",
        "stoch_fraction=0\nn=2\ns=5",
    ] {
        assert!(ExperimentConfig::from_str_single(bad).is_err(), "{bad}");
    }
    let cfg = ExperimentConfig::from_str_single("n=6 # six\n\nmethod = L1\nadversary=example-replace\n").unwrap();
    assert_eq!(cfg.n, 6);
    assert_eq!(cfg.method, Method::L1);
    assert_eq!(cfg.adversary, AdversaryStrategy::ExampleReplace);
    let back = ExperimentConfig::from_str_single(&cfg.to_text()).unwrap();
    assert_eq!(back.to_text(), cfg.to_text());
    assert!(ExperimentConfig::from_str_single("eta=0,0.1").is_err());
}

#[test]
fn sweep_grid_and_summaries() {
    let grid = ExperimentConfig::grid_from_str(
        "method=find\nn=6\ns=4\nm=1500\neps=0.25\nmax_depth=2\ntrials=4\neta=0,0.05,0.1\nadversary=label_flip_margin\n",
    )
    .unwrap();
    assert_eq!(grid.len(), 3);
    assert_eq!(grid.iter().map(|c| c.eta).collect::<Vec<_>>(), [0.0, 0.05, 0.1]);
    let sweep = run_sweep(&grid).unwrap();
    assert_eq!(sweep.reports.len(), 12);
    assert_eq!(sweep.summaries.len(), 3);
    for (c, s) in grid.iter().zip(&sweep.summaries) {
        let mine: Vec<_> = sweep.reports.iter().filter(|r| r.report.eta <= c.eta + 1e-12 && (r.report.eta - c.eta).abs() < 1e-12).collect();
        assert_eq!(mine.len(), 4);
        let held = mine.iter().filter(|r| r.report.holds()).count() as f64 / 4.0;
        assert_eq!(s.success_rate, held);
        assert!(s.max_margin >= mine.iter().map(|r| r.report.margin).fold(f64::NEG_INFINITY, f64::max));
    }
    assert_eq!(sweep.reports_csv().lines().count(), 13);
    assert_eq!(sweep.summary_csv().lines().count(), 4);
    let rates = exceed_rates(&sweep.reports);
    assert!(rates.contains_key("label_flip_margin"));
    let again = run_sweep(&grid).unwrap();
    assert_eq!(again.reports_csv(), sweep.reports_csv());
}

#[test]
fn seeds_are_isolated_per_trial() {
    let cfg = ExperimentConfig::from_str_single(&std::fs::read_to_string(golden_dir().join("l2.cfg")).unwrap()).unwrap();
    let all = run_trials(&cfg).unwrap();
    for (t, r) in all.iter().enumerate() {
        assert_eq!(r.trial, t);
        assert_eq!(run_trial(&cfg, t).unwrap().to_json(), r.to_json());
    }
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(run_experiment(&other).unwrap().to_json(), all[0].to_json());
}
