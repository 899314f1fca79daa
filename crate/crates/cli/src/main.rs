use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stochtree::data::{corrupt, draw_clean};
use stochtree::evaluation::{exact_error, guarantee_margin, mc_error, measure_opt, Hypothesis};
use stochtree::find::{find_with, FindOptions};
use stochtree::harness::{run_sweep, ExperimentConfig, ExperimentReport};
use stochtree::regression::{
    l1_objective, l1_regress_with, l2_objective, l2_regress_with, pipeline_degree, RegressionOptions,
};
use stochtree::trees::random_tree;
use stochtree::{
    AdversaryStrategy, Dataset, Method, MultilinearPolynomial, PredictionMode, StochasticTree,
    TruncatedPolyHypothesis,
};

#[derive(Parser)]
#[command(name = "stochtree", version, about = "Learn stochastic decision trees under nasty noise")]
struct Cli {
    /// Worker threads for enumeration and sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random target tree.
    GenTree {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 0.3)]
        stoch_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a clean uniform sample labeled by a tree.
    Sample {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply an eta-corruption to a clean dataset.
    Corrupt {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value = "label_flip_margin")]
        adversary: AdversaryStrategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal depth-d tree; the tree goes to stdout, search stats to stderr.
    Find {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        no_memo: bool,
        /// 0 uses the global pool, 1 runs sequentially.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Polynomial regression; the polynomial goes to stdout, objectives to stderr.
    Regress {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        norm: Norm,
        /// Explicit degree; otherwise derived from --size-hint and --eps.
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        size_hint: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 4096)]
        feature_cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error of a hypothesis (tree or polynomial file) against a target tree.
    Eval {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        hypothesis: PathBuf,
        /// Prediction mode for polynomial hypotheses; read from the file by default.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Guarantee to check; defaults to find for trees, l2/l1 by mode.
        #[arg(long)]
        method: Option<Method>,
        /// Corruption level used in the bound; taken from --data when given.
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Dataset whose corrupted fraction sets eta.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 200_000)]
        mc_trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: bool,
    },
    /// Run a grid of experiments from a key=value config; lists expand to a grid.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra `key=value` settings, overriding the config file.
        settings: Vec<String>,
        /// Per-trial reports as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-config success rates as CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run one configuration and print its per-trial reports.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        settings: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    L1,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Rounded,
    Randomized,
}

impl From<Mode> for PredictionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Rounded => PredictionMode::Rounded,
            Mode::Randomized => PredictionMode::Randomized,
        }
    }
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_tree(path: &Path) -> Result<StochasticTree> {
    StochasticTree::parse(&read_input(path)?).with_context(|| format!("parsing tree {}", path.display()))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::parse(&read_input(path)?).with_context(|| format!("parsing dataset {}", path.display()))
}

fn is_tree_text(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with("n="))
}

fn mode_comment(text: &str) -> Option<PredictionMode> {
    text.lines().find_map(|l| match l.trim() {
        "# mode=rounded" => Some(PredictionMode::Rounded),
        "# mode=randomized" => Some(PredictionMode::Randomized),
        _ => None,
    })
}

/// Config file lines followed by overrides; a later key replaces an
/// earlier one.
fn config_text(config: Option<&Path>, settings: &[String]) -> Result<String> {
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: &str| {
        let k = k.trim().to_string();
        match entries.iter_mut().find(|(key, _)| *key == k) {
            Some(e) => e.1 = v.trim().to_string(),
            None => entries.push((k, v.trim().to_string())),
        }
    };
    if let Some(p) = config {
        let text = read_input(p)?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected key=value, got `{line}`", p.display(), i + 1);
            };
            put(k, v);
        }
    }
    for s in settings {
        let Some((k, v)) = s.split_once('=') else {
            bail!("expected key=value, got `{s}`");
        };
        put(k, v);
    }
    Ok(entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect())
}

fn reports_jsonl(reports: &[ExperimentReport]) -> String {
    reports.iter().map(|r| r.to_json() + "\n").collect()
}

fn reports_csv(reports: &[ExperimentReport]) -> String {
    let mut out = format!("{}\n", ExperimentReport::CSV_HEADER);
    for r in reports {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTree {
            n,
            s,
            stoch_fraction,
            seed,
            out,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tree(n, s, stoch_fraction, &mut rng)?;
            write_output(out.as_deref(), &t.to_text())
        }
        Command::Sample { tree, m, seed, out } => {
            let t = read_tree(&tree)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            write_output(out.as_deref(), &draw_clean(&t, m, &mut rng).to_text())
        }
        Command::Corrupt {
            tree,
            data,
            eta,
            adversary,
            seed,
            out,
        } => {
            let t = read_tree(&tree)?;
            let clean = read_dataset(&data)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dirty = corrupt(&clean, eta, adversary, &t, &mut rng)?;
            write_output(out.as_deref(), &dirty.to_text())
        }
        Command::Find {
            data,
            depth,
            no_memo,
            threads,
            out,
        } => {
            let samples = read_dataset(&data)?.into_samples();
            let opts = FindOptions {
                memoize: !no_memo,
                threads,
            };
            let found = find_with(&samples, depth, &opts)?;
            write_output(out.as_deref(), &found.tree.to_text())?;
            let record = serde_json::json!({
                "depth": depth,
                "mistakes": found.mistakes,
                "error": found.error,
                "stats": serde_json::from_str::<serde_json::Value>(&found.stats.to_json())?,
            });
            eprintln!("{record}");
            Ok(())
        }
        Command::Regress {
            data,
            norm,
            degree,
            size_hint,
            eps,
            feature_cap,
            out,
        } => {
            let samples = read_dataset(&data)?.into_samples();
            let d = match (degree, size_hint, eps) {
                (Some(d), _, _) => d,
                (None, Some(s), Some(e)) => pipeline_degree(samples.n(), s, e)?,
                _ => bail!("give --degree, or both --size-hint and --eps"),
            };
            let opts = RegressionOptions {
                feature_cap,
                ..Default::default()
            };
            let (poly, mode, record) = match norm {
                Norm::L2 => {
                    let p = l2_regress_with(&samples, d, &opts)?;
                    let rec = serde_json::json!({
                        "norm": "l2",
                        "degree": d,
                        "terms": p.len(),
                        "l2_objective": l2_objective(&p, &samples),
                        "l1_objective": l1_objective(&p, &samples),
                    });
                    (p, "rounded", rec)
                }
                Norm::L1 => {
                    let fit = l1_regress_with(&samples, d, &opts)?;
                    let rec = serde_json::json!({
                        "norm": "l1",
                        "degree": d,
                        "terms": fit.poly.len(),
                        "l1_objective": fit.objective,
                        "lp_objective": fit.lp_objective,
                        "l2_candidate_l1_objective": fit.l2_candidate_objective,
                        "formulation": fit.formulation,
                    });
                    (fit.poly, "randomized", rec)
                }
            };
            write_output(out.as_deref(), &format!("{}# mode={mode}\n", poly.to_text()))?;
            eprintln!("{record}");
            Ok(())
        }
        Command::Eval {
            target,
            hypothesis,
            mode,
            method,
            eta,
            eps,
            data,
            mc_trials,
            seed,
            csv,
        } => {
            let t = read_tree(&target)?;
            let text = read_input(&hypothesis)?;
            let h = if is_tree_text(&text) {
                Hypothesis::Tree(StochasticTree::parse(&text)?)
            } else {
                let poly = MultilinearPolynomial::parse(&text)?;
                let mode = mode
                    .map(PredictionMode::from)
                    .or_else(|| mode_comment(&text))
                    .unwrap_or(PredictionMode::Rounded);
                Hypothesis::Poly(TruncatedPolyHypothesis::new(poly, mode))
            };
            let method = method.unwrap_or(match &h {
                Hypothesis::Tree(_) => Method::Find,
                Hypothesis::Poly(p) if p.mode == PredictionMode::Randomized => Method::L1,
                Hypothesis::Poly(_) => Method::L2,
            });
            let eta = match data {
                Some(p) => read_dataset(&p)?.corrupted_fraction(),
                None => eta,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (opt, opt_exact) = measure_opt(&t, mc_trials, &mut rng)?;
            let (err, err_exact) = match exact_error(&t, &h) {
                Ok(e) => (e, true),
                Err(stochtree::Error::EnumerationCap { .. }) => (mc_error(&t, &h, mc_trials, &mut rng).mean, false),
                Err(e) => return Err(e.into()),
            };
            let report = guarantee_margin(method, opt, err, eta, eps, opt_exact && err_exact);
            if csv {
                println!("{}\n{}", stochtree::ErrorReport::CSV_HEADER, report.to_csv_row());
            } else {
                println!("{}", report.to_json());
            }
            Ok(())
        }
        Command::Sweep {
            config,
            settings,
            out,
            summary,
        } => {
            let grid = ExperimentConfig::grid_from_str(&config_text(config.as_deref(), &settings)?)?;
            let result = run_sweep(&grid)?;
            write_output(None, &reports_jsonl(&result.reports))?;
            if let Some(p) = out {
                fs::write(&p, result.reports_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
            let table = result.summary_csv();
            match summary {
                Some(p) => fs::write(&p, &table).with_context(|| format!("writing {}", p.display()))?,
                None => eprint!("{table}"),
            }
            Ok(())
        }
        Command::Run {
            config,
            settings,
            out,
        } => {
            let cfg = ExperimentConfig::from_str_single(&config_text(config.as_deref(), &settings)?)?;
            let reports = stochtree::harness::run_trials(&cfg)?;
            write_output(None, &reports_jsonl(&reports))?;
            if let Some(p) = out {
                fs::write(&p, reports_csv(&reports)).with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
