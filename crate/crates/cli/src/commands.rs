//! The four subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use rpel_core::aggregation::{empirical_kappa, AggregationInput, KAPPA_ENUMERATION_CAP};
use rpel_core::protocol::{run_fixed_graph, run_rpel, with_workers, Mode, RunOutput, RunSummary};
use rpel_core::sampling::{effective_fraction_sweep, select_hyperparameters, GridEntry, SelectionMode};
use rpel_core::{Rule, RpelError};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{config_hash, csv_string, output_dir, to_json_pretty, write_atomic, Meta};

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, contents.as_bytes()),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SelectParamsArgs {
    /// Total number of nodes.
    #[arg(long)]
    pub n: u64,
    /// Number of Byzantine nodes.
    #[arg(long)]
    pub b: u64,
    /// Number of rounds.
    #[arg(long = "T", alias = "rounds")]
    pub rounds: u64,
    /// Candidate sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<u64>,
    /// Simulations per grid value.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Target effective adversarial fraction.
    #[arg(long)]
    pub q: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the exact p-quantile of the maximum instead of simulation.
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Write the table here instead of standard output.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct GridRow {
    s: u64,
    b_hat: u64,
    kappa: f64,
    selected: bool,
}

fn grid_rows(table: &[GridEntry], chosen: Option<u64>) -> Vec<GridRow> {
    table
        .iter()
        .map(|e| GridRow {
            s: e.s,
            b_hat: e.b_hat,
            kappa: e.kappa,
            selected: Some(e.s) == chosen,
        })
        .collect()
}

pub fn select_params(args: &SelectParamsArgs) -> Result<(), CliError> {
    let mode = match args.quantile {
        Some(p) => SelectionMode::Quantile { p },
        None => SelectionMode::Simulate { sims: args.m },
    };
    let meta = Meta::new(config_hash(args)?, Some(args.seed));
    match select_hyperparameters(args.n, args.b, args.rounds, &args.grid, mode, args.q, args.seed) {
        Ok(sel) => emit(args.out.as_deref(), &csv_string(&meta, &grid_rows(&sel.table, Some(sel.s)))?),
        Err(RpelError::InfeasibleGrid { q, table }) => {
            let entries: Vec<GridEntry> = table
                .into_iter()
                .map(|(s, b_hat, kappa)| GridEntry {
                    s: s as u64,
                    b_hat: b_hat as u64,
                    kappa,
                })
                .collect();
            eprint!("{}", csv_string(&meta, &grid_rows(&entries, None))?);
            Err(CliError::Usage(format!("no grid value reaches kappa <= {q}")))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FracSimArgs {
    #[arg(long = "n-list", value_delimiter = ',', required = true)]
    pub n_list: Vec<u64>,
    /// Byzantine fraction; `b = round(byz_frac * n)`.
    #[arg(long = "byz-frac")]
    pub byz_frac: f64,
    #[arg(long = "s-list", value_delimiter = ',', required = true)]
    pub s_list: Vec<u64>,
    #[arg(long = "T", alias = "rounds")]
    pub rounds: u64,
    #[arg(long, default_value_t = 5)]
    pub sims: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; defaults to `frac_sim.csv` in the output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn frac_sim(args: &FracSimArgs) -> Result<(), CliError> {
    let rows = effective_fraction_sweep(&args.n_list, args.byz_frac, &args.s_list, args.rounds, args.sims, args.seed)?;
    let meta = Meta::new(config_hash(args)?, Some(args.seed));
    let path = args.out.clone().unwrap_or_else(|| output_dir(None).join("frac_sim.csv"));
    write_atomic(&path, csv_string(&meta, &rows)?.as_bytes())?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Run only this seed instead of the configured list.
    #[arg(long = "seed-override")]
    pub seed_override: Option<u64>,
    /// Output directory, overriding the configuration and the environment.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    meta: &'a Meta,
    summary: &'a RunSummary,
}

/// Hash of everything that affects results; seeds and output paths are excluded.
fn run_hash(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut value = serde_json::to_value(cfg)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("seeds");
        map.remove("output");
    }
    config_hash(&value)
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
    if let Some(seed) = args.seed_override {
        cfg.seeds = vec![seed];
    }
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("configuration lists no seeds".into()));
    }
    let dir = output_dir(args.out_dir.as_deref().or(cfg.output.dir.as_deref()));
    cfg.output.dir = Some(dir.clone());
    for &seed in &cfg.seeds {
        cfg.simulation(seed).validate()?;
    }
    let hash = run_hash(&cfg)?;
    let prefix = cfg.output.prefix.clone();
    write_atomic(&dir.join(format!("{prefix}_config.json")), &to_json_pretty(&cfg)?)?;

    let mut blow_up = None;
    for &seed in &cfg.seeds {
        let sim = cfg.simulation(seed);
        let go = || match sim.mode {
            Mode::Rpel => run_rpel(&sim),
            Mode::FixedGraph => run_fixed_graph(&sim),
        };
        let result: Result<RunOutput, RpelError> = match args.workers {
            Some(w) => with_workers(w, go)?,
            None => go(),
        };
        match result {
            Ok(out) => {
                let meta = Meta::new(hash.clone(), Some(seed));
                let stem = format!("{prefix}_seed{seed}");
                write_atomic(&dir.join(format!("{stem}_trace.csv")), csv_string(&meta, &out.trace)?.as_bytes())?;
                let summary = SummaryFile {
                    meta: &meta,
                    summary: &out.summary,
                };
                write_atomic(&dir.join(format!("{stem}_summary.json")), &to_json_pretty(&summary)?)?;
                let s = &out.summary;
                println!(
                    "seed {seed}: grad_norm_sq {:.6e} -> {:.6e}, gamma violations {}{}",
                    s.initial_grad_norm_sq,
                    s.final_grad_norm_sq,
                    s.gamma_violations,
                    if s.reduced_10x { "" } else { ", not reduced 10x" }
                );
            }
            Err(err @ RpelError::NonFinite { .. }) => {
                eprintln!("seed {seed}: {err}");
                blow_up.get_or_insert(err);
            }
            Err(err) => return Err(err.into()),
        }
    }
    match blow_up {
        Some(err) => Err(err.into()),
        None => Ok(()),
    }
}

fn parse_rule(s: &str) -> Result<Rule, String> {
    s.parse().map_err(|e: RpelError| e.to_string())
}

#[derive(Debug, Args)]
pub struct AggBenchArgs {
    /// JSON array of `{"own": [...], "received": [[...], ...], "b_hat": k}` instances.
    #[arg(long)]
    pub instances: PathBuf,
    /// Rules to measure, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_rule, required = true)]
    pub rules: Vec<Rule>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct KappaRow {
    instance: usize,
    rule: Rule,
    s: usize,
    b_hat: usize,
    kappa_hat: f64,
    subset: String,
}

pub fn agg_bench(args: &AggBenchArgs) -> Result<(), CliError> {
    let instances: Vec<AggregationInput> = serde_json::from_str(&fs::read_to_string(&args.instances)?)?;
    for (i, inst) in instances.iter().enumerate() {
        inst.validate()?;
        if inst.s() + 1 > KAPPA_ENUMERATION_CAP {
            return Err(CliError::Usage(format!(
                "instance {i} has {} inputs; enumeration supports at most {KAPPA_ENUMERATION_CAP}",
                inst.s() + 1
            )));
        }
    }
    let mut rows = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        for &rule in &args.rules {
            let cert = empirical_kappa(rule, inst)?;
            rows.push(KappaRow {
                instance: i,
                rule,
                s: cert.s,
                b_hat: cert.b_hat,
                kappa_hat: cert.kappa_hat,
                subset: cert.subset.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" "),
            });
        }
    }
    let meta = Meta::new(config_hash(&(&instances, &args.rules))?, None);
    emit(args.out.as_deref(), &csv_string(&meta, &rows)?)
}
