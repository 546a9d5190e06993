//! `reax-kit`: MD runs, offline species analysis, ghost-region tables and
//! thread/chunk benchmarks.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use reax_core::config::RunConfig;
use reax_core::ghost::{format_ratio_table, ratio_table};
use reax_core::md::Outputs;
use reax_core::parallel::KERNELS;
use reax_core::species::{parse_snapshots, summarize_snapshots, Thresholds, SUMMARY_HEADER};

#[derive(Parser, Debug)]
#[command(name = "reax-kit", version, about = "Threaded mini reactive MD engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Velocity-Verlet NVE run.
    Run(RunArgs),
    /// Species summary from stored bond-order snapshots.
    Species(SpeciesArgs),
    /// Ghost-to-domain volume ratios as CSV.
    Ghostmodel(GhostArgs),
    /// Steps per second over a grid of thread counts and chunk sizes.
    Bench(BenchArgs),
}

/// Settings shared by `run` and `bench`.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// key=value config file; built-in defaults when omitted.
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    chunk: Option<usize>,
}

#[derive(Args, Debug)]
struct SpeciesArgs {
    /// Snapshot files, read in order.
    #[arg(required = true)]
    snapshots: Vec<PathBuf>,
    /// Default bond-order threshold.
    #[arg(long, default_value_t = reax_core::species::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Per element pair threshold, e.g. `H-O=0.4`.
    #[arg(long = "pair", value_name = "A-B=VALUE")]
    pairs: Vec<String>,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GhostArgs {
    /// Subdomain edge over ghost thickness, comma separated.
    #[arg(long = "dg", value_delimiter = ',', num_args = 1.., required = true)]
    dg: Vec<f64>,
    /// Threads per node, comma separated.
    #[arg(long = "t", value_delimiter = ',', num_args = 1.., required = true)]
    t: Vec<f64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: Overrides,
    /// Thread counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,
    /// Chunk sizes to sweep.
    #[arg(long = "chunk", value_delimiter = ',', default_value = "20")]
    chunks: Vec<usize>,
    /// CSV output; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn base_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = o.steps {
        cfg.steps = s;
    }
    if let Some(s) = &o.schedule {
        cfg.schedule = s.clone();
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got '{kv}'"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(c) = args.chunk {
        cfg.chunk = c;
    }
    let mut sim = cfg.build_simulation()?;
    let mut outputs = cfg.open_outputs()?;
    let summary = sim
        .run(cfg.steps, &mut outputs)
        .with_context(|| format!("run aborted at step {}", sim.state.step))?;
    let wall = Duration::from_secs_f64(summary.wall_seconds);
    let perf = sim.engine.perf.report_csv(Some(wall));
    if let Some(p) = &cfg.perf_out {
        fs::write(p, &perf).with_context(|| format!("writing {}", p.display()))?;
    }
    let last = summary.records.last().expect("at least the initial record");
    println!(
        "atoms={} steps={} threads={} schedule={} chunk={} wall_s={:.3} e_total={:.6} drift={:.3e}",
        sim.state.len(),
        cfg.steps,
        cfg.threads,
        cfg.schedule,
        cfg.chunk,
        summary.wall_seconds,
        last.total(),
        summary.relative_drift()
    );
    for w in &summary.windows {
        println!("species {}", w.line);
    }
    if cfg.perf_out.is_none() {
        print!("{perf}");
    }
    Ok(())
}

fn cmd_species(args: SpeciesArgs) -> Result<()> {
    let mut thresholds = Thresholds::new(args.threshold)?;
    for p in &args.pairs {
        let (pair, v) = p
            .split_once('=')
            .with_context(|| format!("--pair expects A-B=VALUE, got '{p}'"))?;
        let (a, b) = pair
            .split_once('-')
            .with_context(|| format!("--pair expects A-B=VALUE, got '{p}'"))?;
        let v: f64 = v.parse().with_context(|| format!("--pair {p}: bad value"))?;
        thresholds.set_pair(a, b, v)?;
    }
    let mut out = format!("{SUMMARY_HEADER}\n");
    for path in &args.snapshots {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let snaps = parse_snapshots(&text, &path.display().to_string())?;
        for line in summarize_snapshots(&snaps, &thresholds) {
            out.push_str(&line);
            out.push('\n');
        }
    }
    write_out(args.output.as_deref(), &out)
}

fn cmd_ghostmodel(args: GhostArgs) -> Result<()> {
    let rows = ratio_table(&args.dg, &args.t)?;
    print!("{}", format_ratio_table(&rows));
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let base = base_config(&args.common)?;
    if args.threads.is_empty() || args.chunks.is_empty() {
        bail!("--threads and --chunk need at least one value");
    }
    if let Some(&t) = args.threads.iter().find(|&&t| t > base.max_threads || t == 0) {
        bail!("thread count {t} outside 1..={}", base.max_threads);
    }
    let mut csv = String::from("threads,chunk,steps_per_sec");
    for k in KERNELS {
        csv.push(',');
        csv.push_str(k);
    }
    csv.push('\n');
    for &threads in &args.threads {
        for &chunk in &args.chunks {
            let mut cfg = base.clone();
            cfg.threads = threads;
            cfg.chunk = chunk;
            let mut sim = cfg.build_simulation()?;
            // first evaluation is setup, not measured
            sim.prepare()?;
            sim.engine.perf = Default::default();
            let summary = sim.run(cfg.steps, &mut Outputs::default())?;
            let sps = if summary.wall_seconds > 0.0 {
                cfg.steps as f64 / summary.wall_seconds
            } else {
                0.0
            };
            csv.push_str(&format!("{threads},{chunk},{sps:.4}"));
            for k in KERNELS {
                csv.push_str(&format!(",{:.6}", sim.engine.perf.seconds(k)));
            }
            csv.push('\n');
            eprintln!("bench threads={threads} chunk={chunk} steps/s={sps:.3}");
        }
    }
    write_out(args.output.as_deref(), &csv)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => cmd_run(a),
        Command::Species(a) => cmd_species(a),
        Command::Ghostmodel(a) => cmd_ghostmodel(a),
        Command::Bench(a) => cmd_bench(a),
    }
}
