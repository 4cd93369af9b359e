use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use dms_core::harness::{
    emit_tables, gen_synthetic_load_with, kmeans_profiles, run_experiment, run_sweep, write_meta,
    write_report, ExperimentConfig, SynthConfig,
};
use dms_core::numerics::WeightVector;
use dms_core::secagg::{FixedPointCodec, PrimeField, SecureAggregator, SessionDescriptor};
use dms_core::threats::{
    dlg_compare_topologies, run_poisoning_experiment, DlgConfig, PoisoningConfig,
};
use dms_core::{Error, Strategy};

const EXIT_CONFIG: u8 = 2;
const EXIT_SECAGG: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "dms",
    version,
    about = "Decentralized training over Markov-switching topologies"
)]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "DMS_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Accept learning rates above the stability bound.
    #[arg(long, global = true)]
    allow_unstable: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report.
    Run(RunArgs),
    /// Rounds-to-tolerance over strategies and agent counts.
    Sweep(SweepArgs),
    /// Poisoning or gradient-leakage comparison over several seeds.
    Attack(AttackArgs),
    /// Secure aggregation timing and message counts.
    MpcBench(BenchArgs),
    /// Cluster synthetic households by daily load shape.
    Cluster(ClusterArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [Strategy::Dring, Strategy::Dfc, Strategy::Dms])]
    strategies: Vec<Strategy>,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 20, 40, 100, 200])]
    agents: Vec<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    Poison,
    Dlg,
}

#[derive(Args)]
struct AttackArgs {
    kind: AttackKind,
    /// TOML file with the attack parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Also run FedAvg with secure aggregation (dlg only).
    #[arg(long)]
    secure: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 5, 7])]
    parties: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    contributors: usize,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    sessions: usize,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long, default_value_t = 100)]
    households: usize,
    #[arg(long, default_value_t = 28)]
    days: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => EXIT_CONFIG,
        Some(Error::Divergence { .. }) => EXIT_DIVERGENCE,
        Some(e) if e.is_secagg_abort() => EXIT_SECAGG,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Run(a) => run(cli, a),
        Command::Sweep(a) => sweep(cli, a),
        Command::Attack(a) => attack(cli, a),
        Command::MpcBench(a) => mpc_bench(cli, a),
        Command::Cluster(a) => cluster(cli, a),
    }
}

fn load_config(cli: &Cli, path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.allow_unstable |= cli.allow_unstable;
    Ok(cfg)
}

fn load_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            )
        }
        None => Ok(T::default()),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn run(cli: &Cli, a: &RunArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(cli, a.config.as_deref())?;
    if let Some(s) = a.strategy {
        cfg.strategy = s;
    }
    if let Some(n) = a.agents {
        cfg.agents = n;
    }
    if let Some(r) = a.rounds {
        cfg.rounds = r;
    }
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    write_report(&report, &cli.out)?;
    emit_tables(std::slice::from_ref(&report))?.write(&cli.out)?;
    write_meta(&cli.out, "run")?;
    let s = &report.summary;
    println!(
        "{} {} agents={} rounds={} stop={:?} train_loss={:.6e} worst_mse={} test_mse={} messages={}",
        cfg.strategy,
        report.header.model,
        report.header.agents,
        s.rounds_run,
        s.stop_reason,
        s.final_train_loss,
        s.final_worst_mse.map_or("-".into(), |v| format!("{v:.6e}")),
        s.test_mse.map_or("-".into(), |v| format!("{v:.6e}")),
        s.total_messages,
    );
    println!("wrote {}", cli.out.display());
    Ok(())
}

fn sweep(cli: &Cli, a: &SweepArgs) -> anyhow::Result<()> {
    let mut base = load_config(cli, a.config.as_deref())?;
    if base.tolerance.is_none() {
        base.tolerance = Some(1e-6);
    }
    base.validate()?;
    let points = run_sweep(&base, &a.strategies, &a.agents)?;
    fs::create_dir_all(&cli.out)?;
    write_csv(&cli.out.join("sweep.csv"), &points)?;
    write_meta(&cli.out, "sweep")?;
    for p in &points {
        println!(
            "{:>6} n={:<4} rounds_to_tolerance={:>6} mean_edges={:.1}",
            p.strategy.name(),
            p.agents,
            p.rounds_to_tolerance.map_or("-".into(), |r| r.to_string()),
            p.mean_edges
        );
    }
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Serialize)]
struct PoisonRow {
    seed: u64,
    dms_clean: f64,
    dms_poisoned: f64,
    dms_inflation: f64,
    fedavg_clean: f64,
    fedavg_poisoned: f64,
    fedavg_inflation: f64,
}

#[derive(Serialize)]
struct DlgRow {
    seed: u64,
    fedavg_input_mse: f64,
    fedavg_success: bool,
    dms_input_mse: f64,
    dms_success: bool,
    dms_pairs: usize,
    transcript_leaks: Option<bool>,
}

fn attack(cli: &Cli, a: &AttackArgs) -> anyhow::Result<()> {
    if a.seeds == 0 {
        bail!(Error::Config("need at least one seed".into()));
    }
    fs::create_dir_all(&cli.out)?;
    let first = cli.seed.unwrap_or(0);
    match a.kind {
        AttackKind::Poison => {
            let base: PoisoningConfig = load_toml(a.config.as_deref())?;
            let reports = (first..first + a.seeds)
                .map(|seed| {
                    run_poisoning_experiment(&PoisoningConfig {
                        seed,
                        ..base.clone()
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rows: Vec<PoisonRow> = reports
                .iter()
                .map(|r| PoisonRow {
                    seed: r.seed,
                    dms_clean: r.dms.clean_error,
                    dms_poisoned: r.dms.poisoned_error,
                    dms_inflation: r.dms.inflation,
                    fedavg_clean: r.fedavg.clean_error,
                    fedavg_poisoned: r.fedavg.poisoned_error,
                    fedavg_inflation: r.fedavg.inflation,
                })
                .collect();
            write_jsonl(&cli.out.join("attack.jsonl"), &reports)?;
            write_csv(&cli.out.join("attack.csv"), &rows)?;
            println!(
                "median error inflation: dms {:.4} fedavg {:.4}",
                median(rows.iter().map(|r| r.dms_inflation).collect()),
                median(rows.iter().map(|r| r.fedavg_inflation).collect())
            );
        }
        AttackKind::Dlg => {
            let mut base: DlgConfig = load_toml(a.config.as_deref())?;
            base.secure |= a.secure;
            let reports = (first..first + a.seeds)
                .map(|seed| {
                    dlg_compare_topologies(&DlgConfig {
                        seed,
                        ..base.clone()
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rows: Vec<DlgRow> = reports
                .iter()
                .map(|r| DlgRow {
                    seed: r.seed,
                    fedavg_input_mse: r.fedavg.input_mse,
                    fedavg_success: r.fedavg.success,
                    dms_input_mse: r.dms.input_mse,
                    dms_success: r.dms.success,
                    dms_pairs: r.dms.pairs_attacked,
                    transcript_leaks: r.secure.as_ref().map(|s| s.transcript_leaks),
                })
                .collect();
            write_jsonl(&cli.out.join("attack.jsonl"), &reports)?;
            write_csv(&cli.out.join("attack.csv"), &rows)?;
            let wins = rows
                .iter()
                .filter(|r| r.dms_input_mse > r.fedavg_input_mse)
                .count();
            println!(
                "fedavg reconstructions under threshold: {}/{}; dms error above fedavg: {wins}/{}",
                rows.iter().filter(|r| r.fedavg_success).count(),
                rows.len(),
                rows.len()
            );
        }
    }
    write_meta(&cli.out, "attack")?;
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    parties: usize,
    threshold: usize,
    contributors: usize,
    dim: usize,
    sessions: usize,
    messages_per_session: usize,
    expected_messages: usize,
    bytes_per_session: usize,
    micros_per_session: f64,
    max_abs_error: f64,
}

fn mpc_bench(cli: &Cli, a: &BenchArgs) -> anyhow::Result<()> {
    let field = PrimeField::default();
    let codec = FixedPointCodec::default();
    let seed = cli.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<WeightVector<f64>> = (0..a.contributors)
        .map(|_| {
            WeightVector::from(
                (0..a.dim)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect::<Vec<f64>>(),
            )
        })
        .collect();
    let refs: Vec<&WeightVector<f64>> = inputs.iter().collect();
    let mut plain = WeightVector::zeros(a.dim);
    for x in &inputs {
        plain.axpy(1.0, x)?;
    }
    let mut rows = Vec::new();
    for &parties in &a.parties {
        let session = SessionDescriptor::external(parties, (0..a.contributors).collect());
        let mut agg = SecureAggregator::new(field, codec, seed, false);
        let start = Instant::now();
        let mut worst: f64 = 0.0;
        for round in 0..a.sessions {
            let (sum, _) = agg.aggregate(round, &session, &refs)?;
            for (s, p) in sum.iter().zip(plain.iter()) {
                worst = worst.max((s - p).abs());
            }
        }
        let elapsed = start.elapsed().as_secs_f64() * 1e6 / a.sessions.max(1) as f64;
        let stats = agg.stats();
        let per = a.sessions.max(1);
        rows.push(BenchRow {
            parties,
            threshold: session.degree() + 1,
            contributors: a.contributors,
            dim: a.dim,
            sessions: a.sessions,
            messages_per_session: stats.messages / per,
            expected_messages: session.expected_messages(),
            bytes_per_session: stats.payload_bytes / per,
            micros_per_session: elapsed,
            max_abs_error: worst,
        });
    }
    fs::create_dir_all(&cli.out)?;
    write_csv(&cli.out.join("mpc_bench.csv"), &rows)?;
    write_meta(&cli.out, "mpc-bench")?;
    for r in &rows {
        println!(
            "parties={} threshold={} messages={} (expected {}) bytes={} time={:.0}us max_error={:.3e}",
            r.parties,
            r.threshold,
            r.messages_per_session,
            r.expected_messages,
            r.bytes_per_session,
            r.micros_per_session,
            r.max_abs_error
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ClusterRow {
    household: usize,
    archetype: usize,
    cluster: usize,
}

fn cluster(cli: &Cli, a: &ClusterArgs) -> anyhow::Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let profiles = gen_synthetic_load_with(&SynthConfig {
        households: a.households,
        days: a.days,
        seed,
        ..Default::default()
    })
    .map_err(|e| Error::Config(e.to_string()))?;
    let c = kmeans_profiles(&profiles, a.k, seed).map_err(|e| Error::Config(e.to_string()))?;
    let rows: Vec<ClusterRow> = profiles
        .iter()
        .zip(&c.assignments)
        .map(|(p, &k)| ClusterRow {
            household: p.household,
            archetype: p.archetype,
            cluster: k,
        })
        .collect();
    fs::create_dir_all(&cli.out)?;
    write_csv(&cli.out.join("clusters.csv"), &rows)?;
    write_meta(&cli.out, "cluster")?;
    println!(
        "k={} iterations={} inertia={:.4} sizes={:?} largest={}",
        a.k,
        c.iterations,
        c.inertia,
        c.sizes(),
        c.largest()
    );
    Ok(())
}
