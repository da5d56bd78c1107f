use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use admission::ledger::GasModel;
use admission::mkhe::Backend;
use admission::scenario::{
    cost_curve, parse_fault_plan, protocol_digest, ring_curve, run_scenario, write_csv, RunOutput, Scenario,
};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "admission", version, about = "Batch-folded anonymous admission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one admission scenario end to end and write its metrics.
    Run {
        /// Scenario file (flat TOML).
        #[arg(long)]
        config: PathBuf,
        /// Batch size override.
        #[arg(long)]
        n: Option<usize>,
        /// Ring size override.
        #[arg(long)]
        ring: Option<usize>,
        /// `transparent` or `rlwe`.
        #[arg(long)]
        backend: Option<Backend>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fault plan, one `<user> <kind>` per line. Replaces the config's plan.
        #[arg(long)]
        faults: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Emit the batch-size and ring-size cost curves as CSV.
    Costs {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 64)]
        n_max: u64,
        #[arg(long, default_value_t = 32)]
        l_max: usize,
        /// Signatures timed per ring size; 0 skips the measured column.
        #[arg(long, default_value_t = 5)]
        measure_reps: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, n, ring, backend, seed, faults, out } => {
            let mut s = Scenario::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(n) = n {
                s.n = n;
            }
            if let Some(ring) = ring {
                s.ring = ring;
            }
            if let Some(b) = backend {
                s.backend = b;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(path) = faults {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                s.faults = parse_fault_plan(&text)?;
            }
            let output = run_scenario(&s)?;
            write_run(&out, &output)?;
            let m = &output.metrics;
            println!(
                "n={} ring={} backend={} seed={}: admitted {}/{}, provisioned {}/{}, rejections {}, amortized gas {:.2}",
                m.n,
                m.ring,
                m.backend,
                m.seed,
                m.admitted,
                m.n,
                m.provisioned,
                m.n,
                m.rejections.len(),
                m.gas.amortized_measured
            );
            Ok(if m.success() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Costs { profile, n_max, l_max, measure_reps, out } => {
            let model = GasModel::load(&profile)?;
            fs::create_dir_all(&out)?;
            let costs = cost_curve(&model, n_max)?;
            write_csv(create(&out.join("cost_curves.csv"))?, &costs)?;
            let rings = ring_curve(&model, l_max, measure_reps, 0)?;
            write_csv(create(&out.join("ring_curves.csv"))?, &rings)?;
            println!("wrote {} cost rows and {} ring rows to {}", costs.len(), rings.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// `metrics.jsonl`, `summary.csv`, `txlog.jsonl` and `ledger.snapshot`.
fn write_run(dir: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let m = &output.metrics;
    let mut w = create(&dir.join("metrics.jsonl"))?;
    let mut line = |v: serde_json::Value| writeln!(w, "{v}");
    line(json!({
        "record": "run",
        "n": m.n,
        "ring": m.ring,
        "backend": m.backend,
        "seed": m.seed,
        "success": m.success(),
        "admitted": m.admitted,
        "provisioned": m.provisioned,
        "ledger_digest": m.ledger_digest,
        "protocol_digest": protocol_digest(output).to_hex(),
    }))?;
    for u in &m.users {
        line(json!({ "record": "user", "outcome": u }))?;
    }
    for b in &m.batches {
        line(json!({ "record": "batch", "report": b }))?;
    }
    for (kind, reason) in &m.rejections {
        line(json!({ "record": "rejection", "kind": kind, "reason": reason }))?;
    }
    line(json!({ "record": "gas", "gas": m.gas }))?;
    line(json!({ "record": "timings", "timings": m.timings }))?;
    w.flush()?;

    write_csv(create(&dir.join("summary.csv"))?, &m.users.iter().map(SummaryRow::from).collect::<Vec<_>>())?;
    fs::write(dir.join("txlog.jsonl"), &output.tx_log)?;
    fs::write(dir.join("ledger.snapshot"), &output.ledger_snapshot)?;
    Ok(())
}

#[derive(serde::Serialize)]
struct SummaryRow {
    user: usize,
    faults: String,
    admitted: bool,
    provisioned: bool,
    excluded: String,
}

impl From<&admission::scenario::UserOutcome> for SummaryRow {
    fn from(u: &admission::scenario::UserOutcome) -> Self {
        Self {
            user: u.user,
            faults: u.faults.iter().map(|f| f.name()).collect::<Vec<_>>().join(";"),
            admitted: u.admitted,
            provisioned: u.provisioned,
            excluded: u.excluded.clone().unwrap_or_default(),
        }
    }
}
