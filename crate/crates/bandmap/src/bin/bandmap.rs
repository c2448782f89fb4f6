//! Command-line front end: map one kernel, or run the benchmark suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bandmap::arch::{parse_arch_config, ArchConfig};
use bandmap::bind::{map_application, MapMode};
use bandmap::dfg::{gen_cnkm, parse_dfg, Dfg};
use bandmap::report::{emit_report, run_bench, ReportFormat};
use bandmap::sched::mii;

#[derive(Parser)]
#[command(name = "bandmap", version, about = "CGRA loop-kernel mapper with bandwidth allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map one kernel and report the result.
    Map {
        /// DFG file in the node/edge text format.
        #[arg(long, conflicts_with = "cnkm")]
        dfg: Option<PathBuf>,
        /// Generate a convolution kernel, e.g. --cnkm 2,4.
        #[arg(long, value_name = "N,M")]
        cnkm: Option<String>,
        /// Architecture file (key=value lines); defaults apply when absent.
        #[arg(long)]
        arch: Option<PathBuf>,
        /// bandmap (multi-port broadcast) or baseline (single port).
        #[arg(long, default_value = "bandmap")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest interval to try; defaults to the lower bound plus eight.
        #[arg(long)]
        max_ii: Option<usize>,
        /// Write the JSON report here (stdout gets text either way).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a per-slot grid diagram here.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Run the seven-kernel suite in both modes and emit the comparison.
    Bench {
        #[arg(long, default_value = "default")]
        suite: String,
        #[arg(long)]
        arch: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_arch(path: &Option<PathBuf>) -> Result<ArchConfig, String> {
    match path {
        None => Ok(ArchConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read {}: {}", p.display(), e))?;
            parse_arch_config(&text).map_err(|e| format!("{}: {}", p.display(), e))
        }
    }
}

fn load_dfg(dfg: &Option<PathBuf>, cnkm: &Option<String>) -> Result<Dfg, String> {
    match (dfg, cnkm) {
        (Some(p), None) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read {}: {}", p.display(), e))?;
            parse_dfg(&text).map_err(|e| format!("{}: {}", p.display(), e))
        }
        (None, Some(spec)) => {
            let (n, m) = spec
                .split_once(',')
                .ok_or_else(|| format!("--cnkm expects N,M, got '{}'", spec))?;
            let n: usize = n.trim().parse().map_err(|_| format!("bad channel count '{}'", n))?;
            let m: usize = m.trim().parse().map_err(|_| format!("bad kernel count '{}'", m))?;
            gen_cnkm(n, m).map_err(|e| e.to_string())
        }
        _ => Err("exactly one of --dfg or --cnkm is required".to_string()),
    }
}

fn run_map(
    dfg: Option<PathBuf>,
    cnkm: Option<String>,
    arch: Option<PathBuf>,
    mode: String,
    seed: u64,
    max_ii: Option<usize>,
    out: Option<PathBuf>,
    dot: Option<PathBuf>,
) -> Result<bool, String> {
    let arch = load_arch(&arch)?;
    let dfg = load_dfg(&dfg, &cnkm)?;
    let mode = match mode.as_str() {
        "bandmap" => MapMode::Bandmap,
        "baseline" => MapMode::Baseline,
        other => return Err(format!("unknown mode '{}'", other)),
    };
    let lower = mii(&dfg, &arch).map_err(|e| e.to_string())?;
    let max_ii = max_ii.unwrap_or(lower + 8);
    let report = map_application(&dfg, &arch, mode, seed, max_ii).map_err(|e| e.to_string())?;

    print!("{}", emit_report(&report, &arch, ReportFormat::Text)?);
    if let Some(path) = out {
        let json = emit_report(&report, &arch, ReportFormat::Json)?;
        std::fs::write(&path, json).map_err(|e| format!("cannot write {}: {}", path.display(), e))?;
    }
    if let Some(path) = dot {
        match emit_report(&report, &arch, ReportFormat::Dot) {
            Ok(doc) => std::fs::write(&path, doc)
                .map_err(|e| format!("cannot write {}: {}", path.display(), e))?,
            Err(e) => eprintln!("skipping dot output: {}", e),
        }
    }
    Ok(report.mapping.is_some())
}

fn run_bench_cmd(
    suite: String,
    arch: Option<PathBuf>,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<bool, String> {
    if suite != "default" {
        return Err(format!("unknown suite '{}'", suite));
    }
    let arch = load_arch(&arch)?;
    let table = run_bench(&arch, seed)?;
    let json = serde_json::to_string_pretty(&table).map_err(|e| e.to_string())? + "\n";
    println!(
        "{:<6} {:>3} {:>3} {:>4} {:>8} {:>9} {:>8} {:>9} {:>10}",
        "kernel", "n", "m", "mii", "band_ii", "band_rpe", "base_ii", "base_rpe", "reduction"
    );
    for row in &table.kernels {
        let fmt_ii = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        let red = row
            .reduction_pct
            .map(|v| format!("{:.1}%", v))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<6} {:>3} {:>3} {:>4} {:>8} {:>9} {:>8} {:>9} {:>10}",
            row.kernel,
            row.n,
            row.m,
            row.mii,
            fmt_ii(row.bandmap_ii),
            row.bandmap_routing_pes,
            fmt_ii(row.baseline_ii),
            row.baseline_routing_pes,
            red
        );
    }
    if let Some(mean) = table.mean_reduction_pct {
        println!("mean routing-PE reduction: {:.1}%", mean);
    }
    if let Some(path) = out {
        std::fs::write(&path, json).map_err(|e| format!("cannot write {}: {}", path.display(), e))?;
    }
    let all_mapped = table
        .kernels
        .iter()
        .all(|r| r.bandmap_ii.is_some() && r.baseline_ii.is_some());
    Ok(all_mapped)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Map { dfg, cnkm, arch, mode, seed, max_ii, out, dot } => {
            run_map(dfg, cnkm, arch, mode, seed, max_ii, out, dot)
        }
        Command::Bench { suite, arch, seed, out } => run_bench_cmd(suite, arch, seed, out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
    }
}
