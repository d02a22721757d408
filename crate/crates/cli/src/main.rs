mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, Parser, Subcommand};

use commands::{BandsArgs, Command, CriticalArgs, Failure, GreenArgs, HypArgs, LapArgs, OscArgs, Table, WeylArgs};
use config::{default_manifest_path, merge, Manifest};

/// Band structure, critical points, Weyl points, lattice Green functions
/// and limiting absorption scans for periodic tight-binding models.
#[derive(Parser)]
#[command(name = "lapkit", version)]
struct Cli {
    /// TOML file whose keys mirror the long flags of the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Band energies on a uniform k grid.
    Bands(BandsArgs),
    /// Critical points of the bands.
    Critical(CriticalArgs),
    /// Weyl points with tilt and Jacobian data.
    Weyl(WeylArgs),
    /// One Green function value G(n, m; z).
    Green(GreenArgs),
    /// Oscillatory integrals I, I₁, I₂ over a range of t.
    OscBench(OscArgs),
    /// ε-scans and Hölder fit of truncated damped resolvents.
    LapScan(LapArgs),
    /// Hypothesis checks; exit 2 when one fails.
    CheckHypotheses(HypArgs),
    /// Re-run the configuration recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const SYNOPSIS: &str = "usage: lapkit [--config FILE] <bands|critical|weyl|green|osc-bench|lap-scan|check-hypotheses|replay> [FLAGS]";

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    eprintln!("{SYNOPSIS}");
    ExitCode::from(1)
}

fn threads(requested: Option<usize>) -> usize {
    let env = std::env::var("LAPKIT_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0);
    env.or(requested.filter(|&n| n > 0)).unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn write_csv(t: &Table, out: Option<&PathBuf>) -> std::io::Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    w.flush()
}

fn execute<T: Command>(mut args: T, config: Option<&PathBuf>) -> ExitCode {
    if let Some(c) = config {
        args = match merge(&args, Some(c)) {
            Ok(a) => a,
            Err(e) => return usage_error(&e),
        };
    }
    args.resolve();
    let n_threads = threads(args.common().threads);
    args.common_mut().threads = Some(n_threads);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n_threads).build_global() {
        eprintln!("warning: thread pool already configured: {e}");
    }
    let start = Instant::now();
    let outcome = args.run();
    let wall = start.elapsed().as_secs_f64();
    let out = args.common().out.clone();
    let code: u8 = match &outcome {
        Ok(t) => {
            if let Err(e) = write_csv(t, out.as_ref()) {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(1);
            }
            if t.verdict == Some(false) {
                2
            } else {
                0
            }
        }
        Err(Failure::Usage(m)) => return usage_error(m),
        Err(Failure::Compute(e)) => {
            eprintln!("error: {}", e);
            1
        }
    };
    let manifest_path = args.common().manifest.clone().or_else(|| out.as_deref().map(default_manifest_path));
    if let Some(p) = manifest_path {
        let mut cfg = args.clone();
        cfg.common_mut().manifest = None;
        let m = Manifest {
            tool: "lapkit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: T::NAME.into(),
            config: serde_json::to_value(&cfg).expect("configuration serializes"),
            threads: n_threads,
            wall_time_s: wall,
            output: out,
            exit_code: code as i32,
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        if let Err(e) = std::fs::write(&p, text + "\n") {
            eprintln!("error: cannot write manifest {}: {e}", p.display());
            return ExitCode::from(1);
        }
    }
    ExitCode::from(code)
}

fn replay_as<T: Command>(m: &Manifest, out: Option<PathBuf>) -> ExitCode {
    let mut args: T = match serde_json::from_value(m.config.clone()) {
        Ok(a) => a,
        Err(e) => return usage_error(&format!("manifest config does not match `{}`: {e}", m.subcommand)),
    };
    if let Some(o) = out {
        args.common_mut().out = Some(o);
    }
    args.common_mut().manifest = None;
    args.common_mut().threads = Some(m.threads);
    execute(args, None)
}

fn replay(path: &PathBuf, out: Option<PathBuf>) -> ExitCode {
    let m: Manifest = match std::fs::read_to_string(path).map_err(|e| e.to_string()).and_then(|s| serde_json::from_str(&s).map_err(|e| e.to_string())) {
        Ok(m) => m,
        Err(e) => return usage_error(&format!("cannot load manifest {}: {e}", path.display())),
    };
    match m.subcommand.as_str() {
        "bands" => replay_as::<BandsArgs>(&m, out),
        "critical" => replay_as::<CriticalArgs>(&m, out),
        "weyl" => replay_as::<WeylArgs>(&m, out),
        "green" => replay_as::<GreenArgs>(&m, out),
        "osc-bench" => replay_as::<OscArgs>(&m, out),
        "lap-scan" => replay_as::<LapArgs>(&m, out),
        "check-hypotheses" => replay_as::<HypArgs>(&m, out),
        other => usage_error(&format!("manifest names unknown subcommand `{other}`")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand || e.kind() == ErrorKind::MissingSubcommand {
                let _ = Cli::command().print_help();
            } else {
                eprintln!("{SYNOPSIS}");
            }
            return ExitCode::from(1);
        }
    };
    let cfg = cli.config.as_ref();
    match cli.cmd {
        Cmd::Bands(a) => execute(a, cfg),
        Cmd::Critical(a) => execute(a, cfg),
        Cmd::Weyl(a) => execute(a, cfg),
        Cmd::Green(a) => execute(a, cfg),
        Cmd::OscBench(a) => execute(a, cfg),
        Cmd::LapScan(a) => execute(a, cfg),
        Cmd::CheckHypotheses(a) => execute(a, cfg),
        Cmd::Replay { manifest, out } => replay(&manifest, out),
    }
}
