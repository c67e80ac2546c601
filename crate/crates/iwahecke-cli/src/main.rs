//! `verify`: run exact verification suites for the Iwahori-Hecke module
//! machinery at configured parameters and emit machine-readable reports.
//!
//! Parameters come from a TOML config file (see `--help` and the repository
//! README for the schema), from direct flags, or from `--default-params`,
//! which runs the four built-in parameter sets covering the
//! ramified/unramified x prime/non-prime residue field regimes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use iwahecke::verify::{self, RunConfig, RunReport};

#[derive(Parser, Debug)]
#[command(
    name = "verify",
    about = "Exact finite-depth verification suites for Iwahori-Hecke operators on the Bruhat-Tits tree",
    long_about = None
)]
struct Cli {
    /// TOML config file (keys: p, f, e, r, depth, horizon, modulus,
    /// eisenstein, suites, out, cache_dir, dump_dir, parallel).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Run the four built-in parameter sets (one per regime).
    #[arg(long, conflicts_with = "config")]
    default_params: bool,

    /// Residue characteristic (odd prime). Required unless --config or
    /// --default-params is given.
    #[arg(long)]
    p: Option<u32>,

    /// Residue degree f (q = p^f).
    #[arg(long)]
    f: Option<u32>,

    /// Ramification index e.
    #[arg(long)]
    e: Option<u32>,

    /// Character weight r, with 0 < r < q-1.
    #[arg(long)]
    r: Option<u64>,

    /// Suite ids to run (repeatable); defaults to all suites.
    #[arg(long = "suite")]
    suites: Vec<String>,

    /// Ball depth t.
    #[arg(long)]
    depth: Option<usize>,

    /// Kernel horizon m >= t.
    #[arg(long)]
    horizon: Option<usize>,

    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Dump operator matrices and kernel bases as CSV into this directory.
    #[arg(long = "dump-matrices")]
    dump_matrices: Option<PathBuf>,

    /// Operator-matrix cache directory (also settable via IWAHECKE_CACHE_DIR).
    #[arg(long)]
    cache_dir: Option<PathBuf>,

    /// Disable data-parallel execution.
    #[arg(long)]
    sequential: bool,
}

fn load_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str::<RunConfig>(&text)
            .map_err(|e| format!("config {}: {e}", path.display()))?
    } else {
        match (cli.p, cli.f, cli.e, cli.r) {
            (Some(p), Some(f), Some(e), Some(r)) => RunConfig::new(p, f, e, r),
            _ => {
                return Err(
                    "either --config, --default-params, or all of --p --f --e --r are required"
                        .into(),
                )
            }
        }
    };
    if let Some(d) = cli.depth {
        cfg.depth = d;
    }
    if let Some(h) = cli.horizon {
        cfg.horizon = Some(h);
    }
    if !cli.suites.is_empty() {
        cfg.suites = Some(cli.suites.clone());
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(dir) = &cli.dump_matrices {
        cfg.dump_dir = Some(dir.clone());
    }
    if let Some(dir) = &cli.cache_dir {
        cfg.cache_dir = Some(dir.clone());
    }
    if cli.sequential {
        cfg.parallel = false;
    }
    Ok(cfg)
}

fn run_one(cfg: &RunConfig) -> Result<RunReport, String> {
    let report = verify::run_config(cfg).map_err(|e| e.to_string())?;
    print!("{}", verify::summarize(&report));
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if cli.default_params {
        let mut configs = verify::default_parameter_sets();
        for cfg in &mut configs {
            if let Some(d) = cli.depth {
                cfg.depth = d;
            }
            if let Some(h) = cli.horizon {
                cfg.horizon = Some(h);
            }
            if !cli.suites.is_empty() {
                cfg.suites = Some(cli.suites.clone());
            }
            if cli.sequential {
                cfg.parallel = false;
            }
            if let Some(dir) = &cli.cache_dir {
                cfg.cache_dir = Some(dir.clone());
            }
            if let Some(out) = &cli.out {
                // One report file per parameter set.
                let name = format!(
                    "report-p{}f{}e{}r{}.json",
                    cfg.p, cfg.f, cfg.e, cfg.r
                );
                cfg.out = Some(out.join(name));
            }
        }
        // Distinct parameter sets are independent; run them concurrently.
        let results: Vec<Result<RunReport, String>> = std::thread::scope(|scope| {
            let handles: Vec<_> = configs
                .iter()
                .map(|cfg| scope.spawn(move || verify::run_config(cfg).map_err(|e| e.to_string())))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut failed = false;
        for (cfg, res) in configs.iter().zip(results) {
            match res {
                Ok(report) => {
                    print!("{}", verify::summarize(&report));
                    failed |= report.failed();
                }
                Err(e) => {
                    eprintln!(
                        "error at (p={}, f={}, e={}, r={}): {e}",
                        cfg.p, cfg.f, cfg.e, cfg.r
                    );
                    return ExitCode::from(2);
                }
            }
        }
        return if failed { ExitCode::from(1) } else { ExitCode::SUCCESS };
    }

    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_one(&cfg) {
        Ok(report) if report.failed() => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
