use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use freefield_cli::config::{self, RunConfig};
use freefield_cli::dump::{self, DumpTarget};
use freefield_cli::suites;

/// Exit status when a check fails.
const EXIT_FAIL: u8 = 1;
/// Exit status for configuration errors and unknown references.
const EXIT_CONFIG: u8 = 2;
/// Exit status when writing output fails.
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "freefield", version, about = "Verification suites and dumps for the lattice free field")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run verification suites and write JSON reports.
    Verify {
        /// Suite name, repeatable: propagators, algebra, bv, cohomology, net, factorization, comparison, all.
        #[arg(long = "suite")]
        suites: Vec<String>,
        /// Replace the retarded kernel with a corrupted copy (negative control).
        #[arg(long)]
        corrupt_kernel: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Write kernels (CSV), observables or cohomology tables (JSON).
    Dump {
        /// kernel:<kind>, observable:<phi:T[,X]|antifield:T[,X]|random:N>, cohomology:<full|bulk|interval:A-B|slab:T:HW>
        #[arg(long, required = true)]
        what: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML file of flat key = value settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["time1d", "mink2d"])]
    lattice: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides FREEFIELD_OUT and the config file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any config key, e.g. `--set mink2d_n_space=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn load(&self, mut extra: Vec<(String, String)>) -> Result<RunConfig, String> {
        let mut ov = Vec::new();
        for s in &self.sets {
            let (k, v) = s.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got `{s}`"))?;
            ov.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(l) = &self.lattice {
            ov.push(("lattice".into(), l.clone()));
        }
        if let Some(s) = self.seed {
            ov.push(("seed".into(), s.to_string()));
        }
        if let Some(o) = &self.out {
            ov.push(("out".into(), o.display().to_string()));
        }
        ov.append(&mut extra);
        config::parse_config(self.config.as_deref(), &ov).map_err(|e| e.to_string())
    }
}

fn verify(cfg: &RunConfig) -> ExitCode {
    let mut outcomes = Vec::new();
    for s in &cfg.suites {
        // suite names were validated with the config
        let o = suites::run_suite(s, cfg).expect("validated suite");
        for c in &o.criteria {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            println!("{tag} {:<13} {:>2} {} ({} checks)", o.suite, c.id, c.name, c.checks);
            for f in &c.failures {
                println!("     {f}");
            }
        }
        outcomes.push(o);
    }
    let summary = match suites::write_reports(&cfg.out, &outcomes) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot write reports to {}: {e}", cfg.out.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    for t in &cfg.dump {
        if let Some(code) = run_dump(cfg, t) {
            return code;
        }
    }
    let failed: usize = summary.suites.iter().flat_map(|s| &s.criteria).filter(|c| !c.passed).count();
    println!("reports written to {}", cfg.out.display());
    if summary.passed {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::from(EXIT_FAIL)
    }
}

fn run_dump(cfg: &RunConfig, what: &str) -> Option<ExitCode> {
    let target = match DumpTarget::parse(what) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return Some(ExitCode::from(EXIT_CONFIG));
        }
    };
    match dump::dump(cfg, &target, &cfg.out) {
        Ok(path) => {
            if matches!(target, DumpTarget::Cohomology(_)) {
                let table = std::fs::read_to_string(&path)
                    .ok()
                    .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok());
                if let Some(v) = table {
                    print!("{}", dump::render_table(&v));
                }
            }
            println!("wrote {}", path.display());
            None
        }
        Err(dump::DumpError::Core(e)) => {
            eprintln!("error: {e}");
            Some(ExitCode::from(EXIT_CONFIG))
        }
        Err(e) => {
            eprintln!("error: {e}");
            Some(ExitCode::from(EXIT_IO))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Verify {
            suites,
            corrupt_kernel,
            common,
        } => {
            let mut extra = Vec::new();
            if !suites.is_empty() {
                extra.push(("suites".to_string(), suites.join(",")));
            }
            if corrupt_kernel {
                extra.push(("corrupt_kernel".to_string(), "true".to_string()));
            }
            match common.load(extra) {
                Ok(cfg) => verify(&cfg),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Cmd::Dump { what, common } => {
            let cfg = match common.load(Vec::new()) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            for w in &what {
                if let Some(code) = run_dump(&cfg, w) {
                    return code;
                }
            }
            ExitCode::SUCCESS
        }
    }
}
