//! Command-line runner: `betlab run <manifest>` and `betlab list`.
//!
//! Exit codes: 0 when every bound is satisfied or vacuous with no failed
//! assumption, 2 when some bound is violated or an assumption fails, 1 on a
//! configuration or I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub mod manifest;
pub mod output;
pub mod runner;

pub use manifest::{Check, JobSpec, Manifest, SweepPoint, SweepSpec};
pub use output::{estimates_csv, format_float, results_csv, write_artifacts, RESULT_COLUMNS};
pub use runner::{execute, run_cell, CellResult};

use crate::error::{LabError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "BETLAB_OUT";

/// A manifest shipped with the binary.
#[derive(Debug, Clone, Copy)]
pub struct Suite {
    pub name: &'static str,
    /// Check ids the suite exercises.
    pub anchor: &'static str,
    pub description: &'static str,
    pub source: &'static str,
}

pub const SUITES: &[Suite] = &[
    Suite {
        name: "thm1_sweep",
        anchor: "thm1",
        description: "transition-error bound over a 5x5 (n, epsilon) grid",
        source: include_str!("../../manifests/thm1_sweep.json"),
    },
    Suite {
        name: "counterexamples",
        anchor: "prop1, cor2",
        description: "bets without predictive states; kernels without counterfactuals",
        source: include_str!("../../manifests/counterexamples.json"),
    },
    Suite {
        name: "thm4_margin",
        anchor: "thm4",
        description: "wrong-branch mass on large-margin fair bets",
        source: include_str!("../../manifests/thm4_margin.json"),
    },
    Suite {
        name: "thm5_grid",
        anchor: "thm5",
        description: "threshold-bet probability recovery across grid sizes",
        source: include_str!("../../manifests/thm5_grid.json"),
    },
    Suite {
        name: "thm6_psr",
        anchor: "thm6",
        description: "linear predictive-state operator recovery",
        source: include_str!("../../manifests/thm6_psr.json"),
    },
    Suite {
        name: "thm7_alias",
        anchor: "thm7",
        description: "aliasing lower bound on pair-averaged regret",
        source: include_str!("../../manifests/thm7_alias.json"),
    },
    Suite {
        name: "corollaries",
        anchor: "cor1, cor3, cor4, cor5",
        description: "do-kernel transfer, block and regime aliasing, memory recoding",
        source: include_str!("../../manifests/corollaries.json"),
    },
];

/// One line per bundled suite: `name  [anchor]  description`.
pub fn list_suites() -> String {
    let width = SUITES.iter().map(|s| s.name.len()).max().unwrap_or(0);
    SUITES
        .iter()
        .map(|s| format!("{:<width$}  [{}]  {}\n", s.name, s.anchor, s.description))
        .collect()
}

pub fn bundled(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

/// Reads a manifest from a path, falling back to a bundled suite name.
pub fn load_manifest(arg: &str) -> Result<Manifest> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Io(format!("{arg}: {e}")))?;
        return Manifest::from_json(&text);
    }
    match bundled(arg) {
        Some(s) => Manifest::from_json(s.source),
        None => Err(LabError::Config(format!("'{arg}' is neither a readable file nor a bundled suite"))),
    }
}

/// Outcome of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub rows: usize,
    /// `theorem` of every report that did not pass.
    pub failures: Vec<String>,
    pub cells: Vec<CellResult>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_VIOLATION
        }
    }
}

/// Runs `manifest` on a pool of `threads` workers (all cores when `None`)
/// and writes the artifacts to `out_dir`.
pub fn run_manifest(manifest: &Manifest, out_dir: &Path, threads: Option<usize>) -> Result<RunSummary> {
    manifest.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(LabError::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| LabError::Config(e.to_string()))?;
    let cells = pool.install(|| execute(manifest))?;
    write_artifacts(out_dir, manifest, &cells)?;
    let mut rows = 0;
    let mut failures = Vec::new();
    for cell in &cells {
        for r in &cell.reports {
            rows += 1;
            if !r.passes() {
                failures.push(format!("job {} cell {}: {}", cell.job, cell.cell, r.theorem));
            }
        }
    }
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        rows,
        failures,
        cells,
    })
}

#[derive(Debug, Parser)]
#[command(name = "betlab", version, about = "Run bound-verification suites over exact environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a manifest file or a bundled suite.
    Run {
        /// Path to a JSON manifest, or the name of a bundled suite.
        manifest: String,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory.
        #[arg(long, env = OUT_ENV)]
        out: Option<PathBuf>,
        /// Overrides the manifest seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List bundled suites.
    List,
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::List => {
            print!("{}", list_suites());
            EXIT_OK
        }
        Command::Run {
            manifest,
            jobs,
            out,
            seed,
        } => {
            let mut m = match load_manifest(&manifest) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("betlab: {e}");
                    return EXIT_CONFIG;
                }
            };
            if let Some(s) = seed {
                m.seed = s;
            }
            let out_dir = out
                .or_else(|| m.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("results"));
            match run_manifest(&m, &out_dir, jobs) {
                Ok(summary) => {
                    println!(
                        "{}: {} reports, {} failing, written to {}",
                        m.name,
                        summary.rows,
                        summary.failures.len(),
                        summary.out_dir.display()
                    );
                    for f in &summary.failures {
                        eprintln!("failed: {f}");
                    }
                    summary.exit_code()
                }
                Err(e) => {
                    eprintln!("betlab: {e}");
                    EXIT_CONFIG
                }
            }
        }
    }
}
