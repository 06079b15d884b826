//! `coshflows` command-line runner.
//!
//! Exit codes: 0 all checks passed, 1 some check failed or an I/O error,
//! 2 invalid config (nothing is written), 3 numerical failure or time budget
//! exceeded (`failure.json` is written).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use coshflows::experiments::{self, sha256_hex, ExperimentOutput};
use coshflows::fixtures::{self, Fixture};
use coshflows::io::GraphFile;
use coshflows::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "coshflows", version, about = "Cosh gradient-flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory; defaults to the config's `output_dir` or `out/<config name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled fixtures.
    Fixtures {
        /// Write graph and reaction fixtures as JSON files into this directory.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Run the fast invariant suite.
    Check,
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("COSHFLOWS_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: COSHFLOWS_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Fixtures { export } => list_fixtures(export),
        Command::Check => check(),
    }
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::NumericalFailure(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

/// Writes through a temporary file and a rename so readers never see partial files.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, dir.join(name))
}

fn output_dir(config: &Path, cfg_dir: Option<&str>, out: Option<PathBuf>) -> PathBuf {
    if let Some(o) = out {
        return o;
    }
    if let Some(d) = cfg_dir {
        return config.parent().unwrap_or(Path::new(".")).join(d);
    }
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    PathBuf::from("out").join(stem)
}

fn print_checks(out: &ExperimentOutput) {
    for c in &out.checks {
        println!("{} {}: {:e} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
    }
}

fn run(config: &Path, out: Option<PathBuf>) -> ExitCode {
    let prepared = match experiments::prepare(config) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_for(&e));
        }
    };
    let dir = output_dir(config, prepared.config.output_dir.as_deref(), out);
    let hash = prepared.config_hash.clone();
    let kind = prepared.config.kind.clone();
    let start = Instant::now();
    let result = prepared.execute();
    let wall = start.elapsed().as_secs_f64();
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = |files: Vec<serde_json::Value>, status: &str| {
        json!({
            "config": config.display().to_string(),
            "config_sha256": hash,
            "kind": kind,
            "library_version": coshflows::VERSION,
            "status": status,
            "unix_time": stamp,
            "wall_clock_s": wall,
            "threads": rayon::current_num_threads(),
            "files": files,
        })
    };
    match result {
        Ok(output) => {
            let mut files = Vec::new();
            let mut payload: Vec<(String, Vec<u8>)> = output
                .tables
                .iter()
                .chain(std::iter::once(&output.checks_table()))
                .map(|t| (format!("{}.csv", t.name), t.to_csv().into_bytes()))
                .collect();
            let report = serde_json::to_string_pretty(&output.report()).expect("report serialises") + "\n";
            payload.push(("report.json".into(), report.into_bytes()));
            let written = fs::create_dir_all(&dir).and_then(|_| {
                for (name, bytes) in &payload {
                    write_atomic(&dir, name, bytes)?;
                    files.push(json!({ "name": name, "sha256": sha256_hex(bytes), "bytes": bytes.len() }));
                }
                let status = if output.passed() { "passed" } else { "failed" };
                let m = serde_json::to_string_pretty(&manifest(files, status)).expect("manifest serialises") + "\n";
                write_atomic(&dir, "manifest.json", m.as_bytes())
            });
            if let Err(e) = written {
                eprintln!("error: writing {}: {e}", dir.display());
                return ExitCode::from(1);
            }
            print_checks(&output);
            println!(
                "{} in {wall:.2}s, artifacts in {}",
                if output.passed() { "passed" } else { "FAILED" },
                dir.display()
            );
            ExitCode::from(if output.passed() { 0 } else { 1 })
        }
        Err(failure) => {
            let code = exit_for(&failure.error);
            eprintln!("error: {}", failure.error);
            if code == 3 {
                let body = json!({ "error": failure.error.to_string(), "partial": failure.partial.report() });
                let text = serde_json::to_string_pretty(&body).expect("failure serialises") + "\n";
                let written = fs::create_dir_all(&dir).and_then(|_| {
                    write_atomic(&dir, "failure.json", text.as_bytes())?;
                    let files = vec![
                        json!({ "name": "failure.json", "sha256": sha256_hex(text.as_bytes()), "bytes": text.len() }),
                    ];
                    let m = serde_json::to_string_pretty(&manifest(files, "numerical_failure"))
                        .expect("manifest serialises")
                        + "\n";
                    write_atomic(&dir, "manifest.json", m.as_bytes())
                });
                if let Err(e) = written {
                    eprintln!("error: writing {}: {e}", dir.display());
                }
                print_checks(&failure.partial);
            }
            ExitCode::from(code)
        }
    }
}

fn list_fixtures(export: Option<PathBuf>) -> ExitCode {
    for f in fixtures::catalog() {
        println!("{:<18} {:<13} {}", f.name, f.kind, f.description);
    }
    let Some(dir) = export else { return ExitCode::SUCCESS };
    let res = fs::create_dir_all(&dir).and_then(|_| {
        for f in fixtures::catalog() {
            let text = match fixtures::load(f.name).expect("catalog fixtures load") {
                Fixture::Graph(g) => GraphFile::from_graph(&g, None).to_json(),
                Fixture::TwoTerminal(n) => GraphFile::from_graph(&n.graph, Some((n.a, n.b))).to_json(),
                Fixture::Reactions(r) => r.to_json(),
                // defined by functions, not data
                Fixture::DoubleWell(_) | Fixture::Membrane(_) => continue,
            };
            write_atomic(&dir, &format!("{}.json", f.name), (text + "\n").as_bytes())?;
        }
        Ok(())
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: exporting to {}: {e}", dir.display());
            ExitCode::from(1)
        }
    }
}

/// Small versions of the fast experiments.
const CHECK_SUITE: [&str; 7] = [
    r#"{"kind":"legendre","params":{"samples":2000,"seed":1}}"#,
    r#"{"kind":"contraction","params":{"instances":200,"seed":2}}"#,
    r#"{"kind":"cell","params":{"n_list":[50,100,200],"final_tol":1e-2,"law_samples":5,"seed":3}}"#,
    r#"{"kind":"tilt","params":{"graph":"fixture:five_node_random","samples":20,"seed":5}}"#,
    r#"{"kind":"reduce","params":{"random_networks":10,"seed":6}}"#,
    r#"{"kind":"rre","params":{}}"#,
    r#"{"kind":"gillespie","params":{"graph":"fixture:two_node","n_particles":2000,"t_end":20,"seed":12}}"#,
];

fn check() -> ExitCode {
    let mut ok = true;
    for text in CHECK_SUITE {
        let out = experiments::prepare_str(text, Path::new(".")).and_then(|p| p.execute().map_err(|f| f.error));
        match out {
            Ok(o) => {
                println!("[{}]", o.kind);
                print_checks(&o);
                ok &= o.passed();
            }
            Err(e) => {
                eprintln!("error: {e}");
                ok = false;
            }
        }
    }
    println!("{}", if ok { "all invariants hold" } else { "invariant violations found" });
    ExitCode::from(if ok { 0 } else { 1 })
}
