use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use srpsim::adversary::{catalog, AdversaryClass};
use srpsim::harness::{self, CampaignSpec, EXIT_PASS, EXIT_USAGE, EXIT_VIOLATION};
use srpsim::engine;
use srpsim::scenario::{load_scenario, Expectations, Quantifier};
use srpsim::srp::Mode;
use srpsim::trace::Trace;
use srpsim::verifier::verdict_all;

#[derive(Parser)]
#[command(name = "srpsim", version, about = "Secure route discovery simulator and property checker")]
struct Cli {
    /// Directory for default output files.
    #[arg(long, global = true, env = "SRPSIM_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Independent,
    Arbitrary,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Basic,
    Augmented,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and check its expectations.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Trace output (JSON lines). Defaults to <out-dir>/<name>-<seed>.trace.jsonl.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Verdict output (JSON). Defaults to <out-dir>/<name>-<seed>.verdicts.json.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        /// Restrict every adversary to the independent class and expect
        /// loop-free, fresh routes instead of the file's expectations.
        #[arg(long)]
        demote: bool,
    },
    /// Run a seeded campaign of random topologies with fuzzed adversaries.
    Fuzz {
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, value_enum, default_value = "independent")]
        class: ClassArg,
        #[arg(long, value_enum, default_value = "basic")]
        mode: ModeArg,
        #[arg(long, default_value_t = 8)]
        max_nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-verify a stored trace against a scenario.
    Check { trace: PathBuf, scenario: PathBuf },
    /// Print the attack catalog.
    ListAttacks,
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<i32, String> {
    match cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            trace,
            verdicts,
            demote,
        } => {
            let mut sc = load_scenario(&scenario).map_err(|e| e.to_string())?;
            if demote {
                sc = engine::demote(&sc);
                sc.file.name.push_str("-demoted");
                sc.file.expect = Expectations {
                    loop_free: Some(Quantifier::All),
                    fresh: Some(Quantifier::All),
                    ..Default::default()
                };
            }
            let seed = seed.unwrap_or(sc.config.seed);
            let (out, report) = harness::run_scenario(&sc, seed).map_err(|e| e.to_string())?;
            let stem = format!("{}-{seed}", sc.name());
            let trace = trace.unwrap_or_else(|| cli.out_dir.join(format!("{stem}.trace.jsonl")));
            let verdicts = verdicts.unwrap_or_else(|| cli.out_dir.join(format!("{stem}.verdicts.json")));
            write(&trace, &out.trace.to_jsonl())?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            write(&verdicts, &json)?;
            let s = &report.summary;
            println!(
                "{} seed={seed} digest={} routes={} loop_free={} fresh={} weakly_fresh={} accurate={}/{}",
                report.scenario,
                report.digest,
                s.routes,
                s.loop_free,
                s.fresh,
                s.weakly_fresh,
                s.accurate,
                s.accuracy_evaluated
            );
            for v in &report.violations {
                println!("violation: {v}");
            }
            Ok(report.exit_code())
        }
        Cmd::Fuzz {
            runs,
            class,
            mode,
            max_nodes,
            seed,
        } => {
            if !(3..=64).contains(&max_nodes) {
                return Err("--max-nodes must be between 3 and 64".into());
            }
            let spec = CampaignSpec {
                runs,
                class: match class {
                    ClassArg::Independent => AdversaryClass::Independent,
                    ClassArg::Arbitrary => AdversaryClass::Arbitrary,
                },
                mode: match mode {
                    ModeArg::Basic => Mode::Basic,
                    ModeArg::Augmented => Mode::Augmented,
                },
                max_nodes,
                seed,
            };
            let report = harness::fuzz_campaign(&spec);
            let path = cli.out_dir.join(format!(
                "campaign-{}-{}-{seed}.json",
                spec.class,
                serde_json::to_value(spec.mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
            ));
            let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            write(&path, &json)?;
            println!(
                "runs={} with_routes={} routes={} loops={} stale={} not_weakly_fresh={} inaccurate={}",
                runs,
                report.runs_with_routes,
                report.summary.routes,
                report.loop_violations,
                report.freshness_violations,
                report.weak_freshness_violations,
                report.accuracy_violations
            );
            for f in report.failing.iter().take(20) {
                println!("failing run {} seed={:#018x}: {}", f.index, f.seed, f.violations.join("; "));
            }
            println!("report: {}", path.display());
            Ok(if report.passed() { EXIT_PASS } else { EXIT_VIOLATION })
        }
        Cmd::Check { trace, scenario } => {
            let sc = load_scenario(&scenario).map_err(|e| e.to_string())?;
            let text = fs::read_to_string(&trace).map_err(|e| format!("{}: {e}", trace.display()))?;
            let tr = Trace::from_jsonl(&text).map_err(|e| format!("{}: {e}", trace.display()))?;
            let mut violations = Vec::new();
            if let Err(e) = tr.check_causality() {
                violations.push(format!("trace: {e}"));
            }
            let verdicts =
                verdict_all(&tr, &sc.topology, sc.metrics.as_ref(), &sc.faulty()).map_err(|e| e.to_string())?;
            violations.extend(harness::check_expectations(sc.expect(), &verdicts));
            println!("{} routes={} digest={:016x}", sc.name(), verdicts.len(), tr.digest());
            for v in &violations {
                println!("violation: {v}");
            }
            Ok(if violations.is_empty() { EXIT_PASS } else { EXIT_VIOLATION })
        }
        Cmd::ListAttacks => {
            for e in catalog() {
                println!(
                    "{:<36} {:<15} [{}] {}",
                    e.name,
                    serde_json::to_value(e.requirement).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                    e.params.join(", "),
                    e.summary
                );
            }
            Ok(EXIT_PASS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}
