use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use grq::charging::{check_charging, ChargingReport};
use grq::invariants::check_grq_transcript;
use grq::model::{check_transcript, Trace, Transcript};
use grq::oracle::{enumerate_feasible, optimal_bounded_with, optimal_unbounded, verify_schedule, OracleConfig};
use grq::schedulers::{run_grq, run_naive_greedy};
use grq::weight::{fmt_fraction, parse_rational};
use grq::workbench::experiment::{run_experiment, ExperimentConfig};
use grq::workbench::format::{emit_trace, parse_trace};
use grq::workbench::generate::{gen_killer, gen_random, Burstiness, GeneratorParams};
use grq::workbench::search::adversarial_search;

#[derive(Parser)]
#[command(name = "grq", version, about = "Bounded-buffer deadline packet scheduling workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Grq,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Bounded,
    Unbounded,
}

#[derive(Clone, Copy, ValueEnum)]
enum Adversary {
    /// The bounded offline optimum.
    Opt,
    /// Every feasible schedule, up to `--limit`.
    Enumerate,
}

#[derive(Subcommand)]
enum Command {
    /// Run an online algorithm on a trace.
    Run {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "grq")]
        algo: Algo,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute an exact offline schedule.
    Oracle {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "bounded")]
        kind: OracleKind,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and verify the charge map of GRQ against adversary schedules.
    Charge {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "opt")]
        adversary: Adversary,
        #[arg(long, default_value_t = 50)]
        limit: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a trace.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Search for traces with a large OPT / GRQ ratio.
    Search {
        #[command(flatten)]
        shape: Shape,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        /// Write the worst trace found here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch experiment described by a TOML config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// Weight-1 packets that expire at once plus lighter long-lived ones.
    Killer {
        #[arg(long)]
        b: u32,
        #[arg(long)]
        eps: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Random {
        #[command(flatten)]
        shape: Shape,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Shape {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    horizon: u32,
    #[arg(long, default_value_t = 2)]
    b: u32,
    #[arg(long, default_value_t = 1)]
    weight_min: i64,
    #[arg(long, default_value_t = 16)]
    weight_max: i64,
    #[arg(long, default_value_t = 1)]
    weight_den: i64,
    /// Maximum deadline slack; defaults to the horizon.
    #[arg(long)]
    max_slack: Option<u32>,
    /// Concentrate releases on this many steps.
    #[arg(long)]
    bursts: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Shape {
    fn params(&self) -> GeneratorParams {
        GeneratorParams {
            n: self.n,
            horizon: self.horizon,
            buffer_size: self.b,
            weight_min: self.weight_min,
            weight_max: self.weight_max,
            weight_den: self.weight_den,
            max_slack: self.max_slack.unwrap_or(self.horizon),
            burstiness: self.bursts.map_or(Burstiness::Uniform, |steps| Burstiness::Bursts { steps }),
            seed: self.seed,
        }
    }
}

enum Failure {
    /// A check failed; exit 1.
    Violation,
    /// Bad input or configuration; exit 2.
    Usage(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read_trace(path: &Path) -> Result<Trace, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_trace(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn csv_rows<T: Serialize>(rows: &[T]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes)?)
}

fn report_violations(lines: &[String]) -> Result<(), Failure> {
    if lines.is_empty() {
        return Ok(());
    }
    for l in lines {
        eprintln!("violation: {l}");
    }
    Err(Failure::Violation)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            trace,
            algo,
            format,
            out,
        } => {
            let trace = read_trace(&trace)?;
            let (transcript, violations) = match algo {
                Algo::Grq => {
                    let t = run_grq(&trace);
                    let v: Vec<String> = check_grq_transcript(&trace, &t).iter().map(ToString::to_string).collect();
                    (t, v)
                }
                Algo::Greedy => {
                    let t = run_naive_greedy(&trace);
                    let v: Vec<String> = check_transcript(&trace, &t).iter().map(ToString::to_string).collect();
                    (t, v)
                }
            };
            let text = match format {
                Format::Json => to_json(&transcript),
                Format::Csv => transcript_csv(&transcript)?,
            };
            write_out(&out, &text)?;
            eprintln!("total={}", transcript.total);
            report_violations(&violations)
        }
        Command::Oracle {
            trace,
            kind,
            budget,
            format,
            out,
        } => {
            let trace = read_trace(&trace)?;
            let mut cfg = OracleConfig::default();
            if let Some(b) = budget {
                cfg.max_states = b;
            }
            let schedule = match kind {
                OracleKind::Bounded => optimal_bounded_with(&trace, &cfg)?,
                OracleKind::Unbounded => optimal_unbounded(&trace),
            };
            let text = match format {
                Format::Json => to_json(&schedule),
                Format::Csv => {
                    #[derive(Serialize)]
                    struct Row {
                        time: u32,
                        packet: u64,
                        weight: grq::Weight,
                    }
                    let index = trace.packet_index();
                    let rows: Vec<Row> = schedule
                        .sends()
                        .into_iter()
                        .map(|(time, packet)| Row {
                            time,
                            packet,
                            weight: index[&packet].weight,
                        })
                        .collect();
                    csv_rows(&rows)?
                }
            };
            write_out(&out, &text)?;
            eprintln!("value={}", schedule.value);
            let mut violations = verify_schedule(&trace, &schedule)?;
            if matches!(kind, OracleKind::Unbounded) {
                violations.retain(|v| !matches!(v, grq::oracle::ScheduleViolation::Overfull { .. }));
            }
            report_violations(&violations.iter().map(ToString::to_string).collect::<Vec<_>>())
        }
        Command::Charge {
            trace,
            adversary,
            limit,
            format,
            out,
        } => {
            let trace = read_trace(&trace)?;
            let grq_run = run_grq(&trace);
            let schedules = match adversary {
                Adversary::Opt => vec![optimal_bounded_with(&trace, &OracleConfig::default())?],
                Adversary::Enumerate => enumerate_feasible(&trace, limit),
            };
            let reports: Vec<ChargingReport> = schedules.iter().map(|s| check_charging(&trace, &grq_run, s)).collect();
            let text = match format {
                Format::Json => to_json(&reports),
                Format::Csv => {
                    #[derive(Serialize)]
                    struct Row {
                        adversary: usize,
                        adversary_value: grq::Weight,
                        grq_value: grq::Weight,
                        s: usize,
                        d: usize,
                        f: usize,
                        passed: bool,
                        failures: String,
                    }
                    let rows: Vec<Row> = reports
                        .iter()
                        .enumerate()
                        .map(|(i, r)| Row {
                            adversary: i,
                            adversary_value: r.adversary_value,
                            grq_value: r.grq_value,
                            s: r.s_charges,
                            d: r.d_charges,
                            f: r.f_charges,
                            passed: r.passed(),
                            failures: r.failures().join(" | "),
                        })
                        .collect();
                    csv_rows(&rows)?
                }
            };
            write_out(&out, &text)?;
            let failures: Vec<String> = reports
                .iter()
                .enumerate()
                .flat_map(|(i, r)| r.failures().into_iter().map(move |f| format!("adversary {i}: {f}")))
                .collect();
            eprintln!("checked {} adversary schedule(s)", reports.len());
            report_violations(&failures)
        }
        Command::Gen { kind } => match kind {
            GenKind::Killer { b, eps, out } => {
                let eps = parse_rational(&eps).ok_or_else(|| Failure::Usage(format!("bad eps `{eps}`")))?;
                write_out(&out, &emit_trace(&gen_killer(b, eps)?))
            }
            GenKind::Random { shape, out } => write_out(&out, &emit_trace(&gen_random(&shape.params())?)),
        },
        Command::Search { shape, iters, out } => {
            let outcome = adversarial_search(&shape.params(), iters, &OracleConfig::default())?;
            if let Some(p) = &out {
                fs::write(p, emit_trace(&outcome.worst))?;
            }
            let ratio = outcome.worst_ratio.as_ref().map_or("unbounded".to_string(), fmt_fraction);
            println!(
                "worst_ratio={ratio} evaluated={} skipped={}",
                outcome.evaluated, outcome.skipped
            );
            if out.is_none() {
                print!("{}", emit_trace(&outcome.worst));
            }
            if outcome.exceeds(2) {
                eprintln!("violation: ratio above 2");
                return Err(Failure::Violation);
            }
            Ok(())
        }
        Command::Experiment { config, format, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            let text = match format {
                Format::Json => to_json(&report),
                Format::Csv => report.to_csv()?,
            };
            write_out(&out, &text)?;
            let s = &report.summary;
            let show = |r: &Option<grq::weight::Rational>| r.as_ref().map_or("-".to_string(), fmt_fraction);
            eprintln!(
                "traces={} failed={} max_ratio_grq={} mean_ratio_grq={:.4} max_ratio_greedy={}",
                s.traces,
                s.failed_traces,
                show(&s.max_ratio_grq),
                s.mean_ratio_grq.unwrap_or(f64::NAN),
                show(&s.max_ratio_greedy)
            );
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Violation)
            }
        }
    }
}

fn transcript_csv(t: &Transcript) -> Result<String, Failure> {
    #[derive(Serialize)]
    struct Row {
        time: u32,
        arrivals: String,
        buffer: String,
        rejected: String,
        transmitted: String,
        weight: grq::Weight,
    }
    let join = |ids: Vec<String>| ids.join(" ");
    let rows: Vec<Row> = t
        .steps
        .iter()
        .map(|s| Row {
            time: s.time,
            arrivals: join(s.arrivals.iter().map(ToString::to_string).collect()),
            buffer: join(
                s.buffer
                    .slots
                    .iter()
                    .map(|p| p.as_ref().map_or("-".to_string(), |p| p.id.to_string()))
                    .collect(),
            ),
            rejected: join(
                s.rejected
                    .iter()
                    .map(|r| format!("{}:{}", r.packet, serde_json::to_value(r.cause).unwrap().as_str().unwrap()))
                    .collect(),
            ),
            transmitted: s.transmitted.as_ref().map_or("idle".to_string(), |p| p.id.to_string()),
            weight: s.transmitted_weight(),
        })
        .collect();
    csv_rows(&rows)
}
