//! Batch experiments: generate traces, run every scheduler, oracle and
//! verifier on each, and collect exact per-trace rows.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::charging::check_charging;
use crate::invariants::{check_grq_transcript, check_rejection_timing};
use crate::model::{check_transcript, Trace, Transcript};
use crate::oracle::{
    enumerate_feasible, optimal_bounded_with, optimal_unbounded, verify_schedule, OfflineSchedule, OracleConfig,
    OracleError,
};
use crate::schedulers::{run_grq, run_naive_greedy};
use crate::weight::{parse_rational, Rational, Weight};
use crate::workbench::format::emit_trace;
use crate::workbench::generate::{gen_killer, gen_random, Burstiness, Draw, GenError, GeneratorParams};
use crate::workbench::search::competitive_ratio;
use crate::workbench::ser_opt_rational;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub generators: Vec<GeneratorSpec>,
    #[serde(default = "all_algorithms")]
    pub algorithms: Vec<AlgoName>,
    #[serde(default = "all_oracles")]
    pub oracles: Vec<OracleName>,
    /// Run invariant checks and the charging verifier.
    #[serde(default = "yes")]
    pub verify: bool,
    /// Enumerated adversary schedules checked per trace, besides OPT.
    #[serde(default)]
    pub adversaries: usize,
    /// Enumeration only runs on traces with at most this many packets.
    #[serde(default = "default_enumerate_max_n")]
    pub enumerate_max_n: usize,
    #[serde(default)]
    pub budget: Option<usize>,
    /// Where failing traces and their transcripts are written.
    #[serde(default)]
    pub counterexample_dir: Option<PathBuf>,
}

fn all_algorithms() -> Vec<AlgoName> {
    vec![AlgoName::Grq, AlgoName::Greedy]
}

fn all_oracles() -> Vec<OracleName> {
    vec![OracleName::Bounded, OracleName::Unbounded]
}

fn yes() -> bool {
    true
}

fn default_enumerate_max_n() -> usize {
    6
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoName {
    Grq,
    Greedy,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OracleName {
    Bounded,
    Unbounded,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Random {
        count: usize,
        seed: u64,
        n: usize,
        horizon: u32,
        buffer_size: u32,
        #[serde(default = "one")]
        weight_min: i64,
        #[serde(default = "sixteen")]
        weight_max: i64,
        #[serde(default = "one")]
        weight_den: i64,
        /// Defaults to the horizon.
        #[serde(default)]
        max_slack: Option<u32>,
        #[serde(default)]
        bursts: Option<u32>,
        /// Treat `n`, `horizon` and `buffer_size` as maxima and draw each
        /// trace's values from the trace seed.
        #[serde(default)]
        vary: bool,
    },
    Killer {
        buffer_size: u32,
        eps: String,
    },
}

fn one() -> i64 {
    1
}

fn sixteen() -> i64 {
    16
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("malformed config: {0}")]
    Config(String),
    #[error("generator {index}: {source}")]
    Generator { index: usize, source: GenError },
    #[error("trace {index}: {source}")]
    Oracle { index: usize, source: OracleError },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    fn eval_options(&self) -> EvalOptions {
        let mut oracle = OracleConfig::default();
        if let Some(b) = self.budget {
            oracle.max_states = b;
        }
        EvalOptions {
            grq: self.algorithms.contains(&AlgoName::Grq),
            greedy: self.algorithms.contains(&AlgoName::Greedy),
            bounded: self.oracles.contains(&OracleName::Bounded),
            unbounded: self.oracles.contains(&OracleName::Unbounded),
            verify: self.verify,
            adversaries: self.adversaries,
            enumerate_max_n: self.enumerate_max_n,
            oracle,
        }
    }
}

/// A generated trace with a human-readable origin.
#[derive(Clone, Debug)]
pub struct LabeledTrace {
    pub label: String,
    pub trace: Trace,
}

/// Expands every generator, in config order.
pub fn generate_traces(specs: &[GeneratorSpec]) -> Result<Vec<LabeledTrace>, ExperimentError> {
    let mut out = Vec::new();
    for (gi, spec) in specs.iter().enumerate() {
        let gen_err = |source| ExperimentError::Generator { index: gi, source };
        match spec {
            GeneratorSpec::Killer { buffer_size, eps } => {
                let e = parse_rational(eps).ok_or_else(|| ExperimentError::Config(format!("bad eps `{eps}`")))?;
                let trace = gen_killer(*buffer_size, e).map_err(gen_err)?;
                out.push(LabeledTrace {
                    label: format!("killer(B={buffer_size},eps={e})"),
                    trace,
                });
            }
            GeneratorSpec::Random {
                count,
                seed,
                n,
                horizon,
                buffer_size,
                weight_min,
                weight_max,
                weight_den,
                max_slack,
                bursts,
                vary,
            } => {
                for i in 0..*count {
                    let trace_seed = seed.wrapping_add(i as u64);
                    let mut params = GeneratorParams {
                        n: *n,
                        horizon: *horizon,
                        buffer_size: *buffer_size,
                        weight_min: *weight_min,
                        weight_max: *weight_max,
                        weight_den: *weight_den,
                        max_slack: max_slack.unwrap_or(*horizon),
                        burstiness: bursts.map_or(Burstiness::Uniform, |steps| Burstiness::Bursts { steps }),
                        seed: trace_seed,
                    };
                    if *vary {
                        params = vary_params(&params);
                    }
                    let trace = gen_random(&params).map_err(gen_err)?;
                    out.push(LabeledTrace {
                        label: format!("random(seed={trace_seed})"),
                        trace,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Draws `n` in `0..=n`, `horizon` in `1..=horizon` and `buffer_size` in
/// `1..=buffer_size` from a stream keyed by the trace seed.
pub fn vary_params(params: &GeneratorParams) -> GeneratorParams {
    let mut d = Draw::new(params.seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = d.range(0, params.n as u64) as usize;
    let horizon = d.range(1, params.horizon.max(1) as u64) as u32;
    let buffer_size = d.range(1, params.buffer_size.max(1) as u64) as u32;
    GeneratorParams {
        n,
        horizon,
        buffer_size,
        max_slack: params.max_slack.min(horizon),
        ..params.clone()
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub grq: bool,
    pub greedy: bool,
    pub bounded: bool,
    pub unbounded: bool,
    pub verify: bool,
    pub adversaries: usize,
    pub enumerate_max_n: usize,
    pub oracle: OracleConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            grq: true,
            greedy: true,
            bounded: true,
            unbounded: true,
            verify: true,
            adversaries: 0,
            enumerate_max_n: 6,
            oracle: OracleConfig::default(),
        }
    }
}

/// Everything computed for one trace.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub grq: Option<Transcript>,
    pub greedy: Option<Transcript>,
    pub bounded: Option<OfflineSchedule>,
    pub unbounded: Option<OfflineSchedule>,
    pub adversaries_checked: usize,
    pub violations: Vec<String>,
}

pub fn evaluate_trace(trace: &Trace, opts: &EvalOptions) -> Result<Evaluation, OracleError> {
    let mut violations = Vec::new();
    let need_grq = opts.grq || opts.verify;
    let grq = need_grq.then(|| run_grq(trace));
    let greedy = opts.greedy.then(|| run_naive_greedy(trace));
    let bounded = if opts.bounded {
        Some(optimal_bounded_with(trace, &opts.oracle)?)
    } else {
        None
    };
    let unbounded = opts.unbounded.then(|| optimal_unbounded(trace));
    let mut adversaries_checked = 0;

    if opts.verify {
        let grq = grq.as_ref().expect("GRQ runs when verifying");
        violations.extend(check_grq_transcript(trace, grq).iter().map(|v| format!("grq: {v}")));
        if let Some(g) = &greedy {
            violations.extend(check_transcript(trace, g).iter().map(|v| format!("greedy: {v}")));
        }
        for (name, sched) in [("bounded", &bounded), ("unbounded", &unbounded)] {
            let Some(s) = sched else { continue };
            match verify_schedule(trace, s) {
                Ok(v) if name == "unbounded" => {
                    // Capacity is deliberately ignored by this oracle.
                    violations.extend(
                        v.iter()
                            .filter(|x| !matches!(x, crate::oracle::ScheduleViolation::Overfull { .. }))
                            .map(|x| format!("{name} oracle: {x}")),
                    );
                }
                Ok(v) => violations.extend(v.iter().map(|x| format!("{name} oracle: {x}"))),
                Err(e) => violations.push(format!("{name} oracle: {e}")),
            }
        }
        if let Some(opt) = &bounded {
            if let Some(u) = &unbounded {
                if opt.value > u.value {
                    violations.push(format!("bounded OPT {} exceeds unbounded OPT {}", opt.value, u.value));
                }
            }
            for t in [Some(grq), greedy.as_ref()].into_iter().flatten() {
                if t.total > opt.value {
                    violations.push(format!("{} earns {} above OPT {}", t.algorithm, t.total, opt.value));
                }
            }
            violations.extend(check_adversary(trace, grq, opt, "opt"));
            adversaries_checked += 1;
        }
        if opts.adversaries > 0 && trace.len() <= opts.enumerate_max_n {
            for (i, adv) in enumerate_feasible(trace, opts.adversaries).iter().enumerate() {
                violations.extend(check_adversary(trace, grq, adv, &format!("adversary#{i}")));
                adversaries_checked += 1;
            }
        }
    }

    Ok(Evaluation {
        grq: if opts.grq { grq } else { None },
        greedy,
        bounded,
        unbounded,
        adversaries_checked,
        violations,
    })
}

fn check_adversary(trace: &Trace, grq: &Transcript, adv: &OfflineSchedule, name: &str) -> Vec<String> {
    let mut out: Vec<String> = check_rejection_timing(trace, grq, adv)
        .iter()
        .map(|v| format!("{name}: {v}"))
        .collect();
    let report = check_charging(trace, grq, adv);
    out.extend(report.failures().into_iter().map(|f| format!("{name} charging: {f}")));
    out
}

/// First 16 hex digits of the SHA-256 of the canonical trace text.
pub fn trace_digest(trace: &Trace) -> String {
    let digest = Sha256::digest(emit_trace(trace).as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub index: usize,
    pub generator: String,
    pub digest: String,
    pub packets: usize,
    pub buffer_size: u32,
    pub grq_value: Option<Weight>,
    pub greedy_value: Option<Weight>,
    pub opt_bounded: Option<Weight>,
    pub opt_unbounded: Option<Weight>,
    /// Bounded OPT over GRQ.
    #[serde(serialize_with = "ser_opt_rational")]
    pub ratio_grq: Option<Rational>,
    /// Bounded OPT over greedy.
    #[serde(serialize_with = "ser_opt_rational")]
    pub ratio_greedy: Option<Rational>,
    pub adversaries_checked: usize,
    pub status: RowStatus,
    pub violations: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportSummary {
    pub traces: usize,
    pub violations: usize,
    pub failed_traces: usize,
    #[serde(serialize_with = "ser_opt_rational")]
    pub max_ratio_grq: Option<Rational>,
    /// Floating point: an exact mean over thousands of ratios overflows.
    pub mean_ratio_grq: Option<f64>,
    #[serde(serialize_with = "ser_opt_rational")]
    pub max_ratio_greedy: Option<Rational>,
    /// Traces where a ratio was undefined (online value 0, OPT positive).
    pub unbounded_ratios: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub summary: ReportSummary,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.summary.violations == 0 && self.summary.unbounded_ratios == 0
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let traces = generate_traces(&config.generators)?;
    let opts = config.eval_options();
    let evals: Vec<Result<Evaluation, OracleError>> =
        traces.par_iter().map(|lt| evaluate_trace(&lt.trace, &opts)).collect();

    let mut rows = Vec::with_capacity(traces.len());
    for (index, (lt, eval)) in traces.iter().zip(evals).enumerate() {
        let eval = eval.map_err(|source| ExperimentError::Oracle { index, source })?;
        if !eval.violations.is_empty() {
            if let Some(dir) = &config.counterexample_dir {
                dump_counterexample(dir, index, lt, &eval)?;
            }
        }
        rows.push(make_row(index, lt, &eval));
    }
    let summary = summarize(&rows);
    Ok(ExperimentReport { rows, summary })
}

fn make_row(index: usize, lt: &LabeledTrace, eval: &Evaluation) -> ReportRow {
    let opt = eval.bounded.as_ref().map(|s| s.value);
    let grq = eval.grq.as_ref().map(|t| t.total);
    let greedy = eval.greedy.as_ref().map(|t| t.total);
    let ratio = |alg: Option<Weight>| opt.zip(alg).and_then(|(o, a)| competitive_ratio(o, a));
    ReportRow {
        index,
        generator: lt.label.clone(),
        digest: trace_digest(&lt.trace),
        packets: lt.trace.len(),
        buffer_size: lt.trace.buffer_size(),
        grq_value: grq,
        greedy_value: greedy,
        opt_bounded: opt,
        opt_unbounded: eval.unbounded.as_ref().map(|s| s.value),
        ratio_grq: ratio(grq),
        ratio_greedy: ratio(greedy),
        adversaries_checked: eval.adversaries_checked,
        status: if eval.violations.is_empty() {
            RowStatus::Pass
        } else {
            RowStatus::Fail
        },
        violations: eval.violations.join(" | "),
    }
}

fn summarize(rows: &[ReportRow]) -> ReportSummary {
    let mut unbounded_ratios = 0;
    let mut grq_ratios = Vec::new();
    let mut greedy_ratios = Vec::new();
    for r in rows {
        let opt_positive = r.opt_bounded.is_some_and(|o| !o.is_zero());
        for (value, ratio, sink) in [
            (r.grq_value, r.ratio_grq, &mut grq_ratios),
            (r.greedy_value, r.ratio_greedy, &mut greedy_ratios),
        ] {
            match ratio {
                Some(x) => sink.push(x),
                None if value.is_some_and(|v| v.is_zero()) && opt_positive => unbounded_ratios += 1,
                None => {}
            }
        }
    }
    let mean = (!grq_ratios.is_empty())
        .then(|| grq_ratios.iter().map(|r| Weight(*r).to_f64()).sum::<f64>() / grq_ratios.len() as f64);
    ReportSummary {
        traces: rows.len(),
        violations: rows.iter().filter(|r| r.status == RowStatus::Fail).map(|r| r.violations.split(" | ").count()).sum(),
        failed_traces: rows.iter().filter(|r| r.status == RowStatus::Fail).count(),
        max_ratio_grq: grq_ratios.iter().max().copied(),
        mean_ratio_grq: mean,
        max_ratio_greedy: greedy_ratios.iter().max().copied(),
        unbounded_ratios,
    }
}

/// Writes `trace-<index>.qtrace` plus a JSON dump of transcripts, oracle
/// schedules and violations.
pub fn dump_counterexample(dir: &Path, index: usize, lt: &LabeledTrace, eval: &Evaluation) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("trace-{index}.qtrace")), emit_trace(&lt.trace))?;
    let dump = serde_json::json!({
        "index": index,
        "generator": lt.label,
        "violations": eval.violations,
        "grq": eval.grq,
        "greedy": eval.greedy,
        "opt_bounded": eval.bounded,
        "opt_unbounded": eval.unbounded,
    });
    fs::write(
        dir.join(format!("trace-{index}.json")),
        serde_json::to_string_pretty(&dump).expect("serializable"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_generator_list_gives_empty_report() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        let report = run_experiment(&cfg).unwrap();
        assert!(report.rows.is_empty());
        assert!(report.passed());
        assert_eq!(report.summary.max_ratio_grq, None);
    }

    #[test]
    fn malformed_config_is_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("[[generators]]\nkind = \"nope\"\n"),
            Err(ExperimentError::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml("bogus = 1\n"),
            Err(ExperimentError::Config(_))
        ));
    }

    #[test]
    fn killer_row_reports_greedy_ratio() {
        let cfg = ExperimentConfig::from_toml(
            "algorithms = [\"greedy\", \"grq\"]\n[[generators]]\nkind = \"killer\"\nbuffer_size = 10\neps = \"1/10\"\n",
        )
        .unwrap();
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!(row.ratio_greedy, Some(Rational::new(91, 10)));
        assert_eq!(row.ratio_grq, Some(Rational::from_integer(1)));
        assert_eq!(row.status, RowStatus::Pass);
    }

    #[test]
    fn budget_overflow_is_an_error() {
        let cfg = ExperimentConfig::from_toml(
            "budget = 1\n[[generators]]\nkind = \"killer\"\nbuffer_size = 3\neps = \"1/4\"\n",
        )
        .unwrap();
        assert!(matches!(run_experiment(&cfg), Err(ExperimentError::Oracle { index: 0, .. })));
    }

    #[test]
    fn failing_trace_is_dumped() {
        let dir = tempfile::tempdir().unwrap();
        let lt = LabeledTrace {
            label: "x".into(),
            trace: gen_killer(2, Rational::new(1, 2)).unwrap(),
        };
        let mut eval = evaluate_trace(&lt.trace, &EvalOptions::default()).unwrap();
        eval.violations.push("synthetic".into());
        dump_counterexample(dir.path(), 4, &lt, &eval).unwrap();
        let text = fs::read_to_string(dir.path().join("trace-4.qtrace")).unwrap();
        assert!(text.starts_with("# qtrace v1"));
        let json = fs::read_to_string(dir.path().join("trace-4.json")).unwrap();
        assert!(json.contains("synthetic"));
    }

    #[test]
    fn vary_stays_within_maxima() {
        for seed in 0..100 {
            let p = vary_params(&GeneratorParams {
                n: 8,
                horizon: 6,
                buffer_size: 3,
                seed,
                ..GeneratorParams::default()
            });
            assert!(p.n <= 8 && (1..=6).contains(&p.horizon) && (1..=3).contains(&p.buffer_size));
        }
    }
}
