//! Plumbing behind the `rsc` command-line tool: configuration, result
//! records, dataset loading and parameter sweeps.

pub mod data;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{invalid, Error, Result};
use crate::learners::{learn_rectangle, learn_threshold, threshold_sample_size, LabeledSample};
use crate::quasiconcave::{qc_optimize, qc_target_size, QcInstance};
use crate::rsc::{ascending, privacy_cost, AccountingBound, SliceComputation};
use crate::sync::{audit_call_count, check_sync_law};
use crate::treelog::{ipp_with, is_interior, log_star_universe, IppConfig, Universe};

pub use data::{load_dataset, parse_dataset, Family, PlantedBox};
pub use sweep::{
    minimal_size, run_sweep, MinimalSize, SweepPoint, SweepProblem, SweepRow, SweepSpec,
};

/// Version of the [`ResultRecord`] JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Ipp,
    LearnThreshold,
    LearnRect,
    QcOpt,
    AuditSync,
    AuditSim,
    Sweep,
    Accounting,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Ipp => "ipp",
            CommandKind::LearnThreshold => "learn-threshold",
            CommandKind::LearnRect => "learn-rect",
            CommandKind::QcOpt => "qc-opt",
            CommandKind::AuditSync => "audit-sync",
            CommandKind::AuditSim => "audit-sim",
            CommandKind::Sweep => "sweep",
            CommandKind::Accounting => "accounting",
        }
    }
}

/// Everything one run needs. Fields a command does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub bits: u32,
    pub trials: u64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Target error for threshold learning.
    pub xi: f64,
    /// Failure probability for threshold learning.
    pub beta: f64,
    /// Sweep: scaling constant of the cumulative solver; qc-opt uses it too.
    pub constant_c: f64,
    pub tau: usize,
    pub k: usize,
    pub delta_hat: f64,
    pub applications: u64,
    /// audit-sim: size of the dataset `{1..n}`.
    pub sim_n: u64,
    /// learn-rect: expected point dimension, checked against the input.
    pub dims: Option<usize>,
    pub sweep_problem: SweepProblem,
    pub sweep_values: Vec<u32>,
    pub target: f64,
    /// Sweep table destination; defaults to the output path with `.csv`.
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for `command`: `eps = 1`, `delta = 1e-3`, seed 0, `L = 32`.
    pub fn new(command: CommandKind) -> Self {
        Self {
            command,
            epsilon: 1.0,
            delta: 1e-3,
            seed: 0,
            bits: 32,
            trials: 1000,
            input: None,
            output: None,
            xi: 0.1,
            beta: 0.1,
            constant_c: crate::quasiconcave::DEFAULT_SCALE_CONSTANT,
            tau: 16,
            k: 1,
            delta_hat: 1e-6,
            applications: 1,
            sim_n: 300,
            dims: None,
            sweep_problem: SweepProblem::Ipp,
            sweep_values: vec![8, 16, 32, 64],
            target: 0.9,
            csv: None,
        }
    }

    /// Checks every numeric field the command reads.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64, lo_open: bool| {
            let ok = v < 1.0 && if lo_open { v > 0.0 } else { v >= 0.0 };
            if ok {
                Ok(())
            } else {
                Err(invalid(name, format!("{v} out of range")))
            }
        };
        match self.command {
            CommandKind::Accounting => {
                if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
                    return Err(invalid(
                        "epsilon",
                        format!("{} must be nonnegative", self.epsilon),
                    ));
                }
                unit("delta", self.delta, false)?;
                unit("delta_hat", self.delta_hat, true)?;
                if self.tau == 0 || self.k == 0 || self.applications == 0 {
                    return Err(invalid("tau/k/applications", "must be positive"));
                }
                return Ok(());
            }
            CommandKind::AuditSync => {}
            _ => unit("delta", self.delta, true)?,
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(invalid(
                "epsilon",
                format!("{} not in (0, 1]", self.epsilon),
            ));
        }
        if !(1..=64).contains(&self.bits) {
            return Err(invalid("bits", format!("{} not in [1, 64]", self.bits)));
        }
        match self.command {
            CommandKind::Ipp
            | CommandKind::LearnThreshold
            | CommandKind::LearnRect
            | CommandKind::QcOpt => {
                if self.input.is_none() {
                    return Err(invalid("input", "required for this command"));
                }
            }
            CommandKind::AuditSim => {
                if self.trials == 0 || self.tau == 0 || self.sim_n == 0 {
                    return Err(invalid("trials/tau/n", "must be positive"));
                }
            }
            CommandKind::Sweep => {
                if self.trials == 0 || self.sweep_values.is_empty() {
                    return Err(invalid("trials/values", "must be nonempty"));
                }
                if !(self.target > 0.0 && self.target <= 1.0) {
                    return Err(invalid("target", format!("{} not in (0, 1]", self.target)));
                }
            }
            _ => {}
        }
        if self.command == CommandKind::LearnThreshold {
            unit("xi", self.xi, true)?;
            unit("beta", self.beta, true)?;
        }
        if self.command == CommandKind::QcOpt
            && self.constant_c.partial_cmp(&1.0).is_none_or(|o| o.is_lt())
        {
            return Err(invalid("constant_c", "must be at least 1"));
        }
        Ok(())
    }

    fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| invalid("input", "required for this command"))
    }
}

/// A checked sample-size inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCheck {
    pub inequality: String,
    pub n: usize,
    pub required: usize,
    pub satisfied: bool,
}

/// Machine-readable outcome of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub command: String,
    pub params: Value,
    pub regime: Option<RegimeCheck>,
    pub payload: Value,
    pub success: bool,
    pub error: Option<String>,
    pub wall_clock_ms: u64,
}

impl ResultRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records serialize")
    }
}

struct Outcome {
    params: Value,
    regime: Option<RegimeCheck>,
    payload: Value,
    success: bool,
}

/// Runs the configured command. Domain failures (regime violations, bad
/// input) become records with `success = false`; only I/O failures while
/// writing results are returned as errors.
pub fn run(cfg: &RunConfig) -> Result<ResultRecord> {
    let start = Instant::now();
    let outcome = cfg.validate().and_then(|_| dispatch(cfg));
    let mut record = match outcome {
        Ok(o) => ResultRecord {
            schema_version: SCHEMA_VERSION,
            command: cfg.command.name().to_string(),
            params: o.params,
            regime: o.regime,
            payload: o.payload,
            success: o.success,
            error: None,
            wall_clock_ms: 0,
        },
        Err(e) => ResultRecord {
            schema_version: SCHEMA_VERSION,
            command: cfg.command.name().to_string(),
            params: base_params(cfg),
            regime: regime_from_error(&e),
            payload: Value::Null,
            success: false,
            error: Some(e.to_string()),
            wall_clock_ms: 0,
        },
    };
    record.wall_clock_ms = start.elapsed().as_millis() as u64;
    if let Some(path) = &cfg.output {
        fs::write(path, record.to_json() + "\n")
            .map_err(|e| invalid("output", format!("{}: {e}", path.display())))?;
    }
    Ok(record)
}

fn regime_from_error(e: &Error) -> Option<RegimeCheck> {
    match e {
        Error::RegimeViolation {
            n,
            required,
            inequality,
        } => Some(RegimeCheck {
            inequality: inequality.clone(),
            n: *n,
            required: *required,
            satisfied: false,
        }),
        _ => None,
    }
}

fn base_params(cfg: &RunConfig) -> Value {
    json!({
        "epsilon": cfg.epsilon,
        "delta": cfg.delta,
        "seed": cfg.seed,
        "bits": cfg.bits,
    })
}

fn dispatch(cfg: &RunConfig) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.command {
        CommandKind::Ipp => run_ipp(cfg, &mut rng),
        CommandKind::LearnThreshold => run_learn_threshold(cfg, &mut rng),
        CommandKind::LearnRect => run_learn_rect(cfg, &mut rng),
        CommandKind::QcOpt => run_qc(cfg, &mut rng),
        CommandKind::AuditSync => run_audit_sync(cfg),
        CommandKind::AuditSim => run_audit_sim(cfg),
        CommandKind::Sweep => run_sweep_command(cfg),
        CommandKind::Accounting => accounting_outcome(cfg),
    }
}

fn ipp_params(cfg: &RunConfig, ipp: &IppConfig, accounting: &AccountingBound) -> Value {
    json!({
        "epsilon": cfg.epsilon,
        "delta": cfg.delta,
        "seed": cfg.seed,
        "bits": cfg.bits,
        "t": ipp.t,
        "log_star": log_star_universe(cfg.bits),
        "accounting": accounting,
    })
}

/// Accounting of one solver run: three slicing steps per level, one
/// engine execution per level.
fn ipp_accounting(cfg: &RunConfig) -> Result<AccountingBound> {
    privacy_cost(
        cfg.epsilon,
        cfg.delta,
        3,
        1,
        cfg.delta,
        u64::from(log_star_universe(cfg.bits)),
    )
}

fn run_ipp(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let universe = Universe::new(cfg.bits)?;
    let data = load_dataset(cfg.input()?, universe)?;
    let ipp = IppConfig::new(cfg.epsilon, cfg.delta)?;
    let required = ipp.regime(universe);
    let regime = RegimeCheck {
        inequality: format!(
            "n >= 10 * t * log*|X| = 10 * {} * {}",
            ipp.t,
            log_star_universe(cfg.bits)
        ),
        n: data.len(),
        required,
        satisfied: data.len() >= required,
    };
    let params = ipp_params(cfg, &ipp, &ipp_accounting(cfg)?);
    if !regime.satisfied {
        return Err(Error::RegimeViolation {
            n: regime.n,
            required,
            inequality: regime.inequality,
        });
    }
    let out = ipp_with(universe, data.clone(), &ipp, rng)?;
    let interior = is_interior(&data, out.value);
    Ok(Outcome {
        params,
        regime: Some(regime),
        payload: json!({ "value": out.value, "interior": interior, "levels": out.levels }),
        success: interior,
    })
}

fn run_learn_threshold(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let universe = Universe::new(cfg.bits)?;
    let sample = LabeledSample::from_csv(cfg.input()?)?;
    let required = threshold_sample_size(universe, cfg.xi, cfg.beta, cfg.epsilon, cfg.delta)?;
    let regime = RegimeCheck {
        inequality: "n >= (4 s + 8 ln(2/beta)) / xi with s = ceil(10 t log*|X| / 2)".to_string(),
        n: sample.len(),
        required,
        satisfied: sample.len() >= required,
    };
    let h = learn_threshold(&sample, universe, cfg.epsilon, cfg.delta, rng)?;
    let mistakes = sample
        .coords
        .iter()
        .zip(&sample.labels)
        .filter(|(&x, &l)| h.classify(x) != l)
        .count();
    let ipp = IppConfig::new(cfg.epsilon, cfg.delta)?;
    Ok(Outcome {
        params: json!({
            "epsilon": cfg.epsilon,
            "delta": cfg.delta,
            "seed": cfg.seed,
            "bits": cfg.bits,
            "xi": cfg.xi,
            "beta": cfg.beta,
            "t": ipp.t,
            "log_star": log_star_universe(cfg.bits),
            "accounting": ipp_accounting(cfg)?,
        }),
        regime: Some(regime),
        payload: json!({
            "threshold": h.cut,
            "training_error": mistakes as f64 / sample.len().max(1) as f64,
        }),
        success: true,
    })
}

fn run_learn_rect(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let universe = Universe::new(cfg.bits)?;
    let sample = LabeledSample::from_csv(cfg.input()?)?;
    let dims = sample.dims;
    if let Some(want) = cfg.dims {
        if want != dims {
            return Err(invalid(
                "dims",
                format!("input has {dims} coordinates, expected {want}"),
            ));
        }
    }
    let required =
        crate::learners::rectangle_positive_size(dims, universe, cfg.epsilon, cfg.delta)?;
    let positives = sample.labels.iter().filter(|&&l| l).count();
    let regime = RegimeCheck {
        inequality: "positives >= 2d (10 t log*|X| + ln(2d/delta)/eps)".to_string(),
        n: positives,
        required,
        satisfied: positives >= required,
    };
    let run = learn_rectangle(&sample, universe, cfg.epsilon, cfg.delta, rng)?;
    let covered = (0..sample.len())
        .filter(|&i| sample.labels[i] && run.rectangle.contains(sample.point(i)))
        .count();
    let ipp = IppConfig::new(cfg.epsilon, cfg.delta)?;
    let accounting = privacy_cost(cfg.epsilon, cfg.delta, 2 * dims, 1, cfg.delta, 1)?;
    Ok(Outcome {
        params: json!({
            "epsilon": cfg.epsilon,
            "delta": cfg.delta,
            "seed": cfg.seed,
            "bits": cfg.bits,
            "dims": dims,
            "t": ipp.t,
            "log_star": log_star_universe(cfg.bits),
            "slice_size": ipp.regime(universe),
            "accounting": accounting,
        }),
        regime: Some(regime),
        payload: json!({
            "intervals": run.rectangle.intervals,
            "all_negative": run.rectangle.is_all_negative(),
            "slices": run.slices,
            "training_positives_covered": covered as f64 / positives.max(1) as f64,
        }),
        success: true,
    })
}

fn run_qc(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let instance = QcInstance::from_csv(cfg.input()?)?;
    let universe = instance.universe()?;
    let n = qc_target_size(universe, cfg.epsilon, cfg.delta, cfg.constant_c)?;
    let sol = qc_optimize(&instance, cfg.epsilon, cfg.delta, cfg.constant_c, rng)?;
    Ok(Outcome {
        params: json!({
            "epsilon": cfg.epsilon,
            "delta": cfg.delta,
            "seed": cfg.seed,
            "solutions": instance.len(),
            "bits": universe.bits(),
            "log_star": log_star_universe(universe.bits()),
            "constant_c": cfg.constant_c,
            "n": n,
        }),
        regime: None,
        payload: json!({
            "solution": sol.solution,
            "score": sol.score,
            "opt_estimate": sol.opt_estimate,
            "error_bound": sol.error_bound,
            "used_ipp": sol.used_ipp,
        }),
        success: true,
    })
}

fn run_audit_sync(cfg: &RunConfig) -> Result<Outcome> {
    let report = check_sync_law(cfg.epsilon, 1e-9)?;
    Ok(Outcome {
        params: json!({ "epsilon": cfg.epsilon, "tolerance": 1e-9 }),
        regime: None,
        success: report.passes(),
        payload: serde_json::to_value(&report).expect("report serializes"),
    })
}

/// Holder-call audit on `D = {1..n}`, `x = 0`, `tau` ascending slices of
/// size 1: the inserted element sits at the front of every slice order.
fn run_audit_sim(cfg: &RunConfig) -> Result<Outcome> {
    let data: Vec<u64> = (1..=cfg.sim_n).collect();
    let order = ascending::<u64>();
    let script: Vec<SliceComputation<'_, u64, ()>> = (0..cfg.tau)
        .map(|_| SliceComputation::new(1, &order))
        .collect();
    let audit = audit_call_count(&data, &0, true, &script, cfg.epsilon, cfg.trials, cfg.seed)?;
    let trials = cfg.trials as f64;
    let checks: Vec<Value> = audit
        .tail
        .iter()
        .take(15)
        .map(|&(w, p)| {
            let bound = (5.0f64 / 6.0).powi(w as i32);
            let se = (bound * (1.0 - bound) / trials).sqrt();
            json!({ "w": w, "tail": p, "bound": bound, "ok": p <= bound + 3.0 * se })
        })
        .collect();
    let ok = checks.iter().all(|c| c["ok"] == json!(true));
    Ok(Outcome {
        params: json!({
            "epsilon": cfg.epsilon,
            "seed": cfg.seed,
            "trials": cfg.trials,
            "tau": cfg.tau,
            "n": cfg.sim_n,
        }),
        regime: None,
        payload: json!({ "audit": audit, "tail_checks": checks }),
        success: ok,
    })
}

fn run_sweep_command(cfg: &RunConfig) -> Result<Outcome> {
    let spec = SweepSpec {
        problem: cfg.sweep_problem,
        values: cfg.sweep_values.clone(),
        bits: cfg.bits,
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        target: cfg.target,
        trials: cfg.trials,
        rel_tol: 0.02,
        seed: cfg.seed,
    };
    let points = run_sweep(&spec)?;
    let rows: Vec<SweepRow> = points.iter().map(|p| p.row.clone()).collect();
    let csv_path = cfg
        .csv
        .clone()
        .or_else(|| cfg.output.as_ref().map(|p| p.with_extension("csv")));
    if let Some(path) = &csv_path {
        write_sweep_csv(path, &rows)?;
    }
    Ok(Outcome {
        params: serde_json::to_value(&spec).expect("spec serializes"),
        regime: None,
        success: rows.iter().all(|r| r.minimal_n.is_some()),
        payload: json!({ "rows": points }),
    })
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let io = |e: csv::Error| invalid("csv", e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| invalid("csv", e.to_string()))
}

/// The explicit accounting bound as a record.
pub fn accounting_report(
    epsilon_step: f64,
    delta_step: f64,
    tau: usize,
    k: usize,
    delta_hat: f64,
    applications: u64,
) -> Result<ResultRecord> {
    let mut cfg = RunConfig::new(CommandKind::Accounting);
    cfg.epsilon = epsilon_step;
    cfg.delta = delta_step;
    cfg.tau = tau;
    cfg.k = k;
    cfg.delta_hat = delta_hat;
    cfg.applications = applications;
    run(&cfg)
}

fn accounting_outcome(cfg: &RunConfig) -> Result<Outcome> {
    let bound = privacy_cost(
        cfg.epsilon,
        cfg.delta,
        cfg.tau,
        cfg.k,
        cfg.delta_hat,
        cfg.applications,
    )?;
    Ok(Outcome {
        params: json!({
            "epsilon_step": cfg.epsilon,
            "delta_step": cfg.delta,
            "tau": cfg.tau,
            "k": cfg.k,
            "delta_hat": cfg.delta_hat,
            "applications": cfg.applications,
        }),
        regime: None,
        payload: serde_json::to_value(&bound).expect("bound serializes"),
        success: true,
    })
}

/// Plain-text table of an accounting record's payload.
pub fn accounting_table(bound: &AccountingBound) -> String {
    let rows = [
        ("epsilon_total", format!("{}", bound.epsilon_total)),
        ("delta_total", format!("{:e}", bound.delta_total)),
        ("holder_call_cap", bound.holder_call_cap.to_string()),
        (
            "epsilon_per_first_phase_call",
            format!("{}", bound.epsilon_per_first_phase_call),
        ),
        (
            "epsilon_per_delayed_call",
            format!("{}", bound.epsilon_per_delayed_call),
        ),
        ("label", bound.label.clone()),
    ];
    rows.iter().map(|(k, v)| format!("{k:<30} {v}\n")).collect()
}
