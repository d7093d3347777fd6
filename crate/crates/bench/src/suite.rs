//! Runs every method on every seed and writes the three CSV tables.
//!
//! `convergence.csv`: `seed,outer_iter,proposed,random_pf,random_theta,random_all`,
//! the incumbent objective after each outer iteration; shorter traces repeat
//! their last value.
//!
//! `comparison.csv`: `seed,proposed,random_pf,random_theta,random_all,flags`,
//! the final objective per method. A method that failed leaves its cell
//! empty and adds `method:error` to `flags`; an infeasible final allocation
//! keeps its value and adds `method:infeasible`.
//!
//! `energy_sweep.csv`: `seed,multiplier,mean_total_energy,status`, the mean
//! over devices of the training-run energy of the proposed allocation with
//! every dataset scaled by `multiplier`.

use std::path::Path;
use std::time::{Duration, Instant};

use fedalloc::{cost, run_method, stream, Allocation, DeviceProfile, Method, Purpose};
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::error::{BenchError, Result};
use crate::scenario::{generate_scenario, scale_datasets};

pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const ENERGY_SWEEP_CSV: &str = "energy_sweep.csv";

pub fn purpose(method: Method) -> Purpose {
    match method {
        Method::Proposed => Purpose::Proposed,
        Method::RandomPf => Purpose::RandomPf,
        Method::RandomTheta => Purpose::RandomTheta,
        Method::RandomAll => Purpose::RandomAll,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub objective: f64,
    pub feasible: bool,
    pub allocation: Allocation,
    /// Training-run energy per device, joules.
    pub energy: Vec<f64>,
    /// Training-run latency per device, seconds.
    pub latency: Vec<f64>,
    pub trace: Vec<f64>,
    pub outer_iterations: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub seed: u64,
    /// Error message when the run did not complete.
    pub outcome: Result<RunSummary, String>,
}

impl RunRecord {
    pub fn objective(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|s| s.objective)
    }

    pub fn feasible(&self) -> bool {
        self.outcome.as_ref().is_ok_and(|s| s.feasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub seed: u64,
    pub multiplier: f64,
    /// Mean training-run energy per device, or the failure message.
    pub outcome: Result<(f64, bool), String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteOutput {
    /// Sorted by `(seed, method)`.
    pub records: Vec<RunRecord>,
    /// Sorted by seed, then sweep order.
    pub sweep: Vec<SweepRow>,
}

/// Per-device training-run energy and latency at `alloc`.
pub fn run_totals(
    devices: &[DeviceProfile],
    alloc: &Allocation,
    cfg: &ScenarioConfig,
) -> fedalloc::Result<(Vec<f64>, Vec<f64>)> {
    let acc = &cfg.optimizer.accuracy;
    let k = cost::round_count(alloc.theta, acc)?;
    let report = cost::cost_report(devices, alloc, acc)?;
    let energy = report.e_cmp.iter().zip(&report.e_up).map(|(a, b)| k * (a + b)).collect();
    let latency = report.t_cmp.iter().zip(&report.t_up).map(|(a, b)| k * (a + b)).collect();
    Ok((energy, latency))
}

/// One method on one device list, with the method's own random stream.
pub fn run_one(devices: &[DeviceProfile], cfg: &ScenarioConfig, seed: u64, method: Method) -> RunRecord {
    let start = Instant::now();
    let mut rng = stream(seed, 0, purpose(method));
    let outcome = run_method(method, devices, &cfg.optimizer, &mut rng)
        .and_then(|res| {
            let (energy, latency) = run_totals(devices, &res.allocation, cfg)?;
            Ok(RunSummary {
                objective: res.objective,
                feasible: res.feasible,
                allocation: res.allocation,
                energy,
                latency,
                trace: res.trace,
                outer_iterations: res.outer_iterations,
                wall_time: start.elapsed(),
            })
        })
        .map_err(|e| e.to_string());
    RunRecord { method, seed, outcome }
}

fn sweep_seed(devices: &[DeviceProfile], cfg: &ScenarioConfig, seed: u64) -> Vec<SweepRow> {
    cfg.sweep
        .iter()
        .map(|&multiplier| {
            let scaled = scale_datasets(devices, multiplier);
            let outcome = run_one(&scaled, cfg, seed, Method::Proposed)
                .outcome
                .map(|s| (s.energy.iter().sum::<f64>() / s.energy.len() as f64, s.feasible));
            SweepRow {
                seed,
                multiplier,
                outcome,
            }
        })
        .collect()
}

fn failed_records(seed: u64, methods: &[Method], msg: &str) -> Vec<RunRecord> {
    methods
        .iter()
        .map(|&method| RunRecord {
            method,
            seed,
            outcome: Err(msg.to_string()),
        })
        .collect()
}

fn sorted_methods(methods: &[Method]) -> Vec<Method> {
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    methods
}

/// Runs `methods` on every seed in parallel, sorted by `(seed, method)`.
pub fn run_methods(cfg: &ScenarioConfig, seeds: &[u64], methods: &[Method]) -> Vec<RunRecord> {
    let methods = sorted_methods(methods);
    let mut records: Vec<RunRecord> = seeds
        .par_iter()
        .flat_map_iter(|&seed| match generate_scenario(cfg, seed) {
            Ok(devices) => methods.iter().map(|&m| run_one(&devices, cfg, seed, m)).collect(),
            Err(e) => failed_records(seed, &methods, &e.to_string()),
        })
        .collect();
    records.sort_by_key(|r| (r.seed, r.method));
    records
}

/// Proposed method over the dataset multipliers of `cfg.sweep`, per seed.
pub fn run_sweep(cfg: &ScenarioConfig, seeds: &[u64]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = seeds
        .par_iter()
        .flat_map_iter(|&seed| match generate_scenario(cfg, seed) {
            Ok(devices) => sweep_seed(&devices, cfg, seed),
            Err(e) => cfg
                .sweep
                .iter()
                .map(|&multiplier| SweepRow {
                    seed,
                    multiplier,
                    outcome: Err(e.to_string()),
                })
                .collect(),
        })
        .collect();
    // Stable sort keeps the sweep order within a seed.
    rows.sort_by_key(|r| r.seed);
    rows
}

/// [`run_methods`] plus, when the proposed method is selected,
/// [`run_sweep`]. Output order does not depend on scheduling.
pub fn run_suite(cfg: &ScenarioConfig, seeds: &[u64], methods: &[Method]) -> SuiteOutput {
    let sweep = if methods.contains(&Method::Proposed) {
        run_sweep(cfg, seeds)
    } else {
        Vec::new()
    };
    SuiteOutput {
        records: run_methods(cfg, seeds, methods),
        sweep,
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<std::fs::File>> {
    let path = dir.join(name);
    let file = std::fs::File::create(&path).map_err(|source| BenchError::Io { path, source })?;
    Ok(csv::Writer::from_writer(file))
}

/// Records of one seed, one slot per method in `Method::ALL` order.
fn by_seed(records: &[RunRecord]) -> Vec<(u64, [Option<&RunRecord>; 4])> {
    let mut rows: Vec<(u64, [Option<&RunRecord>; 4])> = Vec::new();
    for r in records {
        if rows.last().is_none_or(|(s, _)| *s != r.seed) {
            rows.push((r.seed, [None; 4]));
        }
        let slot = Method::ALL.iter().position(|m| *m == r.method).expect("method listed");
        rows.last_mut().expect("row pushed").1[slot] = Some(r);
    }
    rows
}

pub fn write_convergence<W: std::io::Write>(out: &SuiteOutput, w: &mut csv::Writer<W>) -> Result<()> {
    let mut header = vec!["seed", "outer_iter"];
    header.extend(Method::ALL.iter().map(|m| m.tag()));
    w.write_record(&header)?;
    for (seed, slots) in by_seed(&out.records) {
        let traces: Vec<Option<Vec<f64>>> = slots
            .iter()
            .map(|r| {
                let s = (*r)?.outcome.as_ref().ok()?;
                Some(if s.trace.is_empty() { vec![s.objective] } else { s.trace.clone() })
            })
            .collect();
        let len = traces.iter().flatten().map(Vec::len).max().unwrap_or(0);
        for k in 0..len {
            let mut row = vec![seed.to_string(), (k + 1).to_string()];
            row.extend(
                traces
                    .iter()
                    .map(|t| t.as_ref().map_or(String::new(), |t| fmt(t[k.min(t.len() - 1)]))),
            );
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| BenchError::Csv(e.into()))
}

pub fn write_comparison<W: std::io::Write>(out: &SuiteOutput, w: &mut csv::Writer<W>) -> Result<()> {
    let mut header = vec!["seed"];
    header.extend(Method::ALL.iter().map(|m| m.tag()));
    header.push("flags");
    w.write_record(&header)?;
    for (seed, slots) in by_seed(&out.records) {
        let mut row = vec![seed.to_string()];
        let mut flags = Vec::new();
        for r in slots.iter().flatten() {
            match &r.outcome {
                Ok(s) => {
                    if !s.feasible {
                        flags.push(format!("{}:infeasible", r.method));
                    }
                }
                Err(_) => flags.push(format!("{}:error", r.method)),
            }
        }
        row.extend(
            slots
                .iter()
                .map(|r| r.and_then(RunRecord::objective).map_or(String::new(), fmt)),
        );
        row.push(flags.join(";"));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| BenchError::Csv(e.into()))
}

pub fn write_energy_sweep<W: std::io::Write>(out: &SuiteOutput, w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(["seed", "multiplier", "mean_total_energy", "status"])?;
    for row in &out.sweep {
        let (energy, status) = match &row.outcome {
            Ok((e, true)) => (fmt(*e), "ok"),
            Ok((e, false)) => (fmt(*e), "infeasible"),
            Err(_) => (String::new(), "error"),
        };
        w.write_record([row.seed.to_string(), fmt(row.multiplier), energy, status.to_string()])?;
    }
    w.flush().map_err(|e| BenchError::Csv(e.into()))
}

/// Writes the three tables into `dir`, creating it if needed.
pub fn write_outputs(out: &SuiteOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_convergence(out, &mut writer(dir, CONVERGENCE_CSV)?)?;
    write_comparison(out, &mut writer(dir, COMPARISON_CSV)?)?;
    write_energy_sweep(out, &mut writer(dir, ENERGY_SWEEP_CSV)?)
}
