//! Outer alternation between the `(p, f)` block and the accuracy `θ`, plus
//! the three randomized reference methods.

use std::fmt;

use rand::Rng;

use crate::cost::{self, AccuracyConfig, Allocation, DeviceProfile};
use crate::dual::{self, DualState};
use crate::error::{ensure, Error, Result};
use crate::harmony::{self, HarmonyParams};

/// Slack used when deciding whether a returned allocation is feasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub accuracy: AccuracyConfig,
    pub harmony: HarmonyParams,
    /// Multiplier movement below which the block solver stops.
    pub block_tol: f64,
    pub block_max_iter: usize,
    /// Base step of the dual step schedule.
    pub step_scale: f64,
    /// Relative incumbent improvement treated as stalled.
    pub outer_tol: f64,
    pub outer_max: usize,
    /// Draws per device allowed by the rejection samplers.
    pub reject_max: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            accuracy: AccuracyConfig::default(),
            harmony: HarmonyParams::default(),
            block_tol: 1e-6,
            block_max_iter: 3000,
            step_scale: 0.5,
            outer_tol: 1e-3,
            outer_max: 20,
            reject_max: 10_000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.accuracy.validate()?;
        self.harmony.validate()?;
        ensure(self.block_tol > 0.0, "block_tol", self.block_tol)?;
        ensure(self.block_max_iter >= 1, "block_max_iter", self.block_max_iter as f64)?;
        ensure(self.step_scale > 0.0, "step_scale", self.step_scale)?;
        ensure(self.outer_tol > 0.0, "outer_tol", self.outer_tol)?;
        ensure(self.outer_max >= 1, "outer_max", self.outer_max as f64)?;
        ensure(self.reject_max >= 1, "reject_max", self.reject_max as f64)
    }

    fn bounds(&self) -> (f64, f64) {
        (self.accuracy.theta_lo, self.accuracy.theta_hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Proposed,
    /// Random `(p, f)`, optimized `θ`.
    RandomPf,
    /// Random `θ`, optimized `(p, f)`.
    RandomTheta,
    /// Everything random.
    RandomAll,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::RandomPf, Method::RandomTheta, Method::RandomAll];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::RandomPf => "random_pf",
            Method::RandomTheta => "random_theta",
            Method::RandomAll => "random_all",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == tag)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub allocation: Allocation,
    /// Worst-case total cost at `allocation`.
    pub objective: f64,
    /// Incumbent objective after each outer iteration.
    pub trace: Vec<f64>,
    /// Dual iterations spent in each block solve.
    pub block_iterations: Vec<usize>,
    pub outer_iterations: usize,
    pub feasible: bool,
    pub method: Method,
    /// Rejected draws of the random samplers.
    pub rejections: usize,
}

fn finish(
    devices: &[DeviceProfile],
    cfg: &OptimizerConfig,
    allocation: Allocation,
    method: Method,
) -> Result<OptimizationResult> {
    let (objective, _) = dual::xi_from_primal(devices, &allocation, &cfg.accuracy)?;
    let feasible = cost::allocation_feasible(devices, &allocation, FEASIBILITY_TOL);
    Ok(OptimizationResult {
        allocation,
        objective,
        trace: Vec::new(),
        block_iterations: Vec::new(),
        outer_iterations: 0,
        feasible,
        method,
        rejections: 0,
    })
}

fn search_theta<R: Rng + ?Sized>(
    devices: &[DeviceProfile],
    p: &[f64],
    f: &[f64],
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<f64> {
    let fixed = Allocation {
        p: p.to_vec(),
        f: f.to_vec(),
        theta: cfg.accuracy.theta0,
    };
    let out = harmony::harmony_search(
        |theta| harmony::penalized_objective(theta, devices, &fixed, &cfg.accuracy, &cfg.harmony),
        cfg.bounds(),
        &cfg.harmony,
        rng,
    )?;
    // The hinge penalty is not exact: when cost rises faster in θ than the
    // penalty falls, its minimizer sits just past a latency budget.
    Ok(match min_feasible_theta(devices, p, f, cfg.accuracy.theta_hi)? {
        Some(floor) if floor > out.theta => floor,
        _ => out.theta,
    })
}

/// Smallest accuracy at which every device meets its latency budget with
/// the given `(p, f)`. Compute time falls as `θ` grows, so this is a lower
/// bound on the feasible `θ`. `None` when even `theta_hi` is too slow.
pub fn min_feasible_theta(devices: &[DeviceProfile], p: &[f64], f: &[f64], theta_hi: f64) -> Result<Option<f64>> {
    let mut floor: f64 = 0.0;
    for (i, dev) in devices.iter().enumerate() {
        let left = dev.t_max - cost::t_up(dev, p[i])?;
        if left <= 0.0 {
            return Ok(None);
        }
        floor = floor.max((-left * f[i] / dev.workload()).exp());
    }
    Ok((floor <= theta_hi).then_some(floor))
}

/// Alternates the dual block solver and harmony search, keeping the best
/// feasible allocation seen.
///
/// Starts from `θ0` with zero multipliers and warm-starts every block solve
/// from the previous multipliers. Stops once the incumbent improves by less
/// than `outer_tol` (relative) in two consecutive outer iterations, or after
/// `outer_max` iterations.
pub fn optimize<R: Rng + ?Sized>(
    devices: &[DeviceProfile],
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<OptimizationResult> {
    ensure(!devices.is_empty(), "devices", 0.0)?;
    cfg.validate()?;
    let acc = &cfg.accuracy;
    let mut theta = acc.theta0;
    let mut duals = DualState::zeros(devices.len(), cfg.step_scale);
    let mut incumbent: Option<(f64, Allocation)> = None;
    let mut trace = Vec::new();
    let mut block_iterations = Vec::new();
    let mut stalled = 0;
    let mut last_block_error = None;

    let consider = |alloc: Allocation, incumbent: &mut Option<(f64, Allocation)>| -> Result<()> {
        if !cost::allocation_feasible(devices, &alloc, FEASIBILITY_TOL) {
            return Ok(());
        }
        let (obj, _) = dual::xi_from_primal(devices, &alloc, acc)?;
        if incumbent.as_ref().is_none_or(|(best, _)| obj < *best) {
            *incumbent = Some((obj, alloc));
        }
        Ok(())
    };

    for _ in 0..cfg.outer_max {
        let (p, f) = match dual::solve_block(devices, theta, acc, &duals, cfg.block_tol, cfg.block_max_iter) {
            Ok(block) => {
                block_iterations.push(block.iterations);
                duals = block.duals;
                (block.p_star, block.f_star)
            }
            Err(Error::InfeasibleBlock {
                least_violating,
                theta,
                violation,
            }) => {
                // Let the accuracy search pull the latency back in range.
                block_iterations.push(cfg.block_max_iter);
                last_block_error = Some(format!("latency exceeds budget by {violation:.3e} s at theta {theta}"));
                (least_violating.p, least_violating.f)
            }
            Err(e) => return Err(e),
        };
        consider(
            Allocation {
                p: p.clone(),
                f: f.clone(),
                theta,
            },
            &mut incumbent,
        )?;

        theta = search_theta(devices, &p, &f, cfg, rng)?;
        consider(Allocation { p, f, theta }, &mut incumbent)?;

        let current = incumbent.as_ref().map_or(f64::INFINITY, |(obj, _)| *obj);
        if let Some(&prev) = trace.last() {
            let improvement = if f64::is_finite(prev) {
                (prev - current) / prev.abs().max(f64::MIN_POSITIVE)
            } else {
                f64::INFINITY
            };
            if improvement < cfg.outer_tol {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        trace.push(current);
        if stalled >= 2 {
            break;
        }
    }

    let Some((_, allocation)) = incumbent else {
        return Err(Error::InfeasibleScenario(
            last_block_error.unwrap_or_else(|| "no feasible allocation found".into()),
        ));
    };
    let mut result = finish(devices, cfg, allocation, Method::Proposed)?;
    result.outer_iterations = trace.len();
    result.trace = trace;
    result.block_iterations = block_iterations;
    Ok(result)
}

/// Draws `(p, f)` uniformly in `(0, cap] x (0, f_max]` until the latency
/// budget holds at accuracy `theta`.
fn draw_feasible_pf<R: Rng + ?Sized>(
    dev: &DeviceProfile,
    index: usize,
    theta: f64,
    reject_max: usize,
    rng: &mut R,
) -> Result<(f64, f64, usize)> {
    for tries in 0..reject_max {
        let f = (1.0 - rng.random::<f64>()) * dev.f_max;
        let p = (1.0 - rng.random::<f64>()) * dev.power_cap();
        let r = cost::feasibility_residuals(dev, p, f, theta)?;
        if r.latency <= 0.0 {
            return Ok((p, f, tries));
        }
    }
    Err(Error::InfeasibleBaseline {
        device: index,
        tries: reject_max,
    })
}

/// Random `(p, f)`, accepted once the latency budget can be met at the
/// upper accuracy bound; `θ` is then optimized by harmony search.
pub fn baseline_random_pf<R: Rng + ?Sized>(
    devices: &[DeviceProfile],
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<OptimizationResult> {
    ensure(!devices.is_empty(), "devices", 0.0)?;
    cfg.validate()?;
    let (mut p, mut f) = (Vec::new(), Vec::new());
    let mut rejections = 0;
    for (i, dev) in devices.iter().enumerate() {
        let (pi, fi, r) = draw_feasible_pf(dev, i, cfg.accuracy.theta_hi, cfg.reject_max, rng)?;
        p.push(pi);
        f.push(fi);
        rejections += r;
    }
    let theta = search_theta(devices, &p, &f, cfg, rng)?;
    let mut result = finish(devices, cfg, Allocation { p, f, theta }, Method::RandomPf)?;
    result.rejections = rejections;
    result.trace = vec![result.objective];
    result.outer_iterations = 1;
    Ok(result)
}

/// Uniform random `θ` with one block solve at that accuracy.
pub fn baseline_random_theta<R: Rng + ?Sized>(
    devices: &[DeviceProfile],
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<OptimizationResult> {
    ensure(!devices.is_empty(), "devices", 0.0)?;
    cfg.validate()?;
    let (lo, hi) = cfg.bounds();
    let theta = lo + rng.random::<f64>() * (hi - lo);
    let block = dual::solve_block(
        devices,
        theta,
        &cfg.accuracy,
        &DualState::zeros(devices.len(), cfg.step_scale),
        cfg.block_tol,
        cfg.block_max_iter,
    )?;
    let mut result = finish(
        devices,
        cfg,
        Allocation {
            p: block.p_star,
            f: block.f_star,
            theta,
        },
        Method::RandomTheta,
    )?;
    result.block_iterations = vec![block.iterations];
    result.trace = vec![result.objective];
    result.outer_iterations = 1;
    Ok(result)
}

/// Uniform random `θ`, then per-device random `(p, f)` rejected until
/// feasible at that `θ`. No optimization.
pub fn baseline_random_all<R: Rng + ?Sized>(
    devices: &[DeviceProfile],
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<OptimizationResult> {
    ensure(!devices.is_empty(), "devices", 0.0)?;
    cfg.validate()?;
    let (lo, hi) = cfg.bounds();
    let theta = lo + rng.random::<f64>() * (hi - lo);
    let (mut p, mut f) = (Vec::new(), Vec::new());
    let mut rejections = 0;
    for (i, dev) in devices.iter().enumerate() {
        let (pi, fi, r) = draw_feasible_pf(dev, i, theta, cfg.reject_max, rng)?;
        p.push(pi);
        f.push(fi);
        rejections += r;
    }
    let mut result = finish(devices, cfg, Allocation { p, f, theta }, Method::RandomAll)?;
    result.rejections = rejections;
    Ok(result)
}

/// Dispatches on `method`.
pub fn run_method<R: Rng + ?Sized>(
    method: Method,
    devices: &[DeviceProfile],
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<OptimizationResult> {
    match method {
        Method::Proposed => optimize(devices, cfg, rng),
        Method::RandomPf => baseline_random_pf(devices, cfg, rng),
        Method::RandomTheta => baseline_random_theta(devices, cfg, rng),
        Method::RandomAll => baseline_random_all(devices, cfg, rng),
    }
}
