//! Power and frequency allocation for a fixed local accuracy.
//!
//! With `θ` fixed the min-max problem becomes convex. An epigraph variable
//! `ξ` bounds every device's total cost, and the constraints are priced by
//! four families of multipliers:
//!
//! * `lam`: per-round latency budget,
//! * `beta`: upload-energy budget (a cap on `p`),
//! * `mu`: CPU frequency cap,
//! * `phi`: the epigraph constraint `G_n <= ξ`.
//!
//! For given multipliers the Lagrangian separates per device and per
//! variable. Its minimizer in `f` is the positive root of
//! `(ζ-1)·b·f^ζ + μ·f² − a = 0`, and in `s = sqrt(p)` the positive root of
//! `2β·s³ + b'·s² − a' = 0`. Multipliers then move by projected subgradient
//! ascent on the constraint residuals with a diminishing step.

use crate::cost::{self, AccuracyConfig, Allocation, DeviceProfile};
use crate::cubic::{bracketed_root, positive_root};
use crate::error::{ensure, Error, Result};

/// Smallest CPU frequency the solver will return, GHz.
pub const F_FLOOR: f64 = 1e-6;
/// Smallest `sqrt(p)` the solver will return.
pub const S_FLOOR: f64 = 1e-6;

/// Multipliers of one device.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Multipliers {
    pub lam: f64,
    pub beta: f64,
    pub mu: f64,
    pub phi: f64,
}

/// Multipliers of every device plus the step-size schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lam: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub step_iter: u64,
    /// Base step `c0` of the schedule `c0 / sqrt(t + 1)`.
    pub step_scale: f64,
}

impl DualState {
    pub fn zeros(n: usize, step_scale: f64) -> Self {
        Self {
            lam: vec![0.0; n],
            beta: vec![0.0; n],
            mu: vec![0.0; n],
            phi: vec![0.0; n],
            step_iter: 0,
            step_scale,
        }
    }

    pub fn len(&self) -> usize {
        self.lam.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lam.is_empty()
    }

    pub fn device(&self, i: usize) -> Multipliers {
        Multipliers {
            lam: self.lam[i],
            beta: self.beta[i],
            mu: self.mu[i],
            phi: self.phi[i],
        }
    }

    /// Step size for the current iteration, kept inside `(0, 1)`.
    pub fn step(&self) -> f64 {
        (self.step_scale / ((self.step_iter + 1) as f64).sqrt()).clamp(f64::MIN_POSITIVE, 1.0 - 1e-12)
    }

    fn families(&self) -> [&Vec<f64>; 4] {
        [&self.lam, &self.beta, &self.mu, &self.phi]
    }

    /// Largest absolute change of any multiplier between two states.
    pub fn max_change(&self, other: &DualState) -> f64 {
        self.families()
            .iter()
            .zip(other.families())
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Constraint residuals at a primal point, one vector per multiplier family.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgradients {
    pub lam: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
}

/// One dual iteration, recorded for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualIterate {
    /// Dual function value (a lower bound on the block optimum), or
    /// `-inf` while every `phi` is zero.
    pub dual_value: f64,
    /// Worst device cost at the current Lagrangian minimizer.
    pub primal_xi: f64,
    /// Best feasible worst cost seen so far (`inf` before the first one).
    pub best_feasible: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSolution {
    pub p_star: Vec<f64>,
    pub f_star: Vec<f64>,
    pub xi_star: f64,
    pub duals: DualState,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<DualIterate>,
}

/// Cost coefficients of the frequency subproblem `a/f + b·f^(ζ-1) + μ·f`.
pub fn frequency_coefficients(
    dev: &DeviceProfile,
    m: &Multipliers,
    theta: f64,
    acc: &AccuracyConfig,
) -> Result<(f64, f64)> {
    let k = cost::round_count(theta, acc)?;
    ensure(theta > 0.0, "theta", theta)?;
    let lw = -theta.ln() * dev.workload();
    let a = (m.phi * dev.w_time * k + m.lam) * lw;
    let b = m.phi * dev.w_energy * k * dev.rho * lw;
    Ok((a, b))
}

/// Cost coefficients of the power subproblem `a'/s + b'·s + β·s²`.
pub fn power_coefficients(
    dev: &DeviceProfile,
    m: &Multipliers,
    theta: f64,
    acc: &AccuracyConfig,
) -> Result<(f64, f64)> {
    let k = cost::round_count(theta, acc)?;
    let cs = dev.c_payload / dev.sigma;
    Ok(((m.phi * dev.w_time * k + m.lam) * cs, m.phi * dev.w_energy * k * cs))
}

fn check_multipliers(m: &Multipliers) -> Result<()> {
    ensure(m.lam >= 0.0, "lam", m.lam)?;
    ensure(m.beta >= 0.0, "beta", m.beta)?;
    ensure(m.mu >= 0.0, "mu", m.mu)?;
    ensure(m.phi >= 0.0, "phi", m.phi)
}

/// Minimizer of the per-device Lagrangian in the CPU frequency, clamped to
/// `[F_FLOOR, f_max]`.
pub fn solve_f(dev: &DeviceProfile, m: &Multipliers, theta: f64, acc: &AccuracyConfig) -> Result<f64> {
    check_multipliers(m)?;
    let (a, b) = frequency_coefficients(dev, m, theta, acc)?;
    if a == 0.0 && b == 0.0 {
        return Err(Error::DegenerateObjective);
    }
    let hi = dev.f_max;
    if a == 0.0 {
        return Ok(F_FLOOR.min(hi));
    }
    let zeta = dev.zeta;
    let f = if zeta == 3.0 {
        positive_root(2.0 * b, m.mu, a).map_or(hi, |(x, _)| x)
    } else if zeta == 2.0 {
        if b + m.mu > 0.0 {
            (a / (b + m.mu)).sqrt()
        } else {
            hi
        }
    } else {
        let deriv = |f: f64| -a / (f * f) + (zeta - 1.0) * b * f.powf(zeta - 2.0) + m.mu;
        bracketed_root(deriv, F_FLOOR.min(hi), hi)?
    };
    Ok(f.clamp(F_FLOOR.min(hi), hi))
}

/// Minimizer of the per-device Lagrangian in the transmit power, clamped so
/// that the upload-energy budget holds.
pub fn solve_p(dev: &DeviceProfile, m: &Multipliers, theta: f64, acc: &AccuracyConfig) -> Result<f64> {
    check_multipliers(m)?;
    let (a, b) = power_coefficients(dev, m, theta, acc)?;
    if a == 0.0 && b == 0.0 {
        return Err(Error::DegenerateObjective);
    }
    let s_cap = dev.power_cap().sqrt();
    let s = if a == 0.0 {
        S_FLOOR
    } else {
        positive_root(2.0 * m.beta, b, a).map_or(s_cap, |(x, _)| x)
    };
    let s = s.clamp(S_FLOOR.min(s_cap), s_cap);
    Ok(s * s)
}

/// One device's share of the Lagrangian; summing over all `n_devices`
/// devices gives the full Lagrangian.
#[allow(clippy::too_many_arguments)]
pub fn lagrangian_value(
    dev: &DeviceProfile,
    p: f64,
    f: f64,
    xi: f64,
    m: &Multipliers,
    theta: f64,
    acc: &AccuracyConfig,
    n_devices: usize,
) -> Result<f64> {
    ensure(p > 0.0, "p", p)?;
    ensure(f > 0.0, "f", f)?;
    let c = cost::total_cost(dev, p, f, theta, acc)?;
    let latency = c.t_cmp + c.t_up - dev.t_max;
    Ok(xi / n_devices as f64
        + m.phi * (c.total - xi)
        + m.lam * latency
        + m.beta * (p - dev.power_cap())
        + m.mu * (f - dev.f_max))
}

/// Worst total cost over devices and the lowest index attaining it.
pub fn xi_from_primal(
    devices: &[DeviceProfile],
    alloc: &Allocation,
    acc: &AccuracyConfig,
) -> Result<(f64, usize)> {
    let report = cost::cost_report(devices, alloc, acc)?;
    Ok((report.worst_cost, report.worst_device))
}

pub fn subgradients(
    devices: &[DeviceProfile],
    alloc: &Allocation,
    xi: f64,
    acc: &AccuracyConfig,
) -> Result<Subgradients> {
    let n = devices.len();
    let mut g = Subgradients {
        lam: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        mu: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
    };
    for (i, dev) in devices.iter().enumerate() {
        let (p, f) = (alloc.p[i], alloc.f[i]);
        let c = cost::total_cost(dev, p, f, alloc.theta, acc)?;
        g.lam.push(c.t_cmp + c.t_up - dev.t_max);
        g.beta.push(p - dev.power_cap());
        g.mu.push(f - dev.f_max);
        g.phi.push(c.total - xi);
    }
    Ok(g)
}

/// Euclidean projection onto `{x >= 0, sum(x) = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if x - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// Projected subgradient ascent. `lam`, `beta` and `mu` follow
/// `m <- max(0, m + step·g)`; `phi` is projected onto the simplex, the only
/// region where the dual function is finite because `ξ` is unconstrained.
pub fn update_duals(duals: &DualState, g: &Subgradients) -> DualState {
    let step = duals.step();
    let ascend = |m: &[f64], g: &[f64]| -> Vec<f64> {
        m.iter().zip(g).map(|(m, g)| (m + step * g).max(0.0)).collect()
    };
    let phi: Vec<f64> = duals.phi.iter().zip(&g.phi).map(|(m, g)| m + step * g).collect();
    DualState {
        lam: ascend(&duals.lam, &g.lam),
        beta: ascend(&duals.beta, &g.beta),
        mu: ascend(&duals.mu, &g.mu),
        phi: project_simplex(&phi),
        step_iter: duals.step_iter + 1,
        step_scale: duals.step_scale,
    }
}

/// Value of the dual function at `duals`.
///
/// The epigraph variable is free, so the dual function is finite only when
/// the `phi` sum to one. Every multiplier is divided by `sum(phi)` first,
/// which leaves the Lagrangian minimizers unchanged and yields a valid lower
/// bound on the block optimum. Returns `-inf` when all `phi` vanish.
pub fn dual_function(
    devices: &[DeviceProfile],
    duals: &DualState,
    theta: f64,
    acc: &AccuracyConfig,
) -> Result<f64> {
    let total: f64 = duals.phi.iter().sum();
    if total <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut value = 0.0;
    for (i, dev) in devices.iter().enumerate() {
        let raw = duals.device(i);
        let m = Multipliers {
            lam: raw.lam / total,
            beta: raw.beta / total,
            mu: raw.mu / total,
            phi: raw.phi / total,
        };
        let f = solve_f(dev, &m, theta, acc);
        let p = solve_p(dev, &m, theta, acc);
        value += match (f, p) {
            (Ok(f), Ok(p)) => lagrangian_value(dev, p, f, 0.0, &m, theta, acc, 1)?,
            // Only the linear cap terms remain; their infimum sits at zero.
            (Err(Error::DegenerateObjective), _) | (_, Err(Error::DegenerateObjective)) => {
                -m.beta * dev.power_cap() - m.mu * dev.f_max
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
    }
    Ok(value)
}

/// Smallest change that brings one device back inside its latency budget:
/// raise `p` until the upload fits in the time left after computing, going
/// to `f_max` first when the power cap alone is not enough. `None` when even
/// `(cap, f_max)` misses the budget.
pub fn repair_latency(dev: &DeviceProfile, p: f64, f: f64, theta: f64) -> Result<Option<(f64, f64)>> {
    let cap = dev.power_cap();
    for f in [f, dev.f_max] {
        let left = dev.t_max - cost::t_cmp(dev, f, theta)?;
        if left <= 0.0 {
            continue;
        }
        let needed = (dev.c_payload / (dev.sigma * left)).powi(2);
        if needed <= cap {
            return Ok(Some((p.max(needed), f)));
        }
    }
    Ok(None)
}

/// Residual slack accepted when classifying a block iterate as feasible.
const FEASIBILITY_SLACK: f64 = 1e-12;

fn repair_block(devices: &[DeviceProfile], alloc: &Allocation) -> Result<Option<Allocation>> {
    let mut fixed = alloc.clone();
    for (i, dev) in devices.iter().enumerate() {
        let r = cost::feasibility_residuals(dev, alloc.p[i], alloc.f[i], alloc.theta)?;
        if r.latency <= 0.0 {
            continue;
        }
        match repair_latency(dev, alloc.p[i], alloc.f[i], alloc.theta)? {
            Some((p, f)) => (fixed.p[i], fixed.f[i]) = (p, f),
            None => return Ok(None),
        }
    }
    let feasible = devices.iter().enumerate().all(|(i, dev)| {
        cost::feasibility_residuals(dev, fixed.p[i], fixed.f[i], fixed.theta)
            .is_ok_and(|r| r.latency <= FEASIBILITY_SLACK * (1.0 + dev.t_max))
    });
    Ok(feasible.then_some(fixed))
}

/// Point of smallest latency violation near `alloc`: devices that miss
/// their budget are repaired when possible and otherwise run at
/// `(cap, f_max)`, the latency minimum at fixed `θ`.
fn least_violating_point(devices: &[DeviceProfile], alloc: &Allocation) -> Result<(f64, Allocation)> {
    let mut point = alloc.clone();
    let mut violation: f64 = 0.0;
    for (i, dev) in devices.iter().enumerate() {
        let r = cost::feasibility_residuals(dev, alloc.p[i], alloc.f[i], alloc.theta)?;
        if r.latency <= 0.0 {
            continue;
        }
        let (p, f) = repair_latency(dev, alloc.p[i], alloc.f[i], alloc.theta)?.unwrap_or((dev.power_cap(), dev.f_max));
        (point.p[i], point.f[i]) = (p, f);
        let r = cost::feasibility_residuals(dev, p, f, alloc.theta)?;
        violation = violation.max(r.latency);
    }
    Ok((violation, point))
}

/// Projected-subgradient dual ascent for the block `(p, f)` at fixed `θ`.
///
/// Each iteration minimizes the Lagrangian per device, evaluates the
/// residuals and updates the multipliers; it stops once no multiplier moves
/// by `tol` or more, or after `max_iter` iterations. The best feasible
/// iterate is returned, where an iterate that overshoots a latency budget
/// also counts after [`repair_latency`]. If `duals0` has no positive `phi`, the epigraph
/// multipliers start at `1/N`; a device whose cost coefficients all vanish
/// is evaluated with `phi = 1/N` for that iteration.
pub fn solve_block(
    devices: &[DeviceProfile],
    theta: f64,
    acc: &AccuracyConfig,
    duals0: &DualState,
    tol: f64,
    max_iter: usize,
) -> Result<BlockSolution> {
    let n = devices.len();
    ensure(n > 0, "devices", 0.0)?;
    ensure(duals0.len() == n, "duals0.len", duals0.len() as f64)?;
    ensure(theta > 0.0 && theta < 1.0, "theta", theta)?;
    ensure(tol > 0.0, "tol", tol)?;
    for dev in devices {
        dev.validate()?;
    }

    let uniform = 1.0 / n as f64;
    let mut duals = duals0.clone();
    if duals.phi.iter().all(|&v| v <= 0.0) {
        duals.phi.iter_mut().for_each(|v| *v = uniform);
    }

    let mut best: Option<(f64, Allocation)> = None;
    let mut least_violating: Option<(f64, Allocation)> = None;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut alloc = Allocation {
            p: Vec::with_capacity(n),
            f: Vec::with_capacity(n),
            theta,
        };
        for (i, dev) in devices.iter().enumerate() {
            let mut m = duals.device(i);
            if m.phi <= 0.0 && m.lam <= 0.0 {
                m.phi = uniform;
            }
            alloc.f.push(solve_f(dev, &m, theta, acc)?);
            alloc.p.push(solve_p(dev, &m, theta, acc)?);
        }

        let (xi, _) = xi_from_primal(devices, &alloc, acc)?;
        let mut violation: f64 = 0.0;
        for (i, dev) in devices.iter().enumerate() {
            let r = cost::feasibility_residuals(dev, alloc.p[i], alloc.f[i], theta)?;
            violation = violation.max(r.latency - FEASIBILITY_SLACK * (1.0 + dev.t_max));
        }
        if violation <= 0.0 {
            if best.as_ref().is_none_or(|(b, _)| xi < *b) {
                best = Some((xi, alloc.clone()));
            }
        } else {
            if least_violating.as_ref().is_none_or(|(v, _)| violation < *v) {
                least_violating = Some((violation, alloc.clone()));
            }
            // Dual iterates reach active latency budgets from outside, so
            // also try the nearest feasible point.
            if let Some(fixed) = repair_block(devices, &alloc)? {
                let (fixed_xi, _) = xi_from_primal(devices, &fixed, acc)?;
                if best.as_ref().is_none_or(|(b, _)| fixed_xi < *b) {
                    best = Some((fixed_xi, fixed));
                }
            }
        }

        history.push(DualIterate {
            dual_value: dual_function(devices, &duals, theta, acc)?,
            primal_xi: xi,
            best_feasible: best.as_ref().map_or(f64::INFINITY, |(b, _)| *b),
        });

        let g = subgradients(devices, &alloc, xi, acc)?;
        let next = update_duals(&duals, &g);
        let moved = next.max_change(&duals);
        duals = next;
        if moved < tol {
            converged = true;
            break;
        }
    }

    match best {
        Some((_, alloc)) => {
            let (xi_star, _) = xi_from_primal(devices, &alloc, acc)?;
            Ok(BlockSolution {
                p_star: alloc.p,
                f_star: alloc.f,
                xi_star,
                duals,
                iterations,
                converged,
                history,
            })
        }
        None => {
            let (_, closest) = least_violating.expect("at least one iteration ran");
            let (violation, alloc) = least_violating_point(devices, &closest)?;
            Err(Error::InfeasibleBlock {
                theta,
                violation,
                least_violating: Box::new(alloc),
            })
        }
    }
}
