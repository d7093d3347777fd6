//! Brute-force grid references for the block solver, the accuracy search
//! and the full small-N problem. Test support only; the optimizer never
//! calls into this module.
//!
//! Grids are made of cell centers: an axis with `points` cells over
//! `[lo, hi]` evaluates the midpoint of each cell, so bounds that make a
//! cost blow up (`p = 0`, `θ = 1`) are never touched. Ties are broken
//! towards the smallest grid index.

use rayon::prelude::*;

use crate::cost::{self, AccuracyConfig, Allocation, DeviceProfile};
use crate::dual::{self, Multipliers};
use crate::error::{ensure, Error, Result};
use crate::harmony::{self, HarmonyParams};

/// Largest device count accepted by [`grid_search_full`].
pub const FULL_SEARCH_MAX_DEVICES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    /// Cells of equal width in `ln x`; needs `lo > 0`.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl Axis {
    pub fn linear(lo: f64, hi: f64, points: usize) -> Self {
        Self {
            lo,
            hi,
            points,
            spacing: Spacing::Linear,
        }
    }

    pub fn log(lo: f64, hi: f64, points: usize) -> Self {
        Self {
            lo,
            hi,
            points,
            spacing: Spacing::Log,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.lo.is_finite() && self.hi.is_finite(), "axis.lo", self.lo)?;
        ensure(self.lo < self.hi, "axis.hi", self.hi)?;
        ensure(self.points >= 2, "axis.points", self.points as f64)?;
        if self.spacing == Spacing::Log {
            ensure(self.lo > 0.0, "axis.lo", self.lo)?;
        }
        Ok(())
    }

    fn warp(&self, x: f64) -> f64 {
        match self.spacing {
            Spacing::Linear => x,
            Spacing::Log => x.ln(),
        }
    }

    fn unwarp(&self, u: f64) -> f64 {
        match self.spacing {
            Spacing::Linear => u,
            Spacing::Log => u.exp(),
        }
    }

    /// Cell width in the warped coordinate.
    pub fn cell_width(&self) -> f64 {
        (self.warp(self.hi) - self.warp(self.lo)) / self.points as f64
    }

    /// Center of cell `i`.
    pub fn center(&self, i: usize) -> f64 {
        let u = self.warp(self.lo) + (i as f64 + 0.5) * self.cell_width();
        self.unwarp(u)
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.center(i)).collect()
    }

    /// Distance between two points of the axis range, in cells.
    pub fn cells_between(&self, a: f64, b: f64) -> f64 {
        (self.warp(a) - self.warp(b)).abs() / self.cell_width()
    }

    /// Same range with `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            points: self.points * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub p: Axis,
    pub f: Axis,
    pub theta: Axis,
}

impl GridSpec {
    /// Grid spanning every device's box: log-spaced power up to the largest
    /// power cap, linear frequency up to the largest `f_max`, linear `θ`
    /// over the accuracy bounds.
    pub fn covering(devices: &[DeviceProfile], acc: &AccuracyConfig, points: usize) -> Self {
        let p_hi = devices.iter().map(|d| d.power_cap()).fold(0.0, f64::max);
        let f_hi = devices.iter().map(|d| d.f_max).fold(0.0, f64::max);
        Self {
            p: Axis::log(p_hi * 1e-8, p_hi, points),
            f: Axis::linear(0.0, f_hi, points),
            theta: Axis::linear(acc.theta_lo, acc.theta_hi, points),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.p.validate()?;
        self.f.validate()?;
        self.theta.validate()?;
        ensure(self.p.lo >= 0.0, "p.lo", self.p.lo)?;
        ensure(self.f.lo >= 0.0, "f.lo", self.f.lo)?;
        ensure(self.theta.lo >= 0.0 && self.theta.hi <= 1.0, "theta.hi", self.theta.hi)
    }
}

/// Lowest value, ties to the lowest index; NaN counts as `+inf`.
fn better(a: (usize, f64), b: (usize, f64)) -> (usize, f64) {
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    match key(a.1).total_cmp(&key(b.1)) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if a.0 <= b.0 {
                a
            } else {
                b
            }
        }
    }
}

fn par_argmin<F>(count: usize, eval: F) -> Result<Option<(usize, f64)>>
where
    F: Fn(usize) -> Result<Option<f64>> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| eval(i).map(|v| v.map(|v| (i, v))))
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (Some(a), Some(b)) => Some(better(a, b)),
                    (a, None) => a,
                    (None, b) => b,
                })
            },
        )
}

/// Grid minimum of one device's Lagrangian share in `(p, f)` at fixed
/// multipliers and `θ`. Returns `(p, f, value)` at the best cell center.
pub fn grid_search_pf(
    dev: &DeviceProfile,
    m: &Multipliers,
    theta: f64,
    acc: &AccuracyConfig,
    spec: &GridSpec,
) -> Result<(f64, f64, f64)> {
    spec.validate()?;
    let (ps, fs) = (spec.p.centers(), spec.f.centers());
    let nf = fs.len();
    let best = par_argmin(ps.len() * nf, |k| {
        dual::lagrangian_value(dev, ps[k / nf], fs[k % nf], 0.0, m, theta, acc, 1).map(Some)
    })?
    .expect("grid is non-empty");
    Ok((ps[best.0 / nf], fs[best.0 % nf], best.1))
}

/// Dense scan of the penalized accuracy objective at fixed `(p, f)`.
/// `alloc.theta` is ignored.
pub fn grid_search_theta(
    devices: &[DeviceProfile],
    alloc: &Allocation,
    acc: &AccuracyConfig,
    axis: &Axis,
    params: &HarmonyParams,
) -> Result<(f64, f64)> {
    axis.validate()?;
    let thetas = axis.centers();
    let best = par_argmin(thetas.len(), |i| {
        harmony::penalized_objective(thetas[i], devices, alloc, acc, params).map(Some)
    })?
    .expect("grid is non-empty");
    Ok((thetas[best.0], best.1))
}

/// Cheapest feasible `(p, f)` cell of one device at fixed `θ`, as
/// `(p index, f index, total cost)`.
fn best_device_cell(
    dev: &DeviceProfile,
    theta: f64,
    acc: &AccuracyConfig,
    ps: &[f64],
    fs: &[f64],
) -> Result<Option<(usize, usize, f64)>> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, &p) in ps.iter().enumerate() {
        if p > dev.power_cap() {
            break;
        }
        for (j, &f) in fs.iter().enumerate() {
            if f > dev.f_max {
                break;
            }
            if !cost::feasibility_residuals(dev, p, f, theta)?.within(dev, 0.0) {
                continue;
            }
            let total = cost::total_cost(dev, p, f, theta, acc)?.total;
            if best.is_none_or(|(_, _, b)| total < b) {
                best = Some((i, j, total));
            }
        }
    }
    Ok(best)
}

/// Exhaustive scan of the min-max problem over `θ` and every device's
/// `(p, f)`, restricted to feasible cells.
///
/// For fixed `θ` the devices do not interact, so the worst-case cost over
/// the product grid is minimized by giving each device its own cheapest
/// feasible cell. The scan therefore costs `θ·p·f·N` evaluations instead of
/// `θ·(p·f)^N` while returning the same optimal value.
pub fn grid_search_full(
    devices: &[DeviceProfile],
    acc: &AccuracyConfig,
    spec: &GridSpec,
) -> Result<(Allocation, f64)> {
    if devices.len() > FULL_SEARCH_MAX_DEVICES {
        return Err(Error::OracleTooLarge {
            devices: devices.len(),
        });
    }
    ensure(!devices.is_empty(), "devices", 0.0)?;
    spec.validate()?;
    acc.validate()?;
    let (ps, fs, thetas) = (spec.p.centers(), spec.f.centers(), spec.theta.centers());

    let best = par_argmin(thetas.len(), |t| {
        let mut worst: f64 = f64::NEG_INFINITY;
        for dev in devices {
            match best_device_cell(dev, thetas[t], acc, &ps, &fs)? {
                Some((_, _, v)) => worst = worst.max(v),
                None => return Ok(None),
            }
        }
        Ok(Some(worst))
    })?;
    let (t, value) = best.ok_or_else(|| Error::InfeasibleScenario("no feasible grid cell".into()))?;

    let theta = thetas[t];
    let mut alloc = Allocation {
        p: Vec::with_capacity(devices.len()),
        f: Vec::with_capacity(devices.len()),
        theta,
    };
    for dev in devices {
        let (i, j, _) = best_device_cell(dev, theta, acc, &ps, &fs)?.expect("cell found during the scan");
        alloc.p.push(ps[i]);
        alloc.f.push(fs[j]);
    }
    Ok((alloc, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::tests::unit_device;

    fn acc() -> AccuracyConfig {
        AccuracyConfig::default()
    }

    #[test]
    fn axis_centers() {
        let a = Axis::linear(0.0, 1.0, 4);
        assert_eq!(a.centers(), vec![0.125, 0.375, 0.625, 0.875]);
        let l = Axis::log(1.0, 100.0, 2);
        assert!((l.center(0) - 10f64.sqrt()).abs() < 1e-12);
        assert!((l.center(1) - 1000f64.sqrt()).abs() < 1e-12);
        assert!((l.cells_between(1.0, 100.0) - 2.0).abs() < 1e-12);
        assert!(Axis::linear(1.0, 1.0, 3).validate().is_err());
        assert!(Axis::linear(0.0, 1.0, 1).validate().is_err());
        assert!(Axis::log(0.0, 1.0, 3).validate().is_err());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let r = par_argmin(1000, |_| Ok(Some(1.0))).unwrap().unwrap();
        assert_eq!(r.0, 0);
        let r = par_argmin(1000, |i| Ok(Some(if i % 7 == 3 { 0.0 } else { 1.0 }))).unwrap().unwrap();
        assert_eq!(r.0, 3);
    }

    #[test]
    fn pf_grid_brackets_analytic_minimizer() {
        let dev = unit_device();
        let m = Multipliers {
            lam: 0.3,
            beta: 0.01,
            mu: 0.2,
            phi: 0.5,
        };
        let theta = 0.2;
        let spec = GridSpec::covering(&[dev], &acc(), 200);
        let (p, f, v) = grid_search_pf(&dev, &m, theta, &acc(), &spec).unwrap();
        let fs = dual::solve_f(&dev, &m, theta, &acc()).unwrap();
        let ps = dual::solve_p(&dev, &m, theta, &acc()).unwrap();
        assert!(spec.f.cells_between(f, fs) <= 1.0, "{f} vs {fs}");
        assert!(spec.p.cells_between(p, ps) <= 1.0, "{p} vs {ps}");
        let exact = dual::lagrangian_value(&dev, ps, fs, 0.0, &m, theta, &acc(), 1).unwrap();
        assert!(v >= exact - 1e-12);
        assert!((v - exact).abs() <= 1e-3 * exact.abs().max(1.0));
    }

    #[test]
    fn refinement_never_hurts() {
        let dev = unit_device();
        let m = Multipliers {
            lam: 0.1,
            beta: 0.0,
            mu: 0.0,
            phi: 1.0,
        };
        let spec = GridSpec::covering(&[dev], &acc(), 50);
        let fine = GridSpec {
            p: spec.p.refined(3),
            f: spec.f.refined(3),
            theta: spec.theta.refined(3),
        };
        // Tripling keeps every coarse center on the fine grid.
        let (_, _, coarse) = grid_search_pf(&dev, &m, 0.3, &acc(), &spec).unwrap();
        let (_, _, refined) = grid_search_pf(&dev, &m, 0.3, &acc(), &fine).unwrap();
        assert!(refined <= coarse);

        let alloc = Allocation {
            p: vec![1.0],
            f: vec![1.0],
            theta: 0.5,
        };
        let h = HarmonyParams::default();
        let (_, coarse) = grid_search_theta(&[dev], &alloc, &acc(), &spec.theta, &h).unwrap();
        let (_, refined) = grid_search_theta(&[dev], &alloc, &acc(), &fine.theta, &h).unwrap();
        assert!(refined <= coarse);
    }

    #[test]
    fn theta_grid_contains_convex_minimizer() {
        let dev = unit_device();
        let alloc = Allocation {
            p: vec![1.0],
            f: vec![2.0],
            theta: 0.5,
        };
        let axis = Axis::linear(1e-4, 0.999, 10_000);
        let h = HarmonyParams::default();
        let (theta, value) = grid_search_theta(&[dev], &alloc, &acc(), &axis, &h).unwrap();
        // Latency is slack here, so the objective is K(θ)·(c·(-ln θ) + d).
        let c = cost::total_cost(&dev, 1.0, 2.0, (-1.0f64).exp(), &acc()).unwrap();
        let k = cost::round_count((-1.0f64).exp(), &acc()).unwrap();
        let per_round_cmp = dev.w_time * c.t_cmp + dev.w_energy * c.e_cmp;
        let per_round_up = dev.w_time * c.t_up + dev.w_energy * c.e_up;
        let g = |t: f64| (per_round_cmp * -t.ln() + per_round_up) / (1.0 - t) * k * (1.0 - (-1.0f64).exp());
        let mut lo: f64 = 1e-4;
        let mut hi: f64 = 0.999;
        for _ in 0..200 {
            let (a, b) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
            if g(a) < g(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        assert!(axis.cells_between(theta, lo) <= 1.0, "{theta} vs {lo}");
        assert!((value - g(lo)).abs() <= 1e-6 * value);
    }

    #[test]
    fn full_search_matches_naive_enumeration() {
        let a = unit_device();
        let b = DeviceProfile {
            d_size: 9e6,
            sigma: 300.0,
            t_max: 3.0,
            ..unit_device()
        };
        let devices = [a, b];
        let spec = GridSpec {
            p: Axis::log(1e-3, 16.0, 6),
            f: Axis::linear(0.0, 2.0, 6),
            theta: Axis::linear(1e-3, 0.99, 8),
        };
        let (alloc, value) = grid_search_full(&devices, &acc(), &spec).unwrap();
        assert!(cost::allocation_feasible(&devices, &alloc, 0.0));
        let (worst, _) = dual::xi_from_primal(&devices, &alloc, &acc()).unwrap();
        assert_eq!(worst, value);

        let (ps, fs, ts) = (spec.p.centers(), spec.f.centers(), spec.theta.centers());
        let mut naive = f64::INFINITY;
        for &t in &ts {
            for &p0 in &ps {
                for &f0 in &fs {
                    for &p1 in &ps {
                        for &f1 in &fs {
                            let cand = Allocation {
                                p: vec![p0, p1],
                                f: vec![f0, f1],
                                theta: t,
                            };
                            if !cost::allocation_feasible(&devices, &cand, 0.0) {
                                continue;
                            }
                            let (w, _) = dual::xi_from_primal(&devices, &cand, &acc()).unwrap();
                            naive = naive.min(w);
                        }
                    }
                }
            }
        }
        assert_eq!(value, naive);
    }

    #[test]
    fn full_search_dominates_hand_picked_point() {
        let dev = unit_device();
        let spec = GridSpec::covering(&[dev], &acc(), 100);
        let (_, value) = grid_search_full(&[dev], &acc(), &spec).unwrap();
        let hand = Allocation {
            p: vec![1.0],
            f: vec![1.5],
            theta: 0.2,
        };
        assert!(cost::allocation_feasible(&[dev], &hand, 0.0));
        let (hand_value, _) = dual::xi_from_primal(&[dev], &hand, &acc()).unwrap();
        assert!(value <= hand_value);
    }

    #[test]
    fn full_search_errors() {
        let dev = unit_device();
        let spec = GridSpec::covering(&[dev], &acc(), 10);
        assert!(matches!(
            grid_search_full(&[dev; 4], &acc(), &spec),
            Err(Error::OracleTooLarge { devices: 4 })
        ));
        let tight = DeviceProfile { t_max: 0.001, ..dev };
        assert!(matches!(
            grid_search_full(&[tight], &acc(), &spec),
            Err(Error::InfeasibleScenario(_))
        ));
    }

    #[test]
    fn results_are_deterministic() {
        let dev = unit_device();
        let spec = GridSpec::covering(&[dev], &acc(), 40);
        let a = grid_search_full(&[dev, dev], &acc(), &spec).unwrap();
        let b = grid_search_full(&[dev, dev], &acc(), &spec).unwrap();
        assert_eq!(a, b);
    }
}
