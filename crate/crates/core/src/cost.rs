//! Latency, energy and weighted cost of one device.
//!
//! Work is counted in gigacycles and CPU frequency in GHz, so computation
//! latency comes out in seconds. Local training needs `log(1/θ)` passes
//! over the data, and the number of global rounds scales as
//! `epsilon_factor / (1 - θ)`.

use crate::error::{ensure, Result};

/// Per-device constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceProfile {
    /// Local dataset size, bytes.
    pub d_size: f64,
    /// CPU cycles needed per byte.
    pub b_cycles: f64,
    /// Size of the uploaded parameters, bytes.
    pub c_payload: f64,
    /// Switched-capacitance coefficient, J per gigacycle per GHz^(ζ-1).
    pub rho: f64,
    /// Exponent of the CPU power model, at least 2.
    pub zeta: f64,
    /// GHz.
    pub f_max: f64,
    /// Per-round latency budget, seconds.
    pub t_max: f64,
    /// Upload energy budget, joules.
    pub e_up_max: f64,
    pub w_time: f64,
    pub w_energy: f64,
    /// Connection coefficient of the frozen channel, bytes/s per sqrt(W).
    pub sigma: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        ensure(self.d_size > 0.0, "d_size", self.d_size)?;
        ensure(self.b_cycles > 0.0, "b_cycles", self.b_cycles)?;
        ensure(self.c_payload > 0.0, "c_payload", self.c_payload)?;
        ensure(self.rho > 0.0, "rho", self.rho)?;
        ensure(self.zeta >= 2.0, "zeta", self.zeta)?;
        ensure(self.f_max > 0.0, "f_max", self.f_max)?;
        ensure(self.t_max > 0.0, "t_max", self.t_max)?;
        ensure(self.e_up_max > 0.0, "e_up_max", self.e_up_max)?;
        ensure(self.sigma > 0.0, "sigma", self.sigma)?;
        ensure((0.0..=1.0).contains(&self.w_time), "w_time", self.w_time)?;
        ensure((0.0..=1.0).contains(&self.w_energy), "w_energy", self.w_energy)?;
        ensure(
            (self.w_time + self.w_energy - 1.0).abs() < 1e-9,
            "w_time + w_energy",
            self.w_time + self.w_energy,
        )
    }

    /// Cycles for one local pass over the dataset, in gigacycles.
    pub fn workload(&self) -> f64 {
        self.d_size * self.b_cycles * 1e-9
    }

    /// Largest transmit power that respects the upload-energy budget,
    /// `(e_up_max * sigma / c_payload)^2`.
    pub fn power_cap(&self) -> f64 {
        let s = self.e_up_max * self.sigma / self.c_payload;
        s * s
    }
}

/// Bounds and scaling of the shared local accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyConfig {
    /// Starting accuracy for the alternating optimizer.
    pub theta0: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    /// Stands in for the `O(log(1/ε))` factor of the round count.
    pub epsilon_factor: f64,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        Self {
            theta0: 0.5,
            theta_lo: 1e-4,
            theta_hi: 0.999,
            epsilon_factor: 1.0,
        }
    }
}

impl AccuracyConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.theta_lo > 0.0, "theta_lo", self.theta_lo)?;
        ensure(self.theta_hi < 1.0, "theta_hi", self.theta_hi)?;
        ensure(self.theta_lo <= self.theta_hi, "theta_lo", self.theta_lo)?;
        ensure(
            (self.theta_lo..=self.theta_hi).contains(&self.theta0),
            "theta0",
            self.theta0,
        )?;
        ensure(self.epsilon_factor > 0.0, "epsilon_factor", self.epsilon_factor)
    }
}

/// One decision point: per-device power (W) and frequency (GHz) plus the
/// shared local accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub p: Vec<f64>,
    pub f: Vec<f64>,
    pub theta: f64,
}

/// Cost breakdown of a single device at one allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceCost {
    pub t_cmp: f64,
    pub t_up: f64,
    pub e_cmp: f64,
    pub e_up: f64,
    /// Weighted latency/energy cost of one global round.
    pub per_round: f64,
    /// `per_round` scaled by the round count.
    pub total: f64,
}

/// Cost breakdown of a whole fleet.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub t_cmp: Vec<f64>,
    pub t_up: Vec<f64>,
    pub e_cmp: Vec<f64>,
    pub e_up: Vec<f64>,
    pub per_round_cost: Vec<f64>,
    pub total_cost: Vec<f64>,
    pub worst_cost: f64,
    /// Lowest index attaining `worst_cost`.
    pub worst_device: usize,
}

fn log_inv(theta: f64) -> Result<f64> {
    ensure(theta > 0.0 && theta < 1.0, "theta", theta)?;
    Ok(-theta.ln())
}

/// Computation latency of one round, seconds.
pub fn t_cmp(dev: &DeviceProfile, f: f64, theta: f64) -> Result<f64> {
    ensure(f > 0.0, "f", f)?;
    Ok(log_inv(theta)? * dev.workload() / f)
}

/// Computation energy of one round, joules.
pub fn e_cmp(dev: &DeviceProfile, f: f64, theta: f64) -> Result<f64> {
    ensure(f > 0.0, "f", f)?;
    Ok(log_inv(theta)? * dev.rho * dev.workload() * f.powf(dev.zeta - 1.0))
}

/// Upload time, seconds.
pub fn t_up(dev: &DeviceProfile, p: f64) -> Result<f64> {
    ensure(p > 0.0, "p", p)?;
    Ok(dev.c_payload / (dev.sigma * p.sqrt()))
}

/// Upload energy, joules; equals `p * t_up`.
pub fn e_up(dev: &DeviceProfile, p: f64) -> Result<f64> {
    ensure(p >= 0.0, "p", p)?;
    Ok(dev.c_payload * p.sqrt() / dev.sigma)
}

/// Number of global rounds needed at local accuracy `theta`.
pub fn round_count(theta: f64, cfg: &AccuracyConfig) -> Result<f64> {
    ensure((0.0..1.0).contains(&theta), "theta", theta)?;
    Ok(cfg.epsilon_factor / (1.0 - theta))
}

/// Full cost of one device.
pub fn total_cost(
    dev: &DeviceProfile,
    p: f64,
    f: f64,
    theta: f64,
    cfg: &AccuracyConfig,
) -> Result<DeviceCost> {
    let t_cmp = t_cmp(dev, f, theta)?;
    let e_cmp = e_cmp(dev, f, theta)?;
    let t_up = t_up(dev, p)?;
    let e_up = e_up(dev, p)?;
    let per_round = dev.w_energy * (e_cmp + e_up) + dev.w_time * (t_cmp + t_up);
    Ok(DeviceCost {
        t_cmp,
        t_up,
        e_cmp,
        e_up,
        per_round,
        total: round_count(theta, cfg)? * per_round,
    })
}

/// Costs of every device at `alloc`.
pub fn cost_report(
    devices: &[DeviceProfile],
    alloc: &Allocation,
    cfg: &AccuracyConfig,
) -> Result<CostReport> {
    let n = devices.len();
    let mut report = CostReport {
        t_cmp: Vec::with_capacity(n),
        t_up: Vec::with_capacity(n),
        e_cmp: Vec::with_capacity(n),
        e_up: Vec::with_capacity(n),
        per_round_cost: Vec::with_capacity(n),
        total_cost: Vec::with_capacity(n),
        worst_cost: 0.0,
        worst_device: 0,
    };
    for (i, dev) in devices.iter().enumerate() {
        let c = total_cost(dev, alloc.p[i], alloc.f[i], alloc.theta, cfg)?;
        report.t_cmp.push(c.t_cmp);
        report.t_up.push(c.t_up);
        report.e_cmp.push(c.e_cmp);
        report.e_up.push(c.e_up);
        report.per_round_cost.push(c.per_round);
        report.total_cost.push(c.total);
        if i == 0 || c.total > report.worst_cost {
            report.worst_cost = c.total;
            report.worst_device = i;
        }
    }
    Ok(report)
}

/// Constraint residuals; a point is feasible when all are `<= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `t_cmp + t_up - t_max`.
    pub latency: f64,
    /// `e_up - e_up_max`.
    pub upload_energy: f64,
    /// `f - f_max`.
    pub frequency: f64,
}

impl Residuals {
    /// Feasibility with slack scaled by each budget: residual `<= tol * (1 + budget)`.
    pub fn within(&self, dev: &DeviceProfile, tol: f64) -> bool {
        self.latency <= tol * (1.0 + dev.t_max)
            && self.upload_energy <= tol * (1.0 + dev.e_up_max)
            && self.frequency <= tol * (1.0 + dev.f_max)
    }

    pub fn max(&self) -> f64 {
        self.latency.max(self.upload_energy).max(self.frequency)
    }
}

pub fn feasibility_residuals(dev: &DeviceProfile, p: f64, f: f64, theta: f64) -> Result<Residuals> {
    Ok(Residuals {
        latency: t_cmp(dev, f, theta)? + t_up(dev, p)? - dev.t_max,
        upload_energy: e_up(dev, p)? - dev.e_up_max,
        frequency: f - dev.f_max,
    })
}

/// Whether every device of `alloc` satisfies its constraints within `tol`.
pub fn allocation_feasible(devices: &[DeviceProfile], alloc: &Allocation, tol: f64) -> bool {
    if !(alloc.theta > 0.0 && alloc.theta < 1.0) {
        return false;
    }
    devices.iter().enumerate().all(|(i, dev)| {
        feasibility_residuals(dev, alloc.p[i], alloc.f[i], alloc.theta)
            .map(|r| r.within(dev, tol))
            .unwrap_or(false)
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    /// D·B = 0.2 gigacycles, C = 500, σ = 100, ρ = 0.05, ζ = 3.
    pub(crate) fn unit_device() -> DeviceProfile {
        DeviceProfile {
            d_size: 5e6,
            b_cycles: 40.0,
            c_payload: 500.0,
            rho: 0.05,
            zeta: 3.0,
            f_max: 2.0,
            t_max: 10.0,
            e_up_max: 20.0,
            w_time: 0.5,
            w_energy: 0.5,
            sigma: 100.0,
        }
    }

    #[test]
    fn computation_terms() {
        let dev = unit_device();
        let theta = 1.0 / E;
        assert_relative_eq!(t_cmp(&dev, 2.0, theta).unwrap(), 0.1, max_relative = 1e-14);
        assert_relative_eq!(e_cmp(&dev, 2.0, theta).unwrap(), 0.04, max_relative = 1e-14);
        assert_relative_eq!(
            t_cmp(&dev, 1.0, theta).unwrap(),
            2.0 * t_cmp(&dev, 2.0, theta).unwrap(),
            max_relative = 1e-14
        );
        // ζ = 3: energy grows with f².
        assert_relative_eq!(
            e_cmp(&dev, 2.0, theta).unwrap(),
            4.0 * e_cmp(&dev, 1.0, theta).unwrap(),
            max_relative = 1e-14
        );
        assert!(t_cmp(&dev, 2.0, 1.0 - 1e-12).unwrap() < 1e-10);
        assert!(e_cmp(&dev, 2.0, 1.0 - 1e-12).unwrap() < 1e-10);
        assert!(t_cmp(&dev, 0.0, 0.5).is_err());
        assert!(e_cmp(&dev, -1.0, 0.5).is_err());
        assert!(t_cmp(&dev, 1.0, 1.0).is_err());
    }

    #[test]
    fn upload_terms() {
        let dev = unit_device();
        assert_relative_eq!(t_up(&dev, 4.0).unwrap(), 2.5);
        assert_relative_eq!(e_up(&dev, 4.0).unwrap(), 10.0);
        assert_relative_eq!(e_up(&dev, 4.0).unwrap(), 4.0 * t_up(&dev, 4.0).unwrap());
        assert_relative_eq!(t_up(&dev, 16.0).unwrap(), 0.5 * t_up(&dev, 4.0).unwrap());
        assert_eq!(e_up(&dev, 0.0).unwrap(), 0.0);
        assert!(t_up(&dev, 0.0).is_err());
        let empty = DeviceProfile {
            c_payload: 1e-300,
            ..dev
        };
        assert!(t_up(&empty, 4.0).unwrap() < 1e-290);
    }

    #[test]
    fn round_counts() {
        let cfg = AccuracyConfig::default();
        assert_relative_eq!(round_count(0.5, &cfg).unwrap(), 2.0);
        assert_relative_eq!(round_count(1e-12, &cfg).unwrap(), 1.0, max_relative = 1e-11);
        assert_relative_eq!(round_count(0.9, &cfg).unwrap(), 10.0, max_relative = 1e-14);
        assert!(round_count(1.0, &cfg).is_err());
    }

    #[test]
    fn weight_extremes_and_composition() {
        let cfg = AccuracyConfig::default();
        let theta = 1.0 / E;
        let k = round_count(theta, &cfg).unwrap();
        let latency = DeviceProfile {
            w_time: 1.0,
            w_energy: 0.0,
            ..unit_device()
        };
        let c = total_cost(&latency, 4.0, 2.0, theta, &cfg).unwrap();
        assert_relative_eq!(c.total, k * (c.t_cmp + c.t_up), max_relative = 1e-14);
        let energy = DeviceProfile {
            w_time: 0.0,
            w_energy: 1.0,
            ..unit_device()
        };
        let c = total_cost(&energy, 4.0, 2.0, theta, &cfg).unwrap();
        assert_relative_eq!(c.total, k * (c.e_cmp + c.e_up), max_relative = 1e-14);
        let c = total_cost(&unit_device(), 4.0, 2.0, theta, &cfg).unwrap();
        assert_relative_eq!(c.total, k * 0.5 * (0.04 + 10.0 + 0.1 + 2.5), max_relative = 1e-13);
    }

    #[test]
    fn residual_boundaries() {
        let dev = unit_device();
        let r = feasibility_residuals(&dev, 1.0, 1.0, 0.5).unwrap();
        assert!(r.latency < 0.0 && r.upload_energy < 0.0 && r.frequency < 0.0);
        let r = feasibility_residuals(&dev, 1.0, dev.f_max, 0.5).unwrap();
        assert_eq!(r.frequency, 0.0);
        let r = feasibility_residuals(&dev, dev.power_cap(), 1.0, 0.5).unwrap();
        assert_relative_eq!(r.upload_energy, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn report_tracks_worst_device_lowest_index() {
        let devs = [unit_device(), unit_device(), unit_device()];
        let alloc = Allocation {
            p: vec![1.0; 3],
            f: vec![1.0; 3],
            theta: 0.5,
        };
        let r = cost_report(&devs, &alloc, &AccuracyConfig::default()).unwrap();
        assert_eq!(r.worst_device, 0);
        assert_eq!(r.worst_cost, r.total_cost[0]);
    }

    #[test]
    fn strictly_convex_in_frequency_and_sqrt_power() {
        let dev = unit_device();
        let cfg = AccuracyConfig::default();
        let cost = |p: f64, f: f64| total_cost(&dev, p, f, 0.3, &cfg).unwrap().total;
        let h = 1e-3;
        let mut f = 0.05;
        while f + h <= dev.f_max {
            let d2 = cost(1.0, f - h) - 2.0 * cost(1.0, f) + cost(1.0, f + h);
            assert!(d2 > 0.0, "f = {f}");
            f += 0.01;
        }
        let mut s = 0.05;
        while s < 20.0 {
            let d2 = cost((s - h) * (s - h), 1.0) - 2.0 * cost(s * s, 1.0) + cost((s + h) * (s + h), 1.0);
            assert!(d2 > 0.0, "s = {s}");
            s += 0.05;
        }
    }

    #[test]
    fn cost_blows_up_at_both_accuracy_ends() {
        let dev = unit_device();
        let cfg = AccuracyConfig::default();
        let at = |t: f64| total_cost(&dev, 1.0, 1.0, t, &cfg).unwrap().total;
        // Local passes grow only like ln(1/θ), so the low end needs a tiny θ.
        assert!(at(1e-200) > at(0.5));
        assert!(at(1.0 - 1e-6) > at(0.5));
    }

    proptest! {
        #[test]
        fn upload_energy_time_product(p in 1e-6f64..1e4, c in 1.0f64..1e5, sigma in 1.0f64..1e5) {
            let dev = DeviceProfile { c_payload: c, sigma, ..unit_device() };
            let prod = e_up(&dev, p).unwrap() * t_up(&dev, p).unwrap();
            let expect = c * c / (sigma * sigma);
            prop_assert!((prod - expect).abs() <= 1e-12 * expect);
        }

        #[test]
        fn residuals_monotone_in_power(p in 1e-3f64..100.0, dp in 1e-3f64..100.0) {
            let dev = unit_device();
            let a = feasibility_residuals(&dev, p, 1.0, 0.5).unwrap();
            let b = feasibility_residuals(&dev, p + dp, 1.0, 0.5).unwrap();
            prop_assert!(b.upload_energy > a.upload_energy);
            prop_assert!(b.latency < a.latency);
        }
    }
}
