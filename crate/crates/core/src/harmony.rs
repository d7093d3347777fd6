//! Self-adaptive global-best harmony search over the shared local accuracy.
//!
//! For fixed powers and frequencies the accuracy `θ` is a single bounded
//! scalar. The latency constraint is folded into the objective as a hinge
//! penalty, and the resulting 1-D problem is searched with a small harmony
//! memory: each improvisation either perturbs a remembered value by the
//! current bandwidth (and, with the pitch-adjustment rate, snaps to the best
//! remembered value) or samples the bounds uniformly. A candidate replaces
//! the worst memory slot when it is strictly better.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cost::{self, AccuracyConfig, Allocation, DeviceProfile};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonyParams {
    /// Harmony memory size.
    pub hms: usize,
    pub hmcr_mean: f64,
    pub hmcr_sd: f64,
    pub par_mean: f64,
    pub par_sd: f64,
    pub bw_min: f64,
    pub bw_max: f64,
    /// Number of improvisations.
    pub t_max_improv: usize,
    /// Penalty scale; violations are weighted by `1 / penalty_delta`.
    pub penalty_delta: f64,
}

impl Default for HarmonyParams {
    fn default() -> Self {
        Self {
            hms: 5,
            hmcr_mean: 0.98,
            hmcr_sd: 0.01,
            par_mean: 0.9,
            par_sd: 0.05,
            bw_min: 0.0005,
            bw_max: 0.05,
            t_max_improv: 5000,
            penalty_delta: 1e-3,
        }
    }
}

impl HarmonyParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.hms >= 2, "hms", self.hms as f64)?;
        ensure(self.bw_min > 0.0, "bw_min", self.bw_min)?;
        ensure(self.bw_min <= self.bw_max, "bw_max", self.bw_max)?;
        ensure(self.t_max_improv >= 1, "t_max_improv", self.t_max_improv as f64)?;
        ensure(self.penalty_delta > 0.0, "penalty_delta", self.penalty_delta)?;
        ensure(self.hmcr_sd >= 0.0 && self.hmcr_sd.is_finite(), "hmcr_sd", self.hmcr_sd)?;
        ensure(self.par_sd >= 0.0 && self.par_sd.is_finite(), "par_sd", self.par_sd)
    }
}

/// Remembered candidates and their objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonyMemory {
    pub slots: Vec<(f64, f64)>,
    pub best_index: usize,
    pub worst_index: usize,
}

impl HarmonyMemory {
    pub fn new(slots: Vec<(f64, f64)>) -> Self {
        let mut hm = Self {
            slots,
            best_index: 0,
            worst_index: 0,
        };
        hm.reindex();
        hm
    }

    fn reindex(&mut self) {
        let (mut best, mut worst) = (0, 0);
        for (i, &(_, v)) in self.slots.iter().enumerate() {
            if v < self.slots[best].1 {
                best = i;
            }
            if v > self.slots[worst].1 {
                worst = i;
            }
        }
        self.best_index = best;
        self.worst_index = worst;
    }

    pub fn best(&self) -> (f64, f64) {
        self.slots[self.best_index]
    }

    pub fn worst(&self) -> (f64, f64) {
        self.slots[self.worst_index]
    }

    /// Replaces the worst slot when `value` is strictly lower. Returns
    /// whether the memory changed.
    pub fn offer(&mut self, theta: f64, value: f64) -> bool {
        if value < self.worst().1 {
            self.slots[self.worst_index] = (theta, value);
            self.reindex();
            true
        } else {
            false
        }
    }
}

/// Worst-case total cost plus the latency hinge penalty, for fixed `(p, f)`.
pub fn penalized_objective(
    theta: f64,
    devices: &[DeviceProfile],
    alloc: &Allocation,
    acc: &AccuracyConfig,
    params: &HarmonyParams,
) -> Result<f64> {
    ensure(theta > 0.0 && theta < 1.0, "theta", theta)?;
    let mut worst = f64::NEG_INFINITY;
    let mut penalty = 0.0;
    for (i, dev) in devices.iter().enumerate() {
        let c = cost::total_cost(dev, alloc.p[i], alloc.f[i], theta, acc)?;
        worst = worst.max(c.total);
        penalty += (c.t_cmp + c.t_up - dev.t_max).max(0.0);
    }
    Ok(worst + penalty / params.penalty_delta)
}

/// Bandwidth schedule: linear decay from `bw_max` to `bw_min` over the
/// first half of the improvisations, then flat.
pub fn bw_schedule(t: usize, params: &HarmonyParams) -> f64 {
    let total = params.t_max_improv as f64;
    let t = t as f64;
    if t < total / 2.0 {
        params.bw_max - (params.bw_max - params.bw_min) / total * 2.0 * t
    } else {
        params.bw_min
    }
}

/// Draws `(hmcr, par)` from their clipped normals, in that order.
pub fn draw_rates<R: Rng + ?Sized>(rng: &mut R, params: &HarmonyParams) -> (f64, f64) {
    let hmcr = Normal::new(params.hmcr_mean, params.hmcr_sd)
        .expect("validated sd")
        .sample(rng);
    let par = Normal::new(params.par_mean, params.par_sd)
        .expect("validated sd")
        .sample(rng);
    (hmcr.clamp(0.9, 1.0), par.clamp(0.0, 1.0))
}

/// One improvisation with explicit rates.
///
/// Draw order: `l1`; then on the memory branch the slot index, the sign
/// coin, `l` and `l2`; on the random branch only `l`.
pub fn improvise_with<R: Rng + ?Sized>(
    hm: &HarmonyMemory,
    bw: f64,
    hmcr: f64,
    par: f64,
    rng: &mut R,
    bounds: (f64, f64),
) -> f64 {
    let (lo, hi) = bounds;
    let l1: f64 = rng.random();
    let theta = if l1 < hmcr {
        let h = rng.random_range(0..hm.slots.len());
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let l: f64 = rng.random();
        let mut theta = hm.slots[h].0 + sign * l * bw;
        let l2: f64 = rng.random();
        if l2 < par {
            theta = hm.best().0;
        }
        theta
    } else {
        let l: f64 = rng.random();
        lo + l * (hi - lo)
    };
    theta.clamp(lo, hi)
}

/// One improvisation at iteration `t`, drawing fresh rates.
pub fn improvise<R: Rng + ?Sized>(
    hm: &HarmonyMemory,
    t: usize,
    rng: &mut R,
    params: &HarmonyParams,
    bounds: (f64, f64),
) -> f64 {
    let (hmcr, par) = draw_rates(rng, params);
    improvise_with(hm, bw_schedule(t, params), hmcr, par, rng, bounds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonyOutcome {
    pub theta: f64,
    pub value: f64,
    /// Best memory value after initialization and after each improvisation.
    pub trace: Vec<f64>,
    /// Worst memory value, same indexing as `trace`.
    pub worst_trace: Vec<f64>,
    pub memory: HarmonyMemory,
}

/// Minimizes `objective` over `bounds`.
pub fn harmony_search<F, R>(
    mut objective: F,
    bounds: (f64, f64),
    params: &HarmonyParams,
    rng: &mut R,
) -> Result<HarmonyOutcome>
where
    F: FnMut(f64) -> Result<f64>,
    R: Rng + ?Sized,
{
    params.validate()?;
    let (lo, hi) = bounds;
    ensure(lo <= hi, "bounds", hi - lo)?;
    let mut eval = |theta: f64| -> Result<f64> {
        let v = objective(theta)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::ObjectiveEvaluation { theta })
        }
    };

    let mut slots = Vec::with_capacity(params.hms);
    for _ in 0..params.hms {
        let theta = lo + rng.random::<f64>() * (hi - lo);
        slots.push((theta, eval(theta)?));
    }
    let mut hm = HarmonyMemory::new(slots);
    let mut trace = Vec::with_capacity(params.t_max_improv + 1);
    let mut worst_trace = Vec::with_capacity(params.t_max_improv + 1);
    trace.push(hm.best().1);
    worst_trace.push(hm.worst().1);

    for t in 1..=params.t_max_improv {
        let theta = improvise(&hm, t, rng, params, bounds);
        let value = eval(theta)?;
        hm.offer(theta, value);
        trace.push(hm.best().1);
        worst_trace.push(hm.worst().1);
    }

    let (theta, value) = hm.best();
    Ok(HarmonyOutcome {
        theta,
        value,
        trace,
        worst_trace,
        memory: hm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::tests::unit_device;
    use crate::rng::{stream, Purpose};
    use approx::assert_relative_eq;

    fn rng(seed: u64) -> crate::rng::StreamRng {
        stream(seed, 0, Purpose::Fixture)
    }

    fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn bandwidth_schedule() {
        let p = HarmonyParams::default();
        assert_eq!(bw_schedule(0, &p), 0.05);
        assert_eq!(bw_schedule(2500, &p), 0.0005);
        assert_eq!(bw_schedule(5000, &p), 0.0005);
        assert_relative_eq!(bw_schedule(1250, &p), (0.05 + 0.0005) / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn rate_draws() {
        let p = HarmonyParams::default();
        let mut r = rng(1);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (hmcr, par) = draw_rates(&mut r, &p);
            assert!((0.9..=1.0).contains(&hmcr));
            assert!((0.0..=1.0).contains(&par));
            sum += hmcr;
        }
        // Clipped-normal mean: 0.98 - 0.01·(φ(2) - 2·(1 - Φ(2))) ≈ 0.979915.
        assert!((sum / n as f64 - 0.98).abs() < 0.002);

        let fixed = HarmonyParams {
            hmcr_sd: 0.0,
            ..p
        };
        for _ in 0..10 {
            assert_eq!(draw_rates(&mut r, &fixed).0, 0.98);
        }
        let high = HarmonyParams {
            hmcr_mean: 1.5,
            ..p
        };
        assert_eq!(draw_rates(&mut r, &high).0, 1.0);
    }

    fn memory() -> HarmonyMemory {
        HarmonyMemory::new(vec![(0.2, 3.0), (0.4, 1.0), (0.6, 2.0), (0.8, 5.0)])
    }

    #[test]
    fn improvisation_branches() {
        let hm = memory();
        assert_eq!(hm.best_index, 1);
        assert_eq!(hm.worst_index, 3);
        let mut r = rng(2);
        let mut lo_seen = f64::INFINITY;
        let mut hi_seen = f64::NEG_INFINITY;
        for _ in 0..2000 {
            let t = improvise_with(&hm, 0.05, 0.0, 0.5, &mut r, (0.1, 0.9));
            assert!((0.1..=0.9).contains(&t));
            lo_seen = lo_seen.min(t);
            hi_seen = hi_seen.max(t);
        }
        assert!(lo_seen < 0.15 && hi_seen > 0.85);
        for _ in 0..100 {
            assert_eq!(improvise_with(&hm, 0.05, 1.0, 1.0, &mut r, (0.1, 0.9)), 0.4);
            let t = improvise_with(&hm, 0.0, 1.0, 0.0, &mut r, (0.1, 0.9));
            assert!(hm.slots.iter().any(|s| s.0 == t));
        }
    }

    #[test]
    fn offer_replaces_only_on_strict_improvement() {
        let mut hm = memory();
        assert!(!hm.offer(0.5, 5.0));
        assert!(hm.offer(0.5, 4.0));
        assert_eq!(hm.worst().1, 4.0);
        assert!(hm.offer(0.45, 0.5));
        assert_eq!(hm.best(), (0.45, 0.5));
    }

    #[test]
    fn quadratic_minimum() {
        let f = |t: f64| (t - 0.3) * (t - 0.3);
        let out = harmony_search(|t| Ok(f(t)), (0.01, 0.99), &HarmonyParams::default(), &mut rng(3)).unwrap();
        assert!((out.theta - 0.3).abs() < 1e-3, "theta {}", out.theta);
        assert!((golden_section(f, 0.01, 0.99) - 0.3).abs() < 1e-8);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.worst_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.value <= out.trace[0]);
        assert!(out.memory.slots.iter().all(|s| (0.01..=0.99).contains(&s.0)));
    }

    #[test]
    fn constant_objective_has_flat_trace() {
        let out = harmony_search(|_| Ok(2.0), (0.1, 0.9), &HarmonyParams::default(), &mut rng(4)).unwrap();
        assert!(out.trace.iter().all(|&v| v == 2.0));
        assert!(out.memory.slots.iter().any(|s| s.0 == out.theta));
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let err = harmony_search(
            |t| Ok(if t > 0.5 { f64::INFINITY } else { t }),
            (0.0, 1.0),
            &HarmonyParams::default(),
            &mut rng(5),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ObjectiveEvaluation { theta } if theta > 0.5));
    }

    #[test]
    fn seeded_search_is_reproducible() {
        let f = |t: f64| Ok((t - 0.7f64).abs());
        let a = harmony_search(f, (0.0, 1.0), &HarmonyParams::default(), &mut rng(6)).unwrap();
        let b = harmony_search(f, (0.0, 1.0), &HarmonyParams::default(), &mut rng(6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn penalty_terms() {
        let devs = vec![unit_device(); 2];
        let acc = AccuracyConfig::default();
        let params = HarmonyParams::default();
        let alloc = Allocation {
            p: vec![4.0, 4.0],
            f: vec![2.0, 2.0],
            theta: 0.5,
        };
        let worst = |theta: f64| {
            devs.iter()
                .enumerate()
                .map(|(i, d)| cost::total_cost(d, alloc.p[i], alloc.f[i], theta, &acc).unwrap().total)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let v = penalized_objective(0.5, &devs, &alloc, &acc, &params).unwrap();
        assert_eq!(v, worst(0.5));

        // Device 1 gets a budget 0.25 s below its latency.
        let lat = cost::t_cmp(&devs[1], 2.0, 0.5).unwrap() + cost::t_up(&devs[1], 4.0).unwrap();
        let mut tight = devs.clone();
        tight[1].t_max = lat - 0.25;
        let v = penalized_objective(0.5, &tight, &alloc, &acc, &params).unwrap();
        assert_relative_eq!(v, worst(0.5) + 0.25 / params.penalty_delta, max_relative = 1e-12);

        let near_one = penalized_objective(1.0 - 1e-6, &devs, &alloc, &acc, &params).unwrap();
        assert!(near_one > worst(0.5));
        assert!(penalized_objective(1.0, &devs, &alloc, &acc, &params).is_err());
    }
}
