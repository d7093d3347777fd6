//! Seeded scenario generation: device arrivals, dataset sizes and a frozen
//! channel coefficient per device.

use fedalloc::{channel, stream, ChannelState, DeviceProfile, Purpose};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::{DeviceCount, ScenarioConfig};
use crate::error::Result;

/// Device count for `seed`: the fixed count, or the first draw of the
/// arrival stream (at least one device).
pub fn device_count(cfg: &ScenarioConfig, seed: u64) -> usize {
    match cfg.devices {
        DeviceCount::Fixed(n) => n,
        DeviceCount::Poisson(rate) => {
            let mut rng = stream(seed, 0, Purpose::Arrivals);
            let dist = Poisson::new(rate).expect("rate validated positive");
            (dist.sample(&mut rng) as usize).max(1)
        }
    }
}

/// Builds the device list for `seed`. Device `i` draws its dataset size
/// and its channel from its own streams, so adding devices never changes
/// the earlier ones.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<DeviceProfile>> {
    let n = device_count(cfg, seed);
    let (lo, hi) = cfg.dataset_range;
    (0..n as u64)
        .map(|i| {
            let d_size = stream(seed, i, Purpose::Dataset).random_range(lo..=hi);
            let state = ChannelState::warmed(&cfg.channel, &mut stream(seed, i, Purpose::Channel), cfg.burn_in)?;
            let dev = DeviceProfile {
                d_size,
                b_cycles: cfg.b_cycles,
                c_payload: cfg.c_payload,
                rho: cfg.rho,
                zeta: cfg.zeta,
                f_max: cfg.f_max,
                t_max: cfg.t_max,
                e_up_max: cfg.e_up_max,
                w_time: cfg.w_time,
                w_energy: cfg.w_energy,
                sigma: channel::sigma(&state)?,
            };
            dev.validate()?;
            Ok(dev)
        })
        .collect()
}

/// Same devices with every dataset multiplied by `factor`.
pub fn scale_datasets(devices: &[DeviceProfile], factor: f64) -> Vec<DeviceProfile> {
    devices
        .iter()
        .map(|d| DeviceProfile {
            d_size: d.d_size * factor,
            ..*d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_is_deterministic() {
        let cfg = ScenarioConfig::preset(9);
        assert_eq!(generate_scenario(&cfg, 9).unwrap(), generate_scenario(&cfg, 9).unwrap());
        assert_ne!(generate_scenario(&cfg, 9).unwrap(), generate_scenario(&cfg, 10).unwrap());
    }

    #[test]
    fn dataset_sizes_stay_in_range() {
        let cfg = ScenarioConfig::preset(0);
        for seed in 0..20 {
            let devs = generate_scenario(&cfg, seed).unwrap();
            assert_eq!(devs.len(), 10);
            for d in devs {
                assert!((5e6..=10e6).contains(&d.d_size));
                assert!(d.sigma > 0.0);
            }
        }
    }

    #[test]
    fn poisson_count_is_pinned() {
        let cfg = ScenarioConfig {
            devices: DeviceCount::Poisson(3.0),
            ..ScenarioConfig::preset(42)
        };
        let k = device_count(&cfg, 42);
        assert_eq!(k, POISSON_GOLDEN);
        assert_eq!(generate_scenario(&cfg, 42).unwrap().len(), k);
        // Tiny rates still give one device.
        let sparse = ScenarioConfig {
            devices: DeviceCount::Poisson(1e-9),
            ..cfg
        };
        assert_eq!(device_count(&sparse, 42), 1);
    }

    // First Poisson(3) draw of the arrival stream for seed 42.
    const POISSON_GOLDEN: usize = 3;

    #[test]
    fn prefix_devices_do_not_depend_on_count() {
        let small = ScenarioConfig {
            devices: DeviceCount::Fixed(3),
            ..ScenarioConfig::preset(5)
        };
        let big = generate_scenario(&ScenarioConfig::preset(5), 5).unwrap();
        assert_eq!(generate_scenario(&small, 5).unwrap(), big[..3]);
    }

    #[test]
    fn scaling_touches_only_datasets() {
        let devs = generate_scenario(&ScenarioConfig::preset(1), 1).unwrap();
        let scaled = scale_datasets(&devs, 1.5);
        for (a, b) in devs.iter().zip(&scaled) {
            assert_eq!(b.d_size, a.d_size * 1.5);
            assert_eq!(b.sigma, a.sigma);
        }
    }
}
