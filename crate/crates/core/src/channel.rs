//! Wireless TCP/IP link model.
//!
//! Each device owns a small state machine: IP-layer packet delays are drawn
//! uniformly, the round-trip time is an exponentially smoothed average of
//! them, and a log-normal-like shadowing gain evolves as a clamped AR(1)
//! process. Together with the steady-state TCP throughput constant `K0` they
//! give the connection coefficient `sigma`, which turns transmit power into
//! a data rate `sigma * sqrt(p)`.

use rand::Rng;

use crate::error::{ensure, Error, Result};

/// Half-width of the support of the shadowing driver, `sqrt(3)`.
pub const SHADOW_BOUND: f64 = 1.732_050_807_568_877_2;

/// Static link parameters shared by every device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Maximum segment size in bytes.
    pub mss: f64,
    /// Forward-error-correction constants (A, B, C of the throughput model).
    pub loss_a: f64,
    pub loss_b: f64,
    pub loss_c: f64,
    /// Packets acknowledged per ACK.
    pub b_acked: f64,
    /// Shadowing scale, `Z = a0 * 10^(0.1 x)`.
    pub a0: f64,
    /// Upper end of the uniform IP-layer delay, seconds.
    pub delta_ip_max: f64,
    /// AR(1) correlation of the shadowing driver, in `[0, 1)`.
    pub x_corr: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            mss: 1460.0,
            loss_a: 90.2514,
            loss_b: 3.4998,
            loss_c: 1.0942,
            b_acked: 2.0,
            a0: 0.9738,
            delta_ip_max: 1.0,
            x_corr: 0.9,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.mss > 0.0, "mss", self.mss)?;
        ensure(self.loss_a > 0.0, "loss_a", self.loss_a)?;
        ensure(self.loss_b > 0.0, "loss_b", self.loss_b)?;
        ensure(self.loss_c > 0.0, "loss_c", self.loss_c)?;
        ensure(self.b_acked > 0.0, "b_acked", self.b_acked)?;
        ensure(self.a0 > 0.0, "a0", self.a0)?;
        ensure(self.delta_ip_max > 0.0, "delta_ip_max", self.delta_ip_max)?;
        ensure(
            (0.0..1.0).contains(&self.x_corr),
            "x_corr",
            self.x_corr,
        )
    }
}

/// Evolving link state of one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    /// Smoothed round-trip time, seconds.
    pub rtt: f64,
    /// Shadowing driver in `[-sqrt(3), sqrt(3)]`.
    pub x: f64,
    /// Shadowing gain `a0 * 10^(0.1 x)`.
    pub z: f64,
    pub k0: f64,
    /// Connection coefficient; zero until the first slot has elapsed.
    pub sigma: f64,
    /// Slot index.
    pub t: u64,
}

/// Steady-state throughput constant of the TCP model.
///
/// The incomplete gamma term `Γ(1; CB)` has shape 1 and therefore reduces
/// to `exp(-CB)`.
pub fn k0_constant(params: &ChannelParams) -> Result<f64> {
    ensure(params.mss > 0.0, "mss", params.mss)?;
    ensure(params.loss_a >= 0.0, "loss_a", params.loss_a)?;
    ensure(params.loss_b > 0.0, "loss_b", params.loss_b)?;
    ensure(params.loss_c > 0.0, "loss_c", params.loss_c)?;
    ensure(params.b_acked > 0.0, "b_acked", params.b_acked)?;
    let (a, b, c) = (params.loss_a, params.loss_b, params.loss_c);
    let gamma = (-c * b).exp();
    let denom = (c + a / (c * b * b) * gamma).sqrt();
    Ok((3.0 / (2.0 * params.b_acked)).sqrt() * params.mss / denom)
}

/// One IP-layer delay, uniform on `[0, delta_ip_max]`. Consumes one draw.
pub fn sample_delta_ip<R: Rng + ?Sized>(rng: &mut R, params: &ChannelParams) -> f64 {
    let u: f64 = rng.random();
    u * params.delta_ip_max
}

/// Exponentially smoothed RTT update.
pub fn step_rtt(prev_rtt: f64, delta_ip: f64) -> Result<f64> {
    ensure(prev_rtt >= 0.0, "prev_rtt", prev_rtt)?;
    ensure(delta_ip >= 0.0, "delta_ip", delta_ip)?;
    Ok(0.75 * prev_rtt + 0.25 * delta_ip)
}

/// Shadowing gain for a given driver value.
pub fn shadowing_gain(x: f64, params: &ChannelParams) -> f64 {
    params.a0 * 10f64.powf(0.1 * x)
}

/// Advances the shadowing driver by one AR(1) step with a uniform
/// innovation and recomputes the gain. Consumes one draw.
pub fn step_shadowing<R: Rng + ?Sized>(
    state: &ChannelState,
    rng: &mut R,
    params: &ChannelParams,
) -> ChannelState {
    let u = SHADOW_BOUND * (2.0 * rng.random::<f64>() - 1.0);
    let rho = params.x_corr;
    let x = (rho * state.x + (1.0 - rho * rho).sqrt() * u).clamp(-SHADOW_BOUND, SHADOW_BOUND);
    ChannelState {
        x,
        z: shadowing_gain(x, params),
        ..*state
    }
}

/// Connection coefficient `k0 * sqrt(z) / rtt`.
pub fn sigma(state: &ChannelState) -> Result<f64> {
    if state.t == 0 || state.rtt <= 0.0 {
        return Err(Error::ChannelNotWarmed);
    }
    Ok(state.k0 * state.z.sqrt() / state.rtt)
}

/// Achievable rate at transmit power `p`.
pub fn data_rate(sigma: f64, p: f64) -> f64 {
    sigma * p.max(0.0).sqrt()
}

impl ChannelState {
    /// Slot-0 state: `RTT(0) = 0` and a driver drawn from its stationary law.
    pub fn new<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let x = SHADOW_BOUND * (2.0 * rng.random::<f64>() - 1.0);
        Ok(Self {
            rtt: 0.0,
            x,
            z: shadowing_gain(x, params),
            k0: k0_constant(params)?,
            sigma: 0.0,
            t: 0,
        })
    }

    /// Advances one slot: delay draw, RTT smoothing, then shadowing.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R, params: &ChannelParams) -> Result<()> {
        let delta = sample_delta_ip(rng, params);
        let rtt = step_rtt(self.rtt, delta)?;
        let mut next = step_shadowing(self, rng, params);
        next.rtt = rtt;
        next.t = self.t + 1;
        // A zero delay on the very first slot leaves rtt at 0; keep sigma
        // unset until the link has a positive RTT.
        next.sigma = if rtt > 0.0 { sigma(&next)? } else { 0.0 };
        *self = next;
        Ok(())
    }

    /// Runs `slots` burn-in steps (at least one) and returns the warmed
    /// state, whose `sigma` is then frozen for an optimization run.
    pub fn warmed<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R, slots: usize) -> Result<Self> {
        let mut state = Self::new(params, rng)?;
        for _ in 0..slots.max(1) {
            state.advance(rng, params)?;
        }
        while state.rtt <= 0.0 {
            state.advance(rng, params)?;
        }
        Ok(state)
    }
}
