//! Individual control laws, each in sampled form with its own state.

use serde::{Deserialize, Serialize};

use super::pi::{duty_law, DqPi, PiState};
use crate::error::{Error, Result};
use crate::phasemath::{Dq0, Frame, RollingWindow, ThreePhase};

/// Piecewise-linear droop curve parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DroopParams {
    /// Nominal grid frequency (Hz).
    pub f0: f64,
    /// Frequency deviation at which the curve reaches its bounds (Hz).
    pub df_max: f64,
    pub p0: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Nominal load voltage (V peak).
    pub v0: f64,
}

impl Default for DroopParams {
    fn default() -> Self {
        DroopParams {
            f0: 50.0,
            df_max: 0.2,
            p0: 29160.0,
            p_min: 24719.0,
            p_max: 34458.6,
            v0: 380.0,
        }
    }
}

impl DroopParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.f0, self.df_max, self.p0, self.p_min, self.p_max, self.v0];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("droop parameters"));
        }
        if !(self.p_min < self.p0 && self.p0 < self.p_max) {
            return Err(Error::invalid("droop", "requires p_min < p0 < p_max"));
        }
        if self.df_max <= 0.0 {
            return Err(Error::invalid("droop.df_max", "must be > 0"));
        }
        if self.f0 <= 0.0 || self.v0 <= 0.0 {
            return Err(Error::invalid("droop", "f0 and v0 must be > 0"));
        }
        Ok(())
    }
}

/// VSC1 duty: integral action on `T·V − [v*, 0, 0]`, mapped back to abc and
/// clamped to `[-1, 1]`.
pub fn vsc1_duty(
    frame: &Frame,
    v_abc: &ThreePhase,
    v_star: f64,
    pi: &mut DqPi,
    dt: f64,
) -> ThreePhase {
    let error = frame.park(v_abc) - Dq0::d_axis(v_star);
    let (duty, mask) = duty_law(frame, error, pi, dt);
    pi.commit(error, mask, dt);
    duty
}

/// VSC2 duty: PI on `I₂* − T·I₂` (reference minus measurement).
pub fn vsc2_duty(
    frame: &Frame,
    i2_abc: &ThreePhase,
    i2_ref: Dq0,
    pi: &mut DqPi,
    dt: f64,
) -> ThreePhase {
    let error = i2_ref - frame.park(i2_abc);
    let (duty, mask) = duty_law(frame, error, pi, dt);
    pi.commit(error, mask, dt);
    duty
}

/// d-axis shunt current reference that holds the DC-link voltage, PI on
/// `v_C − v_C*`.
pub fn dc_link_ref(vc: f64, vc_star: f64, pi: &mut PiState, dt: f64) -> Result<f64> {
    pi.step(vc - vc_star, dt)
}

/// Active and reactive power from peak-scaled dq quantities. An inductive
/// (lagging) current gives `Q > 0`.
pub fn active_reactive_power(v: &Dq0, i: &Dq0) -> (f64, f64) {
    let p = 1.5 * (v.d * i.d + v.q * i.q);
    let q = 1.5 * (v.q * i.d - v.d * i.q);
    (p, q)
}

/// q-axis shunt current reference: load-inductor feedforward plus PI on the
/// grid-side reactive power error `Q̄* − Q̄`.
pub fn pf_correction_ref(
    i3q: f64,
    qbar: f64,
    qbar_star: f64,
    pi: &mut PiState,
    dt: f64,
) -> Result<f64> {
    Ok(i3q + pi.step(qbar_star - qbar, dt)?)
}

/// Droop slope for a frequency deviation `df`.
fn droop_slope(df: f64, dp: &DroopParams) -> f64 {
    if df >= 0.0 {
        (dp.p_max - dp.p0) / dp.df_max
    } else {
        (dp.p0 - dp.p_min) / dp.df_max
    }
}

/// Active power setpoint from the droop curve, clamped to `[p_min, p_max]`.
pub fn droop_power_ref(f: f64, dp: &DroopParams) -> f64 {
    let df = f - dp.f0;
    (dp.p0 + droop_slope(df, dp) * df).clamp(dp.p_min, dp.p_max)
}

/// Load voltage setpoint `v₀ + PI(P* − P)`.
pub fn freq_voltage_ref(
    p_star: f64,
    p: f64,
    dp: &DroopParams,
    pi: &mut PiState,
    dt: f64,
) -> Result<f64> {
    Ok(dp.v0 + pi.step(p_star - p, dt)?)
}

/// Shunt current reference for phase balancing.
///
/// The d-axis target is the one-cycle RMS of the measured d-axis grid
/// current; the PI acts on `T·I_β − [i*_βd, 0, 0]` and the DC-link reference
/// is added back on the d-axis with weight `gamma`.
#[allow(clippy::too_many_arguments)]
pub fn balancing_ref(
    frame: &Frame,
    i_beta: &ThreePhase,
    window: &mut RollingWindow,
    i2d_star_dc: f64,
    gamma: f64,
    pi: &mut DqPi,
    dt: f64,
) -> Result<Dq0> {
    let measured = frame.park(i_beta);
    let target = window.push(measured.d)?;
    let error = measured - Dq0::d_axis(target);
    let mut out = [0.0; 3];
    for (j, (axis, e)) in pi.axes.iter_mut().zip(error.to_array()).enumerate() {
        out[j] = axis.step(e, dt)?;
    }
    Ok(Dq0::from_array(out) + Dq0::d_axis(gamma * i2d_star_dc))
}
