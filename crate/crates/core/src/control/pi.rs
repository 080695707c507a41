use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::phasemath::{Dq0, Frame, ThreePhase};

/// Proportional and integral gain of one loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

impl PiGains {
    pub const fn new(kp: f64, ki: f64) -> Self {
        PiGains { kp, ki }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Saturation {
    Upper,
    Lower,
}

/// One PI loop: gains, accumulated `∫e dt`, and optional output clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiState {
    pub integral: f64,
    pub kp: f64,
    pub ki: f64,
    pub out_limits: Option<(f64, f64)>,
    last_saturation: Option<Saturation>,
}

/// Output of a PI evaluation and whether its error may be integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PiOutcome {
    pub output: f64,
    pub integrate: bool,
    pub saturation: Option<Saturation>,
}

impl PiState {
    pub fn new(gains: PiGains) -> Self {
        PiState {
            integral: 0.0,
            kp: gains.kp,
            ki: gains.ki,
            out_limits: None,
            last_saturation: None,
        }
    }

    pub fn with_limits(mut self, lo: f64, hi: f64) -> Self {
        self.out_limits = Some((lo, hi));
        self
    }

    pub fn saturation(&self) -> Option<Saturation> {
        self.last_saturation
    }

    /// Evaluates `kp·e + ki·(∫e + e·lookahead)` with conditional integration.
    ///
    /// A lookahead of `dt` gives the sampled form, where the current error is
    /// already part of the integral term; a lookahead of zero gives the
    /// continuous-time law with the integral carried as an ODE state.
    pub(crate) fn law(&self, error: f64, lookahead: f64) -> PiOutcome {
        let raw = self.kp * error + self.ki * (self.integral + error * lookahead);
        let Some((lo, hi)) = self.out_limits else {
            return PiOutcome {
                output: raw,
                integrate: true,
                saturation: None,
            };
        };
        let side = if raw > hi {
            Some(Saturation::Upper)
        } else if raw < lo {
            Some(Saturation::Lower)
        } else {
            None
        };
        let push = self.ki * error;
        let integrate = match side {
            None => true,
            Some(s) => {
                let deeper = match s {
                    Saturation::Upper => push > 0.0,
                    Saturation::Lower => push < 0.0,
                };
                // an error reversal that flips the clamped side unwinds the
                // integral accumulated against the previous limit
                let flipped = self.last_saturation.is_some_and(|prev| prev != s);
                !deeper || flipped
            }
        };
        PiOutcome {
            output: raw.clamp(lo, hi),
            integrate,
            saturation: side,
        }
    }

    /// Sampled PI update over one step of length `dt`.
    pub fn step(&mut self, error: f64, dt: f64) -> Result<f64> {
        ensure_finite(error, "PI error")?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "time step must be positive"));
        }
        let outcome = self.law(error, dt);
        if outcome.integrate {
            self.integral += error * dt;
        }
        self.last_saturation = outcome.saturation;
        Ok(outcome.output)
    }
}

/// Per-axis PI triple acting in the dq0 frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqPi {
    pub axes: [PiState; 3],
}

impl DqPi {
    pub fn new(gains: PiGains) -> Self {
        DqPi {
            axes: [PiState::new(gains); 3],
        }
    }

    pub fn integrals(&self) -> [f64; 3] {
        self.axes.map(|a| a.integral)
    }

    pub fn set_integrals(&mut self, values: [f64; 3]) {
        for (axis, v) in self.axes.iter_mut().zip(values) {
            axis.integral = v;
        }
    }

    /// Unclamped per-axis PI output.
    pub(crate) fn output(&self, error: Dq0, lookahead: f64) -> Dq0 {
        let e = error.to_array();
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.axes[j].law(e[j], lookahead).output;
        }
        Dq0::from_array(out)
    }

    pub(crate) fn commit(&mut self, error: Dq0, mask: [bool; 3], dt: f64) {
        for ((axis, e), keep) in self.axes.iter_mut().zip(error.to_array()).zip(mask) {
            if keep {
                axis.integral += e * dt;
            }
        }
    }
}

/// Duty law `clamp(T⁻¹·PI(error))` plus the per-axis integration mask.
///
/// An axis stops integrating while any phase it feeds is clamped and the
/// axis' integral increment would push that phase further past its limit.
pub(crate) fn duty_law(
    frame: &Frame,
    error: Dq0,
    pi: &DqPi,
    lookahead: f64,
) -> (ThreePhase, [bool; 3]) {
    let raw = frame.inv_park(&pi.output(error, lookahead));
    let e = error.to_array();
    let mut mask = [true; 3];
    for (j, keep) in mask.iter_mut().enumerate() {
        let push = pi.axes[j].ki * e[j];
        for k in 0..3 {
            let towards = frame.inverse_entry(k, j) * push;
            if (raw[k] > 1.0 && towards > 0.0) || (raw[k] < -1.0 && towards < 0.0) {
                *keep = false;
            }
        }
    }
    (raw.clamp(-1.0, 1.0), mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn proportional_only() {
        let mut pi = PiState::new(PiGains::new(1.0, 0.0));
        assert_eq!(pi.step(2.0, 0.01).unwrap(), 2.0);
        assert_eq!(pi.integral, 0.02);
        let mut p = PiState::new(PiGains::new(1.0, 0.0));
        p.step(2.0, 0.01).unwrap();
        // integral bookkeeping does not leak into the output when ki = 0
        assert_eq!(p.step(2.0, 0.01).unwrap(), 2.0);
    }

    #[test]
    fn pure_integration() {
        let mut pi = PiState::new(PiGains::new(0.0, 1.0));
        let mut out = 0.0;
        for _ in 0..10 {
            out = pi.step(1.0, 0.01).unwrap();
        }
        assert_abs_diff_eq!(out, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn conditional_integration_freezes_and_resumes() {
        let mut pi = PiState::new(PiGains::new(10.0, 1.0)).with_limits(-1.0, 1.0);
        assert_eq!(pi.step(1.0, 0.01).unwrap(), 1.0);
        assert_eq!(pi.integral, 0.0);
        assert_eq!(pi.saturation(), Some(Saturation::Upper));
        // still pushing into the upper limit: frozen
        assert_eq!(pi.step(0.5, 0.01).unwrap(), 1.0);
        assert_eq!(pi.integral, 0.0);
        // the reversal integrates again
        assert_eq!(pi.step(-0.5, 0.01).unwrap(), -1.0);
        assert_abs_diff_eq!(pi.integral, -0.005, epsilon = 1e-15);
        // and a second step into the lower limit freezes
        pi.step(-0.5, 0.01).unwrap();
        assert_abs_diff_eq!(pi.integral, -0.005, epsilon = 1e-15);
    }

    #[test]
    fn unsaturated_integrates() {
        let mut pi = PiState::new(PiGains::new(0.1, 1.0)).with_limits(-1.0, 1.0);
        pi.step(1.0, 0.01).unwrap();
        assert_eq!(pi.integral, 0.01);
    }

    #[test]
    fn step_rejects_bad_input() {
        let mut pi = PiState::new(PiGains::new(1.0, 1.0));
        assert!(pi.step(f64::NAN, 0.01).is_err());
        assert!(pi.step(1.0, 0.0).is_err());
    }

    #[test]
    fn duty_law_masks_saturating_axis() {
        let frame = Frame::at(0.0);
        let pi = DqPi::new(PiGains::new(1.0, 1.0));
        let (d, mask) = duty_law(&frame, Dq0::new(-380.0, 0.0, 0.0), &pi, 0.0);
        assert_eq!(d.0, [0.0, 1.0, -1.0]);
        assert_eq!(mask, [false, true, true]);
    }
}
