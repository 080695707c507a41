//! Three-phase quantities, the amplitude-invariant dq0 transform, phase
//! accumulation under a time-varying grid frequency, and a one-cycle rolling
//! RMS estimator.
//!
//! The transform uses the sine-aligned convention: a balanced positive-sequence
//! set `A·[sin θ, sin(θ − 2π/3), sin(θ + 2π/3)]` maps to `[A, 0, 0]`.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

const SHIFT: f64 = 2.0 * PI / 3.0;

/// Per-phase values in the abc frame, ordered `[a, b, c]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThreePhase(pub [f64; 3]);

impl ThreePhase {
    pub const ZERO: ThreePhase = ThreePhase([0.0; 3]);

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        ThreePhase([a, b, c])
    }

    pub const fn splat(x: f64) -> Self {
        ThreePhase([x; 3])
    }

    pub fn a(&self) -> f64 {
        self.0[0]
    }

    pub fn b(&self) -> f64 {
        self.0[1]
    }

    pub fn c(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, other: &ThreePhase) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        ThreePhase(self.0.map(f))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Componentwise `min(max(x, lo), hi)`.
    pub fn clamp(self, lo: f64, hi: f64) -> Self {
        self.map(|x| x.clamp(lo, hi))
    }

    pub fn mean(&self) -> f64 {
        (self.0[0] + self.0[1] + self.0[2]) / 3.0
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::from(self.0)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        ThreePhase([v[0], v[1], v[2]])
    }

    /// `m · self` for a 3×3 matrix.
    pub fn transform(&self, m: &Matrix3<f64>) -> Self {
        Self::from_vector(&(m * self.to_vector()))
    }

    /// Cyclic relabeling (a, b, c) → (b, c, a).
    pub fn rotate(self) -> Self {
        ThreePhase([self.0[1], self.0[2], self.0[0]])
    }
}

impl Index<usize> for ThreePhase {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ThreePhase {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for ThreePhase {
    type Output = ThreePhase;
    fn add(self, rhs: ThreePhase) -> ThreePhase {
        ThreePhase([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2]])
    }
}

impl AddAssign for ThreePhase {
    fn add_assign(&mut self, rhs: ThreePhase) {
        *self = *self + rhs;
    }
}

impl Sub for ThreePhase {
    type Output = ThreePhase;
    fn sub(self, rhs: ThreePhase) -> ThreePhase {
        ThreePhase([self.0[0] - rhs.0[0], self.0[1] - rhs.0[1], self.0[2] - rhs.0[2]])
    }
}

impl Neg for ThreePhase {
    type Output = ThreePhase;
    fn neg(self) -> ThreePhase {
        self.map(|x| -x)
    }
}

impl Mul<f64> for ThreePhase {
    type Output = ThreePhase;
    fn mul(self, k: f64) -> ThreePhase {
        self.map(|x| x * k)
    }
}

impl Mul<ThreePhase> for f64 {
    type Output = ThreePhase;
    fn mul(self, x: ThreePhase) -> ThreePhase {
        x * self
    }
}

/// Components in the synchronously rotating frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Dq0 {
    pub d: f64,
    pub q: f64,
    pub zero: f64,
}

impl Dq0 {
    pub const ZERO: Dq0 = Dq0 {
        d: 0.0,
        q: 0.0,
        zero: 0.0,
    };

    pub const fn new(d: f64, q: f64, zero: f64) -> Self {
        Dq0 { d, q, zero }
    }

    pub const fn d_axis(d: f64) -> Self {
        Dq0 { d, q: 0.0, zero: 0.0 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.d, self.q, self.zero]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        Dq0::new(x[0], x[1], x[2])
    }

    pub fn is_finite(&self) -> bool {
        self.d.is_finite() && self.q.is_finite() && self.zero.is_finite()
    }
}

impl Add for Dq0 {
    type Output = Dq0;
    fn add(self, rhs: Dq0) -> Dq0 {
        Dq0::new(self.d + rhs.d, self.q + rhs.q, self.zero + rhs.zero)
    }
}

impl Sub for Dq0 {
    type Output = Dq0;
    fn sub(self, rhs: Dq0) -> Dq0 {
        Dq0::new(self.d - rhs.d, self.q - rhs.q, self.zero - rhs.zero)
    }
}

impl Mul<f64> for Dq0 {
    type Output = Dq0;
    fn mul(self, k: f64) -> Dq0 {
        Dq0::new(self.d * k, self.q * k, self.zero * k)
    }
}

/// Trigonometric values of the three phase angles `θ, θ − 2π/3, θ + 2π/3`.
///
/// Built once per evaluation so that several transforms at the same angle
/// share the `sin`/`cos` calls.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    theta: f64,
    sin: [f64; 3],
    cos: [f64; 3],
}

impl Frame {
    pub fn at(theta: f64) -> Self {
        let angles = [theta, theta - SHIFT, theta + SHIFT];
        let mut sin = [0.0; 3];
        let mut cos = [0.0; 3];
        for (k, angle) in angles.iter().enumerate() {
            let (s, c) = angle.sin_cos();
            sin[k] = s;
            cos[k] = c;
        }
        Frame { theta, sin, cos }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Forward transform `(2/3)·[sin θ_k; cos θ_k; 1/2]·x`.
    pub fn park(&self, x: &ThreePhase) -> Dq0 {
        let k = 2.0 / 3.0;
        let d = self.sin[0] * x.0[0] + self.sin[1] * x.0[1] + self.sin[2] * x.0[2];
        let q = self.cos[0] * x.0[0] + self.cos[1] * x.0[1] + self.cos[2] * x.0[2];
        let zero = 0.5 * (x.0[0] + x.0[1] + x.0[2]);
        Dq0::new(k * d, k * q, k * zero)
    }

    /// Closed-form inverse: phase `k` equals `d·sin θ_k + q·cos θ_k + 0`.
    pub fn inv_park(&self, x: &Dq0) -> ThreePhase {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = x.d * self.sin[k] + x.q * self.cos[k] + x.zero;
        }
        ThreePhase(out)
    }

    /// Entry `(phase, axis)` of the inverse transform matrix.
    pub fn inverse_entry(&self, phase: usize, axis: usize) -> f64 {
        match axis {
            0 => self.sin[phase],
            1 => self.cos[phase],
            _ => 1.0,
        }
    }

    /// Balanced positive-sequence set of the given peak amplitude, aligned
    /// with the d-axis of this frame.
    pub fn positive_sequence(&self, amplitude: f64) -> ThreePhase {
        ThreePhase(self.sin.map(|s| amplitude * s))
    }
}

pub fn park(theta: f64, x: &ThreePhase) -> Dq0 {
    Frame::at(theta).park(x)
}

pub fn inv_park(theta: f64, x: &Dq0) -> ThreePhase {
    Frame::at(theta).inv_park(x)
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Grid angle integrated from a (possibly time-varying) frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseAccumulator {
    pub theta: f64,
    pub last_f: f64,
}

impl PhaseAccumulator {
    pub fn new(theta: f64, f: f64) -> Self {
        PhaseAccumulator {
            theta: wrap_angle(theta),
            last_f: f,
        }
    }

    /// Returns the accumulator advanced by `2π·f·dt`.
    pub fn advanced(self, f: f64, dt: f64) -> Result<Self> {
        ensure_finite(f, "frequency")?;
        ensure_finite(dt, "time step")?;
        if f <= 0.0 {
            return Err(Error::invalid("f", "frequency must be positive"));
        }
        if dt <= 0.0 {
            return Err(Error::invalid("dt", "time step must be positive"));
        }
        Ok(PhaseAccumulator {
            theta: wrap_angle(self.theta + TAU * f * dt),
            last_f: f,
        })
    }

    pub fn advance(&mut self, f: f64, dt: f64) -> Result<()> {
        *self = self.advanced(f, dt)?;
        Ok(())
    }
}

impl Default for PhaseAccumulator {
    fn default() -> Self {
        PhaseAccumulator::new(0.0, 50.0)
    }
}

/// Bounded FIFO of scalar samples with a running sum of squares.
#[derive(Debug, Clone)]
pub struct RollingWindow {
    capacity: usize,
    samples: VecDeque<f64>,
    sum_sq: f64,
    since_resum: usize,
}

impl RollingWindow {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        RollingWindow {
            capacity,
            samples: VecDeque::with_capacity(capacity),
            sum_sq: 0.0,
            since_resum: 0,
        }
    }

    /// Window holding one fundamental cycle at nominal frequency `f0`.
    pub fn one_cycle(f0: f64, dt: f64) -> Self {
        RollingWindow::new((1.0 / (f0 * dt)).round() as usize)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    /// Pushes a sample (evicting the oldest when full) and returns the RMS
    /// over the stored samples.
    pub fn push(&mut self, sample: f64) -> Result<f64> {
        ensure_finite(sample, "rolling window sample")?;
        if self.samples.len() == self.capacity {
            if let Some(old) = self.samples.pop_front() {
                self.sum_sq -= old * old;
            }
        }
        self.samples.push_back(sample);
        self.sum_sq += sample * sample;
        self.since_resum += 1;
        // bound the cancellation drift of the running sum
        if self.since_resum >= self.capacity {
            self.sum_sq = self.samples.iter().map(|x| x * x).sum();
            self.since_resum = 0;
        }
        Ok(self.rms())
    }

    /// RMS of the stored samples; 0 for an empty window.
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.sum_sq.max(0.0) / self.samples.len() as f64).sqrt()
    }
}
