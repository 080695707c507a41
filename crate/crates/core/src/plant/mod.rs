//! Averaged circuit model of the hybrid distribution transformer: two
//! back-to-back converters, a series transformer on the grid side, a shunt
//! branch on the load side, and a parallel RL load with a current source.

mod steady_state;

pub use steady_state::{passive_steady_state, PhasorSolution};

use std::ops::{Add, Mul};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phasemath::{Frame, ThreePhase};

/// Raw circuit constants. Scalar impedances stand for balanced
/// `scalar · I₃` blocks; the load is given as full 3×3 matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantParams {
    /// VSC1 filter inductance (H).
    pub l1: f64,
    /// VSC2 filter inductance (H).
    pub l2: f64,
    /// Grid-side transformer primary inductance (H).
    pub lp: f64,
    /// Grid-side transformer secondary inductance (H).
    pub ls: f64,
    pub r1: f64,
    pub r2: f64,
    pub rp: f64,
    pub rs: f64,
    /// DC-link capacitance (F).
    pub c: f64,
    /// Grid-side transformer ratio (the transformer is `1/alpha : 1`).
    pub alpha: f64,
    /// Series transformer ratio.
    pub beta: f64,
    /// Load resistance matrix (Ω).
    pub r_load: [[f64; 3]; 3],
    /// Load inductance matrix (H).
    pub l_load: [[f64; 3]; 3],
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            l1: 0.0063,
            l2: 0.2,
            lp: 0.795,
            ls: 2e-4,
            r1: 0.033,
            r2: 0.01,
            rp: 50.0,
            rs: 0.01,
            c: 0.0018,
            alpha: 1.0 / 66.0,
            beta: 18.0,
            r_load: diagonal(10.0),
            l_load: diagonal(8.3e-2),
        }
    }
}

pub fn diagonal(x: f64) -> [[f64; 3]; 3] {
    [[x, 0.0, 0.0], [0.0, x, 0.0], [0.0, 0.0, x]]
}

pub(crate) fn to_matrix(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

fn is_symmetric(m: &Matrix3<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

/// Validates a load `(R, L)` pair: `L` symmetric positive definite, `R`
/// symmetric with a positive diagonal.
pub fn validate_load(r_load: &[[f64; 3]; 3], l_load: &[[f64; 3]; 3]) -> Result<()> {
    let r = to_matrix(r_load);
    let l = to_matrix(l_load);
    if r.iter().chain(l.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("load matrices"));
    }
    if !is_symmetric(&l) {
        return Err(Error::invalid("l_load", "must be symmetric"));
    }
    if l.cholesky().is_none() {
        return Err(Error::invalid("l_load", "must be positive definite"));
    }
    if !is_symmetric(&r) {
        return Err(Error::invalid("r_load", "must be symmetric"));
    }
    if (0..3).any(|i| r[(i, i)] <= 0.0) {
        return Err(Error::invalid("r_load", "diagonal entries must be positive"));
    }
    Ok(())
}

impl PlantParams {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("l1", self.l1),
            ("l2", self.l2),
            ("lp", self.lp),
            ("ls", self.ls),
            ("c", self.c),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        let non_negative = [
            ("r1", self.r1),
            ("r2", self.r2),
            ("rp", self.rp),
            ("rs", self.rs),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        validate_load(&self.r_load, &self.l_load)
    }

    /// Validates the raw constants and computes the composite impedances
    /// `L̄₁ = L₁ + β²(Ls + α²Lp)`, `R̄₁ = R₁ + β²(Rs + α²Rp)` and
    /// `R̄₂ = R₂·I + R`.
    pub fn derive(&self) -> Result<Plant> {
        self.validate()?;
        let b2 = self.beta * self.beta;
        let a2 = self.alpha * self.alpha;
        let lbar1 = self.l1 + b2 * (self.ls + a2 * self.lp);
        let rbar1 = self.r1 + b2 * (self.rs + a2 * self.rp);
        let r = to_matrix(&self.r_load);
        let l = to_matrix(&self.l_load);
        let rbar2 = Matrix3::identity() * self.r2 + r;
        if rbar2.try_inverse().is_none() {
            return Err(Error::Singular("R2·I + R_load"));
        }
        let l_inv = l.try_inverse().ok_or(Error::Singular("load inductance"))?;
        if !(lbar1 > 0.0 && rbar1 >= 0.0) {
            return Err(Error::invalid("composites", "L̄₁ must be > 0"));
        }
        Ok(Plant {
            params: self.clone(),
            lbar1,
            rbar1,
            rbar2,
            r,
            l,
            l_inv,
        })
    }
}

/// Validated parameters together with the composite impedances.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub params: PlantParams,
    pub lbar1: f64,
    pub rbar1: f64,
    pub rbar2: Matrix3<f64>,
    r: Matrix3<f64>,
    l: Matrix3<f64>,
    l_inv: Matrix3<f64>,
}

/// Dynamic state: converter and load-inductor currents plus DC-link voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantState {
    pub i1: ThreePhase,
    pub i2: ThreePhase,
    pub i3: ThreePhase,
    pub vc: f64,
}

impl PlantState {
    pub fn with_vc(vc: f64) -> Self {
        PlantState {
            vc,
            ..PlantState::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.i1.is_finite() && self.i2.is_finite() && self.i3.is_finite() && self.vc.is_finite()
    }
}

impl Add for PlantState {
    type Output = PlantState;
    fn add(self, rhs: PlantState) -> PlantState {
        PlantState {
            i1: self.i1 + rhs.i1,
            i2: self.i2 + rhs.i2,
            i3: self.i3 + rhs.i3,
            vc: self.vc + rhs.vc,
        }
    }
}

impl Mul<f64> for PlantState {
    type Output = PlantState;
    fn mul(self, k: f64) -> PlantState {
        PlantState {
            i1: self.i1 * k,
            i2: self.i2 * k,
            i3: self.i3 * k,
            vc: self.vc * k,
        }
    }
}

/// Grid voltage, load current source and grid frequency at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExogenousInputs {
    pub vin: ThreePhase,
    pub iload: ThreePhase,
    pub f: f64,
}

/// Converter duty cycles, each component in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DutyPair {
    pub d1: ThreePhase,
    pub d2: ThreePhase,
}

impl DutyPair {
    pub fn new(d1: ThreePhase, d2: ThreePhase) -> Result<Self> {
        let pair = DutyPair { d1, d2 };
        if !pair.in_range() {
            return Err(Error::invalid("duty", "components must lie in [-1, 1]"));
        }
        Ok(pair)
    }

    pub fn in_range(&self) -> bool {
        self.d1
            .0
            .iter()
            .chain(self.d2.0.iter())
            .all(|d| (-1.0..=1.0).contains(d))
    }
}

/// Grid voltage and load current source, both positive-sequence and aligned
/// with the d-axis of `frame`.
pub fn source_waveforms(frame: &Frame, vin_pk: f64, i_pk: f64) -> (ThreePhase, ThreePhase) {
    (frame.positive_sequence(vin_pk), frame.positive_sequence(i_pk))
}

impl Plant {
    pub fn beta(&self) -> f64 {
        self.params.beta
    }

    pub fn r_load(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn l_load(&self) -> &Matrix3<f64> {
        &self.l
    }

    /// Current through the load resistance, `−β·I₁ + I₂ − I₃ − I`.
    pub fn resistor_current(&self, s: &PlantState, iload: &ThreePhase) -> ThreePhase {
        s.i1 * (-self.params.beta) + s.i2 - s.i3 - *iload
    }

    /// Load terminal voltage `V = R(−β·I₁ + I₂ − I₃ − I)`.
    pub fn load_voltage(&self, s: &PlantState, u: &ExogenousInputs) -> ThreePhase {
        self.resistor_current(s, &u.iload).transform(&self.r)
    }

    /// Current injected by the grid-side transformer secondary, `−β·I₁`.
    pub fn grid_current(&self, s: &PlantState) -> ThreePhase {
        s.i1 * (-self.params.beta)
    }

    /// State derivative of the averaged model.
    ///
    /// The `β²R`, `βR` and `R̄₂` couplings are grouped through the load
    /// voltage `V`, which is algebraically the same expression.
    pub fn derivative(&self, s: &PlantState, u: &ExogenousInputs, d: &DutyPair) -> PlantState {
        debug_assert!(d.in_range(), "duties must be clamped upstream");
        let p = &self.params;
        let v = self.load_voltage(s, u);
        let di1 = (s.i1 * (-self.rbar1) + v * p.beta - u.vin * (p.alpha * p.beta) + d.d1 * s.vc)
            * (1.0 / self.lbar1);
        let di2 = (-v - s.i2 * p.r2 + d.d2 * s.vc) * (1.0 / p.l2);
        let di3 = v.transform(&self.l_inv);
        let dvc = -(d.d1.dot(&s.i1) + d.d2.dot(&s.i2)) / p.c;
        PlantState {
            i1: di1,
            i2: di2,
            i3: di3,
            vc: dvc,
        }
    }

    /// Magnetic plus capacitive stored energy (J).
    pub fn stored_energy(&self, s: &PlantState) -> f64 {
        let l3 = s.i3.transform(&self.l).dot(&s.i3);
        0.5 * (self.lbar1 * s.i1.dot(&s.i1)
            + self.params.l2 * s.i2.dot(&s.i2)
            + l3
            + self.params.c * s.vc * s.vc)
    }

    /// Power delivered into the circuit by the grid and the load source,
    /// `−αβ·Vinᵀ I₁ − Vᵀ I`.
    pub fn source_power(&self, s: &PlantState, u: &ExogenousInputs) -> f64 {
        let p = &self.params;
        let v = self.load_voltage(s, u);
        -p.alpha * p.beta * u.vin.dot(&s.i1) - v.dot(&u.iload)
    }

    /// Ohmic losses `R̄₁|I₁|² + R₂|I₂|² + I_Rᵀ R I_R`.
    pub fn dissipation(&self, s: &PlantState, u: &ExogenousInputs) -> f64 {
        let ir = self.resistor_current(s, &u.iload);
        self.rbar1 * s.i1.dot(&s.i1) + self.params.r2 * s.i2.dot(&s.i2) + ir.transform(&self.r).dot(&ir)
    }
}
