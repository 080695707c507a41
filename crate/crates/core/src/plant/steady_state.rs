use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;

use super::Plant;
use crate::error::{Error, Result};
use crate::phasemath::ThreePhase;

/// Sinusoidal steady state of the plant with both converters idle.
///
/// Phasors follow `x(t) = Im(X·e^{jθ})`, so a positive-sequence source of
/// peak `A` has phasors `A·[1, e^{−j2π/3}, e^{+j2π/3}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasorSolution {
    pub omega: f64,
    pub i1: [Complex64; 3],
    pub i2: [Complex64; 3],
    pub i3: [Complex64; 3],
    pub v: [Complex64; 3],
}

fn instant(x: &[Complex64; 3], theta: f64) -> ThreePhase {
    let rot = Complex64::from_polar(1.0, theta);
    ThreePhase(x.map(|p| (p * rot).im))
}

impl PhasorSolution {
    /// Instantaneous `(I₁, I₂, I₃, V)` at grid angle `theta`.
    pub fn at(&self, theta: f64) -> (ThreePhase, ThreePhase, ThreePhase, ThreePhase) {
        (
            instant(&self.i1, theta),
            instant(&self.i2, theta),
            instant(&self.i3, theta),
            instant(&self.v, theta),
        )
    }

    /// Largest per-phase peak of the load voltage.
    pub fn peak_load_voltage(&self) -> f64 {
        self.v.iter().fold(0.0, |m, p| m.max(p.norm()))
    }
}

fn sequence(amplitude: f64) -> [Complex64; 3] {
    let shift = 2.0 * std::f64::consts::PI / 3.0;
    [
        Complex64::new(amplitude, 0.0),
        Complex64::from_polar(amplitude, -shift),
        Complex64::from_polar(amplitude, shift),
    ]
}

/// Solves the branch equations with zero duties as a 9×9 complex system.
pub fn passive_steady_state(
    plant: &Plant,
    omega: f64,
    vin_pk: f64,
    i_pk: f64,
) -> Result<PhasorSolution> {
    let p = &plant.params;
    let beta = p.beta;
    let jw = Complex64::new(0.0, omega);
    let r = plant.r_load().map(|x| Complex64::new(x, 0.0));
    let l = plant.l_load().map(|x| Complex64::new(x, 0.0));
    let eye = Matrix3::<Complex64>::identity();
    let c = |x: f64| Complex64::new(x, 0.0);

    let b11 = eye * (jw * plant.lbar1 + plant.rbar1) + r * c(beta * beta);
    let b12 = -r * c(beta);
    let b13 = r * c(beta);
    let b21 = -r * c(beta);
    let b22 = eye * (jw * p.l2) + plant.rbar2.map(|x| Complex64::new(x, 0.0));
    let b23 = -r;
    let b31 = r * c(beta);
    let b32 = -r;
    let b33 = l * jw + r;

    let blocks = [[b11, b12, b13], [b21, b22, b23], [b31, b32, b33]];
    let a = DMatrix::from_fn(9, 9, |i, j| blocks[i / 3][j / 3][(i % 3, j % 3)]);

    let vin = sequence(vin_pk);
    let iload = sequence(i_pk);
    let iload_v = nalgebra::Vector3::from(iload);
    let vin_v = nalgebra::Vector3::from(vin);
    let r_i = r * iload_v;
    let rhs1 = -r_i * c(beta) - vin_v * c(p.alpha * beta);
    let rhs2 = r_i;
    let rhs3 = -r_i;
    let rhs = DVector::from_fn(9, |i, _| match i / 3 {
        0 => rhs1[i % 3],
        1 => rhs2[i % 3],
        _ => rhs3[i % 3],
    });

    let x = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("passive steady-state system"))?;
    if x.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Singular("passive steady-state system"));
    }
    let take = |k: usize| [x[3 * k], x[3 * k + 1], x[3 * k + 2]];
    let (i1, i2, i3) = (take(0), take(1), take(2));
    let mut v = [Complex64::new(0.0, 0.0); 3];
    let ir: Vec<Complex64> = (0..3)
        .map(|k| -i1[k] * beta + i2[k] - i3[k] - iload[k])
        .collect();
    for (row, vk) in v.iter_mut().enumerate() {
        *vk = (0..3).map(|col| r[(row, col)] * ir[col]).sum();
    }
    Ok(PhasorSolution {
        omega,
        i1,
        i2,
        i3,
        v,
    })
}
