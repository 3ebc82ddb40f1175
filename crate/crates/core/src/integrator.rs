//! Störmer–Verlet integration of the dissipative Hamiltonian ISDE
//!
//! ```text
//! dZ = Y dt
//! dY = L(Z gᵀ) a dt − ½ f0 Y dt + √f0 dW a
//! ```
//!
//! optionally projected on a reduced basis `(g, a)`. Without a basis the
//! state evolves in full coordinates.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::WienerIncrements;

/// Reduced basis `g` (`N × m`) and its dual `a = g (gᵀg)⁻¹`.
#[derive(Debug, Clone, Copy)]
pub struct Projection<'a> {
    pub g: &'a DMatrix<f64>,
    pub a: &'a DMatrix<f64>,
}

impl Projection<'_> {
    fn lift(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        z * self.g.transpose()
    }

    fn reduce(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * self.a
    }
}

/// Burn-in, spacing and block count of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub burn_in: usize,
    pub spacing: usize,
    pub blocks: usize,
}

impl Schedule {
    pub fn total_steps(&self) -> usize {
        self.burn_in + self.spacing * self.blocks
    }

    /// Whether the state after `step` (1-based) is extracted.
    pub fn extracts(&self, step: usize) -> bool {
        step > self.burn_in && (step - self.burn_in).is_multiple_of(self.spacing)
    }
}

/// One Störmer–Verlet step size and damping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StormerVerlet {
    pub dt: f64,
    pub f0: f64,
}

impl StormerVerlet {
    /// Advances `(z, y)` by one step given the reduced drift at the half
    /// step and the reduced Wiener increment.
    pub fn step<F>(&self, z: &mut DMatrix<f64>, y: &mut DMatrix<f64>, drift: F, dw: &DMatrix<f64>)
    where
        F: FnOnce(&DMatrix<f64>) -> DMatrix<f64>,
    {
        let b = self.f0 * self.dt / 4.0;
        let half = 0.5 * self.dt;
        *z += &*y * half;
        let l = drift(z);
        let y_next = &*y * ((1.0 - b) / (1.0 + b))
            + l * (self.dt / (1.0 + b))
            + dw * (self.f0.sqrt() / (1.0 + b));
        *y = y_next;
        *z += &*y * half;
    }
}

/// Runs a chain from `(z0, y0)` and returns the extracted states in full
/// coordinates (`ν × N` each).
///
/// `drift` maps full-coordinate states to full-coordinate drifts; `noise`
/// produces full-coordinate increments. `monitor` sees the reduced position
/// after every step.
#[allow(clippy::too_many_arguments)]
pub fn run_chain<F, M>(
    integrator: StormerVerlet,
    mut z: DMatrix<f64>,
    mut y: DMatrix<f64>,
    projection: Option<Projection<'_>>,
    mut drift: F,
    noise: &mut WienerIncrements,
    schedule: Schedule,
    mut monitor: M,
) -> Result<Vec<DMatrix<f64>>>
where
    F: FnMut(&DMatrix<f64>) -> DMatrix<f64>,
    M: FnMut(usize, &DMatrix<f64>),
{
    let mut out = Vec::with_capacity(schedule.blocks);
    for step in 1..=schedule.total_steps() {
        let dw = noise.next_increment();
        match projection {
            Some(p) => {
                let dw = p.reduce(&dw);
                integrator.step(&mut z, &mut y, |zh| p.reduce(&drift(&p.lift(zh))), &dw);
            }
            None => integrator.step(&mut z, &mut y, &mut drift, &dw),
        }
        if !z.iter().all(|v| v.is_finite()) || !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                step,
                dt: integrator.dt,
            });
        }
        monitor(step, &z);
        if schedule.extracts(step) {
            out.push(match projection {
                Some(p) => p.lift(&z),
                None => z.clone(),
            });
        }
    }
    Ok(out)
}
