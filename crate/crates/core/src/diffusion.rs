//! Unconstrained sheaf diffusion and the projection onto global sections.

use nalgebra::DVector;

use crate::error::{Result, SheafError};
use crate::ode::{integrate, OdeOptions, OdeOutcome};
use crate::scalar::Real;
use crate::sheaf::{Cochain0, Sheaf};

/// Time-stamped states of a diffusion run with the monitored energy.
#[derive(Debug, Clone)]
pub struct DiffusionRun<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<Cochain0<T>>,
    pub energies: Vec<T>,
    pub outcome: OdeOutcome<T>,
}

impl<T: Real> DiffusionRun<T> {
    pub fn final_state(&self) -> &Cochain0<T> {
        self.states.last().expect("run holds at least x0")
    }
}

/// Integrates `dx/dt = -alpha L x` until the velocity settles or the horizon
/// is reached. The limit is the orthogonal projection of `x0` onto the global
/// section space.
pub fn diffuse<T: Real>(
    sheaf: &Sheaf<T>,
    x0: &Cochain0<T>,
    alpha: T,
    opts: &OdeOptions<T>,
) -> Result<DiffusionRun<T>> {
    if alpha <= T::zero() {
        return Err(SheafError::NonPositiveParameter {
            name: "alpha",
            value: alpha.to_f64().unwrap_or(f64::NAN),
        });
    }
    sheaf.check_cochain0(x0)?;
    let l = sheaf.laplacian().into_matrix();
    let solution = integrate(
        |_t, y: &DVector<T>| -(&l * y) * alpha,
        x0.to_flat(),
        opts,
        None,
    );
    let states: Vec<Cochain0<T>> = solution
        .states
        .iter()
        .map(|flat| sheaf.cochain0_from_flat(flat).expect("state conforms"))
        .collect();
    let energies = states
        .iter()
        .map(|x| sheaf.disagreement_energy(x).expect("state conforms"))
        .collect();
    Ok(DiffusionRun {
        times: solution.times,
        states,
        energies,
        outcome: solution.outcome,
    })
}

/// Orthogonal projection of `x` onto `H^0`, computed as `x - L^+ (L x)`.
pub fn project_global_sections<T: Real>(sheaf: &Sheaf<T>, x: &Cochain0<T>) -> Result<Cochain0<T>> {
    sheaf.check_cochain0(x)?;
    let l = sheaf.laplacian();
    let flat = x.to_flat();
    let lx = l.apply(&flat);
    let correction = l.pinv_apply(&lx, None);
    sheaf.cochain0_from_flat(&(flat - correction))
}
