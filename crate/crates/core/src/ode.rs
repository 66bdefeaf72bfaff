//! Embedded Runge-Kutta integration for the gradient flows in this crate.
//!
//! Dormand-Prince 5(4) with adaptive step control. The flows here are smooth
//! polynomial vector fields at desk scale, so an explicit pair with tight
//! tolerances is adequate and keeps trajectories fully deterministic. A flow
//! is declared converged when the velocity norm stays below a threshold for a
//! configured number of consecutive accepted steps.

use nalgebra::DVector;

use crate::scalar::{real, Real};

#[derive(Debug, Clone)]
pub struct OdeOptions<T: Real> {
    /// Relative local error tolerance.
    pub rel_tol: T,
    /// Absolute local error tolerance.
    pub abs_tol: T,
    /// Integration horizon.
    pub t_max: T,
    /// Declare equilibrium when `||f(y)||` stays below this.
    pub velocity_tol: T,
    /// Number of consecutive accepted low-velocity steps required.
    pub consecutive_required: usize,
    /// Hard cap on accepted + rejected steps.
    pub max_steps: usize,
    /// Optional hard cap on the step size.
    pub h_max: Option<T>,
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        Self {
            rel_tol: real(1e-8),
            abs_tol: real(1e-10),
            t_max: real(1e3),
            velocity_tol: real(1e-10),
            consecutive_required: 1,
            max_steps: 2_000_000,
            h_max: None,
        }
    }
}

impl<T: Real> OdeOptions<T> {
    pub fn with_t_max(mut self, t_max: T) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_velocity_tol(mut self, tol: T) -> Self {
        self.velocity_tol = tol;
        self
    }
}

/// Why the integration loop stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum OdeOutcome<T: Real> {
    /// Velocity stayed below the threshold; `time` is when it was declared.
    Converged { time: T },
    /// Horizon reached first; carries the final velocity norm.
    ReachedHorizon { residual_velocity: T },
    /// A guard asked to stop (divergence ceilings and the like).
    GuardStop { time: T, reason: String },
    /// Step budget exhausted.
    StepBudgetExhausted { time: T },
}

impl<T: Real> OdeOutcome<T> {
    pub fn converged(&self) -> bool {
        matches!(self, OdeOutcome::Converged { .. })
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    pub outcome: OdeOutcome<T>,
}

impl<T: Real> OdeSolution<T> {
    pub fn final_state(&self) -> &DVector<T> {
        self.states.last().expect("solution holds at least y0")
    }

    pub fn final_time(&self) -> T {
        *self.times.last().expect("solution holds at least t0")
    }
}

/// Guard consulted after every accepted step; return `Some(reason)` to abort.
pub type Guard<'g, T> = dyn FnMut(T, &DVector<T>) -> Option<String> + 'g;

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `dy/dt = f(t, y)` from `t = 0`, recording every accepted step.
pub fn integrate<T, F>(
    mut f: F,
    y0: DVector<T>,
    opts: &OdeOptions<T>,
    mut guard: Option<&mut Guard<'_, T>>,
) -> OdeSolution<T>
where
    T: Real,
    F: FnMut(T, &DVector<T>) -> DVector<T>,
{
    let n = y0.len();
    let zero_t = T::zero();
    let mut t = zero_t;
    let mut y = y0;
    let mut k1 = f(t, &y);

    let mut times = vec![t];
    let mut states = vec![y.clone()];

    // Degenerate state space: nothing can move.
    if n == 0 {
        return OdeSolution {
            times,
            states,
            outcome: OdeOutcome::Converged { time: zero_t },
        };
    }

    let mut low_velocity_streak = if k1.norm() < opts.velocity_tol { 1 } else { 0 };
    if low_velocity_streak >= opts.consecutive_required {
        return OdeSolution {
            times,
            states,
            outcome: OdeOutcome::Converged { time: zero_t },
        };
    }

    let a: Vec<Vec<T>> = A
        .iter()
        .map(|row| row.iter().map(|&c| real::<T>(c)).collect())
        .collect();
    let b5: Vec<T> = B5.iter().map(|&c| real::<T>(c)).collect();
    let berr: Vec<T> = B5
        .iter()
        .zip(&B4)
        .map(|(&x, &y)| real::<T>(x - y))
        .collect();

    let mut h = initial_step(&y, &k1, opts);
    let safety = real::<T>(0.9);
    let shrink_limit = real::<T>(0.2);
    let grow_limit = real::<T>(5.0);
    let order_exp = real::<T>(0.2);

    // Secant estimate of the local Lipschitz constant. Explicit pairs hover at
    // the stability boundary of decayed modes otherwise, which leaves the
    // velocity stuck at the tolerance floor instead of decaying to roundoff.
    let stability_margin = real::<T>(2.5);
    let mut lambda_recent = T::zero();

    let mut ks: Vec<DVector<T>> = vec![DVector::zeros(n); 7];

    for _step in 0..opts.max_steps {
        if t >= opts.t_max {
            return OdeSolution {
                times,
                states,
                outcome: OdeOutcome::ReachedHorizon {
                    residual_velocity: k1.norm(),
                },
            };
        }
        if lambda_recent > T::zero() {
            let h_stab = stability_margin / lambda_recent;
            if h > h_stab {
                h = h_stab;
            }
        }
        if let Some(h_max) = opts.h_max {
            if h > h_max {
                h = h_max;
            }
        }
        if t + h > opts.t_max {
            h = opts.t_max - t;
        }

        ks[0] = k1.clone();
        for stage in 0..6 {
            let mut arg = y.clone();
            for (j, coeff) in a[stage].iter().enumerate().take(stage + 1) {
                if *coeff != zero_t {
                    arg.axpy(h * *coeff, &ks[j], T::one());
                }
            }
            ks[stage + 1] = f(t + h * stage_time(stage), &arg);
        }

        let mut y5 = y.clone();
        let mut err = DVector::zeros(n);
        for (j, k) in ks.iter().enumerate() {
            if b5[j] != zero_t {
                y5.axpy(h * b5[j], k, T::one());
            }
            if berr[j] != zero_t {
                err.axpy(h * berr[j], k, T::one());
            }
        }

        // Weighted RMS local error estimate.
        let mut acc = zero_t;
        for i in 0..n {
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y5[i].abs());
            let r = err[i] / scale;
            acc += r * r;
        }
        let err_norm = (acc / real::<T>(n as f64)).sqrt();

        if err_norm <= T::one() {
            t += h;
            let dy = &y5 - &y;
            let df = &ks[6] - &k1;
            let dy_norm = dy.norm();
            if dy_norm > T::default_epsilon() * (y.norm() + T::one()) {
                let lambda = df.norm() / dy_norm;
                if lambda > lambda_recent {
                    lambda_recent = lambda;
                }
            }
            // FSAL: last stage of the accepted step is the next first stage.
            k1 = ks[6].clone();
            y = y5;
            times.push(t);
            states.push(y.clone());

            if let Some(g) = guard.as_deref_mut() {
                if let Some(reason) = g(t, &y) {
                    return OdeSolution {
                        times,
                        states,
                        outcome: OdeOutcome::GuardStop { time: t, reason },
                    };
                }
            }

            if k1.norm() < opts.velocity_tol {
                low_velocity_streak += 1;
                if low_velocity_streak >= opts.consecutive_required {
                    return OdeSolution {
                        times,
                        states,
                        outcome: OdeOutcome::Converged { time: t },
                    };
                }
            } else {
                low_velocity_streak = 0;
            }
        }

        let factor = if err_norm == zero_t {
            grow_limit
        } else {
            (safety * err_norm.powf(-order_exp))
                .max(shrink_limit)
                .min(grow_limit)
        };
        h *= factor;
        let h_floor = T::default_epsilon() * (t.abs() + T::one()) * real::<T>(16.0);
        if h < h_floor {
            h = h_floor;
        }
    }

    OdeSolution {
        times,
        states,
        outcome: OdeOutcome::StepBudgetExhausted { time: t },
    }
}

fn stage_time<T: Real>(stage: usize) -> T {
    const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    real(C[stage])
}

fn initial_step<T: Real>(y: &DVector<T>, dy: &DVector<T>, opts: &OdeOptions<T>) -> T {
    let scale = opts.abs_tol + opts.rel_tol * y.norm();
    let v = dy.norm();
    let guess = if v > T::zero() {
        (scale / v).min(opts.t_max * real(0.1))
    } else {
        opts.t_max * real(0.01)
    };
    let floor = real::<T>(1e-8);
    if guess > floor {
        guess
    } else {
        floor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_exponential_decay_is_accurate() {
        let opts = OdeOptions::<f64> {
            t_max: 5.0,
            ..Default::default()
        };
        let sol = integrate(
            |_t, y| -y.clone(),
            DVector::from_vec(vec![1.0]),
            &opts,
            None,
        );
        let expected = (-sol.final_time()).exp();
        assert!((sol.final_state()[0] - expected).abs() < 1e-7);
    }

    #[test]
    fn equilibrium_start_converges_immediately() {
        let opts = OdeOptions::<f64>::default();
        let sol = integrate(
            |_t, y| y * 0.0,
            DVector::from_vec(vec![2.0, -3.0]),
            &opts,
            None,
        );
        assert!(sol.outcome.converged());
        assert_eq!(sol.times.len(), 1);
    }

    #[test]
    fn guard_aborts_growing_solutions() {
        let opts = OdeOptions::<f64> {
            t_max: 50.0,
            ..Default::default()
        };
        let mut guard = |_t: f64, y: &DVector<f64>| {
            if y.norm() > 10.0 {
                Some("ceiling".to_string())
            } else {
                None
            }
        };
        let sol = integrate(
            |_t, y| y.clone(),
            DVector::from_vec(vec![1.0]),
            &opts,
            Some(&mut guard),
        );
        assert!(matches!(sol.outcome, OdeOutcome::GuardStop { .. }));
    }

    #[test]
    fn works_in_single_precision() {
        let opts = OdeOptions::<f32> {
            rel_tol: 1e-5,
            abs_tol: 1e-6,
            t_max: 3.0,
            velocity_tol: 1e-6,
            ..Default::default()
        };
        let sol = integrate(
            |_t, y| -y.clone(),
            DVector::from_vec(vec![1.0_f32]),
            &opts,
            None,
        );
        assert!((sol.final_state()[0] - (-sol.final_time()).exp()).abs() < 1e-3);
    }
}
