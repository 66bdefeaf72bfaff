//! Closed-form equilibria of the four policies on the standard mixed edge.
//!
//! The configuration is one edge `u -> v` with stalks `R^2` at `u` (first
//! coordinate clamped), `R` at `v` and on the edge, maps `[a b]` from `u` and
//! `[c]` from `v`, and unit rates. The discrepancy is
//! `d = c x_v - a s - b y` with `s` the clamped value and `y` the free
//! coordinate of `u`. Quotients of the coupled rates yield conserved
//! quantities that reduce each equilibrium to a one-dimensional root-find;
//! the accommodation scenario lands on a transcendental equation in the
//! adapting map `c`.

use crate::error::{Result, SheafError};
use crate::joint::Scenario;
use crate::scalar::{real, Real};

/// Initial data of the single-edge configuration.
#[derive(Debug, Clone, Copy)]
pub struct SingleEdgeInit<T: Real> {
    /// Clamped first coordinate of `x_u`.
    pub stubborn_value: T,
    /// Free second coordinate of `x_u`.
    pub free_u: T,
    /// Opinion at `v`.
    pub opinion_v: T,
    /// Map from `u`: `[a b]`.
    pub map_u: (T, T),
    /// Map from `v`: `[c]`.
    pub map_v: T,
}

impl<T: Real> SingleEdgeInit<T> {
    /// The standard initial data: `x_u = (1, 1)`, `x_v = -1`,
    /// `a = b = 1/2`, `c = 1`.
    pub fn standard() -> Self {
        Self {
            stubborn_value: T::one(),
            free_u: T::one(),
            opinion_v: -T::one(),
            map_u: (real(0.5), real(0.5)),
            map_v: T::one(),
        }
    }

    fn is_standard(&self) -> bool {
        let eps = real::<T>(1e-12);
        (self.stubborn_value - T::one()).abs() <= eps
            && (self.free_u - T::one()).abs() <= eps
            && (self.opinion_v + T::one()).abs() <= eps
            && (self.map_u.0 - real::<T>(0.5)).abs() <= eps
            && (self.map_u.1 - real::<T>(0.5)).abs() <= eps
            && (self.map_v - T::one()).abs() <= eps
    }
}

/// Equilibrium state of a single-edge run: all five state components plus the
/// value both endpoints express on the edge.
#[derive(Debug, Clone, Copy)]
pub struct SingleEdgeEquilibrium<T: Real> {
    pub scenario: Scenario,
    pub free_u: T,
    pub opinion_v: T,
    pub map_u: (T, T),
    pub map_v: T,
    pub expressed: T,
}

/// Bracketing bisection to absolute tolerance `tol` on `[lo, hi]`.
pub fn bisect<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, tol: T) -> Result<T> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == T::zero() {
        return Ok(lo);
    }
    if fhi == T::zero() {
        return Ok(hi);
    }
    if flo * fhi > T::zero() {
        return Err(SheafError::Numerical(format!(
            "root not bracketed: f({:e}) = {:e}, f({:e}) = {:e}",
            lo.to_f64().unwrap_or(f64::NAN),
            flo.to_f64().unwrap_or(f64::NAN),
            hi.to_f64().unwrap_or(f64::NAN),
            fhi.to_f64().unwrap_or(f64::NAN),
        )));
    }
    let two = real::<T>(2.0);
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        if (hi - lo) <= tol {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == T::zero() {
            return Ok(mid);
        }
        if flo * fm < T::zero() {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    Ok((lo + hi) / two)
}

/// Solves the single-edge equilibrium for the given policy.
///
/// Structural stubbornness works for any initial data (orthogonal projection
/// onto the consensus line). The other three scenarios use the conserved
/// quantities of the standard initial data, and reject anything else.
pub fn single_edge_equilibrium<T: Real>(
    scenario: Scenario,
    init: &SingleEdgeInit<T>,
) -> Result<SingleEdgeEquilibrium<T>> {
    match scenario {
        Scenario::StructuralStubbornness => {
            // Projection of (y0, xv0) onto the line c x_v = a s + b y.
            let (a, b) = init.map_u;
            let c = init.map_v;
            let s = init.stubborn_value;
            let y0 = init.free_u;
            let xv0 = init.opinion_v;
            // Line: -b y + c x_v = a s; normal direction (-b, c).
            let nn = b * b + c * c;
            if nn == T::zero() {
                return Err(SheafError::Numerical(
                    "degenerate consensus line: b = c = 0".into(),
                ));
            }
            let gap = (c * xv0 - b * y0 - a * s) / nn;
            let y = y0 + b * gap;
            let xv = xv0 - c * gap;
            Ok(SingleEdgeEquilibrium {
                scenario,
                free_u: y,
                opinion_v: xv,
                map_u: (a, b),
                map_v: c,
                expressed: c * xv,
            })
        }
        Scenario::Accommodation => {
            require_standard(init, scenario)?;
            // Conserved: x_v^2 - c^2 = 0 (so x_v = -c) and y - ln(c)/2 = 1.
            // Equilibrium d = 0 collapses to ln c + 4 c^2 + 4 = 0 on (0, 1).
            let four = real::<T>(4.0);
            let c = bisect(
                |c: T| c.ln() + four * c * c + four,
                real(1e-12),
                T::one(),
                real(1e-12),
            )?;
            let y = T::one() + c.ln() * real::<T>(0.5);
            let xv = -c;
            Ok(SingleEdgeEquilibrium {
                scenario,
                free_u: y,
                opinion_v: xv,
                map_u: init.map_u,
                map_v: c,
                expressed: c * xv,
            })
        }
        Scenario::Outreach => {
            require_standard(init, scenario)?;
            // Conserved: x_v + a = -1/2, y^2 - b^2 = 3/4, and on the b < 0
            // branch a + ln(y + sqrt(y^2 - 3/4)) = 1/2 - ln 2. Equilibrium
            // d = 0 gives b y + 1/2 + 2a = 0.
            let half = real::<T>(0.5);
            let g = |y: T| {
                let s = (y * y - real::<T>(0.75)).sqrt();
                let a = half - real::<T>(2.0).ln() - (y + s).ln();
                -s * y + half + real::<T>(2.0) * a
            };
            let lo = real::<T>(0.75).sqrt() + real::<T>(1e-9);
            let y = bisect(g, lo, T::one(), real(1e-13))?;
            let s = (y * y - real::<T>(0.75)).sqrt();
            let b = -s;
            let a = half - real::<T>(2.0).ln() - (y + s).ln();
            let xv = -half - a;
            Ok(SingleEdgeEquilibrium {
                scenario,
                free_u: y,
                opinion_v: xv,
                map_u: (a, b),
                map_v: init.map_v,
                expressed: init.map_v * xv,
            })
        }
        Scenario::UniversalAdaptation => {
            require_standard(init, scenario)?;
            // Conserved: x_v = -c, y^2 - b^2 = 3/4, c = e^{a - 1/2}, and the
            // same b < 0 branch relation as outreach. Equilibrium d = 0 gives
            // a + b y + e^{2a - 1} = 0.
            let half = real::<T>(0.5);
            let g = |y: T| {
                let s = (y * y - real::<T>(0.75)).sqrt();
                let a = half - real::<T>(2.0).ln() - (y + s).ln();
                a - s * y + (real::<T>(2.0) * a - T::one()).exp()
            };
            let lo = real::<T>(0.75).sqrt() + real::<T>(1e-9);
            let y = bisect(g, lo, T::one(), real(1e-13))?;
            let s = (y * y - real::<T>(0.75)).sqrt();
            let b = -s;
            let a = half - real::<T>(2.0).ln() - (y + s).ln();
            let c = (a - half).exp();
            let xv = -c;
            Ok(SingleEdgeEquilibrium {
                scenario,
                free_u: y,
                opinion_v: xv,
                map_u: (a, b),
                map_v: c,
                expressed: c * xv,
            })
        }
    }
}

fn require_standard<T: Real>(init: &SingleEdgeInit<T>, scenario: Scenario) -> Result<()> {
    if init.is_standard() {
        Ok(())
    } else {
        Err(SheafError::Numerical(format!(
            "{} closed form uses the conserved quantities of the standard initial data",
            scenario.name()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_stubbornness_projects_to_one_fifth_three_fifths() {
        let eq = single_edge_equilibrium(
            Scenario::StructuralStubbornness,
            &SingleEdgeInit::<f64>::standard(),
        )
        .unwrap();
        assert!((eq.free_u - 0.2).abs() < 1e-14);
        assert!((eq.opinion_v - 0.6).abs() < 1e-14);
        assert!((eq.expressed - 0.6).abs() < 1e-14);
    }

    #[test]
    fn accommodation_root_satisfies_the_transcendental_equation() {
        let eq =
            single_edge_equilibrium(Scenario::Accommodation, &SingleEdgeInit::<f64>::standard())
                .unwrap();
        let c = eq.map_v;
        assert!((c.ln() + 4.0 * c * c + 4.0).abs() < 1e-10);
        assert!((eq.opinion_v + c).abs() < 1e-14);
    }

    #[test]
    fn unbracketed_roots_are_reported() {
        let err = bisect(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12).unwrap_err();
        assert!(matches!(err, SheafError::Numerical(_)));
    }
}
