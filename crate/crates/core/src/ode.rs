//! Dormand–Prince 5(4) embedded Runge–Kutta integrator.
//!
//! Error control is mixed absolute/relative per component. Every accepted step
//! is handed to an observer which may abort the integration; the Bryant solver
//! uses this to watch its monotone quantities while the solution is built.

use std::ops::ControlFlow;

/// Right-hand side of `dy/dt = f(t, y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];
}

impl<const N: usize, F> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N] {
        self(t, y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step the controller may take.
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl StepControl {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 2_000_000,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("aborted by observer at t = {t}")]
    Aborted { t: f64 },
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*, the embedded error weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// Integrate from `t0` to `t_end` (forward only). The observer sees the
/// initial point and then every accepted step as `(t, y, dy/dt)`.
pub fn integrate<const N: usize, S, O>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    h0: f64,
    ctl: &StepControl,
    mut observer: O,
) -> Result<OdeStats, OdeError>
where
    S: OdeSystem<N> + ?Sized,
    O: FnMut(f64, &[f64; N], &[f64; N]) -> ControlFlow<()>,
{
    assert!(t_end > t0, "integrate runs forward only");
    let mut stats = OdeStats::default();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = sys.rhs(t, &y);
    stats.rhs_evals += 1;
    if observer(t, &y, &k1).is_break() {
        return Err(OdeError::Aborted { t });
    }
    let mut h = h0.min(ctl.h_max).min(t_end - t);
    let mut last = false;

    loop {
        if stats.accepted + stats.rejected >= ctl.max_steps {
            return Err(OdeError::TooManySteps {
                t,
                max_steps: ctl.max_steps,
            });
        }
        if t + h >= t_end {
            h = t_end - t;
            last = true;
        }
        let k2 = sys.rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = sys.rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = sys.rhs(
            t + C4 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = sys.rhs(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = sys.rhs(
            t + h,
            &axpy(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = sys.rhs(t + h, &y_new);
        stats.rhs_evals += 6;

        let mut err2 = 0.0;
        for i in 0..N {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = ctl.atol + ctl.rtol * y[i].abs().max(y_new[i].abs());
            err2 += (e / sc).powi(2);
        }
        let err = (err2 / N as f64).sqrt();
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            // treat as a failed step and shrink hard
            h *= 0.1;
            last = false;
            stats.rejected += 1;
            if h < ctl.h_min {
                return Err(OdeError::NonFinite { t });
            }
            continue;
        }

        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };

        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            y = y_new;
            k1 = k7; // FSAL
            stats.accepted += 1;
            if observer(t, &y, &k1).is_break() {
                return Err(OdeError::Aborted { t });
            }
            if last {
                return Ok(stats);
            }
            h = (h * factor).min(ctl.h_max);
        } else {
            stats.rejected += 1;
            last = false;
            h *= factor.min(1.0);
            if h < ctl.h_min {
                return Err(OdeError::StepUnderflow { t });
            }
        }
    }
}

/// Convenience: integrate and return only the final state.
pub fn integrate_to<const N: usize, S>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    ctl: &StepControl,
) -> Result<[f64; N], OdeError>
where
    S: OdeSystem<N> + ?Sized,
{
    let mut last = y0;
    let h0 = ((t_end - t0) * 1e-3).min(ctl.h_max);
    integrate(sys, t0, y0, t_end, h0, ctl, |_, y, _| {
        last = *y;
        ControlFlow::Continue(())
    })?;
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_matches_closed_form() {
        let sys = |_t: f64, y: &[f64; 1]| [y[0]];
        let ctl = StepControl::new(1e-11, 1e-14);
        let y = integrate_to(&sys, 0.0, [1.0], 3.0, &ctl).unwrap();
        assert!((y[0] - 3f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn harmonic_oscillator_conserves_energy_to_tolerance() {
        let sys = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let ctl = StepControl::new(1e-10, 1e-12);
        let mut worst: f64 = 0.0;
        integrate(&sys, 0.0, [1.0, 0.0], 50.0, 1e-3, &ctl, |_, y, _| {
            worst = worst.max((y[0] * y[0] + y[1] * y[1] - 1.0).abs());
            ControlFlow::Continue(())
        })
        .unwrap();
        assert!(worst < 1e-8, "energy drift {worst}");
    }

    #[test]
    fn observer_can_abort() {
        let sys = |_t: f64, _y: &[f64; 1]| [1.0];
        let ctl = StepControl::new(1e-8, 1e-8).with_h_max(0.1);
        let err = integrate(&sys, 0.0, [0.0], 10.0, 0.1, &ctl, |t, _, _| {
            if t > 1.0 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap_err();
        assert!(matches!(err, OdeError::Aborted { .. }));
    }

    #[test]
    fn h_max_is_respected() {
        let sys = |_t: f64, _y: &[f64; 1]| [0.0];
        let ctl = StepControl::new(1e-8, 1e-8).with_h_max(0.25);
        let mut ts = vec![];
        integrate(&sys, 0.0, [0.0], 2.0, 0.1, &ctl, |t, _, _| {
            ts.push(t);
            ControlFlow::Continue(())
        })
        .unwrap();
        assert!(ts.windows(2).all(|w| w[1] - w[0] <= 0.25 + 1e-15));
        assert_eq!(*ts.last().unwrap(), 2.0);
    }
}
