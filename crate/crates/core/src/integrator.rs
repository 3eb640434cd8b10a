//! Adaptive Dormand-Prince 5(4) for complex linear ODE systems `y' = f(t, y)`.

use crate::error::{Error, Result};
use crate::C64;

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on the step size (dimensionless time).
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-10, atol: 1e-12, max_step: f64::INFINITY, max_steps: 50_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub last_step: f64,
}

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
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates from `t0` to `t1` in place. `h0` is a first-step guess (`<= 0` picks one).
pub fn integrate<F>(mut rhs: F, t0: f64, t1: f64, y: &mut [C64], tol: &Tolerances, h0: f64) -> Result<StepStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len();
    let mut stats = StepStats::default();
    let span = t1 - t0;
    if span == 0.0 || n == 0 {
        return Ok(stats);
    }
    if span < 0.0 {
        return Err(Error::Integration { reason: "backward integration is not supported".into(), max_phase_step: 0.0 });
    }
    let mut k: [Vec<C64>; 7] = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n]);
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    let mut ynew = vec![C64::new(0.0, 0.0); n];
    let mut t = t0;
    rhs(t, y, &mut k[0]);
    let mut h = if h0 > 0.0 { h0 } else { initial_step(y, &k[0], tol, span) };
    h = h.min(tol.max_step).min(span);
    let mut err_prev = 1e-4_f64;

    while t < t1 {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return Err(Error::Integration {
                reason: format!("step budget of {} exhausted at t = {t:e}", tol.max_steps),
                max_phase_step: h,
            });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        let stage = |tmp: &mut Vec<C64>, k: &[Vec<C64>; 7], coeffs: &[(usize, f64)]| {
            for i in 0..n {
                let mut acc = y[i];
                for &(j, a) in coeffs {
                    acc += k[j][i] * (h * a);
                }
                tmp[i] = acc;
            }
        };
        stage(&mut tmp, &k, &[(0, A21)]);
        rhs(t + C2 * h, &tmp, &mut k[1]);
        stage(&mut tmp, &k, &[(0, A31), (1, A32)]);
        rhs(t + C3 * h, &tmp, &mut k[2]);
        stage(&mut tmp, &k, &[(0, A41), (1, A42), (2, A43)]);
        rhs(t + C4 * h, &tmp, &mut k[3]);
        stage(&mut tmp, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        rhs(t + C5 * h, &tmp, &mut k[4]);
        stage(&mut tmp, &k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        rhs(t + h, &tmp, &mut k[5]);
        for i in 0..n {
            ynew[i] = y[i] + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * h;
        }
        rhs(t + h, &ynew, &mut k[6]);

        let mut err = 0.0;
        for i in 0..n {
            let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * h;
            let sc = tol.atol + tol.rtol * y[i].norm().max(ynew[i].norm());
            err += (e.norm() / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();

        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            stats.accepted += 1;
            stats.last_step = h;
            // PI controller
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            err_prev = err.max(1e-4);
            h = (h * fac.clamp(0.2, 10.0)).min(tol.max_step);
        } else {
            stats.rejected += 1;
            // a NaN error also lands here
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            if !(h > 1e-14 * t.abs().max(1.0)) {
                return Err(Error::Integration { reason: format!("step size underflow at t = {t:e}"), max_phase_step: h });
            }
        }
    }
    Ok(stats)
}

fn initial_step(y: &[C64], f0: &[C64], tol: &Tolerances, span: f64) -> f64 {
    let scale = |v: &C64| tol.atol + tol.rtol * v.norm();
    let n = y.len() as f64;
    let d0 = (y.iter().map(|v| (v.norm() / scale(v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().zip(y).map(|(f, v)| (f.norm() / scale(v)).powi(2)).sum::<f64>() / n).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotate(omega: f64) -> impl FnMut(f64, &[C64], &mut [C64]) {
        move |_, y, dy| {
            dy[0] = C64::new(0.0, -omega) * y[0];
        }
    }

    #[test]
    fn phase_rotation_is_exact_to_tolerance() {
        let mut y = vec![C64::new(1.0, 0.0)];
        integrate(rotate(3.0), 0.0, 10.0, &mut y, &Tolerances::default(), 0.0).unwrap();
        let exact = C64::from_polar(1.0, -30.0);
        assert!((y[0] - exact).norm() < 1e-8, "{}", (y[0] - exact).norm());
    }

    #[test]
    fn two_level_rabi_keeps_norm() {
        let w = 0.7;
        let f = move |_: f64, y: &[C64], dy: &mut [C64]| {
            let i = C64::new(0.0, 1.0);
            dy[0] = -i * 0.5 * w * y[1];
            dy[1] = -i * 0.5 * w * y[0];
        };
        let mut y = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let t = std::f64::consts::PI / w;
        integrate(f, 0.0, t, &mut y, &Tolerances::default(), 0.0).unwrap();
        assert!(y[0].norm() < 1e-8);
        assert!((y[1].norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fifth_order_convergence() {
        // fixed steps via max_step and a loose tolerance: error ratio ~ 2^5
        let run = |h: f64| {
            let tol = Tolerances { rtol: 1.0, atol: 1.0, max_step: h, max_steps: 1_000_000 };
            let f = |t: f64, y: &[C64], dy: &mut [C64]| dy[0] = C64::new(0.0, -(1.0 + t.cos())) * y[0];
            let mut y = vec![C64::new(1.0, 0.0)];
            integrate(f, 0.0, 4.0, &mut y, &tol, h).unwrap();
            (y[0] - C64::from_polar(1.0, -(4.0 + 4.0_f64.sin()))).norm()
        };
        let (e1, e2) = (run(0.2), run(0.1));
        let order = (e1 / e2).log2();
        assert!(order > 4.5 && order < 6.5, "observed order {order}");
    }

    #[test]
    fn tiny_span_after_a_large_step_is_fine() {
        let mut y = vec![C64::new(1.0, 0.0)];
        let t0 = 2.6e4;
        integrate(rotate(1.0), t0, t0 + 2.6e-10, &mut y, &Tolerances::default(), 0.5).unwrap();
        assert!((y[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nan_rhs_is_an_integration_error() {
        let f = |_: f64, _: &[C64], dy: &mut [C64]| dy[0] = C64::new(f64::NAN, 0.0);
        let mut y = vec![C64::new(1.0, 0.0)];
        let r = integrate(f, 0.0, 1.0, &mut y, &Tolerances::default(), 0.0);
        assert!(matches!(r, Err(Error::Integration { .. })));
    }

    #[test]
    fn step_budget_is_an_integration_error() {
        let tol = Tolerances { max_steps: 5, max_step: 1e-3, ..Tolerances::default() };
        let mut y = vec![C64::new(1.0, 0.0)];
        let r = integrate(rotate(1.0), 0.0, 1.0, &mut y, &tol, 0.0);
        assert!(matches!(r, Err(Error::Integration { .. })));
    }
}
