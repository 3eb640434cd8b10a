//! Fringe scans over the free-evolution time, cosine fits, contrast, and the
//! closed-form interferometer phase.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::potentials::{surface_potential, LatticeConfig};
use crate::sequence::PulseProgram;
use crate::ws_solver::WSBasis;

/// Minimum samples per expected fringe period.
pub const MIN_POINTS_PER_PERIOD: f64 = 8.0;

/// `A + B cos(omega T + phi)` with `B >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineFit {
    pub offset: f64,
    pub amplitude: f64,
    pub angular_frequency: f64,
    pub phase: f64,
    /// Fraction of variance explained.
    pub r_squared: f64,
}

impl CosineFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (self.angular_frequency * t + self.phase).cos()
    }
}

/// Linear least squares at fixed `omega`; returns the fit and its residual sum of squares.
fn fit_fixed(t: &[f64], y: &[f64], omega: f64) -> (CosineFit, f64) {
    // normal equations for y ~ a + c cos(wt) + s sin(wt)
    let mut m = [[0.0_f64; 3]; 3];
    let mut r = [0.0_f64; 3];
    for (&ti, &yi) in t.iter().zip(y) {
        let b = [1.0, (omega * ti).cos(), (omega * ti).sin()];
        for i in 0..3 {
            r[i] += b[i] * yi;
            for j in 0..3 {
                m[i][j] += b[i] * b[j];
            }
        }
    }
    let x = nalgebra::Matrix3::from_fn(|i, j| m[i][j])
        .lu()
        .solve(&nalgebra::Vector3::new(r[0], r[1], r[2]))
        .unwrap_or_else(|| nalgebra::Vector3::new(y.iter().sum::<f64>() / y.len() as f64, 0.0, 0.0));
    let (a, c, s) = (x[0], x[1], x[2]);
    let fit = CosineFit { offset: a, amplitude: c.hypot(s), angular_frequency: omega, phase: (-s).atan2(c), r_squared: 0.0 };
    let rss = t.iter().zip(y).map(|(&ti, &yi)| (yi - fit.eval(ti)).powi(2)).sum();
    (fit, rss)
}

/// Linear least-squares fit of `A + B cos(omega T + phi)` at a fixed `omega`.
pub fn fit_cosine_at(t: &[f64], y: &[f64], omega: f64) -> Result<CosineFit> {
    if t.len() != y.len() || t.len() < 3 {
        return Err(Error::Usage("cosine fit needs at least 3 matching samples".into()));
    }
    let (mut fit, res) = fit_fixed(t, y, omega);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    fit.r_squared = if tss > 0.0 { 1.0 - res / tss } else { 1.0 };
    Ok(fit)
}

/// Least-squares fit of `A + B cos(omega T + phi)`. `omega` is searched in
/// `[omega_lo, omega_hi]` on a grid and then refined by golden-section search.
pub fn fit_cosine(t: &[f64], y: &[f64], omega_lo: f64, omega_hi: f64) -> Result<CosineFit> {
    if t.len() != y.len() || t.len() < 4 {
        return Err(Error::Usage("cosine fit needs at least 4 matching samples".into()));
    }
    if !(omega_lo > 0.0 && omega_hi > omega_lo) {
        return Err(Error::Usage(format!("invalid frequency window [{omega_lo}, {omega_hi}]")));
    }
    let span = t.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - t.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    // grid fine enough to resolve the residual minimum: a fraction of 2 pi / span
    let dw = (0.05 * 2.0 * PI / span.max(f64::MIN_POSITIVE)).min((omega_hi - omega_lo) / 16.0);
    let n = (((omega_hi - omega_lo) / dw).ceil() as usize).clamp(16, 200_000);
    let rss = |w: f64| fit_fixed(t, y, w).1;
    let (best_k, _) = (0..=n)
        .into_par_iter()
        .map(|k| (k, rss(omega_lo + (omega_hi - omega_lo) * k as f64 / n as f64)))
        .reduce(|| (0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let step = (omega_hi - omega_lo) / n as f64;
    let (mut a, mut b) = ((omega_lo + step * (best_k as f64 - 1.0)).max(omega_lo), (omega_lo + step * (best_k as f64 + 1.0)).min(omega_hi));
    let g = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (rss(c), rss(d));
    for _ in 0..200 {
        if (b - a) <= 1e-13 * b.abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = rss(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = rss(d);
        }
    }
    let (mut fit, res) = fit_fixed(t, y, 0.5 * (a + b));
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    fit.r_squared = if tss > 0.0 { 1.0 - res / tss } else { 1.0 };
    Ok(fit)
}

/// Michelson contrast `(max - min) / (max + min)`.
pub fn contrast(signal: &[f64]) -> f64 {
    let (lo, hi) = extrema(signal);
    if hi + lo > 0.0 {
        (hi - lo) / (hi + lo)
    } else {
        0.0
    }
}

/// Contrast with the denominator floored at full population, `(max - min) / max(max + min, 1)`.
/// Unlike [`contrast`] it stays small for signals that are small everywhere.
pub fn population_contrast(signal: &[f64]) -> f64 {
    let (lo, hi) = extrema(signal);
    (hi - lo) / (hi + lo).max(1.0)
}

fn extrema(signal: &[f64]) -> (f64, f64) {
    signal.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Final signal versus free-evolution time, with fit and contrast.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FringeScan {
    pub t_values: Vec<f64>,
    pub signal: Vec<f64>,
    /// `(max - min) / (max + min)` over the window.
    pub contrast: f64,
    /// See [`population_contrast`].
    pub population_contrast: f64,
    pub fitted_angular_frequency: f64,
    pub fitted_phase_offset: f64,
    pub fit: CosineFit,
    /// Largest norm deviation over all runs.
    pub norm_error: f64,
}

/// Uniform grid of `points` free-evolution times in `[t_min, t_max]`.
pub fn t_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![t_min];
    }
    (0..points).map(|i| t_min + (t_max - t_min) * i as f64 / (points - 1) as f64).collect()
}

/// Runs `program(T)` for each `T` (in parallel) and fits the fringe near
/// `expected_omega` (rad/s, searched within +/-30%).
pub fn scan_fringes<F>(dynamics: &Dynamics, program: F, t_values: &[f64], expected_omega: f64) -> Result<FringeScan>
where
    F: Fn(f64) -> Result<PulseProgram> + Sync,
{
    if t_values.len() < 4 {
        return Err(Error::Usage("a fringe scan needs at least 4 free-evolution times".into()));
    }
    let span = t_values[t_values.len() - 1] - t_values[0];
    let per_period = (t_values.len() - 1) as f64 * 2.0 * PI / (expected_omega * span);
    if !(per_period >= MIN_POINTS_PER_PERIOD) {
        return Err(Error::Usage(format!(
            "T grid gives {per_period:.2} points per expected fringe period; need at least {MIN_POINTS_PER_PERIOD}"
        )));
    }
    let runs = t_values
        .par_iter()
        .map(|&t| program(t)?.run(dynamics))
        .collect::<Result<Vec<_>>>()?;
    let signal: Vec<f64> = runs.iter().map(|r| r.signal).collect();
    let norm_error = runs.iter().fold(0.0_f64, |a, r| a.max(r.norm_error));
    let fit = fit_cosine(t_values, &signal, 0.7 * expected_omega, 1.3 * expected_omega)?;
    Ok(FringeScan {
        t_values: t_values.to_vec(),
        contrast: contrast(&signal),
        population_contrast: population_contrast(&signal),
        fitted_angular_frequency: fit.angular_frequency,
        fitted_phase_offset: fit.phase,
        fit,
        signal,
        norm_error,
    })
}

/// Where `U_m` is taken from in the closed-form phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceShiftMode {
    /// Surface potential at the well centre `x = m pi`.
    WellCenter,
    /// `<phi_m|V_s|phi_m>`.
    StateExpectation,
    /// Everything from solver energies: `2 |E_{m+1} - E_{m-1}|`.
    SolverEnergies,
}

impl std::str::FromStr for SurfaceShiftMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "well-center" | "well_center" => Ok(SurfaceShiftMode::WellCenter),
            "state" | "state_expectation" => Ok(SurfaceShiftMode::StateExpectation),
            "energies" | "solver_energies" => Ok(SurfaceShiftMode::SolverEnergies),
            _ => Err(Error::Usage(format!("unknown U_m mode '{s}' (well-center | state | energies)"))),
        }
    }
}

/// Closed-form fringe prediction for start well `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPhase {
    /// `2 (E_{m-1} - E_{m+1}) / hbar = 2 (m_a g lambda_l - (U_{m+1} - U_{m-1})) / hbar` (rad/s).
    /// Energies fall away from the wall, so a surface term that is more
    /// attractive near the wall lowers the frequency.
    pub angular_frequency: f64,
    /// `U_{m+1} - U_{m-1}` in `E_r`.
    pub surface_difference: f64,
    /// Butterfly well-dependent term `-4 m pi k_s / k_l`, wrapped to `(-pi, pi]`.
    pub well_phase: f64,
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Closed-form fringe frequency and well phase for start well `m >= 2`.
pub fn analytic_phase(cfg: &LatticeConfig, basis: Option<&WSBasis>, m: usize, mode: SurfaceShiftMode) -> Result<AnalyticPhase> {
    if m < 2 {
        return Err(Error::Domain(format!("start well {m} has no lower neighbour")));
    }
    let rate = cfg.recoil_rate();
    let need_basis = || basis.ok_or_else(|| Error::Usage("this U_m mode needs a solved basis".into()));
    let state = |w: usize| -> Result<&crate::ws_solver::WSState> {
        need_basis()?.state(w).ok_or_else(|| Error::Usage(format!("well {w} is not in the basis")))
    };
    let (freq, du) = match mode {
        SurfaceShiftMode::WellCenter => {
            let u = |w: usize| surface_potential(LatticeConfig::well_center(w), &cfg.surface_model);
            let du = u(m + 1)? - u(m - 1)?;
            (2.0 * (2.0 * cfg.ladder_spacing() - du) * rate, du)
        }
        SurfaceShiftMode::StateExpectation => {
            let du = state(m + 1)?.surface_shift - state(m - 1)?.surface_shift;
            (2.0 * (2.0 * cfg.ladder_spacing() - du) * rate, du)
        }
        SurfaceShiftMode::SolverEnergies => {
            let gap = state(m - 1)?.energy - state(m + 1)?.energy;
            (2.0 * gap * rate, 2.0 * cfg.ladder_spacing() - gap)
        }
    };
    Ok(AnalyticPhase {
        angular_frequency: freq.abs(),
        surface_difference: du,
        well_phase: wrap_phase(-4.0 * m as f64 * PI * cfg.k_probe_ratio),
    })
}

pub fn write_scan_csv<W: Write>(out: &mut W, scan: &FringeScan, resolved_config: &serde_json::Value) -> Result<()> {
    writeln!(out, "# schema: fringe-scan v1")?;
    writeln!(out, "# config: {resolved_config}")?;
    writeln!(
        out,
        "# contrast: {:.6} population_contrast: {:.6} omega_fit_rad_s: {:.8e} phase_fit_rad: {:.8} r_squared: {:.6} norm_error: {:.3e}",
        scan.contrast, scan.population_contrast, scan.fitted_angular_frequency, scan.fitted_phase_offset, scan.fit.r_squared, scan.norm_error
    )?;
    writeln!(out, "T_s,signal,fit")?;
    for (t, s) in scan.t_values.iter().zip(&scan.signal) {
        writeln!(out, "{t:.12e},{s:.12e},{:.12e}", scan.fit.eval(*t))?;
    }
    Ok(())
}

/// gnuplot script for a fringe CSV.
pub fn fringe_plot_script(csv_path: &str, title: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set xlabel 'T (s)'\nset ylabel 'P_e'\nset title '{title}'\n\
         plot '{csv_path}' every ::1 using 1:2 with points pt 7 ps 0.5 title 'simulation', \\\n\
         \x20    '' every ::1 using 1:3 with lines lc 'red' title 'cosine fit'\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_synthetic_cosine() {
        let t = t_grid(0.0, 2e-3, 120);
        let y: Vec<f64> = t.iter().map(|&x| 0.5 + 0.4 * (14_279.0 * x + 1.1).cos()).collect();
        let f = fit_cosine(&t, &y, 1e4, 2e4).unwrap();
        assert!((f.angular_frequency - 14_279.0).abs() < 1e-6);
        assert!((f.phase - 1.1).abs() < 1e-9);
        assert!((f.amplitude - 0.4).abs() < 1e-9);
        assert!(f.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn contrast_of_full_fringe_is_one() {
        let y = [0.0, 0.5, 1.0, 0.5];
        assert!((contrast(&y) - 1.0).abs() < 1e-15);
        assert!((population_contrast(&y) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn floored_contrast_ignores_tiny_signals() {
        let y = [1e-4, 3e-4, 2e-4];
        assert!(contrast(&y) > 0.4);
        assert!(population_contrast(&y) < 1e-3);
    }

    #[test]
    fn far_field_frequency_is_bloch_doubled() {
        let cfg = LatticeConfig::default().without_surface();
        let p = analytic_phase(&cfg, None, 20, SurfaceShiftMode::WellCenter).unwrap();
        let m = cfg.atom_mass;
        let expected = 2.0 * m * cfg.gravity_g * cfg.lambda_lattice / crate::potentials::HBAR;
        assert!((p.angular_frequency - expected).abs() < 1e-9 * expected);
        assert!((p.angular_frequency - 1.428e4).abs() < 10.0);
    }

    #[test]
    fn well_phase_steps_by_four_pi_kappa() {
        let cfg = LatticeConfig::default().without_surface();
        let a = analytic_phase(&cfg, None, 10, SurfaceShiftMode::WellCenter).unwrap();
        let b = analytic_phase(&cfg, None, 11, SurfaceShiftMode::WellCenter).unwrap();
        let step = wrap_phase(a.well_phase - b.well_phase);
        assert!((step - wrap_phase(4.0 * PI * cfg.k_probe_ratio)).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_is_refused() {
        let d = Dynamics::from_parts(vec![1], vec![0.0], vec![], 5e4);
        let t = t_grid(0.0, 1e-2, 10);
        let r = scan_fringes(&d, |_| unreachable!(), &t, 1.4e4);
        assert!(matches!(r, Err(Error::Usage(_))));
    }
}
