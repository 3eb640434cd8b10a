//! Laser coupling elements `<phi_m| exp(-i k_s z) |phi_m'>` between
//! Wannier-Stark states, and the Rabi-frequency-versus-depth scan.
//!
//! One axial coordinate is used throughout; `k_s` enters as the ratio
//! `kappa = k_s / k_l` so that the phase at grid node `x` is `kappa * x`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potentials::{GridSpec, LatticeConfig};
use crate::ws_solver::{solve_states, WSBasis, WSState};
use crate::C64;

/// Overlaps `C[m][m'] = <phi_m| exp(-i kappa x) |phi_m'>` over a window of wells.
///
/// The Rabi frequency between wells is `Omega/2 * C`; see [`CouplingTable::rabi_element`].
#[derive(Clone, Debug)]
pub struct CouplingTable {
    pub wells: Vec<usize>,
    /// Row-major `wells.len() x wells.len()`.
    pub elements: Vec<C64>,
    pub k_probe_ratio: f64,
    pub basis_hash: String,
}

impl CouplingTable {
    pub fn len(&self) -> usize {
        self.wells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wells.is_empty()
    }

    /// Element by window position.
    pub fn at(&self, k: usize, l: usize) -> C64 {
        self.elements[k * self.wells.len() + l]
    }

    /// Element by well index.
    pub fn get(&self, m: usize, m_prime: usize) -> Option<C64> {
        let k = self.wells.iter().position(|&w| w == m)?;
        let l = self.wells.iter().position(|&w| w == m_prime)?;
        Some(self.at(k, l))
    }

    pub fn rabi_element(&self, omega: f64, m: usize, m_prime: usize) -> Option<C64> {
        self.get(m, m_prime).map(|c| 0.5 * omega * c)
    }

    /// Identity-like table (exact microwave limit) with optional custom entries;
    /// mostly useful for building reduced models.
    pub fn from_elements(wells: Vec<usize>, elements: Vec<C64>, k_probe_ratio: f64) -> Self {
        assert_eq!(elements.len(), wells.len() * wells.len());
        CouplingTable { wells, elements, k_probe_ratio, basis_hash: String::from("custom") }
    }

    /// Largest off-diagonal magnitude.
    pub fn off_diagonal_norm(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0_f64;
        for k in 0..n {
            for l in 0..n {
                if k != l {
                    worst = worst.max(self.at(k, l).norm());
                }
            }
        }
        worst
    }
}

/// Trapezoidal quadrature of `phi_a(x) phi_b(x) exp(-i kappa x)` on the grid.
pub fn coupling_element(a: &WSState, b: &WSState, k_probe_ratio: f64, grid: &GridSpec) -> Result<C64> {
    if a.wavefunction.len() != b.wavefunction.len() || a.wavefunction.len() != grid.len() {
        return Err(Error::Usage(format!(
            "states live on different grids ({} vs {} samples, grid has {})",
            a.wavefunction.len(),
            b.wavefunction.len(),
            grid.len()
        )));
    }
    let phases = phase_factors(grid, k_probe_ratio);
    Ok(weighted_overlap(&a.wavefunction, &b.wavefunction, &phases, grid.spacing()))
}

fn phase_factors(grid: &GridSpec, kappa: f64) -> Vec<C64> {
    (0..grid.len()).map(|i| C64::from_polar(1.0, -kappa * grid.x(i))).collect()
}

fn weighted_overlap(a: &[f64], b: &[f64], phases: &[C64], h: f64) -> C64 {
    // end samples are zero, so the trapezoid weights are uniform
    let mut acc = C64::new(0.0, 0.0);
    for ((x, y), p) in a.iter().zip(b).zip(phases) {
        acc += p * (x * y);
    }
    acc * h
}

/// Coupling table over `wells` for `kappa = k_s / k_l`.
pub fn coupling_table(basis: &WSBasis, wells: &[usize], k_probe_ratio: f64) -> Result<CouplingTable> {
    let states = wells
        .iter()
        .map(|&m| basis.state(m).ok_or_else(|| Error::Usage(format!("well {m} is not in the basis"))))
        .collect::<Result<Vec<_>>>()?;
    let phases = phase_factors(&basis.grid, k_probe_ratio);
    let h = basis.grid.spacing();
    let n = wells.len();
    let mut elements = vec![C64::new(0.0, 0.0); n * n];
    // real wavefunctions make the table symmetric
    let upper: Vec<(usize, usize, C64)> = (0..n)
        .flat_map(|k| (k..n).map(move |l| (k, l)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(k, l)| (k, l, weighted_overlap(&states[k].wavefunction, &states[l].wavefunction, &phases, h)))
        .collect();
    for (k, l, c) in upper {
        elements[k * n + l] = c;
        elements[l * n + k] = c;
    }
    Ok(CouplingTable { wells: wells.to_vec(), elements, k_probe_ratio, basis_hash: basis.config_hash.clone() })
}

/// One row of the Rabi-versus-depth scan: `|C_{dm}|` for `dm = 0..=3`.
#[derive(Clone, Debug, PartialEq)]
pub struct RabiRow {
    pub depth: f64,
    pub normalized: [f64; 4],
}

/// Well used as the reference in the depth scan, far enough from the wall to be
/// in the translational regime.
pub const SCAN_REFERENCE_WELL: usize = 14;

/// For each depth, re-solve the basis around a far reference well and report
/// `|Omega_dm| / (Omega/2) = |C_{m, m+dm}|`. Depths whose solve fails are logged
/// and skipped.
pub fn rabi_vs_depth_scan(cfg: &LatticeConfig, depths: &[f64], k_probe_ratio: f64) -> Vec<RabiRow> {
    let m = SCAN_REFERENCE_WELL;
    depths
        .par_iter()
        .filter_map(|&depth| {
            let mut c = cfg.without_surface();
            c.depth_u = depth;
            // shallow lattices delocalise further
            let buffer = 14 + (30.0 / depth).ceil() as usize;
            c.grid.n_periods = c.grid.n_periods.max(m + 3 + buffer);
            let run = || -> Result<RabiRow> {
                let basis = solve_states(&c, m + 3)?;
                let wells: Vec<usize> = (m..=m + 3).collect();
                let table = coupling_table(&basis, &wells, k_probe_ratio)?;
                let mut normalized = [0.0; 4];
                for (d, slot) in normalized.iter_mut().enumerate() {
                    *slot = table.at(0, d).norm();
                }
                Ok(RabiRow { depth, normalized })
            };
            match run() {
                Ok(row) => Some(row),
                Err(e) => {
                    log::warn!("depth {depth} E_r skipped: {e}");
                    None
                }
            }
        })
        .collect()
}

pub fn write_rabi_csv<W: Write>(out: &mut W, rows: &[RabiRow], resolved_config: &serde_json::Value) -> Result<()> {
    writeln!(out, "# schema: rabi-vs-depth v1")?;
    writeln!(out, "# config: {resolved_config}")?;
    writeln!(out, "depth_Er,omega_0,omega_1,omega_2,omega_3")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.10e},{:.10e},{:.10e},{:.10e}",
            r.depth, r.normalized[0], r.normalized[1], r.normalized[2], r.normalized[3]
        )?;
    }
    Ok(())
}

/// gnuplot script reproducing the four-curve layout of the depth scan.
pub fn rabi_plot_script(csv_path: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set xlabel 'U / E_r'\nset ylabel 'normalised Rabi frequency'\n\
         set key top right\n\
         plot '{csv_path}' every ::1 using 1:2 with lines lw 2 lc 'black' title 'm-m''=0', \\\n\
         \x20    '' every ::1 using 1:3 with lines dt 2 lc 'red' title 'm-m''=\u{b1}1', \\\n\
         \x20    '' every ::1 using 1:4 with lines dt 3 lc 'blue' title 'm-m''=\u{b1}2', \\\n\
         \x20    '' every ::1 using 1:5 with lines dt 4 lc 'dark-green' title 'm-m''=\u{b1}3'\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn far_basis() -> (LatticeConfig, WSBasis) {
        let mut cfg = LatticeConfig::default().without_surface();
        cfg.grid.n_periods = 36;
        cfg.grid.points_per_period = 64;
        let basis = solve_states(&cfg, 22).unwrap();
        (cfg, basis)
    }

    #[test]
    fn microwave_limit_is_kronecker() {
        let (_, basis) = far_basis();
        let wells: Vec<usize> = (1..=22).collect();
        let t = coupling_table(&basis, &wells, 0.0).unwrap();
        for k in 0..t.len() {
            for l in 0..t.len() {
                let target = if k == l { 1.0 } else { 0.0 };
                assert!((t.at(k, l) - target).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn conjugation_symmetry() {
        let (cfg, basis) = far_basis();
        let (a, b) = (basis.state(10).unwrap(), basis.state(11).unwrap());
        let kappa = cfg.k_probe_ratio;
        let fwd = coupling_element(a, b, kappa, &basis.grid).unwrap();
        let back = coupling_element(b, a, -kappa, &basis.grid).unwrap();
        assert!((fwd - back.conj()).norm() < 1e-14);
    }

    #[test]
    fn hierarchy_at_three_recoils() {
        let (cfg, basis) = far_basis();
        let t = coupling_table(&basis, &[12, 13, 14, 15], cfg.k_probe_ratio).unwrap();
        let (c0, c1, c2) = (t.at(1, 1).norm(), t.at(1, 2).norm(), t.at(1, 3).norm());
        let cm1 = t.at(1, 0).norm();
        assert!(c1 > c0 && c1 > c2, "{c0} {c1} {c2}");
        assert!((c1 - cm1).abs() < 1e-6 * c1);
        for c in &t.elements {
            assert!(c.norm() <= 1.0);
        }
    }

    #[test]
    fn grid_mismatch_is_a_usage_error() {
        let (cfg, basis) = far_basis();
        let mut short = basis.state(3).unwrap().clone();
        short.wavefunction.pop();
        let r = coupling_element(&short, basis.state(4).unwrap(), cfg.k_probe_ratio, &basis.grid);
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn sign_flip_leaves_magnitudes() {
        let (cfg, basis) = far_basis();
        let a = basis.state(9).unwrap();
        let mut flipped = basis.state(10).unwrap().clone();
        flipped.wavefunction.iter_mut().for_each(|p| *p = -*p);
        let c = coupling_element(a, basis.state(10).unwrap(), cfg.k_probe_ratio, &basis.grid).unwrap();
        let f = coupling_element(a, &flipped, cfg.k_probe_ratio, &basis.grid).unwrap();
        assert!((c.norm() - f.norm()).abs() < 1e-15);
    }
}
