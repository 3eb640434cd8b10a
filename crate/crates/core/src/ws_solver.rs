//! Surface-modified Wannier-Stark states.
//!
//! The single-particle Hamiltonian `-d^2/dx^2 + V(x)` is discretised with
//! second-order finite differences on `[x_min, x_min + n_periods * pi]`, with
//! Dirichlet conditions at both ends (the wall sits at `x_min`). Lowest-band
//! states are picked out by their de-tilted energy and labelled outward from
//! the wall in order of their centroid.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::bands::band_edges;
use crate::error::{Error, Result};
use crate::potentials::{surface_potential, total_potential, GridSpec, LatticeConfig, SurfaceTreatment};
use crate::tridiag::SymTridiagonal;

/// Minimum points per period: `h k_l < 0.2`.
pub const MIN_POINTS_PER_PERIOD: usize = 16;
/// Periods beyond the last retained well required to keep the far wall away.
pub const MIN_BUFFER_PERIODS: usize = 6;
/// Largest probability tolerated in the outermost periods of the box.
pub const EDGE_WEIGHT_TOL: f64 = 1e-8;
/// First well whose centroid must sit within half a period of its label.
pub const LABEL_CHECK_FROM: usize = 8;

#[derive(Clone, Debug)]
pub struct WSState {
    /// Well index, 1 for the well next to the wall.
    pub well_index: usize,
    /// Energy in `E_r`.
    pub energy: f64,
    /// Real samples on every grid node, wall and far boundary included.
    pub wavefunction: Vec<f64>,
    /// `sum |phi|^2 h` after normalisation.
    pub norm: f64,
    /// Mean position in lattice periods.
    pub centroid: f64,
    /// `<phi|V_s|phi>` in `E_r`, the surface potential felt in this state.
    pub surface_shift: f64,
}

#[derive(Clone, Debug)]
pub struct WSBasis {
    pub states: Vec<WSState>,
    pub grid: GridSpec,
    pub config_hash: String,
}

impl WSBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State of well `m` (1-based).
    pub fn state(&self, m: usize) -> Option<&WSState> {
        m.checked_sub(1).and_then(|i| self.states.get(i))
    }

    pub fn energy(&self, m: usize) -> Option<f64> {
        self.state(m).map(|s| s.energy)
    }

    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }

    /// Inner product on the grid; both states vanish at the end nodes so the
    /// trapezoidal rule reduces to a plain sum.
    pub fn overlap(&self, a: usize, b: usize) -> Option<f64> {
        let (sa, sb) = (self.state(a)?, self.state(b)?);
        Some(dot(&sa.wavefunction, &sb.wavefunction) * self.grid.spacing())
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn gram_deviation(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0_f64;
        for i in 1..=n {
            for j in 1..=i {
                let o = self.overlap(i, j).unwrap();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((o - target).abs());
            }
        }
        worst
    }

    /// Columnar dump: a `#`-prefixed JSON header, then `z_periods,phi_1,...`.
    pub fn write_columns<W: Write>(&self, out: &mut W, resolved_config: &serde_json::Value) -> Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            schema: &'static str,
            config_hash: &'a str,
            energies_er: Vec<f64>,
            centroids_periods: Vec<f64>,
            config: &'a serde_json::Value,
        }
        let header = Header {
            schema: "ws-states v1",
            config_hash: &self.config_hash,
            energies_er: self.energies(),
            centroids_periods: self.states.iter().map(|s| s.centroid).collect(),
            config: resolved_config,
        };
        writeln!(out, "# {}", serde_json::to_string(&header).expect("header serialises"))?;
        let cols: Vec<String> = self.states.iter().map(|s| format!("phi_{}", s.well_index)).collect();
        writeln!(out, "z_periods,{}", cols.join(","))?;
        for i in 0..self.grid.len() {
            write!(out, "{:.8e}", self.grid.x(i) / PI)?;
            for s in &self.states {
                write!(out, ",{:.10e}", s.wavefunction[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_grid(grid: &GridSpec) -> Result<()> {
    if grid.spacing() >= 0.2 {
        return Err(Error::Config(format!(
            "grid too coarse: {} points per period gives h*k_l = {:.3}; need at least {} points per period",
            grid.points_per_period,
            grid.spacing(),
            MIN_POINTS_PER_PERIOD
        )));
    }
    Ok(())
}

/// Finite-difference Hamiltonian on the interior nodes (Dirichlet at both ends),
/// in units of `E_r` with `x = k_l z`: diagonal `2t + V(x_i)`, off-diagonal `-t`,
/// `t = 1/h^2`.
pub fn build_hamiltonian(cfg: &LatticeConfig) -> Result<SymTridiagonal> {
    cfg.validate()?;
    check_grid(&cfg.grid)?;
    let grid = &cfg.grid;
    let h = grid.spacing();
    let t = 1.0 / (h * h);
    let n = grid.len() - 2;
    let diag = (1..=n)
        .map(|i| total_potential(grid.x(i), cfg).map(|v| 2.0 * t + v))
        .collect::<Result<Vec<_>>>()?;
    Ok(SymTridiagonal::new(diag, vec![-t; n.saturating_sub(1)]))
}

/// Centroid of `|phi|^2` in lattice periods.
pub fn centroid_periods(wavefunction: &[f64], grid: &GridSpec) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, p) in wavefunction.iter().enumerate() {
        let w = p * p;
        num += w * grid.x(i);
        den += w;
    }
    num / den / PI
}

/// Well holding the wavefunction: the lattice period `[m - 1/2, m + 1/2)`
/// (in periods) that contains its centroid. A centroid on a period boundary
/// goes to the lower index.
pub fn well_index_of(wavefunction: &[f64], grid: &GridSpec) -> usize {
    let c = centroid_periods(wavefunction, grid);
    ((c - 0.5 - 1e-9).ceil().max(1.0)) as usize
}

/// Probability in each lattice period `[m - 1/2, m + 1/2)`, index 0 being the
/// half period against the wall.
pub fn period_weights(wavefunction: &[f64], grid: &GridSpec) -> Vec<f64> {
    let mut w = vec![0.0; grid.n_periods + 2];
    let total: f64 = wavefunction.iter().map(|p| p * p).sum();
    for (i, p) in wavefunction.iter().enumerate() {
        let k = (grid.x(i) / PI + 0.5).floor() as usize;
        w[k.min(grid.n_periods + 1)] += p * p / total;
    }
    w
}

/// `<phi|V_s|phi>` for a normalised state on the configured grid.
pub fn surface_expectation(wavefunction: &[f64], cfg: &LatticeConfig) -> Result<f64> {
    if cfg.surface_model.is_off() {
        return Ok(0.0);
    }
    let grid = &cfg.grid;
    let mut acc = 0.0;
    // the wall node carries no weight
    for (i, p) in wavefunction.iter().enumerate().skip(1) {
        acc += p * p * surface_potential(grid.x(i), &cfg.surface_model)?;
    }
    Ok(acc * grid.spacing())
}

/// Lowest-band states of wells `1..=n_wells`.
pub fn solve_states(cfg: &LatticeConfig, n_wells: usize) -> Result<WSBasis> {
    if n_wells < 1 {
        return Err(Error::Config("need at least one well".into()));
    }
    let grid = cfg.grid.clone();
    if grid.n_periods < n_wells + MIN_BUFFER_PERIODS {
        return Err(Error::Config(format!(
            "grid spans {} periods; {} wells need at least {}",
            grid.n_periods,
            n_wells,
            n_wells + MIN_BUFFER_PERIODS
        )));
    }
    let perturbative = cfg.surface_treatment == SurfaceTreatment::Perturbative;
    let ham = if perturbative { build_hamiltonian(&cfg.without_surface())? } else { build_hamiltonian(cfg)? };
    let h = grid.spacing();
    let slope = cfg.ladder_spacing();
    let edges = band_edges(cfg.depth_u, 64.max(grid.points_per_period.min(256)));
    let midgap = edges.midgap();

    // Search window: from just under the potential minimum away from the wall
    // up to mid-gap (plus any repulsive surface offset).
    let mut v_min = f64::INFINITY;
    let mut v_surf_max = 0.0_f64;
    for i in 1..grid.len() - 1 {
        let x = grid.x(i);
        if x >= 0.5 * PI {
            if perturbative {
                v_min = v_min.min(crate::potentials::lattice_gravity_potential(x, cfg));
            } else {
                v_min = v_min.min(total_potential(x, cfg)?);
                v_surf_max = v_surf_max.max(surface_potential(x, &cfg.surface_model)?);
            }
        }
    }
    let lo = v_min - 1.0;
    let hi = midgap + v_surf_max;

    let mut candidates: Vec<WSState> = Vec::new();
    let mut rejected_wall = 0;
    for (energy, interior) in ham.eigenpairs_in(lo, hi) {
        let mut wf = Vec::with_capacity(grid.len());
        wf.push(0.0);
        wf.extend_from_slice(&interior);
        wf.push(0.0);
        let c = centroid_periods(&wf, &grid);
        let detilted = energy + slope * c;
        if detilted >= midgap {
            continue;
        }
        // surface-bound states: hugging the wall or far below the lowest band
        if c < 0.5 || detilted < edges.band1_bottom - 0.5 * cfg.depth_u {
            rejected_wall += 1;
            continue;
        }
        let norm = (dot(&wf, &wf) * h).sqrt();
        // phase convention: largest-magnitude sample positive
        let peak = wf.iter().copied().fold(0.0_f64, |a, x| if x.abs() > a.abs() { x } else { a });
        let sign = if peak < 0.0 { -1.0 } else { 1.0 };
        wf.iter_mut().for_each(|p| *p *= sign / norm);
        let surface_shift = surface_expectation(&wf, cfg)?;
        let energy = if perturbative { energy + surface_shift } else { energy };
        candidates.push(WSState {
            well_index: 0,
            energy,
            norm: dot(&wf, &wf) * h,
            wavefunction: wf,
            centroid: c,
            surface_shift,
        });
    }
    if rejected_wall > 0 {
        log::debug!("ignored {rejected_wall} surface-bound states");
    }
    candidates.sort_by(|a, b| a.centroid.partial_cmp(&b.centroid).unwrap());
    if candidates.len() < n_wells {
        return Err(Error::Solver {
            well: candidates.len() + 1,
            reason: format!("only {} lowest-band states found in the box", candidates.len()),
        });
    }
    candidates.truncate(n_wells);

    let edge_periods = (MIN_BUFFER_PERIODS / 2).max(1);
    for (i, s) in candidates.iter_mut().enumerate() {
        let m = i + 1;
        s.well_index = m;
        let weights = period_weights(&s.wavefunction, &grid);
        let edge: f64 = weights[grid.n_periods + 1 - edge_periods..].iter().sum();
        if edge > EDGE_WEIGHT_TOL {
            return Err(Error::Solver {
                well: m,
                reason: format!(
                    "state not localised: weight {edge:.2e} within {edge_periods} periods of the box end \
                     (lattice too shallow or box too short)"
                ),
            });
        }
        // near the wall centroids move freely; further out a spurious extra
        // state would show up as a whole-period label shift
        if m >= LABEL_CHECK_FROM && (s.centroid - m as f64).abs() >= 0.5 {
            return Err(Error::Solver {
                well: m,
                reason: format!("labelling failed: centroid at {:.3} periods", s.centroid),
            });
        }
    }
    Ok(WSBasis { states: candidates, grid, config_hash: cfg.config_hash() })
}
