//! TOML run configuration and the shared setup of basis and dynamics.
//!
//! Every key is optional; missing ones take the defaults of [`LatticeConfig`].
//! Lengths are given in SI-friendly units (nm, um) and converted to lattice
//! units on resolution.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::potentials::{
    default_surface_model, GridSpec, LatticeConfig, SurfacePotentialParams, SurfaceTreatment, AMU, G_NEWTON, RB87_MASS_U,
};
use crate::sequence::{InitialCondition, RamanMode, Scheme, SchemeSpec};
use crate::ws_solver::{solve_states, WSBasis, MIN_BUFFER_PERIODS};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub pulses: PulseSection,
    #[serde(default)]
    pub surface: SurfaceSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    #[serde(rename = "depth_Er")]
    pub depth_er: f64,
    pub lambda_nm: f64,
    pub mass_u: f64,
    pub gravity: f64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        let d = LatticeConfig::default();
        LatticeSection { depth_er: d.depth_u, lambda_nm: d.lambda_lattice * 1e9, mass_u: RB87_MASS_U, gravity: d.gravity_g }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub omega_rad_s: f64,
    pub ks_over_kl: f64,
    pub omega_eg_rad_s: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        let d = LatticeConfig::default();
        PulseSection { omega_rad_s: d.rabi_omega, ks_over_kl: d.k_probe_ratio, omega_eg_rad_s: d.omega_eg }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceModelChoice {
    /// Placeholder coefficients, see [`default_surface_model`].
    #[default]
    Default,
    Off,
    /// Coefficients from this section.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSection {
    pub model: SurfaceModelChoice,
    pub treatment: SurfaceTreatment,
    /// `C3` (J m^3).
    pub c3_j_m3: f64,
    /// Crossover length of the retarded regime (nm).
    pub lambda_ret_nm: f64,
    pub alpha_yukawa: f64,
    pub lambda_yukawa_um: f64,
    /// Source density for `K_Y = -2 pi G m rho lambda_Y^2` (kg/m^3). Ignored
    /// when `yukawa_prefactor_Er` is set.
    pub density_kg_m3: f64,
    #[serde(rename = "yukawa_prefactor_Er")]
    pub yukawa_prefactor_er: Option<f64>,
    /// Replacement neighbour gaps `E_m - E_{m+1}` (`E_r`), as `[m, gap]` pairs.
    pub injected_gaps: Vec<(usize, f64)>,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        SurfaceSection {
            model: SurfaceModelChoice::Default,
            treatment: SurfaceTreatment::Perturbative,
            c3_j_m3: 5.6e-49,
            lambda_ret_nm: 780.241 / (2.0 * PI),
            alpha_yukawa: 0.0,
            lambda_yukawa_um: 1.0,
            density_kg_m3: 2200.0,
            yukawa_prefactor_er: None,
            injected_gaps: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub z_min_periods: f64,
    /// Box length; 0 picks one from the wells in use.
    pub n_periods: usize,
    pub points_per_period: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { z_min_periods: 1e-3, n_periods: 0, points_per_period: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    #[serde(rename = "T_min_s")]
    pub t_min_s: f64,
    /// 0 picks four expected fringe periods.
    #[serde(rename = "T_max_s")]
    pub t_max_s: f64,
    pub points: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection { t_min_s: 0.0, t_max_s: 0.0, points: 41 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub scheme: Scheme,
    pub mode: RamanMode,
    pub start_wells: Vec<usize>,
    /// Mixture weights, one per start well; equal if empty.
    pub weights: Vec<f64>,
    /// Start wells form a coherent superposition instead of a mixture.
    pub coherent: bool,
    /// Free-evolution time for `run` (s).
    #[serde(rename = "T_s")]
    pub t_s: f64,
    pub calibration_file: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            scheme: Scheme::Symmetric,
            // far wells sit on a uniform ladder where two tones coincide
            mode: RamanMode::Single,
            start_wells: vec![14],
            weights: Vec::new(),
            coherent: false,
            t_s: 0.0,
            calibration_file: "calibration.json".into(),
        }
    }
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Physical configuration with the grid sized for `n_wells` wells.
    pub fn lattice_config(&self, n_wells: usize) -> Result<LatticeConfig> {
        let l = &self.lattice;
        let mut cfg = LatticeConfig {
            depth_u: l.depth_er,
            lambda_lattice: l.lambda_nm * 1e-9,
            atom_mass: l.mass_u * AMU,
            gravity_g: l.gravity,
            rabi_omega: self.pulses.omega_rad_s,
            k_probe_ratio: self.pulses.ks_over_kl,
            omega_eg: self.pulses.omega_eg_rad_s,
            surface_model: SurfacePotentialParams::off(),
            surface_treatment: self.surface.treatment,
            grid: GridSpec {
                z_min_periods: self.grid.z_min_periods,
                n_periods: if self.grid.n_periods > 0 { self.grid.n_periods } else { n_wells + MIN_BUFFER_PERIODS + 8 },
                points_per_period: self.grid.points_per_period,
            },
        };
        cfg.surface_model = match self.surface.model {
            SurfaceModelChoice::Off => SurfacePotentialParams::off(),
            SurfaceModelChoice::Default => default_surface_model(&cfg),
            SurfaceModelChoice::Custom => {
                let s = &self.surface;
                let k = cfg.k_lattice();
                let range = s.lambda_yukawa_um * 1e-6;
                let prefactor = match s.yukawa_prefactor_er {
                    Some(p) => p,
                    None => -2.0 * PI * G_NEWTON * cfg.atom_mass * s.density_kg_m3 * range * range / cfg.recoil_energy(),
                };
                SurfacePotentialParams {
                    c3_coefficient: s.c3_j_m3 * k.powi(3) / cfg.recoil_energy(),
                    retardation_length: s.lambda_ret_nm * 1e-9 * k,
                    yukawa_amplitude: s.alpha_yukawa,
                    yukawa_range: range * k,
                    yukawa_prefactor: prefactor,
                }
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scheme_spec(&self, start_well: usize) -> SchemeSpec {
        SchemeSpec {
            scheme: self.run.scheme,
            start_well,
            mode: self.run.mode,
            rabi_omega: self.pulses.omega_rad_s,
            k_probe_ratio: self.pulses.ks_over_kl,
        }
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        let wells = &self.run.start_wells;
        if wells.is_empty() {
            return Err(Error::Config("run.start_wells is empty".into()));
        }
        let weights: Vec<f64> = if self.run.weights.is_empty() {
            vec![1.0; wells.len()]
        } else if self.run.weights.len() == wells.len() {
            self.run.weights.clone()
        } else {
            return Err(Error::Config("run.weights must match run.start_wells".into()));
        };
        Ok(match (wells.len(), self.run.coherent) {
            (1, _) => InitialCondition::Ground { well: wells[0] },
            (_, false) => InitialCondition::Incoherent { weights: wells.iter().copied().zip(weights).collect() },
            (_, true) => InitialCondition::Coherent {
                amplitudes: wells.iter().zip(weights).map(|(&m, w)| (m, w.sqrt(), 0.0)).collect(),
            },
        })
    }
}

/// Solved basis plus the dynamics over the window needed by `start_wells`.
pub struct Setup {
    pub cfg: LatticeConfig,
    pub basis: WSBasis,
    pub dynamics: Dynamics,
    /// Identifies basis, couplings and injected gaps; keys calibrations.
    pub hash: String,
}

impl Setup {
    pub fn new(file: &FileConfig, start_wells: &[usize]) -> Result<Self> {
        let window = SchemeSpec::window(start_wells);
        let n_wells = *window.last().unwrap_or(&1);
        let cfg = file.lattice_config(n_wells)?;
        let basis = solve_states(&cfg, n_wells)?;
        let mut dynamics = Dynamics::new(&basis, &cfg, &window, &[file.pulses.ks_over_kl])?;
        dynamics.inject_gaps(&file.surface.injected_gaps)?;
        let mut h = Sha256::new();
        h.update(basis.config_hash.as_bytes());
        h.update(serde_json::to_vec(&file.surface.injected_gaps).unwrap_or_default());
        h.update(serde_json::to_vec(&window).unwrap_or_default());
        let hash: String = h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect();
        dynamics.basis_hash = hash.clone();
        Ok(Setup { cfg, basis, dynamics, hash })
    }
}

/// The fully resolved configuration as JSON, for output headers.
pub fn resolved_json(file: &FileConfig, cfg: &LatticeConfig) -> serde_json::Value {
    serde_json::json!({ "file": file, "lattice": cfg })
}
