//! External potential seen by the atom: optical lattice, gravity, hard wall and
//! a parametric atom-surface interaction with an optional Yukawa term.
//!
//! Everything here works in lattice units: positions are `x = k_l z`, so one
//! lattice period (`lambda_l / 2`) spans `pi`, and energies are in `E_r`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant (J s), CODATA 2018.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass unit (kg), CODATA 2018.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Newtonian constant of gravitation (m^3 kg^-1 s^-2), CODATA 2018.
pub const G_NEWTON: f64 = 6.674_30e-11;
/// Standard gravity (m/s^2).
pub const STANDARD_GRAVITY: f64 = 9.806_65;
/// Mass of Rb-87 as used throughout the defaults (u).
pub const RB87_MASS_U: f64 = 86.909;

/// Discretisation of the half-line `z > 0` in front of the wall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Wall position in lattice periods (small positive offset).
    pub z_min_periods: f64,
    /// Number of lattice periods covered by the box.
    pub n_periods: usize,
    /// Grid points per lattice period.
    pub points_per_period: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { z_min_periods: 1e-3, n_periods: 40, points_per_period: 128 }
    }
}

impl GridSpec {
    /// Grid spacing in units of `1/k_l`.
    pub fn spacing(&self) -> f64 {
        PI / self.points_per_period as f64
    }

    pub fn x_min(&self) -> f64 {
        self.z_min_periods * PI
    }

    /// Number of stored nodes, wall and far boundary included.
    pub fn len(&self) -> usize {
        self.n_periods * self.points_per_period + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min() + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }
}

/// Parametric atom-surface interaction, in lattice units.
///
/// `V(x) = -c3 / (x^3 (1 + x / retardation_length)) + alpha * K_Y * exp(-x / yukawa_range)`
///
/// `c3` is in `E_r / k_l^3`, lengths in `1/k_l` and `yukawa_prefactor` (`K_Y`) in `E_r`.
/// The default coefficients are placeholders and need calibrating against a
/// proper atom-surface computation before any quantitative use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePotentialParams {
    pub c3_coefficient: f64,
    pub retardation_length: f64,
    pub yukawa_amplitude: f64,
    pub yukawa_range: f64,
    pub yukawa_prefactor: f64,
}

impl SurfacePotentialParams {
    /// All couplings off: the pure Wannier-Stark potential.
    pub fn off() -> Self {
        SurfacePotentialParams {
            c3_coefficient: 0.0,
            retardation_length: 1.0,
            yukawa_amplitude: 0.0,
            yukawa_range: 1.0,
            yukawa_prefactor: 0.0,
        }
    }

    pub fn is_off(&self) -> bool {
        self.c3_coefficient == 0.0 && (self.yukawa_amplitude == 0.0 || self.yukawa_prefactor == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c3_coefficient != 0.0 && !(self.retardation_length > 0.0) {
            return Err(Error::Config("retardation length must be positive when c3 != 0".into()));
        }
        if self.yukawa_amplitude != 0.0 && !(self.yukawa_range > 0.0) {
            return Err(Error::Config("Yukawa range must be positive when alpha != 0".into()));
        }
        Ok(())
    }
}

/// How the atom-surface term enters the state computation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceTreatment {
    /// States from lattice + gravity + wall; energies shifted by `<phi|V_s|phi>`.
    #[default]
    Perturbative,
    /// `V_s` included in the diagonalised Hamiltonian.
    Hamiltonian,
}

/// Physical parameters of the trap and the probe fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// Lattice depth `U` in units of `E_r`.
    pub depth_u: f64,
    /// Lattice laser wavelength (m).
    pub lambda_lattice: f64,
    /// Atomic mass (kg).
    pub atom_mass: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity_g: f64,
    /// Free-space Rabi frequency (rad/s).
    pub rabi_omega: f64,
    /// `k_s / k_l` of the Raman tones.
    pub k_probe_ratio: f64,
    /// Internal transition frequency (rad/s). Only enters through detunings.
    pub omega_eg: f64,
    pub surface_model: SurfacePotentialParams,
    #[serde(default)]
    pub surface_treatment: SurfaceTreatment,
    pub grid: GridSpec,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        let mut cfg = LatticeConfig {
            depth_u: 3.0,
            lambda_lattice: 532e-9,
            atom_mass: RB87_MASS_U * AMU,
            gravity_g: STANDARD_GRAVITY,
            rabi_omega: 100.0,
            k_probe_ratio: 2.0 * 532.0 / 780.0,
            omega_eg: 2.0 * PI * 6.834_682_610_904e9,
            surface_model: SurfacePotentialParams::off(),
            surface_treatment: SurfaceTreatment::default(),
            grid: GridSpec::default(),
        };
        cfg.surface_model = default_surface_model(&cfg);
        cfg
    }
}

/// Placeholder atom-surface coefficients (uncalibrated): `C3 = 5.6e-49 J m^3`,
/// crossover length `lambda_D2 / 2 pi`, no Yukawa term.
pub fn default_surface_model(cfg: &LatticeConfig) -> SurfacePotentialParams {
    let k = cfg.k_lattice();
    SurfacePotentialParams {
        c3_coefficient: 5.6e-49 * k.powi(3) / cfg.recoil_energy(),
        retardation_length: 780.241e-9 / (2.0 * PI) * k,
        yukawa_amplitude: 0.0,
        yukawa_range: 1e-6 * k,
        yukawa_prefactor: 0.0,
    }
}

impl LatticeConfig {
    pub fn without_surface(&self) -> Self {
        LatticeConfig { surface_model: SurfacePotentialParams::off(), ..self.clone() }
    }

    /// Lattice wavevector `k_l = 2 pi / lambda_l` (1/m).
    pub fn k_lattice(&self) -> f64 {
        2.0 * PI / self.lambda_lattice
    }

    /// Recoil energy `E_r = hbar^2 k_l^2 / (2 m_a)` (J).
    pub fn recoil_energy(&self) -> f64 {
        let k = self.k_lattice();
        HBAR * HBAR * k * k / (2.0 * self.atom_mass)
    }

    /// `E_r / hbar` (rad/s): converts dimensionless time and angular frequency.
    pub fn recoil_rate(&self) -> f64 {
        self.recoil_energy() / HBAR
    }

    /// Gravitational energy drop per lattice period, `m_a g lambda_l / 2`, in `E_r`.
    pub fn ladder_spacing(&self) -> f64 {
        self.atom_mass * self.gravity_g * self.lambda_lattice / 2.0 / self.recoil_energy()
    }

    /// Slope of the gravity term in `E_r` per unit `x`.
    pub fn gravity_slope(&self) -> f64 {
        self.atom_mass * self.gravity_g / (self.k_lattice() * self.recoil_energy())
    }

    /// Free-space Rabi frequency in units of `E_r / hbar`.
    pub fn rabi_dimensionless(&self) -> f64 {
        self.rabi_omega / self.recoil_rate()
    }

    pub fn seconds_to_dimensionless(&self, t: f64) -> f64 {
        t * self.recoil_rate()
    }

    pub fn dimensionless_to_seconds(&self, tau: f64) -> f64 {
        tau / self.recoil_rate()
    }

    pub fn energy_to_si(&self, e: f64) -> f64 {
        e * self.recoil_energy()
    }

    pub fn energy_from_si(&self, joules: f64) -> f64 {
        joules / self.recoil_energy()
    }

    pub fn length_to_si(&self, x: f64) -> f64 {
        x / self.k_lattice()
    }

    pub fn length_from_si(&self, z: f64) -> f64 {
        z * self.k_lattice()
    }

    /// Centre of well `m` (a lattice minimum) in units of `1/k_l`.
    pub fn well_center(m: usize) -> f64 {
        m as f64 * PI
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth_u > 0.0) {
            return Err(Error::Config(format!("lattice depth must be positive, got {}", self.depth_u)));
        }
        if !(self.lambda_lattice > 0.0) {
            return Err(Error::Config("lattice wavelength must be positive".into()));
        }
        if !(self.atom_mass > 0.0) {
            return Err(Error::Config("atomic mass must be positive".into()));
        }
        if !(self.rabi_omega >= 0.0) {
            return Err(Error::Config("Rabi frequency must be non-negative".into()));
        }
        if !(self.grid.z_min_periods > 0.0) {
            return Err(Error::Config("grid z_min must be a positive offset".into()));
        }
        if self.grid.n_periods < 1 {
            return Err(Error::Config("grid must cover at least one period".into()));
        }
        self.surface_model.validate()
    }

    /// Stable identifier of this configuration (hex digest of its JSON form).
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// `-m_a g z + (U/2)(1 - cos 2 k_l z)` in `E_r`, with `x = k_l z >= 0`.
pub fn lattice_gravity_potential(x: f64, cfg: &LatticeConfig) -> f64 {
    -cfg.gravity_slope() * x + 0.5 * cfg.depth_u * (1.0 - (2.0 * x).cos())
}

/// Atom-surface potential at distance `x > 0` from the wall.
pub fn surface_potential(x: f64, p: &SurfacePotentialParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("surface potential needs x > 0, got {x}")));
    }
    let mut v = 0.0;
    if p.c3_coefficient != 0.0 {
        v -= p.c3_coefficient / (x.powi(3) * (1.0 + x / p.retardation_length));
    }
    if p.yukawa_amplitude != 0.0 && p.yukawa_prefactor != 0.0 {
        v += p.yukawa_amplitude * p.yukawa_prefactor * (-x / p.yukawa_range).exp();
    }
    Ok(v)
}

/// Sum of lattice, gravity and surface terms.
pub fn total_potential(x: f64, cfg: &LatticeConfig) -> Result<f64> {
    Ok(lattice_gravity_potential(x, cfg) + surface_potential(x, &cfg.surface_model)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rb() -> LatticeConfig {
        LatticeConfig::default()
    }

    #[test]
    fn lattice_term_vanishes_at_wall() {
        assert_eq!(lattice_gravity_potential(0.0, &rb()), 0.0);
    }

    #[test]
    fn quarter_wavelength_is_lattice_maximum() {
        let cfg = LatticeConfig { gravity_g: 0.0, ..rb() };
        // z = lambda/4  ->  x = pi/2
        let v = lattice_gravity_potential(PI / 2.0, &cfg);
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn half_wavelength_is_pure_gravity() {
        let cfg = rb();
        // closed form m g (lambda/2) / E_r with CODATA constants
        let k = 2.0 * PI / 532e-9;
        let m = 86.909 * 1.660_539_066_60e-27;
        let er = 1.054_571_817e-34_f64.powi(2) * k * k / (2.0 * m);
        let expected = -m * 9.806_65 * 266e-9 / er;
        let v = lattice_gravity_potential(PI, &cfg);
        assert!((v - expected).abs() < 1e-12);
        assert!((v + 0.0700).abs() < 1e-3, "{v}");
    }

    #[test]
    fn recoil_round_trip() {
        let cfg = rb();
        let k_back = (2.0 * cfg.atom_mass * cfg.recoil_energy()).sqrt() / HBAR;
        assert!(((k_back - cfg.k_lattice()) / cfg.k_lattice()).abs() < 1e-12);
        assert!(((cfg.recoil_rate() - 5.0965e4) / 5.0965e4).abs() < 1e-3);
    }

    #[test]
    fn surface_off_is_zero() {
        let p = SurfacePotentialParams::off();
        for x in [1e-3, 0.5, 3.0, 100.0] {
            assert_eq!(surface_potential(x, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn surface_rejects_nonpositive_distance() {
        let p = default_surface_model(&rb());
        assert!(matches!(surface_potential(0.0, &p), Err(Error::Domain(_))));
        assert!(surface_potential(-1.0, &p).is_err());
    }

    #[test]
    fn crossover_halves_the_near_field() {
        let p = default_surface_model(&rb());
        let x = p.retardation_length;
        let v = surface_potential(x, &p).unwrap();
        assert!((v + p.c3_coefficient / (2.0 * x.powi(3))).abs() < 1e-12 * v.abs());
    }

    #[test]
    fn surface_decays_monotonically_from_below() {
        let p = default_surface_model(&rb());
        let mut x = 0.5;
        while x < 1e4 {
            let a = surface_potential(x, &p).unwrap();
            let b = surface_potential(2.0 * x, &p).unwrap();
            assert!(a < 0.0 && b < 0.0 && b.abs() < a.abs());
            x *= 2.0;
        }
    }

    #[test]
    fn total_equals_lattice_when_surface_off() {
        let cfg = rb().without_surface();
        for x in [0.1, 1.0, 7.5, 40.0] {
            assert_eq!(total_potential(x, &cfg).unwrap(), lattice_gravity_potential(x, &cfg));
        }
    }

    #[test]
    fn surface_negligible_in_well_forty() {
        let cfg = rb();
        let x = LatticeConfig::well_center(40);
        let vs = surface_potential(x, &cfg.surface_model).unwrap();
        let vl = lattice_gravity_potential(x, &cfg);
        assert!((vs / vl).abs() < 1e-6, "{vs} vs {vl}");
    }

    #[test]
    fn surface_dominates_first_well_asymmetry() {
        let cfg = rb();
        // inner and outer barrier of well 1
        let (inner, outer) = (0.5 * PI, 1.5 * PI);
        let ds = surface_potential(outer, &cfg.surface_model).unwrap()
            - surface_potential(inner, &cfg.surface_model).unwrap();
        let dl = lattice_gravity_potential(outer, &cfg) - lattice_gravity_potential(inner, &cfg);
        assert!(ds.abs() > dl.abs());
    }

    #[test]
    fn periodic_without_gravity_and_surface() {
        let cfg = LatticeConfig { gravity_g: 0.0, ..rb() }.without_surface();
        for i in 0..50 {
            let x = 0.13 + 0.37 * i as f64;
            let a = total_potential(x, &cfg).unwrap();
            let b = total_potential(x + PI, &cfg).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn si_round_trip() {
        let cfg = rb();
        for v in [-3.2, 1e-5, 0.7013, 12.0] {
            let back = cfg.energy_from_si(cfg.energy_to_si(v));
            assert!(((back - v) / v).abs() < 1e-12);
        }
    }

    #[test]
    fn yukawa_toggles_independently() {
        let cfg = rb();
        let mut p = SurfacePotentialParams::off();
        p.yukawa_amplitude = 1e3;
        p.yukawa_prefactor = 1e-3;
        p.yukawa_range = 5.0;
        let only_yukawa = surface_potential(2.0, &p).unwrap();
        assert!((only_yukawa - (-2.0_f64 / 5.0).exp()).abs() < 1e-12);
        let mut both = cfg.surface_model.clone();
        both.yukawa_amplitude = p.yukawa_amplitude;
        both.yukawa_prefactor = p.yukawa_prefactor;
        both.yukawa_range = p.yukawa_range;
        let casimir = surface_potential(2.0, &cfg.surface_model).unwrap();
        assert!((surface_potential(2.0, &both).unwrap() - casimir - only_yukawa).abs() < 1e-12);
    }
}
