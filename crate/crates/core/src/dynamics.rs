//! Coherent two-level dynamics over a window of Wannier-Stark wells.
//!
//! Amplitudes are kept in the interaction picture with respect to the bare
//! Hamiltonian, `b_k(t) = a_k(t) exp(-i E_k t)` (plus `omega_eg` on the excited
//! manifold). Free evolution therefore leaves them unchanged and only advances
//! the global clock. The clock is never reset: every tone carries the phase
//! `exp(-i nu t)` of the absolute time at which it acts.
//!
//! A tone of detuning `nu = omega - omega_eg`, Rabi rate `Omega`, phase `phi`
//! and coupling table `C[k][l] = <phi_k|exp(-i kappa x)|phi_l>` gives
//!
//! ```text
//! da_e[k]/dt = -i Omega/2 e^{+i phi} sum_l conj(C[k][l]) e^{i (E_k - E_l - nu) t} a_g[l]
//! da_g[k]/dt = -i Omega/2 e^{-i phi} sum_l      C[k][l]  e^{i (E_k - E_l + nu) t} a_e[l]
//! ```
//!
//! so `g(l) -> e(k)` is resonant at `nu = E_k - E_l`.
//!
//! With [`PhaseReference::PulseStart`] the laser phase is `phi` at the start of
//! each pulse, so `nu t` is replaced by `nu (t - t_start)` while the energy
//! factors keep the global clock. A resonant pulse then imprints `-nu t_start`,
//! which is how free-evolution time reaches the final populations. With
//! [`PhaseReference::Continuous`] the laser runs freely and resonant couplings
//! carry no memory of when they act.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::couplings::{coupling_table, CouplingTable};
use crate::error::{Error, Result};
use crate::integrator::{integrate, StepStats, Tolerances};
use crate::potentials::LatticeConfig;
use crate::ws_solver::WSBasis;
use crate::C64;

/// Only couplings at least this large limit the step size.
const STEP_CAP_COUPLING_FLOOR: f64 = 1e-10;
/// Largest phase advance of a significant term per integration step (rad).
const MAX_PHASE_PER_STEP: f64 = 0.1;

/// Internal-state amplitudes per well, plus the global clock.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeSet {
    pub wells: Vec<usize>,
    pub a_g: Vec<C64>,
    pub a_e: Vec<C64>,
    /// Absolute time in seconds.
    pub clock: f64,
    pub basis_hash: String,
}

impl AmplitudeSet {
    pub fn vacuum(wells: &[usize], basis_hash: &str) -> Self {
        let n = wells.len();
        AmplitudeSet {
            wells: wells.to_vec(),
            a_g: vec![C64::new(0.0, 0.0); n],
            a_e: vec![C64::new(0.0, 0.0); n],
            clock: 0.0,
            basis_hash: basis_hash.to_string(),
        }
    }

    /// All population in `|g, m>`.
    pub fn ground_in(wells: &[usize], m: usize, basis_hash: &str) -> Result<Self> {
        Self::coherent(wells, &[(m, C64::new(1.0, 0.0))], basis_hash)
    }

    /// Normalised coherent superposition of ground states.
    pub fn coherent(wells: &[usize], weights: &[(usize, C64)], basis_hash: &str) -> Result<Self> {
        let mut s = Self::vacuum(wells, basis_hash);
        for &(m, w) in weights {
            let k = s.position(m)?;
            s.a_g[k] += w;
        }
        let nrm = s.norm();
        if nrm == 0.0 {
            return Err(Error::Usage("initial state has zero norm".into()));
        }
        let scale = 1.0 / nrm.sqrt();
        s.a_g.iter_mut().for_each(|a| *a *= scale);
        Ok(s)
    }

    pub fn position(&self, m: usize) -> Result<usize> {
        self.wells.iter().position(|&w| w == m).ok_or_else(|| Error::Usage(format!("well {m} is outside the window")))
    }

    pub fn norm(&self) -> f64 {
        self.a_g.iter().chain(&self.a_e).map(|a| a.norm_sqr()).sum()
    }

    pub fn ground_population(&self, m: usize) -> Result<f64> {
        Ok(self.a_g[self.position(m)?].norm_sqr())
    }

    pub fn excited_population(&self, m: usize) -> Result<f64> {
        Ok(self.a_e[self.position(m)?].norm_sqr())
    }

    pub fn total_excited(&self) -> f64 {
        self.a_e.iter().map(|a| a.norm_sqr()).sum()
    }

    fn pack(&self) -> Vec<C64> {
        self.a_g.iter().chain(&self.a_e).copied().collect()
    }

    fn unpack(&mut self, y: &[C64]) {
        let n = self.wells.len();
        self.a_g.copy_from_slice(&y[..n]);
        self.a_e.copy_from_slice(&y[n..]);
    }
}

/// Laser frequency of a tone, relative to the internal transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detuning {
    /// Resonant with `|g, g_well> -> |e, e_well>`.
    Resonant { g_well: usize, e_well: usize },
    /// Average of several resonances.
    Mean(Vec<(usize, usize)>),
    /// Fixed offset from `omega_eg` (rad/s).
    Offset(f64),
}

/// Origin of a tone's phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseReference {
    /// Phase `phi` at the start of every pulse.
    #[default]
    PulseStart,
    /// Phase `phi` at clock zero; the laser oscillates freely in between.
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub detuning: Detuning,
    /// Rabi frequency (rad/s).
    pub rabi_omega: f64,
    pub phase: f64,
    /// `k_s / k_l`; zero for a microwave field.
    pub k_probe_ratio: f64,
    /// Seconds; the tone is on from the pulse start for this long.
    pub duration: f64,
    #[serde(default)]
    pub reference: PhaseReference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    Microwave,
    Raman,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub kind: PulseKind,
    pub tones: Vec<Tone>,
}

impl Pulse {
    /// Resonant microwave pulse (no momentum transfer).
    pub fn microwave(rabi_omega: f64, phase: f64, duration: f64) -> Self {
        Pulse {
            kind: PulseKind::Microwave,
            tones: vec![Tone {
                detuning: Detuning::Offset(0.0),
                rabi_omega,
                phase,
                k_probe_ratio: 0.0,
                duration,
                reference: PhaseReference::PulseStart,
            }],
        }
    }

    pub fn duration(&self) -> f64 {
        self.tones.iter().fold(0.0, |a, t| a.max(t.duration))
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.tones.iter_mut().for_each(|t| t.duration = duration);
        self
    }

    pub fn with_phase_shift(mut self, dphi: f64) -> Self {
        self.tones.iter_mut().for_each(|t| t.phase += dphi);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.tones.is_empty() {
            return Err(Error::Usage("pulse has no tones".into()));
        }
        for t in &self.tones {
            if !(t.duration >= 0.0) || !t.rabi_omega.is_finite() || !t.phase.is_finite() {
                return Err(Error::Usage(format!("invalid tone {t:?}")));
            }
            if self.kind == PulseKind::Microwave && t.k_probe_ratio != 0.0 {
                return Err(Error::Usage("microwave tones carry no momentum".into()));
            }
        }
        Ok(())
    }
}

/// Energies and coupling tables of a well window: everything needed to
/// propagate amplitudes.
#[derive(Clone, Debug)]
pub struct Dynamics {
    pub wells: Vec<usize>,
    /// `E_r`.
    pub energies: Vec<f64>,
    tables: Vec<CouplingTable>,
    /// `E_r / hbar` (rad/s).
    pub recoil_rate: f64,
    pub basis_hash: String,
    pub tolerances: Tolerances,
}

/// Tone resolved into dimensionless quantities.
struct ActiveTone<'a> {
    nu: f64,
    half_rabi: C64,
    table: Option<&'a CouplingTable>,
    end: f64,
}

impl Dynamics {
    /// Window `wells` of `basis`, with coupling tables for each `kappa` in `kappas`.
    pub fn new(basis: &WSBasis, cfg: &LatticeConfig, wells: &[usize], kappas: &[f64]) -> Result<Self> {
        let energies = wells
            .iter()
            .map(|&m| basis.energy(m).ok_or_else(|| Error::Usage(format!("well {m} is not in the basis"))))
            .collect::<Result<Vec<_>>>()?;
        let tables = kappas
            .iter()
            .filter(|&&k| k != 0.0)
            .map(|&k| coupling_table(basis, wells, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dynamics {
            wells: wells.to_vec(),
            energies,
            tables,
            recoil_rate: cfg.recoil_rate(),
            basis_hash: basis.config_hash.clone(),
            tolerances: Tolerances::default(),
        })
    }

    /// Reduced model from explicit energies (`E_r`) and tables.
    pub fn from_parts(wells: Vec<usize>, energies: Vec<f64>, tables: Vec<CouplingTable>, recoil_rate: f64) -> Self {
        assert_eq!(wells.len(), energies.len());
        Dynamics { wells, energies, tables, recoil_rate, basis_hash: "custom".into(), tolerances: Tolerances::default() }
    }

    /// Overrides `E_m - E_{m+1}` for the given `(m, gap)` pairs (`E_r`). Other
    /// neighbour spacings are kept, and the first well of the window keeps its energy.
    pub fn inject_gaps(&mut self, gaps: &[(usize, f64)]) -> Result<()> {
        for &(m, _) in gaps {
            if !self.wells.contains(&m) || !self.wells.contains(&(m + 1)) {
                return Err(Error::Config(format!("gap {m}-{} is outside the well window", m + 1)));
            }
        }
        let mut out = self.energies.clone();
        for k in 1..self.wells.len() {
            let prev = self.wells[k - 1];
            let spacing = match gaps.iter().find(|(m, _)| *m == prev) {
                Some(&(_, g)) if self.wells[k] == prev + 1 => g,
                _ => self.energies[k - 1] - self.energies[k],
            };
            out[k] = out[k - 1] - spacing;
        }
        self.energies = out;
        Ok(())
    }

    pub fn energy(&self, m: usize) -> Option<f64> {
        self.wells.iter().position(|&w| w == m).map(|k| self.energies[k])
    }

    fn energy_of(&self, m: usize) -> Result<f64> {
        self.energy(m).ok_or_else(|| Error::Usage(format!("well {m} is outside the window")))
    }

    /// Detuning in `E_r`.
    pub fn detuning(&self, d: &Detuning) -> Result<f64> {
        match d {
            Detuning::Resonant { g_well, e_well } => Ok(self.energy_of(*e_well)? - self.energy_of(*g_well)?),
            Detuning::Mean(pairs) => {
                if pairs.is_empty() {
                    return Err(Error::Usage("mean detuning over no transitions".into()));
                }
                let mut acc = 0.0;
                for &(g, e) in pairs {
                    acc += self.energy_of(e)? - self.energy_of(g)?;
                }
                Ok(acc / pairs.len() as f64)
            }
            Detuning::Offset(w) => Ok(w / self.recoil_rate),
        }
    }

    fn table_for(&self, kappa: f64) -> Result<Option<&CouplingTable>> {
        if kappa == 0.0 {
            // exact microwave limit
            return Ok(None);
        }
        self.tables
            .iter()
            .find(|t| (t.k_probe_ratio - kappa).abs() <= 1e-12 * kappa.abs())
            .map(Some)
            .ok_or_else(|| Error::Usage(format!("no coupling table for k_s/k_l = {kappa}")))
    }

    fn check_state(&self, s: &AmplitudeSet) -> Result<()> {
        if s.wells != self.wells {
            return Err(Error::Usage("amplitude set and dynamics use different well windows".into()));
        }
        Ok(())
    }

    /// Advances the clock; amplitudes are constant between pulses.
    pub fn evolve_free(&self, state: &mut AmplitudeSet, seconds: f64) -> Result<()> {
        if !(seconds >= 0.0) {
            return Err(Error::Usage(format!("negative free-evolution time {seconds}")));
        }
        state.clock += seconds;
        Ok(())
    }

    /// Applies `pulse` starting at the current clock.
    pub fn evolve_pulse(&self, state: &mut AmplitudeSet, pulse: &Pulse) -> Result<StepStats> {
        self.evolve_pulse_sampled(state, pulse, 0, |_| {})
    }

    /// Applies `pulse`, calling `observe` at `samples + 1` equally spaced times.
    pub fn evolve_pulse_sampled<F>(
        &self,
        state: &mut AmplitudeSet,
        pulse: &Pulse,
        samples: usize,
        mut observe: F,
    ) -> Result<StepStats>
    where
        F: FnMut(&AmplitudeSet),
    {
        self.check_state(state)?;
        pulse.validate()?;
        let rate = self.recoil_rate;
        let t0 = state.clock * rate;
        let tones = self.resolve(pulse, t0)?;
        let t_end = t0 + pulse.duration() * rate;

        // breakpoints: tone switch-offs and sample times
        let mut marks: Vec<(f64, bool)> = tones.iter().map(|t| (t.end, false)).collect();
        if samples > 0 {
            observe(state);
            marks.extend((1..=samples).map(|i| (t0 + (t_end - t0) * i as f64 / samples as f64, true)));
        }
        marks.retain(|(t, _)| *t > t0);
        marks.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut y = state.pack();
        let mut total = StepStats::default();
        let mut t = t0;
        let mut h = 0.0;
        for (mark, is_sample) in marks {
            if mark > t {
                let active: Vec<&ActiveTone> = tones.iter().filter(|a| a.end > t).collect();
                let mut tol = self.tolerances;
                tol.max_step = tol.max_step.min(self.step_cap(&active));
                let stats = integrate(|tt, yy, dy| self.rhs(&active, tt, yy, dy), t, mark, &mut y, &tol, h)
                    .map_err(|e| match e {
                        Error::Integration { reason, max_phase_step } => Error::Integration {
                            reason,
                            max_phase_step: max_phase_step * self.max_phase_rate(&active),
                        },
                        other => other,
                    })?;
                h = stats.last_step;
                total.accepted += stats.accepted;
                total.rejected += stats.rejected;
                total.last_step = stats.last_step;
                t = mark;
            }
            if is_sample {
                state.unpack(&y);
                state.clock = t / rate;
                observe(state);
            }
        }
        state.unpack(&y);
        state.clock = t_end / rate;
        Ok(total)
    }

    fn resolve(&self, pulse: &Pulse, t0: f64) -> Result<Vec<ActiveTone<'_>>> {
        let rate = self.recoil_rate;
        pulse
            .tones
            .iter()
            .map(|t| {
                let nu = self.detuning(&t.detuning)?;
                let origin = match t.reference {
                    PhaseReference::PulseStart => t0,
                    PhaseReference::Continuous => 0.0,
                };
                Ok(ActiveTone {
                    nu,
                    // e^{-i phi} e^{i nu (t - origin)} with the origin folded into the phase
                    half_rabi: C64::from_polar(0.5 * t.rabi_omega / rate, -t.phase - nu * origin),
                    table: self.table_for(t.k_probe_ratio)?,
                    end: t0 + t.duration * rate,
                })
            })
            .collect()
    }

    /// Same pulse with every tone expressed as [`PhaseReference::Continuous`],
    /// assuming it starts at `clock` (s). Lets a pulse be split into pieces.
    pub fn anchor(&self, pulse: &Pulse, clock: f64) -> Result<Pulse> {
        let mut out = pulse.clone();
        for t in &mut out.tones {
            if t.reference == PhaseReference::PulseStart {
                t.phase += self.detuning(&t.detuning)? * clock * self.recoil_rate;
                t.reference = PhaseReference::Continuous;
            }
        }
        Ok(out)
    }

    /// Time derivatives `(da_g/dt, da_e/dt)` in 1/s for `state`, `elapsed` seconds
    /// into `pulse`.
    pub fn amplitude_rates(&self, state: &AmplitudeSet, pulse: &Pulse, elapsed: f64) -> Result<(Vec<C64>, Vec<C64>)> {
        self.check_state(state)?;
        pulse.validate()?;
        let rate = self.recoil_rate;
        let t = state.clock * rate;
        let tones = self.resolve(pulse, t - elapsed * rate)?;
        // a tone still counts at its switch-off instant
        let active: Vec<&ActiveTone> = tones.iter().filter(|a| a.end >= t).collect();
        let y = state.pack();
        let mut dy = vec![C64::new(0.0, 0.0); y.len()];
        self.rhs(&active, t, &y, &mut dy);
        dy.iter_mut().for_each(|d| *d *= rate);
        let n = self.wells.len();
        let de = dy.split_off(n);
        Ok((dy, de))
    }

    /// `C[g_well][e_well]` for a given `kappa` (1 on the diagonal for microwaves).
    pub fn coupling(&self, kappa: f64, g_well: usize, e_well: usize) -> Result<C64> {
        let k = self.wells.iter().position(|&w| w == g_well);
        let l = self.wells.iter().position(|&w| w == e_well);
        let (Some(k), Some(l)) = (k, l) else {
            return Err(Error::Usage(format!("wells {g_well}, {e_well} are outside the window")));
        };
        Ok(match self.table_for(kappa)? {
            Some(t) => t.at(k, l),
            None => C64::new(f64::from(u8::from(k == l)), 0.0),
        })
    }

    /// Largest phase rate `|E_k - E_l -/+ nu|` among non-negligible couplings.
    fn max_phase_rate(&self, active: &[&ActiveTone]) -> f64 {
        let n = self.wells.len();
        let mut worst = 0.0_f64;
        for a in active {
            for k in 0..n {
                for l in 0..n {
                    let c = match a.table {
                        Some(t) => t.at(k, l).norm(),
                        None => f64::from(u8::from(k == l)),
                    };
                    if c >= STEP_CAP_COUPLING_FLOOR {
                        let d = self.energies[k] - self.energies[l];
                        worst = worst.max((d - a.nu).abs()).max((d + a.nu).abs());
                    }
                }
            }
            worst = worst.max(a.half_rabi.norm());
        }
        worst
    }

    fn step_cap(&self, active: &[&ActiveTone]) -> f64 {
        let r = self.max_phase_rate(active);
        if r > 0.0 {
            MAX_PHASE_PER_STEP / r
        } else {
            f64::INFINITY
        }
    }

    fn rhs(&self, active: &[&ActiveTone], t: f64, y: &[C64], dy: &mut [C64]) {
        let n = self.wells.len();
        let (ag, ae) = y.split_at(n);
        let (dg, de) = dy.split_at_mut(n);
        dg.iter_mut().chain(de.iter_mut()).for_each(|d| *d = C64::new(0.0, 0.0));
        // p_k = exp(i E_k t)
        let p: Vec<C64> = self.energies.iter().map(|e| C64::from_polar(1.0, e * t)).collect();
        let ug: Vec<C64> = ag.iter().zip(&p).map(|(a, pk)| a * pk.conj()).collect();
        let ue: Vec<C64> = ae.iter().zip(&p).map(|(a, pk)| a * pk.conj()).collect();
        let minus_i = C64::new(0.0, -1.0);
        for a in active {
            // f = Omega/2 e^{-i phi} e^{i nu t}
            let f = a.half_rabi * C64::from_polar(1.0, a.nu * t);
            match a.table {
                None => {
                    for k in 0..n {
                        dg[k] += minus_i * f * p[k] * ue[k];
                        de[k] += minus_i * f.conj() * p[k] * ug[k];
                    }
                }
                Some(tab) => {
                    for k in 0..n {
                        let mut sg = C64::new(0.0, 0.0);
                        let mut se = C64::new(0.0, 0.0);
                        for l in 0..n {
                            let c = tab.at(k, l);
                            sg += c * ue[l];
                            se += c.conj() * ug[l];
                        }
                        dg[k] += minus_i * f * p[k] * sg;
                        de[k] += minus_i * f.conj() * p[k] * se;
                    }
                }
            }
        }
    }
}

/// Writes populations of a sampled trajectory as CSV.
pub fn write_trajectory_csv<W: Write>(out: &mut W, samples: &[AmplitudeSet], resolved_config: &serde_json::Value) -> Result<()> {
    writeln!(out, "# schema: trajectory v1")?;
    writeln!(out, "# config: {resolved_config}")?;
    let Some(first) = samples.first() else {
        return Ok(());
    };
    let mut header = String::from("time_s");
    for m in &first.wells {
        header.push_str(&format!(",P_g{m},P_e{m}"));
    }
    header.push_str(",norm");
    writeln!(out, "{header}")?;
    for s in samples {
        let mut line = format!("{:.12e}", s.clock);
        for (g, e) in s.a_g.iter().zip(&s.a_e) {
            line.push_str(&format!(",{:.12e},{:.12e}", g.norm_sqr(), e.norm_sqr()));
        }
        line.push_str(&format!(",{:.15}", s.norm()));
        writeln!(out, "{line}")?;
    }
    Ok(())
}
