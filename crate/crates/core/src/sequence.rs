//! Pulse programs, the two interferometer templates, and duration calibration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AmplitudeSet, Detuning, Dynamics, PhaseReference, Pulse, PulseKind, Tone};
use crate::error::{Error, Result};
use crate::C64;

/// Wells kept on each side of the resonantly coupled ones.
pub const BUFFER_WELLS: usize = 3;
/// Calibrated durations are resolved to this many seconds.
pub const DURATION_RESOLUTION: f64 = 1e-6;
const COARSE_SAMPLES: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Step {
    Pulse(Pulse),
    /// Free evolution (s).
    Free { duration: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Ground { well: usize },
    /// Normalised superposition; `(well, re, im)`.
    Coherent { amplitudes: Vec<(usize, f64, f64)> },
    /// Statistical mixture of ground states; weights are normalised.
    Incoherent { weights: Vec<(usize, f64)> },
}

impl InitialCondition {
    pub fn wells(&self) -> Vec<usize> {
        match self {
            InitialCondition::Ground { well } => vec![*well],
            InitialCondition::Coherent { amplitudes } => amplitudes.iter().map(|a| a.0).collect(),
            InitialCondition::Incoherent { weights } => weights.iter().map(|w| w.0).collect(),
        }
    }

    /// `(weight, pure state)` members of the ensemble.
    fn members(&self, wells: &[usize], hash: &str) -> Result<Vec<(f64, AmplitudeSet)>> {
        match self {
            InitialCondition::Ground { well } => Ok(vec![(1.0, AmplitudeSet::ground_in(wells, *well, hash)?)]),
            InitialCondition::Coherent { amplitudes } => {
                let w: Vec<(usize, C64)> = amplitudes.iter().map(|&(m, re, im)| (m, C64::new(re, im))).collect();
                Ok(vec![(1.0, AmplitudeSet::coherent(wells, &w, hash)?)])
            }
            InitialCondition::Incoherent { weights } => {
                let total: f64 = weights.iter().map(|w| w.1).sum();
                if !(total > 0.0) || weights.iter().any(|w| w.1 < 0.0) {
                    return Err(Error::Usage("mixture weights must be non-negative with a positive sum".into()));
                }
                weights.iter().map(|&(m, w)| Ok((w / total, AmplitudeSet::ground_in(wells, m, hash)?))).collect()
            }
        }
    }
}

/// Ordered pulses and free evolutions acting on an initial condition. The
/// signal is the excited population summed over `observe`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseProgram {
    pub initial: InitialCondition,
    pub observe: Vec<usize>,
    #[serde(rename = "step")]
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub signal: f64,
    /// Largest `|norm - 1|` over ensemble members.
    pub norm_error: f64,
    pub finals: Vec<(f64, AmplitudeSet)>,
}

impl PulseProgram {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("pulse program: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Total duration of pulses and free evolution (s).
    pub fn duration(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| match s {
                Step::Pulse(p) => p.duration(),
                Step::Free { duration } => *duration,
            })
            .sum()
    }

    pub fn run(&self, dynamics: &Dynamics) -> Result<RunOutcome> {
        let members = self.initial.members(&dynamics.wells, &dynamics.basis_hash)?;
        let mut finals = Vec::with_capacity(members.len());
        let mut signal = 0.0;
        let mut norm_error = 0.0_f64;
        for (w, mut state) in members {
            for step in &self.steps {
                match step {
                    Step::Pulse(p) => {
                        dynamics.evolve_pulse(&mut state, p)?;
                    }
                    Step::Free { duration } => dynamics.evolve_free(&mut state, *duration)?,
                }
            }
            for &m in &self.observe {
                signal += w * state.excited_population(m)?;
            }
            norm_error = norm_error.max((state.norm() - 1.0).abs());
            finals.push((w, state));
        }
        Ok(RunOutcome { signal, norm_error, finals })
    }

    /// Amplitudes sampled `samples_per_pulse + 1` times across each pulse and
    /// at both ends of each free evolution. Pure initial states only.
    pub fn trajectory(&self, dynamics: &Dynamics, samples_per_pulse: usize) -> Result<Vec<AmplitudeSet>> {
        let mut members = self.initial.members(&dynamics.wells, &dynamics.basis_hash)?;
        if members.len() != 1 {
            return Err(Error::Usage("trajectories are only recorded for pure initial states".into()));
        }
        let (_, mut state) = members.remove(0);
        let mut out = vec![state.clone()];
        for step in &self.steps {
            match step {
                Step::Pulse(p) => {
                    // the first sample repeats the previous endpoint
                    let mut skip = true;
                    dynamics.evolve_pulse_sampled(&mut state, p, samples_per_pulse.max(1), |s| {
                        if !std::mem::take(&mut skip) {
                            out.push(s.clone());
                        }
                    })?;
                }
                Step::Free { duration } => {
                    dynamics.evolve_free(&mut state, *duration)?;
                    out.push(state.clone());
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Butterfly,
    Symmetric,
}

/// How each Raman pulse addresses its two transitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RamanMode {
    /// One tone, resonant with the upward transition only.
    Single,
    /// One tone per transition, each with its own duration.
    Dual,
    /// One tone at the mean frequency, timed by the upward resonance.
    Mean,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "butterfly" => Ok(Scheme::Butterfly),
            "symmetric" => Ok(Scheme::Symmetric),
            _ => Err(Error::Usage(format!("unknown scheme '{s}' (butterfly | symmetric)"))),
        }
    }
}

impl std::str::FromStr for RamanMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(RamanMode::Single),
            "dual" => Ok(RamanMode::Dual),
            "mean" => Ok(RamanMode::Mean),
            _ => Err(Error::Usage(format!("unknown Raman mode '{s}' (single | dual | mean)"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Butterfly => "butterfly",
            Scheme::Symmetric => "symmetric",
        })
    }
}

impl std::fmt::Display for RamanMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RamanMode::Single => "single",
            RamanMode::Dual => "dual",
            RamanMode::Mean => "mean",
        })
    }
}

/// Field parameters shared by every pulse of a scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub scheme: Scheme,
    pub start_well: usize,
    pub mode: RamanMode,
    /// rad/s, for both microwave and Raman fields.
    pub rabi_omega: f64,
    pub k_probe_ratio: f64,
}

impl SchemeSpec {
    fn m(&self) -> Result<usize> {
        if self.start_well < 2 {
            return Err(Error::Domain(format!("start well {} has no lower neighbour", self.start_well)));
        }
        Ok(self.start_well)
    }

    /// `(g_well, e_well)` of the upward and downward transitions of the first Raman pulse.
    fn out_transitions(&self) -> Result<[(usize, usize); 2]> {
        let m = self.m()?;
        Ok([(m, m + 1), (m - 1, m)])
    }

    /// Transitions of the recombining Raman pulse.
    fn back_transitions(&self) -> Result<[(usize, usize); 2]> {
        let m = self.m()?;
        match self.scheme {
            Scheme::Butterfly => Ok([(m + 1, m), (m, m - 1)]),
            Scheme::Symmetric => self.out_transitions(),
        }
    }

    fn raman_tone(&self, detuning: Detuning, duration: f64, phase: f64) -> Tone {
        Tone {
            detuning,
            rabi_omega: self.rabi_omega,
            phase,
            k_probe_ratio: self.k_probe_ratio,
            duration,
            reference: PhaseReference::PulseStart,
        }
    }

    fn raman_pulse(&self, transitions: [(usize, usize); 2], durations: &[f64], phase: f64) -> Result<Pulse> {
        let tones = match self.mode {
            RamanMode::Single => {
                vec![self.raman_tone(Detuning::Resonant { g_well: transitions[0].0, e_well: transitions[0].1 }, durations[0], phase)]
            }
            RamanMode::Mean => vec![self.raman_tone(Detuning::Mean(transitions.to_vec()), durations[0], phase)],
            RamanMode::Dual => {
                if durations.len() < 2 {
                    return Err(Error::CalibrationMissing("dual-tone pulse needs two durations".into()));
                }
                transitions
                    .iter()
                    .zip(durations)
                    .map(|(&(g, e), &d)| self.raman_tone(Detuning::Resonant { g_well: g, e_well: e }, d, phase))
                    .collect()
            }
        };
        Ok(Pulse { kind: PulseKind::Raman, tones })
    }

    /// Wells the dynamics must resolve for these start wells.
    pub fn window(start_wells: &[usize]) -> Vec<usize> {
        let lo = start_wells.iter().min().copied().unwrap_or(1);
        let hi = start_wells.iter().max().copied().unwrap_or(1);
        let first = lo.saturating_sub(1 + BUFFER_WELLS).max(1);
        (first..=hi + 1 + BUFFER_WELLS).collect()
    }

    pub fn key(&self, config_hash: &str) -> String {
        format!("{config_hash}/{}/{}/{}", self.scheme, self.start_well, self.mode)
    }
}

/// Durations (s) of every pulse of a scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeCalibration {
    pub microwave_half: f64,
    pub microwave_pi: f64,
    /// One entry per tone of the first Raman pulse.
    pub raman_out: Vec<f64>,
    pub raman_back: Vec<f64>,
}

/// Builds the full interferometer for free-evolution time `t` (s), with an
/// optional phase offset on the recombining microwave pulse.
pub fn scheme_program(spec: &SchemeSpec, cal: &SchemeCalibration, t: f64, initial: InitialCondition, final_phase: f64) -> Result<PulseProgram> {
    if !(t >= 0.0) {
        return Err(Error::Usage(format!("negative free-evolution time {t}")));
    }
    let mw = |d: f64, phase: f64| Step::Pulse(Pulse::microwave(spec.rabi_omega, phase, d));
    let out = Step::Pulse(spec.raman_pulse(spec.out_transitions()?, &cal.raman_out, 0.0)?);
    let back = Step::Pulse(spec.raman_pulse(spec.back_transitions()?, &cal.raman_back, 0.0)?);
    let free = Step::Free { duration: t };
    let steps = match spec.scheme {
        Scheme::Butterfly => vec![
            mw(cal.microwave_half, 0.0),
            out,
            free.clone(),
            mw(cal.microwave_pi, 0.0),
            free,
            back,
            mw(cal.microwave_half, final_phase),
        ],
        Scheme::Symmetric => vec![
            mw(cal.microwave_half, 0.0),
            out,
            free.clone(),
            mw(cal.microwave_pi, 0.0),
            free,
            mw(cal.microwave_pi, 0.0),
            back,
            mw(cal.microwave_half, final_phase),
        ],
    };
    let observe = initial.wells();
    Ok(PulseProgram { initial, observe, steps })
}

/// Which manifold a population refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Ground(usize),
    Excited(usize),
}

impl Level {
    fn population(&self, s: &AmplitudeSet) -> Result<f64> {
        match *self {
            Level::Ground(m) => s.ground_population(m),
            Level::Excited(m) => s.excited_population(m),
        }
    }

    fn amplitude_index(&self, s: &AmplitudeSet) -> Result<(usize, bool)> {
        match *self {
            Level::Ground(m) => Ok((s.position(m)?, false)),
            Level::Excited(m) => Ok((s.position(m)?, true)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// First time source and target populations are equal.
    HalfTransfer,
    /// First maximum of the target population.
    FullTransfer,
}

/// Duration of `pulse` (all tones switched together) meeting `objective` for a
/// transfer `source -> target` starting from `initial`. The coarse scan covers
/// `[0, t_max]`.
pub fn calibrate_duration(
    dynamics: &Dynamics,
    pulse: &Pulse,
    initial: &AmplitudeSet,
    source: Level,
    target: Level,
    objective: Objective,
    t_max: f64,
) -> Result<f64> {
    let start = initial.clock;
    // continuous phases so the scan can be resumed from any sample
    let scan = dynamics.anchor(&pulse.clone().with_duration(t_max), start)?;
    let mut states = Vec::with_capacity(COARSE_SAMPLES + 1);
    dynamics.evolve_pulse_sampled(&mut initial.clone(), &scan, COARSE_SAMPLES, |s| states.push(s.clone()))?;
    let score = |s: &AmplitudeSet| -> Result<f64> {
        Ok(match objective {
            Objective::HalfTransfer => target.population(s)? - source.population(s)?,
            Objective::FullTransfer => {
                // dP/dt = 2 Re(conj(a) da/dt)
                let (dg, de) = dynamics.amplitude_rates(s, &scan, s.clock - start)?;
                let (k, excited) = target.amplitude_index(s)?;
                let (a, da) = if excited { (s.a_e[k], de[k]) } else { (s.a_g[k], dg[k]) };
                2.0 * (a.conj() * da).re
            }
        })
    };
    let scores = states.iter().map(&score).collect::<Result<Vec<_>>>()?;
    let trace: Vec<(f64, f64)> = states.iter().zip(&scores).map(|(s, v)| (s.clock - start, *v)).collect();
    // half transfer: score rises through zero; full transfer: dP/dt falls through zero
    let crossing = (1..scores.len()).find(|&i| match objective {
        Objective::HalfTransfer => scores[i - 1] < 0.0 && scores[i] >= 0.0,
        Objective::FullTransfer => scores[i - 1] > 0.0 && scores[i] <= 0.0,
    });
    let Some(i) = crossing else {
        return Err(Error::Calibration { reason: format!("no {objective:?} within {t_max:e} s"), trace });
    };
    let mut lo_state = states[i - 1].clone();
    let mut lo = lo_state.clock - start;
    let mut hi = states[i].clock - start;
    let rising = objective == Objective::HalfTransfer;
    while hi - lo > 0.1 * DURATION_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        let mut s = lo_state.clone();
        dynamics.evolve_pulse(&mut s, &scan.clone().with_duration(mid - lo))?;
        let v = score(&s)?;
        if (v < 0.0) == rising {
            lo = mid;
            lo_state = s;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Nominal transfer time `pi / (Omega |C|)`, for sizing coarse scans.
fn nominal_pi_time(dynamics: &Dynamics, spec: &SchemeSpec, kappa: f64, g: usize, e: usize) -> Result<f64> {
    let c = dynamics.coupling(kappa, g, e)?.norm();
    if c < 1e-6 {
        return Err(Error::Calibration {
            reason: format!("coupling g{g} -> e{e} is negligible ({c:e})"),
            trace: Vec::new(),
        });
    }
    Ok(std::f64::consts::PI / (spec.rabi_omega * c))
}

fn excited_in(wells: &[usize], m: usize, hash: &str) -> Result<AmplitudeSet> {
    let mut s = AmplitudeSet::vacuum(wells, hash);
    let k = s.position(m)?;
    s.a_e[k] = C64::new(1.0, 0.0);
    Ok(s)
}

/// Calibrates all durations of a scheme in isolation (free time zero).
pub fn calibrate_scheme(dynamics: &Dynamics, spec: &SchemeSpec) -> Result<SchemeCalibration> {
    let m = spec.m()?;
    let wells = &dynamics.wells;
    let hash = &dynamics.basis_hash;
    let ground = AmplitudeSet::ground_in(wells, m, hash)?;
    let mw = Pulse::microwave(spec.rabi_omega, 0.0, 0.0);
    let t_mw = std::f64::consts::PI / spec.rabi_omega;
    let microwave_half =
        calibrate_duration(dynamics, &mw, &ground, Level::Ground(m), Level::Excited(m), Objective::HalfTransfer, 2.0 * t_mw)?;
    let microwave_pi =
        calibrate_duration(dynamics, &mw, &ground, Level::Ground(m), Level::Excited(m), Objective::FullTransfer, 2.0 * t_mw)?;

    let kappa = spec.k_probe_ratio;
    // a single transition g(g) -> e(e), or e(e) -> g(g) when starting excited
    let transfer = |g: usize, e: usize, from_excited: bool| -> Result<f64> {
        let tone = spec.raman_tone(Detuning::Resonant { g_well: g, e_well: e }, 0.0, 0.0);
        let pulse = Pulse { kind: PulseKind::Raman, tones: vec![tone] };
        let t_max = 2.5 * nominal_pi_time(dynamics, spec, kappa, g, e)?;
        let (init, src, dst) = if from_excited {
            (excited_in(wells, e, hash)?, Level::Excited(e), Level::Ground(g))
        } else {
            (AmplitudeSet::ground_in(wells, g, hash)?, Level::Ground(g), Level::Excited(e))
        };
        calibrate_duration(dynamics, &pulse, &init, src, dst, Objective::FullTransfer, t_max)
    };
    let pulse_durations = |tr: [(usize, usize); 2], first_from_excited: bool| -> Result<Vec<f64>> {
        let first = transfer(tr[0].0, tr[0].1, first_from_excited)?;
        match spec.mode {
            RamanMode::Single | RamanMode::Mean => Ok(vec![first]),
            RamanMode::Dual => Ok(vec![first, transfer(tr[1].0, tr[1].1, !first_from_excited)?]),
        }
    };
    // out: g(m) -> e(m+1) and e(m) -> g(m-1)
    let raman_out = pulse_durations(spec.out_transitions()?, false)?;
    let raman_back = match spec.scheme {
        // g(m+1) -> e(m) and e(m-1) -> g(m)
        Scheme::Butterfly => pulse_durations(spec.back_transitions()?, false)?,
        Scheme::Symmetric => raman_out.clone(),
    };
    Ok(SchemeCalibration { microwave_half, microwave_pi, raman_out, raman_back })
}

/// Persistent map from scheme keys to calibrations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStore {
    pub schema: String,
    pub entries: BTreeMap<String, SchemeCalibration>,
}

impl CalibrationStore {
    pub fn new() -> Self {
        CalibrationStore { schema: "calibration v1".into(), entries: BTreeMap::new() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("calibration file {}: {e}", path.display())))
    }

    /// Empty store if the file does not exist.
    pub fn load_or_default(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn insert(&mut self, spec: &SchemeSpec, config_hash: &str, cal: SchemeCalibration) {
        self.entries.insert(spec.key(config_hash), cal);
    }

    pub fn get(&self, spec: &SchemeSpec, config_hash: &str) -> Result<&SchemeCalibration> {
        let key = spec.key(config_hash);
        self.entries
            .get(&key)
            .ok_or_else(|| Error::CalibrationMissing(format!("{key}; run `calibrate` first")))
    }
}

/// Interferometer program from a stored calibration.
pub fn calibrated_program(
    store: &CalibrationStore,
    spec: &SchemeSpec,
    config_hash: &str,
    t: f64,
    initial: InitialCondition,
) -> Result<PulseProgram> {
    scheme_program(spec, store.get(spec, config_hash)?, t, initial, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::CouplingTable;
    use std::f64::consts::PI;

    const RATE: f64 = 50_000.0;

    /// Uniform ladder with nearest-neighbour couplings only.
    fn ladder(wells: std::ops::RangeInclusive<usize>, c0: f64, c1: f64, kappa: f64) -> Dynamics {
        let wells: Vec<usize> = wells.collect();
        let n = wells.len();
        let energies = wells.iter().map(|&m| -0.07 * m as f64).collect();
        let mut el = vec![C64::new(0.0, 0.0); n * n];
        for k in 0..n {
            el[k * n + k] = C64::new(c0, 0.0);
            if k + 1 < n {
                el[k * n + k + 1] = C64::new(0.0, c1);
                el[(k + 1) * n + k] = C64::new(0.0, c1);
            }
        }
        Dynamics::from_parts(wells.clone(), energies, vec![CouplingTable::from_elements(wells, el, kappa)], RATE)
    }

    #[test]
    fn microwave_calibration_matches_rabi_times() {
        let d = ladder(1..=5, 0.05, 0.2, 1.3);
        let g = AmplitudeSet::ground_in(&d.wells, 3, "custom").unwrap();
        let mw = Pulse::microwave(100.0, 0.0, 0.0);
        let half = calibrate_duration(&d, &mw, &g, Level::Ground(3), Level::Excited(3), Objective::HalfTransfer, 0.07).unwrap();
        let full = calibrate_duration(&d, &mw, &g, Level::Ground(3), Level::Excited(3), Objective::FullTransfer, 0.07).unwrap();
        assert!((half - PI / 200.0).abs() < DURATION_RESOLUTION);
        assert!((full - PI / 100.0).abs() < DURATION_RESOLUTION);
    }

    #[test]
    fn out_of_range_calibration_reports_trace() {
        let d = ladder(1..=5, 0.05, 0.2, 1.3);
        let g = AmplitudeSet::ground_in(&d.wells, 3, "custom").unwrap();
        let mw = Pulse::microwave(100.0, 0.0, 0.0);
        match calibrate_duration(&d, &mw, &g, Level::Ground(3), Level::Excited(3), Objective::FullTransfer, 0.01) {
            Err(Error::Calibration { trace, .. }) => assert_eq!(trace.len(), COARSE_SAMPLES + 1),
            other => panic!("expected a calibration error, got {other:?}"),
        }
    }

    #[test]
    fn missing_calibration_is_reported() {
        let spec = SchemeSpec { scheme: Scheme::Butterfly, start_well: 12, mode: RamanMode::Dual, rabi_omega: 100.0, k_probe_ratio: 1.3 };
        let store = CalibrationStore::new();
        let r = calibrated_program(&store, &spec, "abc", 0.0, InitialCondition::Ground { well: 12 });
        assert!(matches!(r, Err(Error::CalibrationMissing(_))));
    }

    #[test]
    fn store_round_trips_through_json() {
        let spec = SchemeSpec { scheme: Scheme::Symmetric, start_well: 9, mode: RamanMode::Mean, rabi_omega: 100.0, k_probe_ratio: 1.3 };
        let mut store = CalibrationStore::new();
        let cal = SchemeCalibration { microwave_half: 0.0157, microwave_pi: 0.0314, raman_out: vec![0.1], raman_back: vec![0.1] };
        store.insert(&spec, "h", cal.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.json");
        store.save(&path).unwrap();
        let back = CalibrationStore::load(&path).unwrap();
        assert_eq!(back.get(&spec, "h").unwrap(), &cal);
    }

    #[test]
    fn window_pads_resonant_wells() {
        assert_eq!(SchemeSpec::window(&[8]), (4..=12).collect::<Vec<_>>());
        assert_eq!(SchemeSpec::window(&[2, 3]), (1..=7).collect::<Vec<_>>());
    }

    #[test]
    fn ladder_butterfly_closes_with_high_contrast() {
        // uniform ladder: one tone drives both transitions
        let d = ladder(4..=14, 0.05, 0.25, 1.3);
        let spec = SchemeSpec { scheme: Scheme::Butterfly, start_well: 9, mode: RamanMode::Single, rabi_omega: 2000.0, k_probe_ratio: 1.3 };
        let cal = calibrate_scheme(&d, &spec).unwrap();
        let fringe = 2.0 * 0.14 * RATE;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..8 {
            let t = 0.002 + i as f64 * 2.0 * PI / fringe / 8.0;
            let prog = scheme_program(&spec, &cal, t, InitialCondition::Ground { well: 9 }, 0.0).unwrap();
            let out = prog.run(&d).unwrap();
            assert!(out.norm_error < 1e-9);
            lo = lo.min(out.signal);
            hi = hi.max(out.signal);
        }
        assert!(hi - lo > 0.8, "fringe {lo} .. {hi}");
    }

    #[test]
    fn program_parses_from_toml() {
        let text = r#"
            observe = [3]
            [initial]
            kind = "ground"
            well = 3
            [[step]]
            type = "pulse"
            kind = "microwave"
            [[step.tones]]
            detuning = { offset = 0.0 }
            rabi_omega = 100.0
            phase = 0.0
            k_probe_ratio = 0.0
            duration = 0.0157
            [[step]]
            type = "free"
            duration = 0.001
        "#;
        let p = PulseProgram::from_toml(text).unwrap();
        assert_eq!(p.steps.len(), 2);
        assert!((p.duration() - 0.0167).abs() < 1e-12);
    }
}
