//! Property tests over the public API.

use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;

use lattice_interf::analysis::{contrast, fit_cosine, population_contrast, t_grid, wrap_phase};
use lattice_interf::config::FileConfig;
use lattice_interf::couplings::coupling_table;
use lattice_interf::dynamics::{AmplitudeSet, Detuning, Dynamics, PhaseReference, Pulse, PulseKind, Tone};
use lattice_interf::potentials::{surface_potential, GridSpec, LatticeConfig, SurfacePotentialParams};
use lattice_interf::sequence::{calibrate_duration, Level, Objective};
use lattice_interf::ws_solver::{solve_states, WSBasis};
use lattice_interf::C64;

const RATE: f64 = 50_964.6;
const WINDOW: [usize; 5] = [8, 9, 10, 11, 12];

fn far_basis() -> &'static (LatticeConfig, WSBasis) {
    static BASIS: OnceLock<(LatticeConfig, WSBasis)> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut cfg = LatticeConfig::default().without_surface();
        cfg.grid = GridSpec { z_min_periods: 1e-3, n_periods: 32, points_per_period: 64 };
        let basis = solve_states(&cfg, 16).expect("far basis");
        (cfg, basis)
    })
}

fn two_level() -> Dynamics {
    Dynamics::from_parts(vec![1], vec![0.0], vec![], RATE)
}

fn tone(detuning: Detuning, omega: f64, phase: f64, kappa: f64, duration: f64) -> Tone {
    Tone { detuning, rabi_omega: omega, phase, k_probe_ratio: kappa, duration, reference: PhaseReference::Continuous }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rabi_formula_holds(omega in 10.0..400.0_f64, delta in -500.0..500.0_f64, t in 1e-4..0.1_f64) {
        let d = two_level();
        let mut s = AmplitudeSet::ground_in(&[1], 1, "p").unwrap();
        let p = Pulse { kind: PulseKind::Microwave, tones: vec![tone(Detuning::Offset(delta), omega, 0.0, 0.0, t)] };
        d.evolve_pulse(&mut s, &p).unwrap();
        let w2 = omega * omega + delta * delta;
        let exact = omega * omega / w2 * (0.5 * w2.sqrt() * t).sin().powi(2);
        prop_assert!((s.excited_population(1).unwrap() - exact).abs() < 1e-8);
    }

    #[test]
    fn tone_phase_rotates_the_transferred_amplitude(phi in -PI..PI, t in 1e-3..0.05_f64) {
        let d = two_level();
        let run = |phase: f64| {
            let mut s = AmplitudeSet::ground_in(&[1], 1, "p").unwrap();
            d.evolve_pulse(&mut s, &Pulse::microwave(100.0, phase, t)).unwrap();
            s
        };
        let (a, b) = (run(0.0), run(phi));
        prop_assert!((b.a_e[0] - a.a_e[0] * C64::from_polar(1.0, phi)).norm() < 1e-9);
        prop_assert!((b.a_g[0] - a.a_g[0]).norm() < 1e-9);
    }

    #[test]
    fn contrast_is_bounded(signal in prop::collection::vec(0.0..1.0_f64, 2..50)) {
        let c = contrast(&signal);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!(population_contrast(&signal) <= c + 1e-15);
    }

    #[test]
    fn constant_signal_has_no_contrast(v in 0.0..1.0_f64, n in 2usize..30) {
        prop_assert_eq!(contrast(&vec![v; n]), 0.0);
    }

    #[test]
    fn wrap_phase_is_congruent_and_bounded(x in -1e3..1e3_f64) {
        let w = wrap_phase(x);
        prop_assert!(w > -PI && w <= PI);
        let turns = (x - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn fit_recovers_synthetic_fringes(a in 0.3..0.7_f64, b in 0.05..0.3_f64, w in 1e4..2e4_f64, phi in -3.0..3.0_f64) {
        let t = t_grid(0.0, 4.0 * 2.0 * PI / w, 61);
        let y: Vec<f64> = t.iter().map(|&x| a + b * (w * x + phi).cos()).collect();
        let f = fit_cosine(&t, &y, 0.8 * w, 1.2 * w).unwrap();
        prop_assert!(((f.angular_frequency - w) / w).abs() < 1e-6);
        prop_assert!(wrap_phase(f.phase - phi).abs() < 1e-5);
        prop_assert!((f.amplitude - b).abs() < 1e-6 && (f.offset - a).abs() < 1e-6);
    }

    #[test]
    fn attractive_surface_term_rises_towards_zero(c3 in 1e-3..10.0_f64, x1 in 0.1..30.0_f64, dx in 1e-3..10.0_f64) {
        let p = SurfacePotentialParams { c3_coefficient: c3, retardation_length: 9.0, ..SurfacePotentialParams::off() };
        let (v1, v2) = (surface_potential(x1, &p).unwrap(), surface_potential(x1 + dx, &p).unwrap());
        prop_assert!(v1 < 0.0 && v1 < v2);
    }

    #[test]
    fn gap_injection_only_moves_the_chosen_gap(pos in 0usize..4, gap in 0.001..1.0_f64) {
        let wells: Vec<usize> = (3..8).collect();
        let energies: Vec<f64> = (0..5).map(|k| -0.07 * k as f64).collect();
        let mut d = Dynamics::from_parts(wells.clone(), energies, vec![], RATE);
        let m = wells[pos];
        d.inject_gaps(&[(m, gap)]).unwrap();
        prop_assert_eq!(d.energy(3).unwrap(), 0.0);
        for &w in &wells[..4] {
            let g = d.energy(w).unwrap() - d.energy(w + 1).unwrap();
            let want = if w == m { gap } else { 0.07 };
            prop_assert!((g - want).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn couplings_are_symmetric_conjugate_and_bounded(kappa in -3.0..3.0_f64) {
        let (_, basis) = far_basis();
        let plus = coupling_table(basis, &WINDOW, kappa).unwrap();
        let minus = coupling_table(basis, &WINDOW, -kappa).unwrap();
        for &a in &WINDOW {
            let mut row = 0.0;
            for &b in &WINDOW {
                let c = plus.get(a, b).unwrap();
                prop_assert!((c - plus.get(b, a).unwrap()).norm() < 1e-12);
                prop_assert!((minus.get(a, b).unwrap() - c.conj()).norm() < 1e-12);
                row += c.norm_sqr();
            }
            // Bessel: the window spans only part of the space
            prop_assert!(row <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn far_couplings_are_translation_invariant(kappa in 0.5..2.5_f64, dm in 0usize..3) {
        let (_, basis) = far_basis();
        let t = coupling_table(basis, &WINDOW, kappa).unwrap();
        let first = t.get(8, 8 + dm).unwrap().norm();
        for m in 9..=(12 - dm) {
            prop_assert!((t.get(m, m + dm).unwrap().norm() - first).abs() < 1e-6);
        }
    }

    #[test]
    fn raman_pulses_conserve_norm(
        omega in 20.0..200.0_f64,
        phase in -PI..PI,
        duration in 1e-3..0.05_f64,
        g in 0usize..5,
        e in 0usize..5,
        offset in -2000.0..2000.0_f64,
        re in prop::collection::vec(-1.0..1.0_f64, 5),
    ) {
        let (cfg, basis) = far_basis();
        let d = Dynamics::new(basis, cfg, &WINDOW, &[cfg.k_probe_ratio]).unwrap();
        let weights: Vec<(usize, C64)> = WINDOW.iter().zip(&re).map(|(&m, &r)| (m, C64::new(r, 0.3))).collect();
        let mut s = AmplitudeSet::coherent(&WINDOW, &weights, &d.basis_hash).unwrap();
        let tones = vec![
            tone(Detuning::Resonant { g_well: WINDOW[g], e_well: WINDOW[e] }, omega, phase, cfg.k_probe_ratio, duration),
            tone(Detuning::Offset(offset), 0.5 * omega, -phase, cfg.k_probe_ratio, 0.5 * duration),
        ];
        d.evolve_pulse(&mut s, &Pulse { kind: PulseKind::Raman, tones }).unwrap();
        prop_assert!((s.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn config_round_trips_through_toml(depth in 1.0..20.0_f64, ppp in 16usize..256, well in 2usize..30) {
        let mut f = FileConfig::default();
        f.lattice.depth_er = depth;
        f.grid.points_per_period = ppp;
        f.run.start_wells = vec![well, well + 1];
        f.surface.injected_gaps = vec![(well, 0.5)];
        let text = toml::to_string(&f).unwrap();
        prop_assert_eq!(FileConfig::from_toml(&text).unwrap(), f);
    }
}

#[test]
fn far_states_are_labelled_in_order() {
    let (_, basis) = far_basis();
    for (k, s) in basis.states.iter().enumerate() {
        assert_eq!(s.well_index, k + 1);
    }
    for w in basis.states.windows(2) {
        assert!(w[1].centroid > w[0].centroid);
        assert!(w[1].energy < w[0].energy);
    }
}

#[test]
fn microwave_calibration_is_idempotent_and_two_halves_invert() {
    let d = two_level();
    let g = AmplitudeSet::ground_in(&[1], 1, "p").unwrap();
    let mw = Pulse::microwave(100.0, 0.0, 0.0);
    let cal = |obj, t_max| calibrate_duration(&d, &mw, &g, Level::Ground(1), Level::Excited(1), obj, t_max).unwrap();
    let half = cal(Objective::HalfTransfer, 2.0 * PI / 100.0);
    assert!((cal(Objective::HalfTransfer, 1.5 * half) - half).abs() < 1e-6);
    let pi = cal(Objective::FullTransfer, 2.0 * PI / 100.0);
    assert!((cal(Objective::FullTransfer, 1.5 * pi) - pi).abs() < 1e-6);

    let mut s = g.clone();
    d.evolve_pulse(&mut s, &mw.clone().with_duration(half)).unwrap();
    d.evolve_pulse(&mut s, &mw.with_duration(half)).unwrap();
    assert!(s.ground_population(1).unwrap() < 1e-4);
}
