use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lattice_interf::analysis::{analytic_phase, fringe_plot_script, scan_fringes, t_grid, write_scan_csv, SurfaceShiftMode};
use lattice_interf::config::{resolved_json, FileConfig, Setup, SurfaceModelChoice};
use lattice_interf::couplings::{rabi_plot_script, rabi_vs_depth_scan, write_rabi_csv};
use lattice_interf::dynamics::write_trajectory_csv;
use lattice_interf::potentials::SurfaceTreatment;
use lattice_interf::sequence::{calibrate_scheme, calibrated_program, CalibrationStore, PulseProgram, RamanMode, Scheme};
use lattice_interf::ws_solver::solve_states;
use lattice_interf::{Error, Result};

#[derive(Parser)]
#[command(name = "lattice-interf", version, about = "Trapped-atom lattice interferometer near a surface")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand; flags override the config file.
#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Lattice depth (E_r).
    #[arg(long, global = true)]
    depth: Option<f64>,
    /// Rabi frequency (rad/s).
    #[arg(long, global = true)]
    omega: Option<f64>,
    /// Grid points per lattice period.
    #[arg(long, global = true)]
    ppp: Option<usize>,
    /// Grid length in lattice periods.
    #[arg(long, global = true)]
    periods: Option<usize>,
    /// Surface model: default | off | custom.
    #[arg(long, global = true)]
    surface: Option<String>,
    /// Surface treatment: perturbative | hamiltonian.
    #[arg(long, global = true)]
    treatment: Option<String>,
    /// Interferometer: butterfly | symmetric.
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    /// Raman addressing: single | dual | mean.
    #[arg(long, global = true)]
    mode: Option<RamanMode>,
    /// Comma-separated start wells.
    #[arg(long, global = true, value_delimiter = ',')]
    wells: Option<Vec<usize>>,
    /// Calibration store (JSON).
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Wannier-Stark states and dump them as columns.
    Solve {
        /// Number of wells to solve for.
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normalised Rabi frequencies versus lattice depth.
    Couplings {
        /// Shallower lattices do not localise the states; such depths are skipped.
        #[arg(long, default_value_t = 2.5)]
        depth_min: f64,
        #[arg(long, default_value_t = 20.0)]
        depth_max: f64,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a gnuplot script.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Calibrate pulse durations for every start well and store them.
    Calibrate,
    /// Run one interferometer shot, or a pulse program.
    Run {
        /// Free-evolution time (s).
        #[arg(long = "T")]
        t: Option<f64>,
        /// Pulse-program TOML instead of the configured scheme.
        #[arg(long)]
        program: Option<PathBuf>,
        /// Write the sampled trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Scan the free-evolution time and fit the fringe.
    Scan {
        #[arg(long = "T-min")]
        t_min: Option<f64>,
        #[arg(long = "T-max")]
        t_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Calibrate instead of failing when no calibration is stored.
        #[arg(long)]
        auto_calibrate: bool,
    },
    /// Closed-form fringe frequency and well phase.
    Phase {
        #[arg(long)]
        well: usize,
        /// Source of U_m: well-center | state | energies.
        #[arg(long, default_value = "well-center")]
        u_mode: SurfaceShiftMode,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Calibration { trace, .. } = &e {
                for (t, p) in trace.iter().take(20) {
                    eprintln!("  t = {t:.6e} s  value = {p:.6}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(c: &Common) -> Result<FileConfig> {
    let mut f = match &c.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(v) = c.depth {
        f.lattice.depth_er = v;
    }
    if let Some(v) = c.omega {
        f.pulses.omega_rad_s = v;
    }
    if let Some(v) = c.ppp {
        f.grid.points_per_period = v;
    }
    if let Some(v) = c.periods {
        f.grid.n_periods = v;
    }
    if let Some(v) = &c.surface {
        f.surface.model = match v.as_str() {
            "default" => SurfaceModelChoice::Default,
            "off" => SurfaceModelChoice::Off,
            "custom" => SurfaceModelChoice::Custom,
            _ => return Err(Error::Usage(format!("unknown surface model '{v}' (default | off | custom)"))),
        };
    }
    if let Some(v) = &c.treatment {
        f.surface.treatment = match v.as_str() {
            "perturbative" => SurfaceTreatment::Perturbative,
            "hamiltonian" => SurfaceTreatment::Hamiltonian,
            _ => return Err(Error::Usage(format!("unknown surface treatment '{v}' (perturbative | hamiltonian)"))),
        };
    }
    if let Some(v) = c.scheme {
        f.run.scheme = v;
    }
    if let Some(v) = c.mode {
        f.run.mode = v;
    }
    if let Some(v) = &c.wells {
        f.run.start_wells = v.clone();
        f.run.weights.clear();
    }
    if let Some(v) = &c.calibration {
        f.run.calibration_file = v.to_string_lossy().into_owned();
    }
    Ok(f)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn run(cli: Cli) -> Result<()> {
    let file = load_config(&cli.common)?;
    let store_path = PathBuf::from(&file.run.calibration_file);
    match cli.command {
        Command::Solve { count, out } => {
            let cfg = file.lattice_config(count)?;
            let basis = solve_states(&cfg, count)?;
            for s in &basis.states {
                log::info!("well {:>3}  E = {:+.8} E_r  surface shift = {:+.3e} E_r", s.well_index, s.energy, s.surface_shift);
            }
            let mut w = output(&out)?;
            basis.write_columns(&mut w, &resolved_json(&file, &cfg))?;
            w.flush()?;
        }
        Command::Couplings { depth_min, depth_max, steps, out, plot } => {
            if !(depth_min > 0.0 && depth_max >= depth_min) || steps == 0 {
                return Err(Error::Usage("need 0 < depth-min <= depth-max and steps > 0".into()));
            }
            let cfg = file.lattice_config(1)?;
            let depths = t_grid(depth_min, depth_max, steps);
            let rows = rabi_vs_depth_scan(&cfg, &depths, file.pulses.ks_over_kl);
            let mut w = output(&out)?;
            write_rabi_csv(&mut w, &rows, &resolved_json(&file, &cfg))?;
            w.flush()?;
            if let Some(p) = plot {
                let csv = out.as_deref().map(|o| o.display().to_string()).unwrap_or_else(|| "rabi.csv".into());
                std::fs::write(p, rabi_plot_script(&csv))?;
            }
        }
        Command::Calibrate => {
            let setup = Setup::new(&file, &file.run.start_wells)?;
            let mut store = CalibrationStore::load_or_default(&store_path)?;
            for &m in &file.run.start_wells {
                let spec = file.scheme_spec(m);
                let cal = calibrate_scheme(&setup.dynamics, &spec)?;
                log::info!("{}: {}", spec.key(&setup.hash), serde_json::to_string(&cal).unwrap_or_default());
                store.insert(&spec, &setup.hash, cal);
            }
            store.save(&store_path)?;
            println!("calibration written to {}", store_path.display());
        }
        Command::Run { t, program, trajectory, samples } => {
            let setup = Setup::new(&file, &file.run.start_wells)?;
            let prog = match program {
                Some(p) => PulseProgram::load(&p)?,
                None => {
                    let t = t.unwrap_or(file.run.t_s);
                    let store = CalibrationStore::load_or_default(&store_path)?;
                    calibrated_program(&store, &file.scheme_spec(file.run.start_wells[0]), &setup.hash, t, file.initial_condition()?)?
                }
            };
            let outcome = prog.run(&setup.dynamics)?;
            println!("signal = {:.10}  norm_error = {:.3e}", outcome.signal, outcome.norm_error);
            if let Some(path) = trajectory {
                let samples = prog.trajectory(&setup.dynamics, samples)?;
                let mut w = BufWriter::new(File::create(&path)?);
                write_trajectory_csv(&mut w, &samples, &resolved_json(&file, &setup.cfg))?;
                w.flush()?;
            }
        }
        Command::Scan { t_min, t_max, points, out, plot, auto_calibrate } => {
            let setup = Setup::new(&file, &file.run.start_wells)?;
            let m = file.run.start_wells[0];
            let spec = file.scheme_spec(m);
            let mut store = CalibrationStore::load_or_default(&store_path)?;
            if store.get(&spec, &setup.hash).is_err() {
                if !auto_calibrate {
                    return Err(Error::CalibrationMissing(format!(
                        "{} in {}; run `calibrate` or pass --auto-calibrate",
                        spec.key(&setup.hash),
                        store_path.display()
                    )));
                }
                store.insert(&spec, &setup.hash, calibrate_scheme(&setup.dynamics, &spec)?);
                store.save(&store_path)?;
            }
            let d = &setup.dynamics;
            let gap = |a: usize, b: usize| -> Result<f64> {
                match (d.energy(a), d.energy(b)) {
                    (Some(x), Some(y)) => Ok(x - y),
                    _ => Err(Error::Domain(format!("wells {a}, {b} outside the dynamics window"))),
                }
            };
            let expected = 2.0 * gap(m - 1, m + 1)?.abs() * setup.cfg.recoil_rate();
            let t_min = t_min.unwrap_or(file.scan.t_min_s);
            let t_max = t_max.unwrap_or(if file.scan.t_max_s > 0.0 {
                file.scan.t_max_s
            } else {
                t_min + 4.0 * 2.0 * std::f64::consts::PI / expected
            });
            let ts = t_grid(t_min, t_max, points.unwrap_or(file.scan.points));
            let initial = file.initial_condition()?;
            let scan = scan_fringes(d, |t| calibrated_program(&store, &spec, &setup.hash, t, initial.clone()), &ts, expected)?;
            log::info!(
                "contrast {:.4}  omega_fit {:.4} rad/s (expected {:.4})  phase {:.6} rad  norm error {:.2e}",
                scan.contrast,
                scan.fitted_angular_frequency,
                expected,
                scan.fitted_phase_offset,
                scan.norm_error
            );
            let mut w = output(&out)?;
            write_scan_csv(&mut w, &scan, &resolved_json(&file, &setup.cfg))?;
            w.flush()?;
            if let Some(p) = plot {
                let csv = out.as_deref().map(|o| o.display().to_string()).unwrap_or_else(|| "scan.csv".into());
                std::fs::write(p, fringe_plot_script(&csv, &format!("{} {} well {m}", spec.scheme, spec.mode)))?;
            }
        }
        Command::Phase { well, u_mode } => {
            let cfg = file.lattice_config(well + 1)?;
            let basis = match u_mode {
                SurfaceShiftMode::WellCenter => None,
                _ => Some(solve_states(&cfg, well + 1)?),
            };
            let p = analytic_phase(&cfg, basis.as_ref(), well, u_mode)?;
            println!("{}", serde_json::to_string_pretty(&p).unwrap_or_default());
        }
    }
    Ok(())
}
