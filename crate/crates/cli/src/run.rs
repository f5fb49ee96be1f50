//! Protocol execution.
//!
//! Random streams: relaxation and initial configurations use stream 0 of
//! the master seed, thermal velocities stream 1, evolve dynamics stream 2.
//! Quench trajectory `k` at quench time index `d` uses stream
//! `(d + 1) << 32 | k`, so adding seeds or quench times never changes the
//! trajectories already run.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use icc_core::constants::BOLTZMANN;
use icc_core::diagnostics::{classify_structure, plasma_report, DefectKind, StructureLabel};
use icc_core::dynamics::{dt_max, evolve, kinetic_temperature, run_quench, Integrator, ObserverConfig, QuenchOptions, QuenchSchedule};
use icc_core::equilibrium::{default_initial_state, relax, two_ion_spacing, EquilibriumResult, DEFAULT_FORCE_TOLERANCE};
use icc_core::imaging::{find_spots, pgm_bytes, render, rotating_crystal_samples, CameraModel};
use icc_core::modes::{hessian_with_tolerance, spectrum_for, ModeLabel};
use icc_core::rng::stream_rng;
use icc_core::trap::penning_frequencies;
use icc_core::{IonSpecies, PenningFrame, PenningTrap, SystemState, TrapConfig};

use crate::config::{EvolveParams, ExperimentConfig, ImageParams, InitialShape, Protocol, QuenchParams, ScanParameter, ScanParams};
use crate::error::CliError;
use crate::output::{sha256_hex, OutputDir, RunManifest, Table, TOOLKIT};

/// Environment variable whose value, when set, is the root that relative
/// output directories resolve against.
pub const OUTPUT_ROOT_ENV: &str = "ICC_OUTPUT_ROOT";

type Summary = Map<String, Value>;

pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    let dir = PathBuf::from(&config.output.directory);
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir,
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Runs the protocol into the configured output directory.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest, CliError> {
    run_in(config, &output_dir(config))
}

/// Runs the protocol into `dir`. The manifest is written even when the
/// protocol fails, carrying the error record; the error is then returned.
pub fn run_in(config: &ExperimentConfig, dir: &Path) -> Result<RunManifest, CliError> {
    let started = unix_now();
    let mut out = OutputDir::create(dir)?;
    let canonical = config.serialize();
    out.write("config.ini", canonical.as_bytes())?;
    let (summary, failure) = match execute(config, &mut out) {
        Ok(summary) => (summary, None),
        Err(e) => (Summary::new(), Some(e)),
    };
    let error = failure.as_ref().map(|e| (e.kind().to_string(), e.exit_code(), e.to_string()));
    let manifest = RunManifest {
        toolkit: TOOLKIT.to_string(),
        verb: config.protocol.verb().to_string(),
        config_sha256: sha256_hex(canonical.as_bytes()),
        seed: config.seed,
        started_unix: started,
        finished_unix: unix_now(),
        outputs: out.files().to_vec(),
        summary,
        error,
    };
    manifest.write(dir)?;
    match failure {
        None => Ok(manifest),
        Some(e) => Err(e),
    }
}

fn execute(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Summary, CliError> {
    let table = config.species_table()?;
    let trap = config.trap_config(&table)?;
    let mut summary = Summary::new();
    summary.insert("ions".into(), json!(config.ion_count()));
    match &config.protocol {
        Protocol::Relax => {
            let res = relax_crystal(config, &table, &trap)?;
            describe_equilibrium(&res, &mut summary);
            out.write_table("positions.csv", &positions_table(&res.positions, &res.species_index, &table))?;
        }
        Protocol::Modes => {
            let res = relax_crystal(config, &table, &trap)?;
            describe_equilibrium(&res, &mut summary);
            out.write_table("positions.csv", &positions_table(&res.positions, &res.species_index, &table))?;
            let modes = modes_table(&res, &table, &trap)?;
            summary.insert("modes".into(), json!(modes.rows.len()));
            out.write_table("modes.csv", &modes)?;
        }
        Protocol::Evolve(p) => run_evolve(config, p, &table, &trap, out, &mut summary)?,
        Protocol::Quench(p) => run_quench_sweep(config, p, &table, &trap, out, &mut summary)?,
        Protocol::Scan(p) => run_scan(config, p, &table, &trap, out, &mut summary)?,
        Protocol::Image(p) => run_image(config, p, &table, &trap, out, &mut summary)?,
    }
    Ok(summary)
}

/// Seeded starting configuration for relaxation.
pub fn initial_state(config: &ExperimentConfig, table: &[IonSpecies], trap: &TrapConfig) -> icc_core::Result<SystemState> {
    let mut index = config.species_index();
    let n = index.len();
    let reference = &table[0];
    let wz = trap.stiffness(reference)?.z.sqrt();
    let spacing = two_ion_spacing(reference, wz);
    Ok(match config.relax.initial {
        InitialShape::String => {
            default_initial_state(index, config.relax.initial_size.map_or(spacing, |q| q.si()), config.seed)
        }
        InitialShape::Ball => {
            let radius = config.relax.initial_size.map_or(spacing * (n as f64).cbrt(), |q| q.si());
            let mut rng = stream_rng(config.seed, 0);
            index.shuffle(&mut rng);
            let min_gap = 0.3 * radius / (n as f64).cbrt();
            let mut positions: Vec<Vector3<f64>> = Vec::with_capacity(n);
            while positions.len() < n {
                let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let p = v * radius;
                if v.norm() <= 1.0 && positions.iter().all(|q| (q - p).norm() > min_gap) {
                    positions.push(p);
                }
            }
            SystemState::at_rest(positions).with_species(index)
        }
    })
}

/// The time-independent version of `trap`: the pseudopotential of an RF
/// trap, the rotating frame of a Penning trap.
pub fn static_trap(trap: &TrapConfig) -> TrapConfig {
    match trap {
        TrapConfig::LinearRf { trap: t, .. } => TrapConfig::pseudopotential(t.clone()),
        TrapConfig::Penning { trap: t, .. } => TrapConfig::rotating_frame(t.clone()),
    }
}

/// Equilibrium in the static version of `trap`.
pub fn relax_crystal(config: &ExperimentConfig, table: &[IonSpecies], trap: &TrapConfig) -> icc_core::Result<EquilibriumResult> {
    let trap = static_trap(trap);
    let init = initial_state(config, table, &trap)?;
    let res = relax(&init, table, &trap, &config.minimizer_options())?;
    if !res.converged {
        log::warn!("relaxation stopped at max force {:.3e} N without converging", res.gradient_norm);
    }
    Ok(res)
}

fn describe_equilibrium(res: &EquilibriumResult, summary: &mut Summary) {
    summary.insert("energy_total_J".into(), json!(res.energy.total));
    summary.insert("energy_trap_J".into(), json!(res.energy.trap_energy));
    summary.insert("energy_coulomb_J".into(), json!(res.energy.coulomb_energy));
    summary.insert("max_force_N".into(), json!(res.gradient_norm));
    summary.insert("converged".into(), json!(res.converged));
    summary.insert("structure".into(), json!(classify_structure(&res.positions).as_str()));
}

pub fn positions_table(positions: &[Vector3<f64>], index: &[usize], table: &[IonSpecies]) -> Table {
    let mut t = Table::new(&["ion[1]", "species[-]", "x[m]", "y[m]", "z[m]"]);
    for (i, (p, &s)) in positions.iter().zip(index).enumerate() {
        t.push(vec![i.into(), table[s].name.as_str().into(), p.x.into(), p.y.into(), p.z.into()]);
    }
    t
}

fn label_name(label: ModeLabel) -> &'static str {
    match label {
        ModeLabel::Axial => "axial",
        ModeLabel::Transverse => "transverse",
        ModeLabel::Mixed => "mixed",
    }
}

/// Hessian tolerance that accepts the minimizer's own residual.
fn hessian_tolerance(res: &EquilibriumResult) -> f64 {
    DEFAULT_FORCE_TOLERANCE.max(10.0 * res.gradient_norm)
}

pub fn modes_table(res: &EquilibriumResult, table: &[IonSpecies], trap: &TrapConfig) -> icc_core::Result<Table> {
    let h = hessian_with_tolerance(&res.to_state(), table, &static_trap(trap), hessian_tolerance(res))?;
    let spec = spectrum_for(&h)?;
    let mut t = Table::new(&["mode[1]", "frequency[Hz]", "angular_frequency[rad/s]", "eigenvalue[rad^2/s^2]", "label[-]"]);
    for k in 0..spec.len() {
        let w = spec.frequencies[k];
        t.push(vec![k.into(), (w / (2.0 * PI)).into(), w.into(), spec.eigenvalues[k].into(), label_name(spec.labels[k]).into()]);
    }
    Ok(t)
}

fn run_evolve(
    config: &ExperimentConfig,
    p: &EvolveParams,
    table: &[IonSpecies],
    trap: &TrapConfig,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<(), CliError> {
    let res = relax_crystal(config, table, trap)?;
    let mut state = res.to_state();
    let t0 = p.initial_temperature.si();
    if t0 > 0.0 {
        let mut rng = stream_rng(config.seed, 1);
        for (v, &s) in state.velocities.iter_mut().zip(&state.species_index) {
            let sigma = (BOLTZMANN * t0 / table[s].mass).sqrt();
            *v = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)) * sigma;
        }
    }
    if let TrapConfig::Penning { trap: t, frame: PenningFrame::Lab } = trap {
        // Lab-frame dynamics start from the rigidly rotating crystal.
        let wr = t.rotation_angular_frequency;
        for (v, r) in state.velocities.iter_mut().zip(&state.positions) {
            *v += Vector3::new(wr * r.y, -wr * r.x, 0.0);
        }
    }
    let dt = match p.dt {
        Some(q) => q.si(),
        None => dt_max(trap, table)?,
    };
    let mut integ = Integrator::new(trap.clone(), table, config.cooling_model(), dt)?;
    let observers = ObserverConfig { every: p.every, energies: true, ..Default::default() };
    let mut rng = stream_rng(config.seed, 2);
    let (final_state, records) = evolve(&state, &mut integ, p.duration.si(), &mut rng, &observers)?;

    let mut traj = Table::new(&["time[s]", "temperature[K]", "kinetic_energy[J]", "potential_energy[J]"]);
    for r in &records {
        let pot = r.potential.map_or(f64::NAN, |e| e.total);
        traj.push(vec![r.time.into(), r.temperature.into(), r.kinetic_energy.into(), pot.into()]);
    }
    out.write_table("trajectory.csv", &traj)?;

    let mut fin = Table::new(&["ion[1]", "species[-]", "x[m]", "y[m]", "z[m]", "vx[m/s]", "vy[m/s]", "vz[m/s]"]);
    for i in 0..final_state.len() {
        let (r, v) = (final_state.positions[i], final_state.velocities[i]);
        let name = table[final_state.species_index[i]].name.as_str();
        fin.push(vec![i.into(), name.into(), r.x.into(), r.y.into(), r.z.into(), v.x.into(), v.y.into(), v.z.into()]);
    }
    out.write_table("final_state.csv", &fin)?;

    let temperature = kinetic_temperature(&final_state, table, None)?;
    summary.insert("dt_s".into(), json!(integ.dt));
    summary.insert("records".into(), json!(records.len()));
    summary.insert("final_temperature_K".into(), json!(temperature));
    summary.insert("structure".into(), json!(classify_structure(&final_state.positions).as_str()));
    if let Ok(report) = plasma_report(&final_state, table, temperature) {
        summary.insert("coupling_parameter".into(), json!(report.gamma));
        summary.insert("regime".into(), json!(report.regime.as_str()));
    }
    Ok(())
}

/// Stream id of quench trajectory `k` at quench time index `d`.
pub fn quench_stream(d: usize, k: usize) -> u64 {
    ((d as u64 + 1) << 32) | k as u64
}

fn run_quench_sweep(
    config: &ExperimentConfig,
    p: &QuenchParams,
    table: &[IonSpecies],
    trap: &TrapConfig,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<(), CliError> {
    let TrapConfig::LinearRf { trap: base, .. } = trap else {
        unreachable!("parser only accepts quenches in linear traps")
    };
    let reference = &table[0];
    let cooling = config.cooling_model();
    let options = QuenchOptions {
        dt: p.dt.map_or(0.0, |q| q.si()),
        hold_friction_times: p.hold,
        averaging_fraction: p.averaging_fraction,
    };
    let schedule = |tau: f64| QuenchSchedule {
        control: p.control,
        start_value: p.start.si(),
        end_value: p.end.si(),
        duration: tau,
        shape: p.shape,
    };
    // The chain starts relaxed in the trap at the start of the ramp.
    let first = schedule(1.0).apply(base, reference, p.start.si())?;
    let res = relax_crystal(config, table, &TrapConfig::pseudopotential(first))?;
    let initial = res.to_state();

    let jobs: Vec<(usize, usize)> = (0..p.durations.len()).flat_map(|d| (0..p.seeds).map(move |k| (d, k))).collect();
    let outcomes: Vec<icc_core::Result<(usize, usize, usize)>> = jobs
        .par_iter()
        .map(|&(d, k)| {
            let mut rng = stream_rng(config.seed, quench_stream(d, k));
            let o = run_quench(&initial, table, base, &schedule(p.durations[d].si()), &cooling, &mut rng, &options)?;
            let odd = o.defects.kinds.iter().filter(|&&k| k == DefectKind::Odd).count();
            Ok((o.defects.defect_count, odd, o.defects.defect_count - odd))
        })
        .collect();

    let mut rows = Table::new(&["quench_time[s]", "trajectory[1]", "defects[1]", "odd[1]", "extended[1]"]);
    let mut means = Vec::new();
    for (d, tau) in p.durations.iter().enumerate() {
        let mut counts = Vec::with_capacity(p.seeds);
        for k in 0..p.seeds {
            let (total, odd, extended) = outcomes[d * p.seeds + k].clone()?;
            rows.push(vec![tau.si().into(), k.into(), total.into(), odd.into(), extended.into()]);
            counts.push(total as f64);
        }
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = if n > 1.0 { counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        means.push((tau.si(), mean, (var / n).sqrt()));
    }
    out.write_table("quench.csv", &rows)?;

    let mut agg = Table::new(&["quench_time[s]", "mean_defects[1]", "standard_error[1]"]);
    for &(tau, mean, se) in &means {
        agg.push(vec![tau.into(), mean.into(), se.into()]);
    }
    out.write_table("quench_summary.csv", &agg)?;

    let fit = power_law_fit(&means.iter().map(|m| (m.0, m.1)).collect::<Vec<_>>());
    summary.insert("trajectories".into(), json!(jobs.len()));
    summary.insert(
        "power_law".into(),
        match fit {
            Some((exponent, r2)) => json!({"exponent": exponent, "r_squared": r2}),
            None => Value::Null,
        },
    );
    Ok(())
}

/// Least-squares slope and R² of log y against log x. `None` unless there
/// are two or more points, all positive.
pub fn power_law_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// The configured trap with the scan parameter set to `value` (SI).
pub fn trap_at(trap: &TrapConfig, reference: &IonSpecies, parameter: ScanParameter, value: f64) -> icc_core::Result<TrapConfig> {
    match trap {
        TrapConfig::LinearRf { trap: t, mode } => {
            let wz = t.axial_frequency(reference);
            let new = match parameter {
                ScanParameter::Anisotropy => t.with_anisotropy(reference, value)?,
                ScanParameter::RadialFrequency => t.with_anisotropy(reference, (value / wz).powi(2))?,
                ScanParameter::AxialFrequency => {
                    let mut n = t.clone();
                    n.axial_angular_frequency = value * (t.axial_reference_charge_to_mass / reference.charge_to_mass()).sqrt();
                    n.validate(reference)?;
                    n
                }
                _ => unreachable!("parser rejects Penning-only parameters"),
            };
            Ok(TrapConfig::LinearRf { trap: new, mode: *mode })
        }
        TrapConfig::Penning { trap: t, frame } => {
            let rebuild = |wz: f64, wr: f64| -> icc_core::Result<PenningTrap> {
                let mut n = PenningTrap::from_frequencies(reference, t.z0, t.r0, t.magnetic_field, wz, wr)?;
                n.wall_strength = t.wall_strength;
                Ok(n)
            };
            let wz = penning_frequencies(t, reference)?.axial;
            let wr = t.rotation_angular_frequency;
            let new = match parameter {
                ScanParameter::AxialFrequency => rebuild(value, wr)?,
                ScanParameter::RotationFrequency => rebuild(wz, value)?,
                ScanParameter::NormalizedAxialFrequency => {
                    let wc = reference.charge * t.magnetic_field / reference.mass;
                    rebuild(value * (2.0 * wr * (wc - wr)).sqrt(), wr)?
                }
                _ => unreachable!("parser rejects linear-only parameters"),
            };
            let out = TrapConfig::Penning { trap: new, frame: *frame };
            out.stiffness(reference)?;
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub value: f64,
    pub label: StructureLabel,
    pub energy: f64,
    /// rad/s; negative when the relaxed structure is a saddle. The zero
    /// mode of a freely rotating Penning crystal is skipped.
    pub lowest_frequency: f64,
}

/// Relaxes from scratch at one grid value.
pub fn scan_point(config: &ExperimentConfig, table: &[IonSpecies], trap: &TrapConfig, parameter: ScanParameter, value: f64) -> icc_core::Result<ScanRow> {
    let t = trap_at(trap, &table[0], parameter, value)?;
    let res = relax_crystal(config, table, &t)?;
    let h = hessian_with_tolerance(&res.to_state(), table, &static_trap(&t), hessian_tolerance(&res))?;
    let spec = spectrum_for(&h)?;
    Ok(ScanRow {
        value,
        label: classify_structure(&res.positions),
        energy: res.energy.total,
        lowest_frequency: lowest_nonzero(&spec.frequencies),
    })
}

fn lowest_nonzero(frequencies: &[f64]) -> f64 {
    let top = frequencies.iter().fold(0.0f64, |a, f| a.max(f.abs()));
    frequencies.iter().copied().find(|f| f.abs() > 1e-6 * top).unwrap_or(0.0)
}

/// Scale used to print grid values: Hz for frequencies, 1 otherwise.
fn display_factor(parameter: ScanParameter) -> (f64, &'static str) {
    match parameter.dimension() {
        crate::units::Dimension::Frequency => (1.0 / (2.0 * PI), "Hz"),
        _ => (1.0, "1"),
    }
}

fn run_scan(
    config: &ExperimentConfig,
    p: &ScanParams,
    table: &[IonSpecies],
    trap: &TrapConfig,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<(), CliError> {
    let values = p.values().map_err(|r| crate::error::ConfigError::at(0, "protocol", r))?;
    let rows: Vec<ScanRow> = values
        .par_iter()
        .map(|&v| scan_point(config, table, trap, p.parameter, v))
        .collect::<icc_core::Result<_>>()?;
    let (factor, unit) = display_factor(p.parameter);
    let name = p.parameter.as_str();

    let value_header = format!("{name}[{unit}]");
    let mut t = Table::new(&[&value_header, "structure[-]", "energy[J]", "lowest_mode_frequency[Hz]"]);
    for r in &rows {
        t.push(vec![(r.value * factor).into(), r.label.as_str().into(), r.energy.into(), (r.lowest_frequency / (2.0 * PI)).into()]);
    }
    out.write_table("scan.csv", &t)?;

    let lower = format!("lower[{unit}]");
    let upper = format!("upper[{unit}]");
    let boundary = format!("boundary[{unit}]");
    let mut tr = Table::new(&["from[-]", "to[-]", &lower, &upper, &boundary]);
    let mut boundaries = Vec::new();
    for w in rows.windows(2) {
        if w[0].label == w[1].label {
            continue;
        }
        let (mut lo, mut hi) = (w[0].value, w[1].value);
        for _ in 0..p.refine_steps {
            let mid = 0.5 * (lo + hi);
            if scan_point(config, table, trap, p.parameter, mid)?.label == w[0].label {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let b = 0.5 * (lo + hi);
        boundaries.push(json!({"from": w[0].label.as_str(), "to": w[1].label.as_str(), "value": b * factor}));
        tr.push(vec![
            w[0].label.as_str().into(),
            w[1].label.as_str().into(),
            (w[0].value * factor).into(),
            (w[1].value * factor).into(),
            (b * factor).into(),
        ]);
    }
    out.write_table("transitions.csv", &tr)?;

    let mut sequence: Vec<&str> = Vec::new();
    for r in &rows {
        if sequence.last() != Some(&r.label.as_str()) {
            sequence.push(r.label.as_str());
        }
    }
    summary.insert("points".into(), json!(rows.len()));
    summary.insert("label_sequence".into(), json!(sequence));
    summary.insert("transitions".into(), Value::Array(boundaries));
    Ok(())
}

fn run_image(
    config: &ExperimentConfig,
    p: &ImageParams,
    table: &[IonSpecies],
    trap: &TrapConfig,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<(), CliError> {
    let res = relax_crystal(config, table, trap)?;
    let samples = match trap {
        TrapConfig::Penning { trap: t, frame: PenningFrame::Rotating } if t.rotation_angular_frequency != 0.0 => {
            let wr = t.rotation_angular_frequency;
            let period = 2.0 * PI / wr.abs();
            let times = (0..p.samples).map(|k| k as f64 * period / p.samples as f64);
            rotating_crystal_samples(&res.positions, &res.species_index, wr, times)
        }
        _ => vec![res.to_state()],
    };
    let camera = CameraModel {
        pixel_pitch: p.pixel_pitch.si(),
        width: p.width,
        height: p.height,
        psf_sigma: p.psf_sigma.si(),
        gate: config.gate(table)?,
        view_axis: p.view,
        ..Default::default()
    };
    let image = render(&samples, table, &camera)?;
    out.write("image.pgm", &pgm_bytes(&image, config.output.binary_pgm))?;

    let spots = find_spots(&image, p.spot_threshold);
    let mut t = Table::new(&["spot[1]", "column[px]", "row[px]", "intensity[counts]", "pixels[1]"]);
    for (k, s) in spots.iter().enumerate() {
        t.push(vec![k.into(), s.centroid.0.into(), s.centroid.1.into(), s.total.into(), s.pixels.into()]);
    }
    out.write_table("spots.csv", &t)?;
    out.write_table("positions.csv", &positions_table(&res.positions, &res.species_index, table))?;
    summary.insert("structure".into(), json!(classify_structure(&res.positions).as_str()));
    summary.insert("accepted_samples".into(), json!(image.accepted_samples));
    summary.insert("spots".into(), json!(spots.len()));
    Ok(())
}
