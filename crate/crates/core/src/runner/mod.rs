//! Configuration-driven experiment runner: computes everything in memory,
//! then writes CSV tables and a manifest in one pass.

pub mod config;
pub mod plot;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{evolve_exp, SplitHamiltonian};
use crate::error::Error;
use crate::geometry::{geodesic_distance, operator_speeds, qsl_time, speed_from_trajectory};
use crate::linalg::{expectation, variance};
use crate::measurement::{large_strength_surrogate, small_time_speed, zeno_prediction};
use crate::spin::{average_speed_vs_time, distance_vs_time, speed_vs_strength, uniform_grid, MeasuredSystem};
use crate::{dynamics, geometry, linalg, measurement, spin};

pub use config::{parse_config, Experiment, RunConfig};
pub use plot::emit_plot_script;

/// Required final fidelity with the Zeno attractor in `zeno-check`.
pub const ZENO_FIDELITY_TOL: f64 = 1e-6;
pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("invalid config field {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("{module}: {source}")]
    Compute { module: &'static str, source: Error },

    #[error("{check} failed: {detail}")]
    CheckFailed { check: &'static str, detail: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("missing result files in {}; expected one of: {}", dir.display(), expected.join(", "))]
    MissingResults { dir: PathBuf, expected: Vec<String> },
}

impl RunError {
    /// 1 validation, 2 compute, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Parse { .. } | RunError::Validation { .. } => 1,
            RunError::Compute { .. } | RunError::CheckFailed { .. } => 2,
            RunError::Io { .. } | RunError::MissingResults { .. } => 3,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }
}

fn compute<T>(module: &'static str, result: crate::error::Result<T>) -> Result<T, RunError> {
    result.map_err(|source| RunError::Compute { module, source })
}

/// Shortest round-trip decimal form.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(format_float).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// In-memory outcome of one experiment.
#[derive(Debug, Default)]
pub struct RunOutput {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, String)>,
    pub results: toml::Table,
}

impl RunOutput {
    fn record(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.results.insert(key.to_string(), value.into());
    }
}

/// Runs the experiment without touching the filesystem.
pub fn compute_experiment(config: &RunConfig) -> Result<RunOutput, RunError> {
    let system = config.measured_system()?;
    let grid = &config.grid;
    let mut out = RunOutput::default();
    match config.experiment {
        Experiment::SweepF => {
            let rows = compute("spin_example", speed_vs_strength(&system, &grid.f_grid, grid.t_eval))?;
            let best = rows.iter().max_by(|a, b| a.v.total_cmp(&b.v)).expect("nonempty grid");
            out.record("peak_strength", best.f);
            out.record("peak_speed", best.v);
            out.files.push((
                "fig1.csv".into(),
                csv("f,t,V", rows.iter().map(|r| vec![r.f, r.t, r.v])),
            ));
        }
        Experiment::SweepTSpeed => {
            let t_grid = grid.resolved_t_grid();
            let rows = compute("spin_example", average_speed_vs_time(&system, &t_grid, &grid.f_values))?;
            out.files.push((
                "fig2.csv".into(),
                csv("T,f,V_bar", rows.iter().map(|r| vec![r.total_time, r.f, r.v_bar])),
            ));
        }
        Experiment::SweepTDistance => {
            let t_grid = grid.resolved_t_grid();
            let rows = compute("spin_example", distance_vs_time(&system, &t_grid, &grid.f_values))?;
            let zeno = compute("measurement_model", zeno_prediction(&system.spec, &system.psi0))?;
            let saturation = compute("qsl_geometry", geodesic_distance(&system.psi0, &zeno.attractor_state))?;
            out.record("zeno_saturation_distance", saturation);
            out.files.push((
                "fig3.csv".into(),
                csv("T,f,S0", rows.iter().map(|r| vec![r.total_time, r.f, r.s0])),
            ));
        }
        Experiment::Simulate => simulate(&system, config, &mut out)?,
        Experiment::ZenoCheck => zeno_check(&system, config, &mut out)?,
        Experiment::SmalltimeCheck => smalltime_check(&system, config, &mut out)?,
    }
    Ok(out)
}

fn hamiltonian(system: &MeasuredSystem) -> Result<SplitHamiltonian, RunError> {
    compute("dynamics", SplitHamiltonian::with_measurement(system.h0.clone(), system.spec.clone()))
}

fn simulate(system: &MeasuredSystem, config: &RunConfig, out: &mut RunOutput) -> Result<(), RunError> {
    let times = uniform_grid(config.grid.t_final, config.grid.samples);
    let h = hamiltonian(system)?;
    let traj = compute("dynamics", evolve_exp(&h, &system.psi0, &times))?;
    let speeds = compute("qsl_geometry", operator_speeds(&h, &traj))?;
    let fd = compute("qsl_geometry", speed_from_trajectory(&traj))?;
    let distances = traj
        .psi
        .iter()
        .map(|psi| geodesic_distance(&system.psi0, psi))
        .collect::<Result<Vec<_>, _>>();
    let distances = compute("qsl_geometry", distances)?;
    let report = compute(
        "qsl_geometry",
        qsl_time(&traj.times, speeds.clone(), traj.first_psi(), traj.last_psi()),
    )?;
    out.record("v_bar", report.v_bar);
    out.record("path_length", report.path_length);
    out.record("geodesic", report.geodesic);
    out.record("t_qsl", report.t_qsl);
    out.record("total_time", report.total_time);
    out.record("bound_residual", report.bound_residual());
    let max_gap = speeds.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.record("max_speed_formula_gap", max_gap);
    let rows = (0..traj.len()).map(|k| vec![times[k], speeds[k], fd[k], distances[k], traj.survival[k]]);
    out.files.push(("trajectory.csv".into(), csv("t,V,V_fd,S0,survival", rows)));
    Ok(())
}

fn zeno_check(system: &MeasuredSystem, config: &RunConfig, out: &mut RunOutput) -> Result<(), RunError> {
    let times = uniform_grid(config.grid.t_final, config.grid.samples);
    let zeno = compute("measurement_model", zeno_prediction(&system.spec, &system.psi0))?;
    let h = hamiltonian(system)?;
    let traj = compute("dynamics", evolve_exp(&h, &system.psi0, &times))?;
    let h1 = compute("dynamics", h.h1_at(0.0))?;
    let mut rows = Vec::with_capacity(traj.len());
    for (k, psi) in traj.psi.iter().enumerate() {
        let fidelity = compute("linalg_core", psi.fidelity(&zeno.attractor_state))?;
        let h1_mean = compute("linalg_core", expectation(&h1, psi))?;
        rows.push(vec![times[k], fidelity, h1_mean]);
    }
    let final_fidelity = rows.last().expect("samples >= 3")[1];
    let surrogate = compute(
        "measurement_model",
        large_strength_surrogate(&system.spec, &system.psi0, config.grid.t_final),
    )?;
    out.record("attractor_index", zeno.index() as i64);
    out.record(
        "attractor_indices",
        zeno.attractor_indices.iter().map(|&i| i as i64).collect::<Vec<_>>(),
    );
    out.record("attractor_tie", zeno.is_tie());
    out.record("excluded_indices", zeno.excluded.iter().map(|&i| i as i64).collect::<Vec<_>>());
    out.record("limit_h1_expectation", zeno.limit_h1_expectation);
    out.record("final_fidelity", final_fidelity);
    out.record("fidelity_threshold", 1.0 - ZENO_FIDELITY_TOL);
    if let Some(f) = surrogate {
        out.record("freezing_strength_estimate", f);
    }
    let passed = final_fidelity >= 1.0 - ZENO_FIDELITY_TOL;
    out.record("passed", passed);
    if !passed {
        return Err(RunError::CheckFailed {
            check: "zeno-check",
            detail: format!(
                "final fidelity {final_fidelity} with attractor {} below {}",
                zeno.index(),
                1.0 - ZENO_FIDELITY_TOL
            ),
        });
    }
    out.files.push(("zeno.csv".into(), csv("t,fidelity,H1_mean", rows)));
    Ok(())
}

fn smalltime_check(system: &MeasuredSystem, config: &RunConfig, out: &mut RunOutput) -> Result<(), RunError> {
    let times = uniform_grid(config.grid.t_small, config.grid.samples);
    let h = hamiltonian(system)?;
    let traj = compute("dynamics", evolve_exp(&h, &system.psi0, &times))?;
    let speeds = compute("qsl_geometry", operator_speeds(&h, &traj))?;
    let hbar = system.spec.hbar();
    let mut rows = Vec::with_capacity(traj.len());
    let mut linear_last = None;
    for (k, psi) in traj.psi.iter().enumerate() {
        let linear = compute(
            "measurement_model",
            small_time_speed(&system.spec, &system.h0, &system.psi0, times[k]),
        )?;
        let free = 2.0 / hbar * compute("linalg_core", variance(&system.h0, psi))?.sqrt();
        rows.push(vec![times[k], speeds[k], linear.speed, free]);
        linear_last = Some(linear);
    }
    let linear = linear_last.expect("samples >= 3");
    out.record("x_coefficient", linear.x_coefficient);
    out.record("speedup_predicted", linear.speedup_predicted);
    out.record("initial_variance", linear.initial_variance);
    out.record("linearization", linear.linearization);
    out.record("within_validity", linear.within_validity);
    out.files.push(("smalltime.csv".into(), csv("t,V,V_linear,V_free", rows)));
    Ok(())
}

/// Every tolerance and step bound that can affect results.
pub fn tolerances() -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("linalg.hermitian_tol", linalg::HERMITIAN_TOL),
        ("linalg.norm_tol", linalg::NORM_TOL),
        ("linalg.imag_tol", linalg::IMAG_TOL),
        ("linalg.variance_clamp", linalg::VARIANCE_CLAMP),
        ("linalg.eigen_tol", linalg::EIGEN_TOL),
        ("dynamics.default_max_step", dynamics::DEFAULT_MAX_STEP),
        ("dynamics.min_steps", dynamics::MIN_STEPS),
        ("dynamics.richardson_tol", dynamics::RICHARDSON_TOL),
        ("dynamics.survival_floor", dynamics::SURVIVAL_FLOOR),
        ("dynamics.step_reuse_tol", dynamics::STEP_REUSE_TOL),
        ("geometry.radicand_tol", geometry::RADICAND_TOL),
        ("geometry.uniform_grid_tol", geometry::UNIFORM_GRID_TOL),
        ("geometry.zero_distance_tol", geometry::ZERO_DISTANCE_TOL),
        ("measurement.penalty_zero_tol", measurement::PENALTY_ZERO_TOL),
        ("measurement.linearization_limit", measurement::LINEARIZATION_LIMIT),
        ("measurement.commutator_tol", measurement::COMMUTATOR_TOL),
        ("measurement.tie_rel_tol", measurement::TIE_REL_TOL),
        ("measurement.zero_overlap_rel", measurement::ZERO_OVERLAP_REL),
        ("measurement.large_strength_suppression", measurement::LARGE_STRENGTH_SUPPRESSION),
        ("spin.structure_tol", spin::STRUCTURE_TOL),
        ("spin.average_max_step", spin::AVERAGE_MAX_STEP),
        ("runner.zeno_fidelity_tol", ZENO_FIDELITY_TOL),
    ])
}

#[derive(Serialize)]
struct ManifestTables<'a> {
    results: &'a toml::Table,
    config: &'a RunConfig,
}

fn render_manifest(
    config: &RunConfig,
    output: &RunOutput,
    files: Vec<&str>,
    compute_seconds: f64,
    wall_time_seconds: f64,
) -> String {
    let mut text = String::from("# qsl run manifest\n");
    let _ = writeln!(text, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "experiment = \"{}\"", config.experiment.name());
    let quoted: Vec<String> = files.iter().map(|f| format!("{f:?}")).collect();
    let _ = writeln!(text, "files = [{}]", quoted.join(", "));
    let _ = writeln!(text, "compute_seconds = {}", format_float(compute_seconds));
    let _ = writeln!(text, "wall_time_seconds = {}", format_float(wall_time_seconds));
    text.push_str("\n[tolerances]\n");
    for (key, value) in tolerances() {
        let _ = writeln!(text, "\"{key}\" = {}", format_float(value));
    }
    text.push('\n');
    let tables = ManifestTables { results: &output.results, config };
    text.push_str(&toml::to_string(&tables).expect("manifest fields are serializable"));
    text
}

/// Files produced by a successful run.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub results: toml::Table,
}

fn probe_writable(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let probe = dir.join(".qsl-write-probe");
    fs::write(&probe, b"").map_err(|e| RunError::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| RunError::io(&probe, e))
}

fn write_all(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>, RunError> {
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, contents) {
            for done in &written {
                let _ = fs::remove_file(done);
            }
            let _ = fs::remove_file(&path);
            return Err(RunError::io(&path, e));
        }
        written.push(path);
    }
    Ok(written)
}

/// Runs the configured experiment and writes its results into `out_dir`
/// (the config's output directory when `None`).
pub fn run(config: &RunConfig, out_dir: Option<&Path>, emit_plot: bool) -> Result<RunSummary, RunError> {
    let start = Instant::now();
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| config.output.dir.clone());
    probe_writable(&dir)?;

    let output = compute_experiment(config)?;
    let compute_seconds = start.elapsed().as_secs_f64();

    let mut files = output.files.clone();
    if emit_plot {
        let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
        if let Some(script) = plot::plot_script_for(&names) {
            files.push((plot::SCRIPT_NAME.into(), script));
        }
    }
    let mut names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    names.push(MANIFEST_NAME);
    let manifest = render_manifest(config, &output, names, compute_seconds, start.elapsed().as_secs_f64());
    files.push((MANIFEST_NAME.into(), manifest));

    let written = write_all(&dir, &files)?;
    Ok(RunSummary { out_dir: dir, files: written, results: output.results })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 2.0, 1e-20, 123456.789, -3.5e300, 2.0f64.sqrt()] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(2.0), "2.0");
    }

    #[test]
    fn exit_codes() {
        let v = RunError::Validation { field: "x".into(), reason: "y".into() };
        assert_eq!(v.exit_code(), 1);
        let c = RunError::Compute { module: "dynamics", source: Error::ZeroDuration };
        assert_eq!(c.exit_code(), 2);
        let io = RunError::io(Path::new("/x"), io::Error::other("boom"));
        assert_eq!(io.exit_code(), 3);
    }

    #[test]
    fn zeno_check_records_attractor() {
        let config = parse_config("experiment = \"zeno-check\"\n").unwrap();
        let out = compute_experiment(&config).unwrap();
        assert_eq!(out.results["attractor_index"].as_integer(), Some(0));
        let fidelity = out.results["final_fidelity"].as_float().unwrap();
        assert!(fidelity >= 1.0 - ZENO_FIDELITY_TOL);
    }

    #[test]
    fn weak_zeno_check_fails() {
        let text = "experiment = \"zeno-check\"\n[measurement]\nstrength = 0.1\n";
        let config = parse_config(text).unwrap();
        let err = compute_experiment(&config).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn manifest_is_toml_with_tolerances() {
        let config = parse_config("experiment = \"sweep-f\"\n[grid]\nf_grid = [0.0, 1.0]\n").unwrap();
        let output = compute_experiment(&config).unwrap();
        let text = render_manifest(&config, &output, vec!["fig1.csv"], 0.0, 0.0);
        let parsed: toml::Table = toml::from_str(&text).unwrap();
        assert_eq!(parsed["experiment"].as_str(), Some("sweep-f"));
        assert!(parsed["tolerances"].as_table().unwrap().len() >= 20);
        assert_eq!(parsed["config"]["grid"]["t_eval"].as_float(), Some(0.1));
    }
}
