//! Config ingestion and result emission for the command-line harness.
//!
//! Configs are TOML with one section per subsystem and key names matching
//! the parameter symbols (`m`, `I_z`, `k_f`, `T_s`, `N_p`, ...). Every field
//! is optional; omitted values fall back to the built-in parameter set, so
//! an empty file is a valid config. Flags override file values. Each run
//! writes a `manifest.toml` with the fully resolved configuration, from
//! which the run can be reproduced exactly.
//!
//! Emission is data-only: trajectories and report tables go to CSV with
//! shortest-round-trip float formatting (parsing the file back recovers the
//! doubles bit-exactly); rendering is left to external tools.

use crate::integrate::Trajectory;
use crate::models::{DynState, VehicleParams};
use crate::mpc::MpcConfig;
use crate::scenarios::{
    ComparisonReport, OpenLoopSpec, StopAndGoEvents, StopAndGoRun, StopAndGoSpec, TimingReport,
};
use crate::stability::SweepReport;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Config-stage failures, split so the binary can map them to exit codes.
#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    /// TOML syntax or type error, with the parser's location diagnostics.
    Parse(String),
    /// A structural invariant does not hold; carries the invariant by name.
    Validation(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "io error: {e}"),
            Self::Parse(msg) => write!(f, "config parse error: {msg}"),
            Self::Validation(inv) => write!(f, "config validation error: violated `{inv}`"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<std::io::Error> for ConfigError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehicleSection {
    m: Option<f64>,
    #[serde(rename = "I_z")]
    i_z: Option<f64>,
    l_f: Option<f64>,
    l_r: Option<f64>,
    k_f: Option<f64>,
    k_r: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepSection {
    #[serde(rename = "T_s")]
    t_s: Option<f64>,
    rk4_substep: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MpcSection {
    #[serde(rename = "N_p")]
    n_p: Option<usize>,
    #[serde(rename = "N_c")]
    n_c: Option<usize>,
    #[serde(rename = "Q")]
    q: Option<[f64; 6]>,
    #[serde(rename = "R")]
    r: Option<[f64; 2]>,
    #[serde(rename = "Q_s")]
    q_s: Option<[f64; 6]>,
    #[serde(rename = "D_s")]
    d_s: Option<f64>,
    #[serde(rename = "X_min")]
    x_min: Option<[f64; 6]>,
    #[serde(rename = "X_max")]
    x_max: Option<[f64; 6]>,
    #[serde(rename = "U_min")]
    u_min: Option<[f64; 2]>,
    #[serde(rename = "U_max")]
    u_max: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepSteerSection {
    u0: Option<f64>,
    delta: Option<f64>,
    duration: Option<f64>,
    #[serde(rename = "T_s_list")]
    ts_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeedSweepSection {
    speeds: Option<Vec<f64>>,
    delta: Option<f64>,
    duration: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditionSection {
    u_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StopAndGoSection {
    start: Option<[f64; 2]>,
    target: Option<[f64; 2]>,
    v_ref: Option<f64>,
    obstacle: Option<[f64; 2]>,
    obstacle_moved: Option<[f64; 2]>,
    stop_margin: Option<f64>,
    bypass_clearance: Option<f64>,
    stop_speed: Option<f64>,
    stop_consecutive: Option<usize>,
    arming_speed: Option<f64>,
    target_radius: Option<f64>,
    timeout: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaSection {
    seed: Option<u64>,
    tool: Option<String>,
    version: Option<String>,
}

/// On-disk config shape: every field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    vehicle: VehicleSection,
    #[serde(default)]
    step: StepSection,
    #[serde(default)]
    mpc: MpcSection,
    #[serde(default)]
    step_steer: StepSteerSection,
    #[serde(default)]
    table2: SpeedSweepSection,
    #[serde(default)]
    condition_sweep: ConditionSection,
    #[serde(default)]
    stop_and_go: StopAndGoSection,
    #[serde(default)]
    meta: MetaSection,
}

/// Flag-level overrides applied on top of the file values.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub t_s: Option<f64>,
    pub seed: Option<u64>,
}

/// Fully resolved run configuration; what the manifest records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub vehicle: VehicleParams,
    pub t_s: f64,
    pub rk4_substep: f64,
    pub mpc: MpcConfig,
    pub step_steer: OpenLoopSpec,
    pub table2_speeds: Vec<f64>,
    pub condition_u_max: f64,
    pub stop_and_go: StopAndGoSpec,
    /// Recorded for reproducibility of randomized drivers; the built-in
    /// scenarios are deterministic and ignore it.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        resolve(ConfigFile::default(), Overrides::default()).expect("defaults are valid")
    }
}

fn resolve(file: ConfigFile, overrides: Overrides) -> Result<RunConfig, ConfigError> {
    let base_vehicle = VehicleParams::default();
    let vehicle = VehicleParams {
        m: file.vehicle.m.unwrap_or(base_vehicle.m),
        i_z: file.vehicle.i_z.unwrap_or(base_vehicle.i_z),
        l_f: file.vehicle.l_f.unwrap_or(base_vehicle.l_f),
        l_r: file.vehicle.l_r.unwrap_or(base_vehicle.l_r),
        k_f: file.vehicle.k_f.unwrap_or(base_vehicle.k_f),
        k_r: file.vehicle.k_r.unwrap_or(base_vehicle.k_r),
    };
    vehicle.validate().map_err(|inv| ConfigError::Validation(inv.to_string()))?;

    let t_s = overrides.t_s.or(file.step.t_s).unwrap_or(0.1);
    let rk4_substep = file.step.rk4_substep.unwrap_or(1e-3);
    if !(t_s > 0.0) {
        return Err(ConfigError::Validation("T_s > 0".into()));
    }
    if !(rk4_substep > 0.0 && rk4_substep <= t_s) {
        return Err(ConfigError::Validation("0 < rk4_substep <= T_s".into()));
    }

    let base_mpc = MpcConfig::default();
    let mpc = MpcConfig {
        n_p: file.mpc.n_p.unwrap_or(base_mpc.n_p),
        n_c: file.mpc.n_c.unwrap_or(base_mpc.n_c),
        q: file.mpc.q.unwrap_or(base_mpc.q),
        r: file.mpc.r.unwrap_or(base_mpc.r),
        q_s: file.mpc.q_s.unwrap_or(base_mpc.q_s),
        d_s: file.mpc.d_s.unwrap_or(base_mpc.d_s),
        x_min: file.mpc.x_min.unwrap_or(base_mpc.x_min),
        x_max: file.mpc.x_max.unwrap_or(base_mpc.x_max),
        u_min: file.mpc.u_min.unwrap_or(base_mpc.u_min),
        u_max: file.mpc.u_max.unwrap_or(base_mpc.u_max),
        t_s,
    };
    mpc.validate().map_err(|inv| ConfigError::Validation(inv.to_string()))?;

    let step_steer = OpenLoopSpec {
        params: vehicle,
        u0: file.step_steer.u0.unwrap_or(8.0),
        delta_step: file.step_steer.delta.unwrap_or(0.2674),
        duration: file.step_steer.duration.unwrap_or(4.0),
        ts_list: file.step_steer.ts_list.unwrap_or_else(|| vec![0.01, 0.05, 0.1]),
        rk4_substep,
    };
    if !(step_steer.duration > 0.0) {
        return Err(ConfigError::Validation("duration > 0".into()));
    }
    if step_steer.ts_list.iter().any(|ts| *ts <= 0.0) {
        return Err(ConfigError::Validation("T_s_list > 0".into()));
    }
    if step_steer.delta_step.abs() > std::f64::consts::FRAC_PI_4 {
        eprintln!(
            "warning: |delta| = {} beyond pi/4; the small-angle force law degrades there",
            step_steer.delta_step.abs()
        );
    }

    let defaults = StopAndGoSpec::default();
    let stop_and_go = StopAndGoSpec {
        params: vehicle,
        mpc: mpc.clone(),
        start: file.stop_and_go.start.unwrap_or(defaults.start),
        target: file.stop_and_go.target.unwrap_or(defaults.target),
        v_ref: file.stop_and_go.v_ref.unwrap_or(defaults.v_ref),
        obstacle_initial: file.stop_and_go.obstacle.unwrap_or(defaults.obstacle_initial),
        obstacle_moved: file.stop_and_go.obstacle_moved.unwrap_or(defaults.obstacle_moved),
        stop_margin: file.stop_and_go.stop_margin.unwrap_or(defaults.stop_margin),
        bypass_clearance: file
            .stop_and_go
            .bypass_clearance
            .unwrap_or(defaults.bypass_clearance),
        stop_speed: file.stop_and_go.stop_speed.unwrap_or(defaults.stop_speed),
        stop_consecutive: file
            .stop_and_go
            .stop_consecutive
            .unwrap_or(defaults.stop_consecutive),
        arming_speed: file.stop_and_go.arming_speed.unwrap_or(defaults.arming_speed),
        target_radius: file.stop_and_go.target_radius.unwrap_or(defaults.target_radius),
        timeout: file.stop_and_go.timeout.unwrap_or(defaults.timeout),
    };
    stop_and_go.validate().map_err(|inv| ConfigError::Validation(inv.to_string()))?;

    Ok(RunConfig {
        vehicle,
        t_s,
        rk4_substep,
        mpc,
        step_steer,
        table2_speeds: file
            .table2
            .speeds
            .unwrap_or_else(|| (1..=10).map(|u| u as f64).collect()),
        condition_u_max: file.condition_sweep.u_max.unwrap_or(15.0),
        stop_and_go,
        seed: overrides.seed.or(file.meta.seed).unwrap_or(0),
    })
}

/// Loads and validates a config; `path = None` resolves pure defaults.
pub fn parse_config(path: Option<&Path>, overrides: Overrides) -> Result<RunConfig, ConfigError> {
    let file = match path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str::<ConfigFile>(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None => ConfigFile::default(),
    };
    resolve(file, overrides)
}

fn manifest_toml(cfg: &RunConfig) -> String {
    let m = ConfigFile {
        vehicle: VehicleSection {
            m: Some(cfg.vehicle.m),
            i_z: Some(cfg.vehicle.i_z),
            l_f: Some(cfg.vehicle.l_f),
            l_r: Some(cfg.vehicle.l_r),
            k_f: Some(cfg.vehicle.k_f),
            k_r: Some(cfg.vehicle.k_r),
        },
        step: StepSection { t_s: Some(cfg.t_s), rk4_substep: Some(cfg.rk4_substep) },
        mpc: MpcSection {
            n_p: Some(cfg.mpc.n_p),
            n_c: Some(cfg.mpc.n_c),
            q: Some(cfg.mpc.q),
            r: Some(cfg.mpc.r),
            q_s: Some(cfg.mpc.q_s),
            d_s: Some(cfg.mpc.d_s),
            x_min: Some(cfg.mpc.x_min),
            x_max: Some(cfg.mpc.x_max),
            u_min: Some(cfg.mpc.u_min),
            u_max: Some(cfg.mpc.u_max),
        },
        step_steer: StepSteerSection {
            u0: Some(cfg.step_steer.u0),
            delta: Some(cfg.step_steer.delta_step),
            duration: Some(cfg.step_steer.duration),
            ts_list: Some(cfg.step_steer.ts_list.clone()),
        },
        table2: SpeedSweepSection {
            speeds: Some(cfg.table2_speeds.clone()),
            delta: Some(cfg.step_steer.delta_step),
            duration: Some(cfg.step_steer.duration),
        },
        condition_sweep: ConditionSection { u_max: Some(cfg.condition_u_max) },
        stop_and_go: StopAndGoSection {
            start: Some(cfg.stop_and_go.start),
            target: Some(cfg.stop_and_go.target),
            v_ref: Some(cfg.stop_and_go.v_ref),
            obstacle: Some(cfg.stop_and_go.obstacle_initial),
            obstacle_moved: Some(cfg.stop_and_go.obstacle_moved),
            stop_margin: Some(cfg.stop_and_go.stop_margin),
            bypass_clearance: Some(cfg.stop_and_go.bypass_clearance),
            stop_speed: Some(cfg.stop_and_go.stop_speed),
            stop_consecutive: Some(cfg.stop_and_go.stop_consecutive),
            arming_speed: Some(cfg.stop_and_go.arming_speed),
            target_radius: Some(cfg.stop_and_go.target_radius),
            timeout: Some(cfg.stop_and_go.timeout),
        },
        meta: MetaSection {
            seed: Some(cfg.seed),
            tool: Some("bikesim".into()),
            version: Some(env!("CARGO_PKG_VERSION").into()),
        },
    };
    toml::to_string(&m).expect("manifest serialization cannot fail")
}

/// Writes `manifest.toml` into the output directory; the file is itself a
/// valid `--config` input and reproduces the run.
pub fn write_manifest(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf, ConfigError> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("manifest.toml");
    fs::write(&path, manifest_toml(cfg))?;
    Ok(path)
}

/// Row emission for trajectory CSV: `t,x,y,phi,u,v,omega,a,delta`.
pub trait CsvState {
    fn row(&self) -> [f64; 6];
}

impl CsvState for DynState {
    fn row(&self) -> [f64; 6] {
        self.to_array()
    }
}

impl CsvState for crate::models::KinState {
    fn row(&self) -> [f64; 6] {
        [self.x, self.y, self.phi, self.u, 0.0, 0.0]
    }
}

/// Writes a trajectory as CSV with full double precision (shortest
/// round-trip formatting), one row per sample, newline-terminated.
pub fn emit_trajectory_csv<S: CsvState + Copy>(
    traj: &Trajectory<S>,
    path: &Path,
) -> Result<(), ConfigError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t,x,y,phi,u,v,omega,a,delta")?;
    for sample in &traj.samples {
        let [x, y, phi, u, v, omega] = sample.state.row();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            sample.t, x, y, phi, u, v, omega, sample.input.a, sample.input.delta
        )?;
    }
    Ok(())
}

/// Report bundle: human-readable text plus a machine-readable CSV twin.
pub struct ReportFiles {
    pub text: PathBuf,
    pub csv: PathBuf,
}

fn write_pair(
    out_dir: &Path,
    stem: &str,
    text: &str,
    csv: &str,
) -> Result<ReportFiles, ConfigError> {
    fs::create_dir_all(out_dir)?;
    let text_path = out_dir.join(format!("{stem}.txt"));
    let csv_path = out_dir.join(format!("{stem}.csv"));
    fs::write(&text_path, text)?;
    fs::write(&csv_path, csv)?;
    Ok(ReportFiles { text: text_path, csv: csv_path })
}

/// Emits a condition-sweep report: `(u, norm)` series ready for plotting.
pub fn emit_sweep_report(report: &SweepReport, out_dir: &Path) -> Result<ReportFiles, ConfigError> {
    let mut csv = String::from("u,a_hat_norm\n");
    for (u, norm) in &report.grid {
        csv.push_str(&format!("{u},{norm}\n"));
    }
    let text = format!(
        "Spectral-norm sweep of the lateral Jacobian block (T_s = {} s)\n\
         points: {}\nmax ||A_hat||_2 = {:.12}\ncondition ||A_hat||_2 <= 1: {}\n",
        report.t_s,
        report.grid.len(),
        report.max_norm,
        if report.condition_holds { "HOLDS" } else { "VIOLATED" },
    );
    write_pair(out_dir, "condition_sweep", &text, &csv)
}

/// Emits the open-loop comparison report (step-steer verdicts, speed sweep
/// rows, convergence series — whichever the report carries).
pub fn emit_comparison_report(
    report: &ComparisonReport,
    out_dir: &Path,
) -> Result<ReportFiles, ConfigError> {
    let mut text = String::new();
    let mut csv = String::new();
    if !report.ts_rows.is_empty() {
        text.push_str("Step-steer stability comparison (vs full-trig RK4 reference)\n");
        text.push_str("note: reference is the RK4-integrated continuous model, not vehicle-grade truth\n\n");
        text.push_str(&format!(
            "{:<10} {:<26} {:>10} {:>12} {:>12} {:>10}\n",
            "T_s", "method", "divergent", "max|state|", "RMS (m)", "term v"
        ));
        for run in &report.ts_rows {
            text.push_str(&format!(
                "{:<10} {:<26} {:>10} {:>12.4} {:>12} {:>10.4}\n",
                run.t_s,
                run.method.to_string(),
                run.divergent,
                run.max_abs,
                run.rms_location.map_or("-".into(), |r| format!("{r:.4}")),
                run.terminal_v,
            ));
        }
        csv.push_str("ts,method,divergent,max_abs,rms_location,terminal_v,terminal_omega\n");
        for run in &report.ts_rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                run.t_s,
                run.method,
                run.divergent,
                run.max_abs,
                run.rms_location.map_or(String::from(""), |r| r.to_string()),
                run.terminal_v,
                run.terminal_omega,
            ));
        }
    }
    if !report.speed_rows.is_empty() {
        text.push_str(
            "\nLocation RMS error of 4-second open-loop trajectory under step steer\n\
             (reference: full-trig RK4 of the continuous dynamic model — CarSim-style\n\
             prototype truth is not reproducible at desk scale, so absolute values are\n\
             not comparable to vehicle-grade studies)\n\n",
        );
        text.push_str(&format!(
            "{:>6} {:>18} {:>20} {:>14}\n",
            "u0", "backward dyn (m)", "forward kin (m)", "improvement"
        ));
        for row in &report.speed_rows {
            text.push_str(&format!(
                "{:>6} {:>18.4} {:>20.4} {:>13.1}%\n",
                row.u0,
                row.dynamic_rms,
                row.kinematic_rms,
                100.0 * row.improvement
            ));
        }
        csv.push_str("u0,dynamic_rms,kinematic_rms,improvement\n");
        for row in &report.speed_rows {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                row.u0, row.dynamic_rms, row.kinematic_rms, row.improvement
            ));
        }
    }
    if let Some(conv) = &report.convergence {
        text.push_str("\nTerminal-state convergence vs the decoupled-speed reference\n");
        for (t_s, err) in &conv.errors {
            text.push_str(&format!("  T_s = {t_s:<8} error = {err:.6e}\n"));
        }
        text.push_str(&format!(
            "observed Richardson slopes: {:?} (min {:.3})\n",
            conv.slopes.iter().map(|s| (s * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            conv.min_slope()
        ));
        csv.push_str("convergence_ts,terminal_error\n");
        for (t_s, err) in &conv.errors {
            csv.push_str(&format!("{t_s},{err}\n"));
        }
    }
    write_pair(out_dir, "comparison", &text, &csv)
}

/// Emits the stop-and-go event log alongside the trajectory CSV.
pub fn emit_stop_and_go<S: CsvState + Copy>(
    run: &StopAndGoRun<S>,
    out_dir: &Path,
) -> Result<ReportFiles, ConfigError> {
    fs::create_dir_all(out_dir)?;
    emit_trajectory_csv(&run.trajectory, &out_dir.join("trajectory.csv"))?;

    let mut csv = String::from("t,cost,feasible,worst_margin,iterations,solve_time_s\n");
    for meta in &run.solves {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            meta.t,
            meta.cost,
            meta.feasible,
            meta.worst_margin,
            meta.iterations,
            meta.solve_time.as_secs_f64()
        ));
    }
    let events = run.events;
    let text = format_events(&events, run);
    write_pair(out_dir, "stop_and_go", &text, &csv)
}

fn format_events<S: CsvState + Copy>(events: &StopAndGoEvents, run: &StopAndGoRun<S>) -> String {
    let fmt_ev = |e: Option<f64>| e.map_or("never".into(), |t| format!("{t:.1} s"));
    let infeasible = run.solves.iter().filter(|m| !m.feasible).count();
    format!(
        "Stop-and-go event log\n\
         stop detected:    {}\n\
         obstacle moved:   {}\n\
         arrival:          {}\n\
         samples:          {}\n\
         infeasible solves (least-violation fallback): {}\n",
        fmt_ev(events.stop_time),
        fmt_ev(events.obstacle_move_time),
        fmt_ev(events.arrival_time),
        run.trajectory.len(),
        infeasible,
    )
}

/// Emits the solver timing comparison.
pub fn emit_timing_report(
    report: &TimingReport,
    out_dir: &Path,
) -> Result<ReportFiles, ConfigError> {
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    let text = format!(
        "One-step solve timing over the stop-and-go closed loop\n\
         dynamic predictor:   mean {:.3} ms  median {:.3} ms  p95 {:.3} ms  ({} solves)\n\
         kinematic predictor: mean {:.3} ms  median {:.3} ms  p95 {:.3} ms  ({} solves)\n\
         mean ratio (dynamic/kinematic): {:.3}\n\
         absolute times are hardware- and build-dependent; the ratio is the\n\
         reproducible quantity\n",
        ms(report.dynamic.mean),
        ms(report.dynamic.median),
        ms(report.dynamic.p95),
        report.dynamic.count,
        ms(report.kinematic.mean),
        ms(report.kinematic.median),
        ms(report.kinematic.p95),
        report.kinematic.count,
        report.mean_ratio(),
    );
    let csv = format!(
        "predictor,count,mean_s,median_s,p95_s\ndynamic,{},{},{},{}\nkinematic,{},{},{},{}\n",
        report.dynamic.count,
        report.dynamic.mean.as_secs_f64(),
        report.dynamic.median.as_secs_f64(),
        report.dynamic.p95.as_secs_f64(),
        report.kinematic.count,
        report.kinematic.mean.as_secs_f64(),
        report.kinematic.median.as_secs_f64(),
        report.kinematic.p95.as_secs_f64(),
    );
    write_pair(out_dir, "timing", &text, &csv)
}
