//! CSV artifacts. Numbers use Rust's shortest round-trip formatting, so equal
//! runs produce byte-identical files.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::control::{run_observed, RunSummary, Trajectory, TrajectoryRow};
use crate::geometry::EulerZyx;
use crate::model::idx;
use crate::sim::config::ScenarioConfig;
use crate::sim::stream::CommandStream;

pub const TRAJECTORY_HEADER: &str = "time,x_a,y_a,z_a,alpha,beta,gamma,theta1,phi1,theta2,phi2,\
xdot_a,ydot_a,zdot_a,alphadot,betadot,gammadot,theta1dot,phi1dot,theta2dot,phi2dot,\
p_x,p_y,p_z,ee_yaw,ee_pitch,ee_roll,delta_p,delta_mu,g1,g2,g3,eta,w7,w9";

pub const SUMMARY_HEADER: &str = "case,weighting,k1,k2,k3,vehicle_mode,status,steps,\
final_delta_p,final_delta_mu,\
mean_xdot_a,mean_ydot_a,mean_zdot_a,mean_alphadot,mean_theta1dot,mean_theta2dot,\
mean_g1,mean_g2,mean_g3,max_abs_theta1,max_abs_theta2,max_residual";

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn push_all(line: &mut Vec<String>, values: impl IntoIterator<Item = f64>) {
    line.extend(values.into_iter().map(fmt_f64));
}

pub fn trajectory_line(row: &TrajectoryRow) -> String {
    let ypr = EulerZyx::from_rotation(&row.pose.r);
    let mut line = Vec::with_capacity(35);
    push_all(&mut line, [row.time]);
    push_all(&mut line, row.state);
    push_all(&mut line, row.rates);
    push_all(&mut line, [row.pose.p.x, row.pose.p.y, row.pose.p.z]);
    push_all(&mut line, [ypr.alpha, ypr.beta, ypr.gamma]);
    push_all(
        &mut line,
        [
            row.delta_p,
            row.delta_mu,
            row.g1,
            row.g2,
            row.g3,
            row.eta,
            row.w7,
            row.w9,
        ],
    );
    line.join(",")
}

pub fn write_trajectory_csv(mut out: impl Write, rows: &[TrajectoryRow]) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", trajectory_line(row))?;
    }
    out.flush()
}

pub fn summary_line(config: &ScenarioConfig, s: &RunSummary) -> String {
    let case = config.case_spec().expect("validated scenario has a case");
    let mode = match config.vehicle_mode {
        crate::jacobian::VehicleMode::Full6 => "full6",
        crate::jacobian::VehicleMode::Reduced4 => "reduced4",
    };
    let mut line = vec![
        config.label(),
        case.weighting.label().to_string(),
        fmt_f64(case.k1),
        fmt_f64(case.k2),
        fmt_f64(case.k3),
        mode.to_string(),
        s.status.to_string(),
        s.steps.to_string(),
    ];
    push_all(&mut line, [s.final_delta_p, s.final_delta_mu]);
    push_all(
        &mut line,
        [
            s.mean_rates[idx::X],
            s.mean_rates[idx::Y],
            s.mean_rates[idx::Z],
            s.mean_rates[idx::YAW],
            s.mean_rates[idx::THETA1],
            s.mean_rates[idx::THETA2],
        ],
    );
    push_all(
        &mut line,
        [
            s.mean_g1,
            s.mean_g2,
            s.mean_g3,
            s.max_abs_theta1,
            s.max_abs_theta2,
            s.max_residual,
        ],
    );
    line.join(",")
}

pub fn write_summary_csv<'a>(
    mut out: impl Write,
    rows: impl IntoIterator<Item = (&'a ScenarioConfig, &'a RunSummary)>,
) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for (config, summary) in rows {
        writeln!(out, "{}", summary_line(config, summary))?;
    }
    out.flush()
}

/// Files written by [`run_case`].
#[derive(Debug, Clone, PartialEq)]
pub struct CaseArtifacts {
    pub trajectory_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub trajectory: Trajectory,
}

pub fn trajectory_file_name(config: &ScenarioConfig) -> String {
    format!("trajectory_case{}.csv", config.label())
}

/// Runs one validated scenario, writing `trajectory_case<N>.csv` and `summary.csv`
/// into `dir`. Commands go to `stream` when given.
pub fn run_case(
    config: &ScenarioConfig,
    dir: &Path,
    stream: Option<&mut CommandStream>,
) -> io::Result<CaseArtifacts> {
    let setup = config.control_setup();
    let trajectory = match stream {
        Some(s) => run_observed(&setup, |c| s.emit(c)),
        None => run_observed(&setup, |_| {}),
    };
    fs::create_dir_all(dir)?;
    let trajectory_csv = dir.join(trajectory_file_name(config));
    write_trajectory_csv(io::BufWriter::new(fs::File::create(&trajectory_csv)?), &trajectory.rows)?;
    let summary_csv = dir.join("summary.csv");
    write_summary_csv(
        io::BufWriter::new(fs::File::create(&summary_csv)?),
        [(config, &trajectory.summary)],
    )?;
    Ok(CaseArtifacts {
        trajectory_csv,
        summary_csv,
        trajectory,
    })
}
