//! Runs several cases independently and checks the expected cross-case trends.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use crate::control::{run, Status, Trajectory};
use crate::model::GeometryParams;
use crate::par::{self, Execution};
use crate::sim::config::ScenarioConfig;
use crate::sim::output::{trajectory_file_name, write_summary_csv, write_trajectory_csv};

/// Largest tolerated task residual, and change of it caused by subtask projection.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Case 9 may be at most this factor worse than the matching single-subtask case.
pub const COMBINED_SLACK: f64 = 1.1;

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub config: ScenarioConfig,
    pub trajectory: Trajectory,
    pub elapsed: Duration,
}

impl CaseResult {
    pub fn case_id(&self) -> Option<u8> {
        self.config.case_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl TrendCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub results: Vec<CaseResult>,
    pub checks: Vec<TrendCheck>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn case(&self, id: u8) -> Option<&CaseResult> {
        self.results.iter().find(|r| r.case_id() == Some(id))
    }

    /// Writes one trajectory per case, the combined `summary.csv` and `trend_checks.csv`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for r in &self.results {
            let path = dir.join(trajectory_file_name(&r.config));
            write_trajectory_csv(BufWriter::new(fs::File::create(path)?), &r.trajectory.rows)?;
        }
        write_summary_csv(
            BufWriter::new(fs::File::create(dir.join("summary.csv"))?),
            self.results.iter().map(|r| (&r.config, &r.trajectory.summary)),
        )?;
        let mut out = BufWriter::new(fs::File::create(dir.join("trend_checks.csv"))?);
        writeln!(out, "check,passed,detail")?;
        for c in &self.checks {
            writeln!(out, "{},{},\"{}\"", c.name, c.passed, c.detail.replace('"', "'"))?;
        }
        out.flush()
    }
}

/// Runs `base` once per case id. Cases share nothing, so they may run in parallel.
pub fn run_cases(base: &ScenarioConfig, ids: &[u8], exec: Execution) -> Vec<CaseResult> {
    let configs: Vec<ScenarioConfig> = ids.iter().map(|&id| base.clone().with_case(id)).collect();
    par::map(&configs, exec, |config| {
        let start = Instant::now();
        let trajectory = run(&config.control_setup());
        CaseResult {
            config: config.clone(),
            trajectory,
            elapsed: start.elapsed(),
        }
    })
}

pub fn run_suite(base: &ScenarioConfig, ids: &[u8], exec: Execution) -> SuiteReport {
    let results = run_cases(base, ids, exec);
    let checks = trend_checks(&results);
    SuiteReport { results, checks }
}

/// Per-case checks for every case present, plus each cross-case trend whose cases all ran.
pub fn trend_checks(results: &[CaseResult]) -> Vec<TrendCheck> {
    let mut checks = Vec::new();
    let get = |id: u8| results.iter().find(|r| r.case_id() == Some(id)).map(|r| &r.trajectory.summary);

    for r in results {
        let s = &r.trajectory.summary;
        let label = r.config.label();
        checks.push(TrendCheck::new(
            &format!("case{label}_converged"),
            s.status == Status::Converged,
            format!(
                "status {} after {} steps, delta_p {:.3e}, delta_mu {:.3e}",
                s.status, s.steps, s.final_delta_p, s.final_delta_mu
            ),
        ));
        checks.push(TrendCheck::new(
            &format!("case{label}_task_residual"),
            s.max_residual < RESIDUAL_TOL && s.max_residual_shift < RESIDUAL_TOL,
            format!(
                "max residual {:.3e}, max shift from subtasks {:.3e}",
                s.max_residual, s.max_residual_shift
            ),
        ));
    }

    let theta_limit = GeometryParams::default().theta_max;
    let theta2dot = |id: u8| get(id).map(|s| s.mean_rates[crate::model::idx::THETA2].abs());

    if let (Some(a), Some(b)) = (theta2dot(1), theta2dot(2)) {
        checks.push(TrendCheck::new(
            "wln_theta2_rate_case2_vs_case1",
            b >= 2.0 * a,
            format!("|mean theta2dot| case2 {b:.4e} vs case1 {a:.4e}"),
        ));
    }
    if let (Some(a), Some(b)) = (get(1), get(2)) {
        let (xa, xb) = (a.mean_rates[0], b.mean_rates[0]);
        checks.push(TrendCheck::new(
            "wln_vehicle_x_rate_case2_below_case1",
            xb < xa,
            format!("mean xdot_a case2 {xb:.4e} vs case1 {xa:.4e}"),
        ));
    }
    if let (Some(a), Some(b)) = (theta2dot(2), theta2dot(3)) {
        checks.push(TrendCheck::new(
            "wln_theta2_rate_case3_below_case2",
            b < a,
            format!("|mean theta2dot| case3 {b:.4e} vs case2 {a:.4e}"),
        ));
    }
    if let (Some(c2), Some(c3), Some(c4)) = (get(2), get(3), get(4)) {
        let ok = c3.max_abs_theta2 < theta_limit
            && c4.max_abs_theta2 < theta_limit
            && c2.max_abs_theta2 > c3.max_abs_theta2;
        checks.push(TrendCheck::new(
            "wln_joint_limit_respected",
            ok,
            format!(
                "max |theta2| case2 {:.6}, case3 {:.6}, case4 {:.6}, limit {:.6}",
                c2.max_abs_theta2, c3.max_abs_theta2, c4.max_abs_theta2, theta_limit
            ),
        ));
    }

    if let (Some(c5), Some(c6), Some(c9)) = (get(5), get(6), get(9)) {
        let ok = c6.mean_g1 >= 0.999 && c9.mean_g1 >= 0.999 && c6.mean_g1 > c5.mean_g1 && c9.mean_g1 > c5.mean_g1;
        checks.push(TrendCheck::new(
            "gpm_upright_improves",
            ok,
            format!(
                "mean g1 case5 {:.6}, case6 {:.6}, case9 {:.6}",
                c5.mean_g1, c6.mean_g1, c9.mean_g1
            ),
        ));
    }
    if let (Some(c5), Some(c7)) = (get(5), get(7)) {
        checks.push(TrendCheck::new(
            "gpm_heading_halved",
            c7.mean_g2 <= 0.5 * c5.mean_g2,
            format!("mean g2 case7 {:.4e} vs case5 {:.4e}", c7.mean_g2, c5.mean_g2),
        ));
    }
    if let (Some(c5), Some(c8)) = (get(5), get(8)) {
        checks.push(TrendCheck::new(
            "gpm_arm_pose_improves",
            c8.mean_g3 < c5.mean_g3,
            format!("mean g3 case8 {:.4e} vs case5 {:.4e}", c8.mean_g3, c5.mean_g3),
        ));
    }
    if let (Some(c6), Some(c7), Some(c8), Some(c9)) = (get(6), get(7), get(8), get(9)) {
        // g1 is maximised, so its shortfall from 1 is what gets compared.
        let deficit = |g: f64| 1.0 - g;
        let ok = deficit(c9.mean_g1) <= COMBINED_SLACK * deficit(c6.mean_g1)
            && c9.mean_g2 <= COMBINED_SLACK * c7.mean_g2
            && c9.mean_g3 <= COMBINED_SLACK * c8.mean_g3;
        checks.push(TrendCheck::new(
            "gpm_combined_no_worse",
            ok,
            format!(
                "1-g1 case9 {:.4e} vs case6 {:.4e}; g2 case9 {:.4e} vs case7 {:.4e}; g3 case9 {:.4e} vs case8 {:.4e}",
                deficit(c9.mean_g1),
                deficit(c6.mean_g1),
                c9.mean_g2,
                c7.mean_g2,
                c9.mean_g3,
                c8.mean_g3
            ),
        ));
    }
    checks
}
