//! Fixed text formats shared between the harness and the binary.
//!
//! All tables are plain comma-separated files with a single header line;
//! fields never need quoting. Arm indices are 0-based throughout.

use crate::HarnessError;
use rebound_core::eep::Phase;
use rebound_core::regret::RegretReport;
use rebound_core::sysid::Trajectory;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Schema of per-step run logs (`rebound eep`).
pub const RUN_CSV_HEADER: &str = "run_id,t,arm,reward,phase";
/// Schema of trajectory inputs (`rebound estimate`).
pub const TRAJECTORY_CSV_HEADER: &str = "arm,index,value";
/// Schema of regret reports (`rebound regret`).
pub const REGRET_CSV_HEADER: &str = "episode,oracle,learner,gap";

pub fn phase_label(phase: Phase) -> &'static str {
    match phase {
        Phase::Explore => "explore",
        Phase::Remainder => "remainder",
        Phase::Plan => "plan",
    }
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::MalformedRow {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Writes a per-step run log.
pub fn write_run_csv(
    path: &Path,
    run_id: u64,
    actions: &[usize],
    rewards: &[f64],
    phase_of: impl Fn(usize) -> Phase,
) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str(RUN_CSV_HEADER);
    out.push('\n');
    for (i, (&arm, &reward)) in actions.iter().zip(rewards).enumerate() {
        let t = i + 1;
        out.push_str(&format!(
            "{run_id},{t},{arm},{reward},{}\n",
            phase_label(phase_of(t))
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads the action sequence back out of a run log. The file must hold a
/// single run with contiguous steps starting at 1.
pub fn read_run_actions(path: &Path) -> Result<Vec<usize>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != RUN_CSV_HEADER {
        return Err(HarnessError::SchemaMismatch {
            path: path.display().to_string(),
            expected: RUN_CSV_HEADER.into(),
            found: header.into(),
        });
    }
    let mut rows: Vec<(u64, usize, usize)> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(malformed(
                path,
                line_no,
                format!("expected 5 fields, got {}", fields.len()),
            ));
        }
        let run_id: u64 = fields[0]
            .parse()
            .map_err(|_| malformed(path, line_no, "bad run_id"))?;
        let t: usize = fields[1]
            .parse()
            .map_err(|_| malformed(path, line_no, "bad t"))?;
        let arm: usize = fields[2]
            .parse()
            .map_err(|_| malformed(path, line_no, "bad arm"))?;
        rows.push((run_id, t, arm));
    }
    if rows.is_empty() {
        return Err(malformed(path, 2, "no steps recorded"));
    }
    let run_id = rows[0].0;
    if rows.iter().any(|r| r.0 != run_id) {
        return Err(malformed(path, 2, "multiple run ids in one file"));
    }
    rows.sort_by_key(|r| r.1);
    let mut actions = Vec::with_capacity(rows.len());
    for (i, &(_, t, arm)) in rows.iter().enumerate() {
        if t != i + 1 {
            return Err(malformed(
                path,
                i + 2,
                format!("steps not contiguous at t={t}"),
            ));
        }
        actions.push(arm);
    }
    Ok(actions)
}

/// Reads one influence trajectory per arm from `arm,index,value` rows.
/// Indices are 1-based per arm and must be contiguous.
pub fn read_trajectories(path: &Path, spacing: usize) -> Result<Vec<Trajectory>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != TRAJECTORY_CSV_HEADER {
        return Err(HarnessError::SchemaMismatch {
            path: path.display().to_string(),
            expected: TRAJECTORY_CSV_HEADER.into(),
            found: header.into(),
        });
    }
    let mut per_arm: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(malformed(
                path,
                line_no,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let arm: usize = fields[0]
            .parse()
            .map_err(|_| malformed(path, line_no, "bad arm"))?;
        let index: usize = fields[1]
            .parse()
            .map_err(|_| malformed(path, line_no, "bad index"))?;
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| malformed(path, line_no, "bad value"))?;
        per_arm.entry(arm).or_default().push((index, value));
    }
    let mut trajectories = Vec::with_capacity(per_arm.len());
    for (arm, mut rows) in per_arm {
        rows.sort_by_key(|r| r.0);
        for (i, &(index, _)) in rows.iter().enumerate() {
            if index != i + 1 {
                return Err(malformed(
                    path,
                    2,
                    format!("arm {arm}: indices not contiguous at {index}"),
                ));
            }
        }
        let values: Vec<f64> = rows.into_iter().map(|r| r.1).collect();
        trajectories.push(Trajectory::new(arm, spacing, values)?);
    }
    Ok(trajectories)
}

/// Writes one influence trajectory per arm as `arm,index,value` rows.
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for traj in trajectories {
        for (i, value) in traj.values().iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", traj.arm_index, i + 1, value));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes a per-episode regret report.
pub fn write_regret_csv(path: &Path, report: &RegretReport) -> Result<(), HarnessError> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "{REGRET_CSV_HEADER}")?;
    for row in &report.per_episode {
        writeln!(
            file,
            "{},{},{},{}",
            row.episode, row.oracle_value, row.learner_value, row.gap
        )?;
    }
    Ok(())
}
