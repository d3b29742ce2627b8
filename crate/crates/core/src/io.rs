//! CSV snapshot formats.
//!
//! Mesoscopic snapshots: `time,cell_index,x_left,x_right,c,rho,u_left,theta,p,sigma`,
//! one file per snapshot named `meso_t{time:.6}.csv`.
//! Macroscopic snapshots:
//! `time,cell_index,x_left,x_right,alpha_plus,rho_plus,rho_minus,u_left,theta,p_eff,sigma,mu_eff,kappa_eff,cv_eff`,
//! named `macro_t{time:.6}.csv`.
//! Positions are unwrapped: `x_right` of the last cell is `x_left` of the first plus one.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, Result};
use crate::grid::PeriodicMassGrid;
use crate::macroscopic::{MacroSnapshot, MacroTrajectory};
use crate::material::MaterialTable;
use crate::meso::{derived, MesoLagState, MesoSnapshot, MesoTrajectory};

pub const MESO_HEADER: &str = "time,cell_index,x_left,x_right,c,rho,u_left,theta,p,sigma";
pub const MACRO_HEADER: &str =
    "time,cell_index,x_left,x_right,alpha_plus,rho_plus,rho_minus,u_left,theta,p_eff,sigma,mu_eff,kappa_eff,cv_eff";
pub const MOMENT_HEADER: &str = "time,x,beta_name,candidate,empirical,abs_error";

pub fn meso_file_name(time: f64) -> String {
    format!("meso_t{time:.6}.csv")
}

pub fn macro_file_name(time: f64) -> String {
    format!("macro_t{time:.6}.csv")
}

pub fn meso_snapshot_csv(grid: &PeriodicMassGrid, snap: &MesoSnapshot) -> String {
    let s = &snap.state;
    let nodes = s.geometry(grid).nodes();
    let mut out = String::with_capacity(64 * (s.n_cells() + 1));
    out.push_str(MESO_HEADER);
    out.push('\n');
    for i in 0..s.n_cells() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.time,
            i,
            nodes[i],
            nodes[i + 1],
            s.c[i],
            1.0 / s.v[i],
            s.u[i],
            s.theta[i],
            snap.derived.p[i],
            snap.derived.sigma[i]
        );
    }
    out
}

/// CSV of a bare state, used for failure dumps.
pub fn meso_state_csv(grid: &PeriodicMassGrid, state: &MesoLagState, table: &MaterialTable) -> String {
    meso_snapshot_csv(
        grid,
        &MesoSnapshot {
            derived: derived(grid, state, table),
            state: state.clone(),
        },
    )
}

pub fn macro_snapshot_csv(grid: &PeriodicMassGrid, snap: &MacroSnapshot) -> String {
    let s = &snap.state;
    let nodes = s.geometry(grid).nodes();
    let d = &snap.derived;
    let mut out = String::with_capacity(128 * (s.n_cells() + 1));
    out.push_str(MACRO_HEADER);
    out.push('\n');
    for i in 0..s.n_cells() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.time,
            i,
            nodes[i],
            nodes[i + 1],
            s.alpha_plus[i],
            d.rho_plus[i],
            d.rho_minus[i],
            s.u[i],
            s.theta[i],
            d.p_eff[i],
            d.sigma[i],
            d.mu_eff[i],
            d.kappa_eff[i],
            d.cv_eff[i]
        );
    }
    out
}

pub fn write_meso_trajectory(dir: &Path, traj: &MesoTrajectory) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    traj.snapshots
        .iter()
        .map(|snap| {
            let path = dir.join(meso_file_name(snap.time()));
            fs::write(&path, meso_snapshot_csv(&traj.grid, snap))?;
            Ok(path)
        })
        .collect()
}

pub fn write_macro_trajectory(dir: &Path, traj: &MacroTrajectory) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    traj.snapshots
        .iter()
        .map(|snap| {
            let path = dir.join(macro_file_name(snap.state.time));
            fs::write(&path, macro_snapshot_csv(&traj.grid, snap))?;
            Ok(path)
        })
        .collect()
}

/// Reads a directory of mesoscopic snapshot CSVs back into a trajectory.
///
/// Cell masses are reconstructed as `rho * (x_right - x_left)` from the first
/// snapshot; the Galilean shift is not stored in the files and is reported as 0.
pub fn read_meso_trajectory(dir: &Path, table: &MaterialTable) -> Result<MesoTrajectory> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("meso_t") && n.ends_with(".csv"))
        })
        .collect();
    if files.is_empty() {
        return Err(invalid(format!("no meso_t*.csv files in {}", dir.display())));
    }
    let mut raw = Vec::with_capacity(files.len());
    for path in files.drain(..) {
        raw.push(parse_meso_csv(&fs::read_to_string(&path)?).map_err(|e| match e {
            Error::InvalidInput(msg) => invalid(format!("{}: {msg}", path.display())),
            other => other,
        })?);
    }
    raw.sort_by(|a, b| a.time.total_cmp(&b.time));

    let first = &raw[0];
    let masses: Vec<f64> = first.rows.iter().map(|r| r.rho * (r.x_right - r.x_left)).collect();
    let grid = PeriodicMassGrid::new(masses)?;
    let mut snapshots = Vec::with_capacity(raw.len());
    for r in &raw {
        if r.rows.len() != grid.n_cells() {
            return Err(Error::FrameMismatch(format!("snapshot at t = {} has {} cells", r.time, r.rows.len())));
        }
        let state = MesoLagState {
            c: r.rows.iter().map(|x| x.c).collect(),
            v: r.rows.iter().map(|x| 1.0 / x.rho).collect(),
            theta: r.rows.iter().map(|x| x.theta).collect(),
            u: r.rows.iter().map(|x| x.u_left).collect(),
            time: r.time,
            x0: r.rows[0].x_left,
            galilean_shift: 0.0,
        };
        snapshots.push(MesoSnapshot {
            derived: derived(&grid, &state, table),
            state,
        });
    }
    let dt_history = snapshots.windows(2).map(|w| w[1].time() - w[0].time()).collect();
    Ok(MesoTrajectory {
        grid,
        table: *table,
        snapshots,
        dt_history,
        galilean_shift: 0.0,
    })
}

struct MesoRow {
    x_left: f64,
    x_right: f64,
    c: f64,
    rho: f64,
    u_left: f64,
    theta: f64,
}

struct MesoCsv {
    time: f64,
    rows: Vec<MesoRow>,
}

fn parse_meso_csv(text: &str) -> Result<MesoCsv> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| invalid("empty file"))?;
    if header.trim() != MESO_HEADER {
        return Err(invalid(format!("unexpected header {header:?}")));
    }
    let mut time = None;
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| invalid(format!("line {}: {e}", k + 2)))?;
        if vals.len() != 10 {
            return Err(invalid(format!("line {}: expected 10 columns, got {}", k + 2, vals.len())));
        }
        if vals[1] as usize != rows.len() {
            return Err(invalid(format!("line {}: cell index out of order", k + 2)));
        }
        time.get_or_insert(vals[0]);
        rows.push(MesoRow {
            x_left: vals[2],
            x_right: vals[3],
            c: vals[4],
            rho: vals[5],
            u_left: vals[6],
            theta: vals[7],
        });
    }
    Ok(MesoCsv {
        time: time.ok_or_else(|| invalid("no data rows"))?,
        rows,
    })
}
