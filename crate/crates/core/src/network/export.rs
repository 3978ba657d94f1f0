//! CSV output of adaptive runs.

use std::io::Write;
use std::path::Path;

use super::adaptive::WindowReport;
use super::solver::NetworkState;
use super::topology::NetworkTopology;
use crate::error::{Error, Result};
use crate::error_model::RefinementKind;
use crate::hierarchy::pressure_from_density;
use crate::numfmt::sig;

const DIGITS: usize = 10;

pub const WINDOW_HEADER: [&str; 22] = [
    "window",
    "t_start",
    "t_end",
    "pipe",
    "model",
    "n_x",
    "n_t",
    "e_m_pre",
    "e_x_pre",
    "e_t_pre",
    "e_m",
    "e_x",
    "e_t",
    "r_m",
    "r_x",
    "r_t",
    "coarsened",
    "resimulations",
    "window_cost",
    "relative_error_pre",
    "relative_error",
    "functional",
];

/// One row per window and pipe.
pub fn write_window_reports<W: Write>(
    topo: &NetworkTopology,
    reports: &[WindowReport],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WINDOW_HEADER)?;
    for r in reports {
        let totals = r.total_refinements();
        for (i, pipe) in topo.pipes.iter().enumerate() {
            let s = &r.settings[i];
            let (pre, post) = (&r.pre_errors[i], &r.post_errors[i]);
            let coarsened = r.coarsening[i].map_or("", kind_label);
            w.write_record([
                r.index.to_string(),
                sig(r.t_start, DIGITS),
                sig(r.t_end, DIGITS),
                pipe.id.clone(),
                s.level.index().to_string(),
                s.n_x.to_string(),
                s.n_t.to_string(),
                sig(pre.model, DIGITS),
                sig(pre.space, DIGITS),
                sig(pre.time, DIGITS),
                sig(post.model, DIGITS),
                sig(post.space, DIGITS),
                sig(post.time, DIGITS),
                totals[i][0].to_string(),
                totals[i][1].to_string(),
                totals[i][2].to_string(),
                coarsened.to_string(),
                r.resimulations.to_string(),
                sig(r.cost, DIGITS),
                sig(r.pre_relative_error, DIGITS),
                sig(r.relative_error, DIGITS),
                sig(r.functional, DIGITS),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn kind_label(k: RefinementKind) -> &'static str {
    match k {
        RefinementKind::Model => "model",
        RefinementKind::Space => "space",
        RefinementKind::Time => "time",
    }
}

/// Writes `<dir>/<pipe id>.csv` with columns `x, rho, q, p` for every pipe.
pub fn write_fields(topo: &NetworkTopology, state: &NetworkState, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (pipe, field) in topo.pipes.iter().zip(&state.fields) {
        let path = dir.join(format!("{}.csv", pipe.id));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        w.write_record(["x", "rho", "q", "p"])?;
        for i in 0..field.len() {
            let p = pressure_from_density(field.rho[i], &pipe.config)?;
            w.write_record([
                sig(field.x[i], DIGITS),
                sig(field.rho[i], DIGITS),
                sig(field.q[i], DIGITS),
                sig(p, DIGITS),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn export_window_reports(
    topo: &NetworkTopology,
    reports: &[WindowReport],
    path: &Path,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_window_reports(topo, reports, std::io::BufWriter::new(file))
}
