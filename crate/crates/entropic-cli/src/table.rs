//! CSV tables: c-function points and the m_g table.

use std::path::Path;

use anyhow::{bail, Context, Result};
use entropic::analysis::scale::n_tau_c_of_beta;
use entropic::neq::CFunctionPoint;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    beta: f64,
    n: usize,
    n_tau: usize,
    n_s: usize,
    l: usize,
    boundary_sites: usize,
    log_ratio: f64,
    value: f64,
    error: f64,
    value_mid: f64,
    error_mid: f64,
}

pub fn write_points(path: &Path, points: &[CFunctionPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for p in points {
        w.serialize(PointRow {
            beta: p.beta,
            n: p.n,
            n_tau: p.n_tau,
            n_s: p.n_s,
            l: p.l,
            boundary_sites: p.boundary_sites,
            log_ratio: p.log_ratio,
            value: p.value,
            error: p.error,
            value_mid: p.value_mid,
            error_mid: p.error_mid,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points(path: &Path) -> Result<Vec<CFunctionPoint>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: PointRow = row.with_context(|| format!("parsing {}", path.display()))?;
        let nt = n_tau_c_of_beta(row.beta);
        out.push(CFunctionPoint {
            beta: row.beta,
            n: row.n,
            n_tau: row.n_tau,
            n_s: row.n_s,
            l: row.l,
            boundary_sites: row.boundary_sites,
            log_ratio: row.log_ratio,
            value: row.value,
            error: row.error,
            value_mid: row.value_mid,
            error_mid: row.error_mid,
            abscissa_backward: row.l as f64,
            abscissa_mid: row.l as f64 + 0.5,
            l_tc: nt.map(|n| row.l as f64 / n as f64),
            l_mg: None,
            l_mg_mid: None,
            normalization: None,
        });
    }
    Ok(out)
}

/// `beta,a_mg` rows.
pub fn read_mg_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    #[derive(Deserialize)]
    struct Row {
        beta: f64,
        a_mg: f64,
    }
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading m_g table {}", path.display()))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        if !(row.a_mg > 0.0) {
            bail!("m_g table: a_mg must be positive at beta = {}", row.beta);
        }
        out.push((row.beta, row.a_mg));
    }
    Ok(out)
}
