//! Non-equilibrium (Jarzynski) estimation of partition-function ratios and
//! the c-function points built from them.
//!
//! A protocol graph at slab length `l + 1` carries paired switch bonds. At
//! lambda = 0 it weighs configurations like the `l + 1` slab, at lambda = 1
//! like the `l` slab. Forward trajectories therefore estimate
//! ln Z(l) / Z(l + 1) and reverse ones its negative.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{switch_pairs, BondGraph};
use crate::model::{action, couplings_at, Direction, ProtocolSchedule, Seams, SpinConfig};
use crate::oracle::NeumaierSum;
use crate::sampler::{sw_sweep, RngStream};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Master seed of the bootstrap stream; fixed so estimates are reproducible.
pub const BOOTSTRAP_SEED: u64 = 0x5eed_b007;
pub const MIN_EQUILIBRATION: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkRecord {
    pub seed: u64,
    pub stream: u64,
    pub direction: Direction,
    #[serde(rename = "W")]
    pub w: f64,
    pub n_steps: usize,
    pub beta: f64,
    pub geometry_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increments: Option<Vec<f64>>,
    #[serde(default)]
    pub final_config_hash: String,
}

/// Stream index of trajectory `index` in direction `direction`. Part of the
/// on-disk contract: `(index << 1) | bit` with bit 0 forward, 1 reverse.
pub fn trajectory_stream(index: u64, direction: Direction) -> u64 {
    (index << 1) | matches!(direction, Direction::Reverse) as u64
}

fn config_hash(c: &SpinConfig) -> String {
    let bytes: Vec<u8> = c.values.iter().map(|&s| (s > 0) as u8).collect();
    let d = Sha256::digest(&bytes);
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs one trajectory. `keep_increments` stores the per-step work.
pub fn run_trajectory(
    graph: &BondGraph,
    beta: f64,
    schedule: &ProtocolSchedule,
    master_seed: u64,
    index: u64,
    keep_increments: bool,
) -> Result<WorkRecord> {
    let pairs = switch_pairs(graph);
    let stream = trajectory_stream(index, schedule.direction);
    let mut rng = RngStream::new(master_seed, stream);
    let mut c = couplings_at(graph, beta, schedule.lambdas[0], &Seams::new())?;
    let mut cfg = SpinConfig::random(graph.n_sites(), &mut rng);
    for _ in 0..schedule.equilibration_sweeps {
        sw_sweep(&mut cfg, &c, &mut rng)?;
    }
    let mut work = NeumaierSum::default();
    let mut incs = Vec::new();
    let n_steps = schedule.n_steps();
    for k in 0..n_steps {
        let (l0, l1) = (schedule.lambdas[k], schedule.lambdas[k + 1]);
        let dj = beta * (l1 - l0);
        let s = &cfg.values;
        let mut dw = 0.0;
        for &(off, on) in &pairs {
            let (a, b) = c.ends[on];
            let so = (c.sign[on] * s[a] * s[b]) as f64;
            let (a, b) = c.ends[off];
            let sf = (c.sign[off] * s[a] * s[b]) as f64;
            dw -= dj * (so - sf);
        }
        work.add(dw);
        if keep_increments {
            incs.push(dw);
        }
        for &(off, on) in &pairs {
            c.strength[off] = beta * (1.0 - l1);
            c.strength[on] = beta * l1;
        }
        if k + 1 < n_steps {
            for _ in 0..schedule.sweeps_per_step {
                sw_sweep(&mut cfg, &c, &mut rng)?;
            }
        }
    }
    Ok(WorkRecord {
        seed: master_seed,
        stream,
        direction: schedule.direction,
        w: work.value(),
        n_steps,
        beta,
        geometry_hash: graph.geometry_hash(),
        increments: keep_increments.then_some(incs),
        final_config_hash: config_hash(&cfg),
    })
}

/// Trajectories `indices` run on the rayon pool; returned in index order.
pub fn run_ensemble(
    graph: &BondGraph,
    beta: f64,
    schedule: &ProtocolSchedule,
    master_seed: u64,
    indices: std::ops::Range<u64>,
) -> Result<Vec<WorkRecord>> {
    indices.into_par_iter().map(|i| run_trajectory(graph, beta, schedule, master_seed, i, false)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub n_trajectories: usize,
    pub direction: Direction,
    pub n_steps: usize,
    pub beta: f64,
    pub geometry_hash: String,
    pub mean_exp_minus_w: f64,
    /// ln(Z_1 / Z_0) for the protocol's own endpoints.
    pub log_ratio: f64,
    pub error: f64,
    pub mean_work: f64,
    pub mean_work_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse_log_ratio: Option<f64>,
}

fn log_mean_exp_neg(ws: impl Iterator<Item = f64> + Clone) -> f64 {
    let w_min = ws.clone().fold(f64::INFINITY, f64::min);
    let mut acc = NeumaierSum::default();
    let mut n = 0usize;
    for w in ws {
        acc.add((w_min - w).exp());
        n += 1;
    }
    -w_min + (acc.value() / n as f64).ln()
}

pub fn estimate_ratio(records: &[WorkRecord]) -> Result<RatioEstimate> {
    estimate_ratio_with(records, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED)
}

pub fn estimate_ratio_with(records: &[WorkRecord], resamples: usize, seed: u64) -> Result<RatioEstimate> {
    let Some(first) = records.first() else {
        return Err(Error::InvalidArgument("no work records".into()));
    };
    if records.len() < 2 {
        return Err(Error::InvalidArgument("need at least two work records".into()));
    }
    let same = |r: &WorkRecord| {
        r.direction == first.direction
            && r.n_steps == first.n_steps
            && r.beta == first.beta
            && r.geometry_hash == first.geometry_hash
    };
    if let Some(r) = records.iter().find(|r| !same(r)) {
        return Err(Error::InvalidArgument(format!(
            "mixed protocols: ({:?}, {} steps, beta {}, {}) vs ({:?}, {} steps, beta {}, {})",
            first.direction, first.n_steps, first.beta, first.geometry_hash, r.direction, r.n_steps, r.beta, r.geometry_hash
        )));
    }
    let ws: Vec<f64> = records.iter().map(|r| r.w).collect();
    let n = ws.len();
    let log_ratio = log_mean_exp_neg(ws.iter().copied());
    let mut rng = RngStream::new(seed, 0);
    let mut boots = Vec::with_capacity(resamples);
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..n);
        }
        boots.push(log_mean_exp_neg(idx.iter().map(|&i| ws[i])));
    }
    let mean_b = boots.iter().sum::<f64>() / resamples as f64;
    let error = (boots.iter().map(|b| (b - mean_b).powi(2)).sum::<f64>() / (resamples as f64 - 1.0)).sqrt();
    let mean_work = ws.iter().sum::<f64>() / n as f64;
    let var_w = ws.iter().map(|w| (w - mean_work).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    Ok(RatioEstimate {
        n_trajectories: n,
        direction: first.direction,
        n_steps: first.n_steps,
        beta: first.beta,
        geometry_hash: first.geometry_hash.clone(),
        mean_exp_minus_w: log_ratio.exp(),
        log_ratio,
        error,
        mean_work,
        mean_work_error: (var_w / n as f64).sqrt(),
        reverse_log_ratio: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// |ln R_fwd + ln R_rev|
    pub discrepancy: f64,
    pub combined_error: f64,
    pub n_sigma: f64,
    pub flagged: bool,
}

pub fn reverse_consistency(forward: &RatioEstimate, reverse: &RatioEstimate) -> ConsistencyReport {
    let discrepancy = (forward.log_ratio + reverse.log_ratio).abs();
    let combined_error = forward.error.hypot(reverse.error);
    let n_sigma = if combined_error > 0.0 {
        discrepancy / combined_error
    } else if discrepancy == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    ConsistencyReport { discrepancy, combined_error, n_sigma, flagged: n_sigma > 3.0 }
}

/// Geometry of a c-function measurement at slab lengths (l, l + a).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointGeometry {
    pub dimension: usize,
    pub n_replicas: usize,
    pub n_tau: usize,
    pub n_s: usize,
    /// Smaller slab length, lattice units.
    pub l: usize,
    pub boundary_sites: usize,
}

impl PointGeometry {
    /// Geometry of a protocol graph built at slab length l + 1.
    pub fn of_protocol(graph: &BondGraph) -> Self {
        let s = &graph.spec;
        PointGeometry {
            dimension: s.dimension,
            n_replicas: s.n_replicas,
            n_tau: s.extents[0],
            n_s: s.extents[1],
            l: s.slab_length - 1,
            boundary_sites: s.boundary_sites(),
        }
    }
}

/// Lattice-to-physical conversion for one coupling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaleInfo {
    /// N_tau,c of the scale-setting table, giving a T_c = 1 / N_tau,c.
    pub n_tau_c: Option<usize>,
    /// a m_g at this coupling.
    pub a_mg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CFunctionPoint {
    pub beta: f64,
    pub n: usize,
    pub n_tau: usize,
    pub n_s: usize,
    pub l: usize,
    pub boundary_sites: usize,
    /// ln Z_n(l) / Z_n(l + a)
    pub log_ratio: f64,
    /// Value with the prefactor evaluated at the backward abscissa l.
    pub value: f64,
    pub error: f64,
    /// Value with the prefactor evaluated at the mid-point abscissa l + a/2.
    pub value_mid: f64,
    pub error_mid: f64,
    pub abscissa_backward: f64,
    pub abscissa_mid: f64,
    pub l_tc: Option<f64>,
    pub l_mg: Option<f64>,
    pub l_mg_mid: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
}

/// Record of a division by C_2^CFT; keeps the raw numbers so the division
/// can be undone exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub c2_cft: f64,
    /// value, error, value_mid, error_mid before normalization.
    pub raw: [f64; 4],
}

/// (l^{D-1} / |dA|) (1/(n-1)) ln[Z_n(l) / Z_n(l + a)], a = 1. `ratio` may be
/// a forward estimate or a reverse one (whose sign is flipped).
pub fn c_function_point(ratio: &RatioEstimate, geometry: &PointGeometry, scale: &ScaleInfo) -> Result<CFunctionPoint> {
    let n = geometry.n_replicas;
    if n < 2 {
        return Err(Error::InvalidArgument("c-function needs n >= 2".into()));
    }
    if geometry.boundary_sites == 0 {
        return Err(Error::Geometry("geometry has no entangling surface".into()));
    }
    let log_ratio = match ratio.direction {
        Direction::Forward => ratio.log_ratio,
        Direction::Reverse => -ratio.log_ratio,
    };
    let deriv = log_ratio / (n as f64 - 1.0);
    let d_err = ratio.error / (n as f64 - 1.0);
    let pref = |x: f64| x.powi(geometry.dimension as i32 - 1) / geometry.boundary_sites as f64;
    let (xb, xm) = (geometry.l as f64, geometry.l as f64 + 0.5);
    Ok(CFunctionPoint {
        beta: ratio.beta,
        n,
        n_tau: geometry.n_tau,
        n_s: geometry.n_s,
        l: geometry.l,
        boundary_sites: geometry.boundary_sites,
        log_ratio,
        value: pref(xb) * deriv,
        error: pref(xb) * d_err,
        value_mid: pref(xm) * deriv,
        error_mid: pref(xm) * d_err,
        abscissa_backward: xb,
        abscissa_mid: xm,
        l_tc: scale.n_tau_c.map(|nt| xb / nt as f64),
        l_mg: scale.a_mg.map(|m| xb * m),
        l_mg_mid: scale.a_mg.map(|m| xm * m),
        normalization: None,
    })
}

/// Integrated autocorrelation time with Sokal's automatic window (c = 6).
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 0.5;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for t in 1..n / 2 {
        let ct = x[..n - t].iter().zip(&x[t..]).map(|(a, b)| a * b).sum::<f64>() / (n - t) as f64;
        tau += ct / c0;
        if t as f64 >= 6.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

/// Default equilibration: max(100, ceil(10 tau_int)) of the action measured
/// in a pilot run at the protocol's starting lambda.
pub fn default_equilibration(graph: &BondGraph, beta: f64, lambda0: f64, seed: u64, pilot_sweeps: usize) -> Result<(usize, f64)> {
    let c = couplings_at(graph, beta, lambda0, &Seams::new())?;
    let mut rng = RngStream::new(seed, u64::MAX);
    let mut cfg = SpinConfig::random(graph.n_sites(), &mut rng);
    for _ in 0..MIN_EQUILIBRATION {
        sw_sweep(&mut cfg, &c, &mut rng)?;
    }
    let mut series = Vec::with_capacity(pilot_sweeps);
    for _ in 0..pilot_sweeps {
        sw_sweep(&mut cfg, &c, &mut rng)?;
        series.push(action(&cfg, &c)?);
    }
    let tau = integrated_autocorrelation(&series);
    Ok((MIN_EQUILIBRATION.max((10.0 * tau).ceil() as usize), tau))
}

/// Default sweeps between protocol steps: ceil(2 tau_int), so successive
/// work increments are close to uncorrelated.
pub fn default_sweeps_per_step(tau: f64) -> usize {
    ((2.0 * tau).ceil() as usize).max(1)
}

/// Reads a JSON-lines record file. A truncated final line (interrupted
/// write) is ignored; malformed lines elsewhere are errors.
pub fn read_records(path: &Path) -> Result<Vec<WorkRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Appends records, one JSON object per line, and flushes.
pub fn append_records(path: &Path, records: &[WorkRecord]) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(r)?);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Drops a partially written trailing line so appends start cleanly.
pub fn repair_record_file(path: &Path) -> Result<usize> {
    let records = read_records(path)?;
    if path.exists() {
        let mut f = File::create(path)?;
        for r in &records {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
    }
    Ok(records.len())
}
