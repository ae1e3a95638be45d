//! `simulate`: trajectory ensembles per (beta, l) point, resumable from the
//! record files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use entropic::lattice::build_protocol_graph;
use entropic::model::{Direction, ProtocolSchedule};
use entropic::neq::{
    append_records, c_function_point, default_equilibration, default_sweeps_per_step, estimate_ratio, repair_record_file, reverse_consistency,
    run_ensemble, CFunctionPoint, ConsistencyReport, PointGeometry, RatioEstimate, ScaleInfo,
};
use entropic::sampler::RngStream;
use serde::Serialize;

use crate::config::{Coupling, RunConfig};
use crate::table::write_points;

#[derive(Debug, Serialize)]
pub struct PlanEntry {
    pub beta: f64,
    pub n_tau_c: Option<usize>,
    pub l: usize,
    pub geometry_hash: String,
    pub n_sites: usize,
    pub n_bonds: usize,
    pub directions: Vec<Direction>,
    pub trajectories: u64,
    pub estimated_sweeps: u64,
}

#[derive(Debug, Serialize)]
pub struct PointResult {
    pub beta: f64,
    pub l: usize,
    pub equilibration_sweeps: usize,
    pub sweeps_per_step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_int: Option<f64>,
    pub forward: RatioEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reverse: Option<RatioEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencyReport>,
}

#[derive(Debug, Serialize)]
struct RunMetadata<'a> {
    rng_algorithm: &'a str,
    stream_rule: &'a str,
    master_seed: u64,
    points: &'a [PointResult],
}

pub fn plan(cfg: &RunConfig) -> Result<Vec<PlanEntry>> {
    let p = &cfg.protocol;
    let mut out = Vec::new();
    for c in cfg.couplings() {
        for &l in &cfg.physics.l {
            let g = build_protocol_graph(&cfg.spec(l + 1))?;
            let dirs = if p.reverse { vec![Direction::Forward, Direction::Reverse] } else { vec![Direction::Forward] };
            let eq = p.equilibration_sweeps.unwrap_or(entropic::neq::MIN_EQUILIBRATION) as u64;
            let per = eq + (p.n_steps * p.sweeps_per_step.unwrap_or(1)) as u64;
            out.push(PlanEntry {
                beta: c.beta,
                n_tau_c: c.n_tau_c,
                l,
                geometry_hash: g.geometry_hash(),
                n_sites: g.n_sites(),
                n_bonds: g.n_bonds(),
                trajectories: p.trajectories,
                estimated_sweeps: per * p.trajectories * dirs.len() as u64,
                directions: dirs,
            });
        }
    }
    Ok(out)
}

fn record_path(dir: &Path, hash: &str, beta: f64, l: usize, d: Direction) -> PathBuf {
    let tag = match d {
        Direction::Forward => "forward",
        Direction::Reverse => "reverse",
    };
    dir.join(format!("{hash}_b{beta}_l{l}_{tag}.jsonl"))
}

/// Runs (or resumes) one direction and returns the first `trajectories`
/// records of its file.
fn ensemble(
    cfg: &RunConfig,
    graph: &entropic::lattice::BondGraph,
    beta: f64,
    schedule: &ProtocolSchedule,
    path: &Path,
) -> Result<Vec<entropic::neq::WorkRecord>> {
    let total = cfg.protocol.trajectories;
    let chunk = if cfg.io.checkpoint_interval == 0 { 1000 } else { cfg.io.checkpoint_interval };
    let mut have = repair_record_file(path)? as u64;
    while have < total {
        let end = (have + chunk).min(total);
        let recs = run_ensemble(graph, beta, schedule, cfg.protocol.master_seed, have..end)?;
        append_records(path, &recs)?;
        have = end;
    }
    let mut recs = entropic::neq::read_records(path)?;
    recs.truncate(total as usize);
    Ok(recs)
}

fn run_point(cfg: &RunConfig, c: Coupling, l: usize, records_dir: &Path) -> Result<(PointResult, CFunctionPoint)> {
    let p = &cfg.protocol;
    let graph = build_protocol_graph(&cfg.spec(l + 1))?;
    let tau = match (p.equilibration_sweeps, p.sweeps_per_step) {
        (Some(_), Some(_)) => None,
        _ => Some(default_equilibration(&graph, c.beta, 0.0, p.master_seed, p.pilot_sweeps)?),
    };
    let eq = p.equilibration_sweeps.unwrap_or_else(|| tau.unwrap().0);
    let spp = p.sweeps_per_step.unwrap_or_else(|| default_sweeps_per_step(tau.unwrap().1));
    let tau = tau.map(|t| t.1);
    let hash = graph.geometry_hash();
    let fwd = ProtocolSchedule::linear(p.n_steps, spp, eq, Direction::Forward)?;
    let f_recs = ensemble(cfg, &graph, c.beta, &fwd, &record_path(records_dir, &hash, c.beta, l, Direction::Forward))?;
    let mut forward = estimate_ratio(&f_recs)?;
    let (reverse, consistency) = if p.reverse {
        let rev = fwd.reversed();
        let r_recs = ensemble(cfg, &graph, c.beta, &rev, &record_path(records_dir, &hash, c.beta, l, Direction::Reverse))?;
        let r = estimate_ratio(&r_recs)?;
        forward.reverse_log_ratio = Some(r.log_ratio);
        let rep = reverse_consistency(&forward, &r);
        (Some(r), Some(rep))
    } else {
        (None, None)
    };
    let scale = ScaleInfo { n_tau_c: c.n_tau_c, a_mg: None };
    let point = c_function_point(&forward, &PointGeometry::of_protocol(&graph), &scale)?;
    Ok((PointResult { beta: c.beta, l, equilibration_sweeps: eq, sweeps_per_step: spp, tau_int: tau, forward, reverse, consistency }, point))
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PointResult>> {
    let records = out.join("records");
    fs::create_dir_all(&records).with_context(|| format!("creating {}", records.display()))?;
    fs::write(out.join("config.frozen.toml"), toml::to_string(cfg)?)?;
    let mut results = Vec::new();
    let mut points = Vec::new();
    for c in cfg.couplings() {
        for &l in &cfg.physics.l {
            let (r, p) = run_point(cfg, c, l, &records)?;
            eprintln!(
                "beta={} l={}: ln Z(l)/Z(l+1) = {:.6} +- {:.6} ({} trajectories)",
                r.beta, r.l, r.forward.log_ratio, r.forward.error, r.forward.n_trajectories
            );
            results.push(r);
            points.push(p);
        }
    }
    let meta = RunMetadata {
        rng_algorithm: RngStream::ALGORITHM,
        stream_rule: "key = master_seed (8 LE bytes, zero padded), stream = (trajectory << 1) | reverse",
        master_seed: cfg.protocol.master_seed,
        points: &results,
    };
    fs::write(out.join("ratios.json"), serde_json::to_string_pretty(&meta)?)?;
    write_points(&out.join("cfunction.csv"), &points)?;
    Ok(results)
}
