//! Named identity suites: each runs oracle comparisons and reports the
//! achieved tolerance of every check.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::duality::{dual_coupling, DualityRelation, RelationKind};
use crate::error::{Error, Result};
use crate::lattice::{build_protocol_graph, build_replica_lattice, Boundary, GeometryVariant, ReplicaLatticeSpec};
use crate::model::{couplings_at, CouplingField, Direction, ProtocolSchedule, Seams, SpinConfig};
use crate::neq::{default_equilibration, default_sweeps_per_step, estimate_ratio, reverse_consistency, run_ensemble};
use crate::oracle::{enumerate_sectors, enumerate_spin_z, exact_probabilities, exact_renyi};
use crate::sampler::{sw_sweep, RngStream};

pub const SUITES: [&str; 3] = ["duality-2d", "sw-stationarity", "jarzynski-small"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    /// Achieved deviation in the unit of `tolerance` (relative, absolute,
    /// sigma or p-value, see `kind`).
    pub achieved: f64,
    pub tolerance: f64,
    pub kind: String,
    pub passed: bool,
}

impl Check {
    pub fn relative(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        let achieved = ((value - target) / target).abs();
        Check { name: name.into(), value, target, achieved, tolerance, kind: "relative".into(), passed: achieved <= tolerance }
    }

    pub fn absolute(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        let achieved = (value - target).abs();
        Check { name: name.into(), value, target, achieved, tolerance, kind: "absolute".into(), passed: achieved <= tolerance }
    }

    pub fn sigma(name: impl Into<String>, value: f64, target: f64, error: f64, max_sigma: f64) -> Self {
        let achieved = if error > 0.0 { (value - target).abs() / error } else if value == target { 0.0 } else { f64::INFINITY };
        Check { name: name.into(), value, target, achieved, tolerance: max_sigma, kind: "sigma".into(), passed: achieved <= max_sigma }
    }

    /// Passes when the p-value is at least `level`.
    pub fn p_value(name: impl Into<String>, p: f64, level: f64) -> Self {
        Check { name: name.into(), value: p, target: 1.0, achieved: p, tolerance: level, kind: "p-value".into(), passed: p >= level }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub elapsed_seconds: f64,
    pub checks: Vec<Check>,
}

pub fn run_suite(name: &str) -> Result<SuiteReport> {
    let t = Instant::now();
    let checks = match name {
        "duality-2d" => duality_2d()?,
        "sw-stationarity" => sw_stationarity(1_000_000, 2024)?,
        "jarzynski-small" => jarzynski_small(10_000, 64, JARZYNSKI_SEED)?,
        _ => {
            return Err(Error::InvalidArgument(format!("unknown suite {name:?}; known: {}", SUITES.join(", "))));
        }
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        passed: checks.iter().all(|c| c.passed),
        elapsed_seconds: t.elapsed().as_secs_f64(),
        checks,
    })
}

pub const JARZYNSKI_SEED: u64 = 20_261_016;

pub const DUALITY_BETAS: [f64; 3] = [0.2, 0.44, 0.8];

/// 2D dualities: free patches, tori with the four-sector sum, and the
/// replica relation with its ln 2 entropy shift.
pub fn duality_2d() -> Result<Vec<Check>> {
    let s0 = Seams::new();
    let mut checks = Vec::new();
    for (nt, ns) in [(3, 3), (3, 4), (4, 4)] {
        let spec = ReplicaLatticeSpec::new(2, 1, &[nt, ns], 0).with_boundaries(&[Boundary::Free, Boundary::Free]);
        let g = build_replica_lattice(&spec)?;
        let d = build_replica_lattice(&spec.clone().with_variant(GeometryVariant::EnhancedVertex))?;
        let rel = DualityRelation::complex(2, 1, g.n_sites(), g.n_bonds(), 1);
        for beta in DUALITY_BETAS {
            let z = enumerate_spin_z(&g, beta, &s0)?.log_z;
            let zd = enumerate_spin_z(&d, dual_coupling(beta)?, &s0)?.log_z + rel.ln_prefactor(beta)?;
            checks.push(Check::relative(format!("free {nt}x{ns} beta={beta}"), (zd - z).exp(), 1.0, 1e-10));
        }
    }
    for l in [2, 3, 4] {
        let g = build_replica_lattice(&ReplicaLatticeSpec::new(2, 1, &[l, l], 0))?;
        let rel = DualityRelation::new(RelationKind::Ising2d, 1, l * l, 0, 0)?;
        for beta in DUALITY_BETAS {
            let z = enumerate_spin_z(&g, beta, &s0)?.log_z;
            let sectors = enumerate_sectors(&g, dual_coupling(beta)?)?;
            let rhs = rel.ln_prefactor(beta)? + sectors.log_z;
            checks.push(Check::relative(format!("torus {l}x{l} sectors beta={beta}"), (rhs - z).exp(), 1.0, 1e-10));
        }
    }
    for n in [2, 3] {
        let spec = ReplicaLatticeSpec::new(2, n, &[3, 3], 1).with_boundaries(&[Boundary::Periodic, Boundary::Free]);
        let g = build_replica_lattice(&spec)?;
        let d = build_replica_lattice(&spec.clone().with_variant(GeometryVariant::EnhancedVertex))?;
        let g1 = build_replica_lattice(&spec.clone().with_replicas(1))?;
        let d1 = build_replica_lattice(&spec.clone().with_replicas(1).with_variant(GeometryVariant::EnhancedVertex))?;
        let rel = DualityRelation::complex(2, n, g.n_sites(), g.n_bonds(), 1);
        let beta = 0.44;
        let bs = dual_coupling(beta)?;
        let z = enumerate_spin_z(&g, beta, &s0)?.log_z;
        let zd = enumerate_spin_z(&d, bs, &s0)?.log_z + rel.ln_prefactor(beta)?;
        checks.push(Check::relative(format!("replica n={n} 3x3 cylinder"), (zd - z).exp(), 1.0, 1e-10));
        let shift = exact_renyi(&d, &d1, bs)? - exact_renyi(&g, &g1, beta)?;
        checks.push(Check::absolute(format!("replica n={n} entropy shift"), shift, std::f64::consts::LN_2, 1e-10));
    }
    Ok(checks)
}

/// Draws from a discrete distribution by inversion.
fn draw<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Chi-square test of `counts` against `probs`; bins with expected count
/// below 5 are pooled. Returns (chi2, dof, p-value).
pub fn chi_square_test(counts: &[u64], probs: &[f64]) -> (f64, usize, f64) {
    let total: u64 = counts.iter().sum();
    let (mut chi2, mut bins) = (0.0, 0usize);
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * total as f64;
        if e < 5.0 {
            pooled_obs += c as f64;
            pooled_exp += e;
        } else {
            chi2 += (c as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pooled_exp >= 5.0 {
        chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    let dof = bins.saturating_sub(1).max(1);
    let p = ChiSquared::new(dof as f64).map(|d| 1.0 - d.cdf(chi2)).unwrap_or(f64::NAN);
    (chi2, dof, p)
}

/// One SW sweep applied to exact Boltzmann draws; the resulting states
/// are histogrammed and compared with the Boltzmann law.
pub fn stationarity_counts(c: &CouplingField, draws: u64, seed: u64) -> Result<(Vec<u64>, Vec<f64>)> {
    let probs = exact_probabilities(c)?;
    let mut cdf = probs.clone();
    for i in 1..cdf.len() {
        cdf[i] += cdf[i - 1];
    }
    const CHUNKS: u64 = 64;
    let per = draws / CHUNKS;
    let parts: Vec<Result<Vec<u64>>> = (0..CHUNKS)
        .into_par_iter()
        .map(|k| {
            let mut rng = RngStream::new(seed, k);
            let mut counts = vec![0u64; probs.len()];
            for _ in 0..per {
                let mut cfg = SpinConfig::from_bits(c.n_sites, draw(&cdf, &mut rng) as u64);
                sw_sweep(&mut cfg, c, &mut rng)?;
                counts[cfg.to_bits() as usize] += 1;
            }
            Ok(counts)
        })
        .collect();
    let mut counts = vec![0u64; probs.len()];
    for p in parts {
        for (a, b) in counts.iter_mut().zip(p?) {
            *a += b;
        }
    }
    Ok((counts, probs))
}

pub fn sw_stationarity(draws: u64, seed: u64) -> Result<Vec<Check>> {
    let g = build_replica_lattice(&ReplicaLatticeSpec::new(2, 1, &[3, 3], 0))?;
    let mut checks = Vec::new();
    for (k, beta) in DUALITY_BETAS.into_iter().enumerate() {
        let c = couplings_at(&g, beta, 0.0, &Seams::new())?;
        let (counts, probs) = stationarity_counts(&c, draws, seed.wrapping_add(k as u64))?;
        let (_, _, p) = chi_square_test(&counts, &probs);
        checks.push(Check::p_value(format!("3x3 torus beta={beta}"), p, 1e-3));
    }
    Ok(checks)
}

/// Jarzynski estimate of ln Z_2(1)/Z_2(2) on the 3x3 torus at beta = 0.35
/// against enumeration, both protocol directions.
pub fn jarzynski_small(trajectories: u64, steps: usize, seed: u64) -> Result<Vec<Check>> {
    let beta = 0.35;
    let spec = ReplicaLatticeSpec::new(2, 2, &[3, 3], 2);
    let pg = build_protocol_graph(&spec)?;
    let s0 = Seams::new();
    let exact = enumerate_spin_z(&build_replica_lattice(&spec.clone().with_slab_length(1))?, beta, &s0)?.log_z
        - enumerate_spin_z(&build_replica_lattice(&spec)?, beta, &s0)?.log_z;
    let (eq, tau) = default_equilibration(&pg, beta, 0.0, seed, 2000)?;
    let fwd = ProtocolSchedule::linear(steps, default_sweeps_per_step(tau), eq, Direction::Forward)?;
    let f = estimate_ratio(&run_ensemble(&pg, beta, &fwd, seed, 0..trajectories)?)?;
    let r = estimate_ratio(&run_ensemble(&pg, beta, &fwd.reversed(), seed, 0..trajectories)?)?;
    let rep = reverse_consistency(&f, &r);
    Ok(vec![
        Check::sigma("forward vs exact", f.log_ratio, exact, f.error, 3.0),
        Check::relative("forward relative error", f.log_ratio, exact, 0.01),
        Check::sigma("reverse vs exact", -r.log_ratio, exact, r.error, 3.0),
        Check::sigma("forward/reverse discrepancy", rep.discrepancy, 0.0, rep.combined_error, 3.0),
    ])
}
