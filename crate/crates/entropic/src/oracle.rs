//! Exact enumeration of partition functions on small lattices.
//!
//! Configurations are visited in Gray-code order so each step flips one
//! variable and updates the action incrementally. The range of codes is
//! split into fixed blocks that run in parallel; block sums are merged in
//! block order, so the result does not depend on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BondGraph, Boundary, GaugeReplicaGraph};
use crate::model::{couplings_at, seam_bonds, CouplingField, Seams, SpinConfig};

/// Largest number of enumerated binary variables (2^26 configurations).
pub const MAX_FREE_VARIABLES: usize = 26;
/// Largest graph for which full probability tables are built.
pub const MAX_TABLE_SITES: usize = 20;
const BLOCK_BITS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorValue {
    pub label: String,
    pub log_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub log_z: f64,
    pub sectors: Vec<SectorValue>,
    pub beta: f64,
    pub n_replicas: usize,
    pub geometry_hash: String,
}

/// Compensated (Neumaier) running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn too_large(what: &str, m: usize) -> Error {
    let bytes_free = 2f64.powi(m as i32);
    Error::TooLarge(format!(
        "{what}: {m} free variables need 2^{m} = {bytes_free:.3e} configurations, cap is 2^{MAX_FREE_VARIABLES}"
    ))
}

fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

/// Sums `exp(-(S - s_ref))` over all `2^m` codes, given the action of a
/// code and the change of action when bit `f` flips.
fn gray_sum<S, D>(m: usize, init: S, delta: D) -> f64
where
    S: Fn(u64) -> (f64, Vec<i8>) + Sync,
    D: Fn(&mut Vec<i8>, usize) -> f64 + Sync,
{
    let block_bits = m.min(BLOCK_BITS);
    let n_blocks = 1u64 << (m - block_bits);
    let block_len = 1u64 << block_bits;
    let partial: Vec<f64> = (0..n_blocks)
        .into_par_iter()
        .map(|k| {
            let i0 = k * block_len;
            let (mut s, mut state) = init(gray(i0));
            let mut acc = NeumaierSum::default();
            acc.add((-s).exp());
            for i in i0 + 1..i0 + block_len {
                let f = i.trailing_zeros() as usize;
                s += delta(&mut state, f);
                acc.add((-s).exp());
            }
            acc.value()
        })
        .collect();
    let mut total = NeumaierSum::default();
    for p in partial {
        total.add(p);
    }
    total.value()
}

/// ln Z for an arbitrary coupling field. One spin is fixed by the global
/// spin-flip symmetry, so graphs of up to 27 sites are accepted.
pub fn enumerate_field(c: &CouplingField) -> Result<f64> {
    let n = c.n_sites;
    if n == 0 {
        return Ok(0.0);
    }
    let m = n - 1;
    if m > MAX_FREE_VARIABLES {
        return Err(too_large("spin enumeration", m));
    }
    let mut adj = vec![Vec::new(); n];
    let mut s_const = 0.0;
    let mut s_ref = 0.0;
    for (k, &(a, b)) in c.ends.iter().enumerate() {
        let j = c.effective(k);
        if a == b {
            s_const -= j;
        } else {
            adj[a].push((b, j));
            adj[b].push((a, j));
            s_ref -= j.abs();
        }
    }
    let init = |code: u64| {
        let spins: Vec<i8> = (0..n).map(|i| if i < m && code >> i & 1 == 1 { -1 } else { 1 }).collect();
        let mut s = 0.0;
        for (k, &(a, b)) in c.ends.iter().enumerate() {
            if a != b {
                s -= c.effective(k) * (spins[a] * spins[b]) as f64;
            }
        }
        (s - s_ref, spins)
    };
    let delta = |spins: &mut Vec<i8>, f: usize| {
        let field: f64 = adj[f].iter().map(|&(j, k)| k * spins[j] as f64).sum();
        let ds = 2.0 * spins[f] as f64 * field;
        spins[f] = -spins[f];
        ds
    };
    let sum = gray_sum(m, init, delta);
    Ok(std::f64::consts::LN_2 - s_ref - s_const + sum.ln())
}

/// Exact partition function of `graph` at coupling `beta`, with the bonds
/// in `seams` sign-flipped. Switch bonds are taken at lambda = 0.
pub fn enumerate_spin_z(graph: &BondGraph, beta: f64, seams: &Seams) -> Result<ExactResult> {
    let c = couplings_at(graph, beta, 0.0, seams)?;
    Ok(ExactResult {
        log_z: enumerate_field(&c)?,
        sectors: Vec::new(),
        beta,
        n_replicas: graph.spec.n_replicas,
        geometry_hash: graph.geometry_hash(),
    })
}

/// Exact Z2 gauge partition function sum_U prod_P exp(beta* U_P). Links of
/// the maximal tree are fixed to +1 and the gauge volume 2^{N_g} restored.
pub fn enumerate_gauge_z(g: &GaugeReplicaGraph, beta_star: f64) -> Result<ExactResult> {
    let mut in_tree = vec![false; g.links.len()];
    for &k in &g.maximal_tree {
        in_tree[k] = true;
    }
    let free: Vec<usize> = (0..g.links.len()).filter(|&k| !in_tree[k]).collect();
    let m = free.len();
    if m > MAX_FREE_VARIABLES {
        return Err(too_large("gauge enumeration", m));
    }
    let mut pos = vec![usize::MAX; g.links.len()];
    for (i, &k) in free.iter().enumerate() {
        pos[k] = i;
    }
    // plaquettes in which each free link appears an odd number of times
    let mut odd: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (p, links) in g.plaquettes.iter().enumerate() {
        let mut count = std::collections::BTreeMap::new();
        for &l in links {
            *count.entry(l).or_insert(0usize) += 1;
        }
        for (l, c) in count {
            if c % 2 == 1 && pos[l] != usize::MAX {
                odd[pos[l]].push(p);
            }
        }
    }
    let np = g.plaquettes.len() as f64;
    let e_ref = beta_star.abs() * np;
    let init = |code: u64| {
        let u = |l: usize| if pos[l] != usize::MAX && code >> pos[l] & 1 == 1 { -1i8 } else { 1 };
        let plaq: Vec<i8> = g.plaquettes.iter().map(|p| p.iter().map(|&l| u(l)).product()).collect();
        let e: f64 = plaq.iter().map(|&x| x as f64).sum();
        (e_ref - beta_star * e, plaq)
    };
    let delta = |plaq: &mut Vec<i8>, f: usize| {
        let mut ds = 0.0;
        for &p in &odd[f] {
            ds += 2.0 * beta_star * plaq[p] as f64;
            plaq[p] = -plaq[p];
        }
        ds
    };
    let sum = gray_sum(m, init, delta);
    Ok(ExactResult {
        log_z: g.n_g() as f64 * std::f64::consts::LN_2 + e_ref + sum.ln(),
        sectors: Vec::new(),
        beta: beta_star,
        n_replicas: g.spec.n_replicas,
        geometry_hash: String::new(),
    })
}

/// Partition functions of the 2^D sectors obtained by making each torus
/// direction periodic (p) or antiperiodic (a). Labels list directions in
/// the order tau, x, y; `log_z` is the log of the sector sum.
pub fn enumerate_sectors(graph: &BondGraph, beta: f64) -> Result<ExactResult> {
    let spec = &graph.spec;
    if spec.boundaries.iter().any(|&b| b != Boundary::Periodic) || spec.extents.iter().any(|&e| e < 2) {
        return Err(Error::Unsupported("topological sectors need a periodic torus with all extents >= 2".into()));
    }
    let d = spec.dimension;
    let mut sectors = Vec::new();
    for mask in 0..1usize << d {
        let mut seams = Seams::new();
        let mut label = String::new();
        for dir in 0..d {
            if mask >> dir & 1 == 1 {
                seams.extend(seam_bonds(graph, dir));
                label.push('a');
            } else {
                label.push('p');
            }
        }
        let r = enumerate_spin_z(graph, beta, &seams)?;
        sectors.push(SectorValue { label, log_z: r.log_z });
    }
    let logs: Vec<f64> = sectors.iter().map(|s| s.log_z).collect();
    Ok(ExactResult {
        log_z: log_sum_exp(&logs),
        sectors,
        beta,
        n_replicas: spec.n_replicas,
        geometry_hash: graph.geometry_hash(),
    })
}

/// S_n = ln(Z_n / Z^n) / (1 - n) from the replica graph and one replica.
pub fn exact_renyi(replica: &BondGraph, single: &BondGraph, beta: f64) -> Result<f64> {
    let n = replica.spec.n_replicas;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Renyi entropy needs n >= 2, got {n}")));
    }
    if single.spec.n_replicas != 1 {
        return Err(Error::InvalidArgument("reference graph must be a single replica".into()));
    }
    let zn = enumerate_spin_z(replica, beta, &Seams::new())?.log_z;
    let z1 = enumerate_spin_z(single, beta, &Seams::new())?.log_z;
    Ok((zn - n as f64 * z1) / (1.0 - n as f64))
}

/// Gauge-side counterpart of [`exact_renyi`].
pub fn exact_gauge_renyi(replica: &GaugeReplicaGraph, single: &GaugeReplicaGraph, beta_star: f64) -> Result<f64> {
    let n = replica.spec.n_replicas;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Renyi entropy needs n >= 2, got {n}")));
    }
    let zn = enumerate_gauge_z(replica, beta_star)?.log_z;
    let z1 = enumerate_gauge_z(single, beta_star)?.log_z;
    Ok((zn - n as f64 * z1) / (1.0 - n as f64))
}

/// Boltzmann probability of every configuration, indexed by
/// [`SpinConfig::to_bits`].
pub fn exact_probabilities(c: &CouplingField) -> Result<Vec<f64>> {
    let n = c.n_sites;
    if n > MAX_TABLE_SITES {
        return Err(Error::TooLarge(format!("probability table for {n} sites, cap is {MAX_TABLE_SITES}")));
    }
    let logw: Vec<f64> = (0..1u64 << n)
        .map(|bits| {
            let cfg = SpinConfig::from_bits(n, bits);
            -crate::model::action(&cfg, c).unwrap()
        })
        .collect();
    let lz = log_sum_exp(&logw);
    Ok(logw.iter().map(|w| (w - lz).exp()).collect())
}

/// Exact expectation of an observable under the Boltzmann distribution.
pub fn exact_expectation<F: Fn(&SpinConfig) -> f64>(c: &CouplingField, f: F) -> Result<f64> {
    let p = exact_probabilities(c)?;
    let mut acc = NeumaierSum::default();
    for (bits, &pb) in p.iter().enumerate() {
        acc.add(pb * f(&SpinConfig::from_bits(c.n_sites, bits as u64)));
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_gauge_replica, build_replica_lattice, Boundary, ReplicaLatticeSpec, TreeStrategy};

    #[test]
    fn single_site() {
        let c = CouplingField { n_sites: 1, ends: vec![], strength: vec![], sign: vec![] };
        assert!((enumerate_field(&c).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ring_closed_form() {
        for l in [3usize, 5, 8] {
            let beta: f64 = 0.37;
            let ends = (0..l).map(|i| (i, (i + 1) % l)).collect();
            let c = CouplingField { n_sites: l, ends, strength: vec![beta; l], sign: vec![1; l] };
            let exact = ((2.0 * beta.cosh()).powi(l as i32) + (2.0 * beta.sinh()).powi(l as i32)).ln();
            assert!((enumerate_field(&c).unwrap() - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn brute_force_agrees() {
        let g = build_replica_lattice(&ReplicaLatticeSpec::new(2, 2, &[2, 3], 1)).unwrap();
        let c = couplings_at(&g, 0.41, 0.0, &Seams::new()).unwrap();
        let brute: Vec<f64> =
            (0..1u64 << 12).map(|b| -crate::model::action(&SpinConfig::from_bits(12, b), &c).unwrap()).collect();
        assert!((enumerate_field(&c).unwrap() - log_sum_exp(&brute)).abs() < 1e-12);
    }

    #[test]
    fn cap_enforced() {
        let n = 28;
        let c = CouplingField { n_sites: n, ends: vec![], strength: vec![], sign: vec![] };
        assert!(matches!(enumerate_field(&c), Err(Error::TooLarge(_))));
    }

    #[test]
    fn gauge_zero_coupling_counts_links() {
        let s = ReplicaLatticeSpec::new(3, 1, &[2, 2, 3], 0).with_boundaries(&[Boundary::Free; 3]);
        let g = build_gauge_replica(&s).unwrap();
        let r = enumerate_gauge_z(&g, 0.0).unwrap();
        assert!((r.log_z - g.n_links() as f64 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_cube_by_hand() {
        // 2x2x2 open block: the dual has the cube and the outside, joined by
        // six parallel links; each of the twelve edges is a two-link plaquette.
        let s = ReplicaLatticeSpec::new(3, 1, &[2, 2, 2], 0).with_boundaries(&[Boundary::Free; 3]);
        let g = build_gauge_replica(&s).unwrap();
        assert_eq!((g.n_sites, g.n_links(), g.plaquettes.len(), g.n_g()), (2, 6, 12, 1));
        let b: f64 = 0.6;
        let mut z = 0.0;
        for bits in 0u32..64 {
            let u = |l: usize| if bits >> l & 1 == 1 { -1.0 } else { 1.0 };
            let e: f64 = g.plaquettes.iter().map(|p| p.iter().map(|&l| u(l)).product::<f64>()).sum();
            z += (b * e).exp();
        }
        assert!((enumerate_gauge_z(&g, b).unwrap().log_z - z.ln()).abs() < 1e-12);
    }

    #[test]
    fn gauge_tree_independence() {
        let s = ReplicaLatticeSpec::new(3, 1, &[2, 3, 3], 0).with_boundaries(&[Boundary::Free; 3]);
        let g = build_gauge_replica(&s).unwrap();
        let other = g.clone().with_tree(TreeStrategy::DepthFirst { root: g.n_sites - 1 }).unwrap();
        assert_ne!(g.maximal_tree, other.maximal_tree);
        let (a, b) = (enumerate_gauge_z(&g, 0.7).unwrap().log_z, enumerate_gauge_z(&other, 0.7).unwrap().log_z);
        assert!((a - b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn sectors_equal_at_zero_coupling() {
        let g = build_replica_lattice(&ReplicaLatticeSpec::new(2, 1, &[3, 3], 0)).unwrap();
        let r = enumerate_sectors(&g, 0.0).unwrap();
        assert_eq!(r.sectors.len(), 4);
        for s in &r.sectors {
            assert!((s.log_z - 9.0 * 2f64.ln()).abs() < 1e-12);
        }
        let open = ReplicaLatticeSpec::new(2, 1, &[3, 3], 0).with_boundaries(&[Boundary::Free, Boundary::Periodic]);
        assert!(enumerate_sectors(&build_replica_lattice(&open).unwrap(), 0.3).is_err());
    }

    #[test]
    fn renyi_needs_two_replicas() {
        let g = build_replica_lattice(&ReplicaLatticeSpec::new(2, 1, &[3, 3], 0)).unwrap();
        assert!(exact_renyi(&g, &g, 0.3).is_err());
    }

    #[test]
    fn renyi_vanishes_at_zero_coupling() {
        let spec = ReplicaLatticeSpec::new(2, 2, &[3, 3], 1);
        let g2 = build_replica_lattice(&spec).unwrap();
        let g1 = build_replica_lattice(&spec.clone().with_replicas(1)).unwrap();
        assert_eq!(exact_renyi(&g2, &g1, 0.0).unwrap(), 0.0);
    }
}
