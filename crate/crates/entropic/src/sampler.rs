//! Swendsen-Wang cluster updates and single-site Metropolis sweeps.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::model::{CouplingField, SpinConfig};

/// Counter-based random stream.
///
/// The ChaCha20 key holds `master_seed` as eight little-endian bytes
/// followed by zeros; `index` selects the 64-bit ChaCha stream. Two runs
/// with the same `(master_seed, index)` see the same numbers on any machine.
#[derive(Clone, Debug)]
pub struct RngStream {
    pub master_seed: u64,
    pub index: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha20";

    pub fn new(master_seed: u64, index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(index);
        RngStream { master_seed, index, rng }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

fn check_ferromagnetic(c: &CouplingField) -> Result<()> {
    match (0..c.ends.len()).find(|&k| c.effective(k) < 0.0) {
        Some(k) => Err(Error::NegativeCoupling(format!(
            "bond {k} has effective coupling {}; use the oracle or Metropolis for signed couplings",
            c.effective(k)
        ))),
        None => Ok(()),
    }
}

/// Cluster label per site, numbered in order of first appearance. Only
/// bonds between aligned spins with positive coupling can be activated,
/// each with probability 1 - exp(-2J).
pub fn cluster_decomposition<R: Rng + ?Sized>(config: &SpinConfig, couplings: &CouplingField, rng: &mut R) -> Result<Vec<usize>> {
    check_ferromagnetic(couplings)?;
    if config.len() != couplings.n_sites {
        return Err(Error::InvalidArgument("config and coupling field sizes differ".into()));
    }
    let s = &config.values;
    let mut uf = UnionFind::new(s.len());
    for (k, &(a, b)) in couplings.ends.iter().enumerate() {
        let j = couplings.strength[k];
        if j <= 0.0 || s[a] != s[b] {
            continue;
        }
        let p = -(-2.0 * j).exp_m1();
        if rng.random::<f64>() < p {
            uf.union(a, b);
        }
    }
    let mut label = vec![usize::MAX; s.len()];
    let mut labels = Vec::with_capacity(s.len());
    let mut next = 0;
    for i in 0..s.len() {
        let r = uf.find(i);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        labels.push(label[r]);
    }
    Ok(labels)
}

/// One Swendsen-Wang update: bond activation, cluster labelling and an
/// independent coin flip per cluster.
pub fn sw_sweep<R: Rng + ?Sized>(config: &mut SpinConfig, couplings: &CouplingField, rng: &mut R) -> Result<()> {
    let labels = cluster_decomposition(config, couplings, rng)?;
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    let flips: Vec<bool> = (0..n_clusters).map(|_| rng.random::<bool>()).collect();
    for (s, &l) in config.values.iter_mut().zip(&labels) {
        if flips[l] {
            *s = -*s;
        }
    }
    Ok(())
}

/// Sequential single-site Metropolis sweep; accepts signed couplings.
pub fn metropolis_sweep<R: Rng + ?Sized>(config: &mut SpinConfig, couplings: &CouplingField, rng: &mut R) -> Result<()> {
    if config.len() != couplings.n_sites {
        return Err(Error::InvalidArgument("config and coupling field sizes differ".into()));
    }
    let mut adj = vec![Vec::new(); config.len()];
    for (k, &(a, b)) in couplings.ends.iter().enumerate() {
        if a != b {
            adj[a].push((b, couplings.effective(k)));
            adj[b].push((a, couplings.effective(k)));
        }
    }
    let s = &mut config.values;
    for i in 0..s.len() {
        let field: f64 = adj[i].iter().map(|&(j, k)| k * s[j] as f64).sum();
        let ds = 2.0 * s[i] as f64 * field;
        if ds <= 0.0 || rng.random::<f64>() < (-ds).exp() {
            s[i] = -s[i];
        }
    }
    Ok(())
}

/// Sum over bonds of `s_b sigma_a sigma_b`, the observable conjugate to a
/// uniform coupling.
pub fn bond_sum(config: &SpinConfig, couplings: &CouplingField) -> f64 {
    couplings
        .ends
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| (couplings.sign[k] * config.values[a] * config.values[b]) as f64)
        .sum()
}
