//! Ising action on a bond graph, the lambda-interpolated couplings of the
//! switching protocol, and character-expansion coefficients.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BondClass, BondGraph};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfig {
    pub values: Vec<i8>,
}

impl SpinConfig {
    pub fn all_up(n: usize) -> Self {
        SpinConfig { values: vec![1; n] }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        SpinConfig { values: (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect() }
    }

    /// Bit k set means spin k is down.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        SpinConfig { values: (0..n).map(|k| if bits >> k & 1 == 1 { -1 } else { 1 }).collect() }
    }

    pub fn to_bits(&self) -> u64 {
        self.values.iter().enumerate().fold(0, |acc, (k, &s)| if s < 0 { acc | 1 << k } else { acc })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn magnetization(&self) -> i64 {
        self.values.iter().map(|&s| s as i64).sum()
    }
}

/// Per-bond couplings `J_b >= 0` (in units of inverse temperature) and
/// signs; the bond contributes `-J_b s_b sigma_a sigma_b` to the action.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingField {
    pub n_sites: usize,
    pub ends: Vec<(usize, usize)>,
    pub strength: Vec<f64>,
    pub sign: Vec<i8>,
}

impl CouplingField {
    pub fn effective(&self, b: usize) -> f64 {
        self.strength[b] * self.sign[b] as f64
    }
}

pub type Seams = BTreeSet<usize>;

/// Bonds crossing the periodic seam of direction `dir`; flipping their
/// signs inserts an antiperiodic boundary.
pub fn seam_bonds(graph: &BondGraph, dir: usize) -> Seams {
    graph.bonds.iter().enumerate().filter(|(_, b)| b.wraps && b.dir == dir).map(|(k, _)| k).collect()
}

fn class_weight(class: BondClass, lambda: f64) -> f64 {
    match class {
        BondClass::SwitchOff => 1.0 - lambda,
        BondClass::SwitchOn => lambda,
        _ => 1.0,
    }
}

pub fn couplings_at(graph: &BondGraph, beta: f64, lambda: f64, seams: &Seams) -> Result<CouplingField> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} outside [0, 1]")));
    }
    if let Some(&k) = seams.iter().find(|&&k| k >= graph.bonds.len()) {
        return Err(Error::InvalidArgument(format!("seam bond {k} out of range")));
    }
    Ok(CouplingField {
        n_sites: graph.sites.len(),
        ends: graph.bonds.iter().map(|b| (b.a, b.b)).collect(),
        strength: graph.bonds.iter().map(|b| beta * class_weight(b.class, lambda)).collect(),
        sign: graph
            .bonds
            .iter()
            .enumerate()
            .map(|(k, b)| if seams.contains(&k) { -b.sign } else { b.sign })
            .collect(),
    })
}

/// S = -sum_b J_b s_b sigma_a sigma_b; the Boltzmann weight is exp(-S).
pub fn action(config: &SpinConfig, couplings: &CouplingField) -> Result<f64> {
    if config.len() != couplings.n_sites {
        return Err(Error::InvalidArgument(format!(
            "config has {} spins, coupling field {} sites",
            config.len(),
            couplings.n_sites
        )));
    }
    let s = &config.values;
    Ok(-couplings
        .ends
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| couplings.effective(k) * (s[a] * s[b]) as f64)
        .sum::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSchedule {
    pub lambdas: Vec<f64>,
    pub sweeps_per_step: usize,
    pub equilibration_sweeps: usize,
    pub direction: Direction,
}

impl ProtocolSchedule {
    pub fn linear(n_steps: usize, sweeps_per_step: usize, equilibration_sweeps: usize, direction: Direction) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be positive".into()));
        }
        let up = (0..=n_steps).map(|k| k as f64 / n_steps as f64);
        let lambdas = match direction {
            Direction::Forward => up.collect(),
            Direction::Reverse => up.rev().collect(),
        };
        Self::from_lambdas(lambdas, sweeps_per_step, equilibration_sweeps, direction)
    }

    pub fn from_lambdas(lambdas: Vec<f64>, sweeps_per_step: usize, equilibration_sweeps: usize, direction: Direction) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if lambdas.len() < 2 {
            return bad("a schedule needs at least one step");
        }
        if sweeps_per_step == 0 || equilibration_sweeps == 0 {
            return bad("sweep counts must be positive");
        }
        let (first, last) = match direction {
            Direction::Forward => (0.0, 1.0),
            Direction::Reverse => (1.0, 0.0),
        };
        if lambdas[0] != first || *lambdas.last().unwrap() != last {
            return bad("schedule must run between the lambda endpoints of its direction");
        }
        let monotone = lambdas.windows(2).all(|w| match direction {
            Direction::Forward => w[1] > w[0],
            Direction::Reverse => w[1] < w[0],
        });
        if !monotone {
            return bad("lambda grid must be strictly monotone");
        }
        Ok(ProtocolSchedule { lambdas, sweeps_per_step, equilibration_sweeps, direction })
    }

    pub fn n_steps(&self) -> usize {
        self.lambdas.len() - 1
    }

    /// The time-reversed protocol.
    pub fn reversed(&self) -> Self {
        ProtocolSchedule {
            lambdas: self.lambdas.iter().rev().copied().collect(),
            direction: match self.direction {
                Direction::Forward => Direction::Reverse,
                Direction::Reverse => Direction::Forward,
            },
            ..self.clone()
        }
    }
}

/// Fourier coefficients C_k(beta) of exp(beta cos(2 pi q / N)), k = 0..N-1.
/// The weight is even in q, so the coefficients are real.
pub fn clock_fourier_coeffs(n: usize, beta: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("clock model needs N >= 2, got {n}")));
    }
    let w: Vec<f64> = (0..n).map(|q| (beta * (2.0 * PI * q as f64 / n as f64).cos()).exp()).collect();
    Ok((0..n)
        .map(|k| {
            let s: f64 = (0..n).map(|q| w[q] * (2.0 * PI * ((k * q) % n) as f64 / n as f64).cos()).sum();
            s / n as f64
        })
        .collect())
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Modified Bessel function of the first kind of integer order, I_nu(beta).
///
/// The power series has positive terms and is used up to beta = 60 (or
/// further while nu^2 > beta); above that the Hankel asymptotic series.
pub fn bessel_weight(nu: i64, beta: f64) -> f64 {
    let m = nu.unsigned_abs();
    if beta < 0.0 {
        let v = bessel_weight(nu, -beta);
        return if m % 2 == 1 { -v } else { v };
    }
    if beta == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let mf = m as f64;
    if beta <= 60.0 || mf * mf > beta {
        let q = beta * beta / 4.0;
        let mut t = (mf * (beta / 2.0).ln() - ln_factorial(m)).exp();
        let mut sum = t;
        let mut k = 0.0;
        loop {
            t *= q / ((k + 1.0) * (k + 1.0 + mf));
            sum += t;
            k += 1.0;
            if t <= 1e-17 * sum && k > q.sqrt() {
                break;
            }
        }
        sum
    } else {
        let mu = 4.0 * mf * mf;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            let j = (2 * k - 1) as f64;
            let next = -term * (mu - j * j) / (k as f64 * 8.0 * beta);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        beta.exp() / (2.0 * PI * beta).sqrt() * sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_protocol_graph, build_replica_lattice, switch_pairs, ReplicaLatticeSpec};

    #[test]
    fn aligned_action() {
        let g = build_replica_lattice(&ReplicaLatticeSpec::new(2, 1, &[3, 4], 0)).unwrap();
        let c = couplings_at(&g, 0.37, 0.0, &Seams::new()).unwrap();
        let s = action(&SpinConfig::all_up(12), &c).unwrap();
        assert!((s + 0.37 * 24.0).abs() < 1e-12);
        let c0 = couplings_at(&g, 0.0, 0.0, &Seams::new()).unwrap();
        let mut rng = rand::rng();
        assert_eq!(action(&SpinConfig::random(12, &mut rng), &c0).unwrap(), 0.0);
    }

    #[test]
    fn one_flipped_spin_on_2x2() {
        // 2x2 torus: every site has two bonds to each of its two neighbours
        let g = build_replica_lattice(&ReplicaLatticeSpec::new(2, 1, &[2, 2], 0)).unwrap();
        let c = couplings_at(&g, 0.3, 0.0, &Seams::new()).unwrap();
        let mut cfg = SpinConfig::all_up(4);
        cfg.values[0] = -1;
        // four bonds touch site 0 and are frustrated, four are satisfied
        let expected = -0.3 * (4.0 - 4.0);
        assert!((action(&cfg, &c).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn size_mismatch() {
        let g = build_replica_lattice(&ReplicaLatticeSpec::new(2, 1, &[3, 3], 0)).unwrap();
        let c = couplings_at(&g, 0.3, 0.0, &Seams::new()).unwrap();
        assert!(action(&SpinConfig::all_up(8), &c).is_err());
    }

    #[test]
    fn lambda_rule() {
        let g = build_protocol_graph(&ReplicaLatticeSpec::new(2, 2, &[3, 3], 2)).unwrap();
        assert!(couplings_at(&g, 0.4, 1.2, &Seams::new()).is_err());
        assert!(couplings_at(&g, 0.4, -0.1, &Seams::new()).is_err());
        let c = couplings_at(&g, 0.4, 0.5, &Seams::new()).unwrap();
        for (off, on) in switch_pairs(&g) {
            assert_eq!(c.strength[off], 0.2);
            assert_eq!(c.strength[on], 0.2);
        }
        let c0 = couplings_at(&g, 0.4, 0.0, &Seams::new()).unwrap();
        let c1 = couplings_at(&g, 0.4, 1.0, &Seams::new()).unwrap();
        for (off, on) in switch_pairs(&g) {
            assert_eq!((c0.strength[off], c0.strength[on]), (0.4, 0.0));
            assert_eq!((c1.strength[off], c1.strength[on]), (0.0, 0.4));
        }
    }

    #[test]
    fn schedules() {
        let f = ProtocolSchedule::linear(4, 1, 10, Direction::Forward).unwrap();
        assert_eq!(f.lambdas, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let r = f.reversed();
        assert_eq!(r.direction, Direction::Reverse);
        assert_eq!(r.lambdas[0], 1.0);
        assert!(ProtocolSchedule::from_lambdas(vec![0.0, 0.5, 0.5, 1.0], 1, 1, Direction::Forward).is_err());
        assert!(ProtocolSchedule::from_lambdas(vec![0.0, 0.5], 1, 1, Direction::Forward).is_err());
        assert!(ProtocolSchedule::linear(0, 1, 1, Direction::Forward).is_err());
    }

    #[test]
    fn ising_coefficients() {
        for beta in [0.0, 0.3, 1.7] {
            let c = clock_fourier_coeffs(2, beta).unwrap();
            assert!((c[0] - beta.cosh()).abs() < 1e-14);
            assert!((c[1] - beta.sinh()).abs() < 1e-14);
        }
        let c = clock_fourier_coeffs(5, 0.0).unwrap();
        assert_eq!(c[0], 1.0);
        assert!(c[1..].iter().all(|x| x.abs() < 1e-15));
        assert!(clock_fourier_coeffs(1, 0.5).is_err());
    }

    #[test]
    fn bessel_basics() {
        assert_eq!(bessel_weight(0, 0.0), 1.0);
        assert_eq!(bessel_weight(3, 0.0), 0.0);
        for nu in 0..6 {
            assert_eq!(bessel_weight(nu, 2.5), bessel_weight(-nu, 2.5));
        }
        // continuity across the switch to the asymptotic series
        let (a, b) = (bessel_weight(1, 60.0), bessel_weight(1, 60.0 + 1e-9));
        assert!((b / a - 1.0).abs() < 1e-8);
    }
}
