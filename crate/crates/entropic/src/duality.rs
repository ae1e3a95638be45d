//! Kramers-Wannier coupling map and the constants relating direct and dual
//! partition functions.
//!
//! Every prefactor is stored as a pair of coefficients `(a, b)` meaning
//! `a ln 2 + b ln sinh(2 beta*)`, so nothing overflows on large lattices.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// beta* = -ln(tanh beta) / 2, evaluated as atanh(exp(-2 beta)).
pub fn dual_coupling(beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("dual coupling needs a finite beta > 0, got {beta}")));
    }
    Ok((-2.0 * beta).exp().atanh())
}

/// Self-dual point (1/2) ln(1 + sqrt 2).
pub fn self_dual_point() -> f64 {
    0.5 * std::f64::consts::SQRT_2.ln_1p()
}

/// Renyi entropy of the 2D dual spin model.
pub fn renyi_shift_2d(s_direct: f64) -> f64 {
    s_direct + LN_2
}

/// Renyi entropy of the 3D gauge model for a connected entangling surface of
/// `boundary_sites` sites.
pub fn renyi_shift_3d(s_direct: f64, boundary_sites: usize) -> Result<f64> {
    if boundary_sites == 0 {
        return Err(Error::InvalidArgument("entangling surface needs at least one site".into()));
    }
    Ok(s_direct + (boundary_sites as f64 - 1.0) * LN_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationKind {
    /// 2D Ising on a torus against its dual, before the sector sum.
    Ising2d,
    /// 3D Ising against the Z2 gauge theory.
    Gauge3d,
    /// 2D replica lattice against the dual with shared branch spins.
    Replica2d,
    /// 3D replica lattice against gauge links shared along the singularity.
    Replica3d,
    /// 3D replica lattice with shared spins against winding plaquettes.
    CentralPlaquette,
    /// Any sphere-like cell complex: V sites, E bonds, r redundant dual
    /// variables.
    Complex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityRelation {
    pub kind: RelationKind,
    pub dimension: usize,
    pub n_replicas: usize,
    pub volume: usize,
    pub n_g: usize,
    pub boundary_sites: usize,
    /// Coefficient of ln 2.
    pub ln2_coeff: f64,
    /// Coefficient of ln sinh(2 beta*).
    pub sinh_coeff: f64,
}

impl DualityRelation {
    /// Relation for the lattice forms: `volume` is |Lambda| of one replica,
    /// `n_g` the maximal-tree size of one replica of the gauge lattice and
    /// `boundary_sites` is |dA|. Arguments a relation does not use must be 0.
    pub fn new(kind: RelationKind, n: usize, volume: usize, n_g: usize, boundary_sites: usize) -> Result<Self> {
        let mismatch = |what: &str| Err(Error::InvalidArgument(format!("{kind:?}: {what}")));
        if n == 0 || volume == 0 {
            return mismatch("needs n >= 1 and a nonempty lattice");
        }
        let (nf, v, g, b) = (n as f64, volume as f64, n_g as f64, boundary_sites as f64);
        let (dimension, ln2, sinh) = match kind {
            RelationKind::Ising2d => {
                if n != 1 || n_g != 0 || boundary_sites != 0 {
                    return mismatch("single replica only, no gauge tree or boundary");
                }
                (2, -1.0, -v)
            }
            RelationKind::Replica2d => {
                if n_g != 0 {
                    return mismatch("2D relations have no gauge tree");
                }
                (2, -1.0, -nf * v)
            }
            RelationKind::Gauge3d => {
                if n != 1 || boundary_sites != 0 {
                    return mismatch("single replica only, no boundary");
                }
                if n_g >= volume {
                    return mismatch("maximal tree must be smaller than the lattice");
                }
                (3, -v / 2.0 - g, -1.5 * v)
            }
            RelationKind::Replica3d => {
                if n > 1 && boundary_sites == 0 {
                    return mismatch("replicas need an entangling surface");
                }
                let corr = if n > 1 { (nf - 1.0) * (b - 1.0) } else { 0.0 };
                (3, corr - v * nf / 2.0 - g * nf, -1.5 * v * nf)
            }
            RelationKind::CentralPlaquette => {
                if n > 1 && boundary_sites == 0 {
                    return mismatch("replicas need an entangling surface");
                }
                (3, 0.5 * (nf - 1.0) * b - 0.5 * v * nf - g * nf, -1.5 * v * nf + 0.5 * (nf - 1.0) * b)
            }
            RelationKind::Complex => return mismatch("use DualityRelation::complex"),
        };
        Ok(DualityRelation {
            kind,
            dimension,
            n_replicas: n,
            volume,
            n_g,
            boundary_sites,
            ln2_coeff: ln2,
            sinh_coeff: sinh,
        })
    }

    /// Z(beta) = 2^{V - E/2 - r} sinh(2 beta*)^{-E/2} Z*(beta*) for a spin
    /// model on a cell complex with trivial first homology, where r counts
    /// the global redundancy of the dual variables (1 for a dual spin model,
    /// the maximal-tree size for a gauge dual).
    pub fn complex(dimension: usize, n: usize, sites: usize, bonds: usize, redundancy: usize) -> Self {
        DualityRelation {
            kind: RelationKind::Complex,
            dimension,
            n_replicas: n,
            volume: sites,
            n_g: redundancy,
            boundary_sites: 0,
            ln2_coeff: sites as f64 - bonds as f64 / 2.0 - redundancy as f64,
            sinh_coeff: -(bonds as f64) / 2.0,
        }
    }

    /// Natural log of the constant in Z(beta) = constant * Z*(beta*).
    pub fn ln_prefactor(&self, beta: f64) -> Result<f64> {
        let bs = dual_coupling(beta)?;
        Ok(self.ln2_coeff * LN_2 + self.sinh_coeff * (2.0 * bs).sinh().ln())
    }

    /// S*_n - S_n implied by the relation at direct coupling `beta`.
    pub fn entropy_shift(&self, beta: f64) -> f64 {
        match self.kind {
            RelationKind::Ising2d | RelationKind::Replica2d => LN_2,
            RelationKind::Gauge3d => 0.0,
            RelationKind::Replica3d => (self.boundary_sites as f64 - 1.0) * LN_2,
            RelationKind::CentralPlaquette => -0.5 * self.boundary_sites as f64 * ((2.0 * beta).sinh() / 2.0).ln(),
            RelationKind::Complex => f64::NAN,
        }
    }
}

/// ln of the multiplicative constant of `relation` at direct coupling `beta`.
pub fn partition_prefactor(relation: &DualityRelation, beta: f64) -> Result<f64> {
    relation.ln_prefactor(beta)
}

/// Entropy shift implied by two relations for Z_n and Z: with
/// Z_n = c_n Z*_n and Z = c_1 Z*, S*_n - S_n = ln(c_n / c_1^n) / (n - 1).
pub fn shift_from_prefactors(replica: &DualityRelation, single: &DualityRelation, beta: f64) -> Result<f64> {
    let n = replica.n_replicas;
    if n < 2 || single.n_replicas != 1 {
        return Err(Error::InvalidArgument("need an n >= 2 relation and a single-replica relation".into()));
    }
    let (cn, c1) = (replica.ln_prefactor(beta)?, single.ln_prefactor(beta)?);
    Ok((cn - n as f64 * c1) / (n as f64 - 1.0))
}
