use std::f64::consts::LN_2;

use entropic::duality::{dual_coupling, renyi_shift_3d, DualityRelation};
use entropic::lattice::{build_gauge_replica, build_replica_lattice, Boundary, GeometryVariant, ReplicaLatticeSpec, TreeStrategy};
use entropic::model::Seams;
use entropic::oracle::{enumerate_gauge_z, enumerate_spin_z, exact_gauge_renyi, exact_renyi};

const BETAS: [f64; 3] = [0.2, 0.44, 0.8];

fn block(ext: [usize; 3], n: usize, l: usize) -> ReplicaLatticeSpec {
    ReplicaLatticeSpec::new(3, n, &ext, l).with_boundaries(&[Boundary::Free; 3])
}

#[test]
fn gauge_partition_function_does_not_depend_on_the_tree() {
    for spec in [block([2, 2, 3], 1, 0), block([2, 3, 2], 2, 1)] {
        let g = build_gauge_replica(&spec).unwrap();
        let n_sites = g.n_g() + g.components();
        let z0 = enumerate_gauge_z(&g, 0.5).unwrap().log_z;
        for strategy in [TreeStrategy::DepthFirst { root: 0 }, TreeStrategy::BreadthFirst { root: n_sites - 1 }, TreeStrategy::DepthFirst { root: n_sites / 2 }] {
            let alt = g.clone().with_tree(strategy).unwrap();
            assert!(alt.tree_is_spanning_forest());
            let z = enumerate_gauge_z(&alt, 0.5).unwrap().log_z;
            assert!((z - z0).abs() <= 1e-12 * z0.abs(), "{strategy:?}: {z} vs {z0}");
        }
    }
}

fn check_pair(spin: &ReplicaLatticeSpec, gauge: &ReplicaLatticeSpec) {
    let g = build_replica_lattice(spin).unwrap();
    let d = build_gauge_replica(gauge).unwrap();
    let rel = DualityRelation::complex(3, spin.n_replicas, g.n_sites(), g.n_bonds(), d.n_g());
    for beta in BETAS {
        let z = enumerate_spin_z(&g, beta, &Seams::new()).unwrap().log_z;
        let zd = enumerate_gauge_z(&d, dual_coupling(beta).unwrap()).unwrap().log_z + rel.ln_prefactor(beta).unwrap();
        assert!((zd - z).abs() <= 1e-10 * z.abs(), "{:?} beta={beta}: {zd} vs {z}", spin.variant);
    }
}

#[test]
fn replica_lattice_against_gauge_with_shared_links() {
    let s = block([2, 3, 2], 2, 1);
    check_pair(&s, &s);
}

#[test]
fn enhanced_vertex_against_central_plaquette() {
    let s = block([2, 3, 2], 2, 1);
    check_pair(&s.clone().with_variant(GeometryVariant::EnhancedVertex), &s.with_variant(GeometryVariant::CentralPlaquette));
}

#[test]
fn gauge_renyi_entropy_is_shifted_by_the_boundary_count() {
    for (ext, boundary) in [([2, 3, 2], 2), ([2, 2, 3], 3)] {
        let spec = block(ext, 2, 1);
        assert_eq!(spec.boundary_sites(), boundary);
        let one = spec.clone().with_replicas(1);
        let s = exact_renyi(&build_replica_lattice(&spec).unwrap(), &build_replica_lattice(&one).unwrap(), 0.3).unwrap();
        let sg = exact_gauge_renyi(
            &build_gauge_replica(&spec).unwrap(),
            &build_gauge_replica(&one).unwrap(),
            dual_coupling(0.3).unwrap(),
        )
        .unwrap();
        assert!((sg - s - (boundary as f64 - 1.0) * LN_2).abs() < 1e-10);
        assert!((renyi_shift_3d(s, boundary).unwrap() - sg).abs() < 1e-10);
    }
}

#[test]
fn frozen_dual_couplings() {
    // Computed with 30-digit arithmetic: atanh(exp(-2 beta)).
    assert!((dual_coupling(0.226102).unwrap() - 0.751_804_682_856_369_4).abs() < 1e-14);
    assert!((entropic::model::bessel_weight(1, 2.0) - 1.590_636_854_637_329).abs() < 1e-14);
    assert!((entropic::model::bessel_weight(0, 0.5) - 1.063_483_370_741_323_5).abs() < 1e-14);
    assert!((entropic::model::bessel_weight(3, 70.0) / 1.126_260_567_137_313e29 - 1.0).abs() < 1e-12);
}
