//! Enumeration checked against transfer-matrix values computed in 30-digit
//! arithmetic.

use entropic::lattice::{build_replica_lattice, Boundary, ReplicaLatticeSpec};
use entropic::model::{clock_fourier_coeffs, Seams};
use entropic::oracle::{enumerate_sectors, enumerate_spin_z};

fn torus(nt: usize, ns: usize) -> entropic::lattice::BondGraph {
    build_replica_lattice(&ReplicaLatticeSpec::new(2, 1, &[nt, ns], 0)).unwrap()
}

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol * b.abs(), "{a} vs {b}");
}

#[test]
fn torus_matches_transfer_matrix() {
    for (nt, ns, beta, ln_z) in [
        (2, 2, 0.3, 3.533_037_848_289_407),
        (2, 5, 0.3, 8.369_674_432_670_932),
        (3, 4, 0.44, 11.807_725_945_372_807),
    ] {
        close(enumerate_spin_z(&torus(nt, ns), beta, &Seams::new()).unwrap().log_z, ln_z, 1e-12);
    }
}

#[test]
fn free_strip_matches_transfer_matrix() {
    for ext in [[2, 6], [6, 2]] {
        let g = build_replica_lattice(&ReplicaLatticeSpec::new(2, 1, &ext, 0).with_boundaries(&[Boundary::Free; 2])).unwrap();
        close(enumerate_spin_z(&g, 0.3, &Seams::new()).unwrap().log_z, 9.065_435_988_567_02, 1e-12);
    }
}

#[test]
fn antiperiodic_sector_is_suppressed_in_the_ordered_phase() {
    let sector = |beta: f64| {
        let r = enumerate_sectors(&torus(4, 4), beta).unwrap();
        let get = |l: &str| r.sectors.iter().find(|s| s.label == l).unwrap().log_z;
        (get("pp"), get("ap") - get("pp"))
    };
    let (pp, ratio) = sector(0.8);
    close(pp, 26.322_173_256_960_84, 1e-12);
    close(ratio, -4.579_255_457_491_297, 1e-10);
    close(sector(0.2).1, -0.019_624_475_117_219_775, 1e-9);
}

#[test]
fn clock_coefficients_four_states() {
    let c = clock_fourier_coeffs(4, 0.7).unwrap();
    let want = [1.127_584_502_815_471_5, 0.379_291_850_919_766_75, 0.127_584_502_815_471_5, 0.379_291_850_919_766_75];
    for (a, b) in c.iter().zip(want) {
        close(*a, b, 1e-14);
    }
}
