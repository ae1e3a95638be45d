//! Replica lattices joined along a slab cut.
//!
//! Sites of an n-sheeted lattice are indexed replica-major, then by
//! Euclidean time, then by the spatial coordinates. The cut lives on the
//! temporal bonds that leave the slice [`ReplicaLatticeSpec::tau_cut`]:
//! for sites of region A those bonds run from replica r to r + 1 (mod n),
//! for sites of B they close inside their own replica.
//!
//! Direction 0 is Euclidean time, direction 1 is the slab direction and
//! direction 2 (in three dimensions) is transverse to the slab.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    Antiperiodic,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryVariant {
    StandardCut,
    EnhancedVertex,
    CentralPlaquette,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BondClass {
    Spatial,
    TemporalIntra,
    TemporalInter,
    SwitchOff,
    SwitchOn,
}

impl BondClass {
    pub fn as_str(self) -> &'static str {
        match self {
            BondClass::Spatial => "spatial",
            BondClass::TemporalIntra => "temporal-intra",
            BondClass::TemporalInter => "temporal-inter",
            BondClass::SwitchOff => "switch-off",
            BondClass::SwitchOn => "switch-on",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaLatticeSpec {
    pub dimension: usize,
    pub n_replicas: usize,
    /// Sites per direction in one replica: `[N_tau, N_s]` or `[N_tau, N_s, N_s2]`.
    pub extents: Vec<usize>,
    pub slab_length: usize,
    pub cut_offset: usize,
    pub variant: GeometryVariant,
    pub boundaries: Vec<Boundary>,
}

impl ReplicaLatticeSpec {
    /// Periodic lattice, standard cut, region A starting at x = 0.
    pub fn new(dimension: usize, n_replicas: usize, extents: &[usize], slab_length: usize) -> Self {
        ReplicaLatticeSpec {
            dimension,
            n_replicas,
            extents: extents.to_vec(),
            slab_length,
            cut_offset: 0,
            variant: GeometryVariant::StandardCut,
            boundaries: vec![Boundary::Periodic; dimension],
        }
    }

    pub fn with_boundaries(mut self, boundaries: &[Boundary]) -> Self {
        self.boundaries = boundaries.to_vec();
        self
    }

    pub fn with_variant(mut self, variant: GeometryVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_offset(mut self, cut_offset: usize) -> Self {
        self.cut_offset = cut_offset;
        self
    }

    pub fn with_slab_length(mut self, slab_length: usize) -> Self {
        self.slab_length = slab_length;
        self
    }

    pub fn with_replicas(mut self, n_replicas: usize) -> Self {
        self.n_replicas = n_replicas;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Geometry(m));
        if self.dimension != 2 && self.dimension != 3 {
            return bad(format!("dimension must be 2 or 3, got {}", self.dimension));
        }
        if self.extents.len() != self.dimension || self.boundaries.len() != self.dimension {
            return bad(format!(
                "need {} extents and boundary conditions, got {} and {}",
                self.dimension,
                self.extents.len(),
                self.boundaries.len()
            ));
        }
        if self.extents.iter().any(|&e| e == 0) {
            return bad("extents must be positive".into());
        }
        if self.n_replicas == 0 {
            return bad("n_replicas must be positive".into());
        }
        let ns = self.extents[1];
        if self.slab_length > ns {
            return bad(format!("slab length {} exceeds N_s = {}", self.slab_length, ns));
        }
        match self.boundaries[1] {
            Boundary::Free => {
                if self.cut_offset + self.slab_length > ns {
                    return bad(format!(
                        "l + x0 = {} exceeds N_s = {} with free boundaries",
                        self.cut_offset + self.slab_length,
                        ns
                    ));
                }
            }
            _ => {
                if self.cut_offset >= ns {
                    return bad(format!("cut offset {} out of range 0..{}", self.cut_offset, ns));
                }
            }
        }
        if self.slab_length > 0 && self.extents[0] < 2 {
            return bad("a cut needs N_tau >= 2".into());
        }
        if self.variant == GeometryVariant::CentralPlaquette && self.dimension != 3 {
            return bad("central-plaquette geometry exists only in three dimensions".into());
        }
        Ok(())
    }

    /// Sites of one replica, |Lambda|.
    pub fn volume(&self) -> usize {
        self.extents.iter().product()
    }

    /// The temporal bonds leaving this slice carry the cut.
    pub fn tau_cut(&self) -> usize {
        match self.boundaries[0] {
            Boundary::Free => (self.extents[0] / 2).max(1) - 1,
            _ => self.extents[0] - 1,
        }
    }

    pub fn in_region_a(&self, x: usize) -> bool {
        let ns = self.extents[1];
        match self.boundaries[1] {
            Boundary::Free => x >= self.cut_offset && x < self.cut_offset + self.slab_length,
            _ => (x + ns - self.cut_offset) % ns < self.slab_length,
        }
    }

    pub fn transverse_extent(&self) -> usize {
        if self.dimension == 3 {
            self.extents[2]
        } else {
            1
        }
    }

    /// Number of end points of the slab in the slab direction.
    pub fn entangling_ends(&self) -> usize {
        let (l, ns, x0) = (self.slab_length, self.extents[1], self.cut_offset);
        if l == 0 {
            return 0;
        }
        match self.boundaries[1] {
            Boundary::Free => (x0 > 0) as usize + (x0 + l < ns) as usize,
            _ => {
                if l == ns {
                    0
                } else {
                    2
                }
            }
        }
    }

    /// |dA|: entangling end points times the transverse extent.
    pub fn boundary_sites(&self) -> usize {
        self.entangling_ends() * self.transverse_extent()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub replica: usize,
    pub coords: [usize; 3],
    pub shared: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub class: BondClass,
    pub sign: i8,
    pub dir: usize,
    /// Crosses the periodic seam of direction `dir`.
    pub wraps: bool,
    /// Replica and base-lattice index of the bond's origin.
    pub replica: usize,
    pub base: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BondGraph {
    pub spec: ReplicaLatticeSpec,
    pub sites: Vec<Site>,
    pub bonds: Vec<Bond>,
    pub branch_sites: Vec<usize>,
    pub boundary_sites: usize,
}

impl BondGraph {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.sites.len()];
        for b in &self.bonds {
            deg[b.a] += 1;
            deg[b.b] += 1;
        }
        deg
    }

    pub fn class_count(&self, class: BondClass) -> usize {
        self.bonds.iter().filter(|b| b.class == class).count()
    }

    /// Bond list with endpoints ordered and the list sorted.
    pub fn canonical_bonds(&self) -> Vec<(usize, usize, BondClass, i8)> {
        let mut v: Vec<_> = self
            .bonds
            .iter()
            .map(|b| (b.a.min(b.b), b.a.max(b.b), b.class, b.sign))
            .collect();
        v.sort();
        v
    }

    pub fn geometry_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.sites.len() as u64).to_le_bytes());
        for (a, b, c, s) in self.canonical_bonds() {
            h.update((a as u64).to_le_bytes());
            h.update((b as u64).to_le_bytes());
            h.update([c as u8, s as u8]);
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// `site_a,site_b,class,sign`, one bond per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("site_a,site_b,class,sign\n");
        for b in &self.bonds {
            out.push_str(&format!("{},{},{},{}\n", b.a, b.b, b.class.as_str(), b.sign));
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
struct Base {
    dim: usize,
    ext: [usize; 3],
    bc: [Boundary; 3],
}

impl Base {
    fn from_spec(spec: &ReplicaLatticeSpec) -> Self {
        let mut ext = [1; 3];
        let mut bc = [Boundary::Free; 3];
        for d in 0..spec.dimension {
            ext[d] = spec.extents[d];
            bc[d] = spec.boundaries[d];
        }
        Base { dim: spec.dimension, ext, bc }
    }

    fn len(&self) -> usize {
        self.ext[0] * self.ext[1] * self.ext[2]
    }

    fn index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.ext[1] + c[1]) * self.ext[2] + c[2]
    }

    fn coords(&self, i: usize) -> [usize; 3] {
        [i / (self.ext[1] * self.ext[2]), (i / self.ext[2]) % self.ext[1], i % self.ext[2]]
    }

    fn forward(&self, c: [usize; 3], d: usize) -> Option<([usize; 3], bool)> {
        if d >= self.dim {
            return None;
        }
        let mut q = c;
        if c[d] + 1 < self.ext[d] {
            q[d] += 1;
            Some((q, false))
        } else if self.bc[d] != Boundary::Free && self.ext[d] >= 2 {
            q[d] = 0;
            Some((q, true))
        } else {
            None
        }
    }

    fn backward(&self, c: [usize; 3], d: usize) -> Option<[usize; 3]> {
        if d >= self.dim {
            return None;
        }
        let mut q = c;
        if c[d] > 0 {
            q[d] -= 1;
            Some(q)
        } else if self.bc[d] != Boundary::Free && self.ext[d] >= 2 {
            q[d] = self.ext[d] - 1;
            Some(q)
        } else {
            None
        }
    }
}

fn is_cut(spec: &ReplicaLatticeSpec, c: [usize; 3], d: usize) -> bool {
    d == 0 && spec.slab_length > 0 && c[0] == spec.tau_cut() && spec.in_region_a(c[1])
}

/// Builds the spin-side bond graph of `spec`.
///
/// `EnhancedVertex` lattices are constructed as the cell dual of the
/// standard-cut lattice with the same spec: in 2D the sites are the faces
/// of the cut lattice, in 3D its cubes. Sites on the conical singularity
/// are stored once, flagged `shared`.
pub fn build_replica_lattice(spec: &ReplicaLatticeSpec) -> Result<BondGraph> {
    spec.validate()?;
    match spec.variant {
        GeometryVariant::StandardCut => Ok(build_standard(spec, None)),
        GeometryVariant::EnhancedVertex => enhanced_vertex(spec),
        GeometryVariant::CentralPlaquette => Err(Error::Unsupported(
            "central-plaquette geometry is gauge-side only; use build_gauge_replica".into(),
        )),
    }
}

/// Standard-cut lattice at slab length `l + 1` whose last column of A is
/// being moved out: its cut bonds become `SwitchOff`, and the intra-replica
/// bonds that replace them at slab length `l` are added as `SwitchOn`.
pub fn build_protocol_graph(spec: &ReplicaLatticeSpec) -> Result<BondGraph> {
    spec.validate()?;
    if spec.variant != GeometryVariant::StandardCut {
        return Err(Error::Unsupported("protocol graphs use the standard cut".into()));
    }
    if spec.slab_length == 0 {
        return Err(Error::Geometry("protocol start needs slab length >= 1".into()));
    }
    let ns = spec.extents[1];
    let col = match spec.boundaries[1] {
        Boundary::Free => spec.cut_offset + spec.slab_length - 1,
        _ => (spec.cut_offset + spec.slab_length - 1) % ns,
    };
    Ok(build_standard(spec, Some(col)))
}

fn build_standard(spec: &ReplicaLatticeSpec, moving: Option<usize>) -> BondGraph {
    let base = Base::from_spec(spec);
    let n = spec.n_replicas;
    let vol = base.len();
    let mut sites = Vec::with_capacity(n * vol);
    for r in 0..n {
        for i in 0..vol {
            sites.push(Site { replica: r, coords: base.coords(i), shared: false });
        }
    }
    let mut bonds = Vec::new();
    for r in 0..n {
        for i in 0..vol {
            let c = base.coords(i);
            for d in 0..base.dim {
                let Some((q, wraps)) = base.forward(c, d) else { continue };
                let cut = is_cut(spec, c, d);
                let r2 = if cut { (r + 1) % n } else { r };
                let sign = if wraps && base.bc[d] == Boundary::Antiperiodic { -1 } else { 1 };
                let mut class = match (d, cut) {
                    (0, true) => BondClass::TemporalInter,
                    (0, false) => BondClass::TemporalIntra,
                    _ => BondClass::Spatial,
                };
                let switching = cut && moving == Some(c[1]);
                if switching {
                    class = BondClass::SwitchOff;
                }
                let bond = Bond {
                    a: r * vol + i,
                    b: r2 * vol + base.index(q),
                    class,
                    sign,
                    dir: d,
                    wraps,
                    replica: r,
                    base: i,
                };
                bonds.push(bond);
                if switching {
                    bonds.push(Bond {
                        b: r * vol + base.index(q),
                        class: BondClass::SwitchOn,
                        ..bond
                    });
                }
            }
        }
    }
    BondGraph {
        spec: spec.clone(),
        sites,
        bonds,
        branch_sites: Vec::new(),
        boundary_sites: spec.boundary_sites(),
    }
}

/// Pairs `(switch_off, switch_on)` of bond indices, matched by replica and
/// position.
pub fn switch_pairs(graph: &BondGraph) -> Vec<(usize, usize)> {
    let mut on: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (k, b) in graph.bonds.iter().enumerate() {
        if b.class == BondClass::SwitchOn {
            on.insert((b.replica, b.base), k);
        }
    }
    graph
        .bonds
        .iter()
        .enumerate()
        .filter(|(_, b)| b.class == BondClass::SwitchOff)
        .filter_map(|(k, b)| on.get(&(b.replica, b.base)).map(|&j| (k, j)))
        .collect()
}

/// The graph at the end of the protocol: switched-off bonds removed,
/// switched-on bonds turned into ordinary intra-replica bonds.
pub fn apply_switches(graph: &BondGraph) -> BondGraph {
    let mut g = graph.clone();
    g.bonds.retain(|b| b.class != BondClass::SwitchOff);
    for b in &mut g.bonds {
        if b.class == BondClass::SwitchOn {
            b.class = BondClass::TemporalIntra;
        }
    }
    g.spec.slab_length -= 1;
    g.boundary_sites = g.spec.boundary_sites();
    g
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub edges: Vec<usize>,
    pub vertices: Vec<usize>,
    /// Boundary visits one base site in more than one replica.
    pub winding: bool,
}

/// Cell structure of a standard-cut lattice: its bonds are the edges, faces
/// are traced on the replica manifold (faces around the conical singularity
/// wind n times), and in three dimensions cubes are the 3-cells, with the
/// n copies of a cube pierced by the singularity merged into one cell.
#[derive(Clone, Debug)]
pub struct CellComplex {
    pub graph: BondGraph,
    pub faces: Vec<Face>,
    /// The two faces on either side of each edge (2D only).
    pub edge_faces: Vec<[usize; 2]>,
    pub n_cells: usize,
    /// The two cells on either side of each face (3D only).
    pub face_cells: Vec<[usize; 2]>,
    pub cell_sites: Vec<Site>,
    pub outer_cell: Option<usize>,
}

impl CellComplex {
    pub fn build(spec: &ReplicaLatticeSpec) -> Result<Self> {
        let mut spec = spec.clone();
        spec.variant = GeometryVariant::StandardCut;
        spec.validate()?;
        if spec.boundaries.contains(&Boundary::Antiperiodic) {
            return Err(Error::Unsupported(
                "cell duals of antiperiodic lattices; use seams in the oracle instead".into(),
            ));
        }
        let graph = build_standard(&spec, None);
        if spec.dimension == 2 {
            Ok(complex_2d(graph))
        } else {
            Ok(complex_3d(graph))
        }
    }

    pub fn euler_characteristic(&self) -> i64 {
        let v = self.graph.sites.len() as i64;
        let e = self.graph.bonds.len() as i64;
        let f = self.faces.len() as i64;
        if self.graph.spec.dimension == 2 {
            v - e + f
        } else {
            v - e + f - self.n_cells as i64
        }
    }
}

fn winding(graph: &BondGraph, vertices: &[usize]) -> bool {
    if graph.spec.n_replicas < 2 {
        return false;
    }
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    for &v in vertices {
        let s = graph.sites[v];
        let base = s.coords;
        let key = (base[0] * 1_000_003 + base[1]) * 1_000_003 + base[2];
        if let Some(&r) = seen.get(&key) {
            if r != s.replica {
                return true;
            }
        } else {
            seen.insert(key, s.replica);
        }
    }
    false
}

// Faces of a 2D lattice traced with the rotation system inherited from the
// plane: at every site the out-going darts are ordered +x, +tau, -x, -tau.
fn complex_2d(graph: BondGraph) -> CellComplex {
    const NONE: usize = usize::MAX;
    let nv = graph.sites.len();
    let mut slot = vec![[NONE; 4]; nv];
    for (b, bond) in graph.bonds.iter().enumerate() {
        let (fs, bs) = if bond.dir == 1 { (0, 2) } else { (1, 3) };
        slot[bond.a][fs] = 2 * b;
        slot[bond.b][bs] = 2 * b + 1;
    }
    let head = |d: usize| {
        let bond = &graph.bonds[d / 2];
        if d % 2 == 0 {
            bond.b
        } else {
            bond.a
        }
    };
    let tail = |d: usize| head(d ^ 1);
    let next = |d: usize| {
        let v = head(d);
        let rev = d ^ 1;
        let k = slot[v].iter().position(|&x| x == rev).expect("dart in rotation");
        (1..=4).map(|s| slot[v][(k + s) % 4]).find(|&x| x != NONE).unwrap()
    };
    let n_darts = 2 * graph.bonds.len();
    let mut face_of = vec![NONE; n_darts];
    let mut faces = Vec::new();
    for start in 0..n_darts {
        if face_of[start] != NONE {
            continue;
        }
        let id = faces.len();
        let (mut edges, mut vertices) = (Vec::new(), Vec::new());
        let mut d = start;
        loop {
            face_of[d] = id;
            edges.push(d / 2);
            vertices.push(tail(d));
            d = next(d);
            if d == start {
                break;
            }
        }
        let w = winding(&graph, &vertices);
        faces.push(Face { edges, vertices, winding: w });
    }
    let edge_faces = (0..graph.bonds.len()).map(|b| [face_of[2 * b], face_of[2 * b + 1]]).collect();
    CellComplex {
        graph,
        faces,
        edge_faces,
        n_cells: 0,
        face_cells: Vec::new(),
        cell_sites: Vec::new(),
        outer_cell: None,
    }
}

fn complex_3d(graph: BondGraph) -> CellComplex {
    let spec = graph.spec.clone();
    let base = Base::from_spec(&spec);
    let n = spec.n_replicas;
    let vol = base.len();
    let dim = 3;
    const NONE: usize = usize::MAX;
    let mut bond_at = vec![NONE; n * vol * dim];
    for (k, b) in graph.bonds.iter().enumerate() {
        bond_at[(b.replica * vol + b.base) * dim + b.dir] = k;
    }
    let cut_shift = |c: [usize; 3], d: usize| usize::from(is_cut(&spec, c, d));
    // one step of the lifted walk; returns the new corner, context and bond
    let fwd = |c: [usize; 3], r: usize, d: usize| {
        let (q, _) = base.forward(c, d).unwrap();
        let k = bond_at[(r * vol + base.index(c)) * dim + d];
        (q, (r + cut_shift(c, d)) % n, k)
    };
    let bwd = |c: [usize; 3], r: usize, d: usize| {
        let p = base.backward(c, d).unwrap();
        let r0 = (r + n - cut_shift(p, d)) % n;
        let k = bond_at[(r0 * vol + base.index(p)) * dim + d];
        (p, r0, k)
    };
    let planes = [(0usize, 1usize), (0, 2), (1, 2)];
    let has_plaquette =
        |c: [usize; 3], mu: usize, nu: usize| base.forward(c, mu).is_some() && base.forward(c, nu).is_some();

    let mut faces = Vec::new();
    // (plaquette key, start context) -> face id
    let mut face_id: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    let mut face_meta = Vec::new();
    let mut plaquette_winds: BTreeMap<(usize, usize), bool> = BTreeMap::new();
    for i in 0..vol {
        let c = base.coords(i);
        for (pi, &(mu, nu)) in planes.iter().enumerate() {
            if !has_plaquette(c, mu, nu) {
                continue;
            }
            for r in 0..n {
                if face_id.contains_key(&(i, pi, r)) {
                    continue;
                }
                let id = faces.len();
                let (mut edges, mut vertices) = (Vec::new(), Vec::new());
                let mut ctx = r;
                let mut loops = 0;
                loop {
                    face_id.insert((i, pi, ctx), id);
                    let (c1, r1, k1) = fwd(c, ctx, mu);
                    let (c2, r2, k2) = fwd(c1, r1, nu);
                    let (c3, r3, k3) = bwd(c2, r2, mu);
                    let (_, r4, k4) = bwd(c3, r3, nu);
                    vertices.extend([ctx * vol + i, r1 * vol + base.index(c1), r2 * vol + base.index(c2), r3 * vol + base.index(c3)]);
                    edges.extend([k1, k2, k3, k4]);
                    loops += 1;
                    ctx = r4;
                    if ctx == r {
                        break;
                    }
                }
                plaquette_winds.insert((i, pi), loops > 1);
                faces.push(Face { edges, vertices, winding: loops > 1 });
                face_meta.push((i, pi, r));
            }
        }
    }

    let has_cube = |c: [usize; 3]| (0..3).all(|d| base.forward(c, d).is_some());
    let cube_merged = |c: [usize; 3]| {
        planes.iter().enumerate().any(|(pi, &(mu, nu))| {
            let lam = 3 - mu - nu;
            let top = base.forward(c, lam).unwrap().0;
            plaquette_winds[&(base.index(c), pi)] || plaquette_winds[&(base.index(top), pi)]
        })
    };
    let mut cell_of = vec![NONE; n * vol];
    let mut cell_sites = Vec::new();
    for r in 0..n {
        for i in 0..vol {
            let c = base.coords(i);
            if !has_cube(c) {
                continue;
            }
            if cube_merged(c) && r > 0 {
                cell_of[r * vol + i] = cell_of[i];
                continue;
            }
            cell_of[r * vol + i] = cell_sites.len();
            cell_sites.push(Site { replica: r, coords: c, shared: cube_merged(c) });
        }
    }
    let mut outer = None;
    let mut face_cells = Vec::with_capacity(faces.len());
    for &(i, pi, r) in &face_meta {
        let c = base.coords(i);
        let (mu, nu) = planes[pi];
        let lam = 3 - mu - nu;
        let mut side = |cube: Option<([usize; 3], usize)>| match cube {
            Some((q, rq)) if has_cube(q) => cell_of[rq * vol + base.index(q)],
            _ => *outer.get_or_insert_with(|| {
                cell_sites.push(Site { replica: 0, coords: [0; 3], shared: true });
                cell_sites.len() - 1
            }),
        };
        let up = side(Some((c, r)));
        let below = base.backward(c, lam).map(|p| (p, (r + n - cut_shift(p, lam)) % n));
        let down = side(below);
        face_cells.push([down, up]);
    }
    CellComplex {
        graph,
        faces,
        edge_faces: Vec::new(),
        n_cells: cell_sites.len(),
        face_cells,
        cell_sites,
        outer_cell: outer,
    }
}

fn enhanced_vertex(spec: &ReplicaLatticeSpec) -> Result<BondGraph> {
    let cx = CellComplex::build(spec)?;
    let n = spec.n_replicas;
    let g = &cx.graph;
    // dual sites with their anchors, then dual bonds (one per direct edge or face)
    let (mut sites, ends, dirs): (Vec<Site>, Vec<[usize; 2]>, Vec<usize>) = if spec.dimension == 2 {
        let sites = cx
            .faces
            .iter()
            .map(|f| {
                let v = *f.vertices.iter().min().unwrap();
                let s = g.sites[v];
                Site { replica: s.replica, coords: s.coords, shared: f.winding }
            })
            .collect();
        let dirs = g.bonds.iter().map(|b| 1 - b.dir).collect();
        (sites, cx.edge_faces.clone(), dirs)
    } else {
        let planes = [(0usize, 1usize), (0, 2), (1, 2)];
        let dirs = cx
            .faces
            .iter()
            .map(|f| {
                let mut used = [false; 3];
                for &e in &f.edges {
                    used[g.bonds[e].dir] = true;
                }
                let (pi, _) = planes.iter().enumerate().find(|(_, &(a, b))| used[a] && used[b]).unwrap();
                2 - pi
            })
            .collect();
        (cx.cell_sites.clone(), cx.face_cells.clone(), dirs)
    };
    let is_branch: Vec<bool> = if spec.dimension == 2 {
        cx.faces.iter().map(|f| f.winding && f.edges.len() == 4 * n).collect()
    } else {
        let mut v: Vec<bool> = sites.iter().map(|s| s.shared).collect();
        if let Some(o) = cx.outer_cell {
            v[o] = false;
        }
        v
    };
    let mut order: Vec<usize> = (0..sites.len()).collect();
    let outer = cx.outer_cell;
    order.sort_by_key(|&k| {
        let s = sites[k];
        (Some(k) == outer, s.replica, s.coords)
    });
    let mut new_id = vec![0; sites.len()];
    for (pos, &k) in order.iter().enumerate() {
        new_id[k] = pos;
    }
    sites = order.iter().map(|&k| sites[k]).collect();
    let mut bonds = Vec::with_capacity(ends.len());
    for (k, &[x, y]) in ends.iter().enumerate() {
        let (a, b) = (new_id[x], new_id[y]);
        let (sa, sb) = (sites[a], sites[b]);
        let class = if dirs[k] != 0 {
            BondClass::Spatial
        } else if sa.replica != sb.replica && !sa.shared && !sb.shared {
            BondClass::TemporalInter
        } else {
            BondClass::TemporalIntra
        };
        bonds.push(Bond {
            a,
            b,
            class,
            sign: 1,
            dir: dirs[k],
            wraps: false,
            replica: sa.replica,
            base: k,
        });
    }
    let mut branch_sites: Vec<usize> = (0..is_branch.len()).filter(|&k| is_branch[k]).map(|k| new_id[k]).collect();
    branch_sites.sort();
    let boundary_sites = branch_sites.len();
    Ok(BondGraph { spec: spec.clone(), sites, bonds, branch_sites, boundary_sites })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeStrategy {
    BreadthFirst { root: usize },
    DepthFirst { root: usize },
}

/// Z2 gauge field on a replica geometry. Links carry U = +-1 and a
/// plaquette is the product of its links, so orientation signs are not
/// stored.
#[derive(Clone, Debug)]
pub struct GaugeReplicaGraph {
    pub spec: ReplicaLatticeSpec,
    pub n_sites: usize,
    pub links: Vec<(usize, usize)>,
    pub shared: Vec<bool>,
    pub plaquettes: Vec<Vec<usize>>,
    pub maximal_tree: Vec<usize>,
    pub central_plaquettes: Vec<usize>,
    pub boundary_sites: usize,
}

/// Gauge-side geometry for a 3D spec.
///
/// `StandardCut` and `EnhancedVertex` give the dual of the standard-cut
/// spin lattice: links on the conical singularity are shared by all
/// replicas and sit in 4n plaquettes. `CentralPlaquette` gives the gauge
/// field living on the standard-cut lattice itself, whose plaquettes around
/// the singularity are loops of length 4n; it is dual to spins shared on
/// the singularity.
pub fn build_gauge_replica(spec: &ReplicaLatticeSpec) -> Result<GaugeReplicaGraph> {
    if spec.dimension != 3 {
        return Err(Error::Unsupported(format!(
            "gauge replica geometry needs D = 3, got D = {}",
            spec.dimension
        )));
    }
    let cx = CellComplex::build(spec)?;
    let merged = cx.cell_sites.iter().enumerate().filter(|(k, s)| s.shared && Some(*k) != cx.outer_cell).count();
    let mut gg = if spec.variant == GeometryVariant::CentralPlaquette {
        let g = &cx.graph;
        let central = (0..cx.faces.len()).filter(|&f| cx.faces[f].winding).collect();
        GaugeReplicaGraph {
            spec: spec.clone(),
            n_sites: g.sites.len(),
            links: g.bonds.iter().map(|b| (b.a, b.b)).collect(),
            shared: vec![false; g.bonds.len()],
            plaquettes: cx.faces.iter().map(|f| f.edges.clone()).collect(),
            maximal_tree: Vec::new(),
            central_plaquettes: central,
            boundary_sites: merged,
        }
    } else {
        let mut plaquettes = vec![Vec::new(); cx.graph.bonds.len()];
        for (f, face) in cx.faces.iter().enumerate() {
            for &e in &face.edges {
                plaquettes[e].push(f);
            }
        }
        GaugeReplicaGraph {
            spec: spec.clone(),
            n_sites: cx.n_cells,
            links: cx.face_cells.iter().map(|&[a, b]| (a, b)).collect(),
            shared: cx.faces.iter().map(|f| f.winding).collect(),
            plaquettes,
            maximal_tree: Vec::new(),
            central_plaquettes: Vec::new(),
            boundary_sites: merged,
        }
    };
    gg.maximal_tree = gg.spanning_tree(TreeStrategy::BreadthFirst { root: 0 })?;
    Ok(gg)
}

impl GaugeReplicaGraph {
    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// N_g, the number of gauge-fixed links.
    pub fn n_g(&self) -> usize {
        self.maximal_tree.len()
    }

    /// Number of plaquettes each link belongs to, counted with multiplicity.
    pub fn link_plaquette_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.links.len()];
        for p in &self.plaquettes {
            for &l in p {
                c[l] += 1;
            }
        }
        c
    }

    pub fn with_tree(mut self, strategy: TreeStrategy) -> Result<Self> {
        self.maximal_tree = self.spanning_tree(strategy)?;
        Ok(self)
    }

    /// Spanning forest; every component is grown from its lowest site
    /// except the one containing `root`.
    pub fn spanning_tree(&self, strategy: TreeStrategy) -> Result<Vec<usize>> {
        let root = match strategy {
            TreeStrategy::BreadthFirst { root } | TreeStrategy::DepthFirst { root } => root,
        };
        if root >= self.n_sites {
            return Err(Error::InvalidArgument(format!("tree root {root} out of range")));
        }
        let mut adj = vec![Vec::new(); self.n_sites];
        for (k, &(a, b)) in self.links.iter().enumerate() {
            if a != b {
                adj[a].push((b, k));
                adj[b].push((a, k));
            }
        }
        let mut seen = vec![false; self.n_sites];
        let mut tree = Vec::new();
        let starts = std::iter::once(root).chain(0..self.n_sites);
        for s in starts {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut work = VecDeque::from([s]);
            while let Some(v) = match strategy {
                TreeStrategy::BreadthFirst { .. } => work.pop_front(),
                TreeStrategy::DepthFirst { .. } => work.pop_back(),
            } {
                for &(w, k) in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        tree.push(k);
                        work.push_back(w);
                    }
                }
            }
        }
        tree.sort();
        Ok(tree)
    }

    pub fn components(&self) -> usize {
        self.n_sites - self.spanning_tree(TreeStrategy::BreadthFirst { root: 0 }).map(|t| t.len()).unwrap_or(0)
    }

    /// Tree links form a spanning forest: acyclic and touching every
    /// component.
    pub fn tree_is_spanning_forest(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.n_sites).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &k in &self.maximal_tree {
            let (a, b) = self.links[k];
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return false;
            }
            parent[ra] = rb;
        }
        self.maximal_tree.len() + self.components() == self.n_sites
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus(dim: usize, n: usize, ext: &[usize], l: usize) -> BondGraph {
        build_replica_lattice(&ReplicaLatticeSpec::new(dim, n, ext, l)).unwrap()
    }

    #[test]
    fn ordinary_torus() {
        let g = torus(2, 1, &[4, 4], 0);
        assert_eq!(g.n_bonds(), 32);
        assert!(g.degrees().iter().all(|&d| d == 4));
    }

    #[test]
    fn three_d_cut_counts() {
        let g = torus(3, 2, &[4, 4, 4], 2);
        assert_eq!(g.n_bonds(), 3 * 64 * 2);
        assert_eq!(g.class_count(BondClass::TemporalInter), 2 * 4 * 2);
        assert!(g.degrees().iter().all(|&d| d == 6));
    }

    #[test]
    fn site_indexing_is_replica_major() {
        let g = torus(2, 2, &[3, 4], 1);
        assert_eq!(g.sites[0].replica, 0);
        assert_eq!(g.sites[12].replica, 1);
        assert_eq!(g.sites[5].coords, [1, 1, 0]);
    }

    #[test]
    fn cut_bonds_cross_replicas() {
        let g = torus(2, 3, &[4, 5], 2);
        for b in &g.bonds {
            let (ra, rb) = (g.sites[b.a].replica, g.sites[b.b].replica);
            match b.class {
                BondClass::TemporalInter => assert_eq!(rb, (ra + 1) % 3),
                _ => assert_eq!(ra, rb),
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let s = ReplicaLatticeSpec::new(2, 2, &[4, 4], 5);
        assert!(build_replica_lattice(&s).is_err());
        let s = ReplicaLatticeSpec::new(2, 2, &[4, 4], 3)
            .with_offset(2)
            .with_boundaries(&[Boundary::Periodic, Boundary::Free]);
        assert!(build_replica_lattice(&s).is_err());
        let s = ReplicaLatticeSpec::new(2, 2, &[4, 4], 1).with_variant(GeometryVariant::CentralPlaquette);
        assert!(build_replica_lattice(&s).is_err());
        assert!(build_gauge_replica(&ReplicaLatticeSpec::new(2, 1, &[4, 4], 0)).is_err());
    }

    #[test]
    fn enhanced_vertex_branch_degree() {
        for n in [2, 3] {
            let s = ReplicaLatticeSpec::new(2, n, &[4, 4], 2).with_variant(GeometryVariant::EnhancedVertex);
            let g = build_replica_lattice(&s).unwrap();
            let deg = g.degrees();
            assert_eq!(g.branch_sites.len(), 2);
            for (k, &d) in deg.iter().enumerate() {
                if g.branch_sites.contains(&k) {
                    assert_eq!(d, 4 * n);
                } else {
                    assert_eq!(d, 4);
                }
            }
            assert_eq!(g.n_sites(), n * 16 - 2 * (n - 1));
        }
    }

    #[test]
    fn three_d_enhanced_vertex_degree() {
        let s = ReplicaLatticeSpec::new(3, 2, &[4, 4, 3], 2).with_variant(GeometryVariant::EnhancedVertex);
        let g = build_replica_lattice(&s).unwrap();
        let deg = g.degrees();
        assert_eq!(g.branch_sites.len(), 2 * 3);
        for &b in &g.branch_sites {
            assert_eq!(deg[b], 4 * 2 + 2);
        }
    }

    #[test]
    fn switch_pairs_counts() {
        let g = build_protocol_graph(&ReplicaLatticeSpec::new(2, 2, &[3, 3], 2)).unwrap();
        assert_eq!(switch_pairs(&g).len(), 2);
        let g = build_protocol_graph(&ReplicaLatticeSpec::new(3, 2, &[4, 4, 4], 2)).unwrap();
        let pairs = switch_pairs(&g);
        assert_eq!(pairs.len(), 8);
        for (off, on) in pairs {
            let (bo, bn) = (g.bonds[off], g.bonds[on]);
            assert_eq!(bo.a, bn.a);
            assert_eq!(g.sites[bo.b].coords, g.sites[bn.b].coords);
            assert_ne!(g.sites[bo.b].replica, g.sites[bn.b].replica);
        }
    }

    #[test]
    fn switch_closure() {
        let start = ReplicaLatticeSpec::new(2, 3, &[4, 5], 3).with_offset(4);
        let g = build_protocol_graph(&start).unwrap();
        let after = apply_switches(&g);
        let fresh = build_replica_lattice(&start.clone().with_slab_length(2)).unwrap();
        assert_eq!(after.canonical_bonds(), fresh.canonical_bonds());
    }

    #[test]
    fn two_d_faces_and_euler() {
        let cx = CellComplex::build(&ReplicaLatticeSpec::new(2, 1, &[3, 4], 0)).unwrap();
        assert_eq!(cx.faces.len(), 12);
        assert_eq!(cx.euler_characteristic(), 0);
        let free = ReplicaLatticeSpec::new(2, 1, &[3, 4], 0).with_boundaries(&[Boundary::Free, Boundary::Free]);
        let cx = CellComplex::build(&free).unwrap();
        assert_eq!(cx.faces.len(), 2 * 3 + 1);
        assert_eq!(cx.euler_characteristic(), 2);
    }

    #[test]
    fn replica_cylinder_is_a_sphere() {
        for n in [2, 3] {
            let s = ReplicaLatticeSpec::new(2, n, &[3, 3], 1).with_boundaries(&[Boundary::Periodic, Boundary::Free]);
            let cx = CellComplex::build(&s).unwrap();
            assert_eq!(cx.euler_characteristic(), 2);
            let long: Vec<usize> = cx.faces.iter().filter(|f| f.winding).map(|f| f.edges.len()).collect();
            assert!(long.contains(&(4 * n)));
        }
    }

    #[test]
    fn cubic_gauge_lattice() {
        let g = build_gauge_replica(&ReplicaLatticeSpec::new(3, 1, &[3, 3, 3], 0)).unwrap();
        assert_eq!(g.n_links(), 81);
        assert!(g.link_plaquette_counts().iter().all(|&c| c == 4));
        assert_eq!(g.n_g(), 26);
        assert!(g.tree_is_spanning_forest());
    }

    #[test]
    fn singular_links_in_4n_plaquettes() {
        let s = ReplicaLatticeSpec::new(3, 2, &[3, 4, 3], 2).with_variant(GeometryVariant::EnhancedVertex);
        let g = build_gauge_replica(&s).unwrap();
        let counts = g.link_plaquette_counts();
        let shared: Vec<usize> = (0..g.n_links()).filter(|&k| g.shared[k]).collect();
        assert_eq!(shared.len(), 2 * 3);
        for k in 0..g.n_links() {
            assert_eq!(counts[k], if g.shared[k] { 8 } else { 4 });
        }
    }

    #[test]
    fn central_plaquettes_have_length_4n() {
        let s = ReplicaLatticeSpec::new(3, 2, &[3, 4, 3], 2).with_variant(GeometryVariant::CentralPlaquette);
        let g = build_gauge_replica(&s).unwrap();
        assert_eq!(g.central_plaquettes.len(), 2 * 3);
        for &p in &g.central_plaquettes {
            assert_eq!(g.plaquettes[p].len(), 8);
        }
    }

    #[test]
    fn trees_span() {
        let s = ReplicaLatticeSpec::new(3, 2, &[2, 3, 2], 1)
            .with_boundaries(&[Boundary::Free; 3])
            .with_variant(GeometryVariant::EnhancedVertex);
        let g = build_gauge_replica(&s).unwrap();
        let dfs = g.clone().with_tree(TreeStrategy::DepthFirst { root: g.n_sites - 1 }).unwrap();
        assert!(g.tree_is_spanning_forest());
        assert!(dfs.tree_is_spanning_forest());
        assert_eq!(g.n_g(), dfs.n_g());
    }

    #[test]
    fn csv_dump() {
        let g = torus(2, 1, &[2, 2], 0);
        let csv = g.to_csv();
        assert!(csv.starts_with("site_a,site_b,class,sign\n"));
        assert_eq!(csv.lines().count(), 1 + 8);
    }
}
