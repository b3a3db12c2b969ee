//! Two-node Timoshenko elements on a beam graph and their assembly.
//!
//! Each element carries `(u, v, theta)` at both ends in its beam's local
//! frame. Assembly rotates `(u, v)` into global `(x, y)` components so that
//! beams meeting at a joint share one displacement vector and one rotation.
//! Periodic and Bloch identifications, rigid links and clamps are all
//! expressed through a [`DofLayout`], which writes every node's three global
//! unknowns as linear combinations of the reduced unknowns.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::lattice::{Beam, Component, Topology, UnitCellGraph, Vec2};

/// Quadrature of the shear term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShearQuadrature {
    /// One-point reduced integration.
    Midpoint,
    /// One-point integration with the shear stiffness reduced to
    /// `12 eta kappa / (12 eta + kappa h^2)` (residual bending flexibility).
    /// Nodal rotations of a straight beam under end loads are then exact.
    #[default]
    MidpointCorrected,
}

/// Shear stiffness seen by the one-point rule.
pub fn effective_shear(gamma_eta_kappa: (f64, f64, f64), h: f64, quad: ShearQuadrature) -> f64 {
    let (_, eta, kappa) = gamma_eta_kappa;
    match quad {
        ShearQuadrature::Midpoint => kappa,
        ShearQuadrature::MidpointCorrected => 12.0 * eta * kappa / (12.0 * eta + kappa * h * h),
    }
}

/// Strain operators of a linear element of length `h`, acting on
/// `(u1, v1, th1, u2, v2, th2)`: axial strain, curvature, midpoint shear.
pub fn strain_operators(h: f64) -> [[f64; 6]; 3] {
    let r = 1.0 / h;
    [[-r, 0.0, 0.0, r, 0.0, 0.0], [0.0, 0.0, -r, 0.0, 0.0, r], [0.0, -r, -0.5, 0.0, r, -0.5]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMatrices {
    pub stiffness: [[f64; 6]; 6],
    pub mass: [[f64; 6]; 6],
}

pub fn element_matrices(m: &crate::lattice::MaterialParams, h: f64) -> ElementMatrices {
    element_matrices_with(m, h, ShearQuadrature::default())
}

pub fn element_matrices_with(m: &crate::lattice::MaterialParams, h: f64, quad: ShearQuadrature) -> ElementMatrices {
    let [ba, bb, bs] = strain_operators(h);
    let ks = effective_shear((m.gamma, m.eta, m.kappa), h, quad);
    let mut k = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            k[i][j] = h * (m.gamma * ba[i] * ba[j] + m.eta * bb[i] * bb[j] + ks * bs[i] * bs[j]);
        }
    }
    let mut mass = [[0.0; 6]; 6];
    for (c, rho) in [m.density, m.density, m.rotary_inertia].into_iter().enumerate() {
        mass[c][c] = rho * h / 3.0;
        mass[c + 3][c + 3] = rho * h / 3.0;
        mass[c][c + 3] = rho * h / 6.0;
        mass[c + 3][c] = rho * h / 6.0;
    }
    ElementMatrices { stiffness: k, mass }
}

/// Subdivision of one beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamElements {
    pub elements: usize,
    pub h: f64,
    /// Global index of the first interior node; interior nodes are numbered
    /// consecutively from there.
    pub first_interior: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamMesh {
    /// Target element size.
    pub h: f64,
    pub vertex_count: usize,
    pub beams: Vec<BeamElements>,
    /// Per beam, the (start, end) vertex.
    pub ends: Vec<[usize; 2]>,
    pub node_count: usize,
}

impl BeamMesh {
    /// Split every beam into `max(2, ceil(L / h))` equal elements. Vertex
    /// nodes come first, followed by the interior nodes beam by beam.
    pub fn new(g: &UnitCellGraph, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("mesh size must be positive, got {h}")));
        }
        let mut next = g.vertices.len();
        let mut beams = Vec::with_capacity(g.beams.len());
        for b in &g.beams {
            let n = ((b.length / h) * (1.0 - 1e-12)).ceil().max(2.0) as usize;
            beams.push(BeamElements { elements: n, h: b.length / n as f64, first_interior: next });
            next += n - 1;
        }
        Ok(BeamMesh {
            h,
            vertex_count: g.vertices.len(),
            beams,
            ends: g.beams.iter().map(|b| [b.start_vertex, b.end_vertex]).collect(),
            node_count: next,
        })
    }

    /// Global node of the `i`-th point (`0..=elements`) along beam `b`.
    pub fn node(&self, b: usize, i: usize) -> usize {
        let be = &self.beams[b];
        if i == 0 {
            self.ends[b][0]
        } else if i == be.elements {
            self.ends[b][1]
        } else {
            be.first_interior + i - 1
        }
    }

    /// Arclength coordinates of the nodes of beam `b`.
    pub fn coordinates(&self, b: usize) -> Vec<f64> {
        let be = &self.beams[b];
        (0..=be.elements).map(|i| i as f64 * be.h).collect()
    }

    pub fn element_count(&self) -> usize {
        self.beams.iter().map(|b| b.elements).sum()
    }
}

/// Boundary treatment for [`assemble`].
#[derive(Debug, Clone, PartialEq)]
pub enum Constraints {
    /// No identifications, no clamps.
    Free,
    /// Identified vertices share their unknowns.
    Periodic,
    /// Periodic identification plus zero unknowns at the listed vertices.
    Clamped(Vec<usize>),
    /// Identified vertices differ by `phase[0]^m1 * phase[1]^m2`.
    Bloch([c64; 2]),
    /// Bloch phases plus zero unknowns at the listed vertices.
    BlochClamped([c64; 2], Vec<usize>),
}

/// Linear combination of reduced unknowns.
pub type DofExpr = Vec<(usize, c64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRecord {
    pub kind: &'static str,
    pub clamped_vertices: Vec<usize>,
    pub identifications: usize,
    pub rigid_links: usize,
    pub phases: [c64; 2],
}

#[derive(Debug, Clone)]
pub struct DofLayout {
    /// Per mesh node, the expressions of global `(Ux, Uy, theta)`.
    pub nodes: Vec<[DofExpr; 3]>,
    pub dof_count: usize,
    /// Reduced unknowns owned by each node (empty for dependent nodes).
    pub owner: Vec<(usize, usize)>,
    pub record: ConstraintRecord,
}

fn phase_pow(p: c64, n: i32) -> c64 {
    if n >= 0 {
        p.powi(n)
    } else {
        p.conj().powi(-n)
    }
}

fn phase_of(phases: [c64; 2], o: [i32; 2]) -> c64 {
    phase_pow(phases[0], o[0]) * phase_pow(phases[1], o[1])
}

fn scale_expr(e: &DofExpr, s: c64) -> DofExpr {
    e.iter().map(|&(i, c)| (i, c * s)).collect()
}

fn axpy_expr(y: &mut DofExpr, a: c64, x: &DofExpr) {
    for &(i, c) in x {
        match y.iter_mut().find(|(j, _)| *j == i) {
            Some(slot) => slot.1 += a * c,
            None => y.push((i, a * c)),
        }
    }
}

impl DofLayout {
    pub fn build(g: &UnitCellGraph, mesh: &BeamMesh, constraints: &Constraints) -> Result<Self> {
        let nv = g.vertices.len();
        let one = c64::new(1.0, 0.0);
        let (topo, phases, clamped_list) = match constraints {
            Constraints::Free => (Topology::trivial(nv), [one, one], vec![]),
            Constraints::Periodic => (g.topology()?, [one, one], vec![]),
            Constraints::Clamped(v) => (g.topology()?, [one, one], v.clone()),
            Constraints::Bloch(p) | Constraints::BlochClamped(p, _) => {
                for z in p {
                    if (z.norm() - 1.0).abs() > 1e-12 {
                        return Err(Error::Domain(format!("Bloch phase {z} is not unit modulus")));
                    }
                }
                let c = match constraints {
                    Constraints::BlochClamped(_, c) => c.clone(),
                    _ => vec![],
                };
                (g.topology()?, *p, c)
            }
        };
        let identify = !matches!(constraints, Constraints::Free);
        let clamped: BTreeSet<usize> = clamped_list.iter().map(|&v| topo.root[v]).collect();

        let used_slaves: BTreeMap<usize, usize> =
            g.rigid_links.iter().enumerate().map(|(i, l)| (topo.root[l.slave], i)).collect();
        let mut used: BTreeSet<usize> = BTreeSet::new();
        for b in &g.beams {
            used.insert(topo.root[b.start_vertex]);
            used.insert(topo.root[b.end_vertex]);
        }
        let mut pending: Vec<usize> = used.iter().copied().collect();
        while let Some(r) = pending.pop() {
            if let Some(&li) = used_slaves.get(&r) {
                let m = topo.root[g.rigid_links[li].master.vertex];
                if used.insert(m) {
                    pending.push(m);
                }
            }
        }

        // own unknowns for roots, then interior nodes
        let mut dof_count = 0;
        let mut owner = Vec::new();
        let mut root_expr: BTreeMap<usize, [DofExpr; 3]> = BTreeMap::new();
        for &r in &used {
            if clamped.contains(&r) || used_slaves.contains_key(&r) {
                continue;
            }
            root_expr.insert(r, [0, 1, 2].map(|c| vec![(dof_count + c, one)]));
            owner.push((r, dof_count));
            dof_count += 3;
        }
        for &r in &used {
            if clamped.contains(&r) {
                root_expr.insert(r, [vec![], vec![], vec![]]);
            }
        }
        let mut visiting = BTreeSet::new();
        for &r in &used {
            resolve_slave(g, &topo, phases, identify, &used_slaves, &mut root_expr, &mut visiting, r)?;
        }

        let mut nodes: Vec<[DofExpr; 3]> = vec![[vec![], vec![], vec![]]; mesh.node_count];
        for v in 0..nv {
            if let Some(e) = root_expr.get(&topo.root[v]) {
                let ph = if identify { phase_of(phases, topo.offset[v]) } else { one };
                nodes[v] = [scale_expr(&e[0], ph), scale_expr(&e[1], ph), scale_expr(&e[2], ph)];
            }
        }
        for be in &mesh.beams {
            for i in 0..be.elements - 1 {
                let n = be.first_interior + i;
                nodes[n] = [0, 1, 2].map(|c| vec![(dof_count + c, one)]);
                owner.push((n, dof_count));
                dof_count += 3;
            }
        }

        Ok(DofLayout {
            nodes,
            dof_count,
            owner,
            record: ConstraintRecord {
                kind: match constraints {
                    Constraints::Free => "free",
                    Constraints::Periodic => "periodic",
                    Constraints::Clamped(_) => "clamped",
                    Constraints::Bloch(_) | Constraints::BlochClamped(..) => "bloch",
                },
                clamped_vertices: clamped.into_iter().collect(),
                identifications: if identify { g.identifications.len() } else { 0 },
                rigid_links: g.rigid_links.len(),
                phases,
            },
        })
    }

    /// Expand reduced unknowns into per-node global `(Ux, Uy, theta)`.
    pub fn expand(&self, x: &[c64]) -> Vec<[c64; 3]> {
        self.nodes.iter().map(|e| e.clone().map(|terms| terms.iter().map(|&(i, c)| c * x[i]).sum())).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn resolve_slave(
    g: &UnitCellGraph,
    topo: &Topology,
    phases: [c64; 2],
    identify: bool,
    slaves: &BTreeMap<usize, usize>,
    expr: &mut BTreeMap<usize, [DofExpr; 3]>,
    visiting: &mut BTreeSet<usize>,
    r: usize,
) -> Result<()> {
    if expr.contains_key(&r) {
        return Ok(());
    }
    let Some(&li) = slaves.get(&r) else { return Ok(()) };
    if !visiting.insert(r) {
        return Err(Error::Structure(format!("rigid links form a cycle through vertex {r}")));
    }
    let link = g.rigid_links[li];
    let m = link.master.vertex;
    let mr = topo.root[m];
    resolve_slave(g, topo, phases, identify, slaves, expr, visiting, mr)?;
    let me =
        expr.get(&mr).cloned().ok_or_else(|| Error::Structure(format!("rigid link target {m} carries no unknowns")))?;
    let one = c64::new(1.0, 0.0);
    let (ps, pm) = if identify {
        let om = topo.offset[m];
        (
            phase_of(phases, topo.offset[link.slave]),
            phase_of(phases, [om[0] + link.master.shift[0], om[1] + link.master.shift[1]]),
        )
    } else {
        (one, one)
    };
    let f = ps.conj() * pm;
    let p = g.vertices[link.slave];
    let q = g.image_position(link.master);
    let r_arm = [p[0] - q[0], p[1] - q[1]];
    // U_s = U_m + theta_m (-r_y, r_x)
    let mut ux = scale_expr(&me[0], f);
    axpy_expr(&mut ux, f * (-r_arm[1]), &me[2]);
    let mut uy = scale_expr(&me[1], f);
    axpy_expr(&mut uy, f * r_arm[0], &me[2]);
    let th = scale_expr(&me[2], f);
    visiting.remove(&r);
    expr.insert(r, [ux, uy, th]);
    Ok(())
}

/// Local-to-global rotation of one node: `local = T * global`.
fn frame_matrix(t: Vec2, n: Vec2) -> [[f64; 3]; 3] {
    [[t[0], t[1], 0.0], [n[0], n[1], 0.0], [0.0, 0.0, 1.0]]
}

/// Rotate a local 6x6 element matrix into global node components.
pub fn to_global(beam: &Beam, local: &[[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let t = frame_matrix(beam.tangent, beam.normal);
    let mut tt = [[0.0; 6]; 6];
    for blk in 0..2 {
        for i in 0..3 {
            for j in 0..3 {
                tt[3 * blk + i][3 * blk + j] = t[i][j];
            }
        }
    }
    let mut tmp = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            tmp[i][j] = (0..6).map(|k| local[i][k] * tt[k][j]).sum();
        }
    }
    let mut out = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            out[i][j] = (0..6).map(|k| tt[k][i] * tmp[k][j]).sum();
        }
    }
    out
}

/// Rotate a local element vector into global node components.
pub fn vector_to_global(beam: &Beam, local: &[f64; 6]) -> [f64; 6] {
    let t = frame_matrix(beam.tangent, beam.normal);
    let mut out = [0.0; 6];
    for blk in 0..2 {
        for j in 0..3 {
            out[3 * blk + j] = (0..3).map(|i| t[i][j] * local[3 * blk + i]).sum();
        }
    }
    out
}

/// Rotate global node components into the beam's local frame.
pub fn node_to_local(beam: &Beam, global: [c64; 3]) -> [c64; 3] {
    let t = frame_matrix(beam.tangent, beam.normal);
    [0, 1, 2].map(|i| (0..3).map(|j| global[j] * t[i][j]).sum())
}

/// Visit every element: `(beam index, element index, [node0, node1], element length)`.
pub fn for_each_element(mesh: &BeamMesh, mut f: impl FnMut(usize, usize, [usize; 2], f64)) {
    for (b, be) in mesh.beams.iter().enumerate() {
        for e in 0..be.elements {
            f(b, e, [mesh.node(b, e), mesh.node(b, e + 1)], be.h);
        }
    }
}

/// Global unknown expressions of one element, in `(node0 xyz th, node1 xyz th)` order.
pub fn element_exprs(layout: &DofLayout, nodes: [usize; 2]) -> [&DofExpr; 6] {
    let [a, b] = nodes;
    [
        &layout.nodes[a][0],
        &layout.nodes[a][1],
        &layout.nodes[a][2],
        &layout.nodes[b][0],
        &layout.nodes[b][1],
        &layout.nodes[b][2],
    ]
}

/// Operators as coordinate lists, before densification.
#[derive(Debug, Clone)]
pub struct SparseOperators {
    pub layout: DofLayout,
    pub stiffness: Vec<(usize, usize, c64)>,
    pub mass: Vec<(usize, usize, c64)>,
}

fn scatter(out: &mut Vec<(usize, usize, c64)>, ex: &[&DofExpr; 6], ke: &[[f64; 6]; 6]) {
    for a in 0..6 {
        for &(i, ci) in ex[a] {
            for b in 0..6 {
                if ke[a][b] == 0.0 {
                    continue;
                }
                for &(j, cj) in ex[b] {
                    out.push((i, j, ci.conj() * cj * ke[a][b]));
                }
            }
        }
    }
}

/// Assemble with per-beam `(stiffness, mass)` multipliers.
pub fn assemble_sparse(
    g: &UnitCellGraph,
    mesh: &BeamMesh,
    constraints: &Constraints,
    quad: ShearQuadrature,
    scale: impl Fn(&Beam) -> (f64, f64),
) -> Result<SparseOperators> {
    if mesh.beams.len() != g.beams.len() || mesh.vertex_count != g.vertices.len() {
        return Err(Error::Structure("mesh was not built on this graph".into()));
    }
    let layout = DofLayout::build(g, mesh, constraints)?;
    let mut stiffness = Vec::new();
    let mut mass = Vec::new();
    let mut cache: BTreeMap<(usize, u64), (Mat6, Mat6)> = BTreeMap::new();
    for_each_element(mesh, |b, _, nodes, h| {
        let beam = &g.beams[b];
        let (ks, ms) = *cache.entry((b, h.to_bits())).or_insert_with(|| {
            let (sk, sm) = scale(beam);
            let em = element_matrices_with(&beam.material, h, quad);
            let mut k = to_global(beam, &em.stiffness);
            let mut m = to_global(beam, &em.mass);
            k.iter_mut().flatten().for_each(|x| *x *= sk);
            m.iter_mut().flatten().for_each(|x| *x *= sm);
            (k, m)
        });
        let ex = element_exprs(&layout, nodes);
        scatter(&mut stiffness, &ex, &ks);
        scatter(&mut mass, &ex, &ms);
    });
    Ok(SparseOperators { layout, stiffness, mass })
}

type Mat6 = [[f64; 6]; 6];

/// Dense Hermitian operators.
#[derive(Debug, Clone)]
pub struct AssembledOperators {
    pub stiffness: Mat<c64>,
    pub mass: Mat<c64>,
    pub dof_count: usize,
    pub record: ConstraintRecord,
    pub layout: DofLayout,
}

pub fn densify(n: usize, entries: &[(usize, usize, c64)]) -> Mat<c64> {
    let mut m = Mat::<c64>::zeros(n, n);
    for &(i, j, v) in entries {
        m[(i, j)] += v;
    }
    m
}

impl SparseOperators {
    pub fn into_dense(self) -> AssembledOperators {
        let n = self.layout.dof_count;
        AssembledOperators {
            stiffness: densify(n, &self.stiffness),
            mass: densify(n, &self.mass),
            dof_count: n,
            record: self.layout.record.clone(),
            layout: self.layout,
        }
    }
}

/// Unit-scaled assembly with the default shear rule.
pub fn assemble(g: &UnitCellGraph, mesh: &BeamMesh, constraints: Constraints) -> Result<AssembledOperators> {
    assemble_with(g, mesh, constraints, ShearQuadrature::default())
}

pub fn assemble_with(
    g: &UnitCellGraph,
    mesh: &BeamMesh,
    constraints: Constraints,
    quad: ShearQuadrature,
) -> Result<AssembledOperators> {
    Ok(assemble_sparse(g, mesh, &constraints, quad, |_| (1.0, 1.0))?.into_dense())
}

/// Multipliers of the high-contrast problem in cell coordinates: stiff
/// beams `1 / eps^2`, soft beams `delta / eps^2`, mass one.
pub fn contrast_scale(s: &crate::lattice::ScalingParams) -> impl Fn(&Beam) -> (f64, f64) + '_ {
    move |b: &Beam| {
        let e2 = s.epsilon * s.epsilon;
        match b.component {
            Component::Stiff => (1.0 / e2, 1.0),
            Component::Soft => (s.contrast / e2, 1.0),
        }
    }
}

/// Assemble an element-wise load given in beam-local components.
pub fn assemble_load(
    g: &UnitCellGraph,
    mesh: &BeamMesh,
    layout: &DofLayout,
    mut load: impl FnMut(usize, &Beam, f64) -> [f64; 6],
) -> Vec<c64> {
    let mut f = vec![c64::new(0.0, 0.0); layout.dof_count];
    for_each_element(mesh, |b, _, nodes, h| {
        let beam = &g.beams[b];
        let fe = vector_to_global(beam, &load(b, beam, h));
        let ex = element_exprs(layout, nodes);
        for a in 0..6 {
            for &(i, c) in ex[a] {
                f[i] += c.conj() * fe[a];
            }
        }
    });
    f
}

/// Nodal field on a meshed graph, stored as global `(Ux, Uy, theta)`.
#[derive(Debug, Clone)]
pub struct DofField {
    pub nodes: Vec<[c64; 3]>,
}

impl DofField {
    pub fn from_reduced(layout: &DofLayout, x: &[c64]) -> Self {
        DofField { nodes: layout.expand(x) }
    }

    pub fn from_real(layout: &DofLayout, x: &[f64]) -> Self {
        let z: Vec<c64> = x.iter().map(|&v| c64::new(v, 0.0)).collect();
        Self::from_reduced(layout, &z)
    }

    /// `(s, [u, v, theta])` in the beam's local frame at every node of beam `b`.
    pub fn along_beam(&self, g: &UnitCellGraph, mesh: &BeamMesh, b: usize) -> Vec<(f64, [c64; 3])> {
        let beam = &g.beams[b];
        mesh.coordinates(b)
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, node_to_local(beam, self.nodes[mesh.node(b, i)])))
            .collect()
    }

    /// Largest disagreement, over all vertices, between the global
    /// displacement and rotation reconstructed from each incident beam's
    /// local components.
    pub fn joint_mismatch(&self, g: &UnitCellGraph, mesh: &BeamMesh) -> f64 {
        let mut seen: BTreeMap<usize, [c64; 3]> = BTreeMap::new();
        let mut worst: f64 = 0.0;
        for (b, beam) in g.beams.iter().enumerate() {
            let prof = self.along_beam(g, mesh, b);
            for (v, (_, loc)) in [(beam.start_vertex, prof[0]), (beam.end_vertex, *prof.last().unwrap())] {
                let t = beam.tangent;
                let n = beam.normal;
                let rec = [loc[0] * t[0] + loc[1] * n[0], loc[0] * t[1] + loc[1] * n[1], loc[2]];
                match seen.get(&v) {
                    Some(prev) => {
                        for c in 0..3 {
                            worst = worst.max((prev[c] - rec[c]).norm());
                        }
                    }
                    None => {
                        seen.insert(v, rec);
                    }
                }
            }
        }
        worst
    }
}

/// Write a dense complex matrix in MatrixMarket coordinate format.
pub fn write_matrix_market(m: &Mat<c64>, mut w: impl Write) -> std::io::Result<()> {
    let nnz = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .filter(|&(i, j)| m[(i, j)].norm() != 0.0)
        .count();
    writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), nnz)?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if z.norm() != 0.0 {
                writeln!(w, "{} {} {:e} {:e}", i + 1, j + 1, z.re, z.im)?;
            }
        }
    }
    Ok(())
}
