//! Periodic beam-network geometry.
//!
//! A [`UnitCellGraph`] is a finite graph of straight beams living in one
//! periodicity cell. Vertices that sit on the cell boundary are glued to
//! their periodic images through [`Identification`]s, each of which says
//! `vertex b = vertex a + m1 * l1 + m2 * l2` for the lattice vectors `l1, l2`.
//!
//! Beams carry a component label. The stiff beams form the connected
//! periodic skeleton; the soft beams are resonators whose endpoints are
//! clamped to the skeleton in the two-scale limit. How a soft endpoint is
//! tied to the skeleton in the full lattice is spelled out by an
//! [`Attachment`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

const GEOM_TOL: f64 = 1e-9;

/// Rotate a 2-vector by +90 degrees.
#[inline]
pub fn rot90(v: Vec2) -> Vec2 {
    [-v[1], v[0]]
}

#[inline]
pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm(a: Vec2) -> f64 {
    dot(a, a).sqrt()
}

/// Stiffness and inertia of one beam, per unit length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Extensional stiffness.
    pub gamma: f64,
    /// Bending stiffness.
    pub eta: f64,
    /// Shear stiffness.
    pub kappa: f64,
    /// Mass per unit length.
    pub density: f64,
    /// Rotational inertia per unit length.
    pub rotary_inertia: f64,
}

impl MaterialParams {
    pub fn new(gamma: f64, eta: f64, kappa: f64, density: f64, rotary_inertia: f64) -> Result<Self> {
        let m = MaterialParams { gamma, eta, kappa, density, rotary_inertia };
        m.validate()?;
        Ok(m)
    }

    /// All five coefficients equal to one.
    pub fn unit() -> Self {
        MaterialParams { gamma: 1.0, eta: 1.0, kappa: 1.0, density: 1.0, rotary_inertia: 1.0 }
    }

    /// Unit inertia with the given stiffnesses.
    pub fn stiffness(gamma: f64, eta: f64, kappa: f64) -> Result<Self> {
        Self::new(gamma, eta, kappa, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("kappa", self.kappa),
            ("density", self.density),
            ("rotary_inertia", self.rotary_inertia),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("material {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Stiff,
    Soft,
}

/// How the endpoints of a soft beam are tied to the stiff skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttachmentMode {
    /// Massless rigid arm from the endpoint to a stiff vertex.
    Rigid,
    /// A straight stiff beam from the endpoint to a stiff vertex.
    Stub,
    /// Explicitly free endpoint (not clamped in the limit model).
    Free,
}

/// A periodic image of a vertex: `vertex + shift[0] * l1 + shift[1] * l2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexImage {
    pub vertex: usize,
    #[serde(default)]
    pub shift: [i32; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub mode: AttachmentMode,
    /// Target for the start and end vertex of the beam. `None` leaves that
    /// endpoint to the ordinary junction rules.
    pub ends: [Option<VertexImage>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub start_vertex: usize,
    pub end_vertex: usize,
    pub length: f64,
    pub tangent: Vec2,
    pub normal: Vec2,
    pub material: MaterialParams,
    pub component: Component,
    pub attachment: Option<Attachment>,
}

impl Beam {
    /// Rotation taking global `(x, y)` components to beam-local `(u, v)`.
    pub fn frame(&self) -> [Vec2; 2] {
        [self.tangent, self.normal]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identification {
    pub a: usize,
    pub b: usize,
    pub shift: [i32; 2],
}

/// Rigid massless link: `slave` moves with the image `master`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidLink {
    pub slave: usize,
    pub master: VertexImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitCellGraph {
    pub lattice_vectors: [Vec2; 2],
    pub vertices: Vec<Vec2>,
    pub vertex_labels: Vec<String>,
    pub identifications: Vec<Identification>,
    pub beams: Vec<Beam>,
    pub rigid_links: Vec<RigidLink>,
    /// Vertices held at zero in the clamped soft problem. Filled in by
    /// [`UnitCellGraph::soft_subgraph`].
    pub clamped: BTreeSet<usize>,
    pub warnings: Vec<String>,
}

/// Cell size and stiffness contrast of the high-contrast scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub epsilon: f64,
    pub contrast: f64,
}

impl ScalingParams {
    /// Contrast tied to the cell size as `epsilon^2`.
    pub fn new(epsilon: f64) -> Result<Self> {
        Self::with_contrast(epsilon, epsilon * epsilon)
    }

    pub fn with_contrast(epsilon: f64, contrast: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Domain(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        if !(contrast > 0.0 && contrast.is_finite()) {
            return Err(Error::Domain(format!("contrast must be positive, got {contrast}")));
        }
        Ok(ScalingParams { epsilon, contrast })
    }
}

/// Vertex classes after periodic identification.
#[derive(Debug, Clone)]
pub struct Topology {
    /// Representative vertex of each vertex's class.
    pub root: Vec<usize>,
    /// `vertex = root + offset` in lattice units.
    pub offset: Vec<[i32; 2]>,
}

impl Topology {
    /// Every vertex is its own class.
    pub fn trivial(n: usize) -> Self {
        Topology { root: (0..n).collect(), offset: vec![[0, 0]; n] }
    }

    pub fn resolve(n: usize, identifications: &[Identification]) -> Result<Self> {
        let mut parent: Vec<usize> = (0..n).collect();
        // parent[v] = p with v = p + up[v]
        let mut up = vec![[0i32; 2]; n];

        fn find(parent: &mut [usize], up: &mut [[i32; 2]], v: usize) -> (usize, [i32; 2]) {
            let p = parent[v];
            if p == v {
                return (v, [0, 0]);
            }
            let (r, o) = find(parent, up, p);
            let total = [up[v][0] + o[0], up[v][1] + o[1]];
            parent[v] = r;
            up[v] = total;
            (r, total)
        }

        for id in identifications {
            if id.a >= n || id.b >= n {
                return Err(Error::Structure(format!("identification refers to unknown vertex ({}, {})", id.a, id.b)));
            }
            let (ra, oa) = find(&mut parent, &mut up, id.a);
            let (rb, ob) = find(&mut parent, &mut up, id.b);
            // b = a + s  =>  rb = ra + oa + s - ob
            let d = [oa[0] + id.shift[0] - ob[0], oa[1] + id.shift[1] - ob[1]];
            if ra == rb {
                if d != [0, 0] {
                    return Err(Error::Structure(format!(
                        "vertex {} is identified with itself under shift {:?}",
                        ra, d
                    )));
                }
                continue;
            }
            parent[rb] = ra;
            up[rb] = d;
        }

        let mut root = vec![0; n];
        let mut offset = vec![[0; 2]; n];
        for v in 0..n {
            let (r, o) = find(&mut parent, &mut up, v);
            root[v] = r;
            offset[v] = o;
        }
        Ok(Topology { root, offset })
    }
}

impl UnitCellGraph {
    pub fn lattice_point(&self, shift: [i32; 2]) -> Vec2 {
        let [l1, l2] = self.lattice_vectors;
        let (m1, m2) = (shift[0] as f64, shift[1] as f64);
        [m1 * l1[0] + m2 * l2[0], m1 * l1[1] + m2 * l2[1]]
    }

    pub fn image_position(&self, img: VertexImage) -> Vec2 {
        let p = self.vertices[img.vertex];
        let s = self.lattice_point(img.shift);
        [p[0] + s[0], p[1] + s[1]]
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::resolve(self.vertices.len(), &self.identifications)
    }

    pub fn beams_of(&self, component: Component) -> impl Iterator<Item = &Beam> {
        self.beams.iter().filter(move |b| b.component == component)
    }

    /// Sum of beam lengths.
    pub fn total_length(&self) -> f64 {
        self.beams.iter().map(|b| b.length).sum()
    }

    /// Mass of the cell, the integral of the density over all beams.
    pub fn total_mass(&self) -> f64 {
        self.beams.iter().map(|b| b.material.density * b.length).sum()
    }

    pub fn shortest_beam(&self) -> Option<f64> {
        self.beams.iter().map(|b| b.length).reduce(f64::min)
    }

    pub fn cell_area(&self) -> f64 {
        let [a, b] = self.lattice_vectors;
        (a[0] * b[1] - a[1] * b[0]).abs()
    }

    /// Restriction to stiff beams. Rigid links are dropped since their
    /// slaves live on the soft part.
    pub fn stiff_subgraph(&self) -> UnitCellGraph {
        let mut g = self.clone();
        g.beams.retain(|b| b.component == Component::Stiff);
        g.rigid_links.clear();
        g.clamped.clear();
        g
    }

    /// Restriction to soft beams, with every endpoint that touches the stiff
    /// skeleton recorded in [`UnitCellGraph::clamped`].
    pub fn soft_subgraph(&self) -> UnitCellGraph {
        let topo = self.topology().unwrap_or_else(|_| Topology::trivial(self.vertices.len()));
        let stiff_roots: BTreeSet<usize> = self
            .beams_of(Component::Stiff)
            .flat_map(|b| [topo.root[b.start_vertex], topo.root[b.end_vertex]])
            .collect();
        let linked: BTreeSet<usize> = self.rigid_links.iter().map(|l| topo.root[l.slave]).collect();

        let mut g = self.clone();
        g.beams.retain(|b| b.component == Component::Soft);
        g.rigid_links.clear();
        g.clamped.clear();
        for b in &g.beams {
            for v in [b.start_vertex, b.end_vertex] {
                let r = topo.root[v];
                if stiff_roots.contains(&r) || linked.contains(&r) {
                    g.clamped.insert(r);
                }
            }
        }
        g
    }

    /// Whether the stiff beams, repeated over an `n x n` block of cells,
    /// connect the central cell to itself and to its neighbours in both
    /// lattice directions.
    pub fn stiff_connected_on_tiling(&self, n: usize) -> Result<bool> {
        let topo = self.topology()?;
        let stiff: Vec<&Beam> = self.beams_of(Component::Stiff).collect();
        if stiff.is_empty() {
            return Ok(false);
        }
        let roots: Vec<usize> = {
            let s: BTreeSet<usize> =
                stiff.iter().flat_map(|b| [topo.root[b.start_vertex], topo.root[b.end_vertex]]).collect();
            s.into_iter().collect()
        };
        let index: BTreeMap<usize, usize> = roots.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        let nr = roots.len();
        let node = |r: usize, t: [i64; 2]| -> Option<usize> {
            if t[0] < 0 || t[1] < 0 || t[0] >= n as i64 || t[1] >= n as i64 {
                return None;
            }
            Some((t[0] as usize * n + t[1] as usize) * nr + index[&r])
        };
        let mut uf = UnionFind::new(n * n * nr);
        for i in 0..n as i64 {
            for j in 0..n as i64 {
                for b in &stiff {
                    let (ra, oa) = (topo.root[b.start_vertex], topo.offset[b.start_vertex]);
                    let (rb, ob) = (topo.root[b.end_vertex], topo.offset[b.end_vertex]);
                    let ta = [i + oa[0] as i64, j + oa[1] as i64];
                    let tb = [i + ob[0] as i64, j + ob[1] as i64];
                    if let (Some(x), Some(y)) = (node(ra, ta), node(rb, tb)) {
                        uf.union(x, y);
                    }
                }
            }
        }
        // every class in the central cell must reach every other one and
        // the neighbouring copies along both lattice directions; tiles at
        // the rim of the window may be cut off by the window itself
        let c = (n / 2) as i64;
        let r0 = roots[0];
        let hub = uf.find(node(r0, [c, c]).unwrap());
        let mut required: Vec<usize> = roots.iter().map(|&r| node(r, [c, c]).unwrap()).collect();
        for t in [[c + 1, c], [c, c + 1]] {
            match node(r0, t) {
                Some(x) => required.push(x),
                None => return Ok(false),
            }
        }
        Ok(required.into_iter().all(|x| uf.find(x) == hub))
    }

    /// Check every structural invariant of the graph.
    pub fn validate(&self) -> Result<()> {
        let [l1, l2] = self.lattice_vectors;
        let det = l1[0] * l2[1] - l1[1] * l2[0];
        if !(det.abs() > 1e-12 * norm(l1).max(1.0) * norm(l2).max(1.0)) {
            return Err(Error::Validation("lattice vectors are linearly dependent".into()));
        }
        let nv = self.vertices.len();
        for id in &self.identifications {
            if id.a >= nv || id.b >= nv {
                return Err(Error::Validation(format!(
                    "identification ({}, {}) refers to an unknown vertex",
                    id.a, id.b
                )));
            }
            let expect = self.image_position(VertexImage { vertex: id.a, shift: id.shift });
            let got = self.vertices[id.b];
            if norm([got[0] - expect[0], got[1] - expect[1]]) > GEOM_TOL {
                return Err(Error::Validation(format!(
                    "identification ({}, {}) with shift {:?} does not match vertex positions",
                    id.a, id.b, id.shift
                )));
            }
        }
        let topo = self.topology()?;

        for (i, b) in self.beams.iter().enumerate() {
            if b.start_vertex >= nv || b.end_vertex >= nv {
                return Err(Error::Validation(format!("beam {i} refers to an unknown vertex")));
            }
            b.material.validate()?;
            let p = self.vertices[b.start_vertex];
            let q = self.vertices[b.end_vertex];
            let d = [q[0] - p[0], q[1] - p[1]];
            let len = norm(d);
            if len <= GEOM_TOL {
                return Err(Error::Validation(format!("beam {i} has zero length")));
            }
            if (len - b.length).abs() > 1e-12 * len.max(1.0) {
                return Err(Error::Validation(format!(
                    "beam {i} length {} differs from vertex distance {len}",
                    b.length
                )));
            }
            if (norm(b.tangent) - 1.0).abs() > 1e-12 || (norm(b.normal) - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("beam {i} frame is not unit length")));
            }
            let r = rot90(b.tangent);
            if (r[0] - b.normal[0]).abs() > 1e-12 || (r[1] - b.normal[1]).abs() > 1e-12 {
                return Err(Error::Validation(format!("beam {i} normal is not the tangent rotated by +90 degrees")));
            }
            if topo.root[b.start_vertex] == topo.root[b.end_vertex]
                && topo.offset[b.start_vertex] == topo.offset[b.end_vertex]
            {
                return Err(Error::Validation(format!("beam {i} connects a vertex to itself")));
            }
        }

        if !self.stiff_connected_on_tiling(3)? {
            return Err(Error::Validation("stiff component not periodically connected".into()));
        }

        // soft endpoints must end on the skeleton, on another soft beam, or
        // carry an explicit attachment
        let mut degree: BTreeMap<(usize, Component), usize> = BTreeMap::new();
        for b in &self.beams {
            for v in [b.start_vertex, b.end_vertex] {
                *degree.entry((topo.root[v], b.component)).or_default() += 1;
            }
        }
        let linked: BTreeSet<usize> = self.rigid_links.iter().map(|l| topo.root[l.slave]).collect();
        for (i, b) in self.beams.iter().enumerate() {
            if b.component != Component::Soft {
                continue;
            }
            for (end, v) in [b.start_vertex, b.end_vertex].into_iter().enumerate() {
                let r = topo.root[v];
                let free = matches!(&b.attachment, Some(a) if a.mode == AttachmentMode::Free && a.ends[end].is_none())
                    || matches!(&b.attachment, Some(a) if a.mode == AttachmentMode::Free);
                let on_stiff = degree.get(&(r, Component::Stiff)).copied().unwrap_or(0) > 0;
                let on_soft = degree.get(&(r, Component::Soft)).copied().unwrap_or(0) > 1;
                if !(on_stiff || on_soft || linked.contains(&r) || free) {
                    return Err(Error::Validation(format!(
                        "soft beam {i} has a dangling endpoint at vertex {} (attach it or flag it free)",
                        self.vertex_labels.get(v).cloned().unwrap_or_else(|| v.to_string())
                    )));
                }
            }
        }
        for l in &self.rigid_links {
            if l.slave >= nv || l.master.vertex >= nv {
                return Err(Error::Validation("rigid link refers to an unknown vertex".into()));
            }
            let mr = topo.root[l.master.vertex];
            if degree.get(&(mr, Component::Stiff)).copied().unwrap_or(0) == 0 {
                return Err(Error::Validation(format!("rigid link target {} is not a stiff vertex", l.master.vertex)));
            }
        }
        Ok(())
    }

    /// Serialize to the JSON config schema.
    pub fn to_config(&self) -> LatticeConfig {
        LatticeConfig {
            lattice_vectors: self.lattice_vectors,
            vertices: self
                .vertices
                .iter()
                .zip(&self.vertex_labels)
                .enumerate()
                .filter(|(i, _)| !self.is_generated_vertex(*i))
                .map(|(_, x)| x)
                .map(|(p, l)| VertexConfig { id: VertexId::Str(l.clone()), pos: *p })
                .collect(),
            identifications: self
                .identifications
                .iter()
                .filter(|id| !self.is_generated_vertex(id.b))
                .map(|id| IdentificationConfig {
                    a: VertexId::Str(self.vertex_labels[id.a].clone()),
                    b: VertexId::Str(self.vertex_labels[id.b].clone()),
                    shift: id.shift,
                })
                .collect(),
            beams: self
                .beams
                .iter()
                .filter(|b| !self.is_generated_stub(b))
                .map(|b| BeamConfig {
                    v0: VertexId::Str(self.vertex_labels[b.start_vertex].clone()),
                    v1: VertexId::Str(self.vertex_labels[b.end_vertex].clone()),
                    component: b.component,
                    material: b.material,
                    tangent: None,
                    normal: None,
                    attachment: b.attachment.as_ref().map(|a| AttachmentConfig {
                        mode: a.mode,
                        v0: a.ends[0].map(|t| self.target_config(t)),
                        v1: a.ends[1].map(|t| self.target_config(t)),
                        material: None,
                    }),
                })
                .collect(),
        }
    }

    fn target_config(&self, t: VertexImage) -> TargetConfig {
        TargetConfig { vertex: VertexId::Str(self.vertex_labels[t.vertex].clone()), shift: t.shift }
    }

    fn is_generated_stub(&self, b: &Beam) -> bool {
        b.component == Component::Stiff
            && self.beams.iter().any(|s| {
                matches!(&s.attachment, Some(a) if a.mode == AttachmentMode::Stub)
                    && (s.start_vertex == b.start_vertex || s.end_vertex == b.start_vertex)
            })
    }

    fn is_generated_vertex(&self, v: usize) -> bool {
        self.vertex_labels[v].starts_with(STUB_PREFIX)
    }
}

const STUB_PREFIX: &str = "__stub";

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut y = x;
        while self.parent[y] != r {
            let next = self.parent[y];
            self.parent[y] = r;
            y = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb] = ra;
        }
    }
}

// ---------------------------------------------------------------------------
// JSON config

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexId {
    Int(i64),
    Str(String),
}

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VertexId::Int(i) => write!(f, "{i}"),
            VertexId::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub lattice_vectors: [Vec2; 2],
    pub vertices: Vec<VertexConfig>,
    #[serde(default)]
    pub identifications: Vec<IdentificationConfig>,
    pub beams: Vec<BeamConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexConfig {
    pub id: VertexId,
    pub pos: Vec2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationConfig {
    pub a: VertexId,
    pub b: VertexId,
    pub shift: [i32; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub v0: VertexId,
    pub v1: VertexId,
    pub component: Component,
    pub material: MaterialParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangent: Option<Vec2>,
    /// Accepted for compatibility and ignored; normals are always recomputed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<Vec2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment: Option<AttachmentConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachmentConfig {
    pub mode: AttachmentMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<TargetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1: Option<TargetConfig>,
    /// Stub material; defaults to the material of a stiff beam at the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub vertex: VertexId,
    #[serde(default)]
    pub shift: [i32; 2],
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Read and validate a lattice config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<UnitCellGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<UnitCellGraph> {
    let cfg: LatticeConfig = serde_json::from_str(text).map_err(parse_error)?;
    from_config(&cfg)
}

pub fn from_config(cfg: &LatticeConfig) -> Result<UnitCellGraph> {
    let mut index: BTreeMap<VertexId, usize> = BTreeMap::new();
    let mut vertices = Vec::with_capacity(cfg.vertices.len());
    let mut labels = Vec::with_capacity(cfg.vertices.len());
    for v in &cfg.vertices {
        if index.insert(v.id.clone(), vertices.len()).is_some() {
            return Err(Error::Validation(format!("duplicate vertex id {}", v.id)));
        }
        if !(v.pos[0].is_finite() && v.pos[1].is_finite()) {
            return Err(Error::Validation(format!("vertex {} has a non-finite position", v.id)));
        }
        vertices.push(v.pos);
        labels.push(v.id.to_string());
    }
    let lookup = |id: &VertexId, what: &str| -> Result<usize> {
        index.get(id).copied().ok_or_else(|| Error::Validation(format!("{what} refers to unknown vertex {id}")))
    };

    let mut g = UnitCellGraph {
        lattice_vectors: cfg.lattice_vectors,
        vertices,
        vertex_labels: labels,
        identifications: Vec::new(),
        beams: Vec::new(),
        rigid_links: Vec::new(),
        clamped: BTreeSet::new(),
        warnings: Vec::new(),
    };
    for id in &cfg.identifications {
        g.identifications.push(Identification {
            a: lookup(&id.a, "identification")?,
            b: lookup(&id.b, "identification")?,
            shift: id.shift,
        });
    }

    let mut pending_stubs = Vec::new();
    for (i, bc) in cfg.beams.iter().enumerate() {
        let v0 = lookup(&bc.v0, "beam")?;
        let v1 = lookup(&bc.v1, "beam")?;
        let mut beam = make_beam(&g, v0, v1, bc.material, bc.component)?;
        if let Some(t) = bc.tangent {
            let n = norm(t);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Validation(format!("beam {i} has a degenerate tangent")));
            }
            let unit = [t[0] / n, t[1] / n];
            if (n - 1.0).abs() > 1e-12 {
                let msg = format!("beam {i}: tangent {t:?} renormalized to unit length");
                log::warn!("{msg}");
                g.warnings.push(msg);
            }
            if dot(unit, beam.tangent) < 1.0 - 1e-9 {
                return Err(Error::Validation(format!("beam {i} tangent disagrees with its vertex positions")));
            }
        }
        if let Some(ac) = &bc.attachment {
            let ends = [
                ac.v0
                    .as_ref()
                    .map(|t| -> Result<VertexImage> {
                        Ok(VertexImage { vertex: lookup(&t.vertex, "attachment")?, shift: t.shift })
                    })
                    .transpose()?,
                ac.v1
                    .as_ref()
                    .map(|t| -> Result<VertexImage> {
                        Ok(VertexImage { vertex: lookup(&t.vertex, "attachment")?, shift: t.shift })
                    })
                    .transpose()?,
            ];
            if ac.mode != AttachmentMode::Free && bc.component != Component::Soft {
                return Err(Error::Validation(format!("beam {i}: only soft beams take attachments")));
            }
            beam.attachment = Some(Attachment { mode: ac.mode, ends });
            if ac.mode == AttachmentMode::Stub {
                pending_stubs.push((i, ac.material));
            }
        }
        g.beams.push(beam);
    }
    attach(&mut g, &pending_stubs)?;
    g.validate()?;
    Ok(g)
}

fn make_beam(g: &UnitCellGraph, v0: usize, v1: usize, material: MaterialParams, component: Component) -> Result<Beam> {
    let p = g.vertices[v0];
    let q = g.vertices[v1];
    let d = [q[0] - p[0], q[1] - p[1]];
    let length = norm(d);
    if length <= GEOM_TOL {
        return Err(Error::Validation(format!("beam {}-{} has zero length", g.vertex_labels[v0], g.vertex_labels[v1])));
    }
    let tangent = [d[0] / length, d[1] / length];
    Ok(Beam {
        start_vertex: v0,
        end_vertex: v1,
        length,
        tangent,
        normal: rot90(tangent),
        material,
        component,
        attachment: None,
    })
}

/// Expand attachments into rigid links and stub beams.
fn attach(g: &mut UnitCellGraph, stub_materials: &[(usize, Option<MaterialParams>)]) -> Result<()> {
    let stub_material: BTreeMap<usize, Option<MaterialParams>> = stub_materials.iter().copied().collect();
    let topo = g.topology()?;
    let nbeams = g.beams.len();
    for i in 0..nbeams {
        let Some(att) = g.beams[i].attachment.clone() else { continue };
        let ends = [g.beams[i].start_vertex, g.beams[i].end_vertex];
        for (end, target) in att.ends.iter().enumerate() {
            let Some(target) = *target else { continue };
            if target.vertex >= g.vertices.len() {
                return Err(Error::Validation(format!("beam {i}: attachment target out of range")));
            }
            match att.mode {
                AttachmentMode::Free => {}
                AttachmentMode::Rigid => g.rigid_links.push(RigidLink { slave: ends[end], master: target }),
                AttachmentMode::Stub => {
                    let material = match stub_material.get(&i).copied().flatten() {
                        Some(m) => m,
                        None => g
                            .beams
                            .iter()
                            .find(|b| {
                                b.component == Component::Stiff
                                    && (topo.root[b.start_vertex] == topo.root[target.vertex]
                                        || topo.root[b.end_vertex] == topo.root[target.vertex])
                            })
                            .map(|b| b.material)
                            .ok_or_else(|| Error::Validation(format!("beam {i}: stub target is not a stiff vertex")))?,
                    };
                    let far = if target.shift == [0, 0] {
                        target.vertex
                    } else {
                        let pos = g.image_position(target);
                        let v = g.vertices.len();
                        g.vertices.push(pos);
                        g.vertex_labels.push(format!("{STUB_PREFIX}{i}_{end}"));
                        g.identifications.push(Identification { a: target.vertex, b: v, shift: target.shift });
                        v
                    };
                    let stub = make_beam(g, ends[end], far, material, Component::Stiff)?;
                    g.beams.push(stub);
                }
            }
        }
    }
    Ok(())
}

/// The square network with one inclined soft segment per cell.
///
/// The stiff cross consists of the lines `x = 0` and `y = 0` (mod 1), so the
/// cell `[0, 1]^2` holds one horizontal and one vertical beam meeting at the
/// corner joint. The soft segment of length `2a` is centered at
/// `(1/2, 1/2)`, the middle of the square hole, and inclined by `alpha`
/// degrees. Both of its endpoints are tied to the nearest image of the
/// joint by rigid links.
pub fn build_square_example(
    alpha_deg: f64,
    half_length: f64,
    stiff: MaterialParams,
    soft: MaterialParams,
) -> Result<UnitCellGraph> {
    if !(alpha_deg > 0.0 && alpha_deg < 90.0) {
        return Err(Error::Domain(format!("inclination must lie strictly between 0 and 90 degrees, got {alpha_deg}")));
    }
    if !(half_length > 0.0 && half_length.is_finite()) {
        return Err(Error::Domain(format!("half length must be positive, got {half_length}")));
    }
    stiff.validate()?;
    soft.validate()?;
    let alpha = alpha_deg.to_radians();
    let t = [alpha.cos(), alpha.sin()];
    let extent = 2.0 * half_length * t[0].abs().max(t[1].abs());
    if extent >= 1.0 {
        return Err(Error::GeometryOverflow(format!(
            "segment of length {} at {alpha_deg} degrees spans {extent:.4} of the unit hole",
            2.0 * half_length
        )));
    }
    let c = [0.5, 0.5];
    let p0 = [c[0] - half_length * t[0], c[1] - half_length * t[1]];
    let p1 = [c[0] + half_length * t[0], c[1] + half_length * t[1]];

    let mut g = UnitCellGraph {
        lattice_vectors: [[1.0, 0.0], [0.0, 1.0]],
        vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], p0, p1],
        vertex_labels: ["joint", "joint_x", "joint_y", "soft_0", "soft_1"].map(String::from).to_vec(),
        identifications: vec![
            Identification { a: 0, b: 1, shift: [1, 0] },
            Identification { a: 0, b: 2, shift: [0, 1] },
        ],
        beams: Vec::new(),
        rigid_links: Vec::new(),
        clamped: BTreeSet::new(),
        warnings: Vec::new(),
    };
    g.beams.push(make_beam(&g, 0, 1, stiff, Component::Stiff)?);
    g.beams.push(make_beam(&g, 0, 2, stiff, Component::Stiff)?);
    let mut seg = make_beam(&g, 3, 4, soft, Component::Soft)?;
    // exact frame from the angle rather than from differenced positions
    seg.tangent = t;
    seg.normal = rot90(t);
    seg.length = 2.0 * half_length;
    seg.attachment = Some(Attachment {
        mode: AttachmentMode::Rigid,
        ends: [Some(VertexImage { vertex: 0, shift: [0, 0] }), Some(VertexImage { vertex: 0, shift: [1, 1] })],
    });
    g.beams.push(seg);
    attach(&mut g, &[])?;
    g.validate()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(alpha: f64, a: f64) -> Result<UnitCellGraph> {
        build_square_example(alpha, a, MaterialParams::unit(), MaterialParams::unit())
    }

    #[test]
    fn square_example_layout() {
        let g = square(45.0, 0.25).unwrap();
        assert_eq!(g.beams_of(Component::Stiff).count(), 2);
        assert_eq!(g.beams_of(Component::Soft).count(), 1);
        let s = g.beams_of(Component::Soft).next().unwrap();
        let c = 45f64.to_radians().cos();
        assert!((s.tangent[0] - c).abs() < 1e-15 && (s.tangent[1] - c).abs() < 1e-15);
        assert!((s.length - 0.5).abs() < 1e-15);
        let topo = g.topology().unwrap();
        assert_eq!(topo.root[1], 0);
        assert_eq!(topo.root[2], 0);
        assert_eq!(topo.offset[1], [1, 0]);
    }

    #[test]
    fn thirty_degree_frame() {
        let g = square(30.0, 0.2).unwrap();
        let s = g.beams_of(Component::Soft).next().unwrap();
        let h = 3f64.sqrt() / 2.0;
        assert!((s.tangent[0] - h).abs() < 1e-12 && (s.tangent[1] - 0.5).abs() < 1e-12);
        assert!((s.normal[0] + 0.5).abs() < 1e-12 && (s.normal[1] - h).abs() < 1e-12);
    }

    #[test]
    fn overflow_and_domain() {
        assert!(matches!(square(45.0, 0.9), Err(Error::GeometryOverflow(_))));
        assert!(matches!(square(0.0, 0.2), Err(Error::Domain(_))));
        assert!(matches!(square(90.0, 0.2), Err(Error::Domain(_))));
        assert!(matches!(square(120.0, 0.2), Err(Error::Domain(_))));
    }

    #[test]
    fn subgraphs() {
        let g = square(45.0, 0.25).unwrap();
        let stiff = g.stiff_subgraph();
        assert_eq!(stiff.beams.len(), 2);
        assert!(stiff.rigid_links.is_empty());
        let soft = g.soft_subgraph();
        assert_eq!(soft.beams.len(), 1);
        assert_eq!(soft.clamped.iter().copied().collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn all_stiff_lattice_has_empty_soft_part() {
        let mut g = square(45.0, 0.25).unwrap();
        g.beams.retain(|b| b.component == Component::Stiff);
        g.rigid_links.clear();
        assert!(g.soft_subgraph().beams.is_empty());
    }

    #[test]
    fn soft_endpoint_on_cross_is_clamped() {
        let json = r#"{
            "lattice_vectors": [[1,0],[0,1]],
            "vertices": [{"id":0,"pos":[0,0]},{"id":1,"pos":[1,0]},{"id":2,"pos":[0,1]},{"id":3,"pos":[0.5,0.4]}],
            "identifications": [{"a":0,"b":1,"shift":[1,0]},{"a":0,"b":2,"shift":[0,1]}],
            "beams": [
              {"v0":0,"v1":1,"component":"stiff","material":{"gamma":1,"eta":1,"kappa":1,"density":1,"rotary_inertia":1}},
              {"v0":0,"v1":2,"component":"stiff","material":{"gamma":1,"eta":1,"kappa":1,"density":1,"rotary_inertia":1}},
              {"v0":0,"v1":3,"component":"soft","material":{"gamma":1,"eta":1,"kappa":1,"density":1,"rotary_inertia":1},
               "attachment":{"mode":"free"}}
            ]}"#;
        let g = parse_config(json).unwrap();
        let soft = g.soft_subgraph();
        assert!(soft.clamped.contains(&0));
        assert!(!soft.clamped.contains(&3));
    }

    #[test]
    fn config_round_trip() {
        let g = square(45.0, 0.25).unwrap();
        let text = serde_json::to_string_pretty(&g.to_config()).unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(back.beams.len(), g.beams.len());
        for (x, y) in back.beams.iter().zip(&g.beams) {
            assert!((x.length - y.length).abs() < 1e-12);
            assert!((x.tangent[0] - y.tangent[0]).abs() < 1e-12);
            assert!((x.tangent[1] - y.tangent[1]).abs() < 1e-12);
            assert_eq!(x.component, y.component);
        }
        assert_eq!(back.rigid_links, g.rigid_links);
        assert_eq!(back.identifications, g.identifications);
    }

    #[test]
    fn disconnected_stiff_part_rejected() {
        // horizontal lines only: connected along x, not along y
        let json = r#"{
            "lattice_vectors": [[1,0],[0,1]],
            "vertices": [{"id":"a","pos":[0,0]},{"id":"b","pos":[1,0]}],
            "identifications": [{"a":"a","b":"b","shift":[1,0]}],
            "beams": [{"v0":"a","v1":"b","component":"stiff","material":{"gamma":1,"eta":1,"kappa":1,"density":1,"rotary_inertia":1}}]
        }"#;
        let err = parse_config(json).unwrap_err();
        assert!(err.to_string().contains("stiff component not periodically connected"), "{err}");
    }

    #[test]
    fn tangent_renormalized_with_warning() {
        let mut cfg = square(45.0, 0.25).unwrap().to_config();
        cfg.beams[0].tangent = Some([2.0, 0.0]);
        cfg.beams[0].normal = Some([0.3, 0.3]);
        let g = from_config(&cfg).unwrap();
        assert_eq!(g.beams[0].tangent, [1.0, 0.0]);
        assert_eq!(g.beams[0].normal, [0.0, 1.0]);
        assert_eq!(g.warnings.len(), 1);
    }

    #[test]
    fn parse_error_reports_position() {
        let err = parse_config("{\n  \"lattice_vectors\": [[1,0],[0,1]],\n  \"vertices\": 3\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn inconsistent_identification() {
        let ids = [Identification { a: 0, b: 1, shift: [1, 0] }, Identification { a: 0, b: 1, shift: [0, 0] }];
        assert!(matches!(Topology::resolve(2, &ids), Err(Error::Structure(_))));
    }

    #[test]
    fn dangling_soft_endpoint_rejected() {
        let mut cfg = square(45.0, 0.25).unwrap().to_config();
        cfg.beams[2].attachment = None;
        let err = from_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("dangling"), "{err}");
    }

    #[test]
    fn stub_attachment_adds_stiff_beams() {
        let mut cfg = square(45.0, 0.25).unwrap().to_config();
        cfg.beams[2].attachment.as_mut().unwrap().mode = AttachmentMode::Stub;
        let g = from_config(&cfg).unwrap();
        assert_eq!(g.beams_of(Component::Stiff).count(), 4);
        assert!(g.rigid_links.is_empty());
        let soft = g.soft_subgraph();
        assert_eq!(soft.clamped.len(), 2);
        // the generated stubs are not written back out
        assert_eq!(g.to_config().beams.len(), 3);
    }

    #[test]
    fn tiling_size_does_not_matter() {
        let g = square(30.0, 0.2).unwrap();
        assert!(g.stiff_connected_on_tiling(3).unwrap());
        assert!(g.stiff_connected_on_tiling(5).unwrap());
        let mut h = g.clone();
        h.beams.remove(1);
        assert!(!h.stiff_connected_on_tiling(3).unwrap());
        assert!(!h.stiff_connected_on_tiling(5).unwrap());
    }
}
