//! Periodic cell problems on the stiff skeleton and the effective
//! elasticity tensor they define.
//!
//! For a constant macroscopic strain `e`, each stiff beam sees an axial
//! strain `tau . e tau` and a shear strain `n . e tau`. The corrector
//! `N^{jl}` is the periodic field that minimises the beam energy with the
//! unit strain `e = e_j (x) e_l` added in; the tensor entries are the
//! energy products of (source + corrector) pairs, summed over one cell.

use faer::Mat;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_load, assemble_sparse, effective_shear, element_exprs, for_each_element, node_to_local, strain_operators,
    BeamMesh, Constraints, DofField, DofLayout, ShearQuadrature,
};
use crate::lattice::{Component, UnitCellGraph};
use crate::linalg::{init_sequential, spd_solve};

/// Asymmetry of the computed tensor tolerated before symmetrization.
pub const ASYMMETRY_TOL: f64 = 1e-10;

pub type Tensor4 = [[[[f64; 2]; 2]; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellOptions {
    pub quadrature: ShearQuadrature,
    /// Mesh node whose displacement is held at zero; defaults to the start
    /// vertex of the first stiff beam. Vertices are the first mesh nodes.
    pub pin: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct CellCorrector {
    /// One-based strain indices.
    pub j: usize,
    pub l: usize,
    pub field: DofField,
    /// Mesh node at which `(u, v)` were pinned to zero.
    pub pinned_vertex: usize,
    /// `|K x - f| / |f|` over all unknowns, pinned rows included.
    pub residual: f64,
    reduced: Vec<f64>,
}

impl CellCorrector {
    /// Values in the reduced unknowns of the periodic layout.
    pub fn reduced(&self) -> &[f64] {
        &self.reduced
    }
}

/// The four correctors together with the mesh and layout they live on.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub graph: UnitCellGraph,
    pub mesh: BeamMesh,
    pub layout: DofLayout,
    pub quadrature: ShearQuadrature,
    /// Indexed by `2 (j - 1) + (l - 1)`.
    pub correctors: Vec<CellCorrector>,
    stiffness: Mat<f64>,
}

fn source(beam: &crate::lattice::Beam, j: usize, l: usize) -> (f64, f64) {
    let (t, n) = (beam.tangent, beam.normal);
    (t[j] * t[l], n[j] * t[l])
}

fn stiff_only(g: &UnitCellGraph) -> UnitCellGraph {
    if g.beams.iter().all(|b| b.component == Component::Stiff) {
        g.clone()
    } else {
        g.stiff_subgraph()
    }
}

/// Solve all four cell problems with one factorization.
pub fn solve_cell_problems(g: &UnitCellGraph, h: f64, opts: CellOptions) -> Result<CellSolution> {
    init_sequential();
    let gs = stiff_only(g);
    if gs.beams.is_empty() {
        return Err(Error::Singular("no stiff beams".into()));
    }
    let mesh = BeamMesh::new(&gs, h)?;
    let ops = assemble_sparse(&gs, &mesh, &Constraints::Periodic, opts.quadrature, |_| (1.0, 1.0))?;
    let layout = ops.layout.clone();
    let n = layout.dof_count;
    let mut k = Mat::<f64>::zeros(n, n);
    for &(i, j, v) in &ops.stiffness {
        k[(i, j)] += v.re;
    }

    let pin = opts.pin.unwrap_or(gs.beams[0].start_vertex);
    let pin_dofs: Vec<usize> = (0..2)
        .map(|c| match layout.nodes.get(pin).map(|e| e[c].as_slice()) {
            Some([(i, _)]) => Ok(*i),
            _ => Err(Error::Domain(format!("vertex {pin} cannot be pinned"))),
        })
        .collect::<Result<_>>()?;
    let free: Vec<usize> = (0..n).filter(|i| !pin_dofs.contains(i)).collect();

    let mut loads = Vec::with_capacity(4);
    for j in 0..2 {
        for l in 0..2 {
            let f = assemble_load(&gs, &mesh, &layout, |_, beam, he| {
                let [ba, _, bs] = strain_operators(he);
                let m = &beam.material;
                let ks = effective_shear((m.gamma, m.eta, m.kappa), he, opts.quadrature);
                let (sa, ss) = source(beam, j, l);
                let mut out = [0.0; 6];
                for a in 0..6 {
                    out[a] = -he * (m.gamma * sa * ba[a] + ks * ss * bs[a]);
                }
                out
            });
            loads.push(f.into_iter().map(|z| z.re).collect::<Vec<f64>>());
        }
    }

    let kff = Mat::<f64>::from_fn(free.len(), free.len(), |a, b| k[(free[a], free[b])]);
    let rhs = Mat::<f64>::from_fn(free.len(), 4, |a, c| loads[c][free[a]]);
    let sol = spd_solve(&kff, &rhs)?;

    let mut correctors = Vec::with_capacity(4);
    for c in 0..4 {
        let mut x = vec![0.0; n];
        for (a, &i) in free.iter().enumerate() {
            x[i] = sol[(a, c)];
        }
        let f = &loads[c];
        let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut rnorm = 0.0;
        for i in 0..n {
            let r: f64 = (0..n).map(|jj| k[(i, jj)] * x[jj]).sum::<f64>() - f[i];
            rnorm += r * r;
        }
        let residual = if fnorm > 0.0 { rnorm.sqrt() / fnorm } else { rnorm.sqrt() };
        correctors.push(CellCorrector {
            j: c / 2 + 1,
            l: c % 2 + 1,
            field: DofField::from_real(&layout, &x),
            pinned_vertex: pin,
            residual,
            reduced: x,
        });
    }
    Ok(CellSolution { graph: gs, mesh, layout, quadrature: opts.quadrature, correctors, stiffness: k })
}

/// One cell problem; `j, l` are one-based.
pub fn solve_cell_problem(g_stiff: &UnitCellGraph, j: usize, l: usize, h: f64) -> Result<CellCorrector> {
    if !(1..=2).contains(&j) || !(1..=2).contains(&l) {
        return Err(Error::Domain(format!("strain indices must be 1 or 2, got ({j}, {l})")));
    }
    let mut s = solve_cell_problems(g_stiff, h, CellOptions::default())?;
    Ok(s.correctors.swap_remove(2 * (j - 1) + (l - 1)))
}

impl CellSolution {
    /// Element-wise total strains `(axial, curvature, shear)` of source
    /// `(j, l)` plus the reduced field `x`.
    fn total_strains(&self, j: usize, l: usize, x: &[f64]) -> Vec<(f64, [f64; 3], f64)> {
        let mut out = Vec::with_capacity(self.mesh.element_count());
        for_each_element(&self.mesh, |b, _, nodes, he| {
            let beam = &self.graph.beams[b];
            let ex = element_exprs(&self.layout, nodes);
            let mut glob = [0.0; 6];
            for a in 0..6 {
                glob[a] = ex[a].iter().map(|&(i, c)| c.re * x[i]).sum();
            }
            let to_loc = |o: usize| {
                let z = node_to_local(beam, [0, 1, 2].map(|k| faer::c64::new(glob[o + k], 0.0)));
                z.map(|v| v.re)
            };
            let (p, q) = (to_loc(0), to_loc(3));
            let loc = [p[0], p[1], p[2], q[0], q[1], q[2]];
            let ops = strain_operators(he);
            let d = |r: &[f64; 6]| (0..6).map(|a| r[a] * loc[a]).sum::<f64>();
            let (sa, ss) = if j < 2 { source(beam, j, l) } else { (0.0, 0.0) };
            let m = &beam.material;
            let ks = effective_shear((m.gamma, m.eta, m.kappa), he, self.quadrature);
            out.push((he, [sa + d(&ops[0]), d(&ops[1]), ss + d(&ops[2])], ks));
        });
        out
    }

    /// Energy product of two (source + field) pairs, `a` and `b` given as
    /// zero-based strain indices with their reduced fields.
    fn energy_product(&self, a: (usize, usize, &[f64]), b: (usize, usize, &[f64])) -> f64 {
        let ea = self.total_strains(a.0, a.1, a.2);
        let eb = self.total_strains(b.0, b.1, b.2);
        let mut s = 0.0;
        let mut idx = 0;
        for (bi, be) in self.mesh.beams.iter().enumerate() {
            let m = self.graph.beams[bi].material;
            for _ in 0..be.elements {
                let (he, x, ks) = ea[idx];
                let y = eb[idx].1;
                s += he * (m.gamma * x[0] * y[0] + m.eta * x[1] * y[1] + ks * x[2] * y[2]);
                idx += 1;
            }
        }
        s
    }

    /// Raw tensor before any symmetrization.
    pub fn raw_tensor(&self) -> Tensor4 {
        let mut c = [[[[0.0; 2]; 2]; 2]; 2];
        for j in 0..2 {
            for l in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        let x = &self.correctors[2 * j + l].reduced;
                        let y = &self.correctors[2 * p + q].reduced;
                        c[j][l][p][q] = self.energy_product((j, l, x), (p, q, y));
                    }
                }
            }
        }
        c
    }

    /// Cell energy of the macroscopic strain `e` plus an arbitrary periodic
    /// field `x` (reduced unknowns), with the same quadrature as the tensor.
    pub fn cell_energy(&self, e: [[f64; 2]; 2], x: &[f64]) -> f64 {
        // build the combined source element by element
        let mut s = 0.0;
        let zero = vec![0.0; x.len()];
        let strains: Vec<Vec<(f64, [f64; 3], f64)>> = (0..4).map(|c| self.total_strains(c / 2, c % 2, &zero)).collect();
        let fld = self.total_strains(2, 2, x);
        let mut idx = 0;
        for (bi, be) in self.mesh.beams.iter().enumerate() {
            let m = self.graph.beams[bi].material;
            for _ in 0..be.elements {
                let (he, mut t, ks) = fld[idx];
                for c in 0..4 {
                    let w = e[c / 2][c % 2];
                    for k in 0..3 {
                        t[k] += w * strains[c][idx].1[k];
                    }
                }
                s += 0.5 * he * (m.gamma * t[0] * t[0] + m.eta * t[1] * t[1] + ks * t[2] * t[2]);
                idx += 1;
            }
        }
        s
    }

    /// Stiffness of the periodic problem in reduced unknowns.
    pub fn stiffness(&self) -> &Mat<f64> {
        &self.stiffness
    }
}

/// Effective tensor `C_{jlpq}`, stored in full and summarised in Voigt form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogenizedTensor {
    pub c: Tensor4,
}

impl HomogenizedTensor {
    /// Largest violation of the major and minor symmetries.
    pub fn asymmetry(c: &Tensor4) -> f64 {
        let mut r: f64 = 0.0;
        for j in 0..2 {
            for l in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        let v = c[j][l][p][q];
                        r = r.max((v - c[p][q][j][l]).abs());
                        r = r.max((v - c[l][j][p][q]).abs());
                        r = r.max((v - c[j][l][q][p]).abs());
                    }
                }
            }
        }
        r
    }

    /// Symmetrize a computed tensor, rejecting relative asymmetry above [`ASYMMETRY_TOL`].
    pub fn from_raw(c: Tensor4) -> Result<Self> {
        let scale = c.iter().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let res = Self::asymmetry(&c);
        if res > ASYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Asymmetry { residual: res / scale });
        }
        let mut s = [[[[0.0; 2]; 2]; 2]; 2];
        for j in 0..2 {
            for l in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        s[j][l][p][q] = (c[j][l][p][q]
                            + c[l][j][p][q]
                            + c[j][l][q][p]
                            + c[l][j][q][p]
                            + c[p][q][j][l]
                            + c[q][p][j][l]
                            + c[p][q][l][j]
                            + c[q][p][l][j])
                            / 8.0;
                    }
                }
            }
        }
        Ok(HomogenizedTensor { c: s })
    }

    /// Voigt matrix in the order `(e11, e22, 2 e12)`.
    pub fn voigt(&self) -> [[f64; 3]; 3] {
        let idx = [(0, 0), (1, 1), (0, 1)];
        let mut v = [[0.0; 3]; 3];
        for (a, &(j, l)) in idx.iter().enumerate() {
            for (b, &(p, q)) in idx.iter().enumerate() {
                v[a][b] = self.c[j][l][p][q];
            }
        }
        v
    }

    /// `C_{jlpq} e_{jl} e_{pq}`.
    pub fn energy(&self, e: [[f64; 2]; 2]) -> f64 {
        let mut s = 0.0;
        for j in 0..2 {
            for l in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        s += self.c[j][l][p][q] * e[j][l] * e[p][q];
                    }
                }
            }
        }
        s
    }

    /// Acoustic tensor `Q_{jp} = C_{jlpq} k_l k_q`.
    pub fn acoustic(&self, k: [f64; 2]) -> [[f64; 2]; 2] {
        let mut q = [[0.0; 2]; 2];
        for j in 0..2 {
            for p in 0..2 {
                for l in 0..2 {
                    for r in 0..2 {
                        q[j][p] += self.c[j][l][p][r] * k[l] * k[r];
                    }
                }
            }
        }
        q
    }

    /// Smallest eigenvalue of the Voigt matrix with the shear row scaled
    /// so the quadratic form on symmetric strains is represented exactly.
    pub fn coercivity(&self) -> f64 {
        let v = self.voigt();
        // E(e) = w^T V w with w = (e11, e22, 2 e12) and |e|^2 = w1^2 + w2^2 + w3^2 / 2
        let s = [1.0, 1.0, std::f64::consts::SQRT_2];
        let m = Mat::<f64>::from_fn(3, 3, |i, j| v[i][j] * s[i] * s[j]);
        m.self_adjoint_eigenvalues(faer::Side::Lower).map(|e| e[0]).unwrap_or(f64::NAN)
    }

    /// Largest relative entrywise deviation from another tensor.
    pub fn max_rel_error(&self, other: &HomogenizedTensor) -> f64 {
        let scale = other.c.iter().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut e: f64 = 0.0;
        for (x, y) in self.c.iter().flatten().flatten().flatten().zip(other.c.iter().flatten().flatten().flatten()) {
            let d = (x - y).abs();
            e = e.max(if y.abs() > 1e-14 * scale { d / y.abs() } else { d / scale });
        }
        e
    }
}

/// Effective tensor of the stiff part of `g` on a mesh of size `h`.
pub fn homogenized_tensor(g_stiff: &UnitCellGraph, h: f64) -> Result<HomogenizedTensor> {
    homogenized_tensor_with(g_stiff, h, CellOptions::default())
}

pub fn homogenized_tensor_with(g: &UnitCellGraph, h: f64, opts: CellOptions) -> Result<HomogenizedTensor> {
    let sol = solve_cell_problems(g, h, opts)?;
    HomogenizedTensor::from_raw(sol.raw_tensor())
}

/// Tensor of the square cross with stiffnesses `(gamma, eta, kappa)`:
/// `C1111 = C2222 = gamma`, `C1212 = 6 eta kappa / (12 eta + kappa)`, no
/// coupling between the normal strains.
pub fn appendix_tensor_closed_form(gamma: f64, eta: f64, kappa: f64) -> Result<HomogenizedTensor> {
    for (name, v) in [("gamma", gamma), ("eta", eta), ("kappa", kappa)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let shear = 6.0 * eta * kappa / (12.0 * eta + kappa);
    let mut c = [[[[0.0; 2]; 2]; 2]; 2];
    c[0][0][0][0] = gamma;
    c[1][1][1][1] = gamma;
    for (j, l) in [(0, 1), (1, 0)] {
        for (p, q) in [(0, 1), (1, 0)] {
            c[j][l][p][q] = shear;
        }
    }
    Ok(HomogenizedTensor { c })
}
