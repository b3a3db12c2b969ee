//! Clamped soft-part response and the frequency-dependent matrix `beta`.
//!
//! At frequency `lambda` the soft beams, clamped where they meet the stiff
//! skeleton, are driven by a unit rigid translation `e_j` of the skeleton.
//! Their relative response `X^j` solves `(K0 - lambda M0) X^j = lambda F^j`
//! with `F^j` the mass-weighted translation, and
//!
//! ```text
//! beta_jp = lambda * (mass of the cell) * delta_jp + lambda * F^p . X^j
//! ```
//!
//! The signs of the eigenvalues of `beta` decide whether the limit medium
//! passes two, one or no waves at that frequency.

pub mod closed_form;
pub mod scan;

use crate::error::{Error, PoleKind, Result};
use crate::fem::{
    assemble_load, assemble_sparse, element_matrices_with, BeamMesh, Constraints, DofField, DofLayout, ShearQuadrature,
};
use crate::lattice::{UnitCellGraph, Vec2};
use crate::linalg::{bandwidth, reverse_cuthill_mckee, BandLu, BandMatrix};

pub use closed_form::{beta1_closed, beta2_closed, transverse_mode_closed, ClosedFormParams, TransverseMode};
pub use scan::{scan_gaps, GapInterval, ScanMode};

/// Eigenvalues of `beta` within this distance of zero count as zero.
pub const SIGN_TOL: f64 = 1e-10;
/// Squared load coupling, relative to the soft mass, below which a clamped
/// mode is invisible to `beta`.
pub const ACTIVE_POLE_TOL: f64 = 1e-10;
/// Condition estimate of `K0 - lambda M0` above which the solve is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Exclusion radius around a pole.
pub fn pole_radius(pole: f64) -> f64 {
    (1e-9 * pole.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Classification {
    /// Both eigenvalues positive: two propagating modes.
    Band,
    /// Both negative: nothing propagates.
    FullGap,
    /// Opposite signs: one polarization propagates.
    WeakGap,
    /// Too close to a clamped soft eigenvalue to say.
    Resonance,
}

impl Classification {
    pub fn from_eigenvalues(e: [f64; 2]) -> Self {
        let neg = e.iter().filter(|&&x| x < -SIGN_TOL).count();
        let pos = e.iter().filter(|&&x| x > SIGN_TOL).count();
        match (neg, pos) {
            (2, _) => Classification::FullGap,
            (1, 1) => Classification::WeakGap,
            _ => Classification::Band,
        }
    }

    /// Propagating limit modes per direction.
    pub fn mode_count(self) -> Option<usize> {
        match self {
            Classification::Band => Some(2),
            Classification::WeakGap => Some(1),
            Classification::FullGap => Some(0),
            Classification::Resonance => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Band => "band",
            Classification::FullGap => "full_gap",
            Classification::WeakGap => "weak_gap",
            Classification::Resonance => "resonance",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaMatrix {
    pub lambda: f64,
    pub entries: [[f64; 2]; 2],
    /// Ascending.
    pub eigenvalues: [f64; 2],
    /// Unit eigenvectors, `eigenvectors[i]` belonging to `eigenvalues[i]`.
    pub eigenvectors: [Vec2; 2],
    pub classification: Classification,
}

impl BetaMatrix {
    /// Symmetrize, diagonalize and classify.
    pub fn new(lambda: f64, b: [[f64; 2]; 2]) -> Self {
        let off = 0.5 * (b[0][1] + b[1][0]);
        let entries = [[b[0][0], off], [off, b[1][1]]];
        let (eigenvalues, eigenvectors) = sym2_eigen(entries);
        BetaMatrix {
            lambda,
            entries,
            eigenvalues,
            eigenvectors,
            classification: Classification::from_eigenvalues(eigenvalues),
        }
    }

    /// `beta1 tau tau^T + beta2 n n^T`.
    pub fn from_frame(lambda: f64, beta1: f64, beta2: f64, tangent: Vec2) -> Self {
        let n = [-tangent[1], tangent[0]];
        let mut b = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                b[i][j] = beta1 * tangent[i] * tangent[j] + beta2 * n[i] * n[j];
            }
        }
        Self::new(lambda, b)
    }

    pub fn norm(&self) -> f64 {
        self.eigenvalues[0].abs().max(self.eigenvalues[1].abs())
    }
}

/// Eigen-decomposition of a symmetric 2x2 matrix, ascending.
pub fn sym2_eigen(m: [[f64; 2]; 2]) -> ([f64; 2], [Vec2; 2]) {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let mean = 0.5 * (a + d);
    let r = (0.5 * (a - d)).hypot(b);
    let lo = mean - r;
    let hi = mean + r;
    // rotation angle diagonalizing the matrix
    let phi = 0.5 * (2.0 * b).atan2(a - d);
    let v_hi = [phi.cos(), phi.sin()];
    let v_lo = [-phi.sin(), phi.cos()];
    ([lo, hi], [v_lo, v_hi])
}

/// Closed-form `beta` of the square example with inclination `alpha_deg`.
pub fn beta_matrix_closed(lambda: f64, a: f64, alpha_deg: f64) -> Result<BetaMatrix> {
    let b1 = beta1_closed(lambda, a)?;
    let b2 = beta2_closed(lambda, a)?;
    let t = alpha_deg.to_radians();
    Ok(BetaMatrix::from_frame(lambda, b1, b2, [t.cos(), t.sin()]))
}

/// Soft-part operators factored for repeated solves.
#[derive(Debug, Clone)]
pub struct SoftProblem {
    pub graph: UnitCellGraph,
    pub mesh: BeamMesh,
    pub layout: DofLayout,
    /// Integral of the density over the whole cell.
    pub cell_mass: f64,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    k: BandMatrix,
    m: BandMatrix,
    /// Translation loads in permuted order.
    loads: [Vec<f64>; 2],
    top_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct SoftResonanceSolution {
    pub lambda: f64,
    /// Reduced responses to the two unit translations, layout order.
    pub responses: [Vec<f64>; 2],
    pub fields: [DofField; 2],
    /// Relative residual of the two solves.
    pub residual: f64,
}

impl SoftResonanceSolution {
    /// Response to a translation along `dir`, as local `(s, [u, v, theta])`
    /// along soft beam `b` of the soft graph.
    pub fn profile(&self, p: &SoftProblem, b: usize, dir: Vec2) -> Vec<(f64, [f64; 3])> {
        let f0 = self.fields[0].along_beam(&p.graph, &p.mesh, b);
        let f1 = self.fields[1].along_beam(&p.graph, &p.mesh, b);
        f0.iter()
            .zip(&f1)
            .map(|((s, x), (_, y))| (*s, [0, 1, 2].map(|c| dir[0] * x[c].re + dir[1] * y[c].re)))
            .collect()
    }
}

fn deterministic_start(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.7548776662).fract()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SoftProblem {
    /// Mesh and factor-ready operators of the soft part of `g`.
    pub fn new(g: &UnitCellGraph, h: f64) -> Result<Self> {
        Self::with_quadrature(g, h, ShearQuadrature::default())
    }

    pub fn with_quadrature(g: &UnitCellGraph, h: f64, quad: ShearQuadrature) -> Result<Self> {
        let gs = g.soft_subgraph();
        let clamped: Vec<usize> = gs.clamped.iter().copied().collect();
        let mesh = BeamMesh::new(&gs, h)?;
        let ops = assemble_sparse(&gs, &mesh, &Constraints::Clamped(clamped), quad, |_| (1.0, 1.0))?;
        let layout = ops.layout.clone();
        let n = layout.dof_count;

        let mut adj = vec![Vec::new(); n];
        for &(i, j, _) in &ops.stiffness {
            if i != j {
                adj[i].push(j);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let bw = bandwidth(ops.stiffness.iter().chain(&ops.mass).map(|&(i, j, _)| (i, j)), &inv);
        let mut k = BandMatrix::zeros(n, bw, bw);
        let mut m = BandMatrix::zeros(n, bw, bw);
        for &(i, j, v) in &ops.stiffness {
            k.add(inv[i], inv[j], v.re);
        }
        for &(i, j, v) in &ops.mass {
            m.add(inv[i], inv[j], v.re);
        }

        let loads = [0, 1].map(|j| {
            let f = assemble_load(&gs, &mesh, &layout, |_, beam, he| {
                let me = element_matrices_with(&beam.material, he, quad).mass;
                let c = [beam.tangent[j], beam.normal[j], 0.0, beam.tangent[j], beam.normal[j], 0.0];
                let mut out = [0.0; 6];
                for a in 0..6 {
                    out[a] = (0..6).map(|b| me[a][b] * c[b]).sum();
                }
                out
            });
            let mut p = vec![0.0; n];
            for (old, z) in f.into_iter().enumerate() {
                p[inv[old]] = z.re;
            }
            p
        });

        let mut sp =
            SoftProblem { graph: gs, mesh, layout, cell_mass: g.total_mass(), perm, k, m, loads, top_eigenvalue: 0.0 };
        sp.top_eigenvalue = sp.estimate_top_eigenvalue()?;
        Ok(sp)
    }

    pub fn dof_count(&self) -> usize {
        self.layout.dof_count
    }

    /// Rough largest eigenvalue of the clamped pencil.
    pub fn top_eigenvalue(&self) -> f64 {
        self.top_eigenvalue
    }

    fn estimate_top_eigenvalue(&self) -> Result<f64> {
        let n = self.dof_count();
        if n == 0 {
            return Ok(0.0);
        }
        let lu = self.m.lu()?;
        let mut v = deterministic_start(n);
        let mut est = 0.0;
        for _ in 0..60 {
            let mut w = self.k.matvec(&v);
            lu.solve_in_place(&mut w);
            let nv = dot(&w, &w).sqrt();
            v = w.into_iter().map(|x| x / nv).collect();
            let kv = self.k.matvec(&v);
            let mv = self.m.matvec(&v);
            est = dot(&v, &kv) / dot(&v, &mv);
        }
        Ok(est)
    }

    /// Factor `K - lambda M`, refusing shifts too close to a clamped eigenvalue.
    fn factor_checked(&self, lambda: f64) -> Result<BandLu> {
        let a = self.k.combine(1.0, &self.m, -lambda);
        let lu = a.lu().map_err(|_| discrete_pole(lambda))?;
        let (nearest, dist) = self.nearest_eigenvalue(&lu, lambda);
        let condition = self.top_eigenvalue.max(lambda) / dist.max(f64::MIN_POSITIVE);
        if dist < pole_radius(nearest) || condition > MAX_CONDITION {
            return Err(Error::NearResonance { lambda, nearest, condition });
        }
        Ok(lu)
    }

    /// Shifted inverse iteration on a factored `K - lambda M`.
    fn nearest_eigenvalue(&self, lu: &BandLu, lambda: f64) -> (f64, f64) {
        let n = self.dof_count();
        let mut v = deterministic_start(n);
        let mut mv = self.m.matvec(&v);
        let mut norm_m = dot(&v, &mv).sqrt();
        let mut dist = f64::INFINITY;
        for _ in 0..6 {
            let mut w = mv.clone();
            lu.solve_in_place(&mut w);
            let mw = self.m.matvec(&w);
            let nw = dot(&w, &mw).sqrt();
            if !(nw.is_finite() && nw > 0.0) {
                return (lambda, 0.0);
            }
            dist = norm_m / nw;
            v = w.into_iter().map(|x| x / nw).collect();
            mv = mw.into_iter().map(|x| x / nw).collect();
            norm_m = 1.0;
        }
        let kv = self.k.matvec(&v);
        (dot(&v, &kv) / dot(&v, &mv), dist)
    }

    pub fn solve(&self, lambda: f64) -> Result<SoftResonanceSolution> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be non-negative, got {lambda}")));
        }
        let n = self.dof_count();
        let mut responses = [vec![0.0; n], vec![0.0; n]];
        let mut residual: f64 = 0.0;
        if n > 0 && lambda > 0.0 {
            let lu = self.factor_checked(lambda)?;
            let a = self.k.combine(1.0, &self.m, -lambda);
            for j in 0..2 {
                let rhs: Vec<f64> = self.loads[j].iter().map(|f| lambda * f).collect();
                let mut x = rhs.clone();
                lu.solve_in_place(&mut x);
                let ax = a.matvec(&x);
                let r = ax.iter().zip(&rhs).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                let s = dot(&rhs, &rhs).sqrt();
                residual = residual.max(if s > 0.0 { r / s } else { r });
                for (new, &old) in self.perm.iter().enumerate() {
                    responses[j][old] = x[new];
                }
            }
        }
        let fields =
            [DofField::from_real(&self.layout, &responses[0]), DofField::from_real(&self.layout, &responses[1])];
        Ok(SoftResonanceSolution { lambda, responses, fields, residual })
    }

    pub fn beta(&self, lambda: f64) -> Result<BetaMatrix> {
        let sol = self.solve(lambda)?;
        Ok(self.beta_from(&sol))
    }

    pub fn beta_from(&self, sol: &SoftResonanceSolution) -> BetaMatrix {
        BetaMatrix::new(sol.lambda, self.raw_beta(sol))
    }

    /// `beta` before symmetrization.
    pub fn raw_beta(&self, sol: &SoftResonanceSolution) -> [[f64; 2]; 2] {
        let lambda = sol.lambda;
        let mut b = [[0.0; 2]; 2];
        for j in 0..2 {
            for p in 0..2 {
                let fx: f64 =
                    self.perm.iter().enumerate().map(|(new, &old)| self.loads[p][new] * sol.responses[j][old]).sum();
                b[j][p] = lambda * fx + if j == p { lambda * self.cell_mass } else { 0.0 };
            }
        }
        b
    }

    /// Number of clamped soft eigenvalues below `sigma`, or `None` when the
    /// shift sits on an eigenvalue.
    pub fn count_below(&self, sigma: f64) -> Option<usize> {
        if self.dof_count() == 0 {
            return Some(0);
        }
        self.k.combine(1.0, &self.m, -sigma).symmetric_inertia()
    }

    /// Clamped soft eigenvalues in `(0, lambda_max]` to absolute accuracy `tol`.
    pub fn eigenvalues_below(&self, lambda_max: f64, tol: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let total = self.count_below_robust(lambda_max);
        let mut k = 0;
        while k < total {
            // bisect for the (k+1)-th eigenvalue
            let (mut lo, mut hi) = (0.0, lambda_max);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if self.count_below_robust(mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + hi));
            k += 1;
        }
        out
    }

    /// Clamped eigenvalues in `(0, lambda_max]` whose modes couple to a rigid
    /// translation of the cell. Only these make `beta` blow up.
    pub fn active_poles(&self, lambda_max: f64) -> Vec<f64> {
        let soft_mass: f64 = self.graph.beams.iter().map(|b| b.material.density * b.length).sum();
        self.eigenvalues_below(lambda_max, 1e-10 * lambda_max.max(1.0))
            .into_iter()
            .filter(|&ev| {
                let phi = match self.eigenvector(ev) {
                    Some(v) => v,
                    None => return true,
                };
                let mphi = self.m.matvec(&phi);
                let norm = dot(&phi, &mphi);
                self.loads.iter().any(|f| dot(f, &phi).powi(2) > ACTIVE_POLE_TOL * norm * soft_mass)
            })
            .collect()
    }

    /// Inverse iteration next to a known eigenvalue.
    fn eigenvector(&self, ev: f64) -> Option<Vec<f64>> {
        let shift = ev * (1.0 + 1e-7) + 1e-12;
        let lu = self.k.combine(1.0, &self.m, -shift).lu().ok()?;
        let mut v = deterministic_start(self.dof_count());
        for _ in 0..4 {
            let mut w = self.m.matvec(&v);
            lu.solve_in_place(&mut w);
            let nw = dot(&w, &w).sqrt();
            if !(nw.is_finite() && nw > 0.0) {
                return None;
            }
            v = w.into_iter().map(|x| x / nw).collect();
        }
        Some(v)
    }

    pub(crate) fn count_below_robust(&self, sigma: f64) -> usize {
        let mut s = sigma;
        for _ in 0..8 {
            if let Some(c) = self.count_below(s) {
                return c;
            }
            s += 1e-9 * sigma.abs().max(1.0);
        }
        self.count_below(s).unwrap_or(0)
    }
}

/// Solve the clamped soft problem of `g` once.
pub fn solve_soft(g: &UnitCellGraph, lambda: f64, h: f64) -> Result<SoftResonanceSolution> {
    SoftProblem::new(g, h)?.solve(lambda)
}

/// `beta(lambda)` of `g` from the FE soft problem.
pub fn beta_matrix(g: &UnitCellGraph, lambda: f64, h: f64) -> Result<BetaMatrix> {
    SoftProblem::new(g, h)?.beta(lambda)
}

/// Pole error for the nearest eigenvalue, as raised by the scans.
pub(crate) fn discrete_pole(lambda: f64) -> Error {
    Error::Pole { lambda, kind: PoleKind::Discrete }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_square_example, MaterialParams};

    fn square(a: f64) -> UnitCellGraph {
        build_square_example(45.0, a, MaterialParams::unit(), MaterialParams::unit()).unwrap()
    }

    #[test]
    fn zero_frequency_response_vanishes() {
        let sol = solve_soft(&square(0.5), 0.0, 0.05).unwrap();
        assert!(sol.responses.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn classification_rules() {
        assert_eq!(Classification::from_eigenvalues([1.0, 2.0]), Classification::Band);
        assert_eq!(Classification::from_eigenvalues([-1.0, 2.0]), Classification::WeakGap);
        assert_eq!(Classification::from_eigenvalues([-1.0, -2.0]), Classification::FullGap);
        assert_eq!(Classification::from_eigenvalues([0.0, 2.0]), Classification::Band);
        assert_eq!(Classification::from_eigenvalues([-1.0, 1e-12]), Classification::Band);
    }

    #[test]
    fn sym2_eigen_reconstructs() {
        let m = [[2.0, -0.7], [-0.7, -1.3]];
        let (e, v) = sym2_eigen(m);
        for k in 0..2 {
            for i in 0..2 {
                let mv: f64 = (0..2).map(|j| m[i][j] * v[k][j]).sum();
                assert!((mv - e[k] * v[k][i]).abs() < 1e-14);
            }
        }
        assert!(e[0] <= e[1]);
    }

    #[test]
    fn fe_beta_matches_closed_form() {
        let a = 0.5;
        let p = SoftProblem::new(&square(a), a / 128.0).unwrap();
        for lambda in [0.5, 2.0, 5.0] {
            let sol = p.solve(lambda).unwrap();
            let fe = p.beta_from(&sol);
            let cf = beta_matrix_closed(lambda, a, 45.0).unwrap();
            for k in 0..2 {
                let rel = (fe.eigenvalues[k] - cf.eigenvalues[k]).abs() / cf.eigenvalues[k].abs();
                assert!(rel < 1e-4, "lambda {lambda}: {:?} vs {:?}", fe.eigenvalues, cf.eigenvalues);
            }
            let raw = p.raw_beta(&sol);
            assert!((raw[0][1] - raw[1][0]).abs() <= 1e-12 * fe.norm());
        }
    }

    #[test]
    fn near_resonance_detected() {
        let g = square(0.45);
        let p = SoftProblem::new(&g, 0.45 / 1024.0).unwrap();
        let l1 = closed_form::longitudinal_pole(1, 0.45);
        match p.solve(l1) {
            Err(Error::NearResonance { nearest, .. }) => assert!((nearest - l1).abs() < 1e-3 * l1),
            other => panic!("expected near resonance, got {other:?}"),
        }
    }

    #[test]
    fn discrete_poles_close_to_closed_form() {
        let a = 0.5;
        let p = SoftProblem::new(&square(a), a / 256.0).unwrap();
        let ev = p.eigenvalues_below(20.0, 1e-9);
        // transverse 9.628, longitudinal 9.870, odd bending 10.61
        assert_eq!(ev.len(), 3, "{ev:?}");
        assert!((ev[0] - 9.628).abs() < 5e-3);
        assert!((ev[1] - closed_form::longitudinal_pole(1, a)).abs() < 1e-3);
    }

    #[test]
    fn antisymmetric_modes_are_inactive() {
        let a = 0.5;
        let p = SoftProblem::new(&square(a), a / 256.0).unwrap();
        let all = p.eigenvalues_below(20.0, 1e-9);
        let active = p.active_poles(20.0);
        // the odd bending mode near 10.61 does not couple to translations
        assert_eq!(all.len(), 3, "{all:?}");
        assert_eq!(active.len(), 2, "{active:?}");
        assert!((active[0] - 9.628).abs() < 5e-3);
        assert!((active[1] - closed_form::longitudinal_pole(1, a)).abs() < 1e-3);
    }
}
