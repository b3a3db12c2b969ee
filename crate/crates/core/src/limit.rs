//! Effective-medium dispersion of the high-contrast limit and its comparison
//! with the scaled Bloch spectrum.

use rayon::prelude::*;

use crate::bloch::{scaled_modes, QuasiMomentum};
use crate::error::{Error, Result};
use crate::homogenization::{homogenized_tensor, HomogenizedTensor};
use crate::lattice::{ScalingParams, UnitCellGraph, Vec2};
use crate::resonance::{sym2_eigen, BetaMatrix, Classification, SoftProblem, SIGN_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct LimitMode {
    pub lambda: f64,
    pub direction: Vec2,
    /// Admissible `|k|`, descending.
    pub wavenumbers: Vec<f64>,
    /// Unit polarizations, one per wavenumber.
    pub amplitudes: Vec<Vec2>,
}

type M2 = [[f64; 2]; 2];

fn det2(m: M2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Roots `s = |k|^2` of `det(Q s - beta) = 0`, ascending, from the quadratic.
pub fn dispersion_quadratic(q: M2, beta: M2) -> Vec<f64> {
    let a = det2(q);
    let b = -(q[0][0] * beta[1][1] + q[1][1] * beta[0][0] - q[0][1] * beta[1][0] - q[1][0] * beta[0][1]);
    let c = det2(beta);
    let disc = (b * b - 4.0 * a * c).max(0.0);
    // stable form
    let t = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = if t == 0.0 { vec![0.0, 0.0] } else { vec![t / a, c / t] };
    r.sort_by(f64::total_cmp);
    r
}

/// Generalized eigenpairs of `beta A = s Q A`, ascending in `s`, with `Q`
/// symmetric positive definite.
pub fn generalized_pairs(q: M2, beta: M2) -> Result<([f64; 2], [Vec2; 2])> {
    // Cholesky of Q
    let l11 = q[0][0].sqrt();
    let l21 = q[1][0] / l11;
    let d = q[1][1] - l21 * l21;
    if !(q[0][0] > 0.0 && d > 0.0) {
        return Err(Error::Domain("acoustic tensor is not positive definite".into()));
    }
    let l22 = d.sqrt();
    // C = L^-1 beta L^-T
    let linv = [[1.0 / l11, 0.0], [-l21 / (l11 * l22), 1.0 / l22]];
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for p in 0..2 {
                for r in 0..2 {
                    c[i][j] += linv[i][p] * beta[p][r] * linv[j][r];
                }
            }
        }
    }
    let (s, y) = sym2_eigen(c);
    // A = L^-T y
    let vecs = y.map(|y| {
        let a = [linv[0][0] * y[0] + linv[1][0] * y[1], linv[1][1] * y[1]];
        let n = a[0].hypot(a[1]);
        [a[0] / n, a[1] / n]
    });
    Ok((s, vecs))
}

/// Propagating modes of the limit medium at `beta.lambda` along `direction`.
pub fn limit_modes(ch: &HomogenizedTensor, beta: &BetaMatrix, direction: Vec2) -> Result<LimitMode> {
    if beta.classification == Classification::Resonance {
        return Err(Error::Domain(format!("beta is unresolved at lambda = {}", beta.lambda)));
    }
    let n = direction[0].hypot(direction[1]);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Domain("direction must be a non-zero vector".into()));
    }
    let dir = [direction[0] / n, direction[1] / n];
    let q = ch.acoustic(dir);
    let (s, a) = generalized_pairs(q, beta.entries)?;
    // the inertia of beta fixes how many roots are positive
    let count = beta.eigenvalues.iter().filter(|&&e| e > SIGN_TOL).count();
    let mut wavenumbers = Vec::new();
    let mut amplitudes = Vec::new();
    for i in (0..2).rev().take(count) {
        wavenumbers.push(s[i].max(0.0).sqrt());
        amplitudes.push(a[i]);
    }
    Ok(LimitMode { lambda: beta.lambda, direction: dir, wavenumbers, amplitudes })
}

/// `max ||(Q |k|^2 - beta) A|| / (||beta|| ||A||)` over the modes.
pub fn dispersion_residual(ch: &HomogenizedTensor, beta: &BetaMatrix, m: &LimitMode) -> f64 {
    let q = ch.acoustic(m.direction);
    let mut r: f64 = 0.0;
    for (k, a) in m.wavenumbers.iter().zip(&m.amplitudes) {
        let s = k * k;
        let v: Vec<f64> = (0..2).map(|j| (0..2).map(|p| (q[j][p] * s - beta.entries[j][p]) * a[p]).sum()).collect();
        r = r.max(v[0].hypot(v[1]) / (beta.norm() * a[0].hypot(a[1])));
    }
    r
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub epsilon: f64,
    pub lambda_bloch: f64,
    /// Weight of the compared Bloch mode on rigid translations.
    pub translation_overlap: f64,
    pub lambda_limit: f64,
    pub rel_dev: f64,
    /// `log(dev_prev / dev) / log(eps_prev / eps)`, from the second row on.
    pub order_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub k_macro: QuasiMomentum,
    pub lambda_limit: f64,
    /// Fixed-point iterates, or bisection midpoints after a fallback.
    pub trace: Vec<f64>,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].rel_dev < w[0].rel_dev)
    }
}

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX: usize = 100;

/// Smallest `lambda` with `det(Q |k|^2 - beta(lambda)) = 0`, where `Q` is
/// the acoustic tensor along `k`. Returns the root and the iteration trace.
pub fn limit_eigenvalue(
    ch: &HomogenizedTensor,
    beta: &(dyn Fn(f64) -> Result<BetaMatrix> + Sync),
    cell_mass: f64,
    k: Vec2,
) -> Result<(f64, Vec<f64>)> {
    let kk = k[0] * k[0] + k[1] * k[1];
    if kk == 0.0 {
        return Ok((0.0, vec![0.0]));
    }
    let q = ch.acoustic(k);
    // smallest l' with Q A = l' m A
    let smallest = |m: M2| -> Result<f64> { Ok(generalized_pairs(m, q)?.0[0]) };
    // beta(l) ~ l * cell_mass near zero
    let mut l = sym2_eigen(q).0[0] / cell_mass;
    let mut trace = vec![l];
    for _ in 0..FIXED_POINT_MAX {
        let b = match beta(l) {
            Ok(b) => b,
            Err(_) => break,
        };
        let scaled = b.entries.map(|r| r.map(|x| x / l));
        let eig = sym2_eigen(scaled).0;
        if eig[0] <= 0.0 {
            break;
        }
        // smallest l' with det(Q - l' beta(l)/l) = 0
        let next = smallest(scaled)?;
        trace.push(next);
        if (next - l).abs() <= FIXED_POINT_TOL * l.abs() {
            return Ok((next, trace));
        }
        l = next;
    }
    // bisection on the smallest eigenvalue of Q - beta(l)
    let f = |l: f64| -> Result<f64> { Ok(sym2_eigen(sub(q, beta(l)?.entries)).0[0]) };
    let mut lo = 0.0;
    let mut hi = trace[0].max(1e-12);
    let mut steps = 0;
    while f(hi).map(|v| v > 0.0).unwrap_or(false) {
        lo = hi;
        hi *= 1.5;
        steps += 1;
        if steps > 200 {
            return Err(Error::NoConvergence { iterations: trace.len(), trace });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match f(mid) {
            Ok(v) if v > 0.0 => lo = mid,
            Ok(_) => hi = mid,
            // a pole before the root: the root sits below it
            Err(_) => hi = mid,
        }
        trace.push(mid);
        if hi - lo <= FIXED_POINT_TOL * hi {
            return Ok((0.5 * (lo + hi), trace));
        }
    }
    Err(Error::NoConvergence { iterations: trace.len(), trace })
}

fn sub(a: M2, b: M2) -> M2 {
    [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]]
}

/// Compare the lowest scaled Bloch eigenvalue at `exp(i eps k_macro . a)`
/// with the limit prediction, for each `eps` with contrast `eps^2`.
pub fn validate_limit(g: &UnitCellGraph, epsilons: &[f64], k_macro: QuasiMomentum, h: f64) -> Result<ValidationReport> {
    if epsilons.is_empty() {
        return Err(Error::Domain("no epsilon values given".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("epsilon values must be strictly decreasing".into()));
    }
    let ch = homogenized_tensor(&g.stiff_subgraph(), h)?;
    let soft = SoftProblem::new(g, h)?;
    let (lambda_limit, trace) = limit_eigenvalue(&ch, &|l| soft.beta(l), soft.cell_mass, k_macro.k)?;

    let bloch: Vec<(f64, f64)> = epsilons
        .par_iter()
        .map(|&eps| {
            let s = ScalingParams::new(eps)?;
            let modes = scaled_modes(g, &s, &k_macro, 3, h)?;
            Ok(modes[0])
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<ValidationRow> = Vec::with_capacity(epsilons.len());
    for (&epsilon, &(lambda_bloch, overlap)) in epsilons.iter().zip(&bloch) {
        let rel_dev = if lambda_limit != 0.0 {
            (lambda_bloch - lambda_limit).abs() / lambda_limit.abs()
        } else {
            lambda_bloch.abs()
        };
        let order_estimate = rows.last().map(|p| (p.rel_dev / rel_dev).ln() / (p.epsilon / epsilon).ln());
        rows.push(ValidationRow {
            epsilon,
            lambda_bloch,
            translation_overlap: overlap,
            lambda_limit,
            rel_dev,
            order_estimate,
        });
    }
    Ok(ValidationReport { k_macro, lambda_limit, trace, rows })
}
