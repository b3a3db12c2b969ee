//! Floquet-Bloch spectra of periodic beam lattices, physical and scaled.

use std::f64::consts::PI;
use std::io::Write;

use faer::c64;
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{assemble_sparse, contrast_scale, AssembledOperators, BeamMesh, Constraints, ShearQuadrature};
use crate::lattice::{dot, ScalingParams, UnitCellGraph, Vec2};
use crate::linalg::generalized_eigen;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiMomentum {
    pub k: Vec2,
}

/// Reciprocal vectors `b_j` with `a_i . b_j = 2 pi delta_ij`.
pub fn reciprocal_vectors(g: &UnitCellGraph) -> Result<[Vec2; 2]> {
    let [a1, a2] = g.lattice_vectors;
    let det = a1[0] * a2[1] - a1[1] * a2[0];
    if det.abs() < 1e-14 {
        return Err(Error::Validation("lattice vectors are degenerate".into()));
    }
    let s = 2.0 * PI / det;
    Ok([[a2[1] * s, -a2[0] * s], [-a1[1] * s, a1[0] * s]])
}

impl QuasiMomentum {
    pub fn new(k1: f64, k2: f64) -> Self {
        QuasiMomentum { k: [k1, k2] }
    }

    /// Same phases, with `k . a_i` brought into `(-pi, pi]`.
    pub fn reduced(&self, g: &UnitCellGraph) -> Result<Self> {
        let b = reciprocal_vectors(g)?;
        let mut k = [0.0; 2];
        for (i, a) in g.lattice_vectors.iter().enumerate() {
            let mut t = dot(self.k, *a) / (2.0 * PI);
            t -= (t - 0.5).ceil();
            k[0] += t * b[i][0];
            k[1] += t * b[i][1];
        }
        Ok(QuasiMomentum { k })
    }

    /// `exp(i k . a_j)` for both lattice vectors.
    pub fn phases(&self, g: &UnitCellGraph) -> [c64; 2] {
        g.lattice_vectors.map(|a| {
            let t = dot(self.k, a);
            c64::new(t.cos(), t.sin())
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        QuasiMomentum { k: [self.k[0] * factor, self.k[1] * factor] }
    }

    pub fn neg(&self) -> Self {
        self.scaled(-1.0)
    }
}

fn bloch_constraints(g: &UnitCellGraph, k: &QuasiMomentum) -> Result<Constraints> {
    let k = k.reduced(g)?;
    let p = k.phases(g);
    Ok(if g.clamped.is_empty() {
        Constraints::Bloch(p)
    } else {
        Constraints::BlochClamped(p, g.clamped.iter().copied().collect())
    })
}

fn lowest(ops: &AssembledOperators, n_bands: usize, vectors: bool) -> Result<(Vec<f64>, Option<Mat<c64>>)> {
    if n_bands == 0 {
        return Err(Error::Domain("at least one band is needed".into()));
    }
    if n_bands > ops.dof_count {
        return Err(Error::Domain(format!("{n_bands} bands requested but the mesh has {} unknowns", ops.dof_count)));
    }
    if 6 * n_bands > ops.dof_count {
        log::warn!("{n_bands} bands on {} unknowns: upper bands are poorly resolved", ops.dof_count);
    }
    let (mut ev, vec) = generalized_eigen(&ops.stiffness, &ops.mass, vectors)?;
    if ev.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigensolver("non-finite eigenvalue".into()));
    }
    ev.truncate(n_bands);
    let vec = vec.map(|v| v.subcols(0, n_bands).to_owned());
    Ok((ev, vec))
}

/// Operators of the physical lattice at quasi-momentum `k`.
pub fn assemble_bloch(g: &UnitCellGraph, k: &QuasiMomentum, h: f64) -> Result<AssembledOperators> {
    let mesh = BeamMesh::new(g, h)?;
    Ok(assemble_sparse(g, &mesh, &bloch_constraints(g, k)?, ShearQuadrature::default(), |_| (1.0, 1.0))?.into_dense())
}

/// Lowest `n_bands` eigenvalues `lambda = omega^2` at `k`, ascending.
pub fn dispersion_at(g: &UnitCellGraph, k: &QuasiMomentum, n_bands: usize, h: f64) -> Result<Vec<f64>> {
    Ok(lowest(&assemble_bloch(g, k, h)?, n_bands, false)?.0)
}

/// High-contrast operators on the cell, scaled by `1 / eps^2` (stiff) and
/// `delta / eps^2` (soft) against a unit mass, with phase `exp(i eps k . a)`
/// for a macroscopic quasi-momentum `k`. This pencil has the same
/// eigenvalues as the problem posed on the shrunken cell.
pub fn assemble_scaled(
    g: &UnitCellGraph,
    s: &ScalingParams,
    k_macro: &QuasiMomentum,
    h: f64,
) -> Result<AssembledOperators> {
    let mesh = BeamMesh::new(g, h)?;
    let c = bloch_constraints(g, &k_macro.scaled(s.epsilon))?;
    Ok(assemble_sparse(g, &mesh, &c, ShearQuadrature::default(), contrast_scale(s))?.into_dense())
}

pub fn scaled_dispersion(
    g: &UnitCellGraph,
    s: &ScalingParams,
    k_macro: &QuasiMomentum,
    n_bands: usize,
    h: f64,
) -> Result<Vec<f64>> {
    Ok(lowest(&assemble_scaled(g, s, k_macro, h)?, n_bands, false)?.0)
}

/// Scaled eigenpairs with each mode's weight on the two rigid translations,
/// in `[0, 1]`.
pub fn scaled_modes(
    g: &UnitCellGraph,
    s: &ScalingParams,
    k_macro: &QuasiMomentum,
    n_bands: usize,
    h: f64,
) -> Result<Vec<(f64, f64)>> {
    let ops = assemble_scaled(g, s, k_macro, h)?;
    let (ev, vec) = lowest(&ops, n_bands, true)?;
    let vec = vec.expect("vectors requested");
    let n = ops.dof_count;
    let trans: Vec<Mat<c64>> = (0..2)
        .map(|c| {
            let mut t = Mat::<c64>::zeros(n, 1);
            for &(_, first) in &ops.layout.owner {
                t[(first + c, 0)] = c64::new(1.0, 0.0);
            }
            t
        })
        .collect();
    let mut out = Vec::with_capacity(ev.len());
    for (i, &l) in ev.iter().enumerate() {
        let phi = vec.subcols(i, 1);
        let mut w = 0.0;
        for t in &trans {
            let mt = &ops.mass * t;
            let tmt = (t.adjoint() * &mt)[(0, 0)].re;
            let proj = (mt.adjoint() * phi)[(0, 0)];
            w += proj.norm_sqr() / tmt;
        }
        out.push((l, w));
    }
    Ok(out)
}

/// Corners of the Brillouin zone: `G`, `X`, `M`, `Y`.
pub fn corner(g: &UnitCellGraph, label: char) -> Result<QuasiMomentum> {
    let [b1, b2] = reciprocal_vectors(g)?;
    let k = match label {
        'G' | 'Γ' => [0.0, 0.0],
        'X' => [0.5 * b1[0], 0.5 * b1[1]],
        'Y' => [0.5 * b2[0], 0.5 * b2[1]],
        'M' => [0.5 * (b1[0] + b2[0]), 0.5 * (b1[1] + b2[1])],
        c => return Err(Error::Domain(format!("unknown Brillouin zone corner '{c}'"))),
    };
    Ok(QuasiMomentum { k })
}

/// Path through the corners named in `spec`, e.g. `GXMG`, with
/// `points_per_leg` samples per leg plus the final corner.
pub fn sample_path(g: &UnitCellGraph, spec: &str, points_per_leg: usize) -> Result<Vec<(f64, QuasiMomentum)>> {
    let corners: Vec<QuasiMomentum> = spec.chars().map(|c| corner(g, c)).collect::<Result<_>>()?;
    if corners.len() < 2 {
        return Err(Error::Domain("a path needs at least two corners".into()));
    }
    if points_per_leg == 0 {
        return Err(Error::Domain("points per leg must be positive".into()));
    }
    let mut out = Vec::new();
    let mut s0 = 0.0;
    for w in corners.windows(2) {
        let (p, q) = (w[0].k, w[1].k);
        let len = (q[0] - p[0]).hypot(q[1] - p[1]);
        for i in 0..points_per_leg {
            let t = i as f64 / points_per_leg as f64;
            out.push((s0 + t * len, QuasiMomentum::new(p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))));
        }
        s0 += len;
    }
    out.push((s0, *corners.last().unwrap()));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralGap {
    pub lo: f64,
    pub hi: f64,
    /// `sampled-path only` or `sampled-grid`.
    pub annotation: &'static str,
}

#[derive(Debug, Clone)]
pub struct BandStructure {
    /// `(path coordinate, k)`.
    pub path: Vec<(f64, QuasiMomentum)>,
    /// Ascending eigenvalues per sample.
    pub bands: Vec<Vec<f64>>,
    pub gap_intervals: Vec<SpectralGap>,
}

/// Intervals below the top of the highest band that meet no sampled value
/// of any band.
pub fn gaps_from_samples(bands: &[Vec<f64>], annotation: &'static str) -> Vec<SpectralGap> {
    let nb = bands.iter().map(Vec::len).min().unwrap_or(0);
    let mut ranges: Vec<(f64, f64)> = (0..nb)
        .map(|j| bands.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b[j]), hi.max(b[j]))))
        .collect();
    ranges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut reach = f64::NEG_INFINITY;
    for (lo, hi) in ranges {
        if reach > f64::NEG_INFINITY && lo > reach {
            out.push(SpectralGap { lo: reach, hi: lo, annotation });
        }
        reach = reach.max(hi);
    }
    out
}

/// How each k-sample is turned into a spectrum.
#[derive(Debug, Clone, Copy)]
pub enum Spectrum {
    Physical,
    /// Scaled problem; the path is in macroscopic units.
    Scaled(ScalingParams),
}

impl Spectrum {
    fn eval(&self, g: &UnitCellGraph, k: &QuasiMomentum, n_bands: usize, h: f64) -> Result<Vec<f64>> {
        match self {
            Spectrum::Physical => dispersion_at(g, k, n_bands, h),
            Spectrum::Scaled(s) => scaled_dispersion(g, s, k, n_bands, h),
        }
    }

    fn k_factor(&self) -> f64 {
        match self {
            Spectrum::Physical => 1.0,
            Spectrum::Scaled(s) => 1.0 / s.epsilon,
        }
    }
}

fn sweep(g: &UnitCellGraph, ks: &[QuasiMomentum], spec: Spectrum, n_bands: usize, h: f64) -> Result<Vec<Vec<f64>>> {
    ks.par_iter().map(|k| spec.eval(g, k, n_bands, h)).collect()
}

pub fn band_structure(
    g: &UnitCellGraph,
    path_spec: &str,
    points_per_leg: usize,
    n_bands: usize,
    h: f64,
) -> Result<BandStructure> {
    band_structure_with(g, Spectrum::Physical, path_spec, points_per_leg, n_bands, h)
}

pub fn band_structure_with(
    g: &UnitCellGraph,
    spec: Spectrum,
    path_spec: &str,
    points_per_leg: usize,
    n_bands: usize,
    h: f64,
) -> Result<BandStructure> {
    let f = spec.k_factor();
    let path: Vec<(f64, QuasiMomentum)> =
        sample_path(g, path_spec, points_per_leg)?.into_iter().map(|(s, k)| (s * f, k.scaled(f))).collect();
    let ks: Vec<QuasiMomentum> = path.iter().map(|p| p.1).collect();
    let bands = sweep(g, &ks, spec, n_bands, h)?;
    let gap_intervals = gaps_from_samples(&bands, "sampled-path only");
    Ok(BandStructure { path, bands, gap_intervals })
}

/// Gaps from an `n x n` grid over the whole Brillouin zone.
pub fn grid_gaps(g: &UnitCellGraph, spec: Spectrum, n: usize, n_bands: usize, h: f64) -> Result<Vec<SpectralGap>> {
    if n == 0 {
        return Err(Error::Domain("grid size must be positive".into()));
    }
    let [b1, b2] = reciprocal_vectors(g)?;
    let f = spec.k_factor();
    let ks: Vec<QuasiMomentum> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let (s, t) = (i as f64 / n as f64 - 0.5, j as f64 / n as f64 - 0.5);
            QuasiMomentum::new(s * b1[0] + t * b2[0], s * b1[1] + t * b2[1]).scaled(f)
        })
        .collect();
    Ok(gaps_from_samples(&sweep(g, &ks, spec, n_bands, h)?, "sampled-grid"))
}

impl BandStructure {
    /// Rows `path_coord,k1,k2,band_index,lambda,omega` and `# gap lo hi`
    /// footer lines.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "path_coord,k1,k2,band_index,lambda,omega")?;
        for ((s, k), b) in self.path.iter().zip(&self.bands) {
            for (j, &l) in b.iter().enumerate() {
                writeln!(w, "{s},{},{},{},{l},{}", k.k[0], k.k[1], j + 1, l.max(0.0).sqrt())?;
            }
        }
        for gap in &self.gap_intervals {
            writeln!(w, "# gap {} {} ({})", gap.lo, gap.hi, gap.annotation)?;
        }
        Ok(())
    }
}
