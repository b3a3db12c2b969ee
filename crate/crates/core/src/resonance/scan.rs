//! Partition of a frequency range into band, weak-gap and full-gap intervals.

use rayon::prelude::*;

use super::closed_form::transverse_denominator;
use super::{beta_matrix_closed, BetaMatrix, Classification, SoftProblem};
use crate::error::{Error, Result};
use crate::lattice::{Component, MaterialParams, UnitCellGraph};

/// Default bracket width of the located interval boundaries.
pub const RESOLUTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanMode {
    /// Closed forms of a single unit-coefficient soft segment.
    ClosedForm,
    /// Finite elements on the soft part with element size `h`.
    FiniteElement { h: f64 },
}

/// What opens an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryType {
    /// An eigenvalue of `beta` changes sign (or the range starts at zero).
    Zero,
    /// A clamped soft eigenvalue.
    Pole,
}

impl BoundaryType {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryType::Zero => "zero",
            BoundaryType::Pole => "pole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapInterval {
    pub lo: f64,
    pub hi: f64,
    pub classification: Classification,
    /// Kind of the lower end.
    pub boundary_type: BoundaryType,
}

/// A frequency response that can be classified and that knows its poles.
pub trait Response: Sync {
    fn beta(&self, lambda: f64) -> Result<BetaMatrix>;

    /// Number of poles in `[lo, hi)`.
    fn poles_in(&self, lo: f64, hi: f64) -> usize;

    fn classify(&self, lambda: f64) -> Classification {
        match self.beta(lambda) {
            Ok(b) => b.classification,
            Err(_) => Classification::Resonance,
        }
    }
}

/// Closed-form response of a segment of half length `a`.
#[derive(Debug, Clone, Copy)]
pub struct ClosedFormResponse {
    pub a: f64,
    pub alpha_deg: f64,
}

impl Response for ClosedFormResponse {
    fn beta(&self, lambda: f64) -> Result<BetaMatrix> {
        beta_matrix_closed(lambda, self.a, self.alpha_deg)
    }

    fn poles_in(&self, lo: f64, hi: f64) -> usize {
        let a = self.a;
        // longitudinal poles are explicit
        let index = |l: f64| (a * l.max(0.0).sqrt() / std::f64::consts::PI + 0.5).floor() as i64;
        let mut count = (index(hi) - index(lo)).max(0) as usize;
        let t = |l: f64| transverse_denominator(l.max(1e-300), a);
        if (t(lo) < 0.0) != (t(hi) < 0.0) {
            count += 1;
        }
        count
    }
}

/// Finite-element response with its coupled poles located up front.
pub struct FeResponse<'a> {
    pub problem: &'a SoftProblem,
    pub poles: Vec<f64>,
}

impl<'a> FeResponse<'a> {
    pub fn new(problem: &'a SoftProblem, lambda_max: f64) -> Self {
        FeResponse { problem, poles: problem.active_poles(lambda_max) }
    }
}

impl Response for FeResponse<'_> {
    fn beta(&self, lambda: f64) -> Result<BetaMatrix> {
        self.problem.beta(lambda)
    }

    fn poles_in(&self, lo: f64, hi: f64) -> usize {
        self.poles.iter().filter(|&&p| p >= lo && p < hi).count()
    }
}

#[derive(Debug, Clone, Copy)]
struct Boundary {
    lambda: f64,
    kind: BoundaryType,
    after: Classification,
}

/// Classify, stepping off a pole if the point lands on one.
fn classify_near(r: &dyn Response, lambda: f64, lo: f64, hi: f64) -> Option<(f64, Classification)> {
    let c = r.classify(lambda);
    if c != Classification::Resonance {
        return Some((lambda, c));
    }
    for f in [0.25, 0.75, 0.1, 0.9] {
        let l = lo + f * (hi - lo);
        let c = r.classify(l);
        if c != Classification::Resonance {
            return Some((l, c));
        }
    }
    None
}

fn refine(
    r: &dyn Response,
    lo: f64,
    clo: Classification,
    hi: f64,
    chi: Classification,
    res: f64,
    out: &mut Vec<Boundary>,
) {
    let poles = r.poles_in(lo, hi);
    if clo == chi && poles == 0 {
        return;
    }
    if hi - lo <= res {
        out.push(Boundary {
            lambda: 0.5 * (lo + hi),
            kind: if poles > 0 { BoundaryType::Pole } else { BoundaryType::Zero },
            after: chi,
        });
        return;
    }
    let mid = 0.5 * (lo + hi);
    match classify_near(r, mid, lo, hi) {
        Some((m, cm)) => {
            refine(r, lo, clo, m, cm, res, out);
            refine(r, m, cm, hi, chi, res, out);
        }
        None => out.push(Boundary { lambda: mid, kind: BoundaryType::Pole, after: chi }),
    }
}

/// Scan `(0, lambda_max]` with `samples` equispaced points and locate every
/// classification change to within `resolution`.
pub fn scan_response(r: &dyn Response, lambda_max: f64, samples: usize, resolution: f64) -> Result<Vec<GapInterval>> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::Domain(format!("lambda_max must be positive, got {lambda_max}")));
    }
    if samples < 100 {
        return Err(Error::Domain(format!("at least 100 samples are needed, got {samples}")));
    }
    let grid: Vec<f64> = (1..=samples).map(|i| lambda_max * i as f64 / samples as f64).collect();
    let classes: Vec<Classification> = grid.par_iter().map(|&l| r.classify(l)).collect();

    // anchor points off the poles
    let mut pts = vec![(0.0, Classification::Band)];
    for (i, (&l, &c)) in grid.iter().zip(&classes).enumerate() {
        if c != Classification::Resonance {
            pts.push((l, c));
            continue;
        }
        let prev = if i == 0 { 0.0 } else { grid[i - 1] };
        if let Some(p) = classify_near(r, l, prev, l) {
            pts.push(p);
        }
    }

    let found: Vec<Vec<Boundary>> = pts
        .par_windows(2)
        .map(|w| {
            let mut out = Vec::new();
            refine(r, w[0].0, w[0].1, w[1].0, w[1].1, resolution, &mut out);
            out
        })
        .collect();

    let mut intervals = Vec::new();
    let mut start = (0.0, BoundaryType::Zero, Classification::Band);
    for b in found.into_iter().flatten() {
        intervals.push(GapInterval { lo: start.0, hi: b.lambda, classification: start.2, boundary_type: start.1 });
        start = (b.lambda, b.kind, b.after);
    }
    intervals.push(GapInterval { lo: start.0, hi: lambda_max, classification: start.2, boundary_type: start.1 });
    Ok(intervals)
}

/// Closed-form scan of the segment with half length `a`.
pub fn scan_gaps_closed(a: f64, lambda_max: f64, samples: usize) -> Result<Vec<GapInterval>> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("half length must be positive, got {a}")));
    }
    scan_response(&ClosedFormResponse { a, alpha_deg: 45.0 }, lambda_max, samples, RESOLUTION)
}

/// Scan the soft part of `g`. The closed-form mode needs a single soft
/// segment with unit coefficients and reads its half length off the graph.
pub fn scan_gaps(g: &UnitCellGraph, lambda_max: f64, samples: usize, mode: ScanMode) -> Result<Vec<GapInterval>> {
    match mode {
        ScanMode::ClosedForm => {
            let (a, alpha) = single_segment(g)?;
            scan_response(&ClosedFormResponse { a, alpha_deg: alpha }, lambda_max, samples, RESOLUTION)
        }
        ScanMode::FiniteElement { h } => {
            let p = SoftProblem::new(g, h)?;
            scan_response(&FeResponse::new(&p, lambda_max), lambda_max, samples, RESOLUTION)
        }
    }
}

/// Half length and inclination of the only soft beam, if the closed forms
/// describe `g`.
pub fn single_segment(g: &UnitCellGraph) -> Result<(f64, f64)> {
    let soft: Vec<_> = g.beams_of(Component::Soft).collect();
    let stiff_len: f64 = g.beams_of(Component::Stiff).map(|b| b.length * b.material.density).sum();
    if soft.len() != 1 || soft[0].material != MaterialParams::unit() || (stiff_len - 2.0).abs() > 1e-12 {
        return Err(Error::Domain(
            "closed forms describe one unit-coefficient soft segment in a cell of stiff mass 2 only".into(),
        ));
    }
    let t = soft[0].tangent;
    Ok((0.5 * soft[0].length, t[1].atan2(t[0]).to_degrees()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_square_example;

    #[test]
    fn closed_form_scan_structure() {
        let iv = scan_gaps_closed(0.5, 200.0, 2000).unwrap();
        assert_eq!(iv[0].classification, Classification::Band);
        assert_eq!(iv[0].lo, 0.0);
        assert!(iv.iter().any(|i| i.classification == Classification::FullGap));
        assert!(iv.iter().any(|i| i.classification == Classification::WeakGap));
        for w in iv.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
        // first boundary is the transverse pole near 9.628
        assert!((iv[1].lo - 9.628).abs() < 1e-3, "{:?}", iv[1]);
        assert_eq!(iv[1].boundary_type, BoundaryType::Pole);
        assert_eq!(iv[1].classification, Classification::WeakGap);
        let full = iv.iter().find(|i| i.classification == Classification::FullGap).unwrap();
        assert!((full.lo - 9.8696).abs() < 1e-3 && (full.hi - 13.101).abs() < 1e-2, "{full:?}");
    }

    #[test]
    fn finite_element_scan_matches_closed_form() {
        let g = build_square_example(45.0, 0.5, MaterialParams::unit(), MaterialParams::unit()).unwrap();
        let cf = scan_gaps(&g, 100.0, 500, ScanMode::ClosedForm).unwrap();
        let fe = scan_gaps(&g, 100.0, 500, ScanMode::FiniteElement { h: 0.5 / 256.0 }).unwrap();
        assert_eq!(cf.len(), fe.len(), "{cf:#?}\n{fe:#?}");
        for (x, y) in cf.iter().zip(&fe) {
            assert_eq!(x.classification, y.classification);
            assert_eq!(x.boundary_type, y.boundary_type);
            assert!((x.lo - y.lo).abs() < 1e-2 && (x.hi - y.hi).abs() < 1e-2, "{x:?} {y:?}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(scan_gaps_closed(0.5, -1.0, 200).is_err());
        assert!(scan_gaps_closed(0.5, 10.0, 50).is_err());
    }

    #[test]
    fn segment_detection() {
        let g = build_square_example(30.0, 0.4, MaterialParams::unit(), MaterialParams::unit()).unwrap();
        let (a, alpha) = single_segment(&g).unwrap();
        assert!((a - 0.4).abs() < 1e-15 && (alpha - 30.0).abs() < 1e-12);
    }
}
