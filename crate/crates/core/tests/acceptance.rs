//! Acceptance suite. One PASS/FAIL line per criterion. With
//! `BEAMGAP_ACCEPTANCE_STRICT=1` any FAIL makes the target exit non-zero;
//! otherwise failures are reported and the run continues.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use std::f64::consts::PI;
use std::process::ExitCode;

use beamgap::bloch::{band_structure_with, dispersion_at, QuasiMomentum, Spectrum};
use beamgap::fem::{assemble, BeamMesh, Constraints, ShearQuadrature};
use beamgap::homogenization::{
    appendix_tensor_closed_form, homogenized_tensor, solve_cell_problems, CellOptions, HomogenizedTensor,
};
use beamgap::lattice::{build_square_example, MaterialParams, ScalingParams, UnitCellGraph};
use beamgap::limit::{limit_modes, validate_limit};
use beamgap::linalg::{generalized_eigenvalues, hermitian_eigenvalues};
use beamgap::resonance::closed_form::{beta1_closed, beta2_closed, transverse_mode_closed, u_mean_closed};
use beamgap::resonance::{beta_matrix_closed, scan_gaps, Classification, GapInterval, ScanMode, SoftProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x5eed_0001;

// criterion 1
const TENSOR_H: f64 = 1.0 / 64.0;
const TENSOR_TOL: f64 = 1e-6;
// criterion 2
const CORRECTOR_TOL: f64 = 1e-6;
const CORRECTOR_MIN_ORDER: f64 = 1.8;
// criterion 3
const BETA_A: f64 = 0.5;
const BETA_LAMBDAS: [f64; 5] = [0.25, 0.5, 2.0, 5.0, 8.0];
const BETA_REL_TOL: f64 = 1e-4;
const IDENTITY_TOL: f64 = 1e-5;
const IDENTITY_H: f64 = BETA_A / 1024.0;
// criterion 4
const SCAN_LAMBDA_MAX: f64 = 200.0;
const SCAN_SAMPLES: usize = 2000;
const SCAN_FE_H: f64 = BETA_A / 512.0;
const SCAN_SHIFT_TOL: f64 = 1e-2;
const INTERIOR_SAMPLES: usize = 100;
// criterion 5
const DIRECTIONS: usize = 32;
const LAMBDAS_PER_INTERVAL: usize = 5;
// criterion 6
const EPSILONS: [f64; 3] = [0.25, 0.125, 0.0625];
const K_MACRO: [f64; 2] = [2.0, 0.0];
const BLOCH_H: f64 = 1.0 / 64.0;
const SHRINK: f64 = 0.1;
// criterion 7
const NULL_TOL: f64 = 1e-10;
const BETA_SYM_TOL: f64 = 1e-12;
const TENSOR_SYM_TOL: f64 = 1e-10;
const REVERSAL_TOL: f64 = 1e-10;
// criterion 8
const RATE_MIN_ORDER: f64 = 1.8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn square(a: f64) -> UnitCellGraph {
    build_square_example(45.0, a, MaterialParams::unit(), MaterialParams::unit()).unwrap()
}

fn cross(gamma: f64, eta: f64, kappa: f64) -> UnitCellGraph {
    let m = MaterialParams::stiffness(gamma, eta, kappa).unwrap();
    build_square_example(45.0, 0.25, m, MaterialParams::unit()).unwrap().stiff_subgraph()
}

fn appendix_tensor() -> Outcome {
    let mut worst = homogenized_tensor(&cross(1.0, 1.0, 1.0), TENSOR_H)
        .unwrap()
        .max_rel_error(&appendix_tensor_closed_form(1.0, 1.0, 1.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..5 {
        let (g, e, k) = (rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        let fe = homogenized_tensor(&cross(g, e, k), TENSOR_H).unwrap();
        worst = worst.max(fe.max_rel_error(&appendix_tensor_closed_form(g, e, k).unwrap()));
    }
    outcome(worst <= TENSOR_TOL, format!("max rel error {worst:.2e} over 6 material triples (tol {TENSOR_TOL:e})"))
}

/// Sup over mesh nodes of the theta corrector of the (1, 2) cell problem
/// against `-1/2 +- 3 kappa / (12 eta + kappa) y (1 - y)`: the joint turns
/// by half the imposed shear and each beam carries a constant shear force.
fn corrector_error(h: f64, quad: ShearQuadrature) -> f64 {
    let (eta, kappa) = (1.0, 1.0);
    let g = cross(1.0, eta, kappa);
    let sol = solve_cell_problems(&g, h, CellOptions { quadrature: quad, pin: None }).unwrap();
    let c = &sol.correctors[1];
    let mut err: f64 = 0.0;
    for (b, beam) in sol.graph.beams.iter().enumerate() {
        let sign = if beam.tangent[0].abs() > 0.5 { 1.0 } else { -1.0 };
        for (s, x) in c.field.along_beam(&sol.graph, &sol.mesh, b) {
            let want = -0.5 + sign * 3.0 * kappa / (12.0 * eta + kappa) * s * (1.0 - s);
            err = err.max((x[2].re - want).abs());
        }
    }
    err
}

fn corrector() -> Outcome {
    let sup = corrector_error(1.0 / 64.0, ShearQuadrature::MidpointCorrected);
    // the default element is nodally exact, so rates come from the plain rule
    let e: Vec<f64> = [16.0, 32.0, 64.0].iter().map(|n| corrector_error(1.0 / n, ShearQuadrature::Midpoint)).collect();
    let orders = [(e[0] / e[1]).log2(), (e[1] / e[2]).log2()];
    let order = orders[0].min(orders[1]);
    outcome(
        sup <= CORRECTOR_TOL && order >= CORRECTOR_MIN_ORDER,
        format!("sup error {sup:.2e} at h=1/64 (tol {CORRECTOR_TOL:e}); order {order:.3} with midpoint shear (min {CORRECTOR_MIN_ORDER})"),
    )
}

fn trapezoid(pts: &[(f64, f64)]) -> f64 {
    pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

fn beta_oracle() -> Outcome {
    let g = square(BETA_A);
    let p = SoftProblem::new(&g, BETA_A / 128.0).unwrap();
    let mut rel: f64 = 0.0;
    for l in BETA_LAMBDAS {
        let fe = p.beta(l).unwrap();
        let mut cf = [beta1_closed(l, BETA_A).unwrap(), beta2_closed(l, BETA_A).unwrap()];
        cf.sort_by(f64::total_cmp);
        for k in 0..2 {
            rel = rel.max((fe.eigenvalues[k] - cf[k]).abs() / cf[k].abs());
        }
    }
    let fine = SoftProblem::new(&g, IDENTITY_H).unwrap();
    let beam = &fine.graph.beams[0];
    let (t, n) = (beam.tangent, beam.normal);
    let mut ident: f64 = 0.0;
    for l in BETA_LAMBDAS {
        let sol = fine.solve(l).unwrap();
        let u: Vec<(f64, f64)> = sol.profile(&fine, 0, t).iter().map(|(s, x)| (*s, x[0])).collect();
        let v: Vec<(f64, f64)> = sol.profile(&fine, 0, n).iter().map(|(s, x)| (*s, x[1])).collect();
        ident = ident.max((trapezoid(&u) - u_mean_closed(l, BETA_A).unwrap()).abs());
        ident = ident.max((trapezoid(&v) - transverse_mode_closed(l, BETA_A).unwrap().mean_v).abs());
    }
    outcome(
        rel <= BETA_REL_TOL && ident <= IDENTITY_TOL,
        format!(
            "beta rel error {rel:.2e} (tol {BETA_REL_TOL:e}); integral identities {ident:.2e} (tol {IDENTITY_TOL:e})"
        ),
    )
}

fn closed_scan() -> Vec<GapInterval> {
    scan_gaps(&square(BETA_A), SCAN_LAMBDA_MAX, SCAN_SAMPLES, ScanMode::ClosedForm).unwrap()
}

fn gap_existence(cf: &[GapInterval]) -> Outcome {
    let full: Vec<&GapInterval> = cf.iter().filter(|i| i.classification == Classification::FullGap).collect();
    let weak = cf.iter().filter(|i| i.classification == Classification::WeakGap).count();
    let mut negative = true;
    for i in &full {
        for s in 1..=INTERIOR_SAMPLES {
            let l = i.lo + (i.hi - i.lo) * s as f64 / (INTERIOR_SAMPLES + 1) as f64;
            negative &= beta1_closed(l, BETA_A).unwrap() < 0.0 && beta2_closed(l, BETA_A).unwrap() < 0.0;
        }
    }
    let fe =
        scan_gaps(&square(BETA_A), SCAN_LAMBDA_MAX, SCAN_SAMPLES, ScanMode::FiniteElement { h: SCAN_FE_H }).unwrap();
    let same_classes = fe.len() == cf.len() && fe.iter().zip(cf).all(|(x, y)| x.classification == y.classification);
    let shift = if same_classes {
        fe.iter().zip(cf).map(|(x, y)| (x.lo - y.lo).abs().max((x.hi - y.hi).abs())).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    outcome(
        !full.is_empty() && weak > 0 && negative && shift <= SCAN_SHIFT_TOL,
        format!(
            "{} full, {weak} weak gaps; beta negative in full gaps: {negative}; FE scan {} intervals vs {}, max boundary shift {shift:.2e} (tol {SCAN_SHIFT_TOL:e})",
            full.len(),
            fe.len(),
            cf.len()
        ),
    )
}

fn mode_counts(cf: &[GapInterval], ch: &HomogenizedTensor) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut checked = 0;
    let mut bad = 0;
    for i in cf.iter().filter(|i| i.hi - i.lo > 1e-3) {
        for s in 1..=LAMBDAS_PER_INTERVAL {
            let l = i.lo + (i.hi - i.lo) * s as f64 / (LAMBDAS_PER_INTERVAL + 1) as f64;
            let Ok(beta) = beta_matrix_closed(l, BETA_A, 45.0) else { continue };
            if beta.classification != i.classification {
                bad += 1;
                continue;
            }
            let want = i.classification.mode_count().unwrap();
            for _ in 0..DIRECTIONS {
                let t: f64 = rng.gen_range(0.0..2.0 * PI);
                checked += 1;
                if limit_modes(ch, &beta, [t.cos(), t.sin()]).unwrap().wavenumbers.len() != want {
                    bad += 1;
                }
            }
        }
    }
    outcome(bad == 0 && checked > 0, format!("{checked} (lambda, direction) pairs, {bad} mismatches"))
}

fn eps_convergence(cf: &[GapInterval]) -> Outcome {
    let g = square(BETA_A);
    let r = validate_limit(&g, &EPSILONS, QuasiMomentum::new(K_MACRO[0], K_MACRO[1]), BLOCH_H).unwrap();
    let devs: Vec<String> = r.rows.iter().map(|x| format!("{:.3e}", x.rel_dev)).collect();
    let s = ScalingParams::new(*EPSILONS.last().unwrap()).unwrap();
    let bs = band_structure_with(&g, Spectrum::Scaled(s), "GXMG", 8, 16, BLOCH_H).unwrap();
    let mut intruders = Vec::new();
    for i in cf.iter().filter(|i| i.classification == Classification::FullGap) {
        let w = i.hi - i.lo;
        let (lo, hi) = (i.lo + SHRINK * w, i.hi - SHRINK * w);
        if bs.bands.iter().all(|b| b.last().copied().unwrap_or(0.0) < hi) {
            continue;
        }
        let inside: Vec<f64> = bs.bands.iter().flatten().copied().filter(|&l| l > lo && l < hi).collect();
        if let (Some(min), Some(max)) =
            (inside.iter().copied().reduce(f64::min), inside.iter().copied().reduce(f64::max))
        {
            intruders.push(format!("({lo:.3}, {hi:.3}) holds {} values in [{min:.3}, {max:.3}]", inside.len()));
        }
    }
    let avoided = intruders.is_empty();
    outcome(
        r.monotone() && avoided,
        format!(
            "rel dev [{}] monotone: {}; eps=1/16 path spectrum avoids shrunk full gaps: {}{}",
            devs.join(", "),
            r.monotone(),
            avoided,
            if avoided { String::new() } else { format!(" ({})", intruders.join("; ")) }
        ),
    )
}

fn invariants(ch: &HomogenizedTensor) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let null_dim = |k: &faer::Mat<faer::c64>| {
        let ev = hermitian_eigenvalues(k).unwrap();
        let top = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
        (ev.iter().filter(|x| x.abs() <= NULL_TOL * top).count(), min >= -NULL_TOL * top)
    };
    let soft = square(BETA_A).soft_subgraph();
    let mesh = BeamMesh::new(&soft, 1.0 / 32.0).unwrap();
    let clamped = assemble(&soft, &mesh, Constraints::Clamped(soft.clamped.iter().copied().collect())).unwrap();
    let (n0, psd0) = null_dim(&clamped.stiffness);
    let stiff = cross(1.0, 1.0, 1.0);
    let mesh = BeamMesh::new(&stiff, 1.0 / 32.0).unwrap();
    let periodic = assemble(&stiff, &mesh, Constraints::Periodic).unwrap();
    let (n2, psd2) = null_dim(&periodic.stiffness);
    ok &= n0 == 0 && n2 == 2 && psd0 && psd2;
    notes.push(format!("nullspace clamped {n0}, periodic cross {n2}, psd {}", psd0 && psd2));

    let p = SoftProblem::new(&square(BETA_A), BETA_A / 128.0).unwrap();
    let mut asym: f64 = 0.0;
    for l in BETA_LAMBDAS {
        let sol = p.solve(l).unwrap();
        let raw = p.raw_beta(&sol);
        asym = asym.max((raw[0][1] - raw[1][0]).abs() / p.beta_from(&sol).norm());
    }
    ok &= asym <= BETA_SYM_TOL;
    notes.push(format!("beta asymmetry {asym:.1e}"));

    let sol = solve_cell_problems(&stiff, TENSOR_H, CellOptions::default()).unwrap();
    let c_asym = HomogenizedTensor::asymmetry(&sol.raw_tensor());
    let raw = sol.raw_tensor();
    let e = [[0.0, 1.0], [-1.0, 0.0]];
    let mut skew: f64 = 0.0;
    for j in 0..2 {
        for l in 0..2 {
            for p in 0..2 {
                for q in 0..2 {
                    skew += raw[j][l][p][q] * e[j][l] * e[p][q];
                }
            }
        }
    }
    let skew = skew.abs().max(ch.energy(e).abs());
    ok &= c_asym <= TENSOR_SYM_TOL && skew <= TENSOR_SYM_TOL;
    notes.push(format!("tensor asymmetry {c_asym:.1e}, skew energy {skew:.1e}"));

    let g = square(0.25);
    let mut rev: f64 = 0.0;
    for k in [[PI, 0.0], [0.7, -2.1], [PI, PI]] {
        let a = dispersion_at(&g, &QuasiMomentum::new(k[0], k[1]), 10, 1.0 / 16.0).unwrap();
        let b = dispersion_at(&g, &QuasiMomentum::new(-k[0], -k[1]), 10, 1.0 / 16.0).unwrap();
        let top = a.last().unwrap().abs();
        for (x, y) in a.iter().zip(&b) {
            rev = rev.max((x - y).abs() / top);
        }
    }
    ok &= rev <= REVERSAL_TOL;
    notes.push(format!("k reversal {rev:.1e}"));
    outcome(ok, notes.join("; "))
}

fn rates() -> Outcome {
    let a = BETA_A;
    let exact = PI * PI / (4.0 * a * a);
    let soft = square(a).soft_subgraph();
    let errs: Vec<f64> = [8.0, 16.0, 32.0]
        .iter()
        .map(|n| {
            let mesh = BeamMesh::new(&soft, a / n).unwrap();
            let ops = assemble(&soft, &mesh, Constraints::Clamped(soft.clamped.iter().copied().collect())).unwrap();
            let ev = generalized_eigenvalues(&ops.stiffness, &ops.mass).unwrap();
            let nearest = ev.iter().copied().min_by(|x, y| (x - exact).abs().total_cmp(&(y - exact).abs())).unwrap();
            (nearest - exact).abs()
        })
        .collect();
    let order = (errs[0] / errs[1]).log2().min((errs[1] / errs[2]).log2());
    outcome(
        order >= RATE_MIN_ORDER,
        format!("errors [{:.2e}, {:.2e}, {:.2e}], order {order:.3} (min {RATE_MIN_ORDER})", errs[0], errs[1], errs[2]),
    )
}

fn main() -> ExitCode {
    let cf = closed_scan();
    let ch = homogenized_tensor(&cross(1.0, 1.0, 1.0), TENSOR_H).unwrap();
    let results: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 appendix tensor", Box::new(appendix_tensor)),
        ("2 corrector", Box::new(corrector)),
        ("3 beta oracle", Box::new(beta_oracle)),
        ("4 gap existence", Box::new(|| gap_existence(&cf))),
        ("5 limit mode counts", Box::new(|| mode_counts(&cf, &ch))),
        ("6 eps convergence", Box::new(|| eps_convergence(&cf))),
        ("7 structural invariants", Box::new(|| invariants(&ch))),
        ("8 fe convergence rate", Box::new(rates)),
    ];
    let mut failed = 0;
    for (name, f) in &results {
        let start = std::time::Instant::now();
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "{} criterion {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    let strict = std::env::var("BEAMGAP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
