use beamgap::bloch::{dispersion_at, gaps_from_samples, QuasiMomentum};
use beamgap::homogenization::appendix_tensor_closed_form;
use beamgap::lattice::{build_square_example, parse_config, MaterialParams, UnitCellGraph};
use beamgap::limit::{dispersion_quadratic, generalized_pairs, limit_modes};
use beamgap::resonance::{beta_matrix_closed, Classification};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn square() -> &'static UnitCellGraph {
    static G: OnceLock<UnitCellGraph> = OnceLock::new();
    G.get_or_init(|| build_square_example(45.0, 0.5, MaterialParams::unit(), MaterialParams::unit()).unwrap())
}

fn spd() -> impl Strategy<Value = [[f64; 2]; 2]> {
    (0.1f64..5.0, 0.1f64..5.0, -0.9f64..0.9).prop_map(|(a, b, r)| {
        let off = r * (a * b).sqrt();
        [[a, off], [off, b]]
    })
}

fn sym() -> impl Strategy<Value = [[f64; 2]; 2]> {
    (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0).prop_map(|(a, b, c)| [[a, c], [c, b]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectrum_is_even_in_k(k1 in -PI..PI, k2 in -PI..PI) {
        let g = square();
        let h = 0.125;
        let p = dispersion_at(g, &QuasiMomentum::new(k1, k2), 6, h).unwrap();
        let m = dispersion_at(g, &QuasiMomentum::new(-k1, -k2), 6, h).unwrap();
        for (a, b) in p.iter().zip(&m) {
            prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn reciprocal_shift_leaves_spectrum(k1 in -PI..PI, k2 in -PI..PI, n in -2i32..=2) {
        let g = square();
        let h = 0.125;
        let base = dispersion_at(g, &QuasiMomentum::new(k1, k2), 4, h).unwrap();
        let shifted = dispersion_at(g, &QuasiMomentum::new(k1 + 2.0 * PI * n as f64, k2), 4, h).unwrap();
        for (a, b) in base.iter().zip(&shifted) {
            prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mode_count_follows_classification(lambda in 0.05f64..200.0, theta in 0.0f64..(2.0 * PI)) {
        let ch = appendix_tensor_closed_form(1.0, 1.0, 1.0).unwrap();
        let Ok(beta) = beta_matrix_closed(lambda, 0.5, 45.0) else { return Ok(()) };
        prop_assume!(beta.classification != Classification::Resonance);
        let m = limit_modes(&ch, &beta, [theta.cos(), theta.sin()]).unwrap();
        prop_assert_eq!(Some(m.wavenumbers.len()), beta.classification.mode_count());
        prop_assert!(m.wavenumbers.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn quadratic_and_pencil_roots_agree(q in spd(), b in sym()) {
        let mut quad = dispersion_quadratic(q, b);
        let (s, _) = generalized_pairs(q, b).unwrap();
        quad.sort_by(f64::total_cmp);
        let scale = s[0].abs().max(s[1].abs()).max(1.0);
        for (x, y) in quad.iter().zip(&s) {
            prop_assert!((x - y).abs() <= 1e-12 * scale * 1e2, "{quad:?} {s:?}");
        }
    }

    #[test]
    fn reduction_preserves_phases(k1 in -50.0f64..50.0, k2 in -50.0f64..50.0) {
        let g = square();
        let k = QuasiMomentum::new(k1, k2);
        let r = k.reduced(g).unwrap();
        for (a, b) in k.phases(g).iter().zip(r.phases(g)) {
            prop_assert!((a - b).norm() < 1e-12);
        }
        for a in g.lattice_vectors {
            let t = r.k[0] * a[0] + r.k[1] * a[1];
            prop_assert!(t > -PI - 1e-12 && t <= PI + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_round_trip(alpha in 5.0f64..85.0, a in 0.1f64..0.45, gamma in 0.5f64..4.0, kappa in 0.5f64..4.0) {
        let stiff = MaterialParams::stiffness(gamma, 1.0, kappa).unwrap();
        let g = build_square_example(alpha, a, stiff, MaterialParams::unit()).unwrap();
        let text = serde_json::to_string(&g.to_config()).unwrap();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(serde_json::to_string(&back.to_config()).unwrap(), text);
    }
}

proptest! {
    #[test]
    fn more_samples_never_widen_gaps(
        samples in proptest::collection::vec(proptest::collection::vec(0.0f64..50.0, 4), 2..12),
        extra in proptest::collection::vec(proptest::collection::vec(0.0f64..50.0, 4), 0..6),
    ) {
        let sort = |v: &Vec<Vec<f64>>| {
            v.iter().map(|b| { let mut b = b.clone(); b.sort_by(f64::total_cmp); b }).collect::<Vec<_>>()
        };
        let coarse = sort(&samples);
        let mut fine = coarse.clone();
        fine.extend(sort(&extra));
        let cg = gaps_from_samples(&coarse, "t");
        for f in gaps_from_samples(&fine, "t") {
            prop_assert!(cg.iter().any(|c| c.lo <= f.lo && f.hi <= c.hi), "{f:?} not inside {cg:?}");
        }
    }
}
