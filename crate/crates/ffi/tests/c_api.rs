use std::ffi::{c_char, CString};
use std::ptr;

use beamgap_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { bg_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn square() -> *mut BgLattice {
    let mut lat = ptr::null_mut();
    assert_eq!(unsafe { bg_lattice_square(45.0, 0.5, &mut lat) }, BgStatus::Ok);
    assert!(!lat.is_null());
    lat
}

#[test]
fn tensor_of_square_cell() {
    let lat = square();
    let mut c = [0.0; 9];
    assert_eq!(unsafe { bg_homogenized_tensor(lat, 1.0 / 64.0, c.as_mut_ptr()) }, BgStatus::Ok);
    assert!((c[0] - 1.0).abs() < 1e-12 && (c[4] - 1.0).abs() < 1e-12);
    assert!((c[8] - 6.0 / 13.0).abs() < 1e-12, "{c:?}");
    unsafe { bg_lattice_free(lat) };
}

#[test]
fn closed_and_fe_beta_agree() {
    let lat = square();
    let mut cf =
        BgBeta { lambda: 0.0, entries: [0.0; 4], eigenvalues: [0.0; 2], classification: BgClassification::Band };
    let mut fe = cf;
    unsafe {
        assert_eq!(bg_beta_closed(5.0, 0.5, 45.0, &mut cf), BgStatus::Ok);
        assert_eq!(bg_beta_matrix(lat, 5.0, 0.5 / 256.0, &mut fe), BgStatus::Ok);
        bg_lattice_free(lat);
    }
    for (x, y) in cf.entries.iter().zip(fe.entries) {
        assert!((x - y).abs() < 1e-4 * cf.eigenvalues[1].abs(), "{cf:?} {fe:?}");
    }
    assert_eq!(cf.classification, fe.classification);
}

#[test]
fn gamma_point_has_zero_modes() {
    let lat = square();
    let mut ev = [1.0; 4];
    assert_eq!(unsafe { bg_dispersion_at(lat, 0.0, 0.0, 0.125, 4, ev.as_mut_ptr()) }, BgStatus::Ok);
    assert!(ev[0].abs() < 1e-9 && ev[1].abs() < 1e-9, "{ev:?}");
    unsafe { bg_lattice_free(lat) };
}

#[test]
fn scan_handle_round_trip() {
    let lat = square();
    let mut scan = ptr::null_mut();
    unsafe {
        assert_eq!(bg_scan_gaps(lat, 50.0, 500, 0.0, &mut scan), BgStatus::Ok);
        let n = bg_gap_scan_len(scan);
        assert!(n > 2);
        let mut iv =
            BgGapInterval { lo: 0.0, hi: 0.0, classification: BgClassification::Band, boundary: BgBoundary::Zero };
        let mut full = 0;
        let mut prev_hi = 0.0;
        for i in 0..n {
            assert_eq!(bg_gap_scan_get(scan, i, &mut iv), BgStatus::Ok);
            assert_eq!(iv.lo, prev_hi);
            prev_hi = iv.hi;
            full += (iv.classification == BgClassification::FullGap) as usize;
        }
        assert!(full >= 1);
        assert_eq!(bg_gap_scan_get(scan, n, &mut iv), BgStatus::IndexOutOfRange);
        bg_gap_scan_free(scan);
        bg_lattice_free(lat);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut lat = ptr::null_mut();
    assert_eq!(unsafe { bg_lattice_square(45.0, 0.9, &mut lat) }, BgStatus::GeometryOverflow);
    assert!(lat.is_null());
    assert!(!last_error().is_empty());

    let bad = CString::new("{ not json").unwrap();
    assert_eq!(unsafe { bg_lattice_from_json(bad.as_ptr(), &mut lat) }, BgStatus::Parse);

    let mut c = [0.0; 9];
    assert_eq!(unsafe { bg_homogenized_tensor(ptr::null(), 0.1, c.as_mut_ptr()) }, BgStatus::NullPointer);
    assert!(last_error().contains("null"));

    let lat = square();
    assert!(last_error().is_empty());
    let mut b =
        BgBeta { lambda: 0.0, entries: [0.0; 4], eigenvalues: [0.0; 2], classification: BgClassification::Band };
    let s = unsafe { bg_beta_closed(std::f64::consts::PI.powi(2), 0.5, 45.0, &mut b) };
    assert!(matches!(s, BgStatus::Pole | BgStatus::NearResonance), "{s:?}");
    unsafe { bg_lattice_free(lat) };
}

#[test]
fn null_handles_are_tolerated_by_free_and_len() {
    unsafe {
        bg_lattice_free(ptr::null_mut());
        bg_gap_scan_free(ptr::null_mut());
        assert_eq!(bg_gap_scan_len(ptr::null()), 0);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/beamgap.h");
    assert!(std::path::Path::new(header).exists());
    let Some(cc) =
        ["cc", "gcc", "clang"].into_iter().find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; header syntax not checked");
        return;
    };
    let dir = tempfile_dir();
    let src = dir.join("use.c");
    std::fs::write(
        &src,
        format!("#include \"{header}\"\nint main(void) {{ BgLattice *l = 0; return (int)bg_lattice_square(45.0, 0.5, &l); }}\n"),
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("beamgap-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
