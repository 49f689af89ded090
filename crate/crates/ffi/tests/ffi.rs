use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use pathent_ffi::*;

const REFERENCE: PathentG2Model = PathentG2Model { beta: 1.18, gamma1: 0.035, gamma2: 1.18e-4, rho: 0.925 };

fn last_error() -> String {
    let p = pathent_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn stream(times: &[u64], channels: &[u8], duration: u64) -> *mut PathentTagStream {
    let mut s = ptr::null_mut();
    let st = unsafe { pathent_tagstream_from_arrays(times.as_ptr(), channels.as_ptr(), times.len(), duration, 1, &mut s) };
    assert_eq!(st, PathentStatus::Ok, "{}", last_error());
    s
}

#[test]
fn oracle_functions_agree() {
    let (mut closed, mut numeric) = (0.0, 0.0);
    unsafe {
        assert_eq!(pathent_g2_detected(&REFERENCE, 20.0, &mut closed), PathentStatus::Ok);
        assert_eq!(pathent_g2_detected_numeric(&REFERENCE, 20.0, &mut numeric), PathentStatus::Ok);
    }
    assert!((closed / numeric - 1.0).abs() < 1e-9);
    assert!(pathent_g2_detected_simple(-1.0, 2.0).is_nan());

    let mut pops = PathentOraclePopulations::default();
    assert_eq!(unsafe { pathent_populations_from_g2(&REFERENCE, 1.507e5, 2.0, &mut pops) }, PathentStatus::Ok);
    assert!((pops.mu - 3.014e-4).abs() < 1e-12);
    assert!((pops.p0 + pops.p1 + pops.p2 - 1.0).abs() < 1e-12);
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut v = 0.0;
    let bad = PathentG2Model { beta: -1.0, ..REFERENCE };
    assert_eq!(unsafe { pathent_g2_detected(&bad, 2.0, &mut v) }, PathentStatus::InvalidParameter);
    assert!(last_error().contains("invalid parameter"));
    assert_eq!(unsafe { pathent_g2_detected(ptr::null(), 2.0, &mut v) }, PathentStatus::NullPointer);
    assert!(last_error().contains("null"));

    let mut s = ptr::null_mut();
    let missing = CString::new("/nonexistent/file.ptag").unwrap();
    assert_eq!(unsafe { pathent_tagstream_read(missing.as_ptr(), &mut s) }, PathentStatus::Io);
    assert!(s.is_null());
}

#[test]
fn tag_file_round_trip_and_copy() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("t.ptag").to_str().unwrap()).unwrap();
    let s = stream(&[5, 10, 10, 40], &[0, 1, 2, 0], 100);
    let mut back = ptr::null_mut();
    unsafe {
        assert_eq!(pathent_tagstream_write(s, path.as_ptr()), PathentStatus::Ok);
        assert_eq!(pathent_tagstream_read(path.as_ptr(), &mut back), PathentStatus::Ok);
        assert_eq!(pathent_tagstream_len(back), 4);
        assert_eq!(pathent_tagstream_duration(back), 100);
        assert_eq!(pathent_tagstream_resolution(back), 1);

        let (mut t, mut c, mut n) = ([0u64; 4], [0u8; 4], 0usize);
        assert_eq!(pathent_tagstream_copy(back, t.as_mut_ptr(), c.as_mut_ptr(), 4, &mut n), PathentStatus::Ok);
        assert_eq!((t, c, n), ([5, 10, 10, 40], [0, 1, 2, 0], 4));
        assert_eq!(pathent_tagstream_copy(back, t.as_mut_ptr(), c.as_mut_ptr(), 2, &mut n), PathentStatus::BufferTooSmall);
        assert_eq!(n, 2);

        let mut dh = ptr::null_mut();
        assert_eq!(pathent_tagstream_select(back, PATHENT_CHANNEL_DH, &mut dh), PathentStatus::Ok);
        assert_eq!(pathent_tagstream_len(dh), 2);
        assert_eq!(pathent_tagstream_select(back, 9, &mut dh), PathentStatus::InvalidParameter);
        pathent_tagstream_free(dh);
        pathent_tagstream_free(back);
        pathent_tagstream_free(s);
        pathent_tagstream_free(ptr::null_mut());
    }
}

#[test]
fn histogram_and_window_counts() {
    // one DV tag 3 ns after the DH tag, both within a 10 ns acquisition
    let a = stream(&[2_000], &[0], 10_000);
    let b = stream(&[5_000], &[1], 10_000);
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(pathent_g2_estimate(a, b, 1.0, 5.0, &mut h), PathentStatus::Ok);
        let n = pathent_g2_len(h);
        assert_eq!(n, 10);
        let mut counts = vec![0u64; n];
        let mut tau = vec![0.0; n];
        assert_eq!(
            pathent_g2_copy(h, n, tau.as_mut_ptr(), ptr::null_mut(), ptr::null_mut(), counts.as_mut_ptr()),
            PathentStatus::Ok
        );
        assert_eq!(counts.iter().sum::<u64>(), 1);
        assert_eq!(counts[8], 1);
        assert_eq!(tau[8], 3.5);
        assert_eq!(pathent_g2_copy(h, n - 1, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), PathentStatus::BufferTooSmall);

        let mut fit = PathentG2Fit::default();
        assert_ne!(pathent_g2_fit(h, &REFERENCE, false, &mut fit), PathentStatus::Ok);
        pathent_g2_free(h);

        let mut w = PathentWindowCounts::default();
        assert_eq!(pathent_window_populations(a, b, 5.0, &mut w), PathentStatus::Ok);
        assert_eq!((w.window_count, w.n0, w.n1, w.n2), (2, 0, 2, 0));
        assert_eq!(pathent_window_populations(a, b, 10.0, &mut w), PathentStatus::Ok);
        assert_eq!((w.window_count, w.n2, w.detected.p2), (1, 1, 1.0));
        assert_eq!(pathent_window_populations(a, b, 2.0, &mut w), PathentStatus::Ok);
        assert_eq!((w.n0, w.n1, w.n2), (3, 2, 0));

        let c = stream(&[], &[], 20_000);
        assert_eq!(pathent_window_populations(a, c, 5.0, &mut w), PathentStatus::DurationMismatch);
        for s in [a, b, c] {
            pathent_tagstream_free(s);
        }
    }
}

#[test]
fn inversion_contamination_and_concurrence() {
    let d = PathentPopulations { p0: 0.9, p1: 0.08, p2: 0.02, p0_err: 0.0, p1_err: 1e-3, p2_err: 1e-4 };
    let mut c = PathentPopulations::default();
    let mut clamped = true;
    unsafe {
        assert_eq!(pathent_invert_losses(&d, 1.0, 0.0, PathentInversion::Verbatim, &mut c, &mut clamped), PathentStatus::Ok);
        assert!(!clamped);
        assert!((c.p1 - d.p1).abs() < 1e-15 && (c.p2 - d.p2).abs() < 1e-15);
        assert_eq!(pathent_invert_losses(&d, 0.0, 0.0, PathentInversion::SelfConsistent, &mut c, ptr::null_mut()), PathentStatus::InvalidParameter);

        // binomially thinned |1> and |2> recovered exactly in self-consistent mode
        let eta = 0.25;
        let truth = (0.1, 0.01);
        let thinned = PathentPopulations {
            p0: 0.0,
            p1: eta * truth.0 + 2.0 * eta * (1.0 - eta) * truth.1,
            p2: eta * eta * truth.1,
            ..Default::default()
        };
        assert_eq!(pathent_invert_losses(&thinned, eta, 0.0, PathentInversion::SelfConsistent, &mut c, ptr::null_mut()), PathentStatus::Ok);
        assert!((c.p1 - truth.0).abs() < 1e-14 && (c.p2 - truth.1).abs() < 1e-14);

        let coherent = PathentPopulations { p0: 0.81, p1: 0.18, p2: 0.01, ..Default::default() };
        let mut yc = 0.0;
        assert_eq!(pathent_contamination(&coherent, 2, &mut yc, ptr::null_mut()), PathentStatus::Ok);
        assert!((yc - 1.0).abs() < 1e-12);

        let input = PathentConcurrenceInput { window_ns: 2.0, visibility: 0.93, visibility_err: 0.01, yc: 0.16, yc_err: 0.0, p1: 0.5, p: 1.0 };
        let mut r = PathentConcurrence::default();
        assert_eq!(pathent_concurrence(&input, &mut r), PathentStatus::Ok);
        assert!((r.c_n - 0.53).abs() < 1e-12 && (r.concurrence - 0.265).abs() < 1e-12 && !r.clamped);
        let bad = PathentConcurrenceInput { visibility: 1.5, ..input };
        assert_eq!(pathent_concurrence(&bad, &mut r), PathentStatus::InvalidParameter);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pathent.h")).unwrap();
    for name in [
        "pathent_last_error_message",
        "pathent_version",
        "pathent_tagstream_read",
        "pathent_tagstream_write",
        "pathent_tagstream_from_arrays",
        "pathent_tagstream_select",
        "pathent_tagstream_copy",
        "pathent_tagstream_free",
        "pathent_g2_estimate",
        "pathent_g2_copy",
        "pathent_g2_fit",
        "pathent_g2_free",
        "pathent_window_populations",
        "pathent_invert_losses",
        "pathent_contamination",
        "pathent_concurrence",
        "pathent_g2_detected",
        "pathent_g2_detected_numeric",
        "pathent_g2_detected_simple",
        "pathent_populations_from_g2",
        "PATHENT_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compiles a small C program against the header and the static library,
/// when a C compiler and the archive are available.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libpathent_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke program failed to compile");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok 0.1.0"));
}
