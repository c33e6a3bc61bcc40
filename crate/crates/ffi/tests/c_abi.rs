use std::ffi::{CStr, CString};
use std::ptr;

use msdeim_ffi::*;

fn last_error() -> String {
    let p = msd_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn space_round_trip() {
    let kappa: Vec<f64> = (0..64).map(|k| if k % 9 == 0 { 100.0 } else { 1.0 }).collect();
    let mut space = ptr::null_mut();
    let st = unsafe { msd_space_build(8, 8, 2, 2, kappa.as_ptr(), kappa.len(), 2, 1, &mut space) };
    assert_eq!(st, MsdStatus::Ok);
    let (mut n, mut d) = (0usize, 0usize);
    assert_eq!(unsafe { msd_space_dims(space, &mut n, &mut d) }, MsdStatus::Ok);
    assert_eq!((n, d), (81, 8));
    let mut r = vec![0.0; n * d];
    assert_eq!(unsafe { msd_space_basis(space, r.as_mut_ptr(), r.len()) }, MsdStatus::Ok);
    let c: Vec<f64> = (0..d).map(|i| i as f64).collect();
    let mut u = vec![0.0; n];
    assert_eq!(unsafe { msd_space_prolong(space, c.as_ptr(), d, u.as_mut_ptr(), n) }, MsdStatus::Ok);
    for row in 0..n {
        let expect: f64 = (0..d).map(|j| r[j * n + row] * c[j]).sum();
        assert!((u[row] - expect).abs() < 1e-12);
    }
    assert_eq!(unsafe { msd_space_basis(space, r.as_mut_ptr(), 3) }, MsdStatus::InvalidArgument);
    unsafe { msd_space_free(space) };
}

#[test]
fn bad_input_sets_status_and_message() {
    let mut space = ptr::null_mut();
    let st = unsafe { msd_space_build(8, 8, 3, 2, [1.0; 64].as_ptr(), 64, 2, 1, &mut space) };
    assert_eq!(st, MsdStatus::Config);
    assert!(space.is_null());
    assert!(!last_error().is_empty());
    let st = unsafe { msd_space_build(8, 8, 2, 2, ptr::null(), 64, 2, 1, &mut space) };
    assert_eq!(st, MsdStatus::NullPointer);
    let st = unsafe { msd_space_dims(ptr::null(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, MsdStatus::NullPointer);
    unsafe { msd_space_free(ptr::null_mut()) };
}

#[test]
fn deim_hand_example_through_the_abi() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { msd_deim_new([1.0, 0.0].as_ptr(), 2, 1, &mut model) }, MsdStatus::Ok);
    let mut p = [9usize];
    assert_eq!(unsafe { msd_deim_points(model, p.as_mut_ptr(), 1) }, MsdStatus::Ok);
    assert_eq!(p, [0]);
    let f = [1.0, 1.0, 1.0, 1.0];
    let mut updated = ptr::null_mut();
    let mut accepted = -1;
    let st = unsafe { msd_deim_online_update(model, f.as_ptr(), 2, 2, &mut accepted, &mut updated) };
    assert_eq!(st, MsdStatus::Ok);
    assert_eq!(accepted, 1);
    let mut out = [0.0; 2];
    assert_eq!(unsafe { msd_deim_approximate(updated, [3.0, 0.0].as_ptr(), 2, out.as_mut_ptr()) }, MsdStatus::Ok);
    assert!((out[0] - 3.0).abs() < 1e-14 && (out[1] - 3.0).abs() < 1e-14);
    unsafe {
        msd_deim_free(updated);
        msd_deim_free(model);
    }
}

#[test]
fn experiment_from_toml() {
    let cfg = CString::new(
        r#"
[mesh]
fine = [8, 8]
coarse = [2, 2]
[basis]
eigen_count = 2
layers = 1
[permeability]
source = "constant"
value = 1.0
[problem]
drift = { name = "cosine", scale = 1.0 }
diffusion = { name = "constant", value = 1.0 }
initial = { kind = "sine-product", amplitude = 1.0 }
[noise]
kind = "scalar-brownian"
q = 0.01
[time]
t_final = 0.05
steps = 4
[run]
trajectories = 2
modes = ["fine-reference", "ms-newton"]
"#,
    )
    .unwrap();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { msd_run_from_toml(cfg.as_ptr(), &mut run) }, MsdStatus::Ok);
    let mut e = -1.0;
    let fine = CString::new("fine-reference").unwrap();
    assert_eq!(unsafe { msd_run_mean_error(run, fine.as_ptr(), 4, &mut e) }, MsdStatus::Ok);
    assert_eq!(e, 0.0);
    let ms = CString::new("ms-newton").unwrap();
    assert_eq!(unsafe { msd_run_mean_error(run, ms.as_ptr(), 4, &mut e) }, MsdStatus::Ok);
    assert!(e > 0.0 && e < 1.0);
    let bogus = CString::new("spectral").unwrap();
    assert_eq!(unsafe { msd_run_mean_error(run, bogus.as_ptr(), 4, &mut e) }, MsdStatus::Config);
    let dir = std::env::temp_dir().join(format!("msdeim-ffi-{}", std::process::id()));
    let dir_c = CString::new(dir.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { msd_run_write(run, dir_c.as_ptr()) }, MsdStatus::Ok);
    assert!(dir.join("summary.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
    unsafe { msd_run_free(run) };
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/msdeim.h")).unwrap();
    for name in ["msd_space_build", "msd_deim_online_update", "msd_run_from_toml", "msd_last_error", "MSD_STATUS_OK"] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let v = unsafe { CStr::from_ptr(msd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
