//! C interface to the multiscale solver.
//!
//! Every function returns an [`MsdStatus`]; on failure the message is kept
//! per thread and read with [`msd_last_error`]. Objects are opaque handles
//! created by `*_new`/`*_build` functions and released with the matching
//! `*_free`. Matrices cross the boundary column-major.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::{DMatrix, DVector};

use msdeim::fem::PermeabilityField;
use msdeim::grid::StructuredMesh;
use msdeim::harness::{run_experiment, write_results, ExperimentConfig, ExperimentResult};
use msdeim::integrator::SolverMode;
use msdeim::msbasis::{build_multiscale_space, BasisParams, MultiscaleSpace};
use msdeim::rom::{online_update_from_evaluations, DeimModel};
use msdeim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

/// A multiscale space together with its mesh.
pub struct MsdSpace {
    space: MultiscaleSpace,
}

/// An interpolation model (basis and points).
pub struct MsdDeim {
    model: DeimModel,
}

/// The in-memory result of a complete experiment.
pub struct MsdRun {
    result: ExperimentResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MsdStatus {
    match e {
        Error::Config(_) | Error::Data(_) => MsdStatus::Config,
        Error::Io(_) | Error::Format(_) => MsdStatus::Io,
        _ => MsdStatus::Numerical,
    }
}

struct Fail(MsdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(MsdStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MsdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsdStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside msdeim".into());
            MsdStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(Fail(MsdStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(Fail(MsdStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(MsdStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(MsdStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(MsdStatus::NullPointer, "output handle pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn msd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn msd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds the multiscale space on an `nx × ny` fine grid with `ncx × ncy`
/// coarse blocks. `kappa` holds one value per fine cell, x fastest.
#[no_mangle]
pub unsafe extern "C" fn msd_space_build(
    nx: usize,
    ny: usize,
    ncx: usize,
    ncy: usize,
    kappa: *const f64,
    kappa_len: usize,
    eigen_count: usize,
    layers: usize,
    out: *mut *mut MsdSpace,
) -> MsdStatus {
    guard(|| {
        let values = slice(kappa, kappa_len, "kappa")?;
        if kappa_len != nx * ny {
            return Err(invalid(format!("kappa has {kappa_len} values for {nx}x{ny} cells")));
        }
        let mesh = StructuredMesh::new(nx, ny, ncx, ncy)?;
        let field = PermeabilityField::new(nx, ny, values.to_vec())?;
        let space = build_multiscale_space(&mesh, &field, BasisParams { eigen_count, layers })?;
        emit(out, MsdSpace { space })
    })
}

/// Fine node count and coarse dimension.
#[no_mangle]
pub unsafe extern "C" fn msd_space_dims(space: *const MsdSpace, nodes: *mut usize, coarse_dim: *mut usize) -> MsdStatus {
    guard(|| {
        let s = handle(space, "space")?;
        *slice_mut(nodes, 1, "nodes")?.first_mut().unwrap() = s.space.basis.nrows();
        *slice_mut(coarse_dim, 1, "coarse_dim")?.first_mut().unwrap() = s.space.basis.ncols();
        Ok(())
    })
}

/// Copies the basis matrix `R` (nodes × coarse_dim, column-major).
#[no_mangle]
pub unsafe extern "C" fn msd_space_basis(space: *const MsdSpace, out: *mut f64, len: usize) -> MsdStatus {
    guard(|| {
        let r = &handle(space, "space")?.space.basis;
        if len != r.len() {
            return Err(invalid(format!("basis has {} entries, buffer {len}", r.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(r.as_slice());
        Ok(())
    })
}

/// Nodal field `R c` for coarse coefficients `c`.
#[no_mangle]
pub unsafe extern "C" fn msd_space_prolong(
    space: *const MsdSpace,
    coeffs: *const f64,
    coeffs_len: usize,
    out: *mut f64,
    out_len: usize,
) -> MsdStatus {
    guard(|| {
        let s = &handle(space, "space")?.space;
        let (n, d) = s.basis.shape();
        if coeffs_len != d || out_len != n {
            return Err(invalid(format!("expected {d} coefficients and {n} outputs")));
        }
        let c = DVector::from_column_slice(slice(coeffs, coeffs_len, "coeffs")?);
        slice_mut(out, out_len, "out")?.copy_from_slice(s.prolong(&c).as_slice());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn msd_space_free(space: *mut MsdSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Greedy interpolation model for an `n × m` column-major basis.
#[no_mangle]
pub unsafe extern "C" fn msd_deim_new(basis: *const f64, n: usize, m: usize, out: *mut *mut MsdDeim) -> MsdStatus {
    guard(|| {
        let u = DMatrix::from_column_slice(n, m, slice(basis, n * m, "basis")?);
        emit(out, MsdDeim { model: DeimModel::new(u)? })
    })
}

/// Writes the `m` interpolation indices.
#[no_mangle]
pub unsafe extern "C" fn msd_deim_points(model: *const MsdDeim, out: *mut usize, len: usize) -> MsdStatus {
    guard(|| {
        let p = handle(model, "model")?.model.points();
        if len != p.len() {
            return Err(invalid(format!("model has {} points, buffer {len}", p.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(p);
        Ok(())
    })
}

/// `U (PᵀU)⁻¹ Pᵀ f` for a full vector `f` of length `n`.
#[no_mangle]
pub unsafe extern "C" fn msd_deim_approximate(model: *const MsdDeim, f: *const f64, n: usize, out: *mut f64) -> MsdStatus {
    guard(|| {
        let m = &handle(model, "model")?.model;
        if n != m.len() {
            return Err(invalid(format!("model dimension {}, vector {n}", m.len())));
        }
        let v = DVector::from_column_slice(slice(f, n, "f")?);
        slice_mut(out, n, "out")?.copy_from_slice(m.approximate(&v).as_slice());
        Ok(())
    })
}

/// Online update from `cols` full evaluations (`n × cols`, column-major).
/// `accepted` receives 0 when the update was rejected and the returned
/// model equals the input.
#[no_mangle]
pub unsafe extern "C" fn msd_deim_online_update(
    model: *const MsdDeim,
    f: *const f64,
    n: usize,
    cols: usize,
    accepted: *mut i32,
    out: *mut *mut MsdDeim,
) -> MsdStatus {
    guard(|| {
        let m = &handle(model, "model")?.model;
        let data = DMatrix::from_column_slice(n, cols, slice(f, n * cols, "f")?);
        let up = online_update_from_evaluations(m, &data)?;
        if !accepted.is_null() {
            *accepted = i32::from(up.accepted);
        }
        emit(out, MsdDeim { model: up.model })
    })
}

#[no_mangle]
pub unsafe extern "C" fn msd_deim_free(model: *mut MsdDeim) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parses a TOML experiment description and runs it to completion.
#[no_mangle]
pub unsafe extern "C" fn msd_run_from_toml(config: *const c_char, out: *mut *mut MsdRun) -> MsdStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml(text(config, "config")?)?;
        emit(out, MsdRun { result: run_experiment(&cfg)? })
    })
}

/// Writes the result files into `dir`.
#[no_mangle]
pub unsafe extern "C" fn msd_run_write(run: *const MsdRun, dir: *const c_char) -> MsdStatus {
    guard(|| {
        let r = handle(run, "run")?;
        write_results(&r.result, Path::new(text(dir, "dir")?))?;
        Ok(())
    })
}

/// Mean relative L2 error of `mode` at time level `step`.
#[no_mangle]
pub unsafe extern "C" fn msd_run_mean_error(run: *const MsdRun, mode: *const c_char, step: usize, out: *mut f64) -> MsdStatus {
    guard(|| {
        let r = &handle(run, "run")?.result;
        let mode: SolverMode = text(mode, "mode")?.parse()?;
        if step > r.config.time.steps {
            return Err(invalid(format!("step {step} is past the last level {}", r.config.time.steps)));
        }
        let v = r
            .mean_l2_at(mode, step)
            .ok_or_else(|| invalid(format!("no successful {mode} trajectories")))?;
        *slice_mut(out, 1, "out")?.first_mut().unwrap() = v;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn msd_run_free(run: *mut MsdRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
