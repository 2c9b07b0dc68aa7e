//! C interface to permlab.
//!
//! Kernels live behind an opaque handle. Every fallible call returns a
//! [`PermlabStatus`]; on failure the message is kept per thread and can be
//! copied out with [`permlab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use permlab::density::{density_quadrature, laplace_transform_exact, AngularGrid};
use permlab::kernel::classify;
use permlab::samplers::sample_batch;
use permlab::verify::kernel_sampler;
use permlab::{Error, SquareMatrix};

/// Status codes; the numeric values follow the CLI exit codes where they overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    CostGuard = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Opaque kernel handle.
pub struct PermlabKernel {
    g: SquareMatrix,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PermlabKernelReport {
    pub n: usize,
    pub has_pd_sym_part: bool,
    pub is_m_matrix: bool,
    pub is_inverse_m_matrix: bool,
    /// NaN when the symmetric part is not positive definite.
    pub gamma: f64,
    pub spectral_radius: f64,
    pub min_sym_eigenvalue: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PermlabStatus {
    match e.exit_code() {
        2 => PermlabStatus::InvalidInput,
        4 => PermlabStatus::CostGuard,
        _ => PermlabStatus::Numerical,
    }
}

fn guarded(f: impl FnOnce() -> Result<(), PermlabStatus>) -> PermlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PermlabStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            PermlabStatus::Panic
        }
    }
}

fn check<T>(r: permlab::Result<T>) -> Result<T, PermlabStatus> {
    r.map_err(|e| {
        let s = status_of(&e);
        set_error(e.to_string());
        s
    })
}

fn null(what: &str) -> PermlabStatus {
    set_error(format!("{what} is null"));
    PermlabStatus::NullPointer
}

unsafe fn kernel_ref<'a>(k: *const PermlabKernel) -> Result<&'a PermlabKernel, PermlabStatus> {
    k.as_ref().ok_or_else(|| null("kernel"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], PermlabStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn permlab_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn permlab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let m = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, m);
            *buf.add(m) = 0;
        }
        msg.len()
    })
}

/// Creates a kernel from `n * n` row-major entries.
///
/// # Safety
/// `rows` must point to `n * n` doubles and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn permlab_kernel_new(rows: *const f64, n: usize, out: *mut *mut PermlabKernel) -> PermlabStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 {
            set_error("kernel dimension must be positive".into());
            return Err(PermlabStatus::InvalidInput);
        }
        let data = slice(rows, n * n, "rows")?;
        let rows: Vec<Vec<f64>> = data.chunks(n).map(<[f64]>::to_vec).collect();
        let g = check(SquareMatrix::from_rows(&rows))?;
        *out = Box::into_raw(Box::new(PermlabKernel { g }));
        Ok(())
    })
}

/// Releases a handle from [`permlab_kernel_new`]. Null is ignored.
///
/// # Safety
/// `k` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn permlab_kernel_free(k: *mut PermlabKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Dimension of the kernel, 0 for a null handle.
///
/// # Safety
/// `k` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn permlab_kernel_dim(k: *const PermlabKernel) -> usize {
    k.as_ref().map_or(0, |k| k.g.n())
}

/// # Safety
/// `k` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_classify(
    k: *const PermlabKernel,
    tol: f64,
    out: *mut PermlabKernelReport,
) -> PermlabStatus {
    guarded(|| {
        let k = kernel_ref(k)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = check(classify(&k.g, tol))?;
        *out = PermlabKernelReport {
            n: r.n,
            has_pd_sym_part: r.has_pd_sym_part,
            is_m_matrix: r.is_m_matrix,
            is_inverse_m_matrix: r.is_inverse_m_matrix,
            gamma: r.gamma.unwrap_or(f64::NAN),
            spectral_radius: r.spectral_radius,
            min_sym_eigenvalue: r.min_sym_eigenvalue,
        };
        Ok(())
    })
}

/// Density at `l` (length n) by torus quadrature with `grid_k` points per
/// angle on the reduced grid. `residue` may be null.
///
/// # Safety
/// `k` must be a live handle, `l` must hold n doubles, `value` writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_density(
    k: *const PermlabKernel,
    l: *const f64,
    grid_k: usize,
    value: *mut f64,
    residue: *mut f64,
) -> PermlabStatus {
    guarded(|| {
        let k = kernel_ref(k)?;
        let l = slice(l, k.g.n(), "l")?;
        if value.is_null() {
            return Err(null("value"));
        }
        let grid = check(AngularGrid::new(grid_k, true))?;
        let d = check(density_quadrature(&k.g, l, grid))?;
        *value = d.value;
        if !residue.is_null() {
            *residue = d.imag_residue;
        }
        Ok(())
    })
}

/// det(I + ΛG)^{−alpha} for λ of length n.
///
/// # Safety
/// `k` must be a live handle, `lambda` must hold n doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn permlab_laplace_transform(
    k: *const PermlabKernel,
    lambda: *const f64,
    alpha: f64,
    out: *mut f64,
) -> PermlabStatus {
    guarded(|| {
        let k = kernel_ref(k)?;
        let lambda = slice(lambda, k.g.n(), "lambda")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = check(laplace_transform_exact(&k.g, lambda, alpha))?;
        Ok(())
    })
}

/// Writes `count` exact samples row-major into `buf`, which must hold
/// `count * n` doubles. Output depends only on the kernel, `count` and `seed`.
///
/// # Safety
/// `k` must be a live handle and `buf` must point to `buf_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn permlab_sample(
    k: *const PermlabKernel,
    count: usize,
    seed: u64,
    buf: *mut f64,
    buf_len: usize,
) -> PermlabStatus {
    guarded(|| {
        let k = kernel_ref(k)?;
        let n = k.g.n();
        let need = count.checked_mul(n).ok_or(PermlabStatus::InvalidInput)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if buf_len < need {
            set_error(format!("buffer holds {buf_len} values, {need} needed"));
            return Err(PermlabStatus::BufferTooSmall);
        }
        let sampler = check(kernel_sampler(&k.g))?;
        let out = std::slice::from_raw_parts_mut(buf, need);
        for (row, s) in out.chunks_mut(n).zip(sample_batch(&*sampler, count, seed, "ffi")) {
            row.copy_from_slice(&s);
        }
        Ok(())
    })
}
