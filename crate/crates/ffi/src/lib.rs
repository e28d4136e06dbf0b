//! C ABI for the clustering engine.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `kkm_*_new`/`kkm_*_load`/`kkm_run` call and released by the matching
//! `kkm_*_free`. Functions return a [`KkmStatus`]; on failure the message is
//! available from [`kkm_last_error_message`] on the same thread until the next
//! failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kkm_core::collectives::{plan_min_batches, ResourceModel};
use kkm_core::engine::GdConfig;
use kkm_core::kernels::{estimate_d_max, KernelSpec};
use kkm_core::lifecycle::{run_clustering, RunConfig, RunOutput};
use kkm_core::metrics;
use kkm_core::sampling::SamplingStrategy;
use kkm_core::{io, DataSet, KkmError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KkmStatus {
    Ok = 0,
    NullPointer = 1,
    Input = 2,
    Format = 3,
    Capacity = 4,
    State = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KkmKernel {
    Rbf = 0,
    Linear = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KkmSampling {
    Stride = 0,
    Block = 1,
}

/// Samples and optional class labels.
pub struct KkmDataset {
    inner: DataSet,
}

/// Run parameters. `sigma <= 0` with the rbf kernel means "auto".
pub struct KkmConfig {
    clusters: usize,
    batches: usize,
    sparsity: f64,
    workers: usize,
    kernel: KkmKernel,
    sigma: f64,
    sigma_scale: f64,
    sampling: KkmSampling,
    seed: u64,
    restarts: usize,
    max_iters: usize,
}

/// Labels, medoids and cost of a finished run.
pub struct KkmResult {
    inner: RunOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &KkmError) -> KkmStatus {
    match e {
        KkmError::Input(_) => KkmStatus::Input,
        KkmError::Format { .. } => KkmStatus::Format,
        KkmError::Capacity { .. } => KkmStatus::Capacity,
        KkmError::State(_) => KkmStatus::State,
        KkmError::Io { .. } => KkmStatus::Io,
    }
}

fn fail(status: KkmStatus, msg: impl Into<String>) -> KkmStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), KkmStatus>) -> KkmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KkmStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(KkmStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: kkm_core::Result<T>) -> Result<T, KkmStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, KkmStatus> {
    if p.is_null() {
        return Err(fail(KkmStatus::NullPointer, format!("{what} is null")));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(KkmStatus::Input, format!("{what} is not valid UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, KkmStatus> {
    p.as_mut().ok_or_else(|| fail(KkmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, KkmStatus> {
    p.as_ref().ok_or_else(|| fail(KkmStatus::NullPointer, format!("{what} is null")))
}

/// Message for the last failing call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kkm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `n × d` row-major samples (and `n` labels when `labels` is not NULL).
///
/// # Safety
/// `values` must point to `n * d` doubles, `labels` to `n` integers or be NULL,
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kkm_dataset_new(
    n: usize,
    d: usize,
    values: *const f64,
    labels: *const u32,
    out: *mut *mut KkmDataset,
) -> KkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if values.is_null() {
            return Err(fail(KkmStatus::NullPointer, "values is null"));
        }
        let len = n.checked_mul(d).ok_or_else(|| fail(KkmStatus::Input, "n * d overflows"))?;
        let samples = std::slice::from_raw_parts(values, len).to_vec();
        let labels = (!labels.is_null()).then(|| std::slice::from_raw_parts(labels, n).to_vec());
        let inner = lift(DataSet::new(n, d, samples, labels))?;
        *out = Box::into_raw(Box::new(KkmDataset { inner }));
        Ok(())
    })
}

/// Loads a numeric CSV; with `has_labels != 0` the last column is the class.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kkm_dataset_load_csv(path: *const c_char, has_labels: i32, out: *mut *mut KkmDataset) -> KkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = lift(io::load_csv(path_arg(path, "path")?, has_labels != 0))?;
        *out = Box::into_raw(Box::new(KkmDataset { inner }));
        Ok(())
    })
}

/// Loads IDX images and, when `labels` is not NULL, IDX labels.
///
/// # Safety
/// `images` (and `labels` if given) must be NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kkm_dataset_load_idx(
    images: *const c_char,
    labels: *const c_char,
    out: *mut *mut KkmDataset,
) -> KkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let images = path_arg(images, "images")?;
        let labels = if labels.is_null() { None } else { Some(path_arg(labels, "labels")?) };
        let inner = lift(io::load_idx(images, labels))?;
        *out = Box::into_raw(Box::new(KkmDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be NULL or a pointer returned by a dataset constructor.
#[no_mangle]
pub unsafe extern "C" fn kkm_dataset_len(ds: *const KkmDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `ds` must be NULL or a pointer returned by a dataset constructor.
#[no_mangle]
pub unsafe extern "C" fn kkm_dataset_dim(ds: *const KkmDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dim())
}

/// # Safety
/// `ds` must be NULL or a pointer returned by a dataset constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn kkm_dataset_free(ds: *mut KkmDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Defaults: one batch, `s = 1`, one worker, rbf with auto sigma (4 × diameter),
/// stride sampling, seed 0, one restart, 300 iterations.
#[no_mangle]
pub extern "C" fn kkm_config_new(clusters: usize, batches: usize) -> *mut KkmConfig {
    Box::into_raw(Box::new(KkmConfig {
        clusters,
        batches,
        sparsity: 1.0,
        workers: 1,
        kernel: KkmKernel::Rbf,
        sigma: 0.0,
        sigma_scale: 4.0,
        sampling: KkmSampling::Stride,
        seed: 0,
        restarts: 1,
        max_iters: 300,
    }))
}

macro_rules! setter {
    ($name:ident, $field:ident, $ty:ty) => {
        /// # Safety
        /// `cfg` must be NULL or a pointer from [`kkm_config_new`].
        #[no_mangle]
        pub unsafe extern "C" fn $name(cfg: *mut KkmConfig, value: $ty) -> KkmStatus {
            match cfg.as_mut() {
                Some(c) => {
                    c.$field = value;
                    KkmStatus::Ok
                }
                None => fail(KkmStatus::NullPointer, "config is null"),
            }
        }
    };
}

setter!(kkm_config_set_sparsity, sparsity, f64);
setter!(kkm_config_set_workers, workers, usize);
setter!(kkm_config_set_kernel, kernel, KkmKernel);
setter!(kkm_config_set_sigma, sigma, f64);
setter!(kkm_config_set_sigma_scale, sigma_scale, f64);
setter!(kkm_config_set_sampling, sampling, KkmSampling);
setter!(kkm_config_set_seed, seed, u64);
setter!(kkm_config_set_restarts, restarts, usize);
setter!(kkm_config_set_max_iters, max_iters, usize);

/// # Safety
/// `cfg` must be NULL or a pointer from [`kkm_config_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn kkm_config_free(cfg: *mut KkmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn resolve(cfg: &KkmConfig, data: &DataSet) -> kkm_core::Result<RunConfig> {
    let kernel = match cfg.kernel {
        KkmKernel::Linear => KernelSpec::linear(),
        KkmKernel::Rbf if cfg.sigma > 0.0 => KernelSpec::rbf(cfg.sigma)?,
        KkmKernel::Rbf => {
            let d_max = estimate_d_max(data, &KernelSpec::linear(), cfg.seed);
            if d_max <= 0.0 {
                return Err(KkmError::input("all sampled points coincide; cannot derive sigma"));
            }
            KernelSpec::rbf(cfg.sigma_scale * d_max)?
        }
    };
    let mut rc = RunConfig::new(cfg.clusters, cfg.batches, kernel);
    rc.sparsity = cfg.sparsity;
    rc.workers = cfg.workers;
    rc.sampling = match cfg.sampling {
        KkmSampling::Stride => SamplingStrategy::Stride,
        KkmSampling::Block => SamplingStrategy::Block,
    };
    rc.seed = cfg.seed;
    rc.restarts = cfg.restarts;
    rc.gd = GdConfig {
        max_iters: cfg.max_iters,
        label_change_tolerance: 0,
    };
    Ok(rc)
}

/// Clusters `ds` with `cfg`.
///
/// # Safety
/// `ds` and `cfg` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kkm_run(ds: *const KkmDataset, cfg: *const KkmConfig, out: *mut *mut KkmResult) -> KkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = handle(ds, "dataset")?;
        let cfg = handle(cfg, "config")?;
        let rc = lift(resolve(cfg, &ds.inner))?;
        let inner = lift(run_clustering(&ds.inner, &rc))?;
        *out = Box::into_raw(Box::new(KkmResult { inner }));
        Ok(())
    })
}

/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn kkm_result_len(res: *const KkmResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.labels.len())
}

/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn kkm_result_clusters(res: *const KkmResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.state.medoids.len())
}

/// Copies the labels into `buf` (capacity `len`).
///
/// # Safety
/// `res` must be a live result handle; `buf` must hold `len` integers.
#[no_mangle]
pub unsafe extern "C" fn kkm_result_labels(res: *const KkmResult, buf: *mut u32, len: usize) -> KkmStatus {
    guard(|| {
        let r = handle(res, "result")?;
        let labels = &r.inner.labels;
        if buf.is_null() {
            return Err(fail(KkmStatus::NullPointer, "buffer is null"));
        }
        if len < labels.len() {
            return Err(fail(KkmStatus::BufferTooSmall, format!("need {} labels", labels.len())));
        }
        ptr::copy_nonoverlapping(labels.as_ptr(), buf, labels.len());
        Ok(())
    })
}

/// Copies medoid sample indices into `buf` (capacity `len`); absent medoids are `-1`.
///
/// # Safety
/// `res` must be a live result handle; `buf` must hold `len` integers.
#[no_mangle]
pub unsafe extern "C" fn kkm_result_medoids(res: *const KkmResult, buf: *mut i64, len: usize) -> KkmStatus {
    guard(|| {
        let r = handle(res, "result")?;
        let m = &r.inner.state.medoids;
        if buf.is_null() {
            return Err(fail(KkmStatus::NullPointer, "buffer is null"));
        }
        if len < m.len() {
            return Err(fail(KkmStatus::BufferTooSmall, format!("need {} medoids", m.len())));
        }
        for (j, v) in m.iter().enumerate() {
            *buf.add(j) = v.map_or(-1, |g| g as i64);
        }
        Ok(())
    })
}

/// Global cost of the kept restart, or NaN for a NULL handle.
///
/// # Safety
/// `res` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn kkm_result_cost(res: *const KkmResult) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.inner.global_cost)
}

/// # Safety
/// `res` must be NULL or a live result handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn kkm_result_free(res: *mut KkmResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Smallest batch count whose per-worker footprint fits `memory_bytes`.
///
/// # Safety
/// `out_batches` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kkm_plan_min_batches(
    samples: u64,
    clusters: u64,
    workers: u64,
    scalar_bytes: u64,
    memory_bytes: u64,
    out_batches: *mut u64,
) -> KkmStatus {
    guard(|| {
        let out = out_arg(out_batches, "out_batches")?;
        let model = lift(ResourceModel::new(scalar_bytes, memory_bytes))?;
        *out = lift(plan_min_batches(samples, clusters, workers, &model))?.b_min;
        Ok(())
    })
}

unsafe fn label_pair<'a>(truth: *const u32, pred: *const u32, n: usize) -> Result<(&'a [u32], &'a [u32]), KkmStatus> {
    if truth.is_null() || pred.is_null() {
        return Err(fail(KkmStatus::NullPointer, "label array is null"));
    }
    Ok((std::slice::from_raw_parts(truth, n), std::slice::from_raw_parts(pred, n)))
}

/// Majority-vote clustering accuracy.
///
/// # Safety
/// `truth` and `pred` must hold `n` integers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kkm_accuracy(truth: *const u32, pred: *const u32, n: usize, out: *mut f64) -> KkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (t, p) = label_pair(truth, pred, n)?;
        *out = lift(metrics::clustering_accuracy(t, p))?;
        Ok(())
    })
}

/// Normalized mutual information.
///
/// # Safety
/// `truth` and `pred` must hold `n` integers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kkm_nmi(truth: *const u32, pred: *const u32, n: usize, out: *mut f64) -> KkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (t, p) = label_pair(truth, pred, n)?;
        *out = lift(metrics::nmi(t, p))?;
        Ok(())
    })
}
