//! C ABI over the qrflab feature maps, readout and simulation kernels.
//!
//! Every fallible function returns a status code (`QRF_OK` on success).
//! On failure the message is available from [`qrf_last_error_message`]
//! on the same thread until the next failing call. Handles are opaque and
//! must be released with the matching `_free` function. Panics never cross
//! the boundary; they are reported as `QRF_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qrflab::encoding::{EncodingParams, RffLikeParams};
use qrflab::features::{extract, FeatureMap, FeatureMatrix, QdrfModel, QrfModel, QrfRffModel, RffModel};
use qrflab::ising::{IsingParams, Propagator};
use qrflab::readout::{evaluate, train, ClassifierParams, TrainConfig};
use qrflab::rff::RffParams;
use qrflab::statevector::{fwht_in_place, sample_shots};
use qrflab::{Error, PermutationKind, PermutationSpec};

use num_complex::Complex64;

pub const QRF_OK: i32 = 0;
pub const QRF_ERR_NULL_POINTER: i32 = 1;
pub const QRF_ERR_DIMENSION: i32 = 2;
pub const QRF_ERR_VALIDATION: i32 = 3;
pub const QRF_ERR_RESOURCE: i32 = 4;
pub const QRF_ERR_NUMERICAL: i32 = 5;
pub const QRF_ERR_PARSE: i32 = 6;
pub const QRF_ERR_CONFIG: i32 = 7;
pub const QRF_ERR_IO: i32 = 8;
pub const QRF_ERR_CSV: i32 = 9;
pub const QRF_ERR_FETCH: i32 = 10;
pub const QRF_ERR_PANIC: i32 = 11;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QRF_OK,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            QRF_ERR_NULL_POINTER
        }
        Ok(Err(Failure::Lib(e))) => {
            let code = e.code();
            set_error(e.to_string());
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            QRF_ERR_PANIC
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failing call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qrf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qrf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Any of the four feature maps.
pub struct QrfFeatureMap {
    inner: Box<dyn FeatureMap>,
}

/// QRF with a random basis permutation; `single_qubit_only != 0` restricts
/// the permutation to bit flips (the non-entangling variant).
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn qrf_model_new_qrf(
    d: usize,
    n_qubits: usize,
    layers: usize,
    sigma: f64,
    seed: u64,
    single_qubit_only: i32,
    out: *mut *mut QrfFeatureMap,
) -> i32 {
    guard(|| {
        let kind = if single_qubit_only != 0 {
            PermutationKind::SingleQubitOnly
        } else {
            PermutationKind::General
        };
        let model = QrfModel {
            params: EncodingParams::draw(d, n_qubits, layers, sigma, seed)?,
            perm: PermutationSpec::draw(n_qubits, kind, seed)?,
        };
        write_out(out, QrfFeatureMap { inner: Box::new(model) })
    })
}

/// The RFF-like extreme model with `2^N` independent phases.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn qrf_model_new_qrf_rff(
    d: usize,
    n_qubits: usize,
    sigma: f64,
    seed: u64,
    out: *mut *mut QrfFeatureMap,
) -> i32 {
    guard(|| {
        let model = QrfRffModel {
            params: RffLikeParams::draw(d, n_qubits, sigma, seed)?,
        };
        write_out(out, QrfFeatureMap { inner: Box::new(model) })
    })
}

/// QRF with the permutation replaced by Ising evolution `e^{-iHt}`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn qrf_model_new_qdrf(
    d: usize,
    n_qubits: usize,
    layers: usize,
    sigma: f64,
    seed: u64,
    j: f64,
    g: f64,
    alpha: f64,
    t: f64,
    out: *mut *mut QrfFeatureMap,
) -> i32 {
    guard(|| {
        let ising = IsingParams {
            n_qubits,
            j,
            g,
            alpha,
            t,
        };
        let model = QdrfModel {
            params: EncodingParams::draw(d, n_qubits, layers, sigma, seed)?,
            propagator: Propagator::from_params(&ising)?,
        };
        write_out(out, QrfFeatureMap { inner: Box::new(model) })
    })
}

/// Classical random Fourier features `√(2/D) cos(Wx + b)`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn qrf_model_new_rff(
    d: usize,
    n_features: usize,
    sigma: f64,
    seed: u64,
    out: *mut *mut QrfFeatureMap,
) -> i32 {
    guard(|| {
        let model = RffModel {
            params: RffParams::draw(d, n_features, sigma, seed)?,
        };
        write_out(out, QrfFeatureMap { inner: Box::new(model) })
    })
}

/// Input width, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qrf_model_input_dim(model: *const QrfFeatureMap) -> usize {
    model.as_ref().map_or(0, |m| m.inner.input_dim())
}

/// Feature count, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qrf_model_feature_dim(model: *const QrfFeatureMap) -> usize {
    model.as_ref().map_or(0, |m| m.inner.feature_dim())
}

/// Features of one input.
///
/// # Safety
/// `x` must hold `x_len` doubles and `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qrf_model_features(
    model: *const QrfFeatureMap,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> i32 {
    guard(|| {
        let m = model.as_ref().ok_or(Failure::Null("model"))?;
        let x = slice(x, x_len, "x")?;
        let out = slice_mut(out, out_len, "out")?;
        if x.len() != m.inner.input_dim() {
            return Err(Error::Dimension {
                context: "ffi input",
                expected: m.inner.input_dim(),
                got: x.len(),
            }
            .into());
        }
        m.inner.features_into(x, out)?;
        Ok(())
    })
}

/// Features of `n_rows` inputs stored row-major in `x`; `out` receives
/// `n_rows × feature_dim` doubles, row-major.
///
/// # Safety
/// `x` must hold `n_rows × input_dim` doubles and `out` must hold
/// `n_rows × feature_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn qrf_model_features_batch(
    model: *const QrfFeatureMap,
    x: *const f64,
    n_rows: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let m = model.as_ref().ok_or(Failure::Null("model"))?;
        let x = slice(x, n_rows * m.inner.input_dim(), "x")?;
        let out = slice_mut(out, n_rows * m.inner.feature_dim(), "out")?;
        let f = extract(m.inner.as_ref(), x, n_rows)?;
        out.copy_from_slice(f.data());
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qrf_model_free(model: *mut QrfFeatureMap) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Softmax readout trained with mini-batch AdaGrad.
pub struct QrfClassifier {
    params: ClassifierParams,
}

/// Trains a classifier on `n_rows × n_cols` row-major features.
///
/// # Safety
/// `features` must hold `n_rows × n_cols` doubles, `labels` must hold
/// `n_rows` entries and `out` must be a valid handle slot.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn qrf_classifier_train(
    features: *const f64,
    n_rows: usize,
    n_cols: usize,
    labels: *const u32,
    n_classes: usize,
    lr: f64,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    out: *mut *mut QrfClassifier,
) -> i32 {
    guard(|| {
        let x = slice(features, n_rows * n_cols, "features")?;
        let y: Vec<usize> = slice(labels, n_rows, "labels")?.iter().map(|&v| v as usize).collect();
        let m = FeatureMatrix::new(n_rows, n_cols, x.to_vec())?;
        let cfg = TrainConfig {
            lr,
            batch_size,
            epochs,
            seed,
            ..TrainConfig::default()
        };
        let (params, _) = train(&m, &y, n_classes, &cfg)?;
        write_out(out, QrfClassifier { params })
    })
}

/// Most likely class of one feature vector.
///
/// # Safety
/// `x` must hold `len` doubles and `class_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrf_classifier_predict(
    clf: *const QrfClassifier,
    x: *const f64,
    len: usize,
    class_out: *mut u32,
) -> i32 {
    guard(|| {
        let c = clf.as_ref().ok_or(Failure::Null("classifier"))?;
        let x = slice(x, len, "x")?;
        if x.len() != c.params.n_features() {
            return Err(Error::Dimension {
                context: "ffi predict",
                expected: c.params.n_features(),
                got: x.len(),
            }
            .into());
        }
        if class_out.is_null() {
            return Err(Failure::Null("class_out"));
        }
        *class_out = c.params.predict(x) as u32;
        Ok(())
    })
}

/// Top-1 accuracy on `n_rows` labelled feature vectors.
///
/// # Safety
/// `features` must hold `n_rows × n_features` doubles, `labels` must hold
/// `n_rows` entries and `accuracy_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrf_classifier_evaluate(
    clf: *const QrfClassifier,
    features: *const f64,
    n_rows: usize,
    labels: *const u32,
    accuracy_out: *mut f64,
) -> i32 {
    guard(|| {
        let c = clf.as_ref().ok_or(Failure::Null("classifier"))?;
        let f = c.params.n_features();
        let x = slice(features, n_rows * f, "features")?;
        let y: Vec<usize> = slice(labels, n_rows, "labels")?.iter().map(|&v| v as usize).collect();
        let m = FeatureMatrix::new(n_rows, f, x.to_vec())?;
        if accuracy_out.is_null() {
            return Err(Failure::Null("accuracy_out"));
        }
        *accuracy_out = evaluate(&c.params, &m, &y)?;
        Ok(())
    })
}

/// # Safety
/// `clf` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qrf_classifier_free(clf: *mut QrfClassifier) {
    if !clf.is_null() {
        drop(Box::from_raw(clf));
    }
}

/// In-place orthonormal Walsh-Hadamard transform of `dim` complex values
/// stored as interleaved (re, im) pairs. `dim` must be a power of two.
///
/// # Safety
/// `data` must hold `2 × dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn qrf_fwht(data: *mut f64, dim: usize) -> i32 {
    guard(|| {
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::Validation(format!("length {dim} is not a power of two")).into());
        }
        let raw = slice_mut(data, 2 * dim, "data")?;
        let mut buf: Vec<Complex64> = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        fwht_in_place(&mut buf);
        for (dst, v) in raw.chunks_exact_mut(2).zip(&buf) {
            dst[0] = v.re;
            dst[1] = v.im;
        }
        Ok(())
    })
}

/// Draws `shots` samples from the distribution `p` and writes the counts.
///
/// # Safety
/// `p` and `counts_out` must each hold `dim` elements.
#[no_mangle]
pub unsafe extern "C" fn qrf_sample_shots(p: *const f64, dim: usize, shots: u64, seed: u64, counts_out: *mut u64) -> i32 {
    guard(|| {
        let p = slice(p, dim, "p")?;
        let out = slice_mut(counts_out, dim, "counts_out")?;
        let emp = sample_shots(p, shots, seed)?;
        out.copy_from_slice(emp.counts());
        Ok(())
    })
}
