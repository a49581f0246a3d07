//! C interface to the pose estimator, metrics and ICP.
//!
//! Every call returns a [`RedeStatus`] and writes results through out
//! pointers. Points are passed as packed `x, y, z` triples of `double`.
//! After a failure, [`rede_last_error`] gives a message for the calling
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rede_core::geometry::{PointCloud, Pose, Quaternion};
use rede_core::metrics::{add_metric, add_s_metric, auc};
use rede_core::refine::{icp_refine_traced, IcpConfig};
use rede_core::solver::{kabsch_solve, EstimatorConfig, PoseEstimator};
use rede_core::{Error, Point3};

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedeStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    InvalidInput = 2,
    InvalidConfig = 3,
    /// Degenerate geometry, or no usable candidate pose.
    Degenerate = 4,
    /// A non-finite value was produced.
    Numerical = 5,
    Io = 6,
    /// Internal panic; the call had no effect.
    Panic = 7,
}

/// A rigid transform: unit quaternion `[w, x, y, z]` and translation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RedePose {
    pub quat: [f64; 4],
    pub t: [f64; 3],
}

impl From<&Pose> for RedePose {
    fn from(p: &Pose) -> Self {
        Self {
            quat: p.rotation.as_array(),
            t: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl RedePose {
    fn to_pose(self) -> Result<Pose, Failure> {
        let q = Quaternion::from_array(self.quat).normalized()?;
        Ok(Pose::new(q, Point3::from(self.t)))
    }
}

/// Robust estimator bound to one model, its keypoints and one scene.
pub struct RedeEstimator {
    inner: PoseEstimator,
}

struct Failure(RedeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) | Error::Parse { .. } => RedeStatus::InvalidInput,
            Error::InvalidConfig(_) => RedeStatus::InvalidConfig,
            Error::DegenerateConfiguration(_) | Error::NoValidCandidate | Error::AggregationDegenerate { .. } => {
                RedeStatus::Degenerate
            }
            Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } => RedeStatus::Numerical,
            Error::Io(_) => RedeStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RedeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RedeStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RedeStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RedeStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `ptr` must be null or valid for reading `3·n` doubles.
unsafe fn points(ptr: *const f64, n: usize, what: &str) -> Result<Vec<Point3>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    let flat: &[f64] = std::slice::from_raw_parts(ptr, 3 * n);
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Failure(
            RedeStatus::InvalidInput,
            format!("{what} has a non-finite coordinate"),
        ));
    }
    Ok(flat.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect())
}

/// # Safety
/// `ptr` must be null or valid for writing one `T`.
unsafe fn write<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    ptr.write(value);
    Ok(())
}

/// # Safety
/// `ptr` must be null or point to a readable `RedePose`.
unsafe fn read_pose(ptr: *const RedePose, what: &str) -> Result<Pose, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    (*ptr).to_pose()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rede_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated when `len > 0`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for writing `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rede_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds an estimator. `lambda` is the residue softmax temperature in
/// meters; `residue_points` caps the scene points used per residue (0 for
/// the default).
///
/// # Safety
/// Each array must hold `3·count` doubles; `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rede_estimator_new(
    model_keypoints: *const f64,
    num_keypoints: usize,
    scene: *const f64,
    num_scene: usize,
    model: *const f64,
    num_model: usize,
    lambda: f64,
    residue_points: usize,
    out: *mut *mut RedeEstimator,
) -> RedeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kps = points(model_keypoints, num_keypoints, "model_keypoints")?;
        let scene = PointCloud::new(points(scene, num_scene, "scene")?);
        let model = PointCloud::new(points(model, num_model, "model")?);
        let mut config = EstimatorConfig {
            lambda,
            ..Default::default()
        };
        if residue_points > 0 {
            config.residue_points = residue_points;
        }
        let inner = PoseEstimator::new(&kps, &scene, &model, config)?;
        out.write(Box::into_raw(Box::new(RedeEstimator { inner })));
        Ok(())
    })
}

/// Number of candidate poses, `C(K, 3)`.
///
/// # Safety
/// `estimator` must come from [`rede_estimator_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rede_estimator_num_candidates(estimator: *const RedeEstimator, out: *mut usize) -> RedeStatus {
    guard(|| {
        let e = estimator.as_ref().ok_or_else(|| null("estimator"))?;
        let k = e.inner.model_keypoints().len();
        write(out, k * (k - 1) * (k - 2) / 6, "out")
    })
}

/// Estimates the pose from `num_keypoints` predicted scene keypoints. When
/// `weights` is not null it receives the candidate weights, in triple order,
/// and `weights_len` must equal the candidate count.
///
/// # Safety
/// `scene_keypoints` must hold `3·num_keypoints` doubles, `weights` must be
/// null or hold `weights_len` doubles, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rede_estimator_estimate(
    estimator: *const RedeEstimator,
    scene_keypoints: *const f64,
    num_keypoints: usize,
    out: *mut RedePose,
    weights: *mut f64,
    weights_len: usize,
) -> RedeStatus {
    guard(|| {
        let e = estimator.as_ref().ok_or_else(|| null("estimator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let kps = points(scene_keypoints, num_keypoints, "scene_keypoints")?;
        let (pose, bank) = e.inner.estimate::<f64>(&kps)?;
        if !weights.is_null() {
            if weights_len != bank.candidates.len() {
                return Err(Failure(
                    RedeStatus::InvalidInput,
                    format!("weights holds {weights_len}, need {}", bank.candidates.len()),
                ));
            }
            let w = std::slice::from_raw_parts_mut(weights, weights_len);
            for (dst, c) in w.iter_mut().zip(&bank.candidates) {
                *dst = c.weight;
            }
        }
        out.write(RedePose::from(&pose));
        Ok(())
    })
}

/// Releases an estimator. Null is ignored.
///
/// # Safety
/// `estimator` must be null or come from [`rede_estimator_new`], and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rede_estimator_free(estimator: *mut RedeEstimator) {
    if !estimator.is_null() {
        drop(Box::from_raw(estimator));
    }
}

/// Least-squares rigid fit mapping `model` onto `scene`, `n ≥ 3` pairs.
///
/// # Safety
/// Both arrays must hold `3·n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rede_kabsch_solve(
    model: *const f64,
    scene: *const f64,
    n: usize,
    out: *mut RedePose,
) -> RedeStatus {
    guard(|| {
        let m = points(model, n, "model")?;
        let s = points(scene, n, "scene")?;
        let sol = kabsch_solve::<f64>(&m, &s)?;
        write(out, RedePose::from(&sol.pose), "out")
    })
}

/// ADD (`symmetric == 0`) or ADD-S (`symmetric != 0`) over `n` model points.
///
/// # Safety
/// Poses must be readable, `model` must hold `3·n` doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rede_add(
    pred: *const RedePose,
    truth: *const RedePose,
    model: *const f64,
    n: usize,
    symmetric: i32,
    out: *mut f64,
) -> RedeStatus {
    guard(|| {
        let p = read_pose(pred, "pred")?;
        let t = read_pose(truth, "truth")?;
        let m = PointCloud::new(points(model, n, "model")?);
        let d = if symmetric != 0 {
            add_s_metric(&p, &t, &m)?
        } else {
            add_metric(&p, &t, &m)?
        };
        write(out, d, "out")
    })
}

/// Area under the accuracy-vs-threshold curve on `[0, max_threshold]`.
///
/// # Safety
/// `distances` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rede_auc(distances: *const f64, n: usize, max_threshold: f64, out: *mut f64) -> RedeStatus {
    guard(|| {
        if distances.is_null() && n > 0 {
            return Err(null("distances"));
        }
        let d: &[f64] = if n == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(distances, n)
        };
        write(out, auc(d, max_threshold)?, "out")
    })
}

/// Point-to-point ICP from `init`. Writes the refined pose and, when
/// `iterations` is not null, the number of accepted steps.
///
/// # Safety
/// Arrays must hold `3·count` doubles; `init` readable, `out` writable,
/// `iterations` null or writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rede_icp_refine(
    init: *const RedePose,
    scene: *const f64,
    num_scene: usize,
    model: *const f64,
    num_model: usize,
    max_iters: usize,
    tol: f64,
    out: *mut RedePose,
    iterations: *mut usize,
) -> RedeStatus {
    guard(|| {
        let init = read_pose(init, "init")?;
        let s = PointCloud::new(points(scene, num_scene, "scene")?);
        let m = PointCloud::new(points(model, num_model, "model")?);
        let r = icp_refine_traced(&init, &s, &m, &IcpConfig { max_iters, tol })?;
        write(out, RedePose::from(&r.pose), "out")?;
        if !iterations.is_null() {
            iterations.write(r.iterations);
        }
        Ok(())
    })
}
