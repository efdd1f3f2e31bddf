//! C ABI over `vggft`: opaque model handles, integer status codes and a
//! thread-local last-error message.
//!
//! Every function returns a [`VggftStatus`]. On failure the message is
//! available from [`vggft_last_error`] until the next failing call on the
//! same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use vggft::metrics::{classification_metrics, confusion_matrix};
use vggft::model::{
    load_weights, save_weights, Architecture, GraphOptions, Mode, ModelGraph, Network, Task, WeightStore,
};
use vggft::{Error, Tensor};

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VggftStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Config = 4,
    State = 5,
    Input = 6,
    Weight = 7,
    WeightFile = 8,
    Decode = 9,
    Divergence = 10,
    Io = 11,
    Panic = 12,
}

impl From<&Error> for VggftStatus {
    fn from(e: &Error) -> Self {
        match e.kind() {
            "dimension" => VggftStatus::Dimension,
            "config" => VggftStatus::Config,
            "state" => VggftStatus::State,
            "input" => VggftStatus::Input,
            "weight" => VggftStatus::Weight,
            "weight-file" => VggftStatus::WeightFile,
            "decode" => VggftStatus::Decode,
            "divergence" => VggftStatus::Divergence,
            _ => VggftStatus::Io,
        }
    }
}

/// Opaque model: graph plus weights.
pub struct VggftModel {
    graph: ModelGraph,
    weights: WeightStore<f32>,
}

/// Aggregate scores: macro precision / recall / F-measure, accuracy as
/// trace over total.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VggftMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub accuracy: f64,
}

pub const VGGFT_ARCH_VGG16: u32 = 16;
pub const VGGFT_ARCH_VGG19: u32 = 19;
pub const VGGFT_TASK_BINARY: u32 = 1;
pub const VGGFT_TASK_MULTICLASS: u32 = 2;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).expect("interior nul removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(VggftStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(VggftStatus::from(&e), e.to_string())
    }
}

fn fail<T>(status: VggftStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VggftStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VggftStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VggftStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(model: *const VggftModel) -> Result<&'a VggftModel, Failure> {
    model
        .as_ref()
        .ok_or_else(|| Failure(VggftStatus::NullPointer, "model handle is null".into()))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return fail(VggftStatus::NullPointer, "path is null");
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(VggftStatus::InvalidArgument, "path is not valid UTF-8"),
    }
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(VggftStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    Ok(())
}

/// Last error message on this thread, or null if none. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn vggft_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn vggft_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a model with the fine-tuning head and freshly initialised weights.
/// `arch` is 16 or 19, `task` 1 (binary) or 2 (multiclass). `tiny` selects the
/// width-reduced 64x64 graph. Convolutional layers start frozen.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vggft_model_new(
    arch: u32,
    task: u32,
    tiny: bool,
    seed: u64,
    out: *mut *mut VggftModel,
) -> VggftStatus {
    guard(|| {
        if out.is_null() {
            return fail(VggftStatus::NullPointer, "output pointer is null");
        }
        let arch = match arch {
            VGGFT_ARCH_VGG16 => Architecture::Vgg16,
            VGGFT_ARCH_VGG19 => Architecture::Vgg19,
            other => {
                return fail(
                    VggftStatus::InvalidArgument,
                    format!("unknown architecture {other}"),
                )
            }
        };
        let task = match task {
            VGGFT_TASK_BINARY => Task::Binary,
            VGGFT_TASK_MULTICLASS => Task::Multiclass,
            other => return fail(VggftStatus::InvalidArgument, format!("unknown task {other}")),
        };
        let options = if tiny {
            GraphOptions::tiny()
        } else {
            GraphOptions::default()
        };
        let graph = ModelGraph::build(arch, task, options)?.freeze_features();
        let weights = WeightStore::init(&graph, seed);
        out.write(Box::into_raw(Box::new(VggftModel { graph, weights })));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`vggft_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vggft_model_free(model: *mut VggftModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Replaces the weights with a full-model `.vggw` file matching the graph.
///
/// # Safety
/// `model` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vggft_model_load(model: *mut VggftModel, path: *const c_char) -> VggftStatus {
    guard(|| {
        let path = path_arg(path)?;
        let m = model
            .as_mut()
            .ok_or_else(|| Failure(VggftStatus::NullPointer, "model handle is null".into()))?;
        m.weights = load_weights(&path, &m.graph)?;
        Ok(())
    })
}

/// Writes the weights as a full-model `.vggw` file.
///
/// # Safety
/// `model` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vggft_model_save(model: *const VggftModel, path: *const c_char) -> VggftStatus {
    guard(|| {
        let path = path_arg(path)?;
        let m = model_ref(model)?;
        save_weights(&m.weights, &m.graph, &path)?;
        Ok(())
    })
}

/// Input geometry `(channels, height, width)` and class count.
///
/// # Safety
/// `model` must be a live handle; `shape` must point to 3 writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn vggft_model_shape(
    model: *const VggftModel,
    shape: *mut usize,
    classes: *mut usize,
) -> VggftStatus {
    guard(|| {
        let m = model_ref(model)?;
        if shape.is_null() {
            return fail(VggftStatus::NullPointer, "shape pointer is null");
        }
        let [c, h, w] = m.graph.input_shape();
        std::slice::from_raw_parts_mut(shape, 3).copy_from_slice(&[c, h, w]);
        let k = m.graph.task().map_or(0, |t| t.classes());
        write_out(classes, k)
    })
}

/// Total and trainable parameter counts.
///
/// # Safety
/// `model` must be a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn vggft_model_param_count(
    model: *const VggftModel,
    total: *mut u64,
    trainable: *mut u64,
) -> VggftStatus {
    guard(|| {
        let count = model_ref(model)?.graph.param_count();
        write_out(total, count.total)?;
        write_out(trainable, count.trainable)
    })
}

/// Inference-mode class probabilities for `batch` images in NCHW order:
/// softmax rows for multiclass, independent per-unit sigmoids for binary.
/// `input_len` must equal `batch * C * H * W`, `output_len` `batch * classes`.
///
/// # Safety
/// `input` must be readable for `input_len` floats and `output` writable for
/// `output_len` floats.
#[no_mangle]
pub unsafe extern "C" fn vggft_model_predict(
    model: *const VggftModel,
    input: *const f32,
    input_len: usize,
    batch: usize,
    output: *mut f32,
    output_len: usize,
) -> VggftStatus {
    guard(|| {
        let m = model_ref(model)?;
        if input.is_null() || output.is_null() {
            return fail(VggftStatus::NullPointer, "buffer pointer is null");
        }
        if batch == 0 {
            return fail(VggftStatus::InvalidArgument, "batch must be positive");
        }
        let [c, h, w] = m.graph.input_shape();
        let want_in = batch * c * h * w;
        if input_len != want_in {
            return fail(
                VggftStatus::Dimension,
                format!("input has {input_len} floats, expected {want_in}"),
            );
        }
        let k = m.graph.task().map_or(0, |t| t.classes());
        if output_len != batch * k {
            return fail(
                VggftStatus::Dimension,
                format!("output has {output_len} floats, expected {}", batch * k),
            );
        }
        let data = std::slice::from_raw_parts(input, input_len).to_vec();
        let x = Tensor::new(vec![batch, c, h, w], data)?;
        let net = Network::new(&m.graph, &m.weights)?;
        let pass = net.forward(&x, Mode::Inference)?;
        std::slice::from_raw_parts_mut(output, output_len).copy_from_slice(pass.probs.data());
        Ok(())
    })
}

/// Scores `n` predictions against ground truth over `k` classes.
///
/// # Safety
/// `truth` and `predicted` must be readable for `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vggft_metrics(
    truth: *const u32,
    predicted: *const u32,
    n: usize,
    k: usize,
    out: *mut VggftMetrics,
) -> VggftStatus {
    guard(|| {
        if truth.is_null() || predicted.is_null() {
            return fail(VggftStatus::NullPointer, "label pointer is null");
        }
        let widen = |p: *const u32| -> Vec<usize> {
            std::slice::from_raw_parts(p, n)
                .iter()
                .map(|&v| v as usize)
                .collect()
        };
        let cm = confusion_matrix(&widen(truth), &widen(predicted), k)?;
        let r = classification_metrics(&cm)?;
        write_out(
            out,
            VggftMetrics {
                precision: r.precision,
                recall: r.recall,
                f_measure: r.f_measure,
                accuracy: r.accuracy,
            },
        )
    })
}
