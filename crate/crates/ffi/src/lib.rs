//! C interface to a trained two-level QoS predictor and a trained control
//! agent.
//!
//! Every fallible function returns a [`PromptStatus`]. On failure the
//! message is available from [`prompt_last_error`] on the same thread until
//! the next call. Handles are opaque, created by a `*_load` function and
//! released with the matching `*_free`; passing a handle to two threads at
//! once is not supported.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use prompt_core::controller::{argmax, build_state, split_actions, ActionSmoother, BdqNetwork, StateNormalizer};
use prompt_core::harness::load_agent_dir;
use prompt_core::qospred::TwoLevelPredictor;
use prompt_core::simenv::{Action, ActionSpace, CounterVector, NodeConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Internal = 5,
}

/// Number of counters per HP block, in the simulator's counter order.
pub const PROMPT_COUNTERS: usize = 6;
/// Number of action branches per HP: llc, mbw, hpcf, becf, ucf.
pub const PROMPT_BRANCHES: usize = 5;

/// A loaded two-level QoS predictor.
pub struct PromptPredictor {
    inner: TwoLevelPredictor,
    space: ActionSpace,
}

/// A loaded agent with its state normalizer and per-HP action smoothers.
pub struct PromptAgent {
    net: BdqNetwork,
    norm: StateNormalizer,
    n_hp: usize,
    smoothers: Vec<ActionSmoother>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PromptStatus, String);

impl From<prompt_core::Error> for Failure {
    fn from(e: prompt_core::Error) -> Self {
        use prompt_core::Error as E;
        let status = match &e {
            E::File { .. } | E::Io(_) | E::MissingArtifact(_) => PromptStatus::Io,
            E::Json(_) | E::Csv(_) => PromptStatus::Parse,
            _ => PromptStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PromptStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records any failure or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PromptStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PromptStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PromptStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(PromptStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    non_null(p, "path")?;
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn finite_slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    non_null(p, what)?;
    let v = std::slice::from_raw_parts(p, n);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what} contains a non-finite value")));
    }
    Ok(v)
}

fn counter_blocks(v: &[f64]) -> Vec<CounterVector> {
    v.chunks_exact(PROMPT_COUNTERS)
        .map(|c| CounterVector::from_array(c.try_into().expect("exact chunk")))
        .collect()
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn prompt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn prompt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a predictor saved as JSON. Action indices are checked against the
/// default node's action space.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prompt_predictor_load(path: *const c_char, out: *mut *mut PromptPredictor) -> PromptStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Failure(PromptStatus::Io, format!("{}: {e}", path.display())))?;
        let inner = TwoLevelPredictor::from_json(&text)?;
        let handle = Box::new(PromptPredictor {
            inner,
            space: ActionSpace::for_node(&NodeConfig::default()),
        });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// Predicted dropped packets per second for one HP's counters
/// (`PROMPT_COUNTERS` values) under `action` (`PROMPT_BRANCHES` indices).
///
/// # Safety
/// `handle` must come from `prompt_predictor_load`; `counters` and `action`
/// must point to arrays of the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prompt_predictor_predict(
    handle: *const PromptPredictor,
    counters: *const f64,
    action: *const usize,
    out: *mut f64,
) -> PromptStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(action, "action")?;
        non_null(out, "out")?;
        let p = &*handle;
        let c = finite_slice(counters, PROMPT_COUNTERS, "counters")?;
        let idx: [usize; PROMPT_BRANCHES] = std::slice::from_raw_parts(action, PROMPT_BRANCHES)
            .try_into()
            .expect("fixed length");
        let action = Action::from_indices(idx);
        p.space.check(&action)?;
        *out = p.inner.predict_qos(&counter_blocks(c)[0], &action)?;
        Ok(())
    })
}

/// Releases a predictor. Null is ignored.
///
/// # Safety
/// `handle` must be null or come from `prompt_predictor_load`, and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn prompt_predictor_free(handle: *mut PromptPredictor) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Loads a trained agent directory (`selected.json`, the checkpoint it
/// names, `normalizer.json`). `smoothing_window` of 1 disables smoothing.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prompt_agent_load(
    dir: *const c_char,
    smoothing_window: usize,
    out: *mut *mut PromptAgent,
) -> PromptStatus {
    guard(|| {
        non_null(out, "out")?;
        let dir = path_arg(dir)?;
        let (net, norm) = load_agent_dir(&dir)?;
        let n_hp = net.net.input_dim() / norm.block_dim();
        if net.branch_sizes.len() != n_hp * PROMPT_BRANCHES {
            return Err(invalid(format!(
                "agent has {} branches, expected {} for {n_hp} HP workloads",
                net.branch_sizes.len(),
                n_hp * PROMPT_BRANCHES
            )));
        }
        let smoothers = (0..n_hp)
            .map(|_| ActionSmoother::new(smoothing_window))
            .collect::<prompt_core::Result<Vec<_>>>()?;
        *out = Box::into_raw(Box::new(PromptAgent {
            net,
            norm,
            n_hp,
            smoothers,
        }));
        Ok(())
    })
}

/// Number of HP workloads the agent controls.
///
/// # Safety
/// `handle` must come from `prompt_agent_load`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prompt_agent_hp_count(handle: *const PromptAgent, out: *mut usize) -> PromptStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(out, "out")?;
        *out = (*handle).n_hp;
        Ok(())
    })
}

/// Whether the agent's state includes predicted QoS.
///
/// # Safety
/// `handle` must come from `prompt_agent_load`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn prompt_agent_uses_prediction(handle: *const PromptAgent, out: *mut bool) -> PromptStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(out, "out")?;
        *out = (*handle).norm.with_prediction;
        Ok(())
    })
}

/// Greedy, smoothed action for the next interval. `counters` holds
/// `n_hp * PROMPT_COUNTERS` values, `predicted` holds `n_hp` values (may be
/// null when the agent does not use predictions) and `action_out` receives
/// `n_hp * PROMPT_BRANCHES` indices.
///
/// # Safety
/// `handle` must come from `prompt_agent_load`; the arrays must have the
/// stated lengths.
#[no_mangle]
pub unsafe extern "C" fn prompt_agent_act(
    handle: *mut PromptAgent,
    counters: *const f64,
    n_hp: usize,
    predicted: *const f64,
    action_out: *mut usize,
) -> PromptStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(action_out, "action_out")?;
        let agent = &mut *handle;
        if n_hp != agent.n_hp {
            return Err(invalid(format!("agent controls {} HP workloads, got {n_hp}", agent.n_hp)));
        }
        let c = finite_slice(counters, n_hp * PROMPT_COUNTERS, "counters")?;
        let pred: &[f64] = if agent.norm.with_prediction {
            finite_slice(predicted, n_hp, "predicted")?
        } else {
            &[]
        };
        let state = build_state(&counter_blocks(c), pred, &agent.norm)?;
        let (_, q) = agent.net.value_and_q(&state)?;
        let flat: Vec<usize> = q.iter().map(|b| argmax(b)).collect();
        let raw = split_actions(&flat, n_hp)?;
        let out = std::slice::from_raw_parts_mut(action_out, n_hp * PROMPT_BRANCHES);
        for (h, (a, s)) in raw.into_iter().zip(agent.smoothers.iter_mut()).enumerate() {
            let smoothed = s.push(a);
            out[h * PROMPT_BRANCHES..(h + 1) * PROMPT_BRANCHES].copy_from_slice(&smoothed.indices());
        }
        Ok(())
    })
}

/// Clears the smoothing history, e.g. at the start of a new episode.
///
/// # Safety
/// `handle` must come from `prompt_agent_load`.
#[no_mangle]
pub unsafe extern "C" fn prompt_agent_reset(handle: *mut PromptAgent) -> PromptStatus {
    guard(|| {
        non_null(handle, "handle")?;
        let agent = &mut *handle;
        let w = agent.smoothers.first().map_or(1, ActionSmoother::window);
        agent.smoothers = (0..agent.n_hp)
            .map(|_| ActionSmoother::new(w))
            .collect::<prompt_core::Result<Vec<_>>>()?;
        Ok(())
    })
}

/// Releases an agent. Null is ignored.
///
/// # Safety
/// `handle` must be null or come from `prompt_agent_load`, and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn prompt_agent_free(handle: *mut PromptAgent) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
