//! The C interface checked against direct calls into the core crate.

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;
use std::sync::OnceLock;

use prompt_core::baselines::AgentKind;
use prompt_core::controller::{argmax, build_state, smooth_action, split_actions};
use prompt_core::harness::{load_agent_dir, ExperimentConfig, Pipeline, Stage};
use prompt_core::qospred::ProfilingDataset;
use prompt_core::simenv::Action;
use prompt_ffi::*;

/// One tiny pipeline run shared by every test.
fn artifacts() -> &'static (tempfile::TempDir, Pipeline) {
    static RUN: OnceLock<(tempfile::TempDir, Pipeline)> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::tiny();
        cfg.output_dir = dir.path().to_path_buf();
        let p = Pipeline::new(cfg).unwrap();
        p.run(Stage::TrainAgent).unwrap();
        (dir, p)
    })
}

fn predictor_path() -> PathBuf {
    artifacts().1.stage_dir(Stage::TrainPredictor).join("predictor.json")
}

fn agent_dir(kind: AgentKind) -> PathBuf {
    artifacts().1.stage_dir(Stage::TrainAgent).join(kind.name()).join("seed_0")
}

fn dataset() -> ProfilingDataset {
    ProfilingDataset::read_csv(&artifacts().1.stage_dir(Stage::Collect).join("dataset.csv")).unwrap()
}

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = prompt_last_error();
    assert!(!p.is_null(), "no error message recorded");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load_predictor() -> *mut PromptPredictor {
    let mut h = ptr::null_mut();
    let status = unsafe { prompt_predictor_load(c_path(&predictor_path()).as_ptr(), &mut h) };
    assert_eq!(status, PromptStatus::Ok);
    h
}

fn load_agent(kind: AgentKind, window: usize) -> *mut PromptAgent {
    let mut h = ptr::null_mut();
    let status = unsafe { prompt_agent_load(c_path(&agent_dir(kind)).as_ptr(), window, &mut h) };
    assert_eq!(status, PromptStatus::Ok, "{}", last_error());
    h
}

#[test]
fn predictions_match_the_core_predictor() {
    let h = load_predictor();
    let core = artifacts().1.load_predictor().unwrap();
    for row in dataset().rows.iter().step_by(17) {
        let counters = row.counters.to_array();
        let action = row.action.indices();
        let mut got = f64::NAN;
        let status = unsafe { prompt_predictor_predict(h, counters.as_ptr(), action.as_ptr(), &mut got) };
        assert_eq!(status, PromptStatus::Ok);
        assert_eq!(got, core.predict_qos(&row.counters, &row.action).unwrap());
    }
    assert!(prompt_last_error().is_null());
    unsafe { prompt_predictor_free(h) };
}

#[test]
fn agent_actions_are_greedy_and_smoothed() {
    let (net, norm) = load_agent_dir(&agent_dir(AgentKind::Prompt)).unwrap();
    let h = load_agent(AgentKind::Prompt, 3);
    let mut n_hp = 0;
    let mut uses = false;
    unsafe {
        assert_eq!(prompt_agent_hp_count(h, &mut n_hp), PromptStatus::Ok);
        assert_eq!(prompt_agent_uses_prediction(h, &mut uses), PromptStatus::Ok);
    }
    assert_eq!((n_hp, uses), (1, true));
    let rows = dataset().rows;
    let mut raw: Vec<Action> = Vec::new();
    for (k, row) in rows.iter().step_by(11).take(8).enumerate() {
        let counters = row.counters.to_array();
        let pred = [row.label_dpps];
        let state = build_state(&[row.counters], &pred, &norm).unwrap();
        let (_, q) = net.value_and_q(&state).unwrap();
        let flat: Vec<usize> = q.iter().map(|b| argmax(b)).collect();
        raw.push(split_actions(&flat, 1).unwrap().remove(0));
        let expected = smooth_action(&raw[raw.len().saturating_sub(3)..]).unwrap();
        let mut out = [usize::MAX; PROMPT_BRANCHES];
        let status = unsafe { prompt_agent_act(h, counters.as_ptr(), 1, pred.as_ptr(), out.as_mut_ptr()) };
        assert_eq!(status, PromptStatus::Ok);
        assert_eq!(out, expected.indices(), "interval {k}");
    }
    // after a reset the history is gone, so the output is the raw greedy action
    let row = &rows[0];
    let state = build_state(&[row.counters], &[row.label_dpps], &norm).unwrap();
    let (_, q) = net.value_and_q(&state).unwrap();
    let greedy: Vec<usize> = q.iter().map(|b| argmax(b)).collect();
    let mut out = [0usize; PROMPT_BRANCHES];
    unsafe {
        assert_eq!(prompt_agent_reset(h), PromptStatus::Ok);
        let c = row.counters.to_array();
        assert_eq!(prompt_agent_act(h, c.as_ptr(), 1, &row.label_dpps, out.as_mut_ptr()), PromptStatus::Ok);
        prompt_agent_free(h);
    }
    assert_eq!(out.to_vec(), greedy);
}

#[test]
fn twig_agent_accepts_a_null_prediction() {
    let h = load_agent(AgentKind::TwigPlus, 1);
    let mut uses = true;
    let counters = dataset().rows[5].counters.to_array();
    let mut out = [0usize; PROMPT_BRANCHES];
    unsafe {
        assert_eq!(prompt_agent_uses_prediction(h, &mut uses), PromptStatus::Ok);
        assert_eq!(prompt_agent_act(h, counters.as_ptr(), 1, ptr::null(), out.as_mut_ptr()), PromptStatus::Ok);
        prompt_agent_free(h);
    }
    assert!(!uses);
}

#[test]
fn failures_report_status_and_message() {
    let mut p: *mut PromptPredictor = ptr::null_mut();
    let missing = CString::new("/no/such/predictor.json").unwrap();
    unsafe {
        assert_eq!(prompt_predictor_load(missing.as_ptr(), &mut p), PromptStatus::Io);
        assert!(last_error().contains("/no/such/predictor.json"));
        assert!(p.is_null());
        assert_eq!(prompt_predictor_load(ptr::null(), &mut p), PromptStatus::NullPointer);
        assert_eq!(prompt_predictor_load(missing.as_ptr(), ptr::null_mut()), PromptStatus::NullPointer);
    }

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    unsafe {
        assert_eq!(prompt_predictor_load(c_path(&bad).as_ptr(), &mut p), PromptStatus::Parse);
    }

    let h = load_predictor();
    let mut counters = dataset().rows[0].counters.to_array();
    let mut out = 0.0;
    unsafe {
        let too_many_ways = [99usize, 0, 0, 0, 0];
        let status = prompt_predictor_predict(h, counters.as_ptr(), too_many_ways.as_ptr(), &mut out);
        assert_eq!(status, PromptStatus::InvalidArgument);
        counters[2] = f64::NAN;
        let status = prompt_predictor_predict(h, counters.as_ptr(), [0usize; 5].as_ptr(), &mut out);
        assert_eq!(status, PromptStatus::InvalidArgument);
        assert!(last_error().contains("non-finite"));
        assert_eq!(
            prompt_predictor_predict(ptr::null(), counters.as_ptr(), [0usize; 5].as_ptr(), &mut out),
            PromptStatus::NullPointer
        );
        prompt_predictor_free(h);
        prompt_predictor_free(ptr::null_mut());
    }

    let a = load_agent(AgentKind::Prompt, 1);
    let counters = [1.0; 2 * PROMPT_COUNTERS];
    let mut actions = [0usize; 2 * PROMPT_BRANCHES];
    unsafe {
        let status = prompt_agent_act(a, counters.as_ptr(), 2, [1.0, 1.0].as_ptr(), actions.as_mut_ptr());
        assert_eq!(status, PromptStatus::InvalidArgument);
        let status = prompt_agent_act(a, counters.as_ptr(), 1, ptr::null(), actions.as_mut_ptr());
        assert_eq!(status, PromptStatus::NullPointer);
        prompt_agent_free(a);
        prompt_agent_free(ptr::null_mut());
    }

    let mut agent: *mut PromptAgent = ptr::null_mut();
    unsafe {
        let status = prompt_agent_load(c_path(dir.path()).as_ptr(), 1, &mut agent);
        assert_eq!(status, PromptStatus::Io);
        assert_eq!(
            prompt_agent_load(c_path(&agent_dir(AgentKind::Prompt)).as_ptr(), 0, &mut agent),
            PromptStatus::InvalidArgument
        );
    }
    assert!(agent.is_null());
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(prompt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "prompt.h"

int main(int argc, char **argv) {
    PromptPredictor *p = NULL;
    if (prompt_predictor_load("/no/such/file.json", &p) != PROMPT_STATUS_IO) return 10;
    if (prompt_last_error() == NULL) return 11;
    if (prompt_predictor_load(argv[1], &p) != PROMPT_STATUS_OK) return 12;
    double counters[PROMPT_COUNTERS];
    size_t action[PROMPT_BRANCHES] = {4, 5, 3, 3, 2};
    for (int i = 0; i < PROMPT_COUNTERS; i++) counters[i] = 1e6 * (i + 1);
    double dpps = -1.0;
    if (prompt_predictor_predict(p, counters, action, &dpps) != PROMPT_STATUS_OK) return 13;
    prompt_predictor_free(p);
    PromptAgent *a = NULL;
    if (prompt_agent_load(argv[2], 5, &a) != PROMPT_STATUS_OK) return 14;
    double pred[1] = {dpps};
    size_t out[PROMPT_BRANCHES];
    if (prompt_agent_act(a, counters, 1, pred, out) != PROMPT_STATUS_OK) return 15;
    prompt_agent_free(a);
    printf("%s %.6f %zu\n", prompt_version(), dpps, out[0]);
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    // the test binary sits in target/<profile>/deps; `cargo test` leaves the
    // static library there, `cargo build` also copies it one level up
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let staticlib = [deps.join("libprompt_ffi.a"), deps.parent().unwrap().join("libprompt_ffi.a")]
        .into_iter()
        .find(|p| p.exists())
        .unwrap_or_else(|| panic!("libprompt_ffi.a not found near {}", deps.display()));
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let build = Command::new(&cc)
        .args(["-std=c11", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&staticlib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&bin)
        .arg(predictor_path())
        .arg(agent_dir(AgentKind::Prompt))
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with(env!("CARGO_PKG_VERSION")));
}

fn which_cc() -> Result<String, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .map(str::to_string)
        .ok_or(())
}
