//! Frozen-output checks. Set `PROMPT_BLESS=1` to regenerate the files under
//! `fixtures/` and `traces/` after an intentional change.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use prompt_core::controller::{build_state, BdqNetwork, StateNormalizer};
use prompt_core::harness::{ExperimentConfig, Pipeline, Stage};
use prompt_core::mlcore::{fit_boosted, BoostParams, BoostedModel};
use prompt_core::qospred::{collect_from_mixes, train_predictor, CollectConfig, PredictorConfig, TwoLevelPredictor};
use prompt_core::rng::seeded;
use prompt_core::simenv::{CounterVector, DemandTrace, DiurnalParams, HPWorkloadSpec, NodeConfig};
use prompt_core::harness::workloads::profiling_mixes;
use serde::{Deserialize, Serialize};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn blessing() -> bool {
    std::env::var("PROMPT_BLESS").is_ok_and(|v| v == "1")
}

/// Compares `actual` with the stored file, or rewrites it when blessing.
fn check(rel: &str, actual: &str) {
    let path = root().join(rel);
    if blessing() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}; run with PROMPT_BLESS=1 to create it", path.display()));
    assert_eq!(actual, expected, "{} differs from the frozen copy", path.display());
}

fn read_fixture(rel: &str) -> String {
    fs::read_to_string(root().join(rel)).unwrap()
}

fn csv_text(write: impl FnOnce(&Path)) -> String {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("out.csv");
    write(&p);
    fs::read_to_string(p).unwrap()
}

#[derive(Serialize, Deserialize)]
struct ScalarCase {
    x: Vec<f64>,
    value: f64,
}

#[test]
fn diurnal_trace_first_hundred_seconds() {
    let params = DiurnalParams {
        duration_s: 101,
        ..DiurnalParams::default()
    };
    let trace = DemandTrace::diurnal(&params, &mut seeded(42));
    check("traces/diurnal_seed42_t0_100.csv", &csv_text(|p| trace.write_csv(p).unwrap()));
    if !blessing() {
        let back = DemandTrace::read_csv(&root().join("traces/diurnal_seed42_t0_100.csv")).unwrap();
        assert_eq!(back, trace);
    }
}

fn boost_data() -> (Array2<f64>, Vec<f64>) {
    let n = 60;
    let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64 / 4.0 + j as f64);
    let y = (0..n).map(|i| 2.0 * x[[i, 0]] - x[[i, 1]].powi(2) / 5.0 + (x[[i, 2]] > 3.0) as u8 as f64).collect();
    (x, y)
}

#[test]
fn boosted_model_fixture() {
    let (x, y) = boost_data();
    let model = fit_boosted(x.view(), &y, &BoostParams::regression(15, 3, 0.3)).unwrap();
    check("fixtures/boost_model.json", &model.to_json().unwrap());
    let frozen = BoostedModel::from_json(&read_fixture("fixtures/boost_model.json")).unwrap();
    let xq = vec![1.25, 2.5, 3.75];
    let value = frozen.predict(&xq).unwrap();
    check(
        "fixtures/boost_value.json",
        &serde_json::to_string_pretty(&ScalarCase { x: xq, value }).unwrap(),
    );
    let case: ScalarCase = serde_json::from_str(&read_fixture("fixtures/boost_value.json")).unwrap();
    assert_eq!(frozen.predict(&case.x).unwrap(), case.value);
}

fn small_dataset() -> prompt_core::qospred::ProfilingDataset {
    let cfg = CollectConfig {
        samples_per_mix: 12,
        ..CollectConfig::default()
    };
    collect_from_mixes(&NodeConfig::default(), &HPWorkloadSpec::default(), &profiling_mixes()[..3], &cfg, 3).unwrap()
}

#[test]
fn profiling_dataset_bytes() {
    let data = small_dataset();
    check("fixtures/dataset_seed3.csv", &csv_text(|p| data.write_csv(p).unwrap()));
}

#[derive(Serialize, Deserialize)]
struct PredictorCase {
    counters: [f64; 6],
    action: [usize; 5],
    dpps: f64,
}

#[test]
fn predictor_fixture() {
    let data = small_dataset();
    let cfg = PredictorConfig {
        min_side_rows: 5,
        ..PredictorConfig::default()
    };
    let p = train_predictor(&data, &cfg).unwrap();
    check("fixtures/predictor.json", &p.to_json().unwrap());
    let frozen = TwoLevelPredictor::from_json(&read_fixture("fixtures/predictor.json")).unwrap();
    let row = &data.rows[7];
    let dpps = frozen.predict_qos(&row.counters, &row.action).unwrap();
    let case = PredictorCase {
        counters: row.counters.to_array(),
        action: row.action.indices(),
        dpps,
    };
    check("fixtures/predictor_value.json", &serde_json::to_string_pretty(&case).unwrap());
    let case: PredictorCase = serde_json::from_str(&read_fixture("fixtures/predictor_value.json")).unwrap();
    let got = frozen
        .predict_qos(
            &CounterVector::from_array(case.counters),
            &prompt_core::simenv::Action::from_indices(case.action),
        )
        .unwrap();
    assert_eq!(got, case.dpps);
}

#[derive(Serialize, Deserialize)]
struct StateCase {
    counters: Vec<[f64; 6]>,
    predicted: Vec<f64>,
    norm: StateNormalizer,
    state: Vec<f64>,
}

#[test]
fn state_vector_fixture() {
    let data = small_dataset();
    let counters: Vec<CounterVector> = data.rows.iter().map(|r| r.counters).collect();
    let preds: Vec<f64> = (0..counters.len()).map(|i| 10.0 * i as f64).collect();
    let norm = StateNormalizer::fit(&counters, Some(&preds)).unwrap();
    let input = vec![counters[3], counters[20]];
    let predicted = vec![450.0, 0.0];
    let state = build_state(&input, &predicted, &norm).unwrap();
    let case = StateCase {
        counters: input.iter().map(CounterVector::to_array).collect(),
        predicted,
        norm,
        state,
    };
    check("fixtures/state_vector.json", &serde_json::to_string_pretty(&case).unwrap());
    let frozen: StateCase = serde_json::from_str(&read_fixture("fixtures/state_vector.json")).unwrap();
    let input: Vec<CounterVector> = frozen.counters.iter().map(|c| CounterVector::from_array(*c)).collect();
    assert_eq!(build_state(&input, &frozen.predicted, &frozen.norm).unwrap(), frozen.state);
}

#[derive(Serialize, Deserialize)]
struct QCase {
    state: Vec<f64>,
    q: Vec<Vec<f64>>,
}

#[test]
fn bdq_network_fixture() {
    let net = BdqNetwork::new(7, 16, &[8, 10, 7, 7, 5], &mut seeded(11)).unwrap();
    check("fixtures/bdq_network.json", &net.to_json().unwrap());
    let frozen = BdqNetwork::from_json(&read_fixture("fixtures/bdq_network.json")).unwrap();
    let state = vec![0.3, -1.2, 0.8, 0.0, 2.1, -0.4, 1.0];
    let (_, q) = frozen.value_and_q(&state).unwrap();
    check("fixtures/bdq_q_values.json", &serde_json::to_string_pretty(&QCase { state, q }).unwrap());
    let case: QCase = serde_json::from_str(&read_fixture("fixtures/bdq_q_values.json")).unwrap();
    assert_eq!(frozen.value_and_q(&case.state).unwrap().1, case.q);
}

#[test]
fn emit_plots_golden_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::tiny();
    cfg.output_dir = dir.path().to_path_buf();
    let p = Pipeline::new(cfg).unwrap();
    p.run(Stage::EmitPlots).unwrap();
    let plots = p.stage_dir(Stage::EmitPlots);
    for controller in ["prompt", "twig-plus", "clite-plus"] {
        let text = fs::read_to_string(plots.join(format!("seed_0/mcf/{controller}.csv"))).unwrap();
        check(&format!("fixtures/plots_tiny_mcf_{controller}.csv"), &text);
    }
}
