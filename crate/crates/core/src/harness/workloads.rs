//! Synthetic BE workload profiles and the predictor's profiling mixes.
//!
//! Two profiles are reserved for agent training (a memory-bandwidth hog and
//! a balanced one); the other ten are only ever seen at evaluation. The
//! profiling mixes use the training pair plus profiles that exist only for
//! predictor data collection.

use crate::qospred::Mix;
use crate::simenv::BEWorkloadSpec;

fn be(name: &str, llc: f64, mbw: f64, freq: f64, aggr: f64, shift: [f64; 6]) -> BEWorkloadSpec {
    BEWorkloadSpec {
        name: name.into(),
        llc_sensitivity: llc,
        mbw_sensitivity: mbw,
        freq_sensitivity: freq,
        mbw_aggressiveness: aggr,
        counter_shift: shift,
    }
}

pub const TRAINING_BE: [&str; 2] = ["stream", "jbb"];

/// All twelve agent-facing profiles, training pair first.
pub fn be_catalog() -> Vec<BEWorkloadSpec> {
    vec![
        be("stream", 0.3, 1.0, 0.3, 0.95, [1.0, 1.0, 1.05, 1.0, 1.1, 1.15]),
        be("jbb", 0.6, 0.5, 0.7, 0.5, [1.0, 1.0, 1.0, 1.05, 1.0, 1.0]),
        be("mcf", 1.0, 0.6, 0.4, 0.6, [1.0, 1.0, 1.1, 1.05, 1.05, 1.05]),
        be("lbm", 0.2, 0.9, 0.3, 0.85, [1.0, 1.0, 1.0, 1.0, 1.1, 1.1]),
        be("povray", 0.1, 0.1, 1.0, 0.1, [1.0, 1.0, 0.95, 0.95, 0.95, 0.9]),
        be("canneal", 0.8, 0.7, 0.3, 0.55, [1.0, 1.0, 1.05, 1.0, 1.05, 1.05]),
        be("streamcluster", 0.5, 0.8, 0.5, 0.75, [1.0, 1.0, 1.0, 1.0, 1.05, 1.1]),
        be("xgboost", 0.6, 0.4, 0.8, 0.4, [1.0, 1.0, 1.0, 1.0, 1.0, 0.95]),
        be("resnet", 0.4, 0.6, 0.9, 0.65, [1.0, 1.0, 1.0, 1.05, 1.05, 1.0]),
        be("gcc", 0.7, 0.3, 0.6, 0.3, [1.0, 1.0, 1.05, 1.1, 1.0, 0.95]),
        be("namd", 0.2, 0.2, 0.9, 0.2, [1.0, 1.0, 0.95, 1.0, 0.95, 0.9]),
        be("omnetpp", 0.9, 0.5, 0.5, 0.45, [1.0, 1.0, 1.1, 1.0, 1.0, 1.0]),
    ]
}

pub fn holdout_be_names() -> Vec<String> {
    be_catalog()
        .into_iter()
        .map(|b| b.name)
        .filter(|n| !TRAINING_BE.contains(&n.as_str()))
        .collect()
}

pub fn find_be(name: &str) -> Option<BEWorkloadSpec> {
    be_catalog().into_iter().find(|b| b.name == name)
}

/// Profiles that appear only in predictor training data.
fn profiling_only() -> [BEWorkloadSpec; 4] {
    [
        be("prof-cache", 1.0, 0.4, 0.4, 0.5, [1.0, 1.0, 1.1, 1.1, 1.05, 1.0]),
        be("prof-freq", 0.2, 0.2, 1.0, 0.25, [1.0, 1.0, 0.95, 0.95, 1.0, 0.95]),
        be("prof-light", 0.1, 0.1, 0.2, 0.1, [1.0, 1.0, 1.0, 1.0, 0.95, 0.9]),
        be("prof-heavy", 0.6, 0.9, 0.6, 0.8, [1.0, 1.0, 1.05, 1.0, 1.1, 1.1]),
    ]
}

/// The nine default profiling mixes.
pub fn profiling_mixes() -> Vec<Mix> {
    let cat = be_catalog();
    let (stream, jbb) = (cat[0].clone(), cat[1].clone());
    let [cache, freq, light, heavy] = profiling_only();
    let mix = |name: &str, be: Vec<BEWorkloadSpec>| Mix {
        name: name.into(),
        be,
    };
    vec![
        mix("stream", vec![stream.clone()]),
        mix("jbb", vec![jbb.clone()]),
        mix("stream+jbb", vec![stream.clone(), jbb.clone()]),
        mix("prof-cache", vec![cache.clone()]),
        mix("prof-freq", vec![freq.clone()]),
        mix("prof-light", vec![light]),
        mix("prof-heavy", vec![heavy]),
        mix("stream+prof-cache", vec![stream, cache]),
        mix("jbb+prof-freq", vec![jbb, freq]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shape() {
        let cat = be_catalog();
        assert_eq!(cat.len(), 12);
        assert!(cat.iter().all(|b| b.validate().is_ok()));
        let hold = holdout_be_names();
        assert_eq!(hold.len(), 10);
        assert!(hold.iter().all(|h| !TRAINING_BE.contains(&h.as_str())));
        assert_eq!(profiling_mixes().len(), 9);
        // held-out profiles never appear in predictor data
        for m in profiling_mixes() {
            assert!(m.be.iter().all(|b| !hold.contains(&b.name)));
        }
    }
}
