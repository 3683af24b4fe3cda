//! Counter catalogs: named counter series over (mix, sample) points, each
//! tagged with a counter class, plus the worst-case label per point.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qospred::ProfilingDataset;
use crate::rng;
use crate::simenv::CounterVector;

/// Name under which labels travel in catalog CSV files.
pub const LABEL_COUNTER: &str = "label_dpps";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterClass {
    Fixed,
    General,
    Coherency,
    SpecializedIsa,
    NonstandardComponent,
}

impl CounterClass {
    /// Classes excluded outright by the selection pipeline.
    pub fn is_problematic(self) -> bool {
        matches!(
            self,
            CounterClass::Coherency | CounterClass::SpecializedIsa | CounterClass::NonstandardComponent
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub class: CounterClass,
    /// One value per catalog point, aligned with `CounterCatalog::points`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub mix: usize,
    pub t_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterCatalog {
    pub points: Vec<SamplePoint>,
    pub labels: Vec<f64>,
    pub entries: Vec<CatalogEntry>,
}

impl CounterCatalog {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Empty("catalog points"));
        }
        if self.labels.len() != self.points.len() {
            return Err(Error::Shape {
                expected: self.points.len(),
                actual: self.labels.len(),
            });
        }
        for e in &self.entries {
            if e.values.len() != self.points.len() {
                return Err(Error::Shape {
                    expected: self.points.len(),
                    actual: e.values.len(),
                });
            }
        }
        Ok(())
    }

    pub fn mixes(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.points.iter().map(|p| p.mix).collect();
        m.sort_unstable();
        m.dedup();
        m
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    /// Values of entry `i` restricted to one mix.
    pub fn mix_values(&self, i: usize, mix: usize) -> Vec<f64> {
        self.points
            .iter()
            .zip(&self.entries[i].values)
            .filter(|(p, _)| p.mix == mix)
            .map(|(_, v)| *v)
            .collect()
    }

    /// Reads a long-format CSV `counter,mix,t_s,value`. Rows whose counter is
    /// `label_dpps` supply the labels; counters missing from `classes` are
    /// tagged general.
    pub fn read_csv(path: &Path, classes: &HashMap<String, CounterClass>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut series: Vec<(String, HashMap<(usize, u64), f64>)> = Vec::new();
        let mut points: Vec<SamplePoint> = Vec::new();
        let mut seen = HashMap::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Shape {
                    expected: 4,
                    actual: rec.len(),
                });
            }
            let bad = |s: &str| Error::InvalidInput(format!("bad field {s:?} in {}", path.display()));
            let mix: usize = rec[1].trim().parse().map_err(|_| bad(&rec[1]))?;
            let t: f64 = rec[2].trim().parse().map_err(|_| bad(&rec[2]))?;
            let v: f64 = rec[3].trim().parse().map_err(|_| bad(&rec[3]))?;
            let key = (mix, t.to_bits());
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key) {
                e.insert(points.len());
                points.push(SamplePoint { mix, t_s: t });
            }
            let name = rec[0].trim();
            let pos = match series.iter().position(|(n, _)| n == name) {
                Some(p) => p,
                None => {
                    series.push((name.to_string(), HashMap::new()));
                    series.len() - 1
                }
            };
            series[pos].1.insert(key, v);
        }
        let column = |m: &HashMap<(usize, u64), f64>, name: &str| -> Result<Vec<f64>> {
            points
                .iter()
                .map(|p| {
                    m.get(&(p.mix, p.t_s.to_bits())).copied().ok_or_else(|| {
                        Error::InvalidInput(format!("{name} has no sample at mix {} t={}", p.mix, p.t_s))
                    })
                })
                .collect()
        };
        let mut labels = None;
        let mut entries = Vec::new();
        for (name, m) in &series {
            let values = column(m, name)?;
            if name == LABEL_COUNTER {
                labels = Some(values);
            } else {
                entries.push(CatalogEntry {
                    name: name.clone(),
                    class: classes.get(name).copied().unwrap_or(CounterClass::General),
                    values,
                });
            }
        }
        let cat = Self {
            labels: labels.ok_or_else(|| Error::InvalidInput(format!("no {LABEL_COUNTER} rows")))?,
            points,
            entries,
        };
        cat.validate()?;
        Ok(cat)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["counter", "mix", "t_s", "value"])?;
        let all = self
            .entries
            .iter()
            .map(|e| (e.name.as_str(), &e.values))
            .chain(std::iter::once((LABEL_COUNTER, &self.labels)));
        for (name, values) in all {
            for (p, v) in self.points.iter().zip(values.iter()) {
                w.write_record([name.to_string(), p.mix.to_string(), p.t_s.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::file(path, e))?;
        Ok(())
    }
}

/// Names of the decoys added by [`build_decoy_catalog`], with their classes.
pub const DECOYS: [(&str, CounterClass); 9] = [
    ("rare_event", CounterClass::General),
    ("const_ref", CounterClass::Fixed),
    ("low_var_tick", CounterClass::General),
    ("noise_white", CounterClass::General),
    ("noise_permuted", CounterClass::General),
    ("shifted_decoy", CounterClass::General),
    ("snoop_rfo", CounterClass::Coherency),
    ("avx512_ops", CounterClass::SpecializedIsa),
    ("lsd_uops", CounterClass::NonstandardComponent),
];

/// The six simulator counters plus nine decoys: a rare event, a constant, a
/// near-constant tick, white noise, a row-permuted copy of a real counter,
/// a counter shifted 1000x on odd mixes, and three copies of real signals
/// tagged with problematic classes.
pub fn build_decoy_catalog(data: &ProfilingDataset, seed: u64) -> Result<CounterCatalog> {
    if data.is_empty() {
        return Err(Error::Empty("profiling dataset"));
    }
    let n = data.len();
    let mut rng = rng::child(seed, 0x0064_6563_6f79);
    let mut per_mix_t: HashMap<usize, f64> = HashMap::new();
    let points: Vec<SamplePoint> = data
        .rows
        .iter()
        .map(|r| {
            let t = per_mix_t.entry(r.mix).or_insert(0.0);
            let p = SamplePoint { mix: r.mix, t_s: *t };
            *t += 100.0;
            p
        })
        .collect();
    let mut entries: Vec<CatalogEntry> = CounterVector::NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| CatalogEntry {
            name: name.to_string(),
            class: if i < 2 { CounterClass::Fixed } else { CounterClass::General },
            values: data.rows.iter().map(|r| r.counters.to_array()[i]).collect(),
        })
        .collect();
    let col = |i: usize| -> Vec<f64> { entries[i].values.clone() };
    let (instr, cycles, offcore) = (col(0), col(1), col(4));
    let rare = Poisson::new(10.0).expect("positive rate");
    let tick = Normal::new(0.0, 1e-3).expect("finite");
    let wide = LogNormal::new(0.0, 0.5).expect("finite");
    let small = LogNormal::new(0.0, 0.05).expect("finite");
    let mut permuted = offcore.clone();
    permuted.shuffle(&mut rng);
    let values: [Vec<f64>; 9] = [
        // ~10 events per 100-s window, i.e. 0.1 events/s
        (0..n).map(|_| rare.sample(&mut rng) / 100.0).collect(),
        vec![4.0 * 2.7e9; n],
        (0..n).map(|_| 1e3 * (1.0 + tick.sample(&mut rng))).collect(),
        (0..n).map(|_| 1e6 * wide.sample(&mut rng)).collect(),
        permuted,
        (0..n)
            .map(|i| {
                let k = if points[i].mix % 2 == 1 { 1000.0 } else { 1.0 };
                0.1 * cycles[i] * k * small.sample(&mut rng)
            })
            .collect(),
        (0..n).map(|i| 0.3 * offcore[i] * small.sample(&mut rng)).collect(),
        (0..n).map(|i| 0.05 * instr[i] * small.sample(&mut rng)).collect(),
        (0..n).map(|i| 0.2 * instr[i] * small.sample(&mut rng) + rng.random::<f64>()).collect(),
    ];
    for ((name, class), values) in DECOYS.iter().zip(values) {
        entries.push(CatalogEntry {
            name: name.to_string(),
            class: *class,
            values,
        });
    }
    let cat = CounterCatalog {
        points,
        labels: data.labels(),
        entries,
    };
    cat.validate()?;
    Ok(cat)
}
