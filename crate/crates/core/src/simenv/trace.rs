//! HP demand traces: synthetic diurnal cycles, constant load, or CSV files
//! with a `t_s,pps` header.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Parameters of `base + amplitude * sin(2*pi*(t - phase)/period) + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiurnalParams {
    pub base: f64,
    pub amplitude: f64,
    pub period_s: f64,
    pub phase_s: f64,
    pub noise_std: f64,
    /// Length of the materialized trace.
    pub duration_s: usize,
}

impl Default for DiurnalParams {
    fn default() -> Self {
        // A compressed "day": one full cycle every 6000 s (2000 control intervals),
        // starting at the trough.
        Self {
            base: 5.5e6,
            amplitude: 4.0e6,
            period_s: 6000.0,
            phase_s: 1500.0,
            noise_std: 0.05e6,
            duration_s: 6000,
        }
    }
}

impl DiurnalParams {
    /// Time of the first noiseless maximum at or after `phase_s`.
    pub fn peak_time(&self) -> f64 {
        self.phase_s + self.period_s / 4.0
    }

    pub fn trough_time(&self) -> f64 {
        self.phase_s + 3.0 * self.period_s / 4.0
    }
}

/// Demand in packets per second at time `t`. Without an rng the value is noiseless.
pub fn diurnal_demand(t: f64, params: &DiurnalParams, rng: Option<&mut Rng>) -> f64 {
    let mut value =
        params.base + params.amplitude * (2.0 * PI * (t - params.phase_s) / params.period_s).sin();
    if let Some(rng) = rng {
        if params.noise_std > 0.0 {
            let noise = Normal::new(0.0, params.noise_std).expect("noise_std > 0");
            value += noise.sample(rng);
        }
    }
    value.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandSource {
    Diurnal(DiurnalParams),
    Constant { pps: f64, duration_s: usize },
    File { path: PathBuf },
}

impl Default for DemandSource {
    fn default() -> Self {
        DemandSource::Diurnal(DiurnalParams::default())
    }
}

impl DemandSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            DemandSource::Diurnal(p) => {
                if !(p.period_s > 0.0) {
                    return Err(Error::Config("diurnal period_s must be > 0".into()));
                }
                if !(p.noise_std >= 0.0) || p.duration_s == 0 {
                    return Err(Error::Config(
                        "diurnal noise_std must be >= 0 and duration_s >= 1".into(),
                    ));
                }
                Ok(())
            }
            DemandSource::Constant { pps, duration_s } => {
                if !(*pps >= 0.0) || *duration_s == 0 {
                    return Err(Error::Config(
                        "constant demand needs pps >= 0 and duration_s >= 1".into(),
                    ));
                }
                Ok(())
            }
            DemandSource::File { .. } => Ok(()),
        }
    }

    pub fn materialize(&self, rng: &mut Rng) -> Result<DemandTrace> {
        match self {
            DemandSource::Diurnal(params) => Ok(DemandTrace::diurnal(params, rng)),
            DemandSource::Constant { pps, duration_s } => Ok(DemandTrace {
                period_s: 1.0,
                values: vec![*pps; *duration_s],
            }),
            DemandSource::File { path } => DemandTrace::read_csv(path),
        }
    }
}

/// A demand sequence sampled every `period_s` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandTrace {
    pub period_s: f64,
    pub values: Vec<f64>,
}

impl DemandTrace {
    pub fn diurnal(params: &DiurnalParams, rng: &mut Rng) -> Self {
        let values = (0..params.duration_s)
            .map(|t| diurnal_demand(t as f64, params, Some(&mut *rng)))
            .collect();
        Self {
            period_s: 1.0,
            values,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 * self.period_s
    }

    /// Demand at `t` seconds (sample-and-hold). `None` past the end.
    pub fn at(&self, t: f64) -> Option<f64> {
        let idx = (t / self.period_s).floor();
        if idx < 0.0 {
            return None;
        }
        self.values.get(idx as usize).copied()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period_s > 0.0) {
            return Err(Error::Config("trace period must be > 0".into()));
        }
        if self.values.is_empty() {
            return Err(Error::Empty("demand trace"));
        }
        if self.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("trace values must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t_s", "pps"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([format!("{}", i as f64 * self.period_s), format!("{v}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_s", "pps"] {
            return Err(Error::InvalidInput(format!(
                "{}: expected header t_s,pps",
                path.display()
            )));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
            };
            times.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        let period_s = if times.len() >= 2 {
            times[1] - times[0]
        } else {
            1.0
        };
        let trace = Self { period_s, values };
        trace.validate()?;
        Ok(trace)
    }
}
