//! Logged interactions with lagged contexts and their CSV form.
//!
//! CSV layout: `x_0..x_{d-1}`, then `lag{L}_0..lag{L}_{d-1}` for each lag
//! label `L`, then `action`, `reward` and an optional `propensity` column.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, DolceError, Result};

/// One logged interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaggedSample {
    pub x: Vec<f64>,
    pub x_lags: Vec<Vec<f64>>,
    pub action: usize,
    pub reward: f64,
    /// Logging probability of `action` when known.
    pub propensity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaggedDataset {
    samples: Vec<LaggedSample>,
    d: usize,
    num_actions: usize,
    lag_labels: Vec<String>,
}

impl LaggedDataset {
    /// Validates and wraps `samples`.
    pub fn new(samples: Vec<LaggedSample>, num_actions: usize, lag_labels: Vec<String>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return invalid("dataset is empty");
        };
        if num_actions == 0 {
            return invalid("num_actions must be positive");
        }
        let d = first.x.len();
        let k = lag_labels.len();
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != d {
                return invalid(format!("sample {i}: context length {} != {d}", s.x.len()));
            }
            if s.x_lags.len() != k {
                return invalid(format!("sample {i}: {} lags, expected {k}", s.x_lags.len()));
            }
            if let Some(l) = s.x_lags.iter().position(|l| l.len() != d) {
                return invalid(format!("sample {i}: lag {l} has length {} != {d}", s.x_lags[l].len()));
            }
            if s.action >= num_actions {
                return invalid(format!("sample {i}: action {} >= {num_actions}", s.action));
            }
            if let Some(p) = s.propensity {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(DolceError::InvalidPropensity { index: i, value: p });
                }
            }
            if !s.reward.is_finite() || s.x.iter().chain(s.x_lags.iter().flatten()).any(|v| !v.is_finite()) {
                return invalid(format!("sample {i}: non-finite value"));
            }
        }
        Ok(Self { samples, d, num_actions, lag_labels })
    }

    pub fn samples(&self) -> &[LaggedSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_lags(&self) -> usize {
        self.lag_labels.len()
    }

    pub fn lag_labels(&self) -> &[String] {
        &self.lag_labels
    }

    pub fn actions(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.action).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.reward).collect()
    }

    /// Logged propensities, if every sample carries one.
    pub fn propensities(&self) -> Option<Vec<f64>> {
        self.samples.iter().map(|s| s.propensity).collect()
    }

    pub fn check_lag(&self, k: usize) -> Result<()> {
        if k >= self.num_lags() {
            return invalid(format!("lag index {k} not present (dataset has {} lags)", self.num_lags()));
        }
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, None)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parses CSV; `num_actions` defaults to the largest observed action + 1.
    pub fn read_csv<R: Read>(reader: R, num_actions: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| DolceError::Parse { row: 0, message: e.to_string() })?
            .clone();
        let layout = Layout::from_header(&header)?;
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| DolceError::Parse { row, message: e.to_string() })?;
            if rec.len() != header.len() {
                return Err(DolceError::Parse {
                    row,
                    message: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            let num = |col: usize| -> Result<f64> {
                let cell = &rec[col];
                cell.parse::<f64>().map_err(|_| DolceError::Parse {
                    row,
                    message: format!("column `{}`: non-numeric value `{cell}`", &header[col]),
                })
            };
            let x = layout.x_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
            let x_lags = layout
                .lag_cols
                .iter()
                .map(|cols| cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let a = num(layout.action)?;
            if a < 0.0 || a.fract() != 0.0 {
                return Err(DolceError::Parse { row, message: format!("column `action`: `{a}` is not an action index") });
            }
            let reward = num(layout.reward)?;
            let propensity = match layout.propensity {
                Some(c) if !rec[c].is_empty() => Some(num(c)?),
                _ => None,
            };
            samples.push(LaggedSample { x, x_lags, action: a as usize, reward, propensity });
        }
        let inferred = samples.iter().map(|s| s.action + 1).max().unwrap_or(0);
        let num_actions = num_actions.unwrap_or(inferred);
        Self::new(samples, num_actions, layout.labels)
    }

    /// Writes CSV using shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let with_prop = self.samples.iter().any(|s| s.propensity.is_some());
        let mut header: Vec<String> = (0..self.d).map(|j| format!("x_{j}")).collect();
        for l in &self.lag_labels {
            header.extend((0..self.d).map(|j| format!("lag{l}_{j}")));
        }
        header.push("action".into());
        header.push("reward".into());
        if with_prop {
            header.push("propensity".into());
        }
        let csv_err = |e: csv::Error| DolceError::Io(std::io::Error::other(e));
        w.write_record(&header).map_err(csv_err)?;
        for s in &self.samples {
            let mut rec: Vec<String> = s.x.iter().map(|v| v.to_string()).collect();
            for l in &s.x_lags {
                rec.extend(l.iter().map(|v| v.to_string()));
            }
            rec.push(s.action.to_string());
            rec.push(s.reward.to_string());
            if with_prop {
                rec.push(s.propensity.map(|p| p.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Layout {
    x_cols: Vec<usize>,
    labels: Vec<String>,
    lag_cols: Vec<Vec<usize>>,
    action: usize,
    reward: usize,
    propensity: Option<usize>,
}

impl Layout {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let err = |message: String| DolceError::Parse { row: 0, message };
        let find = |name: &str| header.iter().position(|h| h == name);
        let action = find("action").ok_or_else(|| err("missing column `action`".into()))?;
        let reward = find("reward").ok_or_else(|| err("missing column `reward`".into()))?;
        let propensity = find("propensity");

        let mut x: Vec<(usize, usize)> = Vec::new();
        let mut lags: Vec<(String, Vec<(usize, usize)>)> = Vec::new();
        for (c, h) in header.iter().enumerate() {
            if c == action || c == reward || Some(c) == propensity {
                continue;
            }
            let (stem, idx) = h
                .rsplit_once('_')
                .and_then(|(s, i)| i.parse::<usize>().ok().map(|i| (s, i)))
                .ok_or_else(|| err(format!("unrecognized column `{h}`")))?;
            if stem == "x" {
                x.push((idx, c));
            } else if let Some(label) = stem.strip_prefix("lag") {
                match lags.iter_mut().find(|(l, _)| l == label) {
                    Some((_, v)) => v.push((idx, c)),
                    None => lags.push((label.to_string(), vec![(idx, c)])),
                }
            } else {
                return Err(err(format!("unrecognized column `{h}`")));
            }
        }
        let ordered = |mut v: Vec<(usize, usize)>, what: &str| -> Result<Vec<usize>> {
            v.sort_unstable();
            if v.iter().enumerate().any(|(j, &(i, _))| i != j) {
                return Err(err(format!("{what} columns are not numbered 0..d-1")));
            }
            Ok(v.into_iter().map(|(_, c)| c).collect())
        };
        let x_cols = ordered(x, "x")?;
        if x_cols.is_empty() {
            return Err(err("missing context columns `x_0..`".into()));
        }
        let mut labels = Vec::new();
        let mut lag_cols = Vec::new();
        for (l, v) in lags {
            let cols = ordered(v, &format!("lag{l}"))?;
            if cols.len() != x_cols.len() {
                return Err(err(format!("lag{l} has {} columns, expected {}", cols.len(), x_cols.len())));
            }
            labels.push(l);
            lag_cols.push(cols);
        }
        Ok(Self { x_cols, labels, lag_cols, action, reward, propensity })
    }
}
