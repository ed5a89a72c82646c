use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::flow::ZoneFlowSeries;
use super::panel::ODDemandPanel;
use super::spec::FeatureSpec;
use super::weather::WeatherSeries;
use super::FeatureError;
use crate::numerics::Tensor;

/// Per-timestamp `[N, L]` model input: four lags, weather terms, flow terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub timestamp: NaiveDateTime,
    pub x: Tensor,
}

/// Builds the raw (unscaled) feature matrix for grid hour `t` of `panel`.
///
/// Weather columns repeat the same value on every row; flow columns read the
/// flow of each row's origin zone. Positive offsets read recorded values.
pub fn assemble_features(
    spec: &FeatureSpec,
    panel: &ODDemandPanel,
    weather: Option<&WeatherSeries>,
    flows: Option<&ZoneFlowSeries>,
    t: usize,
) -> Result<FeatureMatrix, FeatureError> {
    let lags = panel.lags(t)?;
    let ts = panel.grid().time(t);
    if spec.weather_terms.is_empty() && spec.flow_terms.is_empty() {
        return Ok(FeatureMatrix { timestamp: ts, x: lags });
    }
    let n = panel.n_pairs();
    let width = spec.width();
    let mut x = Tensor::zeros(n, width);
    for r in 0..n {
        x.row_mut(r)[..4].copy_from_slice(lags.row(r));
    }
    let mut col = 4;
    for (signal, offset) in &spec.weather_terms {
        let at = ts + Duration::hours(*offset);
        let missing = || FeatureError::MissingOffset {
            signal: signal.name().to_string(),
            ts: at,
        };
        let w = weather.ok_or_else(missing)?;
        let idx = w.grid().index_of(at).ok_or_else(missing)?;
        let v = w.value(*signal, idx);
        for r in 0..n {
            x.set(r, col, v);
        }
        col += 1;
    }
    for offset in &spec.flow_terms {
        let at = ts + Duration::hours(*offset);
        let f = flows.ok_or_else(|| FeatureError::MissingOffset {
            signal: "I".into(),
            ts: at,
        })?;
        let idx = f.grid.index_of(at).ok_or_else(|| FeatureError::MissingOffset {
            signal: "I".into(),
            ts: at,
        })?;
        for (r, od) in panel.od_pairs().iter().enumerate() {
            let v = f.get(&od.origin, idx).ok_or_else(|| FeatureError::MissingOffset {
                signal: format!("I[{}]", od.origin),
                ts: at,
            })?;
            x.set(r, col, v);
        }
        col += 1;
    }
    Ok(FeatureMatrix { timestamp: ts, x })
}

/// Column-wise z-scoring with constants fitted on training data only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits over every row of every matrix. Constant columns get unit scale.
    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a Tensor>) -> Result<Self, FeatureError> {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut mats = Vec::new();
        for m in matrices {
            if sum.is_empty() {
                sum = vec![0.0; m.cols()];
                sq = vec![0.0; m.cols()];
            } else if m.cols() != sum.len() {
                return Err(FeatureError::Shape(format!(
                    "standardizer fitted on {} columns, got {}",
                    sum.len(),
                    m.cols()
                )));
            }
            for r in 0..m.rows() {
                for (c, v) in m.row(r).iter().enumerate() {
                    sum[c] += v;
                }
            }
            count += m.rows();
            mats.push(m);
        }
        if count == 0 {
            return Err(FeatureError::Shape("no training rows to fit scaling".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        for m in mats {
            for r in 0..m.rows() {
                for (c, v) in m.row(r).iter().enumerate() {
                    sq[c] += (v - mean[c]).powi(2);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor, FeatureError> {
        if x.cols() != self.mean.len() {
            return Err(FeatureError::Shape(format!(
                "standardizer expects {} columns, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        Ok(out)
    }
}
