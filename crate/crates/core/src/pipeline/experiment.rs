use super::{
    apply_scenario, build_samples, mape, mse, predict_samples, standardize_samples, train, Context, MetricsRow,
    PipelineError, PredictionRecord, ScenarioFilter, SplitSpec, TrainConfig,
};
use crate::features::{filter_top_ods, CalendarTable, ODDemandPanel, Standardizer, Variant, WeatherSeries, ZoneFlowSeries};
use crate::geo::ZonePartition;
use crate::graphs::AdjacencyStack;
use crate::model::{ForecastModel, ModelConfig, ModelDims};

/// Everything a variant needs to be trained and scored.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    /// Demand of the forecast OD set.
    pub panel: ODDemandPanel,
    pub weather: Option<WeatherSeries>,
    pub flows: Option<ZoneFlowSeries>,
    pub calendar: Option<CalendarTable>,
    pub stack: AdjacencyStack,
    pub split: SplitSpec,
}

impl ExperimentData {
    /// Selects the forecast OD set and builds its graphs, both from the
    /// training window only.
    pub fn build(
        partition: &ZonePartition,
        demand: &ODDemandPanel,
        weather: Option<WeatherSeries>,
        flows: Option<ZoneFlowSeries>,
        calendar: Option<CalendarTable>,
        p_bike: f64,
        split: SplitSpec,
    ) -> Result<Self, PipelineError> {
        let train = split.train_range(demand.grid())?;
        let pairs = filter_top_ods(demand, p_bike, 7..=21, train.clone())?;
        let panel = demand.select(&pairs)?;
        let stack = AdjacencyStack::build(panel.od_pairs(), partition, &panel, train)?;
        Ok(Self {
            panel,
            weather,
            flows,
            calendar,
            stack,
            split,
        })
    }

    pub fn context(&self) -> Context<'_> {
        Context {
            panel: &self.panel,
            weather: self.weather.as_ref(),
            flows: self.flows.as_ref(),
            calendar: self.calendar.as_ref(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedVariant {
    pub model: ForecastModel,
    pub losses: Vec<f64>,
    pub train_samples: usize,
}

/// Builds the variant's training samples, fits scaling on them, initializes
/// a model from `train_config.seed` and trains it.
pub fn fit_variant(
    data: &ExperimentData,
    variant: Variant,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<TrainedVariant, PipelineError> {
    if data.stack.n() != data.panel.n_pairs() {
        return Err(PipelineError::Empty(format!(
            "graph stack has {} OD pairs but the panel has {}",
            data.stack.n(),
            data.panel.n_pairs()
        )));
    }
    let spec = variant.spec();
    let range = data.split.train_range(data.panel.grid())?;
    let mut samples = build_samples(&spec, data.context(), range, true)?;
    if samples.is_empty() {
        return Err(PipelineError::Empty(format!(
            "variant {variant}: no training hour has a full week of history and all context terms"
        )));
    }
    let scaler = Standardizer::fit(samples.iter().map(|s| &s.features))?;
    standardize_samples(&mut samples, &scaler)?;
    let dims = ModelDims {
        n_od: data.panel.n_pairs(),
        features: spec.width(),
        embedding: spec.embedding,
    };
    let mut config = model_config.clone();
    config.dropout = train_config.dropout;
    let mut model = ForecastModel::init(&config, dims, train_config.seed)?;
    model.variant = Some(variant);
    model.scaler = Some(scaler);
    let losses = train(&mut model, &samples, data.stack.normalized(), train_config, on_epoch)?;
    Ok(TrainedVariant {
        model,
        losses,
        train_samples: samples.len(),
    })
}

/// Inference on the test window, scored on every scenario. Also returns the
/// per-entry predictions in (timestamp, OD) order.
pub fn evaluate_variant(
    data: &ExperimentData,
    variant: Variant,
    model: &ForecastModel,
    scenarios: &[ScenarioFilter],
) -> Result<(Vec<MetricsRow>, Vec<PredictionRecord>), PipelineError> {
    if model.variant != Some(variant) {
        return Err(PipelineError::VariantMismatch {
            expected: model.variant.map(|v| v.to_string()).unwrap_or_else(|| "an unknown variant".into()),
            got: variant.to_string(),
        });
    }
    let spec = variant.spec();
    if model.dims.features != spec.width() || model.dims.embedding != spec.embedding || model.dims.n_od != data.panel.n_pairs()
    {
        return Err(PipelineError::VariantMismatch {
            expected: format!("N={} L={} embedding={}", model.dims.n_od, model.dims.features, model.dims.embedding),
            got: format!("N={} L={} embedding={}", data.panel.n_pairs(), spec.width(), spec.embedding),
        });
    }
    let indices = data.split.test_indices(data.panel.grid())?;
    let mut samples = build_samples(&spec, data.context(), indices, false)?;
    if samples.is_empty() {
        return Err(PipelineError::Empty("test window has no hours".into()));
    }
    if let Some(scaler) = &model.scaler {
        standardize_samples(&mut samples, scaler)?;
    }
    let predictions = predict_samples(model, &samples, data.stack.normalized())?;

    let mut rows = Vec::with_capacity(scenarios.len());
    for filter in scenarios {
        let (kept, stats) = apply_scenario(&samples, data.weather.as_ref(), filter)?;
        let pred: Vec<f64> = kept.iter().flat_map(|&p| predictions[p].iter().copied()).collect();
        let actual: Vec<f64> = kept.iter().flat_map(|&p| samples[p].target.iter().copied()).collect();
        rows.push(MetricsRow {
            variant: variant.to_string(),
            scenario: filter.id.clone(),
            mse: mse(&pred, &actual).ok(),
            mape: mape(&pred, &actual).ok(),
            hours: stats.hours,
            zero_fraction: stats.zero_fraction,
        });
    }
    let records = samples
        .iter()
        .zip(&predictions)
        .flat_map(|(s, p)| {
            s.target.iter().zip(p).enumerate().map(move |(od, (&a, &y))| PredictionRecord {
                ts: s.timestamp,
                od_index: od,
                actual: a,
                predicted: y,
            })
        })
        .collect();
    Ok((rows, records))
}
