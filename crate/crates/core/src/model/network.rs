use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{dense, glorot, gru_step, lstm_step, rmgc_forward, tile_concat_var, GateVars};
use super::{CellType, ModelConfig, ModelError};
use crate::features::{CalendarEncoding, Standardizer, Variant, CALENDAR_CLASSES, LAG_OFFSETS};
use crate::graphs::N_GRAPHS;
use crate::numerics::{dropout_mask, Activation, Gradients, Mode, Tape, Tensor, Var};

/// Problem size a model is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// OD pairs `N`.
    pub n_od: usize,
    /// Feature columns `L`.
    pub features: usize,
    /// Whether the calendar embedding is appended.
    pub embedding: bool,
}

/// `B` samples: stacked standardized `[B·N, L]` features and one calendar
/// encoding per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub calendar: Vec<CalendarEncoding>,
}

impl Batch {
    pub fn new(features: &[&Tensor], calendar: Vec<CalendarEncoding>) -> Result<Self, ModelError> {
        if features.is_empty() || features.len() != calendar.len() {
            return Err(ModelError::Shape(format!(
                "batch has {} feature matrices and {} calendar encodings",
                features.len(),
                calendar.len()
            )));
        }
        let cols = features[0].cols();
        let mut data = Vec::with_capacity(features.iter().map(|f| f.len()).sum());
        let mut rows = 0;
        for f in features {
            if f.cols() != cols {
                return Err(ModelError::Shape("feature matrices differ in width".into()));
            }
            data.extend_from_slice(f.data());
            rows += f.rows();
        }
        Ok(Self {
            features: Tensor::from_vec(rows, cols, data).map_err(ModelError::from)?,
            calendar,
        })
    }

    pub fn size(&self) -> usize {
        self.calendar.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub config: ModelConfig,
    pub dims: ModelDims,
    /// Input variant the model was trained for, when known.
    pub variant: Option<Variant>,
    /// Feature scaling fitted on the training window.
    pub scaler: Option<Standardizer>,
    names: Vec<String>,
    params: Vec<Tensor>,
}

fn gate_names(cell: CellType) -> &'static [&'static str] {
    match cell {
        CellType::Gru => &["z", "r", "n"],
        CellType::Lstm => &["i", "f", "o", "g"],
    }
}

impl ForecastModel {
    /// Glorot-uniform weights and zero biases, deterministic per seed.
    pub fn init(config: &ModelConfig, dims: ModelDims, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if dims.n_od == 0 || dims.features < LAG_OFFSETS.len() {
            return Err(ModelError::Config(format!(
                "need at least one OD pair and {} feature columns, got N={} L={}",
                LAG_OFFSETS.len(),
                dims.n_od,
                dims.features
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut params = Vec::new();
        let mut add = |name: String, t: Tensor| {
            names.push(name);
            params.push(t);
        };
        let emb = &config.embedding;
        let p = if dims.embedding { emb.output_dim } else { 0 };
        if dims.embedding {
            for (i, &classes) in CALENDAR_CLASSES.iter().enumerate() {
                add(format!("emb{i}.table"), glorot(classes, emb.embed_width, &mut rng));
                add(format!("emb{i}.w"), glorot(emb.embed_width, emb.branch_width, &mut rng));
                add(format!("emb{i}.b"), Tensor::zeros(1, emb.branch_width));
            }
            let widths = [
                CALENDAR_CLASSES.len() * emb.branch_width,
                emb.module_widths[0],
                emb.module_widths[1],
                emb.output_dim,
            ];
            for k in 0..3 {
                add(format!("module{k}.w"), glorot(widths[k], widths[k + 1], &mut rng));
                add(format!("module{k}.b"), Tensor::zeros(1, widths[k + 1]));
            }
        }
        let ht = config.hidden_temporal;
        for g in gate_names(config.cell) {
            add(format!("temporal.{g}.w"), glorot(dims.n_od, ht, &mut rng));
            add(format!("temporal.{g}.u"), glorot(ht, ht, &mut rng));
            add(format!("temporal.{g}.b"), Tensor::zeros(1, ht));
        }
        let hs = config.hidden_spatial;
        let mut blocks = |prefix: &str, count: usize, first_in: usize, add: &mut dyn FnMut(String, Tensor)| {
            for k in 0..count {
                let f_in = if k == 0 { first_in } else { hs };
                add(format!("{prefix}{k}.w"), glorot(N_GRAPHS * f_in, hs, &mut rng));
                add(format!("{prefix}{k}.b"), Tensor::zeros(1, hs));
                if f_in != hs {
                    add(format!("{prefix}{k}.proj"), glorot(f_in, hs, &mut rng));
                }
            }
        };
        blocks("enc", config.encoder_blocks, dims.features + p, &mut add);
        blocks("dec", config.decoder_blocks, hs + ht, &mut add);
        add("head.w".into(), glorot(hs, 1, &mut rng));
        add("head.b".into(), Tensor::zeros(1, 1));
        Ok(Self {
            config: config.clone(),
            dims,
            variant: None,
            scaler: None,
            names,
            params,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        if self.dims.embedding {
            self.config.embedding.output_dim
        } else {
            0
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<(), ModelError> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ModelError::Config(format!("no parameter named {name:?}")))?;
        if self.params[i].shape() != value.shape() {
            return Err(ModelError::Shape(format!(
                "{name}: expected {:?}, got {:?}",
                self.params[i].shape(),
                value.shape()
            )));
        }
        self.params[i] = value;
        Ok(())
    }

    /// Names and shapes must match a freshly initialised model of the same config.
    pub fn check_layout(&self) -> Result<(), ModelError> {
        let fresh = Self::init(&self.config, self.dims, 0)?;
        if fresh.names != self.names {
            return Err(ModelError::Checkpoint("parameter names do not match the config".into()));
        }
        for (name, (a, b)) in self.names.iter().zip(fresh.params.iter().zip(&self.params)) {
            if a.shape() != b.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "{name}: shape {:?}, config implies {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(())
    }

    fn var(&self, vars: &[Var], name: &str) -> Var {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("layout lacks {name}"));
        vars[i]
    }

    fn has(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    /// Registers every parameter on the tape, trainable or constant.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect()
    }

    fn mask<R: Rng + ?Sized>(&self, rows: usize, cols: usize, mode: Mode, rng: &mut R) -> Result<Option<Tensor>, ModelError> {
        if mode == Mode::Infer || self.config.dropout == 0.0 {
            return Ok(None);
        }
        Ok(Some(dropout_mask(rows, cols, self.config.dropout, mode, rng)?))
    }

    /// Calendar embedding `E_T`, `[B, p]`.
    pub fn embed_vars<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        calendar: &[CalendarEncoding],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let act = self.config.activation;
        let b = calendar.len();
        let mut branches = Vec::with_capacity(CALENDAR_CLASSES.len());
        for (i, &classes) in CALENDAR_CLASSES.iter().enumerate() {
            let mut onehot = Tensor::zeros(b, classes);
            for (r, enc) in calendar.iter().enumerate() {
                onehot.set(r, enc.classes[i], 1.0);
            }
            let oh = tape.constant(onehot);
            let e = tape.matmul(oh, self.var(vars, &format!("emb{i}.table")))?;
            let d = dense(
                tape,
                e,
                self.var(vars, &format!("emb{i}.w")),
                self.var(vars, &format!("emb{i}.b")),
                act,
            )?;
            branches.push(d);
        }
        let mut h = tape.concat(&branches)?;
        for k in 0..3 {
            let layer_act = if k == 2 { Activation::Identity } else { act };
            h = dense(
                tape,
                h,
                self.var(vars, &format!("module{k}.w")),
                self.var(vars, &format!("module{k}.b")),
                layer_act,
            )?;
            let (rows, cols) = tape.shape(h);
            if let Some(m) = self.mask(rows, cols, mode, rng)? {
                h = tape.mask_mul(h, m)?;
            }
        }
        Ok(h)
    }

    /// Final recurrent state over the four lag snapshots, `[B, h_t]`.
    pub fn temporal_vars(&self, tape: &mut Tape, vars: &[Var], features: &Tensor, b: usize) -> Result<Var, ModelError> {
        let n = self.dims.n_od;
        let ht = self.config.hidden_temporal;
        let gates: Vec<GateVars> = gate_names(self.config.cell)
            .iter()
            .map(|g| GateVars {
                w: self.var(vars, &format!("temporal.{g}.w")),
                u: self.var(vars, &format!("temporal.{g}.u")),
                b: self.var(vars, &format!("temporal.{g}.b")),
            })
            .collect();
        let mut h = tape.constant(Tensor::zeros(b, ht));
        let mut c = tape.constant(Tensor::zeros(b, ht));
        for k in 0..LAG_OFFSETS.len() {
            let mut snap = Tensor::zeros(b, n);
            for s in 0..b {
                for i in 0..n {
                    snap.set(s, i, features.get(s * n + i, k));
                }
            }
            let x = tape.constant(snap);
            match self.config.cell {
                CellType::Gru => {
                    let g: &[GateVars; 3] = gates.as_slice().try_into().expect("three gates");
                    h = gru_step(tape, x, h, g)?;
                }
                CellType::Lstm => {
                    let g: &[GateVars; 4] = gates.as_slice().try_into().expect("four gates");
                    (h, c) = lstm_step(tape, x, h, c, g)?;
                }
            }
        }
        Ok(h)
    }

    fn blocks<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        prefix: &str,
        count: usize,
        mut h: Var,
        stack: &[Arc<Tensor>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        for k in 0..count {
            let proj_name = format!("{prefix}{k}.proj");
            let proj = self.has(&proj_name).then(|| self.var(vars, &proj_name));
            let rows = tape.shape(h).0;
            let mask = self.mask(rows, self.config.hidden_spatial, mode, rng)?;
            h = rmgc_forward(
                tape,
                h,
                self.var(vars, &format!("{prefix}{k}.w")),
                self.var(vars, &format!("{prefix}{k}.b")),
                proj,
                stack,
                self.config.activation,
                mask,
            )?;
        }
        Ok(h)
    }

    /// Full forward on the tape; returns raw (unclamped) predictions `[B·N, 1]`.
    pub fn forward_vars<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Batch,
        stack: &[Arc<Tensor>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let n = self.dims.n_od;
        let b = batch.size();
        if batch.features.shape() != (b * n, self.dims.features) {
            return Err(ModelError::Shape(format!(
                "model expects {b} x [{n}, {}] features, got {:?}",
                self.dims.features,
                batch.features.shape()
            )));
        }
        if stack.len() != N_GRAPHS || stack.iter().any(|a| a.shape() != (n, n)) {
            return Err(ModelError::Shape(format!(
                "model expects {N_GRAPHS} graphs of size {n}x{n}"
            )));
        }
        let x = tape.constant(batch.features.clone());
        let mut h = x;
        if self.dims.embedding {
            let e = self.embed_vars(tape, vars, &batch.calendar, mode, rng)?;
            h = tile_concat_var(tape, x, e, n)?;
        }
        let spatial = self.blocks(tape, vars, "enc", self.config.encoder_blocks, h, stack, mode, rng)?;
        let temporal = self.temporal_vars(tape, vars, &batch.features, b)?;
        let joined = tile_concat_var(tape, spatial, temporal, n)?;
        let decoded = self.blocks(tape, vars, "dec", self.config.decoder_blocks, joined, stack, mode, rng)?;
        let out = tape.matmul(decoded, self.var(vars, "head.w"))?;
        Ok(tape.add_row(out, self.var(vars, "head.b"))?)
    }

    /// MSE loss of a batch and the gradient of every parameter.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        batch: &Batch,
        targets: &Tensor,
        stack: &[Arc<Tensor>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, true);
        let pred = self.forward_vars(&mut tape, &vars, batch, stack, mode, rng)?;
        if tape.shape(pred) != targets.shape() {
            return Err(ModelError::Shape(format!(
                "targets {:?} do not match predictions {:?}",
                targets.shape(),
                tape.shape(pred)
            )));
        }
        let t = tape.constant(targets.clone());
        let loss = tape.mse(pred, t)?;
        let value = tape.value(loss).get(0, 0);
        let mut grads: Gradients = tape.backward(loss)?;
        Ok((value, vars.iter().map(|&v| grads.take(v)).collect()))
    }

    /// Inference-mode predictions `[B·N]` before clamping.
    pub fn forward_raw(&self, batch: &Batch, stack: &[Arc<Tensor>]) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward_vars(&mut tape, &vars, batch, stack, Mode::Infer, &mut rng)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Forward for one timestamp. Inference mode clamps at zero.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        features: &Tensor,
        encoding: &CalendarEncoding,
        stack: &[Arc<Tensor>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Vec<f64>, ModelError> {
        let batch = Batch::new(&[features], vec![*encoding])?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let out = self.forward_vars(&mut tape, &vars, &batch, stack, mode, rng)?;
        let values = tape.value(out).data().to_vec();
        Ok(match mode {
            Mode::Infer => values.into_iter().map(|v| v.max(0.0)).collect(),
            Mode::Train => values,
        })
    }

    /// Clamped inference predictions for a batch, `[B·N]`.
    pub fn predict(&self, batch: &Batch, stack: &[Arc<Tensor>]) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward_raw(batch, stack)?.into_iter().map(|v| v.max(0.0)).collect())
    }

    /// Applies the stored feature scaling, if any.
    pub fn standardize(&self, raw: &Tensor) -> Result<Tensor, ModelError> {
        match &self.scaler {
            Some(s) => Ok(s.apply(raw)?),
            None => Ok(raw.clone()),
        }
    }
}

/// Inference-mode `E_T` for one calendar encoding.
pub fn embed_time(model: &ForecastModel, encoding: &CalendarEncoding) -> Result<Vec<f64>, ModelError> {
    if !model.dims.embedding {
        return Ok(Vec::new());
    }
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let e = model.embed_vars(&mut tape, &vars, &[*encoding], Mode::Infer, &mut rng)?;
    Ok(tape.value(e).data().to_vec())
}
