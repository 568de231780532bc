//! Variational autoencoder for mixed tabular records.
//!
//! The encoder maps an encoded row to the mean and log-variance of a diagonal Gaussian
//! over the latent space; the decoder maps a latent vector back through one linear head
//! per continuous numeric column and one softmax head per one-hot block. Training
//! minimizes squared error on numerics, cross-entropy on categoricals and a β-weighted
//! KL divergence to the standard-normal prior, averaged over each minibatch.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{AgentPool, BlockKind, EncodedMatrix, EncodingLayout, Hardening};
use crate::error::{Error, Result};
use crate::metrics::{frequency_distribution, srmse};
use crate::neural::{ForwardCache, Head, Mlp, MlpGrads, RmspropState};
use crate::par::{self, Exec};
use crate::rng::{substream, Rng};

/// Floor applied to predicted probabilities inside the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentParams {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl LatentParams {
    pub fn std_dev(&self) -> Vec<f64> {
        self.log_variance.iter().map(|lv| (0.5 * lv).exp()).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub numeric: f64,
    pub categorical: f64,
    pub kl: f64,
}

impl LossTerms {
    fn add(&mut self, o: &LossTerms) {
        self.total += o.total;
        self.numeric += o.numeric;
        self.categorical += o.categorical;
        self.kl += o.kl;
    }

    fn scaled(self, f: f64) -> LossTerms {
        LossTerms {
            total: self.total * f,
            numeric: self.numeric * f,
            categorical: self.categorical * f,
            kl: self.kl * f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_dim: usize,
    pub beta: f64,
    pub layout: EncodingLayout,
}

/// Decoder heads mirroring the layout's column blocks.
pub fn decoder_heads(layout: &EncodingLayout) -> Vec<Head> {
    layout
        .blocks
        .iter()
        .map(|b| match b.kind {
            BlockKind::OneHot => Head::Softmax {
                start: b.start,
                width: b.width,
            },
            BlockKind::Numeric => Head::Linear {
                start: b.start,
                width: b.width,
            },
        })
        .collect()
}

impl VaeModel {
    /// Encoder `n → hidden… → 2·D_Z`, decoder `D_Z → reversed hidden… → n`.
    pub fn new(layout: EncodingLayout, hidden: &[usize], latent_dim: usize, beta: f64, rng: &mut Rng) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        let n = layout.width;
        let encoder = Mlp::new(
            n,
            hidden,
            vec![
                Head::Linear {
                    start: 0,
                    width: latent_dim,
                },
                Head::Linear {
                    start: latent_dim,
                    width: latent_dim,
                },
            ],
            rng,
        )?;
        let mirrored: Vec<usize> = hidden.iter().rev().copied().collect();
        let decoder = Mlp::new(latent_dim, &mirrored, decoder_heads(&layout), rng)?;
        Ok(VaeModel {
            encoder,
            decoder,
            latent_dim,
            beta,
            layout,
        })
    }

    pub fn encode(&self, x: &[f64]) -> Result<LatentParams> {
        if x.len() != self.layout.width {
            return Err(Error::SchemaMismatch(format!(
                "row width {} does not match encoded width {}",
                x.len(),
                self.layout.width
            )));
        }
        let (out, _) = self.encoder.forward(x)?;
        Ok(split_latent(&out, self.latent_dim))
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decoder.forward(z)?.0)
    }

    pub fn loss(&self, x: &[f64], x_hat: &[f64], lp: &LatentParams) -> LossTerms {
        loss_terms(&self.layout, x, x_hat, lp, self.beta)
    }

    fn block_names(&self) -> Vec<String> {
        let mut names = self.encoder.block_names("encoder.");
        names.extend(self.decoder.block_names("decoder."));
        names
    }

    /// Loss of one row with fixed noise, adding its parameter gradients to the buffers.
    pub fn accumulate_row(
        &self,
        x: &[f64],
        eps: &[f64],
        work: &mut RowWork,
        enc_grads: &mut MlpGrads,
        dec_grads: &mut MlpGrads,
    ) -> Result<LossTerms> {
        let d = self.latent_dim;
        self.encoder.forward_cached(x, &mut work.enc)?;
        let lp = split_latent(&work.enc.output, d);
        let sigma = lp.std_dev();
        let z = reparameterize(&lp, eps)?;
        self.decoder.forward_cached(&z, &mut work.dec)?;
        let x_hat = &work.dec.output;
        let terms = loss_terms(&self.layout, x, x_hat, &lp, self.beta);

        // d loss / d x̂
        let mut g_out = vec![0.0; x.len()];
        for b in &self.layout.blocks {
            for c in b.range() {
                g_out[c] = match b.kind {
                    BlockKind::Numeric => x_hat[c] - x[c],
                    BlockKind::OneHot => {
                        if x[c] != 0.0 && x_hat[c] > PROB_FLOOR {
                            -x[c] / x_hat[c]
                        } else {
                            0.0
                        }
                    }
                };
            }
        }
        let g_z = self.decoder.backward_accumulate(&work.dec, &g_out, dec_grads)?;
        let mut g_enc = vec![0.0; 2 * d];
        for k in 0..d {
            let mu = lp.mean[k];
            let var = lp.log_variance[k].exp();
            g_enc[k] = g_z[k] + self.beta * mu;
            g_enc[d + k] = g_z[k] * 0.5 * sigma[k] * eps[k] + self.beta * 0.5 * (var - 1.0);
        }
        self.encoder.backward_accumulate(&work.enc, &g_enc, enc_grads)?;
        Ok(terms)
    }

    /// Mean loss over `rows` with the given noise, and the matching mean gradients.
    pub fn batch_gradient(
        &self,
        data: &EncodedMatrix,
        rows: &[usize],
        noise: &[Vec<f64>],
    ) -> Result<(LossTerms, MlpGrads, MlpGrads)> {
        let mut enc = MlpGrads::zeros_like(&self.encoder);
        let mut dec = MlpGrads::zeros_like(&self.decoder);
        let mut work = RowWork::default();
        let mut terms = LossTerms::default();
        for (&r, eps) in rows.iter().zip(noise) {
            let t = self.accumulate_row(data.row(r), eps, &mut work, &mut enc, &mut dec)?;
            terms.add(&t);
        }
        let f = 1.0 / rows.len().max(1) as f64;
        enc.scale(f);
        dec.scale(f);
        Ok((terms.scaled(f), enc, dec))
    }

    /// Draws `count` agents: `z ~ N(0, I)`, decode, harden categoricals, de-standardize.
    pub fn sample(&self, count: usize, seed: u64, hardening: Hardening) -> Result<AgentPool> {
        let mut rng = substream(seed, "vae-sample", 0);
        let mut values = Vec::with_capacity(count * self.layout.width);
        let mut cache = ForwardCache::default();
        for _ in 0..count {
            let z: Vec<f64> = (0..self.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
            self.decoder.forward_cached(&z, &mut cache)?;
            values.extend_from_slice(&cache.output);
        }
        let mut hard_rng = substream(seed, "vae-harden", 0);
        let rng_opt = (hardening == Hardening::Sample).then_some(&mut hard_rng);
        self.layout.decode_values(&values, self.layout.width, hardening, rng_opt)
    }
}

/// Scratch buffers reused across rows.
#[derive(Debug, Default)]
pub struct RowWork {
    enc: ForwardCache,
    dec: ForwardCache,
}

fn split_latent(out: &[f64], d: usize) -> LatentParams {
    LatentParams {
        mean: out[..d].to_vec(),
        log_variance: out[d..2 * d].to_vec(),
    }
}

/// `z = μ + exp(log_variance / 2) ⊙ ε`.
pub fn reparameterize(lp: &LatentParams, eps: &[f64]) -> Result<Vec<f64>> {
    if lp.mean.len() != eps.len() || lp.log_variance.len() != eps.len() {
        return Err(Error::SchemaMismatch("latent and noise widths differ".into()));
    }
    Ok(lp
        .mean
        .iter()
        .zip(&lp.log_variance)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// KL divergence of `N(μ, diag(exp(log_variance)))` from `N(0, I)`.
pub fn kl_divergence(lp: &LatentParams) -> f64 {
    -0.5 * lp
        .mean
        .iter()
        .zip(&lp.log_variance)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

/// Per-row loss terms; `total = numeric + categorical + β·kl`.
pub fn loss_terms(layout: &EncodingLayout, x: &[f64], x_hat: &[f64], lp: &LatentParams, beta: f64) -> LossTerms {
    let mut numeric = 0.0;
    let mut categorical = 0.0;
    for b in &layout.blocks {
        for c in b.range() {
            match b.kind {
                BlockKind::Numeric => numeric += 0.5 * (x[c] - x_hat[c]).powi(2),
                BlockKind::OneHot => {
                    if x[c] != 0.0 {
                        categorical -= x[c] * x_hat[c].max(PROB_FLOOR).ln();
                    }
                }
            }
        }
    }
    let kl = kl_divergence(lp);
    LossTerms {
        total: numeric + categorical + beta * kl,
        numeric,
        categorical,
        kl,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub hidden: Vec<Vec<usize>>,
    pub latent_dims: Vec<usize>,
    pub betas: Vec<f64>,
}

impl GridSpec {
    /// The full architecture / latent size / β grid.
    pub fn full() -> Self {
        GridSpec {
            hidden: vec![
                vec![25],
                vec![50],
                vec![100],
                vec![50, 25],
                vec![100, 50],
                vec![100, 50, 25],
            ],
            latent_dims: vec![5, 10, 25],
            betas: vec![0.01, 0.05, 0.1, 0.5, 1.0, 10.0, 100.0],
        }
    }

    pub fn single(hidden: Vec<usize>, latent_dim: usize, beta: f64) -> Self {
        GridSpec {
            hidden: vec![hidden],
            latent_dims: vec![latent_dim],
            betas: vec![beta],
        }
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for h in &self.hidden {
            for &d in &self.latent_dims {
                for &b in &self.betas {
                    out.push(GridPoint {
                        hidden: h.clone(),
                        latent_dim: d,
                        beta: b,
                    });
                }
            }
        }
        out
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::full()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub seed: u64,
    pub grid: GridSpec,
    /// Variables whose joint drives model selection; defaults to the first four.
    pub selection: Option<Vec<usize>>,
    /// Agents sampled per grid point for validation scoring; defaults to the
    /// larger of the validation size and 1000.
    pub validation_samples: Option<usize>,
    pub hardening: Hardening,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.001,
            rho: 0.9,
            seed: 0,
            grid: GridSpec::full(),
            selection: None,
            validation_samples: None,
            hardening: Hardening::Argmax,
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config("learning rate must be positive and rho in [0, 1)".into()));
        }
        if self.grid.points().is_empty() {
            return Err(Error::Config("empty VAE grid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub terms: LossTerms,
}

/// Runs `epochs` passes of shuffled minibatch RMSprop over `data`.
pub fn train_model(
    model: &mut VaeModel,
    data: &EncodedMatrix,
    epochs: usize,
    batch_size: usize,
    optimizer: &mut RmspropState,
    rng: &mut Rng,
) -> Result<Vec<EpochLoss>> {
    if data.cols != model.layout.width {
        return Err(Error::SchemaMismatch("training matrix width".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut history = Vec::with_capacity(epochs);
    if data.rows == 0 {
        if epochs > 0 {
            return Err(Error::InsufficientData("empty training matrix".into()));
        }
        return Ok(history);
    }
    let names = model.block_names();
    let mut order: Vec<usize> = (0..data.rows).collect();
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut sum = LossTerms::default();
        for batch in order.chunks(batch_size) {
            let noise: Vec<Vec<f64>> = batch
                .iter()
                .map(|_| (0..model.latent_dim).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let (terms, enc, dec) = model.batch_gradient(data, batch, &noise)?;
            if !terms.total.is_finite() {
                return Err(Error::Divergence(format!("non-finite loss at epoch {epoch}")));
            }
            sum.add(&terms.scaled(batch.len() as f64));
            let mut grads = enc.blocks();
            grads.extend(dec.blocks());
            let mut params = model.encoder.param_blocks_mut();
            params.extend(model.decoder.param_blocks_mut());
            optimizer
                .step(params, &grads, &names)
                .map_err(|e| match e {
                    Error::Divergence(m) => Error::Divergence(format!("{m} at epoch {epoch}")),
                    other => other,
                })?;
        }
        history.push(EpochLoss {
            epoch,
            terms: sum.scaled(1.0 / data.rows as f64),
        });
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub index: usize,
    pub point: GridPoint,
    pub validation_srmse: f64,
    pub final_loss: Option<LossTerms>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: VaeModel,
    pub best_index: usize,
    pub points: Vec<GridPointResult>,
    pub histories: Vec<Vec<EpochLoss>>,
}

fn default_selection(n_vars: usize) -> Vec<usize> {
    (0..n_vars.min(4)).collect()
}

/// Grid search: trains one model per grid point on `train` and keeps the one whose
/// hardened samples best match `validation` on the selection joint (lowest SRMSE).
pub fn train(train: &AgentPool, validation: &AgentPool, config: &TrainConfig) -> Result<GridResult> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InsufficientData("VAE needs non-empty train and validation pools".into()));
    }
    let layout = EncodingLayout::fit(train)?;
    let data = layout.encode(train)?;
    let selection = config
        .selection
        .clone()
        .unwrap_or_else(|| default_selection(train.schema.len()));
    if selection.is_empty() || selection.iter().any(|&i| i >= train.schema.len()) {
        return Err(Error::Config("selection variables out of range".into()));
    }
    let reference = frequency_distribution(validation, &selection)?;
    let n_samples = config.validation_samples.unwrap_or(validation.len().max(1000));
    let points = config.grid.points();

    let runs = par::try_map_range(config.exec, points.len(), |i| {
        let p = &points[i];
        let mut rng = substream(config.seed, "vae-grid", i as u64);
        let mut model = VaeModel::new(layout.clone(), &p.hidden, p.latent_dim, p.beta, &mut rng)?;
        let mut opt = RmspropState::new(config.learning_rate, config.rho);
        let history = train_model(&mut model, &data, config.epochs, config.batch_size, &mut opt, &mut rng)
            .map_err(|e| match e {
                Error::Divergence(m) => Error::Divergence(format!("grid point {i}: {m}")),
                other => other,
            })?;
        let sample_seed = crate::rng::derive_seed(config.seed, "vae-validate", i as u64);
        let generated = model.sample(n_samples, sample_seed, config.hardening)?;
        let score = srmse(&frequency_distribution(&generated, &selection)?, &reference)?;
        Ok::<_, Error>((model, history, score))
    })?;

    let mut best_index = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.2 < runs[best_index].2 {
            best_index = i;
        }
    }
    let mut results = Vec::with_capacity(runs.len());
    let mut histories = Vec::with_capacity(runs.len());
    let mut best = None;
    for (i, (model, history, score)) in runs.into_iter().enumerate() {
        results.push(GridPointResult {
            index: i,
            point: points[i].clone(),
            validation_srmse: score,
            final_loss: history.last().map(|h| h.terms),
        });
        histories.push(history);
        if i == best_index {
            best = Some(model);
        }
    }
    Ok(GridResult {
        best: best.expect("grid is non-empty"),
        best_index,
        points: results,
        histories,
    })
}

/// Training log CSV: one line per (grid point, epoch).
pub fn write_training_log<W: Write>(writer: W, histories: &[Vec<EpochLoss>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["grid_point", "epoch", "numeric", "categorical", "kl", "total"])?;
    for (g, hist) in histories.iter().enumerate() {
        for e in hist {
            w.write_record([
                g.to_string(),
                e.epoch.to_string(),
                e.terms.numeric.to_string(),
                e.terms.categorical.to_string(),
                e.terms.kl.to_string(),
                e.terms.total.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const CHECKPOINT_FORMAT: &str = "popsynth-vae";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to sample from a trained model without retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeCheckpoint {
    pub format: String,
    pub version: u32,
    pub model: VaeModel,
    pub grid_point: Option<GridPoint>,
    pub selection_srmse: Option<f64>,
}

impl VaeCheckpoint {
    pub fn new(model: VaeModel, grid_point: Option<GridPoint>, selection_srmse: Option<f64>) -> Self {
        VaeCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model,
            grid_point,
            selection_srmse,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: VaeCheckpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        ck.model.encoder.validate()?;
        ck.model.decoder.validate()?;
        if ck.model.encoder.input_dim() != ck.model.layout.width
            || ck.model.decoder.output_dim() != ck.model.layout.width
            || ck.model.decoder.input_dim() != ck.model.latent_dim
        {
            return Err(Error::SchemaMismatch("checkpoint shapes are inconsistent".into()));
        }
        Ok(ck)
    }
}
