//! Experiment orchestration: ingest or synthesize a population, split it, fit every
//! configured generator, sample from each, score them against the test split and
//! write the artifacts.
//!
//! All randomness derives from the master seed through named substreams, and the
//! report never contains wall-clock values, so reruns produce identical files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::baselines::{resample_training, MarginalModel};
use crate::bayesnet::{BayesNet, BnAlgorithm, BnDocument, SearchOptions};
use crate::dataset::{
    load_dataset, read_pool_file, split, write_pool_file, AgentPool, EncodingLayout, Hardening, Provenance, Schema,
    SchemaDoc,
};
use crate::error::{Error, Result};
use crate::gibbs::{GibbsConfig, GibbsDiagnostics, GibbsSampler};
use crate::metrics::{evaluate, pca_fit, write_scatter, EvalInput, EvalReport, ScatterSeries};
use crate::par::{self, Exec};
use crate::rng::derive_seed;
use crate::synth::{synth_generate, SyntheticGeneratorSpec};
use crate::vae::{self, GridPointResult, GridSpec, TrainConfig, VaeCheckpoint};

pub const DEFAULT_COUNT: usize = 10_000;
pub const MARGINALS: &str = "Marginal sampler";
pub const RESAMPLE: &str = "Resampled training set";
pub const BINNING: &str = "equal-width over the observed range";

fn default_count() -> usize {
    DEFAULT_COUNT
}

fn default_true() -> bool {
    true
}

fn default_pca() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "SplitConfig::default_train")]
    pub train_frac: f64,
    #[serde(default = "SplitConfig::default_validation")]
    pub validation_frac: f64,
    /// Defaults to a substream of the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SplitConfig {
    fn default_train() -> f64 {
        0.2
    }

    fn default_validation() -> f64 {
        0.25
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_frac: Self::default_train(),
            validation_frac: Self::default_validation(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeMethod {
    pub name: Option<String>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub grid: GridSpec,
    /// Variable names whose joint drives model selection; defaults to the first four.
    pub selection: Option<Vec<String>>,
    pub validation_samples: Option<usize>,
    pub hardening: Hardening,
}

impl Default for VaeMethod {
    fn default() -> Self {
        let t = TrainConfig::default();
        VaeMethod {
            name: None,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            rho: t.rho,
            grid: t.grid,
            selection: None,
            validation_samples: None,
            hardening: t.hardening,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsMethod {
    pub name: Option<String>,
    pub warmup: u64,
    pub thinning: u64,
    pub chains: usize,
    pub restart_on_unreachable: bool,
}

impl Default for GibbsMethod {
    fn default() -> Self {
        let g = GibbsConfig::default();
        GibbsMethod {
            name: None,
            warmup: g.warmup,
            thinning: g.thinning,
            chains: g.chains,
            restart_on_unreachable: g.restart_on_unreachable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BnMethod {
    pub name: Option<String>,
    pub algorithm: BnAlgorithm,
    pub max_parents: Option<usize>,
}

impl Default for BnMethod {
    fn default() -> Self {
        BnMethod {
            name: None,
            algorithm: BnAlgorithm::Greedy,
            max_parents: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodConfig {
    Vae(VaeMethod),
    Gibbs(GibbsMethod),
    Bn(BnMethod),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schema document; required with `data`, ignored for synthetic populations.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticGeneratorSpec>,
    #[serde(default)]
    pub splits: SplitConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Variable names of the projected joint; defaults to the first four.
    #[serde(default)]
    pub projection: Option<Vec<String>>,
    #[serde(default)]
    pub methods: Vec<MethodConfig>,
    /// Adds the marginal sampler and the training-set resampler.
    #[serde(default = "default_true")]
    pub baselines: bool,
    #[serde(default = "default_pca")]
    pub pca_components: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub exec: Exec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.schema, &mut cfg.data, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => return Err(Error::Config("give either `data` or `synthetic`, not both".into())),
            (None, None) => return Err(Error::Config("one of `data` or `synthetic` is required".into())),
            (Some(_), None) if self.schema.is_none() => {
                return Err(Error::Config("`data` needs a `schema` document".into()))
            }
            _ => {}
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        if self.count == 0 {
            return Err(Error::Config("count must be positive".into()));
        }
        if self.pca_components == 0 {
            return Err(Error::Config("pca_components must be positive".into()));
        }
        for m in &self.methods {
            match m {
                MethodConfig::Vae(v) => {
                    if v.epochs == 0 || v.batch_size == 0 {
                        return Err(Error::Config("VAE epochs and batch_size must be positive".into()));
                    }
                }
                MethodConfig::Gibbs(g) => {
                    if g.thinning == 0 || g.chains == 0 {
                        return Err(Error::Config("Gibbs thinning and chains must be positive".into()));
                    }
                }
                MethodConfig::Bn(_) => {}
            }
        }
        let names: Vec<String> = self.resolve_methods().into_iter().map(|m| m.name).collect();
        let unique: HashSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::Config("method names must be unique".into()));
        }
        Ok(())
    }

    /// Configured methods plus baselines, each with its own seed.
    pub fn resolve_methods(&self) -> Vec<ResolvedMethod> {
        let mut out = Vec::new();
        for m in &self.methods {
            let (name, kind) = match m {
                MethodConfig::Vae(v) => (v.name.clone().unwrap_or_else(|| "VAE".into()), MethodKind::Vae(v.clone())),
                MethodConfig::Gibbs(g) => {
                    (g.name.clone().unwrap_or_else(|| "Gibbs".into()), MethodKind::Gibbs(g.clone()))
                }
                MethodConfig::Bn(b) => (
                    b.name.clone().unwrap_or_else(|| format!("BN {}", b.algorithm.name())),
                    MethodKind::Bn(b.clone()),
                ),
            };
            out.push(ResolvedMethod::new(name, kind, self.seed));
        }
        if self.baselines {
            out.push(ResolvedMethod::new(MARGINALS.into(), MethodKind::Marginals, self.seed));
            out.push(ResolvedMethod::new(RESAMPLE.into(), MethodKind::Resample, self.seed));
        }
        out
    }

    pub fn split_seed(&self) -> u64 {
        self.splits.seed.unwrap_or_else(|| derive_seed(self.seed, "split", 0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodKind {
    Vae(VaeMethod),
    Gibbs(GibbsMethod),
    Bn(BnMethod),
    Marginals,
    Resample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMethod {
    pub name: String,
    pub slug: String,
    pub kind: MethodKind,
    pub seed: u64,
}

impl ResolvedMethod {
    fn new(name: String, kind: MethodKind, master: u64) -> Self {
        let seed = derive_seed(master, &format!("method:{name}"), 0);
        ResolvedMethod {
            slug: slug(&name),
            name,
            kind,
            seed,
        }
    }
}

/// File-name form of a method name.
pub fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('-') {
            s.push('-');
        }
    }
    s.trim_matches('-').to_string()
}

/// Finds a method by name or file-name form.
pub fn find_method(cfg: &ExperimentConfig, key: &str) -> Result<ResolvedMethod> {
    cfg.resolve_methods()
        .into_iter()
        .find(|m| m.name == key || m.slug == slug(key))
        .ok_or_else(|| Error::Config(format!("no method named `{key}` in the config")))
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn names_to_indices(schema: &Schema, names: &[String], what: &str) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            schema
                .index_of(n)
                .ok_or_else(|| Error::Config(format!("{what} variable `{n}` is not in the schema")))
        })
        .collect()
}

/// Reads the configured data file, or draws the synthetic population.
pub fn load_population(cfg: &ExperimentConfig) -> Result<AgentPool> {
    if let Some(spec) = &cfg.synthetic {
        return synth_generate(spec);
    }
    let schema_path = cfg.schema.as_ref().ok_or_else(|| Error::Config("missing schema".into()))?;
    let data_path = cfg.data.as_ref().ok_or_else(|| Error::Config("missing data".into()))?;
    let doc = SchemaDoc::from_json(&fs::read_to_string(schema_path)?).map_err(|e| Error::Config(e.to_string()))?;
    load_dataset(fs::File::open(data_path)?, &doc)
}

/// Train / validation / test pools sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub schema: Arc<Schema>,
    pub train: AgentPool,
    pub validation: AgentPool,
    pub test: AgentPool,
}

pub const SCHEMA_FILE: &str = "schema.json";
pub const TRAIN_FILE: &str = "train.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const TEST_FILE: &str = "test.csv";

impl Prepared {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SCHEMA_FILE), self.schema.to_json()?)?;
        write_pool_file(&dir.join(TRAIN_FILE), &self.train)?;
        write_pool_file(&dir.join(VALIDATION_FILE), &self.validation)?;
        write_pool_file(&dir.join(TEST_FILE), &self.test)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let schema = Arc::new(Schema::from_json(&fs::read_to_string(dir.join(SCHEMA_FILE))?)?);
        Ok(Prepared {
            train: read_pool_file(&dir.join(TRAIN_FILE), schema.clone(), Provenance::Train)?,
            validation: read_pool_file(&dir.join(VALIDATION_FILE), schema.clone(), Provenance::Validation)?,
            test: read_pool_file(&dir.join(TEST_FILE), schema.clone(), Provenance::Test)?,
            schema,
        })
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let population = stage("ingest", load_population(cfg))?;
    let (train, validation, test) = stage(
        "split",
        split(&population, cfg.splits.train_frac, cfg.splits.validation_frac, cfg.split_seed()),
    )?;
    Ok(Prepared {
        schema: population.schema.clone(),
        train,
        validation,
        test,
    })
}

/// A fitted generator, ready to sample.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Vae {
        checkpoint: Box<VaeCheckpoint>,
        grid: Vec<GridPointResult>,
        histories: Vec<Vec<vae::EpochLoss>>,
        hardening: Hardening,
    },
    Gibbs {
        sampler: Box<GibbsSampler>,
        config: GibbsConfig,
    },
    Bn(Box<BayesNet>),
    Marginals(MarginalModel),
    Resample(Box<AgentPool>),
}

fn vae_config(v: &VaeMethod, schema: &Schema, seed: u64, exec: Exec) -> Result<TrainConfig> {
    let selection = match &v.selection {
        Some(names) => Some(names_to_indices(schema, names, "selection")?),
        None => None,
    };
    Ok(TrainConfig {
        epochs: v.epochs,
        batch_size: v.batch_size,
        learning_rate: v.learning_rate,
        rho: v.rho,
        seed,
        grid: v.grid.clone(),
        selection,
        validation_samples: v.validation_samples,
        hardening: v.hardening,
        exec,
    })
}

fn gibbs_config(g: &GibbsMethod) -> GibbsConfig {
    GibbsConfig {
        warmup: g.warmup,
        thinning: g.thinning,
        chains: g.chains,
        restart_on_unreachable: g.restart_on_unreachable,
    }
}

pub fn fit_method(m: &ResolvedMethod, prep: &Prepared, exec: Exec) -> Result<FittedModel> {
    let fit_seed = derive_seed(m.seed, "fit", 0);
    match &m.kind {
        MethodKind::Vae(v) => {
            let cfg = vae_config(v, &prep.schema, fit_seed, exec)?;
            let grid = vae::train(&prep.train, &prep.validation, &cfg)?;
            let best = &grid.points[grid.best_index];
            let checkpoint = VaeCheckpoint::new(grid.best, Some(best.point.clone()), Some(best.validation_srmse));
            Ok(FittedModel::Vae {
                checkpoint: Box::new(checkpoint),
                grid: grid.points,
                histories: grid.histories,
                hardening: v.hardening,
            })
        }
        MethodKind::Gibbs(g) => Ok(FittedModel::Gibbs {
            sampler: Box::new(GibbsSampler::fit(&prep.train)?),
            config: gibbs_config(g),
        }),
        MethodKind::Bn(b) => {
            let opts = SearchOptions {
                max_parents: b.max_parents,
                exec,
            };
            Ok(FittedModel::Bn(Box::new(BayesNet::fit(&prep.train, b.algorithm, &opts)?)))
        }
        MethodKind::Marginals => Ok(FittedModel::Marginals(MarginalModel::fit(&prep.train)?)),
        MethodKind::Resample => Ok(FittedModel::Resample(Box::new(prep.train.clone()))),
    }
}

fn model_file(m: &ResolvedMethod) -> Option<String> {
    match m.kind {
        MethodKind::Vae(_) => Some(format!("{}_checkpoint.json", m.slug)),
        MethodKind::Bn(_) => Some(format!("{}_model.json", m.slug)),
        _ => None,
    }
}

/// Restores a model saved by [`FittedModel::artifacts`]; table-based methods are
/// refitted from the training split, which is cheap and deterministic.
pub fn load_model(m: &ResolvedMethod, prep: &Prepared, models_dir: &Path, exec: Exec) -> Result<FittedModel> {
    match (&m.kind, model_file(m)) {
        (MethodKind::Vae(v), Some(file)) => {
            let ck = VaeCheckpoint::from_json(&fs::read_to_string(models_dir.join(file))?)?;
            if *ck.model.layout.schema != *prep.schema {
                return Err(Error::SchemaMismatch("checkpoint was trained on a different schema".into()));
            }
            Ok(FittedModel::Vae {
                checkpoint: Box::new(ck),
                grid: Vec::new(),
                histories: Vec::new(),
                hardening: v.hardening,
            })
        }
        (MethodKind::Bn(_), Some(file)) => {
            let doc: BnDocument = serde_json::from_str(&fs::read_to_string(models_dir.join(file))?)?;
            Ok(FittedModel::Bn(Box::new(BayesNet::from_document(prep.schema.clone(), doc)?)))
        }
        _ => fit_method(m, prep, exec),
    }
}

impl FittedModel {
    /// Draws `count` agents; also returns run diagnostics for the report.
    pub fn sample(&self, count: usize, seed: u64, exec: Exec) -> Result<(AgentPool, Json)> {
        match self {
            FittedModel::Vae {
                checkpoint, hardening, ..
            } => Ok((checkpoint.model.sample(count, seed, *hardening)?, Json::Null)),
            FittedModel::Gibbs { sampler, config } => {
                let (pool, diag): (AgentPool, GibbsDiagnostics) = sampler.sample(count, config, seed, exec)?;
                Ok((pool, serde_json::to_value(diag)?))
            }
            FittedModel::Bn(bn) => Ok((bn.sample(count, seed, exec)?, Json::Null)),
            FittedModel::Marginals(m) => Ok((m.sample(count, seed)?, Json::Null)),
            FittedModel::Resample(train) => Ok((resample_training(train, count, seed)?, Json::Null)),
        }
    }

    /// Deterministic facts about the fitted model for the report metadata.
    pub fn summary(&self, prep: &Prepared) -> Result<Json> {
        Ok(match self {
            FittedModel::Vae { checkpoint, grid, .. } => {
                let model = &checkpoint.model;
                // latent means of the distinct training rows, when there are few
                let mut distinct: Vec<String> = Vec::new();
                let mut latent = Vec::new();
                let enc = model.layout.encode(&prep.train)?;
                for (r, row) in prep.train.rows.iter().enumerate() {
                    let key = format!("{row:?}");
                    if distinct.contains(&key) {
                        continue;
                    }
                    distinct.push(key);
                    if distinct.len() > 16 {
                        latent.clear();
                        break;
                    }
                    let lp = model.encode(enc.row(r))?;
                    latent.push(json!({
                        "row": prep.train.codes()?.rows[r],
                        "mean": lp.mean,
                        "log_variance": lp.log_variance,
                    }));
                }
                json!({
                    "selected": checkpoint.grid_point,
                    "selection_srmse": checkpoint.selection_srmse,
                    "grid_points": grid.len(),
                    "latent_prototypes": latent,
                })
            }
            FittedModel::Gibbs { config, .. } => serde_json::to_value(config)?,
            FittedModel::Bn(bn) => {
                let names = &bn.schema.variables;
                let edges: Vec<[&str; 2]> = bn
                    .dag
                    .edges()
                    .into_iter()
                    .map(|(a, b)| [names[a].name.as_str(), names[b].name.as_str()])
                    .collect();
                json!({ "algorithm": bn.algorithm, "edges": edges, "mdl_score": bn.score })
            }
            FittedModel::Marginals(_) | FittedModel::Resample(_) => Json::Null,
        })
    }

    /// Model files as `(file name, contents)`.
    pub fn artifacts(&self, m: &ResolvedMethod) -> Result<Vec<(String, Vec<u8>)>> {
        let mut out = Vec::new();
        match self {
            FittedModel::Vae {
                checkpoint,
                grid,
                histories,
                ..
            } => {
                out.push((model_file(m).expect("vae model file"), checkpoint.to_json()?.into_bytes()));
                if !histories.is_empty() {
                    let mut log = Vec::new();
                    vae::write_training_log(&mut log, histories)?;
                    out.push((format!("{}_training_log.csv", m.slug), log));
                    out.push((format!("{}_grid.json", m.slug), serde_json::to_vec_pretty(grid)?));
                }
            }
            FittedModel::Bn(bn) => {
                out.push((model_file(m).expect("bn model file"), serde_json::to_vec_pretty(&bn.to_document())?));
            }
            _ => {}
        }
        Ok(out)
    }
}

/// One method's fitted model, generated pool and bookkeeping.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: ResolvedMethod,
    pub model: FittedModel,
    pub pool: AgentPool,
    pub diagnostics: Json,
    pub fit_seconds: f64,
    pub sample_seconds: f64,
}

pub fn run_method(m: &ResolvedMethod, prep: &Prepared, count: usize, exec: Exec) -> Result<MethodRun> {
    let t0 = Instant::now();
    let model = fit_method(m, prep, exec)?;
    let fit_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (pool, diagnostics) = model.sample(count, derive_seed(m.seed, "sample", 0), exec)?;
    pool.validate()?;
    Ok(MethodRun {
        method: m.clone(),
        model,
        pool,
        diagnostics,
        fit_seconds,
        sample_seconds: t1.elapsed().as_secs_f64(),
    })
}

/// Report plus plot-ready tables.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub scatter: Vec<ScatterSeries>,
    /// `(pool label, coordinates)` rows on the training principal components.
    pub pca: Vec<(String, Vec<f64>)>,
    pub explained_ratio: Vec<f64>,
}

pub fn projection_indices(cfg: &ExperimentConfig, schema: &Schema) -> Result<Vec<usize>> {
    match &cfg.projection {
        Some(names) => names_to_indices(schema, names, "projection"),
        None => Ok((0..schema.len().min(4)).collect()),
    }
}

pub fn evaluate_pools(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    pools: &[(String, AgentPool)],
    exec: Exec,
) -> Result<Evaluation> {
    let projection = projection_indices(cfg, &prep.schema)?;
    if projection.is_empty() {
        return Err(Error::Config("projection must name at least one variable".into()));
    }
    let layout = EncodingLayout::fit(&prep.train)?;
    let (report, scatter) = evaluate(&EvalInput {
        test: &prep.test,
        train: &prep.train,
        methods: pools.iter().map(|(n, p)| (n.clone(), p)).collect(),
        projection,
        layout: &layout,
        exec,
    })?;

    let train_enc = layout.encode(&prep.train)?;
    let pca = pca_fit(&train_enc.values, train_enc.rows, train_enc.cols)?;
    let k = cfg.pca_components;
    let mut coords = Vec::new();
    let mut add = |label: &str, pool: &AgentPool| -> Result<()> {
        let enc = layout.encode(pool)?;
        for c in pca.project(&enc.values, enc.rows, enc.cols, k)? {
            coords.push((label.to_string(), c));
        }
        Ok(())
    };
    add("train", &prep.train)?;
    add("test", &prep.test)?;
    for (name, pool) in pools {
        add(name, pool)?;
    }
    Ok(Evaluation {
        report,
        scatter,
        pca: coords,
        explained_ratio: pca.explained_ratio().into_iter().take(k).collect(),
    })
}

fn write_pca(path: &Path, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = rows.first().map_or(0, |r| r.1.len());
    let mut header = vec!["pool".to_string()];
    header.extend((1..=k).map(|i| format!("pc{i}")));
    w.write_record(&header)?;
    for (label, c) in rows {
        let mut rec = vec![label.clone()];
        rec.extend(c.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub const POOLS_DIR: &str = "pools";
pub const MODELS_DIR: &str = "models";
pub const POOL_INDEX: &str = "index.json";
pub const REPORT_JSON: &str = "report.json";
pub const TIMINGS_JSON: &str = "timings.json";
pub const STATUS_JSON: &str = "status.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub method: String,
    pub file: String,
}

/// Writes a generated pool and records it in the pool index.
pub fn save_pool(out: &Path, name: &str, pool: &AgentPool) -> Result<()> {
    let dir = out.join(POOLS_DIR);
    fs::create_dir_all(&dir)?;
    let file = format!("{}.csv", slug(name));
    write_pool_file(&dir.join(&file), pool)?;
    let index_path = dir.join(POOL_INDEX);
    let mut index: Vec<PoolEntry> = if index_path.exists() {
        serde_json::from_str(&fs::read_to_string(&index_path)?)?
    } else {
        Vec::new()
    };
    index.retain(|e| e.method != name);
    index.push(PoolEntry {
        method: name.to_string(),
        file,
    });
    fs::write(index_path, serde_json::to_vec_pretty(&index)?)?;
    Ok(())
}

/// Generated pools listed in the index, ordered as the config lists its methods.
pub fn read_pools(out: &Path, cfg: &ExperimentConfig, schema: Arc<Schema>) -> Result<Vec<(String, AgentPool)>> {
    let dir = out.join(POOLS_DIR);
    let index_path = dir.join(POOL_INDEX);
    if !index_path.exists() {
        return Ok(Vec::new());
    }
    let mut index: Vec<PoolEntry> = serde_json::from_str(&fs::read_to_string(&index_path)?)?;
    let order: Vec<String> = cfg.resolve_methods().into_iter().map(|m| m.name).collect();
    index.sort_by_key(|e| order.iter().position(|n| *n == e.method).unwrap_or(usize::MAX));
    index
        .into_iter()
        .map(|e| {
            let pool = read_pool_file(&dir.join(&e.file), schema.clone(), Provenance::Generated)?;
            Ok((e.method, pool))
        })
        .collect()
}

/// Writes report.json/.csv/.txt, scatter.csv and pca.csv.
pub fn write_evaluation(out: &Path, eval: &Evaluation) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(REPORT_JSON), eval.report.to_json()?)?;
    eval.report.write_csv(fs::File::create(out.join("report.csv"))?)?;
    fs::write(out.join("report.txt"), eval.report.to_text())?;
    write_scatter(std::io::BufWriter::new(fs::File::create(out.join("scatter.csv"))?), &eval.scatter)?;
    write_pca(&out.join("pca.csv"), &eval.pca)?;
    Ok(())
}

/// Metadata shared by every report of a config.
pub fn base_metadata(cfg: &ExperimentConfig) -> serde_json::Map<String, Json> {
    let mut m = serde_json::Map::new();
    m.insert("master_seed".into(), json!(cfg.seed));
    m.insert("split_seed".into(), json!(cfg.split_seed()));
    m.insert("train_frac".into(), json!(cfg.splits.train_frac));
    m.insert("validation_frac".into(), json!(cfg.splits.validation_frac));
    m.insert("count".into(), json!(cfg.count));
    m.insert("binning".into(), json!(BINNING));
    m.insert(
        "method_seeds".into(),
        Json::Object(cfg.resolve_methods().into_iter().map(|r| (r.name, json!(r.seed))).collect()),
    );
    m.insert(
        "flags".into(),
        json!({
            "kl_sigma_read_as_variance": true,
            "vae_minibatch_loss": "mean",
            "gibbs_scan": "systematic",
            "bn_unseen_parent_configurations": "uniform",
            "bn_penalty": "ln(N)/2 per free parameter",
            "training_set_diversity_reference": "test",
            "standardization": "train split",
        }),
    );
    if let Some(spec) = &cfg.synthetic {
        m.insert("synthetic".into(), serde_json::to_value(spec).unwrap_or(Json::Null));
    }
    m.insert("timings_file".into(), json!(TIMINGS_JSON));
    m
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub prepared: Prepared,
    pub runs: Vec<MethodRun>,
    pub evaluation: Evaluation,
    /// Wall-clock seconds per stage; kept out of the report.
    pub timings: BTreeMap<String, f64>,
}

fn write_status(out: &Path, status: Json) {
    if fs::create_dir_all(out).is_ok() {
        let _ = fs::write(out.join(STATUS_JSON), serde_json::to_vec_pretty(&status).unwrap_or_default());
    }
}

/// The full experiment. With `output_dir` set, every artifact is written there and a
/// `status.json` records completion or the failing stage.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    let result = run_inner(cfg);
    if let Some(out) = &cfg.output_dir {
        match &result {
            Ok(_) => write_status(out, json!({"status": "complete"})),
            Err(e) => {
                let stage = match e {
                    Error::Stage { stage, .. } => stage.clone(),
                    _ => "config".into(),
                };
                write_status(
                    out,
                    json!({"status": "failed", "stage": stage, "error": e.to_string(), "partial_artifacts": true}),
                );
            }
        }
    }
    result
}

fn run_inner(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let exec = cfg.exec;
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let prep = prepare(cfg)?;
    timings.insert("prepare".to_string(), t.elapsed().as_secs_f64());
    if let Some(out) = &cfg.output_dir {
        stage("prepare", prep.write(out))?;
    }

    let methods = cfg.resolve_methods();
    let runs = par::try_map_range(exec, methods.len(), |i| {
        let m = &methods[i];
        run_method(m, &prep, cfg.count, exec).map_err(|e| e.in_stage(&format!("method {}", m.name)))
    })?;

    if let Some(out) = &cfg.output_dir {
        let models = out.join(MODELS_DIR);
        for r in &runs {
            stage(&format!("method {}", r.method.name), (|| -> Result<()> {
                save_pool(out, &r.method.name, &r.pool)?;
                let mut files = r.model.artifacts(&r.method)?;
                if !r.diagnostics.is_null() {
                    let name = format!("{}_diagnostics.json", r.method.slug);
                    files.push((name, serde_json::to_vec_pretty(&r.diagnostics)?));
                }
                if !files.is_empty() {
                    fs::create_dir_all(&models)?;
                }
                for (file, bytes) in files {
                    fs::write(models.join(file), bytes)?;
                }
                Ok(())
            })())?;
        }
    }
    for r in &runs {
        timings.insert(format!("fit {}", r.method.name), r.fit_seconds);
        timings.insert(format!("sample {}", r.method.name), r.sample_seconds);
    }

    let t = Instant::now();
    let pools: Vec<(String, AgentPool)> = runs.iter().map(|r| (r.method.name.clone(), r.pool.clone())).collect();
    let mut evaluation = stage("evaluate", evaluate_pools(cfg, &prep, &pools, exec))?;
    timings.insert("evaluate".to_string(), t.elapsed().as_secs_f64());

    let mut meta = base_metadata(cfg);
    let mut per_method = serde_json::Map::new();
    for r in &runs {
        per_method.insert(
            r.method.name.clone(),
            json!({
                "model": stage("report", r.model.summary(&prep))?,
                "diagnostics": r.diagnostics,
            }),
        );
    }
    meta.insert("methods".into(), Json::Object(per_method));
    meta.insert("pca_explained_ratio".into(), json!(evaluation.explained_ratio));
    evaluation.report.metadata.extra = meta;

    if let Some(out) = &cfg.output_dir {
        stage("report", write_evaluation(out, &evaluation))?;
        stage("report", fs::write(out.join(TIMINGS_JSON), serde_json::to_vec_pretty(&timings)?).map_err(Error::from))?;
    }
    Ok(PipelineOutput {
        prepared: prep,
        runs,
        evaluation,
        timings,
    })
}
