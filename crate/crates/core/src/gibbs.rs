//! Gibbs sampling with full conditionals estimated as frequency tables.
//!
//! Each variable's conditional `P(x_i | x_-i)` is tabulated only for contexts that
//! occur in the training data, with no smoothing. A chain started from a training row
//! therefore never leaves the set of training rows.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{AgentPool, CodedData, Provenance, Schema};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::{substream, Rng};

const MASK: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    pub target: usize,
    pub card: usize,
    /// Full context (target slot masked) → probabilities over the target's levels.
    pub entries: HashMap<Vec<usize>, Vec<f64>>,
}

impl ConditionalTable {
    /// Probability vector for the context of `row`, ignoring the target's own value.
    pub fn lookup(&self, row: &[usize]) -> Option<&[f64]> {
        let mut key = row.to_vec();
        key[self.target] = MASK;
        self.entries.get(&key).map(Vec::as_slice)
    }
}

pub fn estimate_conditionals(train: &CodedData) -> Result<Vec<ConditionalTable>> {
    if train.n_rows() == 0 {
        return Err(Error::InsufficientData("cannot estimate conditionals from an empty pool".into()));
    }
    let tables = (0..train.n_vars())
        .map(|i| {
            let card = train.cards[i];
            let mut counts: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
            for row in &train.rows {
                let mut key = row.clone();
                key[i] = MASK;
                counts.entry(key).or_insert_with(|| vec![0; card])[row[i]] += 1;
            }
            let entries = counts
                .into_iter()
                .map(|(k, c)| {
                    let total: usize = c.iter().sum();
                    (k, c.into_iter().map(|x| x as f64 / total as f64).collect())
                })
                .collect();
            ConditionalTable { target: i, card, entries }
        })
        .collect();
    Ok(tables)
}

fn draw(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding: last level with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One systematic sweep: every variable in schema order, each conditioned on the
/// freshest values of the others.
pub fn gibbs_step(row: &mut [usize], tables: &[ConditionalTable], rng: &mut Rng) -> Result<()> {
    let mut key = row.to_vec();
    for t in tables {
        key.copy_from_slice(row);
        key[t.target] = MASK;
        let probs = t
            .entries
            .get(&key)
            .ok_or(Error::UnreachableContext { variable: t.target })?;
        row[t.target] = draw(probs, rng);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainInit {
    RandomTrainRow,
    Row(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub warmup: u64,
    pub thinning: u64,
    pub target_count: usize,
    pub init: ChainInit,
    pub seed: u64,
    /// Restart from a random training row when a context is missing, instead of failing.
    #[serde(default)]
    pub restart_on_unreachable: bool,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> u64 {
        self.warmup + self.thinning * self.target_count as u64
    }
}

/// Runs `warmup` steps, then keeps the state after every `thinning`-th step until
/// `target` states were emitted. Returns the number of steps taken.
pub fn drive_chain<S, E>(warmup: u64, thinning: u64, target: usize, mut step: S, mut emit: E) -> Result<u64>
where
    S: FnMut() -> Result<()>,
    E: FnMut(),
{
    if thinning == 0 {
        return Err(Error::Config("thinning must be at least 1".into()));
    }
    let mut iterations = 0u64;
    for _ in 0..warmup {
        step()?;
        iterations += 1;
    }
    for _ in 0..target {
        for _ in 0..thinning {
            step()?;
            iterations += 1;
        }
        emit();
    }
    Ok(iterations)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub iterations: u64,
    pub restarts: u64,
    pub distinct_rows: usize,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub rows: Vec<Vec<usize>>,
    pub diagnostics: ChainDiagnostics,
}

pub fn run_chain(tables: &[ConditionalTable], train: &CodedData, config: &ChainConfig) -> Result<ChainOutput> {
    config.validate()?;
    let mut rng = substream(config.seed, "gibbs-chain", 0);
    let pick = |rng: &mut Rng| -> Result<Vec<usize>> {
        if train.n_rows() == 0 {
            return Err(Error::InsufficientData("no training rows to start a chain from".into()));
        }
        Ok(train.rows[rng.random_range(0..train.n_rows())].clone())
    };
    let mut state = match &config.init {
        ChainInit::RandomTrainRow => pick(&mut rng)?,
        ChainInit::Row(r) => {
            if r.len() != tables.len() {
                return Err(Error::SchemaMismatch("initial row width".into()));
            }
            r.clone()
        }
    };
    let mut restarts = 0u64;
    let mut rows = Vec::with_capacity(config.target_count);
    // step and emit both touch `state`; route them through a RefCell
    let cell = std::cell::RefCell::new((&mut state, &mut rng));
    let iterations = drive_chain(
        config.warmup,
        config.thinning,
        config.target_count,
        || {
            let mut guard = cell.borrow_mut();
            let (state, rng) = &mut *guard;
            match gibbs_step(state, tables, rng) {
                Err(Error::UnreachableContext { .. }) if config.restart_on_unreachable => {
                    **state = pick(rng)?;
                    restarts += 1;
                    Ok(())
                }
                other => other,
            }
        },
        || rows.push(cell.borrow().0.clone()),
    )?;
    let distinct_rows = rows.iter().collect::<HashSet<_>>().len();
    Ok(ChainOutput {
        rows,
        diagnostics: ChainDiagnostics {
            iterations,
            restarts,
            distinct_rows,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub warmup: u64,
    pub thinning: u64,
    /// Independent chains, each started from a random training row.
    pub chains: usize,
    pub restart_on_unreachable: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            warmup: 20_000,
            thinning: 20,
            chains: 1,
            restart_on_unreachable: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GibbsDiagnostics {
    pub chains: Vec<ChainDiagnostics>,
    pub iterations: u64,
    pub restarts: u64,
    pub distinct_rows: usize,
}

/// Frequency-table Gibbs sampler fitted to a training pool.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    pub schema: Arc<Schema>,
    pub tables: Vec<ConditionalTable>,
    pub train: CodedData,
}

impl GibbsSampler {
    /// Numerical variables are bucketed with the schema's bins before tabulation.
    pub fn fit(train: &AgentPool) -> Result<Self> {
        let codes = train.codes()?;
        Ok(GibbsSampler {
            schema: train.schema.clone(),
            tables: estimate_conditionals(&codes)?,
            train: codes,
        })
    }

    /// Splits `count` across the configured chains and runs them concurrently.
    pub fn sample(&self, count: usize, config: &GibbsConfig, seed: u64, exec: Exec) -> Result<(AgentPool, GibbsDiagnostics)> {
        let chains = config.chains.max(1);
        let outputs = par::try_map_range(exec, chains, |k| {
            let target = count / chains + usize::from(k < count % chains);
            run_chain(
                &self.tables,
                &self.train,
                &ChainConfig {
                    warmup: config.warmup,
                    thinning: config.thinning,
                    target_count: target,
                    init: ChainInit::RandomTrainRow,
                    seed: crate::rng::derive_seed(seed, "gibbs", k as u64),
                    restart_on_unreachable: config.restart_on_unreachable,
                },
            )
        })?;
        let mut rows = Vec::with_capacity(count);
        let mut diag = GibbsDiagnostics::default();
        for o in outputs {
            diag.iterations += o.diagnostics.iterations;
            diag.restarts += o.diagnostics.restarts;
            diag.chains.push(o.diagnostics);
            rows.extend(o.rows);
        }
        diag.distinct_rows = rows.iter().collect::<HashSet<_>>().len();
        let mut rng = substream(seed, "gibbs-bins", 0);
        let pool = AgentPool::from_codes(self.schema.clone(), &rows, Provenance::Generated, &mut rng)?;
        Ok((pool, diag))
    }
}
