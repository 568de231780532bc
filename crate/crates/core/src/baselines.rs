//! Reference generators: independent per-variable marginals and uniform resampling of
//! the training pool.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{AgentPool, Provenance, Schema};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Empirical level frequencies of every variable. Numerical variables use their bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    #[serde(skip)]
    schema: Option<Arc<Schema>>,
    pub marginals: Vec<Vec<f64>>,
}

impl MarginalModel {
    pub fn fit(train: &AgentPool) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InsufficientData("marginal model needs training rows".into()));
        }
        let data = train.codes()?;
        let n = data.n_rows() as f64;
        let marginals = (0..data.n_vars())
            .map(|i| {
                let mut counts = vec![0usize; data.cards[i]];
                for r in &data.rows {
                    counts[r[i]] += 1;
                }
                counts.into_iter().map(|c| c as f64 / n).collect()
            })
            .collect();
        Ok(MarginalModel {
            schema: Some(train.schema.clone()),
            marginals,
        })
    }

    /// Draws every variable independently; numerical bins become uniform draws inside the bin.
    pub fn sample(&self, count: usize, seed: u64) -> Result<AgentPool> {
        let schema = self
            .schema
            .clone()
            .ok_or_else(|| Error::Config("marginal model has no schema attached".into()))?;
        let dists = self
            .marginals
            .iter()
            .map(|p| WeightedIndex::new(p).map_err(|e| Error::Config(format!("bad marginal: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = substream(seed, "marginal", 0);
        let codes: Vec<Vec<usize>> = (0..count)
            .map(|_| dists.iter().map(|d| d.sample(&mut rng)).collect())
            .collect();
        let mut bins = substream(seed, "marginal-bins", 0);
        AgentPool::from_codes(schema, &codes, Provenance::Generated, &mut bins)
    }
}

/// I.i.d. uniform draws with replacement from the training rows.
pub fn resample_training(train: &AgentPool, count: usize, seed: u64) -> Result<AgentPool> {
    if train.is_empty() {
        return Err(Error::InsufficientData("cannot resample an empty pool".into()));
    }
    let mut rng = substream(seed, "resample", 0);
    let rows = (0..count)
        .map(|_| train.rows[rng.random_range(0..train.len())].clone())
        .collect();
    Ok(AgentPool {
        schema: train.schema.clone(),
        rows,
        provenance: Provenance::Generated,
    })
}
