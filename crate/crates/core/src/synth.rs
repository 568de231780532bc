//! Synthetic benchmark populations: a latent-class mixture, a random ground-truth
//! Bayesian network and the two-prototype toy population.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::bayesnet::{ancestral_sample, CptSet, Dag};
use crate::dataset::{AgentPool, EncodingMode, Provenance, Schema, VariableKind, VariableSpec};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rng::{substream, Rng};

pub const MAX_VARIABLES: usize = 64;
pub const MAX_CATEGORIES: usize = 20;
pub const MAX_CLASSES: usize = 64;
pub const MAX_SIZE: usize = 10_000_000;
pub const MAX_PARENTS: usize = 4;

fn default_strength() -> f64 {
    0.8
}

fn default_categories() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticGeneratorSpec {
    /// Hidden class, then variables drawn independently given the class.
    /// `numerical` of the variables are integers in `[0, 100]` split into
    /// `categories` uniform bins.
    LatentClass {
        classes: usize,
        variables: usize,
        #[serde(default = "default_categories")]
        categories: usize,
        #[serde(default)]
        numerical: usize,
        #[serde(default = "default_strength")]
        strength: f64,
        size: usize,
        seed: u64,
    },
    /// Forward sampling from a random DAG whose edges respect variable order.
    BnGroundTruth {
        variables: usize,
        #[serde(default = "default_categories")]
        categories: usize,
        #[serde(default = "default_max_parents")]
        max_parents: usize,
        #[serde(default = "default_strength")]
        strength: f64,
        size: usize,
        seed: u64,
    },
    /// Two binary attributes, equal shares of `(0, 0)` and `(1, 1)`.
    #[serde(rename = "toy-appendix-a")]
    Toy {
        size: usize,
        seed: u64,
        /// Exactly half of each prototype instead of fair coin flips.
        #[serde(default)]
        balanced: bool,
    },
}

fn default_max_parents() -> usize {
    2
}

impl SyntheticGeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let check_common = |variables: usize, categories: usize, strength: f64, size: usize| {
            if !(1..=MAX_VARIABLES).contains(&variables) {
                return bad(format!("variables must lie in 1..={MAX_VARIABLES}"));
            }
            if !(2..=MAX_CATEGORIES).contains(&categories) {
                return bad(format!("categories must lie in 2..={MAX_CATEGORIES}"));
            }
            if !(0.0..=1.0).contains(&strength) {
                return bad("strength must lie in [0, 1]".into());
            }
            if !(1..=MAX_SIZE).contains(&size) {
                return bad(format!("size must lie in 1..={MAX_SIZE}"));
            }
            Ok(())
        };
        match *self {
            SyntheticGeneratorSpec::LatentClass {
                classes,
                variables,
                categories,
                numerical,
                strength,
                size,
                ..
            } => {
                check_common(variables, categories, strength, size)?;
                if !(1..=MAX_CLASSES).contains(&classes) {
                    return bad(format!("classes must lie in 1..={MAX_CLASSES}"));
                }
                if numerical > variables {
                    return bad("numerical cannot exceed variables".into());
                }
                Ok(())
            }
            SyntheticGeneratorSpec::BnGroundTruth {
                variables,
                categories,
                max_parents,
                strength,
                size,
                ..
            } => {
                check_common(variables, categories, strength, size)?;
                if max_parents > MAX_PARENTS {
                    return bad(format!("max_parents must be at most {MAX_PARENTS}"));
                }
                Ok(())
            }
            SyntheticGeneratorSpec::Toy { size, .. } => {
                if !(1..=MAX_SIZE).contains(&size) {
                    return bad(format!("size must lie in 1..={MAX_SIZE}"));
                }
                Ok(())
            }
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            SyntheticGeneratorSpec::LatentClass { seed, .. }
            | SyntheticGeneratorSpec::BnGroundTruth { seed, .. }
            | SyntheticGeneratorSpec::Toy { seed, .. } => seed,
        }
    }

    pub fn set_seed(&mut self, value: u64) {
        match self {
            SyntheticGeneratorSpec::LatentClass { seed, .. }
            | SyntheticGeneratorSpec::BnGroundTruth { seed, .. }
            | SyntheticGeneratorSpec::Toy { seed, .. } => *seed = value,
        }
    }

    /// Schema of the generated pool.
    pub fn schema(&self) -> Result<Schema> {
        self.validate()?;
        let labels = |k: usize| (0..k).map(|c| c.to_string()).collect::<Vec<_>>();
        let vars = match *self {
            SyntheticGeneratorSpec::LatentClass {
                variables,
                categories,
                numerical,
                ..
            } => (0..variables)
                .map(|i| {
                    let name = format!("v{i:02}");
                    if i >= variables - numerical {
                        let edges = (0..=categories).map(|b| 100.0 * b as f64 / categories as f64).collect();
                        VariableSpec::numerical(name, VariableKind::NumericalInt, edges)
                    } else {
                        VariableSpec::categorical(name, labels(categories))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            SyntheticGeneratorSpec::BnGroundTruth {
                variables, categories, ..
            } => (0..variables)
                .map(|i| VariableSpec::categorical(format!("v{i:02}"), labels(categories)))
                .collect::<Result<Vec<_>>>()?,
            SyntheticGeneratorSpec::Toy { .. } => vec![
                VariableSpec::categorical("x", labels(2))?,
                VariableSpec::categorical("y", labels(2))?,
            ],
        };
        Schema::new(vars, EncodingMode::DiscretizeAll)
    }
}

/// `(1 − strength) · Dirichlet(1) + strength · e_mode` with a random mode.
fn peaked(k: usize, strength: f64, rng: &mut Rng) -> Vec<f64> {
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = g.iter().sum();
    let mode = rng.random_range(0..k);
    g.iter()
        .enumerate()
        .map(|(c, x)| (1.0 - strength) * x / total + if c == mode { strength } else { 0.0 })
        .collect()
}

/// Class weights and per-class variable distributions of a latent-class spec.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClassModel {
    pub class_weights: Vec<f64>,
    /// `[class][variable]` level distribution.
    pub conditionals: Vec<Vec<Vec<f64>>>,
}

pub fn latent_class_model(spec: &SyntheticGeneratorSpec) -> Result<LatentClassModel> {
    spec.validate()?;
    let SyntheticGeneratorSpec::LatentClass {
        classes,
        variables,
        categories,
        strength,
        seed,
        ..
    } = *spec
    else {
        return Err(Error::Config("not a latent-class spec".into()));
    };
    let mut rng = substream(seed, "latent-class-model", 0);
    let class_weights = peaked(classes, 0.0, &mut rng);
    let conditionals = (0..classes)
        .map(|_| (0..variables).map(|_| peaked(categories, strength, &mut rng)).collect())
        .collect();
    Ok(LatentClassModel {
        class_weights,
        conditionals,
    })
}

/// The random structure and CPTs behind a ground-truth spec. Node `i` draws up to
/// `max_parents` parents among nodes `0..i`.
pub fn ground_truth_network(spec: &SyntheticGeneratorSpec) -> Result<(Dag, CptSet)> {
    spec.validate()?;
    let SyntheticGeneratorSpec::BnGroundTruth {
        variables,
        categories,
        max_parents,
        strength,
        seed,
        ..
    } = *spec
    else {
        return Err(Error::Config("not a ground-truth network spec".into()));
    };
    let mut rng = substream(seed, "bn-ground-truth", 0);
    let mut dag = Dag::empty(variables);
    for v in 1..variables {
        let k = rng.random_range(0..=max_parents.min(v));
        let candidates: Vec<usize> = (0..v).collect();
        let mut ps: Vec<usize> = candidates.choose_multiple(&mut rng, k).copied().collect();
        ps.sort_unstable();
        dag.parents[v] = ps;
    }
    let mut cpts = CptSet::empty(vec![categories; variables]);
    for v in 0..variables {
        let n_cfg = categories.pow(dag.parents[v].len() as u32);
        for cfg in 0..n_cfg {
            let mut values = vec![0usize; dag.parents[v].len()];
            let mut c = cfg;
            for slot in values.iter_mut().rev() {
                *slot = c % categories;
                c /= categories;
            }
            let probs = peaked(categories, strength, &mut rng);
            cpts.set(&dag, v, &values, probs);
        }
    }
    Ok((dag, cpts))
}

/// Draws a population from `spec`.
pub fn synth_generate(spec: &SyntheticGeneratorSpec) -> Result<AgentPool> {
    let schema = Arc::new(spec.schema()?);
    let seed = spec.seed();
    let codes: Vec<Vec<usize>> = match *spec {
        SyntheticGeneratorSpec::LatentClass { size, .. } => {
            let model = latent_class_model(spec)?;
            let classes = WeightedIndex::new(&model.class_weights).map_err(|e| Error::Config(e.to_string()))?;
            let per_class = model
                .conditionals
                .iter()
                .map(|vars| {
                    vars.iter()
                        .map(|p| WeightedIndex::new(p).map_err(|e| Error::Config(e.to_string())))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let mut rng = substream(seed, "latent-class-rows", 0);
            (0..size)
                .map(|_| {
                    let c = classes.sample(&mut rng);
                    per_class[c].iter().map(|d| d.sample(&mut rng)).collect()
                })
                .collect()
        }
        SyntheticGeneratorSpec::BnGroundTruth { size, .. } => {
            let (dag, cpts) = ground_truth_network(spec)?;
            ancestral_sample(&dag, &cpts, size, derive_rows_seed(seed), Exec::default())?
        }
        SyntheticGeneratorSpec::Toy { size, balanced, .. } => {
            let mut rng = substream(seed, "toy", 0);
            (0..size)
                .map(|i| {
                    let s = if balanced { i % 2 } else { usize::from(rng.random_bool(0.5)) };
                    vec![s, s]
                })
                .collect()
        }
    };
    let mut rng = substream(seed, "synth-bins", 0);
    AgentPool::from_codes(schema, &codes, Provenance::Train, &mut rng)
}

fn derive_rows_seed(seed: u64) -> u64 {
    crate::rng::derive_seed(seed, "bn-ground-truth-rows", 0)
}
