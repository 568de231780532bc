use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::schema::{discretize, Schema, VariableKind, VariableSpec};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

/// A raw attribute value: a category index or a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Cat(usize),
    Num(f64),
}

impl Value {
    pub fn as_cat(self) -> Option<usize> {
        match self {
            Value::Cat(c) => Some(c),
            Value::Num(_) => None,
        }
    }

    pub fn as_num(self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(v),
            Value::Cat(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Train,
    Validation,
    Test,
    Generated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Train => "train",
            Provenance::Validation => "validation",
            Provenance::Test => "test",
            Provenance::Generated => "generated",
        }
    }
}

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPool {
    pub schema: Arc<Schema>,
    pub rows: Vec<Row>,
    pub provenance: Provenance,
}

/// Fully discrete view of a pool: every value replaced by its level index
/// (category, or bin for numericals).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedData {
    pub cards: Vec<usize>,
    pub rows: Vec<Vec<usize>>,
}

impl CodedData {
    pub fn new(cards: Vec<usize>, rows: Vec<Vec<usize>>) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cards.len() {
                return Err(Error::SchemaMismatch(format!(
                    "row {r} has {} values, expected {}",
                    row.len(),
                    cards.len()
                )));
            }
            if let Some(i) = (0..row.len()).find(|&i| row[i] >= cards[i]) {
                return Err(Error::SchemaMismatch(format!(
                    "row {r}: level {} of variable {i} exceeds cardinality {}",
                    row[i], cards[i]
                )));
            }
        }
        Ok(CodedData { cards, rows })
    }

    pub fn n_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, i: usize) -> Vec<usize> {
        self.rows.iter().map(|r| r[i]).collect()
    }
}

impl AgentPool {
    pub fn new(schema: Arc<Schema>, rows: Vec<Row>, provenance: Provenance) -> Result<Self> {
        let pool = AgentPool {
            schema,
            rows,
            provenance,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn empty(schema: Arc<Schema>, provenance: Provenance) -> Self {
        AgentPool {
            schema,
            rows: Vec::new(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Checks every value against its variable spec.
    pub fn validate(&self) -> Result<()> {
        let vars = &self.schema.variables;
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != vars.len() {
                return Err(Error::SchemaMismatch(format!(
                    "row {r} has {} values, schema has {}",
                    row.len(),
                    vars.len()
                )));
            }
            for (v, spec) in row.iter().zip(vars) {
                check_value(*v, spec)?;
            }
        }
        Ok(())
    }

    /// Discrete level codes of every row.
    pub fn codes(&self) -> Result<CodedData> {
        let vars = &self.schema.variables;
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .zip(vars)
                    .map(|(v, spec)| level_of(*v, spec))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CodedData {
            cards: self.schema.cardinalities(),
            rows,
        })
    }

    /// Materializes coded rows. Numerical levels become values drawn uniformly
    /// within the bin (integers for integer variables).
    pub fn from_codes(
        schema: Arc<Schema>,
        codes: &[Vec<usize>],
        provenance: Provenance,
        rng: &mut Rng,
    ) -> Result<Self> {
        let rows = codes
            .iter()
            .map(|row| {
                if row.len() != schema.len() {
                    return Err(Error::SchemaMismatch("coded row width".into()));
                }
                row.iter()
                    .zip(&schema.variables)
                    .map(|(&level, spec)| {
                        if level >= spec.levels() {
                            return Err(Error::SchemaMismatch(format!(
                                "level {level} out of range for `{}`",
                                spec.name
                            )));
                        }
                        Ok(if spec.kind.is_numerical() {
                            Value::Num(draw_in_bin(spec, level, rng))
                        } else {
                            Value::Cat(level)
                        })
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AgentPool {
            schema,
            rows,
            provenance,
        })
    }

    pub fn concat(pools: &[&AgentPool], provenance: Provenance) -> Result<AgentPool> {
        let first = pools
            .first()
            .ok_or_else(|| Error::InsufficientData("nothing to concatenate".into()))?;
        let mut rows = Vec::new();
        for p in pools {
            if p.schema != first.schema {
                return Err(Error::SchemaMismatch("pools use different schemas".into()));
            }
            rows.extend(p.rows.iter().cloned());
        }
        Ok(AgentPool {
            schema: first.schema.clone(),
            rows,
            provenance,
        })
    }
}

fn check_value(v: Value, spec: &VariableSpec) -> Result<()> {
    match (v, spec.kind.is_numerical()) {
        (Value::Cat(c), false) if c < spec.categories.len() => Ok(()),
        (Value::Cat(c), false) => Err(Error::UnknownCategory {
            variable: spec.name.clone(),
            category: format!("#{c}"),
        }),
        (Value::Num(x), true) => discretize(x, spec).map(|_| ()),
        _ => Err(Error::SchemaMismatch(format!(
            "value {v:?} has the wrong type for `{}`",
            spec.name
        ))),
    }
}

pub(crate) fn level_of(v: Value, spec: &VariableSpec) -> Result<usize> {
    check_value(v, spec)?;
    match v {
        Value::Cat(c) => Ok(c),
        Value::Num(x) => discretize(x, spec),
    }
}

/// Uniform draw inside bin `level`. Integer variables draw among the integers the bin
/// contains, falling back to the rounded midpoint for bins narrower than one unit.
pub(crate) fn draw_in_bin(spec: &VariableSpec, level: usize, rng: &mut Rng) -> f64 {
    let lo = spec.bin_edges[level];
    let hi = spec.bin_edges[level + 1];
    let last = level + 2 == spec.bin_edges.len();
    match spec.kind {
        VariableKind::NumericalInt => {
            let first = lo.ceil();
            let end = if last { hi.floor() } else { hi.ceil() - 1.0 };
            if end >= first {
                let span = (end - first) as u64 + 1;
                first + rng.random_range(0..span) as f64
            } else {
                bin_midpoint(spec, level)
            }
        }
        _ => {
            let x = lo + (hi - lo) * rng.random::<f64>();
            if x >= hi && !last {
                lo
            } else {
                x
            }
        }
    }
}

/// Deterministic representative of a bin, used when decoding one-hot bins.
pub(crate) fn bin_midpoint(spec: &VariableSpec, level: usize) -> f64 {
    let lo = spec.bin_edges[level];
    let hi = spec.bin_edges[level + 1];
    let mid = 0.5 * (lo + hi);
    if spec.kind == VariableKind::NumericalInt {
        let r = mid.floor();
        if r >= lo {
            r
        } else {
            mid
        }
    } else {
        mid
    }
}

/// Seeded shuffle into (train, validation, test).
///
/// `train_frac` of the pool forms the training portion, of which `val_frac_of_train`
/// is held out as validation; the rest is test.
pub fn split(
    pool: &AgentPool,
    train_frac: f64,
    val_frac_of_train: f64,
    seed: u64,
) -> Result<(AgentPool, AgentPool, AgentPool)> {
    for (name, f) in [("train_frac", train_frac), ("val_frac_of_train", val_frac_of_train)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let n = pool.len();
    let n_train_total = (n as f64 * train_frac).round() as usize;
    let n_val = (n_train_total as f64 * val_frac_of_train).round() as usize;
    let n_train = n_train_total.saturating_sub(n_val);
    let n_test = n - n_train_total.min(n);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot be split into non-empty train/validation/test ({n_train}/{n_val}/{n_test})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let take = |idx: &[usize], prov| AgentPool {
        schema: pool.schema.clone(),
        rows: idx.iter().map(|&i| pool.rows[i].clone()).collect(),
        provenance: prov,
    };
    Ok((
        take(&order[..n_train], Provenance::Train),
        take(&order[n_train..n_train_total], Provenance::Validation),
        take(&order[n_train_total..], Provenance::Test),
    ))
}
