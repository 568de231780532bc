use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::pool::{bin_midpoint, level_of, AgentPool, Provenance, Value};
use super::schema::{Schema, VariableKind};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    OneHot,
    Numeric,
}

/// A contiguous column range holding one variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnBlock {
    pub variable: usize,
    pub start: usize,
    pub width: usize,
    pub kind: BlockKind,
}

impl ColumnBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

/// Column layout plus standardization statistics, fitted once on a training pool
/// and reused verbatim for every other pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingLayout {
    pub schema: Arc<Schema>,
    pub blocks: Vec<ColumnBlock>,
    /// Indexed by variable; `Some` for continuous numerical columns.
    pub standardization: Vec<Option<Standardization>>,
    pub width: usize,
}

/// How soft one-hot blocks are turned into categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Hardening {
    /// Most probable category, ties to the lowest index.
    #[default]
    Argmax,
    /// Draw from the block's probabilities.
    Sample,
}

/// Row-major `rows × cols` matrix in the layout's column space.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub layout: EncodingLayout,
}

impl EncodedMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

impl EncodingLayout {
    /// Builds the column map and fits standardization on `train`.
    pub fn fit(train: &AgentPool) -> Result<Self> {
        let schema = train.schema.clone();
        let mut blocks = Vec::with_capacity(schema.len());
        let mut standardization = vec![None; schema.len()];
        let mut start = 0;
        for (i, spec) in schema.variables.iter().enumerate() {
            let (width, kind) = if schema.is_one_hot(i) {
                (spec.levels(), BlockKind::OneHot)
            } else {
                (1, BlockKind::Numeric)
            };
            if kind == BlockKind::Numeric {
                if train.is_empty() {
                    return Err(Error::InsufficientData(
                        "cannot fit standardization on an empty pool".into(),
                    ));
                }
                let col: Vec<f64> = train
                    .rows
                    .iter()
                    .map(|r| {
                        r[i].as_num().ok_or_else(|| {
                            Error::SchemaMismatch(format!("`{}` expects a number", spec.name))
                        })
                    })
                    .collect::<Result<_>>()?;
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                standardization[i] = Some(Standardization { mean, std });
            }
            blocks.push(ColumnBlock {
                variable: i,
                start,
                width,
                kind,
            });
            start += width;
        }
        Ok(EncodingLayout {
            schema,
            blocks,
            standardization,
            width: start,
        })
    }

    pub fn encode(&self, pool: &AgentPool) -> Result<EncodedMatrix> {
        if *pool.schema != *self.schema {
            return Err(Error::SchemaMismatch("pool schema differs from the encoding layout".into()));
        }
        let mut values = vec![0.0; pool.len() * self.width];
        for (r, row) in pool.rows.iter().enumerate() {
            let out = &mut values[r * self.width..(r + 1) * self.width];
            self.encode_row_into(row, out)?;
        }
        Ok(EncodedMatrix {
            values,
            rows: pool.len(),
            cols: self.width,
            layout: self.clone(),
        })
    }

    pub fn encode_row_into(&self, row: &[Value], out: &mut [f64]) -> Result<()> {
        for block in &self.blocks {
            let spec = &self.schema.variables[block.variable];
            let v = row[block.variable];
            match block.kind {
                BlockKind::OneHot => {
                    let level = match (v, spec.kind.is_numerical()) {
                        (Value::Cat(c), false) if c >= spec.categories.len() => {
                            return Err(Error::UnknownCategory {
                                variable: spec.name.clone(),
                                category: format!("#{c}"),
                            })
                        }
                        _ => level_of(v, spec)?,
                    };
                    let dst = &mut out[block.range()];
                    dst.fill(0.0);
                    dst[level] = 1.0;
                }
                BlockKind::Numeric => {
                    let x = v.as_num().ok_or_else(|| {
                        Error::SchemaMismatch(format!("`{}` expects a number", spec.name))
                    })?;
                    let s = self.standardization[block.variable].expect("numeric block has statistics");
                    out[block.start] = (x - s.mean) / s.std;
                }
            }
        }
        Ok(())
    }

    /// Inverse of [`encode`](Self::encode) on one row. One-hot blocks may hold
    /// probabilities; numericals are de-standardized and clamped into the outer bin edges.
    pub fn decode_row(&self, x: &[f64], hardening: Hardening, rng: Option<&mut Rng>) -> Result<Vec<Value>> {
        if x.len() != self.width {
            return Err(Error::SchemaMismatch(format!(
                "row width {} does not match layout width {}",
                x.len(),
                self.width
            )));
        }
        let mut rng = rng;
        let mut out = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let spec = &self.schema.variables[block.variable];
            let v = match block.kind {
                BlockKind::OneHot => {
                    let probs = &x[block.range()];
                    let level = match (hardening, rng.as_deref_mut()) {
                        (Hardening::Sample, Some(r)) => sample_block(probs, r),
                        _ => argmax(probs),
                    };
                    if spec.kind.is_numerical() {
                        Value::Num(bin_midpoint(spec, level))
                    } else {
                        Value::Cat(level)
                    }
                }
                BlockKind::Numeric => {
                    let s = self.standardization[block.variable].expect("numeric block has statistics");
                    let mut v = s.mean + x[block.start] * s.std;
                    if !v.is_finite() {
                        return Err(Error::NumericInput(format!("non-finite output for `{}`", spec.name)));
                    }
                    if spec.kind == VariableKind::NumericalInt {
                        v = v.round();
                    }
                    Value::Num(v.clamp(spec.lower_edge(), spec.upper_edge()))
                }
            };
            out.push(v);
        }
        Ok(out)
    }

    pub fn decode_rows(&self, matrix: &EncodedMatrix) -> Result<AgentPool> {
        self.decode_values(&matrix.values, matrix.cols, Hardening::Argmax, None)
    }

    pub fn decode_values(
        &self,
        values: &[f64],
        cols: usize,
        hardening: Hardening,
        mut rng: Option<&mut Rng>,
    ) -> Result<AgentPool> {
        if cols != self.width {
            return Err(Error::SchemaMismatch(format!(
                "matrix has {cols} columns, layout expects {}",
                self.width
            )));
        }
        let rows = values
            .chunks_exact(cols.max(1))
            .map(|x| self.decode_row(x, hardening, rng.as_deref_mut()))
            .collect::<Result<Vec<_>>>()?;
        Ok(AgentPool {
            schema: self.schema.clone(),
            rows,
            provenance: Provenance::Generated,
        })
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_block(probs: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Encodes `pool` with statistics fitted on the pool itself (the training-split case).
pub fn one_hot_encode(pool: &AgentPool) -> Result<EncodedMatrix> {
    EncodingLayout::fit(pool)?.encode(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::schema::{EncodingMode, VariableSpec};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn household() -> VariableSpec {
        VariableSpec::categorical("hh", ["1", "2", "3", "4", "5+"].map(String::from).to_vec()).unwrap()
    }

    fn mixed_schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                vec![
                    household(),
                    VariableSpec::numerical("age", VariableKind::NumericalCont, vec![0.0, 25.0, 50.0, 100.0])
                        .unwrap(),
                    VariableSpec::numerical("inc", VariableKind::NumericalCont, vec![0.0, 5.0, 10.0]).unwrap(),
                ],
                EncodingMode::Mixed,
            )
            .unwrap(),
        )
    }

    #[test]
    fn household_size_two_is_second_indicator() {
        let schema = Arc::new(Schema::new(vec![household()], EncodingMode::DiscretizeAll).unwrap());
        let pool = AgentPool::new(schema, vec![vec![Value::Cat(1)]], Provenance::Train).unwrap();
        let m = one_hot_encode(&pool).unwrap();
        assert_eq!(m.rows, 1);
        assert_eq!(m.values, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn unseen_category_is_an_error() {
        let schema = Arc::new(Schema::new(vec![household()], EncodingMode::DiscretizeAll).unwrap());
        let good = AgentPool::new(schema.clone(), vec![vec![Value::Cat(1)]], Provenance::Train).unwrap();
        let layout = EncodingLayout::fit(&good).unwrap();
        let bad = AgentPool {
            schema,
            rows: vec![vec![Value::Cat(7)]],
            provenance: Provenance::Test,
        };
        assert!(matches!(layout.encode(&bad), Err(Error::UnknownCategory { .. })));
    }

    #[test]
    fn argmax_decode_with_ties_to_lowest() {
        let schema = Arc::new(
            Schema::new(
                vec![VariableSpec::categorical("c", vec!["1".into(), "2".into(), "3".into()]).unwrap()],
                EncodingMode::DiscretizeAll,
            )
            .unwrap(),
        );
        let pool = AgentPool::new(schema, vec![vec![Value::Cat(0)]], Provenance::Train).unwrap();
        let layout = EncodingLayout::fit(&pool).unwrap();
        let p = layout.decode_values(&[0.1, 0.7, 0.2, 0.4, 0.2, 0.4], 3, Hardening::Argmax, None).unwrap();
        assert_eq!(p.rows, vec![vec![Value::Cat(1)], vec![Value::Cat(0)]]);
        assert_eq!(p.provenance, Provenance::Generated);
        assert!(matches!(
            layout.decode_values(&[0.1, 0.9], 2, Hardening::Argmax, None),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn standardization_is_exact_on_training_split() {
        let schema = mixed_schema();
        let mut rng = rng_from_seed(5);
        let rows = (0..500)
            .map(|_| {
                vec![
                    Value::Cat(rng.random_range(0..5)),
                    Value::Num(rng.random_range(0.0..100.0)),
                    Value::Num(rng.random_range(0.0..10.0)),
                ]
            })
            .collect();
        let pool = AgentPool::new(schema, rows, Provenance::Train).unwrap();
        let m = one_hot_encode(&pool).unwrap();
        assert_eq!(m.cols, 7);
        for col in [5, 6] {
            let xs: Vec<f64> = m.iter_rows().map(|r| r[col]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((std - 1.0).abs() < 1e-9, "std {std}");
        }
        for r in m.iter_rows() {
            assert_eq!(r[..5].iter().sum::<f64>(), 1.0);
        }
        // direct inversion oracle: z -> m + z s
        let s = m.layout.standardization[1].unwrap();
        let back = m.layout.decode_rows(&m).unwrap();
        for (orig, dec) in pool.rows.iter().zip(&back.rows) {
            let z = (orig[1].as_num().unwrap() - s.mean) / s.std;
            let hand = s.mean + z * s.std;
            assert!((dec[1].as_num().unwrap() - hand).abs() < 1e-9);
            assert_eq!(orig[0], dec[0]);
        }
    }

    #[test]
    fn decoded_numerics_are_clamped_into_range() {
        let schema = mixed_schema();
        let pool = AgentPool::new(
            schema,
            vec![
                vec![Value::Cat(0), Value::Num(10.0), Value::Num(1.0)],
                vec![Value::Cat(1), Value::Num(90.0), Value::Num(9.0)],
            ],
            Provenance::Train,
        )
        .unwrap();
        let layout = EncodingLayout::fit(&pool).unwrap();
        let mut x = vec![0.0; 7];
        x[0] = 1.0;
        x[5] = 40.0;
        x[6] = -40.0;
        let row = layout.decode_row(&x, Hardening::Argmax, None).unwrap();
        assert_eq!(row[1], Value::Num(100.0));
        assert_eq!(row[2], Value::Num(0.0));
    }

    proptest! {
        #[test]
        fn categorical_round_trip(rows in proptest::collection::vec((0usize..5, 0usize..2, 0usize..3), 1..40)) {
            let schema = Arc::new(Schema::new(vec![
                household(),
                VariableSpec::categorical("sex", vec!["m".into(), "f".into()]).unwrap(),
                VariableSpec::categorical("edu", vec!["a".into(), "b".into(), "c".into()]).unwrap(),
            ], EncodingMode::DiscretizeAll).unwrap());
            let rows: Vec<Vec<Value>> = rows.into_iter()
                .map(|(a, b, c)| vec![Value::Cat(a), Value::Cat(b), Value::Cat(c)]).collect();
            let pool = AgentPool::new(schema, rows, Provenance::Generated).unwrap();
            let m = one_hot_encode(&pool).unwrap();
            for r in m.iter_rows() {
                prop_assert_eq!(r[0..5].iter().sum::<f64>(), 1.0);
                prop_assert_eq!(r[5..7].iter().sum::<f64>(), 1.0);
                prop_assert_eq!(r[7..10].iter().sum::<f64>(), 1.0);
            }
            let back = m.layout.decode_rows(&m).unwrap();
            prop_assert_eq!(back.rows, pool.rows);
        }
    }
}
