use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariableKind {
    NumericalInt,
    NumericalCont,
    Categorical,
    Binary,
}

impl VariableKind {
    pub fn is_numerical(self) -> bool {
        matches!(self, VariableKind::NumericalInt | VariableKind::NumericalCont)
    }
}

/// How numerical variables enter the encoded matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingMode {
    /// Numericals are replaced by their bin index and one-hot encoded.
    #[default]
    DiscretizeAll,
    /// Numericals stay continuous (standardized); categoricals are one-hot.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bin_edges: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl VariableSpec {
    pub fn categorical<S: Into<String>>(name: S, categories: Vec<String>) -> Result<Self> {
        let kind = if categories.len() == 2 {
            VariableKind::Binary
        } else {
            VariableKind::Categorical
        };
        let spec = VariableSpec {
            name: name.into(),
            kind,
            bin_edges: Vec::new(),
            categories,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn numerical<S: Into<String>>(name: S, kind: VariableKind, bin_edges: Vec<f64>) -> Result<Self> {
        let spec = VariableSpec {
            name: name.into(),
            kind,
            bin_edges,
            categories: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchema(format!("variable `{}`: {msg}", self.name)));
        if self.kind.is_numerical() {
            if self.bin_edges.len() < 3 {
                return bad("numerical variables need at least two bins".into());
            }
            if self.bin_edges.iter().any(|e| !e.is_finite()) {
                return bad("bin edges must be finite".into());
            }
            if self.bin_edges.windows(2).any(|w| w[0] >= w[1]) {
                return bad("bin edges must be strictly ascending".into());
            }
        } else {
            if self.categories.len() < 2 {
                return bad("categorical variables need at least two categories".into());
            }
            if self.kind == VariableKind::Binary && self.categories.len() != 2 {
                return bad("binary variables need exactly two categories".into());
            }
            let mut seen = std::collections::HashSet::new();
            for c in &self.categories {
                if !seen.insert(c.as_str()) {
                    return bad(format!("duplicate category `{c}`"));
                }
            }
        }
        Ok(())
    }

    /// Number of discrete levels: categories, or bins for a numerical variable.
    pub fn levels(&self) -> usize {
        if self.kind.is_numerical() {
            self.bin_edges.len() - 1
        } else {
            self.categories.len()
        }
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    pub fn lower_edge(&self) -> f64 {
        self.bin_edges[0]
    }

    pub fn upper_edge(&self) -> f64 {
        self.bin_edges[self.bin_edges.len() - 1]
    }

    /// Human-readable label of level `level` (category name or bin interval).
    pub fn level_label(&self, level: usize) -> String {
        if self.kind.is_numerical() {
            let last = level + 2 == self.bin_edges.len();
            format!(
                "[{},{}{}",
                self.bin_edges[level],
                self.bin_edges[level + 1],
                if last { "]" } else { ")" }
            )
        } else {
            self.categories[level].clone()
        }
    }
}

/// Maps `value` to the bin `i` with `edges[i] <= value < edges[i + 1]`; the last bin
/// is closed on the right.
pub fn discretize(value: f64, spec: &VariableSpec) -> Result<usize> {
    let edges = &spec.bin_edges;
    if !spec.kind.is_numerical() || edges.len() < 2 {
        return Err(Error::SchemaMismatch(format!(
            "variable `{}` has no bin edges",
            spec.name
        )));
    }
    let out = || Error::OutOfRange {
        variable: spec.name.clone(),
        value,
    };
    if !value.is_finite() || value < edges[0] || value > edges[edges.len() - 1] {
        return Err(out());
    }
    // number of interior edges <= value
    let bins = edges.len() - 1;
    let idx = edges[1..bins].partition_point(|&e| e <= value);
    Ok(idx)
}

/// `k + 1` equally spaced edges spanning the column's range.
pub fn build_uniform_edges(column: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidSchema(format!("need at least 2 bins, got {k}")));
    }
    if column.is_empty() {
        return Err(Error::InsufficientData("empty column".into()));
    }
    let (lo, hi) = column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidSchema("non-finite value in column".into()));
    }
    if lo == hi {
        return Err(Error::DegenerateColumn(format!("constant value {lo}")));
    }
    let width = hi - lo;
    let mut edges: Vec<f64> = (0..=k).map(|i| lo + width * (i as f64) / (k as f64)).collect();
    edges[k] = hi;
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub mode: EncodingMode,
}

impl Schema {
    pub fn new(variables: Vec<VariableSpec>, mode: EncodingMode) -> Result<Self> {
        let schema = Schema { variables, mode };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variables.is_empty() {
            return Err(Error::InvalidSchema("schema has no variables".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for v in &self.variables {
            v.validate()?;
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate variable `{}`", v.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Discrete level counts of every variable.
    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(VariableSpec::levels).collect()
    }

    /// Whether variable `i` is one-hot encoded under the schema's mode.
    pub fn is_one_hot(&self, i: usize) -> bool {
        !(self.mode == EncodingMode::Mixed && self.variables[i].kind.is_numerical())
    }

    /// Width of the encoded matrix: one-hot widths plus one column per continuous numeric.
    pub fn encoded_width(&self) -> usize {
        (0..self.len())
            .map(|i| if self.is_one_hot(i) { self.variables[i].levels() } else { 1 })
            .sum()
    }

    pub fn is_fully_categorical(&self) -> bool {
        self.variables.iter().all(|v| !v.kind.is_numerical())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Schema document as written by users: numerical variables may give either explicit
/// `bin_edges` or a bin count `bins`, resolved to equal-width bins over the observed range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaDoc {
    #[serde(default)]
    pub mode: EncodingMode,
    pub variables: Vec<VariableDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableDoc {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl SchemaDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn needs_data(&self) -> bool {
        self.variables
            .iter()
            .any(|v| v.kind.is_numerical() && v.bin_edges.is_none())
    }

    /// Resolves bin counts into edges. `column(i)` must return the raw numeric
    /// column of variable `i` when requested.
    pub fn resolve<F>(&self, mut column: F) -> Result<Schema>
    where
        F: FnMut(usize) -> Result<Vec<f64>>,
    {
        let mut vars = Vec::with_capacity(self.variables.len());
        for (i, v) in self.variables.iter().enumerate() {
            let spec = if v.kind.is_numerical() {
                let edges = match (&v.bin_edges, v.bins) {
                    (Some(e), _) => e.clone(),
                    (None, Some(k)) => {
                        let col = column(i)?;
                        build_uniform_edges(&col, k).map_err(|e| match e {
                            Error::DegenerateColumn(msg) => {
                                Error::DegenerateColumn(format!("{}: {msg}", v.name))
                            }
                            other => other,
                        })?
                    }
                    (None, None) => {
                        return Err(Error::InvalidSchema(format!(
                            "numerical variable `{}` needs `bin_edges` or `bins`",
                            v.name
                        )))
                    }
                };
                VariableSpec::numerical(v.name.clone(), v.kind, edges)?
            } else {
                let cats = v.categories.clone().ok_or_else(|| {
                    Error::InvalidSchema(format!("categorical variable `{}` needs `categories`", v.name))
                })?;
                let spec = VariableSpec {
                    name: v.name.clone(),
                    kind: v.kind,
                    bin_edges: Vec::new(),
                    categories: cats,
                };
                spec.validate()?;
                spec
            };
            vars.push(spec);
        }
        Schema::new(vars, self.mode)
    }
}

impl From<&Schema> for SchemaDoc {
    fn from(s: &Schema) -> Self {
        SchemaDoc {
            mode: s.mode,
            variables: s
                .variables
                .iter()
                .map(|v| VariableDoc {
                    name: v.name.clone(),
                    kind: v.kind,
                    bin_edges: v.kind.is_numerical().then(|| v.bin_edges.clone()),
                    bins: None,
                    categories: (!v.kind.is_numerical()).then(|| v.categories.clone()),
                })
                .collect(),
        }
    }
}
