use std::io::Write;

use serde::{Deserialize, Serialize};

use super::cramers::cramers_v;
use super::diversity::{nearest_sample_stats, DiversityStats};
use super::freq::{corr_r2_vectors, frequency_distribution_coded, srmse_vectors};
use crate::dataset::{AgentPool, CodedData, EncodingLayout};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

pub const TRAINING_SET_ROW: &str = "Training set";

/// The distribution views compared between a pool and the test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Marginal,
    Bivariate,
    Trivariate,
    Projected,
}

impl View {
    pub const ALL: [View; 4] = [View::Marginal, View::Bivariate, View::Trivariate, View::Projected];

    pub fn label(self) -> &'static str {
        match self {
            View::Marginal => "marg",
            View::Bivariate => "bivar",
            View::Trivariate => "trivar",
            View::Projected => "basic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub srmse: f64,
    pub corr: Option<f64>,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub marginal: Option<ViewMetrics>,
    pub bivariate: Option<ViewMetrics>,
    pub trivariate: Option<ViewMetrics>,
    pub projected: Option<ViewMetrics>,
    pub pairwise_srmse: Option<f64>,
    pub diversity: Option<DiversityStats>,
}

impl MethodRow {
    pub fn view(&self, v: View) -> Option<&ViewMetrics> {
        match v {
            View::Marginal => self.marginal.as_ref(),
            View::Bivariate => self.bivariate.as_ref(),
            View::Trivariate => self.trivariate.as_ref(),
            View::Projected => self.projected.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub variables: Vec<String>,
    pub projection: Vec<String>,
    pub test_rows: usize,
    pub train_rows: usize,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<MethodRow>,
    pub metadata: ReportMetadata,
}

/// Test and method bin vectors of one view, kept for scatter plots.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSeries {
    pub view: String,
    pub method: String,
    pub test: Vec<f64>,
    pub generated: Vec<f64>,
}

pub struct EvalInput<'a> {
    pub test: &'a AgentPool,
    pub train: &'a AgentPool,
    /// `(name, pool)` for every generated population, in report order.
    pub methods: Vec<(String, &'a AgentPool)>,
    pub projection: Vec<usize>,
    /// Encoded space for nearest-sample distances.
    pub layout: &'a EncodingLayout,
    pub exec: Exec,
}

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

/// Bins of every subset's distribution concatenated in subset order.
pub fn concatenated_bins(data: &CodedData, subsets: &[Vec<usize>], exec: Exec) -> Result<Vec<f64>> {
    let parts = par::map_slice(exec, subsets, |s| frequency_distribution_coded(data, s));
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?.freqs);
    }
    Ok(out)
}

fn pairwise_v(data: &CodedData, pairs: &[Vec<usize>], exec: Exec) -> Result<Vec<Option<f64>>> {
    par::map_slice(exec, pairs, |p| cramers_v(data, p[0], p[1]))
        .into_iter()
        .collect()
}

fn view_metrics(est: &[f64], reference: &[f64]) -> Result<ViewMetrics> {
    let c = corr_r2_vectors(est, reference)?;
    Ok(ViewMetrics {
        srmse: srmse_vectors(est, reference)?,
        corr: c.corr,
        r2: c.r2,
    })
}

/// SRMSE between pairwise Cramér's V vectors. Pairs undefined in the test set are
/// skipped; pairs undefined in the generated pool count as zero association.
fn pairwise_srmse(est: &[Option<f64>], reference: &[Option<f64>]) -> Option<f64> {
    let (e, r): (Vec<f64>, Vec<f64>) = est
        .iter()
        .zip(reference)
        .filter_map(|(e, r)| r.map(|r| (e.unwrap_or(0.0), r)))
        .unzip();
    if r.is_empty() {
        return None;
    }
    srmse_vectors(&e, &r).ok()
}

/// Scores every generated pool, plus the training set itself, against the test set.
pub fn evaluate(input: &EvalInput<'_>) -> Result<(EvalReport, Vec<ScatterSeries>)> {
    let schema = &input.test.schema;
    for (name, p) in &input.methods {
        if p.schema != *schema {
            return Err(Error::SchemaMismatch(format!("pool `{name}` uses a different schema")));
        }
    }
    if input.train.schema != *schema {
        return Err(Error::SchemaMismatch("training pool uses a different schema".into()));
    }
    let n = schema.len();
    if input.projection.is_empty() || input.projection.iter().any(|&i| i >= n) {
        return Err(Error::Config("projection subset out of range".into()));
    }
    let exec = input.exec;
    let view_subsets = [subsets(n, 1), subsets(n, 2), subsets(n, 3), vec![input.projection.clone()]];
    let pairs = &view_subsets[1];

    let test_codes = input.test.codes()?;
    let test_views = view_subsets
        .iter()
        .map(|s| if s.is_empty() { Ok(Vec::new()) } else { concatenated_bins(&test_codes, s, exec) })
        .collect::<Result<Vec<_>>>()?;
    let test_v = pairwise_v(&test_codes, pairs, exec)?;

    let train_enc = input.layout.encode(input.train)?;
    let test_enc = input.layout.encode(input.test)?;

    let mut entries: Vec<(String, &AgentPool)> = vec![(TRAINING_SET_ROW.to_string(), input.train)];
    entries.extend(input.methods.iter().cloned());

    let mut rows = Vec::with_capacity(entries.len());
    let mut scatter = Vec::new();
    for (idx, (name, pool)) in entries.iter().enumerate() {
        if pool.is_empty() {
            return Err(Error::InsufficientData(format!("pool `{name}` is empty")));
        }
        let codes = pool.codes()?;
        let mut metrics: [Option<ViewMetrics>; 4] = [None; 4];
        for (v, subs) in view_subsets.iter().enumerate() {
            if subs.is_empty() {
                continue;
            }
            let bins = concatenated_bins(&codes, subs, exec)?;
            metrics[v] = Some(view_metrics(&bins, &test_views[v])?);
            scatter.push(ScatterSeries {
                view: View::ALL[v].label().to_string(),
                method: name.clone(),
                test: test_views[v].clone(),
                generated: bins,
            });
        }
        let v = pairwise_v(&codes, pairs, exec)?;
        scatter.push(ScatterSeries {
            view: "pair".into(),
            method: name.clone(),
            test: test_v.iter().map(|x| x.unwrap_or(0.0)).collect(),
            generated: v.iter().map(|x| x.unwrap_or(0.0)).collect(),
        });
        // the training set's diversity is measured against the test set
        let diversity = if idx == 0 {
            nearest_sample_stats(&train_enc, &test_enc, exec)?
        } else {
            nearest_sample_stats(&input.layout.encode(pool)?, &train_enc, exec)?
        };
        let [marginal, bivariate, trivariate, projected] = metrics;
        rows.push(MethodRow {
            method: name.clone(),
            marginal,
            bivariate,
            trivariate,
            projected,
            pairwise_srmse: pairwise_srmse(&v, &test_v),
            diversity: Some(diversity),
        });
    }

    let names = |idx: &[usize]| idx.iter().map(|&i| schema.variables[i].name.clone()).collect();
    let report = EvalReport {
        rows,
        metadata: ReportMetadata {
            variables: names(&(0..n).collect::<Vec<_>>()),
            projection: names(&input.projection),
            test_rows: input.test.len(),
            train_rows: input.train.len(),
            extra: serde_json::Map::new(),
        },
    };
    Ok((report, scatter))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

impl EvalReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn csv_header() -> Vec<String> {
        let mut h = vec!["method".to_string()];
        for v in View::ALL {
            for m in ["srmse", "corr", "r2"] {
                h.push(format!("{}_{m}", v.label()));
            }
        }
        h.extend(["pair_srmse", "mu_ns", "sigma_ns"].map(String::from));
        h
    }

    /// Flat table: one line per method, Table-style column order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::csv_header())?;
        for r in &self.rows {
            let mut rec = vec![r.method.clone()];
            for v in View::ALL {
                let m = r.view(v);
                rec.push(fmt_opt(m.map(|m| m.srmse)));
                rec.push(fmt_opt(m.and_then(|m| m.corr)));
                rec.push(fmt_opt(m.and_then(|m| m.r2)));
            }
            rec.push(fmt_opt(r.pairwise_srmse));
            rec.push(fmt_opt(r.diversity.map(|d| d.mu_ns)));
            rec.push(fmt_opt(r.diversity.map(|d| d.sigma_ns)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Compact SRMSE table for terminals.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<24} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "Model", "Marg.", "Bivar.", "Trivar.", "Basic", "Pair.", "mu_NS", "sigma_NS"
        );
        let cell = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            s.push_str(&format!(
                "{:<24} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
                r.method,
                cell(r.marginal.map(|m| m.srmse)),
                cell(r.bivariate.map(|m| m.srmse)),
                cell(r.trivariate.map(|m| m.srmse)),
                cell(r.projected.map(|m| m.srmse)),
                cell(r.pairwise_srmse),
                cell(r.diversity.map(|d| d.mu_ns)),
                cell(r.diversity.map(|d| d.sigma_ns)),
            ));
        }
        s
    }
}

/// Scatter CSV: `view, method, bin, test, generated`.
pub fn write_scatter<W: Write>(writer: W, series: &[ScatterSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["view", "method", "bin", "test", "generated"])?;
    for s in series {
        for (b, (t, g)) in s.test.iter().zip(&s.generated).enumerate() {
            w.write_record([s.view.clone(), s.method.clone(), b.to_string(), t.to_string(), g.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
