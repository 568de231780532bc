use serde::{Deserialize, Serialize};

use crate::dataset::{AgentPool, CodedData};
use crate::error::{Error, Result};

/// Relative frequencies over the full product bin space of a variable subset.
/// Bins are indexed in mixed radix with the first subset variable most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyDistribution {
    pub subset: Vec<usize>,
    pub cards: Vec<usize>,
    pub freqs: Vec<f64>,
}

impl FrequencyDistribution {
    pub fn n_bins(&self) -> usize {
        self.freqs.len()
    }

    pub fn bin_index(&self, levels: &[usize]) -> usize {
        levels.iter().zip(&self.cards).fold(0, |acc, (l, c)| acc * c + l)
    }

    pub fn get(&self, levels: &[usize]) -> f64 {
        self.freqs[self.bin_index(levels)]
    }
}

pub fn frequency_distribution(pool: &AgentPool, subset: &[usize]) -> Result<FrequencyDistribution> {
    frequency_distribution_coded(&pool.codes()?, subset)
}

pub fn frequency_distribution_coded(data: &CodedData, subset: &[usize]) -> Result<FrequencyDistribution> {
    if subset.is_empty() {
        return Err(Error::Config("empty variable subset".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= data.n_vars()) {
        return Err(Error::Config(format!("variable index {bad} out of range")));
    }
    if data.n_rows() == 0 {
        return Err(Error::InsufficientData("cannot tabulate an empty pool".into()));
    }
    let cards: Vec<usize> = subset.iter().map(|&i| data.cards[i]).collect();
    let n_bins: usize = cards.iter().product();
    let mut counts = vec![0usize; n_bins];
    for row in &data.rows {
        let idx = subset.iter().zip(&cards).fold(0, |acc, (&v, &c)| acc * c + row[v]);
        counts[idx] += 1;
    }
    let n = data.n_rows() as f64;
    Ok(FrequencyDistribution {
        subset: subset.to_vec(),
        cards,
        freqs: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

fn check_comparable(a: &FrequencyDistribution, b: &FrequencyDistribution) -> Result<()> {
    if a.subset != b.subset || a.cards != b.cards {
        return Err(Error::Incomparable(format!(
            "subsets {:?}/{:?} with bins {:?}/{:?}",
            a.subset, b.subset, a.cards, b.cards
        )));
    }
    Ok(())
}

/// RMSE over all bins divided by the reference's mean bin frequency.
pub fn srmse(estimate: &FrequencyDistribution, reference: &FrequencyDistribution) -> Result<f64> {
    check_comparable(estimate, reference)?;
    srmse_vectors(&estimate.freqs, &reference.freqs)
}

/// [`srmse`] on raw equally-long vectors (e.g. bins concatenated across subsets).
pub fn srmse_vectors(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() || reference.is_empty() {
        return Err(Error::Incomparable(format!(
            "vectors of length {} and {}",
            estimate.len(),
            reference.len()
        )));
    }
    let nb = reference.len() as f64;
    let sq: f64 = estimate.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    let total: f64 = reference.iter().sum();
    if total <= 0.0 {
        return Err(Error::Incomparable("reference has zero total frequency".into()));
    }
    Ok((sq / nb).sqrt() * nb / total)
}

/// Pearson correlation and coefficient of determination between bin vectors.
/// Either is `None` when its denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrR2 {
    pub corr: Option<f64>,
    pub r2: Option<f64>,
}

pub fn corr_r2(estimate: &FrequencyDistribution, reference: &FrequencyDistribution) -> Result<CorrR2> {
    check_comparable(estimate, reference)?;
    corr_r2_vectors(&estimate.freqs, &reference.freqs)
}

pub fn corr_r2_vectors(estimate: &[f64], reference: &[f64]) -> Result<CorrR2> {
    if estimate.len() != reference.len() || reference.is_empty() {
        return Err(Error::Incomparable("vector lengths differ".into()));
    }
    let n = reference.len() as f64;
    let me = estimate.iter().sum::<f64>() / n;
    let mr = reference.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy, mut ss_res) = (0.0, 0.0, 0.0, 0.0);
    for (e, r) in estimate.iter().zip(reference) {
        let (de, dr) = (e - me, r - mr);
        sxy += de * dr;
        sxx += de * de;
        syy += dr * dr;
        ss_res += (r - e) * (r - e);
    }
    let corr = (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx.sqrt() * syy.sqrt()));
    let r2 = (syy > 0.0).then(|| 1.0 - ss_res / syy);
    Ok(CorrR2 { corr, r2 })
}
