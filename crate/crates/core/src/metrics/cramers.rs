use crate::dataset::CodedData;
use crate::error::{Error, Result};

/// Cramér's V of variables `i` and `j`, without bias correction.
///
/// Levels that never occur are dropped from the contingency table; `None` when either
/// variable takes a single observed value.
pub fn cramers_v(data: &CodedData, i: usize, j: usize) -> Result<Option<f64>> {
    if i >= data.n_vars() || j >= data.n_vars() {
        return Err(Error::Config("variable index out of range".into()));
    }
    if data.n_rows() == 0 {
        return Err(Error::InsufficientData("empty pool".into()));
    }
    let (ci, cj) = (data.cards[i], data.cards[j]);
    let mut table = vec![0usize; ci * cj];
    for row in &data.rows {
        table[row[i] * cj + row[j]] += 1;
    }
    Ok(cramers_v_table(&table, ci, cj))
}

/// Cramér's V from a row-major `rows × cols` contingency table.
pub fn cramers_v_table(table: &[usize], rows: usize, cols: usize) -> Option<f64> {
    let row_sums: Vec<usize> = (0..rows).map(|r| table[r * cols..(r + 1) * cols].iter().sum()).collect();
    let col_sums: Vec<usize> = (0..cols).map(|c| (0..rows).map(|r| table[r * cols + c]).sum()).collect();
    let n: usize = row_sums.iter().sum();
    let r_obs = row_sums.iter().filter(|&&s| s > 0).count();
    let c_obs = col_sums.iter().filter(|&&s| s > 0).count();
    if n == 0 || r_obs < 2 || c_obs < 2 {
        return None;
    }
    let n_f = n as f64;
    let mut chi2 = 0.0;
    for r in 0..rows {
        if row_sums[r] == 0 {
            continue;
        }
        for c in 0..cols {
            if col_sums[c] == 0 {
                continue;
            }
            let expected = row_sums[r] as f64 * col_sums[c] as f64 / n_f;
            let d = table[r * cols + c] as f64 - expected;
            chi2 += d * d / expected;
        }
    }
    let k = (r_obs.min(c_obs) - 1) as f64;
    Some((chi2 / (n_f * k)).sqrt().min(1.0))
}
