use serde::{Deserialize, Serialize};

use crate::dataset::EncodedMatrix;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Mean and standard deviation of nearest-training-row distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityStats {
    pub mu_ns: f64,
    pub sigma_ns: f64,
}

/// Distance from each generated row to its nearest training row, as the RMSE
/// over encoded columns. Exact scan.
pub fn nearest_sample_distances(generated: &EncodedMatrix, train: &EncodedMatrix, exec: Exec) -> Result<Vec<f64>> {
    if train.rows == 0 {
        return Err(Error::InsufficientData("empty training pool for nearest-sample search".into()));
    }
    if generated.cols != train.cols {
        return Err(Error::SchemaMismatch("generated and training encodings differ in width".into()));
    }
    let n = train.cols.max(1) as f64;
    Ok(par::map_range(exec, generated.rows, |g| {
        let x = generated.row(g);
        let mut best = f64::INFINITY;
        for t in train.iter_rows() {
            let mut d = 0.0;
            for (a, b) in x.iter().zip(t) {
                d += (a - b) * (a - b);
                if d >= best {
                    break;
                }
            }
            if d < best {
                best = d;
                if best == 0.0 {
                    break;
                }
            }
        }
        (best / n).sqrt()
    }))
}

pub fn nearest_sample_stats(generated: &EncodedMatrix, train: &EncodedMatrix, exec: Exec) -> Result<DiversityStats> {
    let d = nearest_sample_distances(generated, train, exec)?;
    if d.is_empty() {
        return Ok(DiversityStats {
            mu_ns: 0.0,
            sigma_ns: 0.0,
        });
    }
    let m = d.len() as f64;
    let mu = d.iter().sum::<f64>() / m;
    let var = d.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / m;
    Ok(DiversityStats {
        mu_ns: mu,
        sigma_ns: var.sqrt(),
    })
}
