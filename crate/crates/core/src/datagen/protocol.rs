//! Turning an unconfounded dataset into a confounded observational set and a
//! small, covariate-shifted randomized set.

use ndarray::Array1;
use rand::seq::index;

use crate::data::{CombinedData, TreatmentDataset};
use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone)]
pub struct ConfoundedSplit {
    pub data: CombinedData,
    /// Source rows of the observational set, in output order.
    pub obs_rows: Vec<usize>,
    /// Source rows of the randomized set, in output order.
    pub rand_rows: Vec<usize>,
}

/// Samples `rand_size` rows with inclusion weight `logistic(2·z)`, where `z`
/// is the standardized `select_col`, then applies [`confounding_filter`] to
/// the remaining rows.
pub fn confound_split(
    data: &TreatmentDataset,
    select_col: usize,
    rand_size: usize,
    c: f64,
    rng: &mut Rng,
) -> Result<ConfoundedSplit> {
    if select_col >= data.d() {
        return Err(Error::Config(format!(
            "select column {select_col} out of range for d = {}",
            data.d()
        )));
    }
    if rand_size > data.n() {
        return Err(Error::Config(format!(
            "rand_size {rand_size} exceeds dataset size {}",
            data.n()
        )));
    }
    if !c.is_finite() {
        return Err(Error::Config("c must be finite".into()));
    }
    data.require_both_arms(1, "source data")?;

    let weights = selection_weights(&data.x().column(select_col).to_owned());
    let mut rand_rows = index::sample_weighted(rng, data.n(), |i| weights[i], rand_size)
        .map_err(|e| Error::Protocol(format!("randomized selection failed: {e}")))?
        .into_vec();
    rand_rows.sort_unstable();

    let mut in_rand = vec![false; data.n()];
    for &i in &rand_rows {
        in_rand[i] = true;
    }
    let remainder: Vec<usize> = (0..data.n()).filter(|&i| !in_rand[i]).collect();
    let obs_rows = confounding_filter(data, &remainder, c)?;

    let combined = CombinedData::new(data.select(&obs_rows), data.select(&rand_rows))
        .map_err(|e| Error::Protocol(format!("randomized set unusable: {e}")))?;
    Ok(ConfoundedSplit {
        data: combined,
        obs_rows,
        rand_rows,
    })
}

/// Keeps candidate controls with `y < mean_0 − c·sd_0` and candidate treated
/// units with `y > mean_1 + c·sd_1`. Arm means and sample standard deviations
/// are taken over the whole dataset.
pub fn confounding_filter(
    data: &TreatmentDataset,
    candidates: &[usize],
    c: f64,
) -> Result<Vec<usize>> {
    let y = data.y();
    let t = data.t();
    let mut cut = [0.0; 2];
    for arm in [0u8, 1u8] {
        let values: Vec<f64> = (0..data.n())
            .filter(|&i| t[i] == arm)
            .map(|i| y[i])
            .collect();
        let (mean, sd) = mean_sd(&values);
        cut[usize::from(arm)] = if arm == 0 {
            mean - c * sd
        } else {
            mean + c * sd
        };
    }
    let kept: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| match t[i] {
            0 => y[i] < cut[0],
            _ => y[i] > cut[1],
        })
        .collect();
    for arm in [0u8, 1u8] {
        if !kept.iter().any(|&i| t[i] == arm) {
            return Err(Error::Protocol(format!(
                "observational arm t={arm} is empty after filtering with c = {c}; try a smaller c"
            )));
        }
    }
    Ok(kept)
}

fn selection_weights(col: &Array1<f64>) -> Vec<f64> {
    let (mean, sd) = mean_sd(col.as_slice().unwrap_or(&col.to_vec()));
    col.iter()
        .map(|&v| {
            let z = if sd > 0.0 { (v - mean) / sd } else { 0.0 };
            1.0 / (1.0 + (-2.0 * z).exp())
        })
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}
