//! PEHE, the hard-error H-divergence probe and covariance diagnostics.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::data::TreatmentDataset;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::net::{
    augment, AdamConfig, LayerStack, OptimizerState, OutputActivation, Representation,
};
use crate::seed::Rng;

/// Mean squared difference between estimated and reference effects.
pub fn pehe(estimate: ArrayView1<f64>, tau_ref: ArrayView1<f64>) -> Result<f64> {
    crate::error::check_len("pehe reference", estimate.len(), tau_ref.len())?;
    if estimate.is_empty() {
        return Err(Error::Shape {
            context: "pehe rows",
            expected: 1,
            got: 0,
        });
    }
    Ok((&estimate - &tau_ref).mapv(|v| v * v).mean().unwrap())
}

/// [`pehe`] of a predictor evaluated on `x_test`.
pub fn pehe_hat<F>(predictor: F, x_test: ArrayView2<f64>, tau_ref: ArrayView1<f64>) -> Result<f64>
where
    F: Fn(ArrayView2<f64>) -> Result<Array1<f64>>,
{
    crate::error::check_len("pehe reference", x_test.nrows(), tau_ref.len())?;
    pehe(predictor(x_test)?.view(), tau_ref)
}

/// Mean and sample standard deviation (`ddof = 1`) of `√PEHE` over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct PeheReport {
    pub estimator: String,
    pub sqrt_pehe_mean: f64,
    pub sqrt_pehe_sd: f64,
    pub n_reps: usize,
    pub grid_point: BTreeMap<String, String>,
}

impl PeheReport {
    /// Aggregates finite values; `None` when none are finite. A single value has sd 0.
    pub fn from_values(
        estimator: &str,
        grid_point: BTreeMap<String, String>,
        values: &[f64],
    ) -> Option<Self> {
        let (mean, sd, n) = mean_sd(values)?;
        Some(PeheReport {
            estimator: estimator.to_owned(),
            sqrt_pehe_mean: mean,
            sqrt_pehe_sd: sd,
            n_reps: n,
            grid_point,
        })
    }
}

/// Mean, `ddof = 1` standard deviation and count of the finite entries.
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64, usize)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len();
    if n == 0 {
        return None;
    }
    let mean = finite.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some((mean, sd, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden: vec![16],
            epochs: 200,
            batch_size: 128,
            train_fraction: 0.7,
            adam: AdamConfig::default(),
        }
    }
}

pub const PROBE_MIN_ROWS: usize = 10;

/// `2·(1 − min(err_first + err_second, 1))`.
pub fn hard_divergence(err_first: f64, err_second: f64) -> f64 {
    2.0 * (1.0 - (err_first + err_second).min(1.0))
}

/// Hard-error divergence of a fixed classifier that answers `true` for rows
/// it assigns to the first sample.
pub fn h_div_with_classifier<C>(classify: C, first: ArrayView2<f64>, second: ArrayView2<f64>) -> f64
where
    C: Fn(ArrayView1<f64>) -> bool,
{
    let err_first =
        first.rows().into_iter().filter(|r| !classify(*r)).count() as f64 / first.nrows() as f64;
    let err_second =
        second.rows().into_iter().filter(|r| classify(*r)).count() as f64 / second.nrows() as f64;
    hard_divergence(err_first, err_second)
}

/// Trains a fresh classifier to separate `φ(first)` from `φ(second)` on a
/// train split (with a constant-1 input feature) and reports the hard-error divergence on the held-out split.
pub fn h_div_probe(
    phi: &Representation,
    first: ArrayView2<f64>,
    second: ArrayView2<f64>,
    cfg: &ProbeConfig,
    rng: &mut Rng,
) -> Result<f64> {
    for (name, x) in [("first", first), ("second", second)] {
        if x.nrows() < PROBE_MIN_ROWS {
            return Err(Error::Probe(format!(
                "{name} sample has {} rows; at least {PROBE_MIN_ROWS} required",
                x.nrows()
            )));
        }
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) || cfg.batch_size == 0 {
        return Err(Error::Config(
            "probe needs a train fraction in (0, 1) and a positive batch".into(),
        ));
    }
    let za = phi.apply(first)?;
    let zb = phi.apply(second)?;
    let (train_a, test_a) = split(&za, cfg.train_fraction, rng);
    let (train_b, test_b) = split(&zb, cfg.train_fraction, rng);

    let mut dims = vec![za.ncols() + 1];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(1);
    let mut clf = LayerStack::init(&dims, OutputActivation::Sigmoid, rng)?;
    let mut opt = OptimizerState::new(cfg.adam, clf.weights());
    let half = cfg.batch_size.div_ceil(2);
    let mut order_a: Vec<usize> = (0..train_a.nrows()).collect();
    let mut order_b: Vec<usize> = (0..train_b.nrows()).collect();
    let batches = train_a.nrows().max(train_b.nrows()).div_ceil(half);
    for _ in 0..cfg.epochs {
        order_a.shuffle(rng);
        order_b.shuffle(rng);
        for k in 0..batches {
            let pick = |order: &[usize]| -> Vec<usize> {
                (k * half..(k + 1) * half)
                    .map(|i| order[i % order.len()])
                    .collect()
            };
            let xa = train_a.select(Axis(0), &pick(&order_a));
            let xb = train_b.select(Axis(0), &pick(&order_b));
            let step = crate::train::adversary_step(&clf, xa.view(), xb.view())?;
            opt.step(&step.grads, clf.weights_mut())?;
        }
    }
    let pa = clf.forward_batch(augment(test_a.view()).view())?;
    let pb = clf.forward_batch(augment(test_b.view()).view())?;
    let err_a = pa.iter().filter(|&&p| p < 0.5).count() as f64 / pa.len() as f64;
    let err_b = pb.iter().filter(|&&p| p >= 0.5).count() as f64 / pb.len() as f64;
    Ok(hard_divergence(err_a, err_b))
}

fn split(z: &Array2<f64>, fraction: f64, rng: &mut Rng) -> (Array2<f64>, Array2<f64>) {
    let mut idx: Vec<usize> = (0..z.nrows()).collect();
    idx.shuffle(rng);
    let cut = ((z.nrows() as f64 * fraction).round() as usize).clamp(1, z.nrows() - 1);
    (
        z.select(Axis(0), &idx[..cut]),
        z.select(Axis(0), &idx[cut..]),
    )
}

/// Smallest eigenvalue of `(1/n) φ(X_t)ᵀ φ(X_t)`, where `X_t` are the
/// randomized rows of arm `t` and `n` is the full randomized sample size.
pub fn min_eig_diagnostic(phi: &Representation, rand: &TreatmentDataset, arm: u8) -> Result<f64> {
    let rows = rand.arm_rows(arm);
    if rows.is_empty() {
        return Err(Error::Fit(format!(
            "randomized data has no samples in arm t={arm}"
        )));
    }
    let z = phi.apply(rand.x().select(Axis(0), &rows).view())?;
    let cov = z.t().dot(&z) / rand.n() as f64;
    Ok(symmetric_eigen(cov.view())?.values[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub h_div: f64,
    /// Indexed by arm.
    pub min_eig_by_arm: [f64; 2],
    pub max_weight_norm: f64,
}

/// Diagnostics of a fitted representation on a combined dataset. The probe
/// compares randomized against observational covariates.
pub fn diagnostics(
    phi: &Representation,
    obs_x: ArrayView2<f64>,
    rand: &TreatmentDataset,
    cfg: &ProbeConfig,
    rng: &mut Rng,
) -> Result<DiagnosticsRecord> {
    Ok(DiagnosticsRecord {
        h_div: h_div_probe(phi, rand.x(), obs_x, cfg, rng)?,
        min_eig_by_arm: [
            min_eig_diagnostic(phi, rand, 0)?,
            min_eig_diagnostic(phi, rand, 1)?,
        ],
        max_weight_norm: phi.net().max_weight_norm(),
    })
}
