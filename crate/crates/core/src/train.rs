//! Minibatch training of a shared representation with one linear head per
//! treatment arm, optionally with an adversarial balancing term.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::net::{
    augment, AdamConfig, GradientSet, LayerStack, OptimizerState, OutputActivation, Representation,
};
use crate::seed::Rng;

/// Training loss above which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub d_phi: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Lower bound on optimizer steps, so that small datasets are not undertrained.
    pub min_steps: usize,
    pub adam: AdamConfig,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: vec![32, 32],
            d_phi: 8,
            epochs: 100,
            batch_size: 256,
            min_steps: 1000,
            adam: AdamConfig::default(),
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_phi == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.adam.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be nonnegative".into()));
        }
        Ok(())
    }

    /// Epochs actually run for `n` rows: `epochs`, raised until `min_steps` is met.
    pub fn effective_epochs(&self, n: usize) -> usize {
        let per_epoch = n.div_ceil(self.batch_size).max(1);
        self.epochs.max(self.min_steps.div_ceil(per_epoch))
    }
}

/// Shared representation with per-arm linear heads.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoHeadModel {
    pub phi: Representation,
    /// `heads[t]` is the head of arm `t`.
    pub heads: [Array1<f64>; 2],
}

impl TwoHeadModel {
    pub fn predict_outcome(&self, x: ArrayView2<f64>, arm: u8) -> Result<Array1<f64>> {
        Ok(self.phi.apply(x)?.dot(&self.heads[usize::from(arm)]))
    }

    /// Fitted outcome for each row under its own treatment.
    pub fn predict_factual(&self, x: ArrayView2<f64>, t: &[u8]) -> Result<Array1<f64>> {
        crate::error::check_len("factual prediction treatment", x.nrows(), t.len())?;
        let z = self.phi.apply(x)?;
        Ok(Array1::from_iter(
            z.rows()
                .into_iter()
                .zip(t)
                .map(|(row, &arm)| row.dot(&self.heads[usize::from(arm)])),
        ))
    }

    pub fn predict_cate(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.phi.apply(x)?.dot(&(&self.heads[1] - &self.heads[0])))
    }

    /// Weighted squared loss `Σ wᵢ(ŷᵢ − yᵢ)² / normalizer`.
    pub fn weighted_loss(&self, sample: &Sample) -> Result<f64> {
        let pred = self.predict_factual(sample.x, sample.t)?;
        Ok(pred
            .iter()
            .zip(sample.y.iter())
            .enumerate()
            .map(|(i, (p, y))| sample.weight(i) * (p - y).powi(2))
            .sum::<f64>()
            / sample.normalizer)
    }
}

/// Rows to fit, with optional per-row weights and the risk normalizer.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub x: ArrayView2<'a, f64>,
    pub t: &'a [u8],
    pub y: ArrayView1<'a, f64>,
    pub weights: Option<Vec<f64>>,
    pub normalizer: f64,
}

impl<'a> Sample<'a> {
    /// Unweighted rows with the usual `1/n` normalization.
    pub fn plain(x: ArrayView2<'a, f64>, t: &'a [u8], y: ArrayView1<'a, f64>) -> Self {
        Sample {
            x,
            t,
            y,
            weights: None,
            normalizer: x.nrows() as f64,
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    fn validate(&self) -> Result<()> {
        crate::error::check_len("training treatment", self.n(), self.t.len())?;
        crate::error::check_len("training outcome", self.n(), self.y.len())?;
        if let Some(w) = &self.weights {
            crate::error::check_len("training weights", self.n(), w.len())?;
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Config(
                    "sample weights must be finite and nonnegative".into(),
                ));
            }
        }
        if !(self.normalizer > 0.0) {
            return Err(Error::Config("risk normalizer must be positive".into()));
        }
        for arm in [1u8, 0u8] {
            let count = (0..self.n())
                .filter(|&i| self.t[i] == arm && self.weight(i) > 0.0)
                .count();
            if count < 2 {
                return Err(Error::Fit(format!(
                    "{count} weighted samples in arm t={arm}; at least 2 required"
                )));
            }
        }
        Ok(())
    }
}

/// Adversarial balancing between interpolated and observational representations.
pub struct Adversarial<'a> {
    pub lambda_d: f64,
    /// Draws the interpolated covariates for one epoch.
    pub interpolate: Box<dyn FnMut(&mut Rng) -> Result<Array2<f64>> + 'a>,
    pub adversary_hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Full-data weighted squared loss at the end of the epoch.
    pub prediction_loss: f64,
    /// Epoch-average hard-error divergence estimate from the adversary; 0 when untrained.
    pub divergence: f64,
    /// Epoch-average adversary cross-entropy; 0 when untrained.
    pub adversary_loss: f64,
    /// `prediction_loss + lambda_d · divergence`.
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub steps: u64,
    /// Share of the risk carried by observational data, for weighted fits.
    pub effective_lambda: Option<f64>,
}

impl TrainingLog {
    pub fn final_objective(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.objective)
    }
}

#[derive(Debug, Clone)]
pub struct TwoHeadFit {
    pub model: TwoHeadModel,
    pub adversary: Option<LayerStack>,
    pub log: TrainingLog,
}

/// Initial network, heads and adversary for `d` covariates.
pub fn init_two_head(d: usize, cfg: &NetConfig, rng: &mut Rng) -> Result<TwoHeadModel> {
    let mut dims = vec![d + 1];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(cfg.d_phi);
    let net = LayerStack::init(&dims, OutputActivation::Identity, rng)?;
    let head = LayerStack::init(&[cfg.d_phi, 2], OutputActivation::Identity, rng)?;
    let w = &head.weights()[0];
    Ok(TwoHeadModel {
        phi: Representation::new(net, true)?,
        heads: [w.row(0).to_owned(), w.row(1).to_owned()],
    })
}

/// Trains a [`TwoHeadModel`] on the weighted squared loss, plus
/// `lambda_d` times the adversarial divergence when `adversarial` is given
/// and `lambda_d > 0`.
pub fn fit_two_head(
    sample: &Sample,
    cfg: &NetConfig,
    mut adversarial: Option<Adversarial>,
    rng: &mut Rng,
) -> Result<TwoHeadFit> {
    cfg.validate()?;
    sample.validate()?;
    if sample
        .x
        .iter()
        .chain(sample.y.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numeric(
            "training data contain non-finite values".into(),
        ));
    }
    let n = sample.n();
    let mut model = init_two_head(sample.x.ncols(), cfg, rng)?;
    let lambda_d = adversarial.as_ref().map_or(0.0, |a| a.lambda_d);
    if !(lambda_d >= 0.0) {
        return Err(Error::Config("lambda_d must be nonnegative".into()));
    }
    if lambda_d == 0.0 {
        adversarial = None;
    }
    let mut adversary = match &adversarial {
        Some(a) => {
            let mut dims = vec![cfg.d_phi + 1];
            dims.extend_from_slice(&a.adversary_hidden);
            dims.push(1);
            Some(LayerStack::init(&dims, OutputActivation::Sigmoid, rng)?)
        }
        None => None,
    };

    let inputs = model.phi.prepare(sample.x)?;
    let weights: Array1<f64> = (0..n).map(|i| sample.weight(i)).collect();
    // batch losses are scaled so that their expectation is the full risk
    let mean_weight = sample.normalizer / n as f64;

    let mut heads = Array2::zeros((2, cfg.d_phi));
    heads.row_mut(0).assign(&model.heads[0]);
    heads.row_mut(1).assign(&model.heads[1]);
    let mut heads_slot = [heads];
    let mut phi_opt = OptimizerState::new(cfg.adam, model.phi.net().weights());
    let mut head_opt = OptimizerState::new(cfg.adam, &heads_slot);
    let mut adv_opt = adversary
        .as_ref()
        .map(|a| OptimizerState::new(cfg.adam, a.weights()));

    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainingLog::default();
    for epoch in 0..cfg.effective_epochs(n) {
        order.shuffle(rng);
        let interpolated = match adversarial.as_mut() {
            Some(a) => {
                let x_mix = (a.interpolate)(rng)?;
                if x_mix.nrows() == 0 {
                    return Err(Error::Augmentation("no interpolated samples".into()));
                }
                Some(model.phi.prepare(x_mix.view())?)
            }
            None => None,
        };
        let mut div_sum = 0.0;
        let mut adv_loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = inputs.select(Axis(0), chunk);
            let trace = model.phi.net().forward_trace(xb.view())?;
            let z = trace.output();
            let heads = &heads_slot[0];
            let bsz = chunk.len() as f64;

            let mut upstream = Array2::zeros(z.raw_dim());
            let mut head_grad = Array2::zeros(heads.raw_dim());
            for (r, &i) in chunk.iter().enumerate() {
                let arm = usize::from(sample.t[i]);
                let zr = z.row(r);
                let resid = zr.dot(&heads.row(arm)) - sample.y[i];
                let g = 2.0 * weights[i] * resid / (bsz * mean_weight);
                head_grad.row_mut(arm).scaled_add(g, &zr);
                upstream.row_mut(r).scaled_add(g, &heads.row(arm));
            }
            let mut phi_grads = model
                .phi
                .net()
                .backward_batch(&trace, upstream.view())?
                .grads;

            if let (Some(adv), Some(mix)) = (adversary.as_mut(), interpolated.as_ref()) {
                let m = mix.nrows();
                let rows: Vec<usize> = (0..chunk.len())
                    .map(|r| (b * cfg.batch_size + r) % m)
                    .collect();
                let xm = mix.select(Axis(0), &rows);
                let trace_mix = model.phi.net().forward_trace(xm.view())?;
                let step = adversary_step(adv, trace_mix.output().view(), z.view())?;
                div_sum += step.divergence;
                adv_loss_sum += step.loss;
                // gradient reversal: the representation ascends the adversary loss
                let rev_mix = step.input_grad_mix.mapv(|g| -lambda_d * g);
                let rev_obs = step.input_grad_obs.mapv(|g| -lambda_d * g);
                phi_grads.add_assign(
                    &model
                        .phi
                        .net()
                        .backward_batch(&trace_mix, rev_mix.view())?
                        .grads,
                );
                phi_grads.add_assign(
                    &model
                        .phi
                        .net()
                        .backward_batch(&trace, rev_obs.view())?
                        .grads,
                );
                adv_opt
                    .as_mut()
                    .expect("optimizer exists with adversary")
                    .step(&step.grads, adv.weights_mut())?;
            }

            phi_opt.step(&phi_grads, model.phi.net_mut().weights_mut())?;
            head_opt.step(&GradientSet(vec![head_grad]), &mut heads_slot)?;
            log.steps += 1;
            batches += 1;
        }
        model.heads = [
            heads_slot[0].row(0).to_owned(),
            heads_slot[0].row(1).to_owned(),
        ];
        let prediction_loss = model.weighted_loss(sample)?;
        if !prediction_loss.is_finite() || prediction_loss > DIVERGENCE_LIMIT {
            return Err(Error::Numeric(format!(
                "training diverged at epoch {epoch}: loss {prediction_loss}"
            )));
        }
        let (divergence, adversary_loss) = if adversary.is_some() {
            (div_sum / batches as f64, adv_loss_sum / batches as f64)
        } else {
            (0.0, 0.0)
        };
        log.epochs.push(EpochRecord {
            epoch,
            prediction_loss,
            divergence,
            adversary_loss,
            objective: prediction_loss + lambda_d * divergence,
        });
    }
    Ok(TwoHeadFit {
        model,
        adversary,
        log,
    })
}

pub(crate) struct AdversaryStep {
    pub(crate) grads: GradientSet,
    pub(crate) input_grad_mix: Array2<f64>,
    pub(crate) input_grad_obs: Array2<f64>,
    pub(crate) loss: f64,
    pub(crate) divergence: f64,
}

/// Cross-entropy gradients of an adversary labelling interpolated rows 1 and
/// observational rows 0, with each class weighted equally. The adversary sees
/// its inputs with a constant-1 feature appended.
pub(crate) fn adversary_step(
    adv: &LayerStack,
    z_mix: ArrayView2<f64>,
    z_obs: ArrayView2<f64>,
) -> Result<AdversaryStep> {
    let trace_mix = adv.forward_trace(augment(z_mix).view())?;
    let trace_obs = adv.forward_trace(augment(z_obs).view())?;
    let p_mix = trace_mix.output().column(0).to_owned();
    let p_obs = trace_obs.output().column(0).to_owned();
    let (n1, n0) = (p_mix.len() as f64, p_obs.len() as f64);
    let clip = |p: f64| p.clamp(1e-12, 1.0 - 1e-12);
    let loss = -p_mix.mapv(|p| clip(p).ln()).sum() / (2.0 * n1)
        - p_obs.mapv(|p| (1.0 - clip(p)).ln()).sum() / (2.0 * n0);
    let err_mix = p_mix.iter().filter(|&&p| p < 0.5).count() as f64 / n1;
    let err_obs = p_obs.iter().filter(|&&p| p >= 0.5).count() as f64 / n0;
    let divergence = 2.0 * (1.0 - (err_mix + err_obs).min(1.0));

    let g_mix = p_mix.mapv(|p| (p - 1.0) / (2.0 * n1)).insert_axis(Axis(1));
    let g_obs = p_obs.mapv(|p| p / (2.0 * n0)).insert_axis(Axis(1));
    let back_mix = adv.backward_batch_logit(&trace_mix, g_mix.view())?;
    let back_obs = adv.backward_batch_logit(&trace_obs, g_obs.view())?;
    let mut grads = back_mix.grads;
    grads.add_assign(&back_obs.grads);
    Ok(AdversaryStep {
        grads,
        input_grad_mix: back_mix.input_grad.slice_move(s![.., ..z_mix.ncols()]),
        input_grad_obs: back_obs.input_grad.slice_move(s![.., ..z_obs.ncols()]),
        loss,
        divergence,
    })
}
