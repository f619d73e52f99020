//! Named estimators, a shared fitting entry point and model persistence.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, ArrayView2};

use crate::baselines::{
    fit_kallus_with_base, fit_tau_unc, fit_tau_weight, make_tau_avg, KallusBase, KallusModel,
    KallusTarget, KallusTheta, OutcomeBase, Propensity, TauAvg, TwoHeadModel,
};
use crate::cornet::{
    complete_cornet, fit_step1, resolve_lambdas, CornetModel, Step1Config, Step1Fit, Step2Config,
    DEFAULT_MIXUP_ALPHA,
};
use crate::data::CombinedData;
use crate::error::{Error, Result};
use crate::net::{parse_row, Representation};
use crate::seed;
use crate::train::NetConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    TauUnc,
    TauConf,
    TauAvg,
    TauWeight,
    KallusRidgeCate,
    KallusNnCate,
    KallusRidgeOut,
    KallusNnOut,
    Cornet,
    CornetPlus,
}

impl Estimator {
    pub const ALL: [Estimator; 10] = [
        Estimator::TauUnc,
        Estimator::TauConf,
        Estimator::TauAvg,
        Estimator::TauWeight,
        Estimator::KallusRidgeCate,
        Estimator::KallusNnCate,
        Estimator::KallusRidgeOut,
        Estimator::KallusNnOut,
        Estimator::Cornet,
        Estimator::CornetPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::TauUnc => "tau_unc",
            Estimator::TauConf => "tau_conf",
            Estimator::TauAvg => "tau_avg",
            Estimator::TauWeight => "tau_weight",
            Estimator::KallusRidgeCate => "kallus_ridge_cate",
            Estimator::KallusNnCate => "kallus_nn_cate",
            Estimator::KallusRidgeOut => "kallus_ridge_out",
            Estimator::KallusNnOut => "kallus_nn_out",
            Estimator::Cornet => "cornet",
            Estimator::CornetPlus => "cornet_plus",
        }
    }

    fn kallus(self) -> Option<(KallusBase, KallusTarget)> {
        match self {
            Estimator::KallusRidgeCate => Some((KallusBase::Ridge, KallusTarget::Cate)),
            Estimator::KallusNnCate => Some((KallusBase::Nn, KallusTarget::Cate)),
            Estimator::KallusRidgeOut => Some((KallusBase::Ridge, KallusTarget::Outcome)),
            Estimator::KallusNnOut => Some((KallusBase::Nn, KallusTarget::Outcome)),
            _ => None,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| {
                let known: Vec<&str> = Estimator::ALL.iter().map(|e| e.name()).collect();
                Error::Config(format!(
                    "unknown estimator `{s}`; known: {}",
                    known.join(", ")
                ))
            })
    }
}

/// Parses a comma-separated estimator list.
pub fn parse_estimators(list: &str) -> Result<Vec<Estimator>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Hyperparameters shared by all estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub net: NetConfig,
    pub mixup_alpha: f64,
    pub adversary_hidden: Vec<usize>,
    /// Weight on the observational estimate in `tau_avg`.
    pub tau_avg_lambda: f64,
    /// Randomized-row weight `Λ` in `tau_weight`; `None` uses `n_conf / n_unc`.
    pub tau_weight_lambda: Option<f64>,
    pub propensity: Propensity,
    /// Penalties for `cornet_plus`; `None` uses the closed-form defaults.
    pub lambda_d: Option<f64>,
    pub lambda_delta: Option<f64>,
    pub step2: Step2Config,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            net: NetConfig::default(),
            mixup_alpha: DEFAULT_MIXUP_ALPHA,
            adversary_hidden: vec![16],
            tau_avg_lambda: 0.5,
            tau_weight_lambda: None,
            propensity: Propensity::Known(0.5),
            lambda_d: None,
            lambda_delta: None,
            step2: Step2Config::default(),
        }
    }
}

impl FitSettings {
    fn step1(&self, lambda_d: f64) -> Step1Config {
        Step1Config {
            lambda_d,
            mixup_alpha: self.mixup_alpha,
            m: None,
            net: self.net.clone(),
            adversary_hidden: self.adversary_hidden.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    TwoHead(TwoHeadModel),
    Avg(TauAvg),
    Kallus(KallusModel),
    Cornet(CornetModel),
}

impl FittedModel {
    pub fn predict_cate(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            FittedModel::TwoHead(m) => m.predict_cate(x),
            FittedModel::Avg(m) => m.predict_cate(x),
            FittedModel::Kallus(m) => m.predict_cate(x),
            FittedModel::Cornet(m) => m.predict_cate_batch(x),
        }
    }
}

/// Per-cell cache so that estimators sharing a fit reuse it.
struct FitCache<'a> {
    data: &'a CombinedData,
    settings: &'a FitSettings,
    seed: u64,
    obs: Option<Result<Step1Fit, String>>,
    rand: Option<Result<TwoHeadModel, String>>,
}

impl FitCache<'_> {
    fn rng(&self, name: &str) -> seed::Rng {
        seed::stream(self.seed, &[], name)
    }

    fn obs(&mut self) -> Result<Step1Fit> {
        if self.obs.is_none() {
            let mut rng = self.rng("fit/obs");
            let fit = fit_step1(self.data, &self.settings.step1(0.0), &mut rng);
            self.obs = Some(fit.map_err(|e| e.to_string()));
        }
        self.obs.clone().unwrap().map_err(Error::Fit)
    }

    fn rand(&mut self) -> Result<TwoHeadModel> {
        if self.rand.is_none() {
            let mut rng = self.rng("fit/rand");
            let fit = fit_tau_unc(&self.data.rand, &self.settings.net, &mut rng);
            self.rand = Some(fit.map_err(|e| e.to_string()));
        }
        self.rand.clone().unwrap().map_err(Error::Fit)
    }

    fn fit(&mut self, est: Estimator) -> Result<FittedModel> {
        let data = self.data;
        let settings = self.settings;
        if let Some((base, target)) = est.kallus() {
            let f = match base {
                KallusBase::Ridge => OutcomeBase::fit_ridge(&data.obs)?,
                KallusBase::Nn => OutcomeBase::Nn(self.obs()?.as_two_head()),
            };
            return Ok(FittedModel::Kallus(fit_kallus_with_base(
                data,
                base,
                f,
                target,
                settings.propensity,
            )?));
        }
        Ok(match est {
            Estimator::TauUnc => FittedModel::TwoHead(self.rand()?),
            Estimator::TauConf => FittedModel::TwoHead(self.obs()?.as_two_head()),
            Estimator::TauAvg => FittedModel::Avg(make_tau_avg(
                self.rand()?,
                self.obs()?.as_two_head(),
                settings.tau_avg_lambda,
            )?),
            Estimator::TauWeight => {
                let big_lambda = settings
                    .tau_weight_lambda
                    .unwrap_or(data.obs.n() as f64 / data.rand.n() as f64);
                let mut rng = self.rng("fit/weight");
                FittedModel::TwoHead(fit_tau_weight(data, big_lambda, &settings.net, &mut rng)?.0)
            }
            Estimator::Cornet => {
                let step2 = Step2Config {
                    lambda_delta: Some(0.0),
                    ..settings.step2.clone()
                };
                FittedModel::Cornet(complete_cornet(&self.obs()?, &data.rand, 0.0, &step2)?)
            }
            Estimator::CornetPlus => {
                let (lambda_d, lambda_delta) = resolve_lambdas(
                    settings.lambda_d,
                    settings.lambda_delta,
                    settings.net.d_phi,
                    data.rand.n(),
                )?;
                let s1 = if lambda_d == 0.0 {
                    self.obs()?
                } else {
                    let mut rng = self.rng("fit/plus");
                    fit_step1(data, &settings.step1(lambda_d), &mut rng)?
                };
                let step2 = Step2Config {
                    lambda_delta: Some(lambda_delta),
                    ..settings.step2.clone()
                };
                FittedModel::Cornet(complete_cornet(&s1, &data.rand, lambda_d, &step2)?)
            }
            _ => unreachable!("kallus variants handled above"),
        })
    }
}

/// Fits several estimators on one dataset. Each shared component draws from
/// its own stream derived from `seed`, so a model does not depend on which
/// other estimators are requested.
pub fn fit_estimators(
    estimators: &[Estimator],
    data: &CombinedData,
    settings: &FitSettings,
    seed: u64,
) -> Vec<(Estimator, Result<FittedModel>)> {
    let mut cache = FitCache {
        data,
        settings,
        seed,
        obs: None,
        rand: None,
    };
    estimators.iter().map(|&e| (e, cache.fit(e))).collect()
}

pub fn fit_estimator(
    estimator: Estimator,
    data: &CombinedData,
    settings: &FitSettings,
    seed: u64,
) -> Result<FittedModel> {
    fit_estimators(&[estimator], data, settings, seed)
        .pop()
        .expect("one result per estimator")
        .1
}

const MODEL_HEADER: &str = "cornet-model v1";

fn write_vec(s: &mut String, v: &Array1<f64>) {
    let vals: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    let _ = writeln!(s, "vec {}", vals.join(" "));
}

fn write_two_head(s: &mut String, m: &TwoHeadModel) {
    s.push_str(&m.phi.to_text());
    write_vec(s, &m.heads[0]);
    write_vec(s, &m.heads[1]);
}

/// Plain-text model file: a header, the estimator name, then the model body.
pub fn model_to_text(estimator: Estimator, model: &FittedModel) -> String {
    let mut s = format!("{MODEL_HEADER}\nestimator {estimator}\n");
    match model {
        FittedModel::TwoHead(m) => {
            s.push_str("kind two_head\n");
            write_two_head(&mut s, m);
        }
        FittedModel::Avg(m) => {
            let _ = writeln!(s, "kind tau_avg\nlambda {:?}", m.lambda);
            write_two_head(&mut s, &m.unc);
            write_two_head(&mut s, &m.conf);
        }
        FittedModel::Kallus(m) => {
            s.push_str("kind kallus\n");
            let _ = writeln!(
                s,
                "base {}\ntarget {}",
                match m.base {
                    KallusBase::Ridge => "ridge",
                    KallusBase::Nn => "nn",
                },
                match m.target {
                    KallusTarget::Cate => "cate",
                    KallusTarget::Outcome => "outcome",
                }
            );
            match m.propensity {
                Propensity::Known(e) => {
                    let _ = writeln!(s, "propensity known {e:?}");
                }
                Propensity::Logistic => s.push_str("propensity logistic\n"),
            }
            match &m.f {
                OutcomeBase::Ridge(c) => {
                    s.push_str("f ridge\n");
                    write_vec(&mut s, &c[0]);
                    write_vec(&mut s, &c[1]);
                }
                OutcomeBase::Nn(net) => {
                    s.push_str("f nn\n");
                    write_two_head(&mut s, net);
                }
            }
            match &m.theta {
                KallusTheta::Cate(th) => {
                    s.push_str("theta cate\n");
                    write_vec(&mut s, th);
                }
                KallusTheta::Outcome(th) => {
                    s.push_str("theta outcome\n");
                    write_vec(&mut s, &th[0]);
                    write_vec(&mut s, &th[1]);
                }
            }
        }
        FittedModel::Cornet(m) => {
            let _ = writeln!(
                s,
                "kind cornet\nlambda_d {:?}\nlambda_delta {:?}",
                m.lambda_d, m.lambda_delta
            );
            s.push_str(&m.phi.to_text());
            for v in m.w_c.iter().chain(m.delta.iter()) {
                write_vec(&mut s, v);
            }
        }
    }
    s
}

struct Lines<'a, I: Iterator<Item = &'a str>>(I);

impl<'a, I: Iterator<Item = &'a str>> Lines<'a, I> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.0
            .next()
            .ok_or_else(|| Error::Format(format!("model file ends before {what}")))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next(key)?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::trim)
            .ok_or_else(|| Error::Format(format!("expected `{key} …`, found `{line}`")))
    }

    fn number(&mut self, key: &str) -> Result<f64> {
        let v = self.keyed(key)?;
        v.parse()
            .map_err(|_| Error::Format(format!("bad number `{v}` for {key}")))
    }

    fn vector(&mut self) -> Result<Array1<f64>> {
        Ok(Array1::from(parse_row(self.keyed("vec")?)?))
    }

    fn representation(&mut self) -> Result<Representation> {
        Representation::from_lines(&mut self.0)
    }

    fn two_head(&mut self) -> Result<TwoHeadModel> {
        let phi = self.representation()?;
        let heads = [self.vector()?, self.vector()?];
        check_heads(&phi, &heads)?;
        Ok(TwoHeadModel { phi, heads })
    }
}

fn check_heads(phi: &Representation, heads: &[Array1<f64>]) -> Result<()> {
    for h in heads {
        if h.len() != phi.output_dim() {
            return Err(Error::Format(format!(
                "head length {} does not match representation width {}",
                h.len(),
                phi.output_dim()
            )));
        }
    }
    Ok(())
}

pub fn model_from_text(text: &str) -> Result<(Estimator, FittedModel)> {
    let mut lines = Lines(text.lines());
    let header = lines.next("header")?;
    if header.trim() != MODEL_HEADER {
        return Err(Error::Format(format!(
            "unsupported model header `{header}`"
        )));
    }
    let estimator: Estimator = lines
        .keyed("estimator")?
        .parse()
        .map_err(|e: Error| Error::Format(e.to_string()))?;
    let model = match lines.keyed("kind")? {
        "two_head" => FittedModel::TwoHead(lines.two_head()?),
        "tau_avg" => {
            let lambda = lines.number("lambda")?;
            let unc = lines.two_head()?;
            let conf = lines.two_head()?;
            FittedModel::Avg(
                make_tau_avg(unc, conf, lambda).map_err(|e| Error::Format(e.to_string()))?,
            )
        }
        "kallus" => {
            let base = match lines.keyed("base")? {
                "ridge" => KallusBase::Ridge,
                "nn" => KallusBase::Nn,
                other => return Err(Error::Format(format!("unknown base `{other}`"))),
            };
            let target = match lines.keyed("target")? {
                "cate" => KallusTarget::Cate,
                "outcome" => KallusTarget::Outcome,
                other => return Err(Error::Format(format!("unknown target `{other}`"))),
            };
            let prop = lines.keyed("propensity")?;
            let propensity = if prop == "logistic" {
                Propensity::Logistic
            } else if let Some(e) = prop.strip_prefix("known ") {
                Propensity::Known(
                    e.trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad propensity `{e}`")))?,
                )
            } else {
                return Err(Error::Format(format!("unknown propensity `{prop}`")));
            };
            let f = match lines.keyed("f")? {
                "ridge" => OutcomeBase::Ridge([lines.vector()?, lines.vector()?]),
                "nn" => OutcomeBase::Nn(lines.two_head()?),
                other => return Err(Error::Format(format!("unknown outcome base `{other}`"))),
            };
            let theta = match lines.keyed("theta")? {
                "cate" => KallusTheta::Cate(lines.vector()?),
                "outcome" => KallusTheta::Outcome([lines.vector()?, lines.vector()?]),
                other => return Err(Error::Format(format!("unknown theta kind `{other}`"))),
            };
            FittedModel::Kallus(KallusModel {
                base,
                target,
                propensity,
                f,
                theta,
            })
        }
        "cornet" => {
            let lambda_d = lines.number("lambda_d")?;
            let lambda_delta = lines.number("lambda_delta")?;
            let phi = lines.representation()?;
            let w_c = [lines.vector()?, lines.vector()?];
            let delta = [lines.vector()?, lines.vector()?];
            check_heads(&phi, &w_c)?;
            check_heads(&phi, &delta)?;
            FittedModel::Cornet(CornetModel {
                phi,
                w_c,
                delta,
                lambda_d,
                lambda_delta,
            })
        }
        other => return Err(Error::Format(format!("unknown model kind `{other}`"))),
    };
    Ok((estimator, model))
}

pub fn save_model(path: &Path, estimator: Estimator, model: &FittedModel) -> Result<()> {
    std::fs::write(path, model_to_text(estimator, model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(Estimator, FittedModel)> {
    model_from_text(&std::fs::read_to_string(path)?)
}
