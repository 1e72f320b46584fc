//! Selection priors transferred from models fit on related tasks.
//!
//! Every training model votes once per class (selected at least one of its
//! features or not) and once per feature. With Beta(a, b) smoothing the
//! posterior predictive probability that a class enters the new model is
//! `(k + a) / (k + l + a + b)`, and likewise `(s + c) / (s + u + c + d)`
//! for a feature. Their negative logs replace the uniform class and
//! within-class index costs of the three-part code. The defaults
//! `a = 1, b = K - 1, c = 1, d = m_k - 1` make an empty prior reproduce the
//! plain three-part code exactly.

use std::collections::{BTreeMap, HashMap};

use crate::dataset::{ClassMap, Dataset};
use crate::error::{Error, Result};
use crate::model::{Scheme, SelectionModel, TransferSetting};
use crate::tpc::{self, FeatureCoder, TpcConfig, TpcState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub selected: u32,
    pub unselected: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferPrior {
    /// Number of training models.
    pub t: u32,
    pub class_counts: BTreeMap<String, Counts>,
    /// Keyed by (class name, feature name).
    pub feature_counts: BTreeMap<(String, String), Counts>,
    /// Explicit Beta hyperparameters; `None` uses `(1, K - 1)`.
    pub class_hyper: Option<(f64, f64)>,
    /// Explicit Beta hyperparameters; `None` uses `(1, m_k - 1)`.
    pub feature_hyper: Option<(f64, f64)>,
}

impl TransferPrior {
    /// No training evidence.
    pub fn uninformative() -> Self {
        TransferPrior {
            t: 0,
            class_counts: BTreeMap::new(),
            feature_counts: BTreeMap::new(),
            class_hyper: None,
            feature_hyper: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in &self.class_counts {
            if c.selected + c.unselected != self.t {
                return Err(Error::domain(format!("class `{name}` counts do not sum to t={}", self.t)));
            }
        }
        for ((class, name), c) in &self.feature_counts {
            if c.selected + c.unselected != self.t {
                return Err(Error::domain(format!(
                    "feature `{class}/{name}` counts do not sum to t={}",
                    self.t
                )));
            }
        }
        for (a, b) in self.class_hyper.iter().chain(self.feature_hyper.iter()) {
            if !(*a > 0.0 && *b > 0.0) {
                return Err(Error::domain("Beta hyperparameters must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorOptions {
    /// Count a feature only when one of its fitted coefficients is positive.
    pub positive_only: bool,
}

/// Builds a prior over `features` (partitioned by `classes`) from the
/// selections of `models`. Features are matched by name; features a model
/// selected that are not in `features` are ignored. No models gives the
/// uninformative prior.
pub fn build_prior(
    models: &[SelectionModel],
    features: &[String],
    classes: &ClassMap,
    options: &PriorOptions,
) -> Result<TransferPrior> {
    if classes.num_features() != features.len() {
        return Err(Error::DimensionMismatch(format!(
            "class map covers {} features, {} names given",
            classes.num_features(),
            features.len()
        )));
    }
    let t = u32::try_from(models.len()).map_err(|_| Error::domain("too many models"))?;
    let index: HashMap<&str, usize> = features.iter().enumerate().map(|(j, f)| (f.as_str(), j)).collect();
    let mut class_votes = vec![0u32; classes.num_classes()];
    let mut feature_votes = vec![0u32; features.len()];
    for model in models {
        let mut chosen = vec![false; features.len()];
        for fit in &model.fits {
            for (feature, coef) in &fit.terms {
                if options.positive_only && *coef <= 0.0 {
                    continue;
                }
                if let Some(&j) = index.get(feature.name.as_str()) {
                    chosen[j] = true;
                }
            }
        }
        let mut class_hit = vec![false; classes.num_classes()];
        for (j, &c) in chosen.iter().enumerate() {
            if c {
                feature_votes[j] += 1;
                class_hit[classes.class_of(j)] = true;
            }
        }
        for (v, hit) in class_votes.iter_mut().zip(class_hit) {
            *v += u32::from(hit);
        }
    }
    let class_counts = classes
        .names()
        .iter()
        .zip(&class_votes)
        .map(|(name, &k)| {
            (
                name.clone(),
                Counts {
                    selected: k,
                    unselected: t - k,
                },
            )
        })
        .collect();
    let feature_counts = features
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let class = classes.names()[classes.class_of(j)].clone();
            (
                (class, name.clone()),
                Counts {
                    selected: feature_votes[j],
                    unselected: t - feature_votes[j],
                },
            )
        })
        .collect();
    Ok(TransferPrior {
        t,
        class_counts,
        feature_counts,
        class_hyper: None,
        feature_hyper: None,
    })
}

/// `-log2` of a Beta-Bernoulli posterior predictive `(hits + a) / (n + a + b)`,
/// evaluated as a difference of logs so that zero counts give exactly
/// `log2((a + b) / a)`.
fn predictive_bits(hits: u32, total: u32, a: f64, b: f64) -> Result<f64> {
    let num = hits as f64 + a;
    let den = total as f64 + a + b;
    if !(num > 0.0 && den >= num && den.is_finite()) {
        return Err(Error::domain(format!(
            "degenerate predictive probability {num}/{den}"
        )));
    }
    Ok(den.log2() - num.log2())
}

/// Per-class and per-feature code lengths of a prior resolved against a
/// test dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferCoder {
    class_bits: Vec<f64>,
    feature_bits: Vec<f64>,
    num_classes: usize,
    setting: TransferSetting,
    l_theta: f64,
}

impl TransferCoder {
    pub fn new(
        prior: &TransferPrior,
        data: &Dataset,
        setting: TransferSetting,
        l_theta: f64,
    ) -> Result<Self> {
        prior.validate()?;
        let classes = data.class_map.as_ref().ok_or(Error::NoClassMap)?;
        let k = classes.num_classes();
        let (a, b) = prior.class_hyper.unwrap_or((1.0, k as f64 - 1.0));
        let class_bits = classes
            .names()
            .iter()
            .map(|name| {
                let c = prior.class_counts.get(name).copied().unwrap_or_default();
                predictive_bits(c.selected, c.selected + c.unselected, a, b)
            })
            .collect::<Result<Vec<_>>>()?;
        let feature_bits = (0..data.m())
            .map(|j| {
                let class = classes.class_of(j);
                let (c, d) = prior
                    .feature_hyper
                    .unwrap_or((1.0, classes.class_size(class) as f64 - 1.0));
                let key = (classes.names()[class].clone(), data.feature_names[j].clone());
                let counts = prior.feature_counts.get(&key).copied().unwrap_or_default();
                predictive_bits(counts.selected, counts.selected + counts.unselected, c, d)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TransferCoder {
            class_bits,
            feature_bits,
            num_classes: k,
            setting,
            l_theta,
        })
    }

    /// `-log2 p(class enters)`.
    pub fn class_bits(&self, class: usize) -> f64 {
        self.class_bits[class]
    }

    /// `-log2 p(feature enters)`.
    pub fn feature_bits(&self, feature: usize) -> f64 {
        self.feature_bits[feature]
    }
}

impl FeatureCoder for TransferCoder {
    fn bits(&self, state: &TpcState, feature: usize) -> f64 {
        transfer_model_bits(state, self, feature)
    }
}

/// Model bits for adding `feature` under the transferred prior. New
/// classes cost `-log2 p(class)` (setting 1) or `log2 K` (setting 2);
/// classes already in the model cost `log2 Q`.
pub fn transfer_model_bits(state: &TpcState, coder: &TransferCoder, feature: usize) -> f64 {
    let class = state
        .class_of(feature)
        .expect("transfer coding requires a class map");
    let class_term = if state.is_class_selected(class) {
        state.repeat_class_bits()
    } else {
        match coder.setting {
            TransferSetting::ClassAndFeature => coder.class_bits[class],
            TransferSetting::FeatureOnly => (coder.num_classes as f64).log2(),
        }
    };
    class_term + coder.feature_bits[feature] + coder.l_theta
}

/// Forward stepwise selection with transfer-adjusted model costs.
pub fn run_transfer_tpc(
    data: &Dataset,
    prior: &TransferPrior,
    setting: TransferSetting,
    config: &TpcConfig,
) -> Result<SelectionModel> {
    let coder = TransferCoder::new(prior, data, setting, config.l_theta)?;
    tpc::run_forward(data, &coder, config, Scheme::TransferTpc, Some(setting))
}

/// Forward-backward variant of [`run_transfer_tpc`].
pub fn run_transfer_tpc_forward_backward(
    data: &Dataset,
    prior: &TransferPrior,
    setting: TransferSetting,
    config: &TpcConfig,
) -> Result<SelectionModel> {
    let coder = TransferCoder::new(prior, data, setting, config.l_theta)?;
    tpc::run_forward_backward(data, &coder, config, Scheme::TransferTpc, Some(setting))
}

/// Streamwise variant of [`run_transfer_tpc`].
pub fn run_transfer_tpc_streamwise(
    data: &Dataset,
    prior: &TransferPrior,
    setting: TransferSetting,
    config: &TpcConfig,
    feature_order: &[usize],
) -> Result<SelectionModel> {
    let coder = TransferCoder::new(prior, data, setting, config.l_theta)?;
    tpc::run_streamwise(data, &coder, config, feature_order, Scheme::TransferTpc, Some(setting))
}
