//! One entry point for every selection scheme.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codes::DEFAULT_L_THETA;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mic::{run_mic, MicSearchConfig};
use crate::model::{Scheme, SelectionModel, TransferSetting};
use crate::tpc::{self, TpcConfig};
use crate::transfer::{self, TransferPrior};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectOptions {
    pub top_t: usize,
    pub l_theta: f64,
    pub max_features: Option<usize>,
    pub extra_steps: usize,
    pub prior: Option<TransferPrior>,
    pub setting: TransferSetting,
    /// Streamwise feature order; `None` shuffles with `order_seed`, or
    /// keeps column order when that is also unset.
    pub order: Option<Vec<usize>>,
    pub order_seed: Option<u64>,
    /// Stream transfer models instead of running forward selection.
    pub transfer_streamwise: bool,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            top_t: 75,
            l_theta: DEFAULT_L_THETA,
            max_features: None,
            extra_steps: 0,
            prior: None,
            setting: TransferSetting::ClassAndFeature,
            order: None,
            order_seed: None,
            transfer_streamwise: false,
        }
    }
}

impl SelectOptions {
    fn tpc(&self) -> TpcConfig {
        TpcConfig {
            l_theta: self.l_theta,
            max_features: self.max_features,
            extra_steps: self.extra_steps,
        }
    }

    /// Feature order for streamwise passes over `m` features.
    pub fn stream_order(&self, m: usize) -> Vec<usize> {
        if let Some(order) = &self.order {
            return order.clone();
        }
        let mut order: Vec<usize> = (0..m).collect();
        if let Some(seed) = self.order_seed {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        order
    }
}

/// Runs `scheme` on `data`. MIC schemes take any number of tasks; the
/// class-aware schemes need exactly one.
pub fn select(data: &Dataset, scheme: Scheme, opts: &SelectOptions) -> Result<SelectionModel> {
    if let Some(mic) = scheme.mic() {
        let config = MicSearchConfig {
            top_t: opts.top_t,
            max_features: opts.max_features,
            l_theta: opts.l_theta,
            ..MicSearchConfig::new(mic)
        };
        return run_mic(data, &config);
    }
    let config = opts.tpc();
    match scheme {
        Scheme::Tpc => tpc::run_tpc(data, &config),
        Scheme::TpcForwardBackward => tpc::run_tpc_forward_backward(data, &config),
        Scheme::TpcStreamwise => tpc::run_tpc_streamwise(data, &config, &opts.stream_order(data.m())),
        Scheme::TransferTpc => {
            let prior = opts
                .prior
                .as_ref()
                .ok_or_else(|| Error::Spec("transfer-tpc needs a prior".into()))?;
            if opts.transfer_streamwise {
                transfer::run_transfer_tpc_streamwise(
                    data,
                    prior,
                    opts.setting,
                    &config,
                    &opts.stream_order(data.m()),
                )
            } else {
                transfer::run_transfer_tpc(data, prior, opts.setting, &config)
            }
        }
        Scheme::PartialMic | Scheme::FullMic | Scheme::Ric => unreachable!("handled above"),
    }
}
