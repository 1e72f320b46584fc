//! From-scratch recomputation of a model's description length, used to
//! audit ledgers and reloaded model files.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fit::gaussian_code_bits;
use crate::mic;
use crate::model::{Scheme, SelectionModel};
use crate::tpc::{self, FeatureCoder, RicCoder, TpcCoder};
use crate::transfer::{TransferCoder, TransferPrior};

/// Residual sum of squares of an intercept-plus-`features` least-squares
/// fit, solved by SVD.
pub fn rss_from_scratch(data: &Dataset, features: &[usize], task: usize) -> Result<f64> {
    let n = data.n();
    let p = features.len() + 1;
    let z = DMatrix::from_fn(n, p, |i, c| if c == 0 { 1.0 } else { data.x[(i, features[c - 1])] });
    let y = DVector::from_column_slice(data.response(task));
    let svd = z.clone().svd(true, true);
    let b = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::Numeric(format!("least squares failed: {e}")))?;
    Ok((&y - &z * b).norm_squared())
}

/// Residual bits of the given per-task supports, with each task's rss
/// clamped at the same degenerate-fit floor the search uses.
pub fn residual_bits_from_scratch(data: &Dataset, support: &[Vec<usize>]) -> Result<f64> {
    if support.len() != data.h() {
        return Err(Error::ShapeMismatch(format!(
            "support lists {} tasks, dataset has {}",
            support.len(),
            data.h()
        )));
    }
    let mut total = 0.0;
    for (t, feats) in support.iter().enumerate() {
        let y = data.response(t);
        let floor = (1e-12 * y.iter().map(|v| v * v).sum::<f64>()).max(f64::MIN_POSITIVE);
        let rss = rss_from_scratch(data, feats, t)?;
        total += gaussian_code_bits(data.n(), rss.max(floor));
    }
    Ok(total)
}

/// Recomputes the total description length of any model against `data`.
/// Transfer models need the prior they were fit with; without it the
/// ledger's model bits are used.
pub fn recompute_tdl(
    data: &Dataset,
    model: &SelectionModel,
    prior: Option<&TransferPrior>,
) -> Result<f64> {
    if data.m() != model.m || data.h() != model.h || data.n() != model.n {
        return Err(Error::DimensionMismatch(format!(
            "model is {}x{}x{}, data is {}x{}x{}",
            model.n,
            model.m,
            model.h,
            data.n(),
            data.m(),
            data.h()
        )));
    }
    if model.scheme.mic().is_some() {
        return mic::replay_tdl(data, model);
    }
    let order: Vec<usize> = model.acceptance_order().iter().map(|f| f.index).collect();
    let se = residual_bits_from_scratch(data, &model.support())?;
    let bits = match (model.scheme, prior) {
        (Scheme::TransferTpc, Some(prior)) => {
            let setting = model
                .setting
                .ok_or_else(|| Error::domain("transfer model without a setting"))?;
            let coder = TransferCoder::new(prior, data, setting, model.l_theta)?;
            tpc::replay_model_bits(data, &coder, &order)
        }
        (Scheme::TransferTpc, None) => model.ledger_model_bits(),
        _ => match data.class_map {
            Some(_) => {
                let coder: &dyn FeatureCoder = &TpcCoder::new(model.l_theta);
                tpc::replay_model_bits(data, coder, &order)
            }
            None => tpc::replay_model_bits(data, &RicCoder::new(data.m(), model.l_theta), &order),
        },
    };
    Ok(se + bits)
}
