//! Greedy stepwise minimization of total description length for jointly
//! selecting features across `h` tasks that share one design matrix.
//!
//! Each iteration scores every feature against every task, keeps the
//! `top_t` features by their all-task residual gain, and for each survivor
//! grows a task subset in order of decreasing per-task gain, evaluating
//! the net savings at every subset size `k = 1..h`. With a diagonal noise
//! covariance the per-task gains do not interact, so the greedy order is
//! exact for every `k`. The best feature/subset pair is accepted while it
//! saves bits.

use crate::codes::{MicCostParams, MicScheme, DEFAULT_L_THETA};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fit::{Candidate, FitState};
use crate::model::{task_coefficients, Event, FeatureRef, SelectionModel};
use crate::tpc::{stepwise_single_task, FeatureCoder, RicCoder, TpcState};

#[derive(Debug, Clone, PartialEq)]
pub struct MicSearchConfig {
    pub scheme: MicScheme,
    pub top_t: usize,
    pub max_features: Option<usize>,
    pub l_theta: f64,
    /// Skip subset sizes whose lower bound cannot beat the incumbent.
    pub prune: bool,
}

impl MicSearchConfig {
    pub fn new(scheme: MicScheme) -> Self {
        MicSearchConfig {
            scheme,
            top_t: 75,
            max_features: None,
            l_theta: DEFAULT_L_THETA,
            prune: true,
        }
    }
}

/// Best task subset for one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetChoice {
    pub tasks: Vec<usize>,
    pub delta_se: f64,
    pub delta_sm: f64,
}

impl SubsetChoice {
    /// Net bits saved, `delta_se - delta_sm`.
    pub fn delta(&self) -> f64 {
        self.delta_se - self.delta_sm
    }
}

/// Lower bound on the description length reachable by including a
/// feature in exactly `k` tasks: the current length minus the residual
/// gain of including it everywhere, plus the model bits for `k` tasks.
pub fn lower_bound(current_tdl: f64, gain_all: f64, model_bits_k: f64) -> f64 {
    current_tdl - gain_all + model_bits_k
}

/// Eligible tasks sorted by decreasing gain (ties by task index) with the
/// running gain sums.
fn ranked_gains(gains: &[Option<f64>]) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&t| gains[t].is_some()).collect();
    order.sort_by(|&a, &b| {
        let (ga, gb) = (gains[a].unwrap(), gains[b].unwrap());
        gb.total_cmp(&ga).then(a.cmp(&b))
    });
    let mut prefix = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &t in &order {
        acc += gains[t].unwrap();
        prefix.push(acc);
    }
    (order, prefix)
}

/// Chooses the subset size maximizing net savings from per-task gains.
///
/// `incumbent` is the best net savings seen so far for other candidates;
/// only choices that strictly beat it are returned. With `prune`, subset
/// sizes whose upper bound on savings cannot beat the incumbent are not
/// evaluated; the result is identical either way.
pub fn best_subset_from_gains(
    gains: &[Option<f64>],
    params: &MicCostParams,
    scheme: MicScheme,
    incumbent: f64,
    prune: bool,
) -> Option<SubsetChoice> {
    let h = gains.len();
    let (order, prefix) = ranked_gains(gains);
    if order.is_empty() {
        return None;
    }
    let gain_all = *prefix.last().unwrap();
    let mut best: Option<(usize, f64, f64)> = None;
    let mut best_delta = incumbent;

    let sizes: Vec<usize> = match scheme {
        MicScheme::Full if order.len() < h => return None,
        MicScheme::Full => vec![h],
        MicScheme::Partial => (1..=order.len()).collect(),
        MicScheme::Ric => return ric_subset(gains, params, incumbent),
    };
    for k in sizes {
        let cost = params.model_cost(scheme, k).ok()?;
        // Savings can never exceed gain_all - cost.
        if prune && gain_all - cost <= best_delta {
            continue;
        }
        let delta = prefix[k - 1] - cost;
        if delta > best_delta {
            best_delta = delta;
            best = Some((k, prefix[k - 1], cost));
        }
    }
    best.map(|(k, d_se, d_sm)| {
        let mut tasks = order[..k].to_vec();
        tasks.sort_unstable();
        SubsetChoice {
            tasks,
            delta_se: d_se,
            delta_sm: d_sm,
        }
    })
}

/// Independent per-task coding: a task is included iff it pays for itself.
fn ric_subset(gains: &[Option<f64>], params: &MicCostParams, incumbent: f64) -> Option<SubsetChoice> {
    let per = params.model_cost(MicScheme::Ric, 1).ok()?;
    let tasks: Vec<usize> = (0..gains.len())
        .filter(|&t| gains[t].is_some_and(|g| g > per))
        .collect();
    let delta_se: f64 = tasks.iter().map(|&t| gains[t].unwrap()).sum();
    let delta_sm = per * tasks.len() as f64;
    (!tasks.is_empty() && delta_se - delta_sm > incumbent).then_some(SubsetChoice {
        tasks,
        delta_se,
        delta_sm,
    })
}

/// Best subset for a single feature against the current fit.
pub fn best_subset_for_feature(
    state: &FitState,
    feature: usize,
    params: &MicCostParams,
    scheme: MicScheme,
) -> Option<SubsetChoice> {
    let gains: Vec<Option<f64>> = (0..state.h())
        .map(|t| state.candidate_gain(state.candidate(feature, t), t))
        .collect();
    best_subset_from_gains(&gains, params, scheme, f64::NEG_INFINITY, false)
}

/// Runs the stepwise search for the configured scheme.
pub fn run_mic(data: &Dataset, config: &MicSearchConfig) -> Result<SelectionModel> {
    if config.top_t < 1 {
        return Err(Error::domain("top_t must be at least 1"));
    }
    let params = MicCostParams::new(data.m(), data.h(), config.l_theta)?;
    match config.scheme {
        MicScheme::Ric => run_ric(data, config, &params),
        scheme => run_joint(data, config, &params, scheme),
    }
}

fn run_joint(
    data: &Dataset,
    config: &MicSearchConfig,
    params: &MicCostParams,
    scheme: MicScheme,
) -> Result<SelectionModel> {
    let (m, h) = (data.m(), data.h());
    let mut state = FitState::new(data);
    let null_se = state.residual_bits_floored();
    let mut included = vec![false; m];
    let mut events = Vec::new();
    let mut model_bits = 0.0;

    loop {
        if config.max_features.is_some_and(|cap| events.len() >= cap) {
            break;
        }
        let scores: Vec<Vec<Candidate>> = (0..h).map(|t| state.score_task(t)).collect();
        let gains_of = |j: usize| -> Vec<Option<f64>> {
            (0..h).map(|t| state.candidate_gain(scores[t][j], t)).collect()
        };

        let mut pool: Vec<(usize, f64)> = (0..m)
            .filter(|&j| !included[j])
            .map(|j| (j, gains_of(j).iter().flatten().sum::<f64>()))
            .collect();
        pool.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        pool.truncate(config.top_t);
        pool.sort_by_key(|&(j, _)| j);

        let mut best: Option<(usize, SubsetChoice)> = None;
        let mut incumbent = 0.0;
        for &(j, _) in &pool {
            if let Some(choice) =
                best_subset_from_gains(&gains_of(j), params, scheme, incumbent, config.prune)
            {
                incumbent = choice.delta();
                best = Some((j, choice));
            }
        }
        let Some((j, choice)) = best else { break };

        let before = state.residual_bits_floored();
        match state.add(j, &choice.tasks) {
            Ok(()) => {}
            Err(Error::SingularDesign { .. }) => {
                included[j] = true;
                continue;
            }
            Err(e) => return Err(e),
        }
        included[j] = true;
        let d_se = before - state.residual_bits_floored();
        model_bits += choice.delta_sm;
        events.push(Event::Add {
            feature: FeatureRef::new(j, data.feature_names[j].clone()),
            tasks: choice.tasks,
            d_se,
            d_sm: choice.delta_sm,
            class: None,
        });
    }

    let total_tdl = state.residual_bits_floored() + model_bits;
    Ok(SelectionModel {
        scheme: scheme.into(),
        setting: None,
        n: data.n(),
        m,
        h,
        l_theta: config.l_theta,
        null_se,
        events,
        fits: task_coefficients(&state),
        total_tdl,
        flags: None,
    })
}

/// `h` separate single-task stepwise runs, merged for reporting.
fn run_ric(data: &Dataset, config: &MicSearchConfig, params: &MicCostParams) -> Result<SelectionModel> {
    let coder = RicCoder::new(params.m, config.l_theta);
    let mut state = FitState::new(data);
    let null_se = state.residual_bits_floored();
    let mut events = Vec::new();
    for t in 0..data.h() {
        let mut tpc = TpcState::new(None, data.m());
        stepwise_single_task(
            &mut state,
            t,
            &mut tpc,
            &coder as &dyn FeatureCoder,
            config.max_features,
            &mut events,
        )?;
    }
    let total_tdl = state.residual_bits_floored() + events_model_bits(&events);
    Ok(SelectionModel {
        scheme: MicScheme::Ric.into(),
        setting: None,
        n: data.n(),
        m: data.m(),
        h: data.h(),
        l_theta: config.l_theta,
        null_se,
        events,
        fits: task_coefficients(&state),
        total_tdl,
        flags: None,
    })
}

fn events_model_bits(events: &[Event]) -> f64 {
    events
        .iter()
        .map(|e| match e {
            Event::Add { d_sm, .. } => *d_sm,
            Event::Remove { .. } => 0.0,
        })
        .sum()
}

/// Recomputes a multi-task model's description length from scratch:
/// per-task least squares on the final support plus the scheme's model
/// cost for each ledger addition.
pub fn replay_tdl(data: &Dataset, model: &SelectionModel) -> Result<f64> {
    let scheme = model
        .scheme
        .mic()
        .ok_or_else(|| Error::domain(format!("{} is not a multi-task scheme", model.scheme)))?;
    let params = MicCostParams::new(data.m(), data.h(), model.l_theta)?;
    let mut bits = 0.0;
    for e in &model.events {
        if let Event::Add { tasks, .. } = e {
            bits += params.model_cost(scheme, tasks.len())?;
        }
    }
    Ok(crate::replay::residual_bits_from_scratch(data, &model.support())? + bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(n: usize, m: usize, h: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal));
        let y = DMatrix::from_fn(n, h, |_, _| rng.sample(StandardNormal));
        Dataset::new(x, y).unwrap()
    }

    /// Feature 0 drives tasks in `shared` with |beta| = 5, noise sd 0.1.
    fn shared_signal(shared: &[usize], h: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (60, 30);
        let x = DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal));
        let y = DMatrix::from_fn(n, h, |i, t| {
            let signal = if shared.contains(&t) { 5.0 * x[(i, 0)] } else { 0.0 };
            signal + 0.1 * rng.sample::<f64, _>(StandardNormal)
        });
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn single_task_is_scalar_test() {
        let data = noise(40, 10, 1, 4);
        let state = FitState::new(&data);
        let params = MicCostParams::new(10, 1, 2.0).unwrap();
        for j in 0..10 {
            let gain = state.delta_se(j, &[0]).unwrap();
            let choice = best_subset_for_feature(&state, j, &params, MicScheme::Partial).unwrap();
            assert_eq!(choice.tasks, vec![0]);
            assert_eq!(choice.delta() > 0.0, gain > 10f64.log2() + 2.0);
        }
    }

    #[test]
    fn strong_shared_feature_picks_exact_subset() {
        let data = shared_signal(&[0, 1, 2], 6, 11);
        let state = FitState::new(&data);
        let params = MicCostParams::new(data.m(), 6, 2.0).unwrap();
        let choice = best_subset_for_feature(&state, 0, &params, MicScheme::Partial).unwrap();
        assert!(choice.tasks.starts_with(&[0, 1, 2]));

        // Exhaustive over all nonempty subsets.
        let gains: Vec<f64> = (0..6).map(|t| state.delta_se(0, &[t]).unwrap()).collect();
        let mut best = (f64::NEG_INFINITY, 0u32);
        for mask in 1u32..64 {
            let k = mask.count_ones() as usize;
            let se: f64 = (0..6).filter(|t| mask >> t & 1 == 1).map(|t| gains[t]).sum();
            let d = se - params.model_cost(MicScheme::Partial, k).unwrap();
            if d > best.0 {
                best = (d, mask);
            }
        }
        let picked: Vec<usize> = (0..6).filter(|t| best.1 >> t & 1 == 1).collect();
        assert_eq!(choice.tasks, picked);
        assert!((best.0 - choice.delta()).abs() < 1e-9);
    }

    #[test]
    fn full_scheme_uses_all_tasks() {
        let data = shared_signal(&[0, 1], 4, 5);
        let state = FitState::new(&data);
        let params = MicCostParams::new(data.m(), 4, 2.0).unwrap();
        let choice = best_subset_for_feature(&state, 0, &params, MicScheme::Full).unwrap();
        assert_eq!(choice.tasks, vec![0, 1, 2, 3]);
        assert_eq!(choice.delta_sm, params.model_cost(MicScheme::Full, 4).unwrap());
    }

    #[test]
    fn bound_is_tight_at_k_equals_h() {
        let data = shared_signal(&[0, 1, 2], 6, 3);
        let state = FitState::new(&data);
        let params = MicCostParams::new(data.m(), 6, 2.0).unwrap();
        let tdl = state.residual_bits_floored();
        let gains: Vec<f64> = (0..6).map(|t| state.delta_se(0, &[t]).unwrap()).collect();
        let all: f64 = gains.iter().sum();
        let cost = params.model_cost(MicScheme::Partial, 6).unwrap();
        let bound = lower_bound(tdl, all, cost);
        let mut full = state.clone();
        full.add(0, &[0, 1, 2, 3, 4, 5]).unwrap();
        let actual = full.residual_bits_floored() + cost;
        assert!((bound - actual).abs() < 1e-8);
    }

    #[test]
    fn pure_noise_selects_nothing_mostly() {
        let mut empty = 0;
        for seed in 0..1000 {
            let data = noise(50, 200, 5, seed);
            let model = run_mic(&data, &MicSearchConfig::new(MicScheme::Partial)).unwrap();
            if model.selected_features().is_empty() {
                empty += 1;
            }
        }
        assert!(empty >= 950, "{empty}/1000 empty");
    }

    #[test]
    fn ric_selects_per_task() {
        let data = shared_signal(&[1, 3], 4, 8);
        let model = run_mic(&data, &MicSearchConfig::new(MicScheme::Ric)).unwrap();
        assert_eq!(model.inclusions()[0], (0, vec![1, 3]));
        assert!(model.events.iter().all(|e| matches!(e, Event::Add { tasks, .. } if tasks.len() == 1)));
    }

    #[test]
    fn single_task_schemes_select_identically() {
        for seed in 0..10 {
            let mut data = noise(60, 25, 1, seed);
            for i in 0..60 {
                data.y[(i, 0)] += 0.8 * data.x[(i, 2)] - 0.6 * data.x[(i, 9)];
            }
            let sets: Vec<Vec<usize>> = [MicScheme::Partial, MicScheme::Full, MicScheme::Ric]
                .into_iter()
                .map(|s| run_mic(&data, &MicSearchConfig::new(s)).unwrap().selected_features())
                .collect();
            assert_eq!(sets[0], sets[1]);
            assert_eq!(sets[1], sets[2]);
        }
    }

    #[test]
    fn wide_prefilter_is_noop_and_ledger_replays() {
        let data = shared_signal(&[0, 2, 3], 5, 21);
        let mut cfg = MicSearchConfig::new(MicScheme::Partial);
        let narrow = run_mic(&data, &cfg).unwrap();
        cfg.top_t = data.m();
        let wide = run_mic(&data, &cfg).unwrap();
        cfg.top_t = data.m() + 100;
        let wider = run_mic(&data, &cfg).unwrap();
        assert_eq!(wide, wider);
        assert_eq!(narrow.selected_features(), wide.selected_features());
        let replayed = replay_tdl(&data, &wide).unwrap();
        assert!((replayed - wide.total_tdl).abs() < 1e-6);
    }

    #[test]
    fn tdl_decreases_at_each_acceptance() {
        let data = shared_signal(&[0, 1, 2, 3], 5, 2);
        let model = run_mic(&data, &MicSearchConfig::new(MicScheme::Partial)).unwrap();
        assert!(!model.events.is_empty());
        for e in &model.events {
            if let Event::Add { d_se, d_sm, .. } = e {
                assert!(d_se - d_sm > 0.0);
            }
        }
        assert!(model.total_tdl < model.null_se);
    }
}
