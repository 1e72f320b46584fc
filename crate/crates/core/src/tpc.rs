//! Three-part coding for single-response selection over classed features.
//!
//! A selected feature costs `l_C + l_I + l_theta` bits: `l_C` names its
//! class (`log2 K` the first time a class is used, `log2 Q` afterwards,
//! with `Q` the number of classes already in the model), `l_I = log2 m_k`
//! names the feature within its class, and `l_theta` codes the
//! coefficient.

use std::collections::HashSet;

use crate::codes::DEFAULT_L_THETA;
use crate::dataset::{ClassMap, Dataset};
use crate::error::{Error, Result};
use crate::fit::FitState;
use crate::model::{task_coefficients, Event, FeatureRef, Scheme, SelectionModel, TransferSetting};
use crate::replay;

/// Selection state the class-aware codes depend on.
#[derive(Debug, Clone)]
pub struct TpcState<'a> {
    classes: Option<&'a ClassMap>,
    m: usize,
    selected_features: Vec<usize>,
    selected_classes: Vec<usize>,
}

impl<'a> TpcState<'a> {
    pub fn new(classes: Option<&'a ClassMap>, m: usize) -> Self {
        TpcState {
            classes,
            m,
            selected_features: Vec::new(),
            selected_classes: Vec::new(),
        }
    }

    pub fn for_dataset(data: &'a Dataset) -> Self {
        TpcState::new(data.class_map.as_ref(), data.m())
    }

    pub fn classes(&self) -> Option<&'a ClassMap> {
        self.classes
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn selected_features(&self) -> &[usize] {
        &self.selected_features
    }

    /// Classes in order of first selection.
    pub fn selected_classes(&self) -> &[usize] {
        &self.selected_classes
    }

    /// Number of selected features, `q`.
    pub fn q(&self) -> usize {
        self.selected_features.len()
    }

    /// Number of selected classes, `Q`.
    pub fn num_classes_selected(&self) -> usize {
        self.selected_classes.len()
    }

    pub fn class_of(&self, feature: usize) -> Option<usize> {
        self.classes.map(|c| c.class_of(feature))
    }

    pub fn is_class_selected(&self, class: usize) -> bool {
        self.selected_classes.contains(&class)
    }

    /// Records `feature` as selected; returns whether its class is new.
    pub fn push(&mut self, feature: usize) -> bool {
        self.selected_features.push(feature);
        match self.class_of(feature) {
            Some(c) if !self.selected_classes.contains(&c) => {
                self.selected_classes.push(c);
                true
            }
            _ => false,
        }
    }

    /// Bits to name the class of a feature whose class is already in the
    /// model: `log2 Q`, with `Q >= 1`.
    pub fn repeat_class_bits(&self) -> f64 {
        (self.selected_classes.len().max(1) as f64).log2()
    }
}

/// Model bits charged for adding one feature given the current selection.
pub trait FeatureCoder: Sync {
    fn bits(&self, state: &TpcState, feature: usize) -> f64;
}

/// Three-part code. Without a class map it degrades to [`RicCoder`].
#[derive(Debug, Clone, Copy)]
pub struct TpcCoder {
    pub l_theta: f64,
}

impl TpcCoder {
    pub fn new(l_theta: f64) -> Self {
        TpcCoder { l_theta }
    }
}

impl FeatureCoder for TpcCoder {
    fn bits(&self, state: &TpcState, feature: usize) -> f64 {
        tpc_model_bits(state, feature, self.l_theta)
            .unwrap_or_else(|_| (state.m() as f64).log2() + self.l_theta)
    }
}

/// `log2 m + l_theta` per feature.
#[derive(Debug, Clone, Copy)]
pub struct RicCoder {
    index_bits: f64,
    l_theta: f64,
}

impl RicCoder {
    pub fn new(m: usize, l_theta: f64) -> Self {
        RicCoder {
            index_bits: (m as f64).log2(),
            l_theta,
        }
    }
}

impl FeatureCoder for RicCoder {
    fn bits(&self, _state: &TpcState, _feature: usize) -> f64 {
        self.index_bits + self.l_theta
    }
}

/// `l_C + log2 m_k + l_theta` for adding `feature`.
pub fn tpc_model_bits(state: &TpcState, feature: usize, l_theta: f64) -> Result<f64> {
    let classes = state.classes().ok_or(Error::NoClassMap)?;
    let class = classes.class_of(feature);
    let class_bits = if state.is_class_selected(class) {
        state.repeat_class_bits()
    } else {
        (classes.num_classes() as f64).log2()
    };
    let index_bits = (classes.class_size(class) as f64).log2();
    Ok(class_bits + index_bits + l_theta)
}

/// Model bits of `order` charged one feature at a time from an empty
/// selection.
pub fn replay_model_bits(data: &Dataset, coder: &dyn FeatureCoder, order: &[usize]) -> f64 {
    let mut state = TpcState::for_dataset(data);
    let mut bits = 0.0;
    for &j in order {
        bits += coder.bits(&state, j);
        state.push(j);
    }
    bits
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpcConfig {
    pub l_theta: f64,
    pub max_features: Option<usize>,
    /// Forced additions past the stopping point before the backward pass.
    pub extra_steps: usize,
}

impl Default for TpcConfig {
    fn default() -> Self {
        TpcConfig {
            l_theta: DEFAULT_L_THETA,
            max_features: None,
            extra_steps: 0,
        }
    }
}

fn add_event(data: &Dataset, tpc: &TpcState, feature: usize, task: usize, d_se: f64, d_sm: f64, new_class: bool) -> Event {
    Event::Add {
        feature: FeatureRef::new(feature, data.feature_names[feature].clone()),
        tasks: vec![task],
        d_se,
        d_sm,
        class: tpc.classes().map(|c| {
            (c.names()[c.class_of(feature)].clone(), new_class)
        }),
    }
}

/// One forward step on `task`: adds the feature with the largest net
/// savings. Unless `force`, only a strictly positive saving is accepted.
/// Returns whether a feature was added.
fn forward_step(
    state: &mut FitState,
    task: usize,
    tpc: &mut TpcState,
    coder: &dyn FeatureCoder,
    force: bool,
    events: &mut Vec<Event>,
    banned: &mut HashSet<usize>,
) -> Result<bool> {
    loop {
        let scores = state.score_task(task);
        let mut best: Option<(usize, f64)> = None;
        let mut best_delta = if force { f64::NEG_INFINITY } else { 0.0 };
        for (j, cand) in scores.into_iter().enumerate() {
            if banned.contains(&j) {
                continue;
            }
            let Some(gain) = state.candidate_gain(cand, task) else {
                continue;
            };
            let delta = gain - coder.bits(tpc, j);
            if delta > best_delta {
                best_delta = delta;
                best = Some((j, delta));
            }
        }
        let Some((j, _)) = best else { return Ok(false) };
        let d_sm = coder.bits(tpc, j);
        let before = state.residual_bits_floored();
        match state.add(j, &[task]) {
            Ok(()) => {}
            Err(Error::SingularDesign { .. }) => {
                banned.insert(j);
                continue;
            }
            Err(e) => return Err(e),
        }
        let d_se = before - state.residual_bits_floored();
        let new_class = tpc.push(j);
        events.push(add_event(state.data(), tpc, j, task, d_se, d_sm, new_class));
        return Ok(true);
    }
}

/// Forward stepwise selection on one task until no feature saves bits.
pub fn stepwise_single_task(
    state: &mut FitState,
    task: usize,
    tpc: &mut TpcState,
    coder: &dyn FeatureCoder,
    max_features: Option<usize>,
    events: &mut Vec<Event>,
) -> Result<()> {
    let mut banned = HashSet::new();
    let mut added = 0;
    while max_features.is_none_or(|cap| added < cap) {
        if !forward_step(state, task, tpc, coder, false, events, &mut banned)? {
            break;
        }
        added += 1;
    }
    Ok(())
}

fn require_single_task(data: &Dataset) -> Result<()> {
    if data.h() != 1 {
        return Err(Error::domain(format!(
            "class-aware selection needs a single response, got h={}",
            data.h()
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    data: &Dataset,
    state: &FitState,
    scheme: Scheme,
    setting: Option<TransferSetting>,
    l_theta: f64,
    null_se: f64,
    events: Vec<Event>,
    total_tdl: f64,
) -> SelectionModel {
    SelectionModel {
        scheme,
        setting,
        n: data.n(),
        m: data.m(),
        h: data.h(),
        l_theta,
        null_se,
        events,
        fits: task_coefficients(state),
        total_tdl,
        flags: None,
    }
}

/// Forward stepwise search with an arbitrary coder.
pub(crate) fn run_forward(
    data: &Dataset,
    coder: &dyn FeatureCoder,
    config: &TpcConfig,
    scheme: Scheme,
    setting: Option<TransferSetting>,
) -> Result<SelectionModel> {
    require_single_task(data)?;
    let mut state = FitState::new(data);
    let null_se = state.residual_bits_floored();
    let mut tpc = TpcState::for_dataset(data);
    let mut events = Vec::new();
    stepwise_single_task(&mut state, 0, &mut tpc, coder, config.max_features, &mut events)?;
    let total = state.residual_bits_floored() + replay_model_bits(data, coder, tpc.selected_features());
    Ok(finish(data, &state, scheme, setting, config.l_theta, null_se, events, total))
}

/// Forward stepwise selection under the three-part code. Without a class
/// map every feature costs `log2 m + l_theta`.
pub fn run_tpc(data: &Dataset, config: &TpcConfig) -> Result<SelectionModel> {
    run_forward(data, &TpcCoder::new(config.l_theta), config, Scheme::Tpc, None)
}

/// Description length of the single-task model with features `order`,
/// recomputed from scratch.
pub fn subset_tdl(data: &Dataset, coder: &dyn FeatureCoder, order: &[usize]) -> Result<f64> {
    Ok(replay::residual_bits_from_scratch(data, &[order.to_vec()])?
        + replay_model_bits(data, coder, order))
}

pub(crate) fn run_forward_backward(
    data: &Dataset,
    coder: &dyn FeatureCoder,
    config: &TpcConfig,
    scheme: Scheme,
    setting: Option<TransferSetting>,
) -> Result<SelectionModel> {
    let forward = run_forward(data, coder, config, scheme, setting)?;
    let forward_order: Vec<usize> = forward.acceptance_order().iter().map(|f| f.index).collect();

    let mut state = FitState::with_support(data, std::slice::from_ref(&forward_order))?;
    let mut tpc = TpcState::for_dataset(data);
    for &j in &forward_order {
        tpc.push(j);
    }
    let mut events = forward.events.clone();
    let mut banned = HashSet::new();
    let mut forced = 0;
    for _ in 0..config.extra_steps {
        if !forward_step(&mut state, 0, &mut tpc, coder, true, &mut events, &mut banned)? {
            break;
        }
        forced += 1;
    }

    let mut order = tpc.selected_features().to_vec();
    let mut tdl = subset_tdl(data, coder, &order)?;
    let mut removed = 0;
    while !order.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..order.len() {
            let mut trial = order.clone();
            trial.remove(i);
            let t = subset_tdl(data, coder, &trial)?;
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((i, t));
            }
        }
        let (i, t) = best.unwrap();
        if t >= tdl {
            break;
        }
        let j = order.remove(i);
        events.push(Event::Remove {
            feature: FeatureRef::new(j, data.feature_names[j].clone()),
            d_tdl: tdl - t,
        });
        tdl = t;
        removed += 1;
    }

    if forced == 0 && removed == 0 {
        return Ok(forward);
    }
    let forward_tdl = subset_tdl(data, coder, &forward_order)?;
    if tdl >= forward_tdl {
        return Ok(forward);
    }
    let state = FitState::with_support(data, &[order])?;
    Ok(finish(data, &state, scheme, setting, config.l_theta, forward.null_se, events, tdl))
}

/// Forward stepwise past the stopping point by `extra_steps` forced
/// additions, then backward elimination of whichever feature's removal
/// most reduces the description length, while it does. Never returns a
/// model longer than plain forward selection.
pub fn run_tpc_forward_backward(data: &Dataset, config: &TpcConfig) -> Result<SelectionModel> {
    run_forward_backward(
        data,
        &TpcCoder::new(config.l_theta),
        config,
        Scheme::TpcForwardBackward,
        None,
    )
}

pub(crate) fn run_streamwise(
    data: &Dataset,
    coder: &dyn FeatureCoder,
    config: &TpcConfig,
    feature_order: &[usize],
    scheme: Scheme,
    setting: Option<TransferSetting>,
) -> Result<SelectionModel> {
    require_single_task(data)?;
    let m = data.m();
    let mut seen = vec![false; m];
    if feature_order.len() != m
        || feature_order
            .iter()
            .any(|&j| j >= m || std::mem::replace(&mut seen[j], true))
    {
        return Err(Error::domain("feature order must be a permutation of all features"));
    }
    let mut state = FitState::new(data);
    let null_se = state.residual_bits_floored();
    let mut tpc = TpcState::for_dataset(data);
    let mut events = Vec::new();
    for &j in feature_order {
        if config.max_features.is_some_and(|cap| tpc.q() >= cap) {
            break;
        }
        let Some(gain) = state.candidate_gain(state.candidate(j, 0), 0) else {
            continue;
        };
        let d_sm = coder.bits(&tpc, j);
        if gain - d_sm <= 0.0 {
            continue;
        }
        let before = state.residual_bits_floored();
        match state.add(j, &[0]) {
            Ok(()) => {}
            Err(Error::SingularDesign { .. }) => continue,
            Err(e) => return Err(e),
        }
        let d_se = before - state.residual_bits_floored();
        let new_class = tpc.push(j);
        events.push(add_event(data, &tpc, j, 0, d_se, d_sm, new_class));
    }
    let total = state.residual_bits_floored() + replay_model_bits(data, coder, tpc.selected_features());
    Ok(finish(data, &state, scheme, setting, config.l_theta, null_se, events, total))
}

/// Single pass over `feature_order`; each feature is added iff it saves
/// bits when encountered and is never revisited.
pub fn run_tpc_streamwise(
    data: &Dataset,
    config: &TpcConfig,
    feature_order: &[usize],
) -> Result<SelectionModel> {
    run_streamwise(
        data,
        &TpcCoder::new(config.l_theta),
        config,
        feature_order,
        Scheme::TpcStreamwise,
        None,
    )
}

/// Bits saved by the three-part code over index-plus-coefficient coding
/// for `q` selected features spread over `big_q` classes, computed from
/// the two total-cost expressions. `selected_class_of_each` lists the
/// class of every selected feature.
pub fn tpc_savings(
    q: usize,
    big_q: usize,
    k: usize,
    m: usize,
    class_sizes: &[usize],
    selected_class_of_each: &[usize],
) -> Result<f64> {
    if big_q < 1 || big_q > q || big_q > k {
        return Err(Error::domain(format!("need 1 <= Q <= min(q, K), got q={q}, Q={big_q}, K={k}")));
    }
    if class_sizes.len() != k || selected_class_of_each.len() != q {
        return Err(Error::domain("class sizes or selected classes have the wrong length"));
    }
    if class_sizes.contains(&0) {
        return Err(Error::domain("class sizes must be positive"));
    }
    let distinct: HashSet<usize> = selected_class_of_each.iter().copied().collect();
    if distinct.len() != big_q || distinct.iter().any(|&c| c >= k) {
        return Err(Error::domain("selected classes do not match Q"));
    }
    let (qf, bqf) = (q as f64, big_q as f64);
    let scs = qf * (m as f64).log2() + 2.0 * qf;
    let index: f64 = selected_class_of_each
        .iter()
        .map(|&c| (class_sizes[c] as f64).log2())
        .sum();
    let tpc = bqf * (k as f64).log2() + (qf - bqf) * bqf.log2() + index + 2.0 * qf;
    Ok(scs - tpc)
}

/// Closed form of the savings for equal-size classes: `(q - Q) log2(K / Q)`.
pub fn uniform_savings(q: usize, big_q: usize, k: usize) -> f64 {
    (q - big_q) as f64 * (k as f64 / big_q as f64).log2()
}

/// Closed form for unequal class sizes: the uniform term plus
/// `sum_i log2(m_avg / m_k(i))` over the selected features.
pub fn nonuniform_savings(q: usize, big_q: usize, k: usize, m: usize, selected_sizes: &[usize]) -> f64 {
    let m_avg = m as f64 / k as f64;
    uniform_savings(q, big_q, k)
        + selected_sizes
            .iter()
            .map(|&s| (m_avg / s as f64).log2())
            .sum::<f64>()
}
