//! Synthetic multi-task scenarios with known supports.
//!
//! Every random quantity draws from its own ChaCha8 stream: the seed picks
//! the key, and the stream number is `16 * scenario + part`, where `part`
//! identifies the support layout, X, beta or noise. Changing one part's
//! size therefore never shifts the draws of another.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{ClassMap, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    /// Feature i is shared by a decreasing share of the tasks; every task
    /// fills its remaining slots with its own random features.
    Partial,
    /// The first `m_star` features are in every task.
    Full,
    /// Each task draws its own `m_star` features.
    Independent,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Partial, ScenarioKind::Full, ScenarioKind::Independent];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Partial => "partial",
            ScenarioKind::Full => "full",
            ScenarioKind::Independent => "independent",
        }
    }

    fn stream_base(self) -> u64 {
        match self {
            ScenarioKind::Partial => 0,
            ScenarioKind::Full => 16,
            ScenarioKind::Independent => 32,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Spec(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub m: usize,
    pub h: usize,
    /// True features per task.
    pub m_star: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        ScenarioSpec {
            kind,
            n: 100,
            m: 2000,
            h: 20,
            m_star: 4,
            noise_sd: 0.1f64.sqrt(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.h == 0 || self.m == 0 {
            return Err(Error::Spec(format!(
                "need n >= 2, m >= 1, h >= 1 (got n={}, m={}, h={})",
                self.n, self.m, self.h
            )));
        }
        if self.m_star == 0 || self.m_star > self.m {
            return Err(Error::Spec(format!(
                "m_star must be in 1..={} (got {})",
                self.m, self.m_star
            )));
        }
        if self.kind == ScenarioKind::Partial && self.m < 2 * self.m_star {
            return Err(Error::Spec(format!(
                "partial layout needs m >= 2 * m_star (got m={}, m_star={})",
                self.m, self.m_star
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Spec("noise_sd must be finite and nonnegative".into()));
        }
        Ok(())
    }

    fn rng(&self, part: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.kind.stream_base() + part);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// m × h indicator of true nonzero coefficients.
    pub support: Vec<Vec<bool>>,
    /// m × h coefficients, zero off the support.
    pub beta: DMatrix<f64>,
}

impl GroundTruth {
    pub fn features(&self) -> Vec<usize> {
        (0..self.support.len())
            .filter(|&j| self.support[j].iter().any(|&b| b))
            .collect()
    }

    /// Number of true features in each task.
    pub fn column_sums(&self) -> Vec<usize> {
        let h = self.beta.ncols();
        (0..h)
            .map(|t| self.support.iter().filter(|row| row[t]).count())
            .collect()
    }
}

/// Number of tasks sharing the i-th partial-layout feature: h, 3h/4, h/2, h/4
/// for four features, rounded to nearest.
fn partial_share(i: usize, m_star: usize, h: usize) -> usize {
    ((h * (m_star - i)) as f64 / m_star as f64).round() as usize
}

#[allow(clippy::needless_range_loop)]
fn layout(spec: &ScenarioSpec) -> Vec<Vec<bool>> {
    let (m, h, k) = (spec.m, spec.h, spec.m_star);
    let mut support = vec![vec![false; h]; m];
    let mut rng = spec.rng(0);
    match spec.kind {
        ScenarioKind::Full => {
            for row in support.iter_mut().take(k) {
                row.fill(true);
            }
        }
        ScenarioKind::Independent => {
            for t in 0..h {
                for j in index::sample(&mut rng, m, k) {
                    support[j][t] = true;
                }
            }
        }
        ScenarioKind::Partial => {
            let shares: Vec<usize> = (0..k).map(|i| partial_share(i, k, h)).collect();
            for (i, &share) in shares.iter().enumerate() {
                support[i][..share].fill(true);
            }
            for t in 0..h {
                let missing = shares.iter().filter(|&&s| t >= s).count();
                for j in index::sample(&mut rng, m - k, missing) {
                    support[k + j][t] = true;
                }
            }
        }
    }
    support
}

/// Draws a scenario: X and beta standard normal, `Y = X beta + noise`, each
/// response column then thresholded at its own mean to 0/1.
pub fn generate(spec: &ScenarioSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let support = layout(spec);
    let (n, m, h) = (spec.n, spec.m, spec.h);

    let mut x_rng = spec.rng(1);
    let x = DMatrix::from_fn(n, m, |_, _| x_rng.sample(StandardNormal));

    let mut b_rng = spec.rng(2);
    let mut beta = DMatrix::zeros(m, h);
    for t in 0..h {
        for (j, row) in support.iter().enumerate() {
            if row[t] {
                beta[(j, t)] = b_rng.sample(StandardNormal);
            }
        }
    }

    let mut e_rng = spec.rng(3);
    let noise = DMatrix::from_fn(n, h, |_, _| spec.noise_sd * e_rng.sample::<f64, _>(StandardNormal));
    let continuous = &x * &beta + noise;
    let y = binarize(&continuous);

    let data = Dataset::new(x, y)?;
    Ok((data, GroundTruth { support, beta }))
}

/// 1 where a value is at or above its column mean.
pub fn binarize(y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for (t, col) in y.column_iter().enumerate() {
        let mean = col.mean();
        for (i, v) in col.iter().enumerate() {
            out[(i, t)] = if *v >= mean { 1.0 } else { 0.0 };
        }
    }
    out
}

/// Attaches a contiguous class map of `k` classes, as used when running
/// class-aware schemes on synthetic data.
pub fn with_contiguous_classes(data: Dataset, k: usize) -> Result<Dataset> {
    let map = ClassMap::contiguous(data.m(), k)?;
    data.with_class_map(map)
}

/// Related regression tasks for transfer experiments: several training
/// tasks and one small test task, all continuous, over a feature set
/// split into equal contiguous classes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSpec {
    pub m: usize,
    pub classes: usize,
    pub m_star: usize,
    pub train_tasks: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_sd: f64,
    /// Training tasks get a support disjoint from the test task's.
    pub adversarial: bool,
    pub seed: u64,
}

impl TransferSpec {
    pub fn new(seed: u64) -> Self {
        TransferSpec {
            m: 500,
            classes: 50,
            m_star: 4,
            train_tasks: 4,
            n_train: 200,
            n_test: 30,
            noise_sd: 1.0,
            adversarial: false,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferInstance {
    pub train: Vec<Dataset>,
    pub test: Dataset,
    /// True features of the test task, ascending.
    pub support: Vec<usize>,
}

/// Coefficients are drawn as ±(0.5 + U(0, 1)) per task and feature, so
/// tasks share which features matter but not how much.
pub fn generate_transfer(spec: &TransferSpec) -> Result<TransferInstance> {
    let need = if spec.adversarial { 2 * spec.m_star } else { spec.m_star };
    if spec.m_star == 0 || need > spec.m || spec.classes == 0 || spec.classes > spec.m {
        return Err(Error::Spec(format!(
            "cannot place {} true features among {} features in {} classes",
            spec.m_star, spec.m, spec.classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(48);
    let picked = index::sample(&mut rng, spec.m, need).into_vec();
    let mut support = picked[..spec.m_star].to_vec();
    support.sort_unstable();
    let mut decoy = picked[spec.m_star..].to_vec();
    decoy.sort_unstable();
    let classes = ClassMap::contiguous(spec.m, spec.classes)?;

    let task = |n: usize, feats: &[usize], stream: u64| -> Result<Dataset> {
        let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
        r.set_stream(stream);
        let x = DMatrix::from_fn(n, spec.m, |_, _| r.sample(StandardNormal));
        let beta: Vec<f64> = feats
            .iter()
            .map(|_| {
                let mag = 0.5 + r.random::<f64>();
                if r.random::<bool>() { mag } else { -mag }
            })
            .collect();
        let y = DMatrix::from_fn(n, 1, |i, _| {
            feats.iter().zip(&beta).map(|(&j, b)| b * x[(i, j)]).sum::<f64>()
                + spec.noise_sd * r.sample::<f64, _>(StandardNormal)
        });
        Dataset::new(x, y)?.with_class_map(classes.clone())
    };
    let train_support = if spec.adversarial { decoy } else { support.clone() };
    let train = (0..spec.train_tasks)
        .map(|i| task(spec.n_train, &train_support, 49 + i as u64))
        .collect::<Result<Vec<_>>>()?;
    let test = task(spec.n_test, &support, 49 + spec.train_tasks as u64)?;
    Ok(TransferInstance { train, test, support })
}
