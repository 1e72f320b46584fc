use std::fmt;
use std::str::FromStr;

use crate::codes::MicScheme;
use crate::error::{Error, Result};
use crate::fit::FitState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    PartialMic,
    FullMic,
    Ric,
    Tpc,
    TpcForwardBackward,
    TpcStreamwise,
    TransferTpc,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::PartialMic,
        Scheme::FullMic,
        Scheme::Ric,
        Scheme::Tpc,
        Scheme::TpcForwardBackward,
        Scheme::TpcStreamwise,
        Scheme::TransferTpc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::PartialMic => "partial-mic",
            Scheme::FullMic => "full-mic",
            Scheme::Ric => "ric",
            Scheme::Tpc => "tpc",
            Scheme::TpcForwardBackward => "tpc-fb",
            Scheme::TpcStreamwise => "tpc-stream",
            Scheme::TransferTpc => "transfer-tpc",
        }
    }

    pub fn mic(self) -> Option<MicScheme> {
        match self {
            Scheme::PartialMic => Some(MicScheme::Partial),
            Scheme::FullMic => Some(MicScheme::Full),
            Scheme::Ric => Some(MicScheme::Ric),
            _ => None,
        }
    }

    pub fn is_class_aware(self) -> bool {
        self.mic().is_none()
    }
}

impl From<MicScheme> for Scheme {
    fn from(s: MicScheme) -> Self {
        match s {
            MicScheme::Partial => Scheme::PartialMic,
            MicScheme::Full => Scheme::FullMic,
            MicScheme::Ric => Scheme::Ric,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown scheme `{s}`")))
    }
}

/// Which parts of the transfer prior enter the code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransferSetting {
    /// Priors on both feature classes and features.
    ClassAndFeature,
    /// Prior on features only; new classes cost `log2 K`.
    FeatureOnly,
}

impl TransferSetting {
    pub fn number(self) -> u8 {
        match self {
            TransferSetting::ClassAndFeature => 1,
            TransferSetting::FeatureOnly => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(TransferSetting::ClassAndFeature),
            2 => Ok(TransferSetting::FeatureOnly),
            _ => Err(Error::domain(format!("transfer setting must be 1 or 2, got {n}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureRef {
    pub index: usize,
    pub name: String,
}

impl FeatureRef {
    pub fn new(index: usize, name: impl Into<String>) -> Self {
        FeatureRef {
            index,
            name: name.into(),
        }
    }
}

/// One entry of the acceptance ledger.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Add {
        feature: FeatureRef,
        tasks: Vec<usize>,
        d_se: f64,
        d_sm: f64,
        /// Class of the feature and whether this addition brought the
        /// class into the model. Only recorded by class-aware schemes.
        class: Option<(String, bool)>,
    },
    Remove {
        feature: FeatureRef,
        d_tdl: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskCoefficients {
    pub intercept: f64,
    pub terms: Vec<(FeatureRef, f64)>,
}

/// A fitted selection: which features entered which task models, the
/// bit ledger of every acceptance, and the final least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionModel {
    pub scheme: Scheme,
    pub setting: Option<TransferSetting>,
    pub n: usize,
    pub m: usize,
    pub h: usize,
    pub l_theta: f64,
    /// Residual bits of the intercept-only fit.
    pub null_se: f64,
    pub events: Vec<Event>,
    pub fits: Vec<TaskCoefficients>,
    pub total_tdl: f64,
    pub flags: Option<String>,
}

impl SelectionModel {
    /// Final per-task feature lists, in the order they were fit.
    pub fn support(&self) -> Vec<Vec<usize>> {
        self.fits
            .iter()
            .map(|f| f.terms.iter().map(|(r, _)| r.index).collect())
            .collect()
    }

    /// m × h indicator of nonzero coefficients.
    pub fn support_matrix(&self) -> Vec<Vec<bool>> {
        let mut s = vec![vec![false; self.h]; self.m];
        for (t, f) in self.fits.iter().enumerate() {
            for (r, _) in &f.terms {
                s[r.index][t] = true;
            }
        }
        s
    }

    /// Features with a nonzero coefficient in any task, ascending.
    pub fn selected_features(&self) -> Vec<usize> {
        let mut feats: Vec<usize> = self
            .fits
            .iter()
            .flat_map(|f| f.terms.iter().map(|(r, _)| r.index))
            .collect();
        feats.sort_unstable();
        feats.dedup();
        feats
    }

    pub fn num_coefficients(&self) -> usize {
        self.fits.iter().map(|f| f.terms.len()).sum()
    }

    /// Per feature, the tasks that include it, merged across ledger
    /// entries and ordered by feature index.
    pub fn inclusions(&self) -> Vec<(usize, Vec<usize>)> {
        let support = self.support_matrix();
        support
            .iter()
            .enumerate()
            .filter_map(|(j, row)| {
                let tasks: Vec<usize> = (0..self.h).filter(|&t| row[t]).collect();
                (!tasks.is_empty()).then_some((j, tasks))
            })
            .collect()
    }

    /// Sum of model bits charged by the ledger's additions.
    pub fn ledger_model_bits(&self) -> f64 {
        self.events
            .iter()
            .map(|e| match e {
                Event::Add { d_sm, .. } => *d_sm,
                Event::Remove { .. } => 0.0,
            })
            .sum()
    }

    pub fn ledger_residual_reduction(&self) -> f64 {
        self.events
            .iter()
            .map(|e| match e {
                Event::Add { d_se, .. } => *d_se,
                Event::Remove { .. } => 0.0,
            })
            .sum()
    }

    /// Ordered list of features as added (removed ones dropped).
    pub fn acceptance_order(&self) -> Vec<FeatureRef> {
        let mut order: Vec<FeatureRef> = Vec::new();
        for e in &self.events {
            match e {
                Event::Add { feature, .. } => {
                    if !order.contains(feature) {
                        order.push(feature.clone());
                    }
                }
                Event::Remove { feature, .. } => order.retain(|f| f != feature),
            }
        }
        order
    }
}

/// Final coefficients of every task in `state`, named from its dataset.
pub(crate) fn task_coefficients(state: &FitState) -> Vec<TaskCoefficients> {
    let names = &state.data().feature_names;
    (0..state.h())
        .map(|t| {
            let (intercept, coefs) = state.coefficients(t);
            TaskCoefficients {
                intercept,
                terms: coefs
                    .into_iter()
                    .map(|(j, v)| (FeatureRef::new(j, names[j].clone()), v))
                    .collect(),
            }
        })
        .collect()
}
