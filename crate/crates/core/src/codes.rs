//! Bit-cost primitives for the model part of a two-part code.
//!
//! All lengths are in bits (base-2 logarithms). The per-feature model cost
//! for the multi-task schemes is
//!
//! * partial: `log2 m + (log* k + c_h + log2 C(h, k)) + k * l_theta`
//! * full:    `log2 m + h * l_theta`
//! * ric:     `k * (log2 m + l_theta)`

use crate::error::{Error, Result};

/// Default bits charged per nonzero coefficient.
pub const DEFAULT_L_THETA: f64 = 2.0;

/// Iterated logarithm `log2 k + log2 log2 k + ...`, summing only the
/// strictly positive terms. Length function of the idealized universal
/// code for the positive integers.
pub fn log_star(k: u64) -> Result<f64> {
    if k < 1 {
        return Err(Error::domain("log* is defined for k >= 1"));
    }
    let mut total = 0.0;
    let mut x = k as f64;
    loop {
        x = x.log2();
        if x <= 0.0 {
            break;
        }
        total += x;
    }
    Ok(total)
}

fn log_star_unchecked(k: u64) -> f64 {
    log_star(k.max(1)).unwrap_or(0.0)
}

/// Normalizer for the universal code truncated to `{1, ..., h}`:
/// `log2 sum_k 2^-log*(k)`.
pub fn c_h(h: u64) -> f64 {
    if h == 0 {
        return 0.0;
    }
    let mass: f64 = (1..=h).map(|k| (-log_star_unchecked(k)).exp2()).sum();
    mass.log2()
}

/// `log2 C(h, k)` as a sum of logs.
pub fn log2_binomial(h: u64, k: u64) -> Result<f64> {
    if k > h {
        return Err(Error::domain(format!("C({h}, {k}) undefined")));
    }
    let k = k.min(h - k);
    Ok((1..=k)
        .map(|i| ((h - k + i) as f64).log2() - (i as f64).log2())
        .sum())
}

/// Bits to name a subset of `k` out of `h` tasks: size by the universal
/// code, then which subset by a uniform index.
pub fn l_h_subset(k: u64, h: u64) -> Result<f64> {
    if k < 1 || k > h {
        return Err(Error::domain(format!("subset size {k} outside [1, {h}]")));
    }
    Ok(log_star(k)? + c_h(h) + log2_binomial(h, k)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MicScheme {
    Partial,
    Full,
    Ric,
}

impl MicScheme {
    pub fn name(self) -> &'static str {
        match self {
            MicScheme::Partial => "partial-mic",
            MicScheme::Full => "full-mic",
            MicScheme::Ric => "ric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicCostParams {
    pub m: usize,
    pub h: usize,
    pub l_theta: f64,
    c_h: f64,
}

impl MicCostParams {
    pub fn new(m: usize, h: usize, l_theta: f64) -> Result<Self> {
        if m < 1 || h < 1 {
            return Err(Error::domain(format!("need m >= 1 and h >= 1, got m={m}, h={h}")));
        }
        if !(l_theta > 0.0 && l_theta.is_finite()) {
            return Err(Error::domain(format!("l_theta must be positive, got {l_theta}")));
        }
        Ok(MicCostParams {
            m,
            h,
            l_theta,
            c_h: c_h(h as u64),
        })
    }

    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    /// Bits to name one feature among `m`.
    pub fn index_bits(&self) -> f64 {
        (self.m as f64).log2()
    }

    fn subset_bits(&self, k: usize) -> f64 {
        let (k, h) = (k as u64, self.h as u64);
        log_star_unchecked(k) + self.c_h + log2_binomial(h, k).unwrap_or(f64::INFINITY)
    }

    /// Per-feature model cost of including a feature in `k` task models.
    pub fn model_cost(&self, scheme: MicScheme, k: usize) -> Result<f64> {
        match scheme {
            MicScheme::Partial => {
                if k < 1 || k > self.h {
                    return Err(Error::domain(format!("partial: k={k} outside [1, {}]", self.h)));
                }
                Ok(self.index_bits() + self.subset_bits(k) + k as f64 * self.l_theta)
            }
            MicScheme::Full => {
                if k != 0 && k != self.h {
                    return Err(Error::domain(format!("full: k must be 0 or {}, got {k}", self.h)));
                }
                Ok(self.index_bits() + self.h as f64 * self.l_theta)
            }
            MicScheme::Ric => {
                if k > self.h {
                    return Err(Error::domain(format!("ric: k={k} exceeds h={}", self.h)));
                }
                Ok(k as f64 * (self.index_bits() + self.l_theta))
            }
        }
    }
}

/// Cost of each scheme for a feature beneficial in `k` tasks. Full MIC is
/// always charged for all `h` tasks.
pub fn mic_model_cost(scheme: MicScheme, k: usize, params: &MicCostParams) -> Result<f64> {
    let k = match scheme {
        MicScheme::Full if k >= 1 && k <= params.h => params.h,
        _ => k,
    };
    params.model_cost(scheme, k)
}

/// One row of the three-scheme comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub k: usize,
    pub partial: f64,
    pub full: f64,
    pub ric: f64,
}

impl CostRow {
    /// Cheapest scheme; ties resolve partial, full, ric in that order.
    pub fn best(&self) -> MicScheme {
        let mut best = (MicScheme::Partial, self.partial);
        for (s, v) in [(MicScheme::Full, self.full), (MicScheme::Ric, self.ric)] {
            if v < best.1 {
                best = (s, v);
            }
        }
        best.0
    }
}

pub fn cost_table(params: &MicCostParams, ks: &[usize]) -> Result<Vec<CostRow>> {
    ks.iter()
        .map(|&k| {
            Ok(CostRow {
                k,
                partial: mic_model_cost(MicScheme::Partial, k, params)?,
                full: mic_model_cost(MicScheme::Full, k, params)?,
                ric: mic_model_cost(MicScheme::Ric, k, params)?,
            })
        })
        .collect()
}

/// Decomposed description length in bits.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CodeCosts {
    pub s_e: f64,
    pub l_i: f64,
    pub l_h: f64,
    pub l_theta_total: f64,
    pub total: f64,
}

impl CodeCosts {
    pub fn model(l_i: f64, l_h: f64, l_theta_total: f64) -> Self {
        CodeCosts {
            s_e: 0.0,
            l_i,
            l_h,
            l_theta_total,
            total: l_i + l_h + l_theta_total,
        }
    }
}
