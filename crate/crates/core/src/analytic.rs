//! Closed-form handoff latency and jitter amplification.
//!
//! All delay terms except `t_local` are roundtrip times in microseconds.
//! Halving happens once, at the end, and only on even sums.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AnalyticError {
    #[error("t_CN is zero")]
    DivisionByZero,
    #[error("cannot halve odd roundtrip sum {0} in whole microseconds")]
    OddSum(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DelayProfile {
    /// Local handover time (one-sided).
    pub t_local: Micros,
    /// Roundtrip MN to home agent.
    pub t_ha: Micros,
    /// Roundtrip MN to correspondent.
    pub t_cn: Micros,
    /// Roundtrip home agent to correspondent; `None` approximates it by `t_cn`.
    pub t_ha_cn: Option<Micros>,
}

impl DelayProfile {
    pub fn new(t_local: Micros, t_ha: Micros, t_cn: Micros) -> Self {
        DelayProfile {
            t_local,
            t_ha,
            t_cn,
            t_ha_cn: None,
        }
    }

    pub fn with_ha_cn(mut self, t_ha_cn: Micros) -> Self {
        self.t_ha_cn = Some(t_ha_cn);
        self
    }

    pub fn ha_cn(&self) -> Micros {
        self.t_ha_cn.unwrap_or(self.t_cn)
    }
}

fn half(sum: u64) -> Result<Micros, AnalyticError> {
    if sum.is_multiple_of(2) {
        Ok(sum / 2)
    } else {
        Err(AnalyticError::OddSum(sum))
    }
}

/// Home binding: one roundtrip to the home agent.
pub fn bu_home_time(p: &DelayProfile) -> Micros {
    p.t_ha
}

/// Return routability followed by the binding update to the correspondent,
/// without acknowledgement.
pub fn bu_cn_time(p: &DelayProfile) -> Result<Micros, AnalyticError> {
    let init = p.t_cn.max(p.ha_cn() + p.t_ha);
    let test = p.t_cn.max(p.ha_cn() + p.t_ha);
    half(init + test + p.t_cn)
}

pub fn handoff_time_exact(p: &DelayProfile) -> Result<Micros, AnalyticError> {
    Ok(p.t_local + bu_home_time(p) + bu_cn_time(p)?)
}

/// `t_local + 3/2 t_CN + 2 t_HA`.
pub fn handoff_time_approx(p: &DelayProfile) -> Result<Micros, AnalyticError> {
    Ok(p.t_local + half(3 * p.t_cn + 4 * p.t_ha)?)
}

pub fn jitter_ratio_exact(p: &DelayProfile) -> Result<f64, AnalyticError> {
    if p.t_cn == 0 {
        return Err(AnalyticError::DivisionByZero);
    }
    Ok((p.ha_cn() + p.t_ha) as f64 / p.t_cn as f64)
}

pub fn jitter_ratio_approx(p: &DelayProfile) -> Result<f64, AnalyticError> {
    if p.t_cn == 0 {
        return Err(AnalyticError::DivisionByZero);
    }
    Ok((p.t_ha + p.t_cn) as f64 / p.t_cn as f64)
}
