//! Multi-trial execution, per-handover result rows and the closed-form
//! comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{self, AnalyticError, DelayProfile};
use crate::config::{Detection, Variant};
use crate::metrics::FlowLog;
use crate::report::{HandoverKind, HandoverReport, TrialResult};
use crate::scenario::Scenario;
use crate::time::{Micros, SimTime};
use crate::topology::{NodeId, NodeKind, Topology, TopologyError};
use crate::world::{simulate, SimError};

/// Seed of trial `trial` derived from the scenario seed.
pub fn trial_seed(seed: u64, trial: u32) -> u64 {
    let mut z = seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn run_trials_sequential(sc: &Scenario) -> Result<Vec<TrialResult>, SimError> {
    (0..sc.trials)
        .map(|t| simulate(sc, t, trial_seed(sc.seed, t)))
        .collect()
}

/// Runs trials on the rayon pool; results stay in trial order.
#[cfg(feature = "parallel")]
pub fn run_trials_parallel(sc: &Scenario) -> Result<Vec<TrialResult>, SimError> {
    use rayon::prelude::*;
    (0..sc.trials)
        .into_par_iter()
        .map(|t| simulate(sc, t, trial_seed(sc.seed, t)))
        .collect()
}

pub fn run_trials(sc: &Scenario) -> Result<Vec<TrialResult>, SimError> {
    #[cfg(feature = "parallel")]
    {
        run_trials_parallel(sc)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_trials_sequential(sc)
    }
}

/// One CSV row: a handover of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub trial: u32,
    pub variant: String,
    pub handover_index: usize,
    pub disruption_us: Option<Micros>,
    pub lost: u64,
    pub duplicates: u64,
    pub jitter_mad_before: String,
    pub jitter_mad_after: String,
    pub rtt_mean_us: String,
}

fn fixed(x: f64) -> String {
    format!("{x:.3}")
}

/// The flow used for per-handover statistics: the first probe, else the
/// first group receiver.
fn primary_flow(r: &TrialResult) -> Option<&FlowLog> {
    r.probes
        .first()
        .or_else(|| r.groups.first().and_then(|g| g.values().next()))
}

pub fn rows(sc: &Scenario, results: &[TrialResult]) -> Vec<Row> {
    let mut out = Vec::new();
    for r in results {
        let flow = primary_flow(r);
        let bounds: Vec<SimTime> = r.handovers.iter().map(|h| h.at).collect();
        if r.handovers.is_empty() {
            let s = flow.map(|f| f.stats()).unwrap_or_default();
            out.push(Row {
                trial: r.trial,
                variant: sc.variant.name().to_string(),
                handover_index: 0,
                disruption_us: None,
                lost: s.lost,
                duplicates: s.duplicates,
                jitter_mad_before: fixed(s.jitter_mad),
                jitter_mad_after: fixed(s.jitter_mad),
                rtt_mean_us: fixed(s.rtt_mean().unwrap_or(0.0)),
            });
            continue;
        }
        for (i, h) in r.handovers.iter().enumerate() {
            let start = if i == 0 { SimTime::ZERO } else { bounds[i - 1] };
            let end = bounds.get(i + 1).copied().unwrap_or(SimTime::MAX);
            let resumed = h.restored().unwrap_or(end).min(end);
            let (around, before, after) = match flow {
                Some(f) => (f.window(h.at, end), f.window(start, h.at), f.window(resumed, end)),
                None => Default::default(),
            };
            out.push(Row {
                trial: r.trial,
                variant: sc.variant.name().to_string(),
                handover_index: h.index,
                disruption_us: h.disruption(),
                lost: around.lost,
                duplicates: around.duplicates,
                jitter_mad_before: fixed(before.jitter_mad),
                jitter_mad_after: fixed(after.jitter_mad),
                rtt_mean_us: fixed(after.rtt_mean().unwrap_or(0.0)),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BudgetError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("scenario has no mobile node")]
    NoMobile,
}

/// Closed-form handover budget for one scripted move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub handover_index: usize,
    pub to: String,
    pub t_local_us: Micros,
    pub t_ha_us: Micros,
    pub t_cn_us: Micros,
    pub t_ha_cn_us: Micros,
    pub exact_us: Micros,
    pub approx_us: Micros,
    pub jitter_ratio_exact: f64,
    pub jitter_ratio_approx: f64,
}

/// Mean time from a move until the new on-link address is usable.
pub fn expected_local(sc: &Scenario) -> Micros {
    let t = &sc.timers;
    let wait = match t.detection {
        Detection::RouterAdvert => t.ra_interval.mean() / 2.0,
        Detection::L2Trigger => {
            t.rs_delay as f64 / 2.0 + t.ra_delay as f64 / 2.0 + t.handshake as f64
        }
    };
    (t.l2_delay.mean() + wait + t.readdress.mean()).round() as Micros
}

/// Delay profile of a plain home registration plus route optimisation from
/// access point `ap`, with `t_local` one-sided.
pub fn mipv6_profile(topo: &Topology, ap: NodeId, ha: NodeId, cn: NodeId, t_local: Micros) -> Result<DelayProfile, TopologyError> {
    Ok(DelayProfile::new(t_local, topo.roundtrip_from_ap(ap, ha)?, topo.roundtrip_from_ap(ap, cn)?)
        .with_ha_cn(2 * topo.static_delay(ha, cn)?))
}

/// Profile of the same exchange relayed by MAP `map`; the local MAP
/// registration is folded into `t_local`.
pub fn hmipv6_profile(
    topo: &Topology,
    ap: NodeId,
    map: NodeId,
    ha: NodeId,
    cn: NodeId,
    t_local: Micros,
) -> Result<DelayProfile, TopologyError> {
    let to_map = topo.roundtrip_from_ap(ap, map)?;
    Ok(DelayProfile::new(
        t_local + to_map,
        to_map + 2 * topo.static_delay(map, ha)?,
        to_map + 2 * topo.static_delay(map, cn)?,
    )
    .with_ha_cn(2 * topo.static_delay(ha, cn)?))
}

fn correspondents(sc: &Scenario, mn: NodeId) -> Vec<NodeId> {
    let mut v: Vec<NodeId> = sc
        .probes
        .iter()
        .filter_map(|p| match (p.from == mn, p.to == mn) {
            (true, _) => Some(p.to),
            (_, true) => Some(p.from),
            _ => None,
        })
        .filter(|n| sc.topology.kind(*n) != Some(NodeKind::MobileNode))
        .collect();
    v.sort();
    v.dedup();
    v
}

/// Analytic values for every scripted move, with the expected local delay.
pub fn budget(sc: &Scenario) -> Result<Vec<BudgetRow>, BudgetError> {
    let spec = sc.mobile.as_ref().ok_or(BudgetError::NoMobile)?;
    let topo = &sc.topology;
    let cn = correspondents(sc, spec.node)
        .first()
        .copied()
        .unwrap_or(spec.home);
    let t_local = expected_local(sc);
    let mut out = Vec::new();
    for (i, (_, ap)) in sc.moves.iter().enumerate() {
        let map = topo.node(*ap)?.map_domain.filter(|_| sc.variant.uses_maps());
        let p = match map {
            Some(m) => hmipv6_profile(topo, *ap, m, spec.home, cn, t_local)?,
            None => mipv6_profile(topo, *ap, spec.home, cn, t_local)?,
        };
        out.push(BudgetRow {
            handover_index: i + 1,
            to: topo.name(*ap).to_string(),
            t_local_us: p.t_local,
            t_ha_us: p.t_ha,
            t_cn_us: p.t_cn,
            t_ha_cn_us: p.ha_cn(),
            exact_us: analytic::handoff_time_exact(&p)?,
            approx_us: analytic::handoff_time_approx(&p)?,
            jitter_ratio_exact: analytic::jitter_ratio_exact(&p).unwrap_or(f64::NAN),
            jitter_ratio_approx: analytic::jitter_ratio_approx(&p).unwrap_or(f64::NAN),
        });
    }
    Ok(out)
}

/// Simulated unicast disruption of one handover next to its closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub trial: u32,
    pub handover_index: usize,
    pub simulated_us: Option<Micros>,
    pub predicted_us: Option<Micros>,
    pub diff_us: Option<i64>,
    pub flagged: bool,
}

/// Closed-form unicast disruption of `h`, using its measured local delay.
pub fn predict(sc: &Scenario, h: &HandoverReport) -> Result<Option<Micros>, BudgetError> {
    let spec = sc.mobile.as_ref().ok_or(BudgetError::NoMobile)?;
    let topo = &sc.topology;
    let Some(t_local) = h.local() else {
        return Ok(None);
    };
    let ap = h.to_ap;
    let ha = spec.home;
    let t = &sc.timers;
    let cns = if t.route_optimization {
        correspondents(sc, spec.node)
    } else {
        Vec::new()
    };
    let ack_extra = |p: &DelayProfile| if t.cn_ack { p.t_cn / 2 } else { 0 };
    let full = |p: DelayProfile| -> Result<Micros, BudgetError> {
        Ok(analytic::handoff_time_exact(&p)? + ack_extra(&p))
    };
    let value = match h.kind {
        None => return Ok(None),
        Some(HandoverKind::ReturnHome) => {
            let home = t_local + topo.roundtrip_from_ap(ap, ha)?;
            let mut worst = home;
            for &cn in &cns {
                let rt = topo.roundtrip_from_ap(ap, cn)?;
                worst = worst.max(home + rt / 2 + if t.cn_ack { rt / 2 } else { 0 });
            }
            worst
        }
        Some(HandoverKind::IntraDomain) => {
            let map = topo.node(ap)?.map_domain.expect("intra-domain moves have a MAP");
            t_local + topo.roundtrip_from_ap(ap, map)?
        }
        Some(HandoverKind::InterDomain) => {
            let map = topo.node(ap)?.map_domain.filter(|_| sc.variant.uses_maps());
            match (sc.variant, h.previous_anchor) {
                (Variant::Shuffling, Some(prev)) if prev != ha => t_local + topo.roundtrip_from_ap(ap, prev)?,
                _ => {
                    if cns.is_empty() {
                        match map {
                            Some(m) => {
                                let p = hmipv6_profile(topo, ap, m, ha, ha, t_local)?;
                                p.t_local + p.t_ha
                            }
                            None => t_local + topo.roundtrip_from_ap(ap, ha)?,
                        }
                    } else {
                        let mut worst = 0;
                        for &cn in &cns {
                            let p = match map {
                                Some(m) => hmipv6_profile(topo, ap, m, ha, cn, t_local)?,
                                None => mipv6_profile(topo, ap, ha, cn, t_local)?,
                            };
                            worst = worst.max(full(p)?);
                        }
                        worst
                    }
                }
            }
        }
    };
    Ok(Some(value))
}

pub fn compare(sc: &Scenario, results: &[TrialResult], tolerance: Micros) -> Result<Vec<CompareRow>, BudgetError> {
    let mut out = Vec::new();
    for r in results {
        for h in &r.handovers {
            let simulated = h.unicast_disruption();
            let predicted = predict(sc, h)?;
            let diff = match (simulated, predicted) {
                (Some(s), Some(p)) => Some(s as i64 - p as i64),
                _ => None,
            };
            out.push(CompareRow {
                trial: r.trial,
                handover_index: h.index,
                simulated_us: simulated,
                predicted_us: predicted,
                diff_us: diff,
                flagged: diff.is_none_or(|d| d.unsigned_abs() > tolerance),
            });
        }
    }
    Ok(out)
}
