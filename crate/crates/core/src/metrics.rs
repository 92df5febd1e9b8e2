//! Per-flow loss, delay and jitter statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{Micros, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MetricsError {
    #[error("empty sample")]
    EmptySample,
    #[error("percentile {0} outside [0, 100]")]
    BadPercentile(f64),
    #[error("baseline jitter is zero")]
    ZeroBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reception {
    pub seq: u64,
    pub sent_at: SimTime,
    pub arrived_at: SimTime,
}

impl Reception {
    fn transit(&self) -> i64 {
        self.arrived_at.as_micros() as i64 - self.sent_at.as_micros() as i64
    }
}

/// Raw record of one flow as observed by a single receiver.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowLog {
    /// Nominal send interval.
    pub nominal: Micros,
    pub sent: Vec<(u64, SimTime)>,
    pub received: Vec<Reception>,
    /// (sequence, send time, roundtrip) for every echo returned to the sender.
    pub rtts: Vec<(u64, SimTime, Micros)>,
}

impl FlowLog {
    pub fn new(nominal: Micros) -> Self {
        FlowLog {
            nominal,
            ..FlowLog::default()
        }
    }

    pub fn record_sent(&mut self, seq: u64, at: SimTime) {
        self.sent.push((seq, at));
    }

    pub fn record_arrival(&mut self, seq: u64, sent_at: SimTime, arrived_at: SimTime) {
        self.received.push(Reception {
            seq,
            sent_at,
            arrived_at,
        });
    }

    pub fn record_rtt(&mut self, seq: u64, sent_at: SimTime, rtt: Micros) {
        self.rtts.push((seq, sent_at, rtt));
    }

    pub fn stats(&self) -> FlowStats {
        self.window(SimTime::ZERO, SimTime::MAX)
    }

    /// Statistics over the packets sent in `[from, to)`.
    pub fn window(&self, from: SimTime, to: SimTime) -> FlowStats {
        let inside = |t: SimTime| from <= t && t < to;
        let sent: Vec<u64> = self
            .sent
            .iter()
            .filter(|(_, t)| inside(*t))
            .map(|(s, _)| *s)
            .collect();
        let received: Vec<Reception> = self
            .received
            .iter()
            .filter(|r| inside(r.sent_at))
            .copied()
            .collect();
        let rtt = self
            .rtts
            .iter()
            .filter(|(_, t, _)| inside(*t))
            .map(|(_, _, r)| *r)
            .collect();
        FlowStats::compute(self.nominal, &sent, &received, rtt)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub sent: u64,
    pub received_unique: u64,
    pub lost: u64,
    pub duplicates: u64,
    pub rtt: Vec<Micros>,
    /// Gaps between consecutive unique arrivals, in arrival order.
    pub interarrival: Vec<Micros>,
    /// Longest arrival gap minus the nominal interval.
    pub disruption_interval: Micros,
    /// Mean absolute deviation of interarrival time from the send spacing.
    pub jitter_mad: f64,
    /// Exponentially smoothed interarrival deviation with gain 1/16.
    pub jitter_smoothed: f64,
}

impl FlowStats {
    pub fn compute(
        nominal: Micros,
        sent: &[u64],
        received: &[Reception],
        rtt: Vec<Micros>,
    ) -> FlowStats {
        let expected: std::collections::BTreeSet<u64> = sent.iter().copied().collect();
        let mut first: BTreeMap<u64, Reception> = BTreeMap::new();
        let mut duplicates = 0;
        for r in received.iter().filter(|r| expected.contains(&r.seq)) {
            match first.get(&r.seq) {
                Some(prev) => {
                    duplicates += 1;
                    if r.arrived_at < prev.arrived_at {
                        first.insert(r.seq, *r);
                    }
                }
                None => {
                    first.insert(r.seq, *r);
                }
            }
        }
        let received_unique = first.len() as u64;
        let sent_count = expected.len() as u64;

        let mut by_arrival: Vec<SimTime> = first.values().map(|r| r.arrived_at).collect();
        by_arrival.sort_unstable();
        let interarrival: Vec<Micros> = by_arrival.windows(2).map(|w| w[1] - w[0]).collect();
        let disruption_interval = interarrival
            .iter()
            .max()
            .map_or(0, |g| g.saturating_sub(nominal));

        let mut mad_sum = 0.0;
        let mut smoothed = 0.0;
        let ordered: Vec<&Reception> = first.values().collect();
        for w in ordered.windows(2) {
            let d = (w[1].transit() - w[0].transit()).unsigned_abs() as f64;
            mad_sum += d;
            smoothed += (d - smoothed) / 16.0;
        }
        let pairs = ordered.len().saturating_sub(1);
        let jitter_mad = if pairs == 0 {
            0.0
        } else {
            mad_sum / pairs as f64
        };

        FlowStats {
            sent: sent_count,
            received_unique,
            lost: sent_count - received_unique,
            duplicates,
            rtt,
            interarrival,
            disruption_interval,
            jitter_mad,
            jitter_smoothed: smoothed,
        }
    }

    pub fn rtt_mean(&self) -> Option<f64> {
        if self.rtt.is_empty() {
            None
        } else {
            Some(self.rtt.iter().sum::<u64>() as f64 / self.rtt.len() as f64)
        }
    }
}

/// Nearest-rank percentile.
pub fn percentile(samples: &[u64], p: f64) -> Result<u64, MetricsError> {
    if !(0.0..=100.0).contains(&p) {
        return Err(MetricsError::BadPercentile(p));
    }
    if samples.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn jitter_amplification(before: &FlowStats, after: &FlowStats) -> Result<f64, MetricsError> {
    if before.jitter_mad == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(after.jitter_mad / before.jitter_mad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::MS;
    use proptest::prelude::*;

    fn cbr(n: u64, interval: Micros, transit: impl Fn(u64) -> Option<Micros>) -> FlowLog {
        let mut log = FlowLog::new(interval);
        for s in 0..n {
            let at = SimTime(s * interval);
            log.record_sent(s, at);
            if let Some(d) = transit(s) {
                log.record_arrival(s, at, at + d);
            }
        }
        log
    }

    #[test]
    fn undisturbed_flow() {
        let s = cbr(100, 15 * MS, |_| Some(7 * MS)).stats();
        assert_eq!((s.sent, s.received_unique, s.lost, s.duplicates), (100, 100, 0, 0));
        assert_eq!(s.jitter_mad, 0.0);
        assert_eq!(s.disruption_interval, 0);
    }

    #[test]
    fn gap_becomes_disruption() {
        let s = cbr(100, 10 * MS, |q| (!(40..46).contains(&q)).then_some(MS)).stats();
        assert_eq!(s.lost, 6);
        assert_eq!(s.disruption_interval, 60 * MS);
    }

    #[test]
    fn duplicates_do_not_change_unique_count() {
        let mut log = cbr(10, MS, |_| Some(5));
        log.record_arrival(3, SimTime(3 * MS), SimTime(3 * MS + 9));
        let s = log.stats();
        assert_eq!((s.received_unique, s.duplicates, s.lost), (10, 1, 0));
    }

    #[test]
    fn alternating_transit_jitter() {
        let s = cbr(5, MS, |q| Some(if q % 2 == 0 { 100 } else { 300 })).stats();
        assert_eq!(s.jitter_mad, 200.0);
    }

    #[test]
    fn nearest_rank() {
        let v = [80, 90, 100, 110, 120];
        assert_eq!(percentile(&v, 90.0), Ok(120));
        assert_eq!(percentile(&v, 0.0), Ok(80));
        assert_eq!(percentile(&v, 100.0), Ok(120));
        assert_eq!(percentile(&v, 40.0), Ok(90));
        assert_eq!(percentile(&[], 50.0), Err(MetricsError::EmptySample));
        assert_eq!(percentile(&v, 101.0), Err(MetricsError::BadPercentile(101.0)));
    }

    #[test]
    fn amplification_needs_baseline() {
        let flat = cbr(5, MS, |_| Some(1)).stats();
        assert_eq!(jitter_amplification(&flat, &flat), Err(MetricsError::ZeroBaseline));
        let a = cbr(5, MS, |q| Some(100 + 100 * (q % 2))).stats();
        let b = cbr(5, MS, |q| Some(100 + 200 * (q % 2))).stats();
        assert_eq!(jitter_amplification(&a, &b), Ok(2.0));
    }

    proptest! {
        #[test]
        fn conservation(fates in proptest::collection::vec(0u8..4, 1..200)) {
            let mut log = FlowLog::new(10);
            for (s, f) in fates.iter().enumerate() {
                let s = s as u64;
                log.record_sent(s, SimTime(s * 10));
                for _ in 0..*f {
                    log.record_arrival(s, SimTime(s * 10), SimTime(s * 10 + 3));
                }
            }
            let st = log.stats();
            prop_assert_eq!(st.sent, st.received_unique + st.lost);
            let delivered = fates.iter().filter(|f| **f > 0).count() as u64;
            prop_assert_eq!(st.received_unique, delivered);
            let extra: u64 = fates.iter().map(|f| (*f as u64).saturating_sub(1)).sum();
            prop_assert_eq!(st.duplicates, extra);
        }

        #[test]
        fn percentile_is_a_sample_member(v in proptest::collection::vec(0u64..1000, 1..50), p in 0.0f64..=100.0) {
            let x = percentile(&v, p).unwrap();
            prop_assert!(v.contains(&x));
            let at_most = v.iter().filter(|y| **y <= x).count() as f64;
            prop_assert!(at_most >= p / 100.0 * v.len() as f64);
        }
    }
}
