//! Reliable byte stream over a lossy [`NetworkProfile`].
//!
//! The model is round based. Each round the sender transmits the current
//! window back to back starting at the first unacknowledged segment and
//! then waits:
//!
//! * if the cumulative ACK covers the whole window, the round ends when
//!   that ACK arrives and the window doubles (capped at
//!   `max_cwnd_segments`);
//! * otherwise the retransmission timer of the first unacknowledged
//!   segment fires, the window halves (floor 1) and the next round
//!   resends from that segment (go-back-N).
//!
//! The receiver buffers out-of-order segments and answers every delivered
//! segment with a cumulative ACK (every second one with `delayed_ack`).
//! There is no fast retransmit and no SACK.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netlink::{self, Direction, DeterministicRng, NetworkProfile, SEGMENT_HEADER_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportParams {
    pub initial_cwnd_segments: u32,
    pub max_cwnd_segments: u32,
    pub rto_initial_s: f64,
    pub rto_min_s: f64,
    pub rto_max_s: f64,
    pub rto_backoff_factor: f64,
    pub max_retries: u32,
    pub ack_bytes: u64,
    pub delayed_ack: bool,
}

impl Default for TransportParams {
    fn default() -> Self {
        TransportParams {
            initial_cwnd_segments: 10,
            max_cwnd_segments: 64,
            rto_initial_s: 1.0,
            rto_min_s: 0.2,
            rto_max_s: 60.0,
            rto_backoff_factor: 2.0,
            max_retries: 15,
            ack_bytes: 40,
            delayed_ack: false,
        }
    }
}

impl TransportParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.initial_cwnd_segments == 0 || self.max_cwnd_segments < self.initial_cwnd_segments {
            return bad(format!(
                "window must satisfy 1 <= initial ({}) <= max ({})",
                self.initial_cwnd_segments, self.max_cwnd_segments
            ));
        }
        for (field, v) in [
            ("rto_initial_s", self.rto_initial_s),
            ("rto_min_s", self.rto_min_s),
            ("rto_max_s", self.rto_max_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{field} must be > 0, got {v}"));
            }
        }
        if !(self.rto_backoff_factor.is_finite() && self.rto_backoff_factor >= 1.0) {
            return bad(format!("rto_backoff_factor must be >= 1, got {}", self.rto_backoff_factor));
        }
        if self.max_retries == 0 {
            return bad("max_retries must be >= 1".into());
        }
        if self.ack_bytes == 0 {
            return bad("ack_bytes must be > 0".into());
        }
        Ok(())
    }
}

/// Retransmission timeout once an RTT estimate exists.
pub fn rto_for_attempt(params: &TransportParams, srtt_s: f64, attempt: u32) -> f64 {
    let base = params.rto_min_s.max(2.0 * srtt_s);
    (base * params.rto_backoff_factor.powi(attempt as i32)).min(params.rto_max_s)
}

fn rto_without_estimate(params: &TransportParams, attempt: u32) -> f64 {
    (params.rto_initial_s * params.rto_backoff_factor.powi(attempt as i32)).min(params.rto_max_s)
}

/// How the ACK that completes a stream reaches the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalAck {
    /// Sent as its own packet; the stream completes when it arrives.
    #[default]
    Explicit,
    /// Carried by the next reverse-direction flight; the stream completes
    /// when the receiver holds every byte.
    Piggybacked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferTrace {
    /// Seconds from the stream start to completion (or to failure).
    pub completion_time_s: f64,
    pub segments_sent: u64,
    pub retransmissions: u64,
    pub bytes_delivered: u64,
}

pub fn deliver_stream(
    payload_bytes: u64,
    start_time_s: f64,
    profile: &NetworkProfile,
    params: &TransportParams,
    rng: &mut DeterministicRng,
) -> Result<TransferTrace> {
    deliver_flight(payload_bytes, start_time_s, profile, params, FinalAck::Explicit, rng)
}

struct Sent {
    seg: usize,
    send_time: f64,
    retransmit: bool,
    arrival: Option<f64>,
}

struct Ack {
    cumulative: usize,
    trigger: usize,
    arrival: f64,
}

pub fn deliver_flight(
    payload_bytes: u64,
    start_time_s: f64,
    profile: &NetworkProfile,
    params: &TransportParams,
    final_ack: FinalAck,
    rng: &mut DeterministicRng,
) -> Result<TransferTrace> {
    let mss = profile.payload_per_segment_bytes() as u64;
    let n = netlink::segment_count(payload_bytes, profile) as usize;
    let seg_payload = |k: usize| (payload_bytes - k as u64 * mss).min(mss);

    let mut received = vec![false; n];
    let mut transmitted = vec![false; n];
    let mut cum = 0usize;
    let mut base = 0usize;
    let mut cwnd = params.initial_cwnd_segments as usize;
    let mut srtt: Option<f64> = None;
    let mut retries = 0u32;
    let mut segments_sent = 0u64;
    let mut t = start_time_s;

    let trace = |now: f64, sent: u64, cum: usize| TransferTrace {
        completion_time_s: now - start_time_s,
        segments_sent: sent,
        retransmissions: sent - n as u64,
        bytes_delivered: (cum as u64 * mss).min(payload_bytes),
    };

    if n == 0 {
        return Ok(trace(t, 0, 0));
    }

    loop {
        let end = (base + cwnd).min(n);

        let mut clock = t;
        let mut round = Vec::with_capacity(end - base);
        for (seg, was_sent) in transmitted.iter_mut().enumerate().take(end).skip(base) {
            let wire = seg_payload(seg) + SEGMENT_HEADER_BYTES as u64;
            let send_time = clock;
            clock += profile.serialization_s(wire);
            segments_sent += 1;
            let retransmit = std::mem::replace(was_sent, true);
            let out = netlink::transmit_dir(wire, send_time, profile, Direction::Data, rng)?;
            round.push(Sent {
                seg,
                send_time,
                retransmit,
                arrival: out.arrival_time_s,
            });
        }

        // Arrival order equals send order: no jitter and serialization of a
        // later segment starts only after the earlier one finished.
        let mut completed_at = None;
        let mut pending_acks = Vec::new();
        let delivered: Vec<&Sent> = round.iter().filter(|s| s.arrival.is_some()).collect();
        for (i, s) in delivered.iter().enumerate() {
            let arrival = s.arrival.unwrap();
            received[s.seg] = true;
            while cum < n && received[cum] {
                cum += 1;
            }
            if cum == n && completed_at.is_none() {
                completed_at = Some(arrival);
            }
            let last = i + 1 == delivered.len();
            if !params.delayed_ack || i % 2 == 1 || last || cum == n {
                pending_acks.push((cum, s.seg, arrival));
            }
        }

        if final_ack == FinalAck::Piggybacked {
            if let Some(done) = completed_at {
                return Ok(trace(done, segments_sent, cum));
            }
        }

        let mut acks = Vec::with_capacity(pending_acks.len());
        for (cumulative, trigger, send_time) in pending_acks {
            let out = netlink::transmit_dir(params.ack_bytes, send_time, profile, Direction::Ack, rng)?;
            if let Some(arrival) = out.arrival_time_s {
                acks.push(Ack {
                    cumulative,
                    trigger,
                    arrival,
                });
            }
        }
        let best = acks.iter().map(|a| a.cumulative).max().unwrap_or(0);

        if best >= end {
            let cover = acks.iter().find(|a| a.cumulative >= end).unwrap();
            if best == n {
                let done = acks.iter().find(|a| a.cumulative == n).unwrap().arrival;
                return Ok(trace(done, segments_sent, n));
            }
            let s = round.iter().find(|s| s.seg == cover.trigger).unwrap();
            if !s.retransmit {
                let sample = cover.arrival - s.send_time;
                srtt = Some(match srtt {
                    None => sample,
                    Some(old) => 0.875 * old + 0.125 * sample,
                });
            }
            base = best;
            retries = 0;
            cwnd = (cwnd * 2).min(params.max_cwnd_segments as usize);
            t = cover.arrival;
            continue;
        }

        if best > base {
            base = best;
            retries = 0;
        }
        let rto = match srtt {
            Some(srtt) => rto_for_attempt(params, srtt, retries),
            None => rto_without_estimate(params, retries),
        };
        let first_unacked = round.iter().find(|s| s.seg == base).unwrap();
        let last_ack = acks.iter().map(|a| a.arrival).fold(f64::NEG_INFINITY, f64::max);
        t = (first_unacked.send_time + rto).max(last_ack);
        retries += 1;
        if retries > params.max_retries {
            return Err(Error::TransferFailed {
                trace: trace(t, segments_sent, cum),
            });
        }
        cwnd = (cwnd / 2).max(1);
    }
}
