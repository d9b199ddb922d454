//! Single impaired network path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// IPv4 + TCP header bytes carried by every segment.
pub const SEGMENT_HEADER_BYTES: u32 = 40;
pub const DEFAULT_MTU: u32 = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub one_way_latency_s: f64,
    pub loss_rate: f64,
    /// `None` means unlimited bandwidth (no serialization delay).
    pub bandwidth_bps: Option<f64>,
    pub mtu_bytes: u32,
    /// Whether ACKs on the reverse path are subject to `loss_rate`.
    pub ack_loss: bool,
}

impl Default for NetworkProfile {
    fn default() -> Self {
        NetworkProfile {
            one_way_latency_s: 0.0,
            loss_rate: 0.0,
            bandwidth_bps: None,
            mtu_bytes: DEFAULT_MTU,
            ack_loss: true,
        }
    }
}

impl NetworkProfile {
    pub fn new(one_way_latency_s: f64, loss_rate: f64) -> Result<Self> {
        let p = NetworkProfile {
            one_way_latency_s,
            loss_rate,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.one_way_latency_s.is_finite() && self.one_way_latency_s >= 0.0) {
            return Err(Error::Parameter(format!(
                "latency must be finite and >= 0, got {}",
                self.one_way_latency_s
            )));
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return Err(Error::Parameter(format!(
                "loss rate {} is outside the valid range [0,1)",
                self.loss_rate
            )));
        }
        if let Some(bw) = self.bandwidth_bps {
            if !(bw.is_finite() && bw > 0.0) {
                return Err(Error::Parameter(format!("bandwidth must be > 0 bytes/s, got {bw}")));
            }
        }
        if self.mtu_bytes <= SEGMENT_HEADER_BYTES {
            return Err(Error::Parameter(format!(
                "MTU must exceed the {SEGMENT_HEADER_BYTES}-byte header, got {}",
                self.mtu_bytes
            )));
        }
        Ok(())
    }

    pub fn payload_per_segment_bytes(&self) -> u32 {
        self.mtu_bytes - SEGMENT_HEADER_BYTES
    }

    pub fn rtt_s(&self) -> f64 {
        2.0 * self.one_way_latency_s
    }

    /// Time to clock `size_bytes` onto the wire.
    pub fn serialization_s(&self, size_bytes: u64) -> f64 {
        match self.bandwidth_bps {
            Some(bw) => size_bytes as f64 / bw,
            None => 0.0,
        }
    }
}

/// Seeded generator for loss draws.
///
/// ChaCha8 keyed by `seed_from_u64`, with the stream id selecting an
/// independent sequence. Both are value-stable across `rand_chacha` 0.3
/// releases; draws are `f64` in `[0,1)` with 53 bits of precision.
#[derive(Debug, Clone)]
pub struct DeterministicRng {
    inner: ChaCha8Rng,
}

impl DeterministicRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        DeterministicRng { inner }
    }

    pub fn next_unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// One Bernoulli draw: true with probability `p`.
    pub fn dropped(&mut self, p: f64) -> bool {
        self.next_unit() < p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryOutcome {
    pub delivered: bool,
    pub arrival_time_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Data,
    Ack,
}

/// Sends one packet of `size_bytes` (header included) at `send_time_s`.
/// Always consumes exactly one draw.
pub fn transmit(
    size_bytes: u64,
    send_time_s: f64,
    profile: &NetworkProfile,
    rng: &mut DeterministicRng,
) -> Result<DeliveryOutcome> {
    transmit_dir(size_bytes, send_time_s, profile, Direction::Data, rng)
}

pub fn transmit_dir(
    size_bytes: u64,
    send_time_s: f64,
    profile: &NetworkProfile,
    direction: Direction,
    rng: &mut DeterministicRng,
) -> Result<DeliveryOutcome> {
    if size_bytes > profile.mtu_bytes as u64 {
        return Err(Error::OversizedSegment {
            size: size_bytes,
            mtu: profile.mtu_bytes,
        });
    }
    if !(send_time_s >= 0.0) {
        return Err(Error::Parameter(format!("send time must be >= 0, got {send_time_s}")));
    }
    let p = match direction {
        Direction::Ack if !profile.ack_loss => 0.0,
        _ => profile.loss_rate,
    };
    if rng.dropped(p) {
        return Ok(DeliveryOutcome {
            delivered: false,
            arrival_time_s: None,
        });
    }
    let arrival = send_time_s + profile.one_way_latency_s + profile.serialization_s(size_bytes);
    Ok(DeliveryOutcome {
        delivered: true,
        arrival_time_s: Some(arrival),
    })
}

pub fn segment_count(payload_bytes: u64, profile: &NetworkProfile) -> u64 {
    payload_bytes.div_ceil(profile.payload_per_segment_bytes() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lossless(latency: f64) -> NetworkProfile {
        NetworkProfile::new(latency, 0.0).unwrap()
    }

    #[test]
    fn identity_transmit() {
        let out = transmit(1000, 0.0, &lossless(0.0), &mut DeterministicRng::new(1)).unwrap();
        assert_eq!(out.arrival_time_s, Some(0.0));
        assert!(out.delivered);
    }

    #[test]
    fn pure_propagation() {
        let out = transmit(1500, 0.0, &lossless(0.1), &mut DeterministicRng::new(1)).unwrap();
        assert_eq!(out.arrival_time_s, Some(0.1));
    }

    #[test]
    fn serialization_term() {
        let mut p = lossless(0.1);
        p.bandwidth_bps = Some(1000.0);
        let out = transmit(500, 1.0, &p, &mut DeterministicRng::new(1)).unwrap();
        assert!((out.arrival_time_s.unwrap() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn oversized_is_contract_violation() {
        let err = transmit(1501, 0.0, &lossless(0.0), &mut DeterministicRng::new(1)).unwrap_err();
        assert!(matches!(err, Error::OversizedSegment { size: 1501, mtu: 1500 }));
    }

    #[test]
    fn empirical_drop_rate() {
        let p = NetworkProfile::new(0.0, 0.025).unwrap();
        let mut rng = DeterministicRng::new(2024);
        let n = 100_000;
        let dropped = (0..n)
            .filter(|_| !transmit(100, 0.0, &p, &mut rng).unwrap().delivered)
            .count();
        let rate = dropped as f64 / n as f64;
        assert!((rate - 0.025).abs() <= 0.003, "rate {rate}");
    }

    #[test]
    fn ack_loss_toggle() {
        let mut p = NetworkProfile::new(0.0, 0.9).unwrap();
        p.ack_loss = false;
        let mut rng = DeterministicRng::new(3);
        for _ in 0..100 {
            assert!(transmit_dir(40, 0.0, &p, Direction::Ack, &mut rng).unwrap().delivered);
        }
    }

    #[test]
    fn segment_count_boundaries() {
        let p = lossless(0.0);
        assert_eq!(p.payload_per_segment_bytes(), 1460);
        assert_eq!(segment_count(0, &p), 0);
        assert_eq!(segment_count(1460, &p), 1);
        assert_eq!(segment_count(1461, &p), 2);
        assert_eq!(segment_count(17088 + 3000, &p), 14);
    }

    #[test]
    fn profile_validation() {
        assert!(NetworkProfile::new(0.1, 1.0).is_err());
        assert!(NetworkProfile::new(0.1, -0.01).is_err());
        assert!(NetworkProfile::new(-1.0, 0.0).is_err());
        let mut p = lossless(0.0);
        p.mtu_bytes = 40;
        assert!(p.validate().is_err());
        p.mtu_bytes = 1500;
        p.bandwidth_bps = Some(0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn rng_streams_are_independent_and_reproducible() {
        let a: Vec<f64> = {
            let mut r = DeterministicRng::with_stream(9, 0);
            (0..8).map(|_| r.next_unit()).collect()
        };
        let b: Vec<f64> = {
            let mut r = DeterministicRng::with_stream(9, 1);
            (0..8).map(|_| r.next_unit()).collect()
        };
        let a2: Vec<f64> = {
            let mut r = DeterministicRng::new(9);
            (0..8).map(|_| r.next_unit()).collect()
        };
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
