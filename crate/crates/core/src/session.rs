//! TLS-1.3-shaped handshake and file download over the transport.
//!
//! Clock layout of one session (crypto time is serialized with network
//! time, never overlapped):
//!
//! ```text
//! connect (1 RTT, not counted)
//! | keygen | ClientHello | encap+sign+keygen | ServerFlight | decap+2*verify | ClientFinished |
//! |<------------------------------ handshake_time_s ---------------------------------------->|
//! | handshake | request | download |
//! |<------------- total_download_time_s ------------>|
//! ```
//!
//! With `piggyback_handshake_acks` the final ACK of ClientHello, of the
//! server flight and of the request rides on the next flight in the other
//! direction, so a loss-free handshake costs 2 RTT; otherwise every flight
//! is individually acknowledged and costs 3 RTT.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netlink::{DeterministicRng, NetworkProfile};
use crate::suites::{CryptoProvider, CryptoSuite, Framing, OpKind};
use crate::transport::{self, FinalAck, TransferTrace, TransportParams};

pub const REQUEST_BYTES: u64 = 512;
pub const RECORD_OVERHEAD_PCT: u64 = 1;

/// Stream ids for the per-flight loss generators. Every suite uses the same
/// id for the same flight position, so equal seeds mean paired loss draws.
pub mod flight {
    pub const CLIENT_HELLO: u64 = 0;
    pub const SERVER_FLIGHT: u64 = 1;
    pub const CLIENT_FINISHED: u64 = 2;
    pub const REQUEST: u64 = 3;
    pub const DOWNLOAD: u64 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub transport: TransportParams,
    pub piggyback_handshake_acks: bool,
    pub framing: Framing,
    pub request_bytes: u64,
    pub record_overhead_pct: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            transport: TransportParams::default(),
            piggyback_handshake_acks: true,
            framing: Framing::default(),
            request_bytes: REQUEST_BYTES,
            record_overhead_pct: RECORD_OVERHEAD_PCT,
        }
    }
}

impl SessionConfig {
    fn chained_ack(&self) -> FinalAck {
        if self.piggyback_handshake_acks {
            FinalAck::Piggybacked
        } else {
            FinalAck::Explicit
        }
    }

    /// Bytes put on the wire for a file of `file_bytes`.
    pub fn response_bytes(&self, file_bytes: u64) -> u64 {
        file_bytes + (file_bytes * self.record_overhead_pct).div_ceil(100)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandshakeTrace {
    pub handshake_time_s: f64,
    /// Transport connection setup, charged before the handshake clock.
    pub connect_time_s: f64,
    pub flights: Vec<TransferTrace>,
    pub crypto_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    pub suite_name: String,
    pub run: u32,
    pub seed: u64,
    pub handshake_time_s: f64,
    pub total_download_time_s: f64,
    pub file_bytes: u64,
    pub transfer_rate_bps: f64,
    pub valid: bool,
}

impl TimingSample {
    /// Builds a sample with times rounded to whole nanoseconds, so that the
    /// 9-digit CSV form parses back to the identical value.
    pub fn new(suite_name: &str, seed: u64, handshake_time_s: f64, total_download_time_s: f64, file_bytes: u64, valid: bool) -> Self {
        let handshake_time_s = round_ns(handshake_time_s);
        let total_download_time_s = round_ns(total_download_time_s);
        TimingSample {
            suite_name: suite_name.to_string(),
            run: 0,
            seed,
            handshake_time_s,
            total_download_time_s,
            file_bytes,
            transfer_rate_bps: rate(file_bytes, total_download_time_s),
            valid,
        }
    }
}

pub(crate) fn round_ns(t: f64) -> f64 {
    (t * 1e9).round() / 1e9
}

fn rate(file_bytes: u64, total_s: f64) -> f64 {
    if total_s > 0.0 {
        file_bytes as f64 / total_s
    } else {
        0.0
    }
}

struct Clock<'a> {
    suite: &'a CryptoSuite,
    provider: &'a dyn CryptoProvider,
    seed: u64,
    now: f64,
    crypto: f64,
}

impl Clock<'_> {
    fn charge(&mut self, kind: OpKind) -> Vec<u8> {
        let out = self.provider.perform(kind, self.suite, self.seed);
        self.now += out.elapsed_s;
        self.crypto += out.elapsed_s;
        out.blob
    }
}

pub fn run_handshake(
    suite: &CryptoSuite,
    profile: &NetworkProfile,
    config: &SessionConfig,
    provider: &dyn CryptoProvider,
    seed: u64,
) -> Result<HandshakeTrace> {
    let sizes = suite.flight_sizes_with(&config.framing);
    let mut clock = Clock {
        suite,
        provider,
        seed,
        now: 0.0,
        crypto: 0.0,
    };
    let mut flights = Vec::with_capacity(3);
    let mut send = |clock: &mut Clock, stream: u64, bytes: u64, final_ack: FinalAck| -> Result<()> {
        let mut rng = DeterministicRng::with_stream(seed, stream);
        match transport::deliver_flight(bytes, clock.now, profile, &config.transport, final_ack, &mut rng) {
            Ok(tr) => {
                clock.now += tr.completion_time_s;
                flights.push(tr);
                Ok(())
            }
            Err(Error::TransferFailed { trace }) => Err(Error::HandshakeFailed {
                flight: stream as usize,
                elapsed_s: clock.now + trace.completion_time_s,
            }),
            Err(e) => Err(e),
        }
    };

    clock.charge(OpKind::Keygen);
    send(&mut clock, flight::CLIENT_HELLO, sizes.client_hello.total(), config.chained_ack())?;

    clock.charge(OpKind::Encap);
    let signature = clock.charge(OpKind::Sign);
    clock.charge(OpKind::Keygen);
    send(&mut clock, flight::SERVER_FLIGHT, sizes.server_flight.total(), config.chained_ack())?;

    clock.charge(OpKind::Decap);
    // Certificate issuer signature, then CertificateVerify.
    for _ in 0..2 {
        clock.charge(OpKind::Verify);
        if !provider.verify(suite, seed, &signature) {
            return Err(Error::HandshakeFailed {
                flight: flight::SERVER_FLIGHT as usize,
                elapsed_s: clock.now,
            });
        }
    }
    send(&mut clock, flight::CLIENT_FINISHED, sizes.client_finished.total(), FinalAck::Explicit)?;

    Ok(HandshakeTrace {
        handshake_time_s: clock.now,
        connect_time_s: profile.rtt_s(),
        flights,
        crypto_time_s: clock.crypto,
    })
}

pub fn run_session(
    suite: &CryptoSuite,
    profile: &NetworkProfile,
    file_bytes: u64,
    config: &SessionConfig,
    provider: &dyn CryptoProvider,
    seed: u64,
) -> Result<TimingSample> {
    let failed = |handshake: f64, total: f64, cause: Error| Error::SessionFailed {
        sample: Box::new(TimingSample::new(&suite.name, seed, handshake, total, file_bytes, false)),
        cause: cause.to_string(),
    };

    let hs = match run_handshake(suite, profile, config, provider, seed) {
        Ok(hs) => hs,
        Err(e @ Error::HandshakeFailed { elapsed_s, .. }) => return Err(failed(elapsed_s, elapsed_s, e)),
        Err(e) => return Err(e),
    };
    let mut now = hs.handshake_time_s;

    let phases = [
        (flight::REQUEST, config.request_bytes, config.chained_ack()),
        (flight::DOWNLOAD, config.response_bytes(file_bytes), FinalAck::Explicit),
    ];
    for (stream, bytes, final_ack) in phases {
        let mut rng = DeterministicRng::with_stream(seed, stream);
        match transport::deliver_flight(bytes, now, profile, &config.transport, final_ack, &mut rng) {
            Ok(tr) => now += tr.completion_time_s,
            Err(e @ Error::TransferFailed { trace }) => {
                return Err(failed(hs.handshake_time_s, now + trace.completion_time_s, e))
            }
            Err(e) => return Err(e),
        }
    }

    Ok(TimingSample::new(&suite.name, seed, hs.handshake_time_s, now, file_bytes, true))
}
