use proptest::prelude::*;
use qsc_bench::netlink::NetworkProfile;
use qsc_bench::session::{run_handshake, run_session, SessionConfig};
use qsc_bench::suites::{builtin_catalog, CryptoSuite, MockProvider};

fn suite(name: &str) -> CryptoSuite {
    builtin_catalog().into_iter().find(|s| s.name == name).unwrap()
}

fn profile(latency: f64, loss: f64) -> NetworkProfile {
    NetworkProfile::new(latency, loss).unwrap()
}

/// Loss-free, unlimited-bandwidth transfer time of `n` segments.
fn flight_time(bytes: u64, latency: f64, final_explicit: bool) -> f64 {
    let n = bytes.div_ceil(1460);
    let (mut k, mut cwnd, mut rounds) = (0, 10, 0);
    while k < n {
        k += cwnd.min(n - k);
        cwnd = (cwnd * 2).min(64);
        rounds += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let traversals = 2 * rounds - if final_explicit { 0 } else { 1 };
    traversals as f64 * latency
}

#[test]
fn two_mib_session_matches_closed_form() {
    let latency = 0.1;
    let p = profile(latency, 0.0);
    let cfg = SessionConfig::default();
    for s in builtin_catalog() {
        let f = s.flight_sizes();
        let hs = flight_time(f.client_hello.total(), latency, false)
            + flight_time(f.server_flight.total(), latency, false)
            + flight_time(f.client_finished.total(), latency, true);
        let request = flight_time(512, latency, false);
        // 2 MiB plus 1 % record overhead, rounded up
        let download = flight_time(2_097_152 + 20_972, latency, true);
        let sample = run_session(&s, &p, 2_097_152, &cfg, &MockProvider, 5).unwrap();
        assert!((sample.handshake_time_s - hs).abs() < 1e-9, "{}", s.name);
        assert!((sample.total_download_time_s - (hs + request + download)).abs() < 1e-9, "{}", s.name);
    }
}

#[test]
fn handshake_is_affine_in_latency() {
    for piggy in [true, false] {
        let cfg = SessionConfig {
            piggyback_handshake_acks: piggy,
            ..Default::default()
        };
        for s in builtin_catalog() {
            let t = |l: f64| run_handshake(&s, &profile(l, 0.0), &cfg, &MockProvider, 1).unwrap().handshake_time_s;
            let (t0, t1, t2) = (t(0.0), t(0.1), t(0.3));
            let slope = (t1 - t0) / 0.1;
            assert!((t2 - (t0 + 0.3 * slope)).abs() < 1e-9, "{}", s.name);
            if s.name == "classical" {
                let want = if piggy { 4.0 } else { 6.0 };
                assert!((slope - want).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn lossless_handshake_nondecreasing_in_signature_size() {
    let p = profile(0.05, 0.0);
    let base = suite("kyber_falcon");
    let mut prev = 0.0;
    for extra in (0..40_000).step_by(1000) {
        let mut s = base.clone();
        s.sig.signature_bytes += extra;
        let t = run_handshake(&s, &p, &SessionConfig::default(), &MockProvider, 3).unwrap().handshake_time_s;
        assert!(t >= prev);
        prev = t;
    }
}

#[test]
fn larger_suites_are_slower_on_average_under_loss() {
    let cfg = SessionConfig::default();
    for loss in [0.0, 0.01, 0.025, 0.05] {
        let p = profile(0.1, loss);
        let mean = |name: &str| {
            let s = suite(name);
            (0..500u64)
                .map(|seed| run_handshake(&s, &p, &cfg, &MockProvider, seed).unwrap().handshake_time_s)
                .sum::<f64>()
                / 500.0
        };
        assert!(mean("kyber_sphincs") >= mean("classical"), "loss {loss}");
    }
}

#[test]
fn paired_loss_draws_across_suites() {
    // Download draws depend only on the seed and flight position, so with
    // equal download sizes two suites see the same download duration.
    let p = profile(0.1, 0.03);
    let cfg = SessionConfig::default();
    for seed in 0..50 {
        let a = run_session(&suite("classical"), &p, 500_000, &cfg, &MockProvider, seed).unwrap();
        let b = run_session(&suite("kyber_dilithium"), &p, 500_000, &cfg, &MockProvider, seed).unwrap();
        let da = a.total_download_time_s - a.handshake_time_s;
        let db = b.total_download_time_s - b.handshake_time_s;
        assert!((da - db).abs() < 2e-9, "seed {seed}: {da} vs {db}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn session_invariants(
        idx in 0usize..4,
        latency in 0.0f64..0.4,
        loss in 0.0f64..0.06,
        file in 0u64..300_000,
        seed in any::<u64>(),
    ) {
        let s = builtin_catalog().remove(idx);
        let p = profile(latency, loss);
        let cfg = SessionConfig::default();
        let a = run_session(&s, &p, file, &cfg, &MockProvider, seed).unwrap();
        let b = run_session(&s, &p, file, &cfg, &MockProvider, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.total_download_time_s >= a.handshake_time_s);
        prop_assert!(a.handshake_time_s >= 4.0 * latency - 1e-9);
        if a.total_download_time_s > 0.0 {
            prop_assert_eq!(a.transfer_rate_bps, file as f64 / a.total_download_time_s);
        }
        let hs = run_handshake(&s, &p, &cfg, &MockProvider, seed).unwrap();
        prop_assert!(hs.handshake_time_s >= hs.crypto_time_s);
        prop_assert_eq!(hs.flights.len(), 3);
    }
}
