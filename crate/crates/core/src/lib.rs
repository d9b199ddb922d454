//! Deterministic simulator for TLS 1.3 handshakes and file downloads with
//! classical and hybrid post-quantum cipher suites over an impaired link.
//!
//! Layers, bottom up: [`suites`] (wire sizes, mock crypto), [`netlink`]
//! (lossy path), [`transport`] (reliable stream), [`session`] (handshake +
//! download timing), [`runner`] (scenario matrix), [`metrics`] (stats,
//! CSV, plots) and [`cli`].

// `!(x >= 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod metrics;
pub mod netlink;
pub mod runner;
pub mod session;
pub mod suites;
pub mod transport;

pub use error::{Error, Result};

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}
