use std::path::PathBuf;

use thiserror::Error;

use crate::session::TimingSample;
use crate::transport::TransferTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("segment of {size} bytes exceeds MTU of {mtu} bytes")]
    OversizedSegment { size: u64, mtu: u32 },

    #[error("transfer failed after {} segments ({} retransmissions)", .trace.segments_sent, .trace.retransmissions)]
    TransferFailed { trace: TransferTrace },

    #[error("handshake failed: flight {flight} could not be delivered")]
    HandshakeFailed { flight: usize, elapsed_s: f64 },

    #[error("session failed: {cause}")]
    SessionFailed {
        sample: Box<TimingSample>,
        cause: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// I/O failures map to exit code 2, everything else to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
