//! Newline-delimited JSON framing: one message object per line, tagged by
//! `"type"`.

use std::io::{self, BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionError, ActionKind, ActionUnit};

/// Frames longer than this are rejected rather than buffered.
pub const MAX_FRAME_BYTES: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("frame not terminated by a linefeed")]
    Truncated,
    #[error("frame exceeds {MAX_FRAME_BYTES} bytes")]
    Oversized,
    #[error("protocol violation: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireUnit {
    pub id: u64,
    pub kind: ActionKind,
    pub predicted_duration: f64,
}

impl From<&ActionUnit> for WireUnit {
    fn from(u: &ActionUnit) -> Self {
        WireUnit {
            id: u.id,
            kind: u.kind,
            predicted_duration: u.predicted_duration,
        }
    }
}

impl TryFrom<&WireUnit> for ActionUnit {
    type Error = ActionError;

    fn try_from(w: &WireUnit) -> Result<Self, ActionError> {
        ActionUnit::new(w.id, w.kind, w.predicted_duration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum WireMessage {
    ObservationMsg {
        round: u64,
        /// Client clock, seconds. Informational on the server.
        client_send_time: f64,
        committed_guard_ids: Vec<u64>,
        instruction_id: u64,
    },
    ContinuationMsg {
        round: u64,
        units: Vec<WireUnit>,
        /// Server-side compute time, seconds. Never mixed into client metrics.
        server_compute_time: f64,
    },
    StopMsg {
        round: u64,
    },
}

impl WireMessage {
    pub fn round(&self) -> u64 {
        match self {
            WireMessage::ObservationMsg { round, .. }
            | WireMessage::ContinuationMsg { round, .. }
            | WireMessage::StopMsg { round } => *round,
        }
    }
}

pub fn encode_message(msg: &WireMessage) -> Vec<u8> {
    let mut out = serde_json::to_vec(msg).expect("wire messages serialize");
    out.push(b'\n');
    out
}

/// Decodes exactly one frame, including its terminating linefeed.
pub fn decode_message(frame: &[u8]) -> Result<WireMessage, WireError> {
    let body = frame.strip_suffix(b"\n").ok_or(WireError::Truncated)?;
    if body.contains(&b'\n') {
        return Err(WireError::Protocol("more than one frame".into()));
    }
    Ok(serde_json::from_slice(body)?)
}

pub fn write_message(w: &mut impl Write, msg: &WireMessage) -> Result<(), WireError> {
    w.write_all(&encode_message(msg))?;
    w.flush()?;
    Ok(())
}

/// Reads frames from a byte stream.
pub struct FrameReader<R> {
    inner: BufReader<R>,
    buf: Vec<u8>,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        FrameReader {
            inner: BufReader::new(inner),
            buf: Vec::new(),
        }
    }

    /// Next message, or `None` on a clean end of stream. A partial frame
    /// before end of stream is an error.
    pub fn read_message(&mut self) -> Result<Option<WireMessage>, WireError> {
        self.buf.clear();
        let limit = (MAX_FRAME_BYTES + 1) as u64;
        let n = (&mut self.inner).take(limit).read_until(b'\n', &mut self.buf)?;
        if n == 0 {
            return Ok(None);
        }
        if self.buf.last() != Some(&b'\n') {
            return Err(if n as u64 >= limit {
                WireError::Oversized
            } else {
                WireError::Truncated
            });
        }
        decode_message(&self.buf).map(Some)
    }
}
