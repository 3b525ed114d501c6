//! Length-prefixed, versioned wire protocol: a 4-byte big-endian length
//! followed by a JSON body tagged with `v` and `type`. Unknown fields are
//! ignored for forward compatibility.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response::QueryContext;
use crate::types::EnvState;

pub const WIRE_VERSION: u32 = 1;

/// Maximum accepted frame size; anything larger is treated as a protocol
/// error rather than an allocation request.
pub const MAX_FRAME_BYTES: u32 = 16 * 1024 * 1024;

/// Privileged simulator state attached for the oracle backend only; never
/// visible to the learning agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugChannel<S> {
    pub first_state: EnvState<S>,
    pub state: EnvState<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: serde::Deserialize<'de>"))]
pub struct RewardQuery<S> {
    pub episode_id: String,
    pub step: usize,
    pub context: QueryContext<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug: Option<DebugChannel<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardReply<S> {
    pub step: usize,
    pub reasoning: String,
    pub progress: i32,
    pub reward: S,
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage<S> {
    RewardQuery(RewardQuery<S>),
    RewardReply(RewardReply<S>),
    Error { message: String },
}

#[derive(Serialize)]
struct Envelope<'a, S> {
    v: u32,
    #[serde(flatten)]
    body: &'a WireMessage<S>,
}

#[derive(Deserialize)]
struct VersionProbe {
    v: u32,
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported wire version {0}")]
    Version(u32),
    #[error("frame of {0} bytes exceeds limit")]
    FrameTooLarge(u32),
    #[error("peer closed the connection")]
    Closed,
}

pub fn write_message<S: Serialize, W: Write>(
    w: &mut W,
    msg: &WireMessage<S>,
) -> Result<(), WireError> {
    let body = serde_json::to_vec(&Envelope {
        v: WIRE_VERSION,
        body: msg,
    })?;
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

/// Read one framed message; `Closed` on clean EOF at a frame boundary.
pub fn read_message<S: serde::de::DeserializeOwned, R: Read>(
    r: &mut R,
) -> Result<WireMessage<S>, WireError> {
    let mut len_buf = [0u8; 4];
    match r.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Err(WireError::Closed),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len_buf);
    if len > MAX_FRAME_BYTES {
        return Err(WireError::FrameTooLarge(len));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    let probe: VersionProbe = serde_json::from_slice(&body)?;
    if probe.v != WIRE_VERSION {
        return Err(WireError::Version(probe.v));
    }
    Ok(serde_json::from_slice(&body)?)
}
