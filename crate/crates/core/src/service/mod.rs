//! Online reward-labeling service: wire protocol, progress-to-reward maps,
//! labeling backends, TCP server, and client.

pub mod backend;
pub mod client;
pub mod maps;
pub mod server;
pub mod wire;

pub use backend::{
    BackendError, OracleBackend, RemoteBackend, RewardBackend, ScriptEntry, ScriptKind,
    ScriptSpec, ScriptedBackend,
};
pub use client::{ClientError, RewardClient};
pub use maps::{
    interpolate_rewards, potential_shaped, progress_to_reward, InterpolationError, RewardMap,
    ShapingMode,
};
pub use server::{serve, ServiceConfig, ServiceHandle};
pub use wire::{
    read_message, write_message, DebugChannel, RewardQuery, RewardReply, WireError, WireMessage,
    MAX_FRAME_BYTES, WIRE_VERSION,
};
