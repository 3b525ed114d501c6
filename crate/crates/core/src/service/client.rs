//! Blocking client for the reward-labeling service.

use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use crate::service::wire::{read_message, write_message, RewardQuery, RewardReply, WireError, WireMessage};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("service unreachable: {0}")]
    Unreachable(std::io::Error),
    #[error("wire error: {0}")]
    Wire(#[from] WireError),
    #[error("service reported error: {0}")]
    Service(String),
    #[error("unexpected message type")]
    UnexpectedMessage,
}

pub struct RewardClient {
    stream: TcpStream,
}

impl RewardClient {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr).map_err(ClientError::Unreachable)?;
        stream.set_nodelay(true).ok();
        Ok(RewardClient { stream })
    }

    pub fn set_timeout(&self, timeout: Option<Duration>) -> std::io::Result<()> {
        self.stream.set_read_timeout(timeout)?;
        self.stream.set_write_timeout(timeout)
    }

    /// Send one query and block for its reply. Replies arrive in query
    /// order, so pipelined use from a single thread is safe.
    pub fn query(&mut self, query: &RewardQuery<f64>) -> Result<RewardReply<f64>, ClientError> {
        write_message(&mut self.stream, &WireMessage::RewardQuery(query.clone()))?;
        match read_message::<f64, _>(&mut self.stream)? {
            WireMessage::RewardReply(r) => Ok(r),
            WireMessage::Error { message } => Err(ClientError::Service(message)),
            WireMessage::RewardQuery(_) => Err(ClientError::UnexpectedMessage),
        }
    }
}
