//! TCP reward-labeling service: one thread per connection, strict FIFO
//! replies per connection, and hold-last-progress fallback when the backend
//! fails.

use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crate::service::backend::{BackendError, RewardBackend};
use crate::service::maps::{progress_to_reward, RewardMap, ShapingMode};
use crate::service::wire::{read_message, write_message, RewardReply, WireError, WireMessage};

pub struct ServiceConfig {
    pub bind: String,
    pub backend: Arc<dyn RewardBackend>,
    pub map: RewardMap<f64>,
}

impl ServiceConfig {
    pub fn new(backend: Arc<dyn RewardBackend>) -> Self {
        ServiceConfig {
            bind: "127.0.0.1:0".to_string(),
            backend,
            map: RewardMap::default(),
        }
    }
}

/// Last served progress per episode, shared across connections so that a
/// reconnecting client keeps its fallback anchor.
type EpisodeMemory = Arc<Mutex<HashMap<String, i32>>>;

pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop accepting connections. In-flight connections finish on their own
    /// threads when their peers disconnect.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop with a throwaway connection.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept_thread.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept_thread.take() {
            let _ = h.join();
        }
    }
}

pub fn serve(config: ServiceConfig) -> std::io::Result<ServiceHandle> {
    let listener = TcpListener::bind(&config.bind)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let memory: EpisodeMemory = Arc::new(Mutex::new(HashMap::new()));
    let backend = config.backend;
    let map = config.map;

    let stop_accept = Arc::clone(&stop);
    let accept_thread = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if stop_accept.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let backend = Arc::clone(&backend);
            let memory = Arc::clone(&memory);
            std::thread::spawn(move || {
                if let Err(e) = handle_connection(stream, backend, map, memory) {
                    match e {
                        WireError::Closed => {}
                        other => log::warn!("connection ended with error: {other}"),
                    }
                }
            });
        }
    });

    Ok(ServiceHandle {
        addr,
        stop,
        accept_thread: Some(accept_thread),
    })
}

fn handle_connection(
    mut stream: TcpStream,
    backend: Arc<dyn RewardBackend>,
    map: RewardMap<f64>,
    memory: EpisodeMemory,
) -> Result<(), WireError> {
    stream.set_nodelay(true).ok();
    let mut reader = stream.try_clone()?;
    loop {
        // Queries are answered in arrival order; the next read does not
        // start until the previous reply is flushed.
        let msg: WireMessage<f64> = match read_message(&mut reader) {
            Ok(m) => m,
            Err(WireError::Closed) => return Ok(()),
            Err(WireError::Malformed(e)) => {
                write_message::<f64, _>(
                    &mut stream,
                    &WireMessage::Error {
                        message: format!("malformed query: {e}"),
                    },
                )?;
                continue;
            }
            Err(e) => return Err(e),
        };
        let query = match msg {
            WireMessage::RewardQuery(q) => q,
            other => {
                write_message::<f64, _>(
                    &mut stream,
                    &WireMessage::Error {
                        message: format!("expected reward_query, got {other:?}"),
                    },
                )?;
                continue;
            }
        };

        let reply = match backend.label(&query) {
            Ok((reasoning, progress)) => {
                let reward = reward_for(&query.episode_id, progress, &map, &memory);
                memory
                    .lock()
                    .unwrap()
                    .insert(query.episode_id.clone(), progress);
                RewardReply {
                    step: query.step,
                    reasoning,
                    progress,
                    reward,
                    degraded: false,
                }
            }
            Err(BackendError::MalformedQuery(m)) => {
                write_message::<f64, _>(
                    &mut stream,
                    &WireMessage::Error {
                        message: format!("malformed query: {m}"),
                    },
                )?;
                continue;
            }
            Err(e) => {
                // Timeout or parse failure: hold the last progress served for
                // this episode (0 before the first success) and mark degraded.
                log::warn!(
                    "backend failed at {}:{} ({e}); holding last progress",
                    query.episode_id,
                    query.step
                );
                let held = memory
                    .lock()
                    .unwrap()
                    .get(&query.episode_id)
                    .copied()
                    .unwrap_or(0);
                let reward = reward_for(&query.episode_id, held, &map, &memory);
                RewardReply {
                    step: query.step,
                    reasoning: String::new(),
                    progress: held,
                    reward,
                    degraded: true,
                }
            }
        };
        write_message(&mut stream, &WireMessage::RewardReply(reply))?;
    }
}

fn reward_for(episode_id: &str, progress: i32, map: &RewardMap<f64>, memory: &EpisodeMemory) -> f64 {
    match map.shaping {
        ShapingMode::Absolute => progress_to_reward(progress, map),
        ShapingMode::Potential => {
            // First query of an episode shapes against a zero-progress start.
            let prev = memory.lock().unwrap().get(episode_id).copied().unwrap_or(0);
            map.gamma * map.potential(progress) - map.potential(prev)
        }
    }
}
