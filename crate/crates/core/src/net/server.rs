use std::io::{self, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use crate::action::{ActionKind, ActionUnit};
use crate::runtime::NavigatorRequest;
use crate::sim::latency::{mix_seed, LatencyModel};
use crate::sim::navigator::StubNavigator;

use super::wire::{write_message, FrameReader, WireError, WireMessage, WireUnit};

/// How the inference-server stub behaves.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    /// Injected compute delay per observation.
    pub latency: LatencyModel,
    pub seed: u64,
    pub horizon: usize,
    pub action_duration: LatencyModel,
    pub stop_after_round: Option<u64>,
    pub stop_after_units: Option<u64>,
}

impl ServerConfig {
    pub fn new(latency: LatencyModel, horizon: usize, action_duration: LatencyModel) -> Self {
        ServerConfig {
            latency,
            seed: 0,
            horizon,
            action_duration,
            stop_after_round: None,
            stop_after_units: None,
        }
    }

    fn navigator(&self, connection: u64) -> StubNavigator {
        StubNavigator::new(
            self.horizon,
            self.action_duration.clone(),
            mix_seed(self.seed, connection, 4),
        )
        .with_stop_after_round(self.stop_after_round)
        .with_stop_after_units(self.stop_after_units)
    }
}

/// A server running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections and waits for the accept loop to exit.
    /// Connections already open finish on their own.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `addr` and serves on a background thread.
pub fn spawn_server(addr: impl ToSocketAddrs, cfg: ServerConfig) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    let thread = thread::spawn(move || {
        if let Err(e) = serve_listener(listener, cfg, &flag) {
            warn!("server stopped: {e}");
        }
    });
    Ok(ServerHandle {
        addr: local,
        shutdown,
        thread: Some(thread),
    })
}

/// Binds `addr` and serves until `shutdown` is set.
pub fn serve(addr: impl ToSocketAddrs, cfg: ServerConfig, shutdown: &AtomicBool) -> io::Result<()> {
    serve_listener(TcpListener::bind(addr)?, cfg, shutdown)
}

fn serve_listener(listener: TcpListener, cfg: ServerConfig, shutdown: &AtomicBool) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    info!("serving on {}", listener.local_addr()?);
    let connections = AtomicU64::new(0);
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let index = connections.fetch_add(1, Ordering::SeqCst);
                let cfg = cfg.clone();
                thread::spawn(move || {
                    debug!("connection {index} from {peer}");
                    if let Err(e) = handle_connection(stream, &cfg, index) {
                        warn!("connection {index} from {peer} dropped: {e}");
                    }
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn handle_connection(stream: TcpStream, cfg: &ServerConfig, index: u64) -> Result<(), WireError> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut writer = BufWriter::new(stream.try_clone()?);
    let mut reader = FrameReader::new(stream);
    let mut navigator = cfg.navigator(index);
    let mut delays = cfg.latency.stream(mix_seed(cfg.seed, index, 1));
    let mut last_round: Option<u64> = None;
    while let Some(msg) = reader.read_message()? {
        let received = Instant::now();
        let WireMessage::ObservationMsg {
            round,
            committed_guard_ids,
            instruction_id,
            ..
        } = msg
        else {
            return Err(WireError::Protocol(format!("server got {msg:?}")));
        };
        if last_round.is_some_and(|r| round <= r) {
            return Err(WireError::Protocol(format!(
                "round {round} does not follow {}",
                last_round.unwrap_or_default()
            )));
        }
        last_round = Some(round);
        let request = NavigatorRequest {
            round,
            observation: round,
            // the stub only needs ids to locate the committed prefix
            committed_guard: committed_guard_ids
                .iter()
                .map(|&id| ActionUnit {
                    id,
                    kind: ActionKind::Primitive,
                    predicted_duration: 0.0,
                })
                .collect(),
            tail_hint: Vec::new(),
            instruction_id,
        };
        let continuation = navigator.next_continuation(&request);
        let delay = delays.next_secs();
        let remaining = Duration::from_secs_f64(delay).saturating_sub(received.elapsed());
        thread::sleep(remaining);
        let compute = received.elapsed().as_secs_f64();
        debug!("connection {index} round {round}: compute {compute:.3}s");
        let reply = if continuation.units.len() == 1 && continuation.units[0].is_stop() {
            WireMessage::StopMsg { round }
        } else {
            WireMessage::ContinuationMsg {
                round,
                units: continuation.units.iter().map(WireUnit::from).collect(),
                server_compute_time: compute,
            }
        };
        write_message(&mut writer, &reply)?;
    }
    Ok(())
}
