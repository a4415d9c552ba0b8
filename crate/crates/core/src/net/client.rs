use std::io::BufWriter;
use std::net::{Shutdown, SocketAddr, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use crate::action::{ActionUnit, Continuation};
use crate::runtime::{
    run_episode, ControllerPort, EpisodeConfig, EpisodeOutcome, NavigatorPort, NavigatorRequest,
    PortError, Session,
};
use crate::time::{Clock, MonotonicClock};

use super::wire::{write_message, FrameReader, WireMessage};

/// Navigator port backed by a socket to an inference server. One request is
/// in flight at a time.
pub struct SocketNavigator<K: Clock> {
    writer: BufWriter<TcpStream>,
    reader: FrameReader<TcpStream>,
    clock: K,
    last_id: Option<u64>,
}

impl<K: Clock> SocketNavigator<K> {
    pub fn new(stream: TcpStream, clock: K) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        Ok(SocketNavigator {
            writer: BufWriter::new(stream.try_clone()?),
            reader: FrameReader::new(stream),
            clock,
            last_id: None,
        })
    }
}

impl<K: Clock> NavigatorPort for SocketNavigator<K> {
    fn refresh(&mut self, request: &NavigatorRequest) -> Result<Continuation, PortError> {
        let err = |e: &dyn std::fmt::Display| PortError::Navigator(e.to_string());
        let msg = WireMessage::ObservationMsg {
            round: request.round,
            client_send_time: self.clock.now().as_secs_f64(),
            committed_guard_ids: request.committed_ids(),
            instruction_id: request.instruction_id,
        };
        write_message(&mut self.writer, &msg).map_err(|e| err(&e))?;
        let reply = self
            .reader
            .read_message()
            .map_err(|e| err(&e))?
            .ok_or_else(|| PortError::Navigator("server closed the connection".into()))?;
        if reply.round() != request.round {
            return Err(PortError::Navigator(format!(
                "reply for round {} while round {} is pending",
                reply.round(),
                request.round
            )));
        }
        let units = match reply {
            WireMessage::ContinuationMsg { units, .. } => units
                .iter()
                .map(ActionUnit::try_from)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(&e))?,
            WireMessage::StopMsg { .. } => {
                let id = self.last_id.map_or(1, |i| i + 1);
                vec![ActionUnit::stop(id)]
            }
            WireMessage::ObservationMsg { .. } => {
                return Err(PortError::Navigator("server sent an observation".into()))
            }
        };
        let c = Continuation::new(request.round, units).map_err(|e| err(&e))?;
        self.last_id = c.units.last().map(|u| u.id);
        Ok(c)
    }
}

/// Controller port that simulates actuation by sleeping for each unit's
/// predicted duration.
#[derive(Debug, Clone, Copy, Default)]
pub struct SleepController;

impl ControllerPort for SleepController {
    fn execute(&mut self, unit: &ActionUnit) -> Result<f64, PortError> {
        let start = Instant::now();
        thread::sleep(Duration::from_secs_f64(unit.predicted_duration));
        Ok(start.elapsed().as_secs_f64())
    }
}

fn resolve(addr: impl ToSocketAddrs) -> Result<SocketAddr, String> {
    addr.to_socket_addrs()
        .map_err(|e| e.to_string())?
        .next()
        .ok_or_else(|| "address resolved to nothing".to_string())
}

/// Runs one episode against a remote navigator, stamping all five round
/// events on this process's monotonic clock.
///
/// An unreachable server yields an aborted outcome with no rounds.
pub fn run_client_episode<C>(
    server: impl ToSocketAddrs,
    cfg: EpisodeConfig,
    controller: C,
) -> EpisodeOutcome
where
    C: ControllerPort + Send + 'static,
{
    let clock = MonotonicClock::new();
    let connected = resolve(server).and_then(|addr| {
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(5))
            .map_err(|e| format!("connecting to {addr}: {e}"))?;
        let control = stream.try_clone().map_err(|e| e.to_string())?;
        let nav = SocketNavigator::new(stream, clock).map_err(|e| e.to_string())?;
        Ok((nav, control))
    });
    match connected {
        Ok((nav, control)) => {
            let out = run_episode(nav, controller, cfg, clock);
            // unblocks a refresher still waiting on a reply
            let _ = control.shutdown(Shutdown::Both);
            out
        }
        Err(reason) => {
            let now = clock.now();
            let (mut session, _) = Session::start(cfg, now);
            session.abort_now(now, reason);
            session.into_outcome()
        }
    }
}
