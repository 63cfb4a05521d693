//! Advisor reached over a WebSocket, normally a human at the console.
//!
//! A listener thread owns the socket; the training thread blocks in
//! [`RemoteAdvisor::advise`] until the matching `feedback` arrives or the
//! timeout expires. Replies are matched by id, never by arrival order.

use std::collections::VecDeque;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tungstenite::WebSocket;

use super::protocol::Message;
use super::{Advisor, AdvisorQuery, AdvisorReply, IterationStats};
use crate::envs::EnvTag;
use crate::error::{Error, Result};

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug)]
enum Incoming {
    Feedback { id: u64, action: usize },
    Malformed(String),
}

#[derive(Debug, Clone)]
struct PendingAsk {
    id: u64,
    /// Bumped when the same query is re-issued.
    generation: u32,
    text: String,
}

#[derive(Debug, Default)]
struct Shared {
    pending: Option<PendingAsk>,
    outbox: VecDeque<String>,
    connected: bool,
    shutdown: bool,
}

pub struct RemoteAdvisor {
    shared: Arc<Mutex<Shared>>,
    incoming: Receiver<Incoming>,
    timeout: Duration,
    addr: SocketAddr,
    listener: Option<JoinHandle<()>>,
}

impl RemoteAdvisor {
    /// Binds `addr` and starts accepting console connections in the background.
    pub fn serve(addr: impl ToSocketAddrs, env: EnvTag, timeout: Duration) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Mutex::new(Shared::default()));
        let (tx, incoming) = mpsc::channel();
        let hello = Message::hello(env).to_json();
        let thread_shared = Arc::clone(&shared);
        let handle = std::thread::Builder::new()
            .name("advisor-listener".into())
            .spawn(move || accept_loop(listener, thread_shared, tx, hello))?;
        Ok(Self {
            shared,
            incoming,
            timeout,
            addr,
            listener: Some(handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn is_connected(&self) -> bool {
        self.lock().connected
    }

    /// Blocks until a console is connected or `wait` elapses.
    pub fn wait_for_console(&self, wait: Duration) -> bool {
        let deadline = Instant::now() + wait;
        while Instant::now() < deadline {
            if self.is_connected() {
                return true;
            }
            std::thread::sleep(POLL);
        }
        self.is_connected()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Shared> {
        self.shared.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn set_pending(&self, pending: Option<PendingAsk>) {
        self.lock().pending = pending;
    }
}

impl Advisor for RemoteAdvisor {
    fn advise(&mut self, query: &AdvisorQuery) -> Result<AdvisorReply> {
        // late answers to earlier queries
        while self.incoming.try_recv().is_ok() {}
        let mut pending = PendingAsk {
            id: query.id,
            generation: 0,
            text: Message::ask(query).to_json(),
        };
        self.set_pending(Some(pending.clone()));
        let mut deadline = Instant::now() + self.timeout;
        loop {
            let wait = deadline.saturating_duration_since(Instant::now());
            let problem = match self.incoming.recv_timeout(wait) {
                Ok(Incoming::Feedback { id, action }) if id == query.id => {
                    if query.legal.contains(&action) {
                        self.set_pending(None);
                        return Ok(AdvisorReply { id, action });
                    }
                    format!("action {action} is not legal for query {id}")
                }
                Ok(Incoming::Feedback { id, .. }) => {
                    log::debug!("ignoring feedback for stale query {id}");
                    continue;
                }
                Ok(Incoming::Malformed(reason)) => reason,
                Err(RecvTimeoutError::Timeout) => {
                    self.set_pending(None);
                    log::warn!("advisor did not answer query {} in {:?}", query.id, self.timeout);
                    return Err(Error::AdvisorTimeout(query.id));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.set_pending(None);
                    return Err(Error::Protocol("advisor listener stopped".into()));
                }
            };
            if pending.generation > 0 {
                self.set_pending(None);
                log::warn!("query {}: {problem}; giving up after one retry", query.id);
                return Err(Error::Protocol(problem));
            }
            log::warn!("query {}: {problem}; re-issuing", query.id);
            pending.generation += 1;
            self.set_pending(Some(pending.clone()));
            deadline = Instant::now() + self.timeout;
        }
    }

    fn on_iteration(&mut self, stats: &IterationStats) {
        let mut shared = self.lock();
        if shared.connected {
            shared.outbox.push_back(Message::stats(stats).to_json());
        }
    }

    fn needs_render(&self) -> bool {
        true
    }
}

impl Drop for RemoteAdvisor {
    fn drop(&mut self) {
        self.lock().shutdown = true;
        if let Some(handle) = self.listener.take() {
            let _ = handle.join();
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Mutex<Shared>>, tx: Sender<Incoming>, hello: String) {
    let lock = || shared.lock().unwrap_or_else(|e| e.into_inner());
    loop {
        if lock().shutdown {
            return;
        }
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("advisor console connected from {peer}");
                if let Err(e) = run_session(stream, &shared, &tx, &hello) {
                    log::warn!("advisor console session ended: {e}");
                }
                let mut s = lock();
                s.connected = false;
                s.outbox.clear();
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(e) => {
                log::warn!("advisor listener accept failed: {e}");
                std::thread::sleep(POLL);
            }
        }
    }
}

fn run_session(
    stream: TcpStream,
    shared: &Arc<Mutex<Shared>>,
    tx: &Sender<Incoming>,
    hello: &str,
) -> std::result::Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(err) => err,
        tungstenite::HandshakeError::Interrupted(_) => {
            tungstenite::Error::Io(std::io::Error::other("interrupted handshake"))
        }
    })?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    ws.send(tungstenite::Message::text(hello))?;
    let lock = || shared.lock().unwrap_or_else(|e| e.into_inner());
    lock().connected = true;
    let mut last_sent: Option<(u64, u32)> = None;
    loop {
        let mut to_send = Vec::new();
        {
            let mut s = lock();
            if s.shutdown {
                let _ = ws.close(None);
                return Ok(());
            }
            if let Some(p) = &s.pending {
                if last_sent != Some((p.id, p.generation)) {
                    last_sent = Some((p.id, p.generation));
                    to_send.push(p.text.clone());
                }
            }
            to_send.extend(s.outbox.drain(..));
        }
        for text in to_send {
            ws.send(tungstenite::Message::text(text))?;
        }
        match ws.read() {
            Ok(tungstenite::Message::Text(text)) => {
                let incoming = match Message::parse(text.as_str()) {
                    Ok(Message::Feedback { id, action }) => Incoming::Feedback { id, action },
                    Ok(_) => continue,
                    Err(e) => Incoming::Malformed(format!("unreadable reply: {e}")),
                };
                if tx.send(incoming).is_err() {
                    return Ok(());
                }
            }
            Ok(tungstenite::Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
}
