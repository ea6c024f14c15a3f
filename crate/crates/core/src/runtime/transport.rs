//! Message fabrics. Both deliver `Vec<f64>` payloads addressed by
//! `(src, dst, tag)` with FIFO order per triple.

use std::collections::{HashMap, VecDeque};
use std::io::{ErrorKind, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::error::RuntimeError;

type Inbox = HashMap<(usize, u64), VecDeque<Vec<f64>>>;

/// One rank's attachment to a fabric.
pub trait Endpoint: Send {
    fn rank(&self) -> usize;
    fn nranks(&self) -> usize;
    /// Enqueue a message; never blocks on the receiver.
    fn send(&mut self, dst: usize, tag: u64, data: &[f64]) -> Result<(), RuntimeError>;
    fn try_recv(&mut self, src: usize, tag: u64) -> Result<Option<Vec<f64>>, RuntimeError>;
    /// Block for at most `slice` waiting for a message.
    fn recv_for(
        &mut self,
        src: usize,
        tag: u64,
        slice: Duration,
    ) -> Result<Option<Vec<f64>>, RuntimeError>;
    /// Drive outstanding I/O without blocking.
    fn progress(&mut self) -> Result<(), RuntimeError>;
    /// Push every queued outgoing byte before teardown.
    fn flush(&mut self, timeout: Duration) -> Result<(), RuntimeError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Inproc,
    Socket,
}

impl std::str::FromStr for TransportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(TransportKind::Inproc),
            "socket" => Ok(TransportKind::Socket),
            other => Err(format!("unknown transport `{other}` (expected inproc or socket)")),
        }
    }
}

impl std::fmt::Display for TransportKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransportKind::Inproc => "inproc",
            TransportKind::Socket => "socket",
        })
    }
}

// ---------------------------------------------------------------------------
// in-process

struct Mailbox {
    inbox: Mutex<Inbox>,
    ready: Condvar,
}

/// Shared mailboxes, one per destination rank.
pub struct InprocFabric {
    boxes: Vec<Mailbox>,
}

impl InprocFabric {
    pub fn new(nranks: usize) -> Arc<Self> {
        Arc::new(Self {
            boxes: (0..nranks)
                .map(|_| Mailbox {
                    inbox: Mutex::new(HashMap::new()),
                    ready: Condvar::new(),
                })
                .collect(),
        })
    }

    pub fn endpoint(self: &Arc<Self>, rank: usize) -> InprocEndpoint {
        InprocEndpoint {
            rank,
            fabric: Arc::clone(self),
        }
    }
}

pub struct InprocEndpoint {
    rank: usize,
    fabric: Arc<InprocFabric>,
}

fn lock(m: &Mutex<Inbox>) -> std::sync::MutexGuard<'_, Inbox> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn pop(inbox: &mut Inbox, src: usize, tag: u64) -> Option<Vec<f64>> {
    let q = inbox.get_mut(&(src, tag))?;
    let v = q.pop_front();
    if q.is_empty() {
        inbox.remove(&(src, tag));
    }
    v
}

impl Endpoint for InprocEndpoint {
    fn rank(&self) -> usize {
        self.rank
    }

    fn nranks(&self) -> usize {
        self.fabric.boxes.len()
    }

    fn send(&mut self, dst: usize, tag: u64, data: &[f64]) -> Result<(), RuntimeError> {
        let mb = self
            .fabric
            .boxes
            .get(dst)
            .ok_or_else(|| RuntimeError::Transport(format!("no rank {dst}")))?;
        lock(&mb.inbox)
            .entry((self.rank, tag))
            .or_default()
            .push_back(data.to_vec());
        mb.ready.notify_all();
        Ok(())
    }

    fn try_recv(&mut self, src: usize, tag: u64) -> Result<Option<Vec<f64>>, RuntimeError> {
        Ok(pop(&mut lock(&self.fabric.boxes[self.rank].inbox), src, tag))
    }

    fn recv_for(
        &mut self,
        src: usize,
        tag: u64,
        slice: Duration,
    ) -> Result<Option<Vec<f64>>, RuntimeError> {
        let mb = &self.fabric.boxes[self.rank];
        let deadline = Instant::now() + slice;
        let mut guard = lock(&mb.inbox);
        loop {
            if let Some(v) = pop(&mut guard, src, tag) {
                return Ok(Some(v));
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            guard = mb
                .ready
                .wait_timeout(guard, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }

    fn progress(&mut self) -> Result<(), RuntimeError> {
        Ok(())
    }

    fn flush(&mut self, _timeout: Duration) -> Result<(), RuntimeError> {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// loopback sockets

const HEADER: usize = 16;

struct Conn {
    stream: TcpStream,
    rbuf: Vec<u8>,
    wbuf: Vec<u8>,
    wpos: usize,
}

/// Full-mesh loopback TCP endpoint. Frames are `tag: u64 LE, len: u64 LE`
/// followed by `len` little-endian doubles.
pub struct SocketEndpoint {
    rank: usize,
    nranks: usize,
    conns: Vec<Option<Conn>>,
    inbox: Inbox,
}

fn io_err(what: &str, e: std::io::Error) -> RuntimeError {
    RuntimeError::Transport(format!("{what}: {e}"))
}

fn read_u64(s: &mut TcpStream) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    s.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Rendezvous service: collects every rank's listening port and hands the
/// full table back to each of them.
pub struct Coordinator {
    listener: TcpListener,
}

impl Coordinator {
    /// Bind the coordinator on loopback; port 0 picks an ephemeral port.
    pub fn bind(port: u16) -> Result<Self, RuntimeError> {
        let listener =
            TcpListener::bind(("127.0.0.1", port)).map_err(|e| io_err("coordinator bind", e))?;
        Ok(Self { listener })
    }

    pub fn port(&self) -> u16 {
        self.listener.local_addr().map(|a| a.port()).unwrap_or(0)
    }

    /// Serve one rendezvous round for `nranks` ranks.
    pub fn serve(self, nranks: usize, timeout: Duration) -> Result<(), RuntimeError> {
        self.listener
            .set_nonblocking(true)
            .map_err(|e| io_err("coordinator", e))?;
        let deadline = Instant::now() + timeout;
        let mut peers: Vec<(usize, u64, TcpStream)> = Vec::new();
        while peers.len() < nranks {
            match self.listener.accept() {
                Ok((mut s, _)) => {
                    s.set_nonblocking(false).map_err(|e| io_err("coordinator", e))?;
                    s.set_read_timeout(Some(timeout)).ok();
                    let rank = read_u64(&mut s).map_err(|e| io_err("coordinator read", e))?;
                    let port = read_u64(&mut s).map_err(|e| io_err("coordinator read", e))?;
                    peers.push((rank as usize, port, s));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() > deadline {
                        return Err(RuntimeError::Transport(
                            "coordinator timed out waiting for ranks".into(),
                        ));
                    }
                    std::thread::sleep(Duration::from_millis(1));
                }
                Err(e) => return Err(io_err("coordinator accept", e)),
            }
        }
        let mut table = vec![0u64; nranks];
        for (r, p, _) in &peers {
            if *r >= nranks {
                return Err(RuntimeError::Transport(format!("coordinator got rank {r}")));
            }
            table[*r] = *p;
        }
        let bytes: Vec<u8> = table.iter().flat_map(|p| p.to_le_bytes()).collect();
        for (_, _, mut s) in peers {
            s.write_all(&bytes).map_err(|e| io_err("coordinator write", e))?;
        }
        Ok(())
    }
}

impl SocketEndpoint {
    /// Join the mesh via the coordinator at `coord_port`: connect to every
    /// lower rank and accept every higher one.
    pub fn establish(
        rank: usize,
        nranks: usize,
        coord_port: u16,
        timeout: Duration,
    ) -> Result<Self, RuntimeError> {
        let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| io_err("bind", e))?;
        let my_port = listener.local_addr().map_err(|e| io_err("bind", e))?.port();

        let deadline = Instant::now() + timeout;
        let mut coord = loop {
            match TcpStream::connect(("127.0.0.1", coord_port)) {
                Ok(s) => break s,
                Err(e) if Instant::now() < deadline => {
                    let _ = e;
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(io_err("connect coordinator", e)),
            }
        };
        coord.set_read_timeout(Some(timeout)).ok();
        coord
            .write_all(&[(rank as u64).to_le_bytes(), (my_port as u64).to_le_bytes()].concat())
            .map_err(|e| io_err("rendezvous", e))?;
        let mut table = Vec::with_capacity(nranks);
        for _ in 0..nranks {
            table.push(read_u64(&mut coord).map_err(|e| io_err("rendezvous", e))? as u16);
        }

        let mut streams: Vec<Option<TcpStream>> = (0..nranks).map(|_| None).collect();
        for (peer, &port) in table.iter().enumerate().take(rank) {
            let mut s =
                TcpStream::connect(("127.0.0.1", port)).map_err(|e| io_err("connect peer", e))?;
            s.write_all(&(rank as u64).to_le_bytes())
                .map_err(|e| io_err("handshake", e))?;
            streams[peer] = Some(s);
        }
        listener.set_nonblocking(true).map_err(|e| io_err("listen", e))?;
        for _ in rank + 1..nranks {
            let mut s = loop {
                match listener.accept() {
                    Ok((s, _)) => break s,
                    Err(e) if e.kind() == ErrorKind::WouldBlock && Instant::now() < deadline => {
                        std::thread::sleep(Duration::from_millis(1));
                    }
                    Err(e) => return Err(io_err("accept peer", e)),
                }
            };
            s.set_nonblocking(false).map_err(|e| io_err("accept peer", e))?;
            s.set_read_timeout(Some(timeout)).ok();
            let peer = read_u64(&mut s).map_err(|e| io_err("handshake", e))? as usize;
            if peer >= nranks || streams[peer].is_some() {
                return Err(RuntimeError::Transport(format!("bad handshake from {peer}")));
            }
            streams[peer] = Some(s);
        }
        let conns = streams
            .into_iter()
            .map(|s| {
                s.map(|s| {
                    s.set_nodelay(true).ok();
                    s.set_read_timeout(None).ok();
                    s.set_nonblocking(true).map(|_| Conn {
                        stream: s,
                        rbuf: Vec::new(),
                        wbuf: Vec::new(),
                        wpos: 0,
                    })
                })
                .transpose()
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| io_err("configure", e))?;
        Ok(Self {
            rank,
            nranks,
            conns,
            inbox: HashMap::new(),
        })
    }

    fn pump(&mut self) -> Result<bool, RuntimeError> {
        let mut moved = false;
        for (peer, slot) in self.conns.iter_mut().enumerate() {
            let Some(c) = slot else { continue };
            while c.wpos < c.wbuf.len() {
                match c.stream.write(&c.wbuf[c.wpos..]) {
                    Ok(0) => return Err(RuntimeError::Transport(format!("peer {peer} closed"))),
                    Ok(n) => {
                        c.wpos += n;
                        moved = true;
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                    Err(e) if e.kind() == ErrorKind::Interrupted => {}
                    Err(e) => return Err(io_err("write", e)),
                }
            }
            if c.wpos == c.wbuf.len() {
                c.wbuf.clear();
                c.wpos = 0;
            }
            let mut chunk = [0u8; 64 * 1024];
            loop {
                match c.stream.read(&mut chunk) {
                    Ok(0) => break,
                    Ok(n) => {
                        c.rbuf.extend_from_slice(&chunk[..n]);
                        moved = true;
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                    Err(e) if e.kind() == ErrorKind::Interrupted => {}
                    Err(e) => return Err(io_err("read", e)),
                }
            }
            let mut pos = 0;
            while c.rbuf.len() - pos >= HEADER {
                let tag = u64::from_le_bytes(c.rbuf[pos..pos + 8].try_into().unwrap());
                let len = u64::from_le_bytes(c.rbuf[pos + 8..pos + 16].try_into().unwrap()) as usize;
                let end = pos + HEADER + len * 8;
                if c.rbuf.len() < end {
                    break;
                }
                let payload = c.rbuf[pos + HEADER..end]
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                self.inbox.entry((peer, tag)).or_default().push_back(payload);
                pos = end;
            }
            if pos > 0 {
                c.rbuf.drain(..pos);
            }
        }
        Ok(moved)
    }
}

impl Endpoint for SocketEndpoint {
    fn rank(&self) -> usize {
        self.rank
    }

    fn nranks(&self) -> usize {
        self.nranks
    }

    fn send(&mut self, dst: usize, tag: u64, data: &[f64]) -> Result<(), RuntimeError> {
        if dst == self.rank {
            self.inbox.entry((dst, tag)).or_default().push_back(data.to_vec());
            return Ok(());
        }
        let c = self
            .conns
            .get_mut(dst)
            .and_then(Option::as_mut)
            .ok_or_else(|| RuntimeError::Transport(format!("no connection to rank {dst}")))?;
        c.wbuf.extend_from_slice(&tag.to_le_bytes());
        c.wbuf.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in data {
            c.wbuf.extend_from_slice(&v.to_le_bytes());
        }
        self.pump()?;
        Ok(())
    }

    fn try_recv(&mut self, src: usize, tag: u64) -> Result<Option<Vec<f64>>, RuntimeError> {
        self.pump()?;
        Ok(pop(&mut self.inbox, src, tag))
    }

    fn recv_for(
        &mut self,
        src: usize,
        tag: u64,
        slice: Duration,
    ) -> Result<Option<Vec<f64>>, RuntimeError> {
        let deadline = Instant::now() + slice;
        let mut idle = 0u32;
        loop {
            let moved = self.pump()?;
            if let Some(v) = pop(&mut self.inbox, src, tag) {
                return Ok(Some(v));
            }
            if Instant::now() >= deadline {
                return Ok(None);
            }
            if moved {
                idle = 0;
            } else {
                idle += 1;
                if idle > 16 {
                    std::thread::sleep(Duration::from_micros(50));
                } else {
                    std::thread::yield_now();
                }
            }
        }
    }

    fn progress(&mut self) -> Result<(), RuntimeError> {
        self.pump().map(|_| ())
    }

    fn flush(&mut self, timeout: Duration) -> Result<(), RuntimeError> {
        let deadline = Instant::now() + timeout;
        loop {
            self.pump()?;
            let pending = self
                .conns
                .iter()
                .flatten()
                .any(|c| c.wpos < c.wbuf.len());
            if !pending {
                break;
            }
            if Instant::now() > deadline {
                return Err(RuntimeError::Transport("flush timed out".into()));
            }
            std::thread::sleep(Duration::from_micros(100));
        }
        for c in self.conns.iter().flatten() {
            let _ = c.stream.shutdown(Shutdown::Write);
        }
        Ok(())
    }
}
