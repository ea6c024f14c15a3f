//! Per-rank communicator: nonblocking point-to-point requests, collectives
//! built from messages, a watchdog, and SPMD worker spawning.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::decomposition::Topology;
use crate::error::{Error, RuntimeError};

use super::transport::{Coordinator, Endpoint, InprocFabric, SocketEndpoint, TransportKind};

/// Message classes, the top byte of every tag.
pub mod kind {
    pub const HALO: u8 = 1;
    pub const COLLECTIVE: u8 = 2;
    pub const GATHER: u8 = 3;
    pub const USER: u8 = 4;
}

/// Pack `(kind, channel, direction, epoch)` into one tag.
pub fn make_tag(kind: u8, channel: u16, direction: u8, epoch: u32) -> u64 {
    (kind as u64) << 56 | (channel as u64) << 40 | (direction as u64) << 32 | epoch as u64
}

pub fn tag_kind(tag: u64) -> u8 {
    (tag >> 56) as u8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Max,
    Min,
}

impl ReduceOp {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ReduceOp::Sum => a + b,
            ReduceOp::Max => a.max(b),
            ReduceOp::Min => a.min(b),
        }
    }
}

/// Handle returned by [`Comm::post_send`] / [`Comm::post_recv`].
#[derive(Debug)]
pub enum Request {
    Send,
    Recv {
        src: usize,
        tag: u64,
        data: Option<Vec<f64>>,
    },
}

impl Request {
    pub fn is_done(&self) -> bool {
        match self {
            Request::Send => true,
            Request::Recv { data, .. } => data.is_some(),
        }
    }

    /// Payload of a completed receive.
    pub fn take(&mut self) -> Option<Vec<f64>> {
        match self {
            Request::Send => None,
            Request::Recv { data, .. } => data.take(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct CommStats {
    pub halo_msgs: u64,
    pub halo_bytes: u64,
    pub other_msgs: u64,
    pub other_bytes: u64,
    pub progress_calls: u64,
}

#[derive(Clone, Debug)]
pub struct SpawnOptions {
    pub transport: TransportKind,
    /// Coordinator port for the socket fabric; 0 picks one.
    pub port: u16,
    /// Watchdog per blocking operation.
    pub timeout: Duration,
}

impl Default for SpawnOptions {
    fn default() -> Self {
        Self {
            transport: TransportKind::Inproc,
            port: 0,
            timeout: Duration::from_secs(30),
        }
    }
}

pub struct Comm {
    ep: Box<dyn Endpoint>,
    abort: Arc<AtomicBool>,
    timeout: Duration,
    coll_epoch: u32,
    pub stats: CommStats,
}

const SLICE: Duration = Duration::from_millis(20);

impl Comm {
    pub fn new(ep: Box<dyn Endpoint>, abort: Arc<AtomicBool>, timeout: Duration) -> Self {
        Self {
            ep,
            abort,
            timeout,
            coll_epoch: 0,
            stats: CommStats::default(),
        }
    }

    pub fn rank(&self) -> usize {
        self.ep.rank()
    }

    pub fn nranks(&self) -> usize {
        self.ep.nranks()
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn check_abort(&self) -> Result<(), RuntimeError> {
        if self.abort.load(Ordering::SeqCst) {
            return Err(RuntimeError::Aborted { rank: self.rank() });
        }
        Ok(())
    }

    pub fn post_send(&mut self, dst: usize, tag: u64, data: &[f64]) -> Result<Request, RuntimeError> {
        self.check_abort()?;
        let bytes = (data.len() * 8) as u64;
        if tag_kind(tag) == kind::HALO {
            self.stats.halo_msgs += 1;
            self.stats.halo_bytes += bytes;
        } else {
            self.stats.other_msgs += 1;
            self.stats.other_bytes += bytes;
        }
        self.ep.send(dst, tag, data)?;
        Ok(Request::Send)
    }

    pub fn post_recv(&mut self, src: usize, tag: u64) -> Request {
        Request::Recv {
            src,
            tag,
            data: None,
        }
    }

    /// Non-blocking completion check.
    pub fn test(&mut self, req: &mut Request) -> Result<bool, RuntimeError> {
        self.check_abort()?;
        if let Request::Recv { src, tag, data } = req {
            if data.is_none() {
                *data = self.ep.try_recv(*src, *tag)?;
            }
        }
        Ok(req.is_done())
    }

    /// Block until `req` completes; returns the payload for receives.
    pub fn wait(&mut self, req: &mut Request) -> Result<Option<Vec<f64>>, RuntimeError> {
        if let Request::Recv { src, tag, data } = req {
            if data.is_none() {
                let start = Instant::now();
                loop {
                    self.check_abort()?;
                    if let Some(v) = self.ep.recv_for(*src, *tag, SLICE)? {
                        *data = Some(v);
                        break;
                    }
                    if start.elapsed() > self.timeout {
                        return Err(RuntimeError::Timeout {
                            rank: self.rank(),
                            secs: self.timeout.as_secs_f64(),
                            what: format!("message from rank {src} (tag {tag:#x})"),
                        });
                    }
                }
            }
        }
        Ok(req.take())
    }

    pub fn send(&mut self, dst: usize, tag: u64, data: &[f64]) -> Result<(), RuntimeError> {
        self.post_send(dst, tag, data).map(|_| ())
    }

    pub fn recv(&mut self, src: usize, tag: u64) -> Result<Vec<f64>, RuntimeError> {
        let mut r = self.post_recv(src, tag);
        Ok(self.wait(&mut r)?.unwrap_or_default())
    }

    /// Progress hook: drives transport I/O.
    pub fn progress(&mut self) -> Result<(), RuntimeError> {
        self.stats.progress_calls += 1;
        self.check_abort()?;
        self.ep.progress()
    }

    fn next_coll_tag(&mut self, phase: u8) -> u64 {
        self.coll_epoch = self.coll_epoch.wrapping_add(1);
        make_tag(kind::COLLECTIVE, 0, phase, self.coll_epoch)
    }

    /// Element-wise reduction of equal-length vectors on every rank; rank 0
    /// combines contributions in rank order, then broadcasts.
    pub fn allreduce_vec(&mut self, op: ReduceOp, values: &[f64]) -> Result<Vec<f64>, RuntimeError> {
        let up = self.next_coll_tag(0);
        let down = self.next_coll_tag(1);
        let n = self.nranks();
        if n == 1 {
            return Ok(values.to_vec());
        }
        if self.rank() == 0 {
            let mut acc = values.to_vec();
            for src in 1..n {
                let v = self.recv(src, up)?;
                if v.len() != acc.len() {
                    return Err(RuntimeError::Transport("collective length mismatch".into()));
                }
                for (a, b) in acc.iter_mut().zip(v) {
                    *a = op.apply(*a, b);
                }
            }
            for dst in 1..n {
                self.send(dst, down, &acc)?;
            }
            Ok(acc)
        } else {
            self.send(0, up, values)?;
            self.recv(0, down)
        }
    }

    pub fn allreduce(&mut self, op: ReduceOp, value: f64) -> Result<f64, RuntimeError> {
        Ok(self.allreduce_vec(op, &[value])?[0])
    }

    pub fn barrier(&mut self) -> Result<(), RuntimeError> {
        self.allreduce_vec(ReduceOp::Sum, &[]).map(|_| ())
    }

    fn finish(&mut self) -> Result<(), RuntimeError> {
        self.ep.flush(self.timeout)
    }
}

/// Run `program` on `nranks` concurrent workers and collect their results in
/// rank order. Any failure aborts the remaining ranks and is reported with
/// its rank.
pub fn spawn_ranks<R, F>(
    nranks: usize,
    topology: Option<&Topology>,
    opts: &SpawnOptions,
    program: F,
) -> Result<Vec<R>, Error>
where
    R: Send,
    F: Fn(&mut Comm) -> Result<R, Error> + Sync,
{
    if nranks == 0 {
        return Err(RuntimeError::RankCountMismatch {
            nranks,
            dims: Vec::new(),
        }
        .into());
    }
    if let Some(t) = topology {
        if t.nranks() != nranks {
            return Err(RuntimeError::RankCountMismatch {
                nranks,
                dims: t.dims().to_vec(),
            }
            .into());
        }
    }
    let abort = Arc::new(AtomicBool::new(false));
    let coordinator = match opts.transport {
        TransportKind::Socket => Some(Coordinator::bind(opts.port)?),
        TransportKind::Inproc => None,
    };
    let coord_port = coordinator.as_ref().map(Coordinator::port).unwrap_or(0);
    let fabric = InprocFabric::new(nranks);

    let outcomes: Vec<Result<R, Error>> = std::thread::scope(|s| {
        let coord_handle = coordinator.map(|c| {
            let timeout = opts.timeout;
            s.spawn(move || c.serve(nranks, timeout))
        });
        let handles: Vec<_> = (0..nranks)
            .map(|rank| {
                let abort = Arc::clone(&abort);
                let fabric = Arc::clone(&fabric);
                let program = &program;
                std::thread::Builder::new()
                    .name(format!("rank-{rank}"))
                    .spawn_scoped(s, move || {
                        let result = catch_unwind(AssertUnwindSafe(|| -> Result<R, Error> {
                            let ep: Box<dyn Endpoint> = match opts.transport {
                                TransportKind::Inproc => Box::new(fabric.endpoint(rank)),
                                TransportKind::Socket => Box::new(SocketEndpoint::establish(
                                    rank,
                                    nranks,
                                    coord_port,
                                    opts.timeout,
                                )?),
                            };
                            let mut comm = Comm::new(ep, Arc::clone(&abort), opts.timeout);
                            let out = program(&mut comm)?;
                            if opts.transport == TransportKind::Socket {
                                comm.barrier()?;
                                comm.finish()?;
                            }
                            Ok(out)
                        }));
                        let result = match result {
                            Ok(r) => r,
                            Err(payload) => {
                                let message = payload
                                    .downcast_ref::<&str>()
                                    .map(|s| s.to_string())
                                    .or_else(|| payload.downcast_ref::<String>().cloned())
                                    .unwrap_or_else(|| "unknown panic".into());
                                Err(RuntimeError::Panic { rank, message }.into())
                            }
                        };
                        if result.is_err() {
                            abort.store(true, Ordering::SeqCst);
                        }
                        result
                    })
                    .expect("spawn rank thread")
            })
            .collect();
        let mut outs: Vec<Result<R, Error>> = handles
            .into_iter()
            .enumerate()
            .map(|(rank, h)| {
                h.join().unwrap_or_else(|_| {
                    Err(RuntimeError::Panic {
                        rank,
                        message: "worker thread panicked".into(),
                    }
                    .into())
                })
            })
            .collect();
        if let Some(h) = coord_handle {
            match h.join() {
                Ok(Ok(())) => {}
                Ok(Err(e)) => outs.push(Err(e.into())),
                Err(_) => outs.push(Err(RuntimeError::Transport("coordinator panicked".into()).into())),
            }
        }
        outs
    });

    let mut results = Vec::with_capacity(nranks);
    let mut errors = Vec::new();
    let mut aborted = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(Error::Runtime(RuntimeError::Aborted { rank })) => {
                aborted.push(Error::Runtime(RuntimeError::Aborted { rank }))
            }
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() && aborted.is_empty() {
        return Ok(results);
    }
    if errors.is_empty() {
        errors = aborted;
    }
    if errors.len() == 1 {
        return Err(errors.pop().unwrap());
    }
    Err(RuntimeError::Failed(errors).into())
}
