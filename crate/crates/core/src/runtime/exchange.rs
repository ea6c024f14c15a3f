//! Halo exchanges: the axis-sequenced face pattern and the single-step
//! all-neighbour pattern, with per-spot epochs and packing buffers.

use std::time::{Duration, Instant};

use crate::compiler::{Mode, PlanEntry, SpotPlan, TimeSel};
use crate::decomposition::{box_volume, direction_index, directions, Decomposition, IndexBox};
use crate::distfield::LocalField;
use crate::error::Error;

use super::comm::{kind, make_tag, Comm, Request};

/// Time spent inside exchanges, by phase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExchangeTimes {
    pub post: Duration,
    pub wait: Duration,
    pub pack: Duration,
    pub unpack: Duration,
}

struct PendingRecv {
    req: Request,
    /// `(field, buffer, recv box)` in packing order.
    targets: Vec<(usize, usize, IndexBox)>,
}

/// Per-rank runtime state of one HaloSpot.
pub struct SpotState {
    epoch: u32,
    pending: Vec<PendingRecv>,
    sends: Vec<Request>,
    /// Preallocated send buffers, one per direction (diagonal/full).
    buffers: Vec<Vec<f64>>,
}

impl SpotState {
    pub fn new(spot: &SpotPlan, fields: &[LocalField], mode: Mode, decomp: &Decomposition, rank: usize) -> Self {
        let nd = decomp.ndims();
        let dirs = directions(nd);
        let buffers = if mode == Mode::Basic {
            Vec::new()
        } else {
            dirs.iter()
                .map(|d| {
                    if decomp.neighbor(rank, d).is_none() {
                        return Vec::new();
                    }
                    let n: usize = spot
                        .entries
                        .iter()
                        .map(|e| box_volume(&fields[e.field].layout().send_box(d, &e.radius)))
                        .sum();
                    Vec::with_capacity(n)
                })
                .collect()
        };
        Self {
            epoch: 0,
            pending: Vec::new(),
            sends: Vec::new(),
            buffers,
        }
    }

    /// Capacity of the preallocated buffers, in values.
    pub fn preallocated(&self) -> usize {
        self.buffers.iter().map(Vec::capacity).sum()
    }
}

fn resolve(e: &PlanEntry, fields: &[LocalField], step: i64) -> (usize, usize) {
    let b = match e.time {
        TimeSel::Offset(o) => fields[e.field].field().spec().buffer_index(step, o),
        TimeSel::Buffer(b) => b,
    };
    (e.field, b)
}

fn tag(spot: &SpotPlan, dir: &[i32], epoch: u32) -> u64 {
    make_tag(kind::HALO, spot.id as u16, direction_index(dir) as u8, epoch)
}

/// Post one message toward `dir` carrying `boxes` (one per entry), and the
/// matching receive from the same neighbour.
#[allow(clippy::too_many_arguments)]
fn post_pair(
    state: &mut SpotState,
    spot: &SpotPlan,
    fields: &[LocalField],
    comm: &mut Comm,
    nb: usize,
    dir: &[i32],
    send_boxes: &[(usize, usize, IndexBox)],
    recv_boxes: Vec<(usize, usize, IndexBox)>,
    preallocated: Option<usize>,
    times: &mut ExchangeTimes,
) -> Result<PendingRecv, Error> {
    let neg: Vec<i32> = dir.iter().map(|d| -d).collect();
    let epoch = state.epoch;
    let t0 = Instant::now();
    let mut scratch = Vec::new();
    let buf = match preallocated {
        Some(i) => {
            state.buffers[i].clear();
            &mut state.buffers[i]
        }
        None => &mut scratch,
    };
    for (f, b, bx) in send_boxes {
        fields[*f].pack_into(*b, bx, buf)?;
    }
    times.pack += t0.elapsed();
    let t1 = Instant::now();
    let req = comm.post_send(nb, tag(spot, dir, epoch), buf)?;
    state.sends.push(req);
    let recv = comm.post_recv(nb, tag(spot, &neg, epoch));
    times.post += t1.elapsed();
    Ok(PendingRecv {
        req: recv,
        targets: recv_boxes,
    })
}

fn complete(
    pending: &mut Vec<PendingRecv>,
    fields: &mut [LocalField],
    comm: &mut Comm,
    times: &mut ExchangeTimes,
) -> Result<(), Error> {
    for mut p in pending.drain(..) {
        let t0 = Instant::now();
        let data = comm.wait(&mut p.req)?.unwrap_or_default();
        times.wait += t0.elapsed();
        let t1 = Instant::now();
        let mut pos = 0;
        for (f, b, bx) in &p.targets {
            let n = box_volume(bx);
            let end = (pos + n).min(data.len());
            fields[*f].unpack(*b, bx, &data[pos..end])?;
            pos += n;
        }
        times.unpack += t1.elapsed();
    }
    Ok(())
}

/// Start an exchange. Basic mode completes every axis but the last here;
/// diagonal/full only post.
#[allow(clippy::too_many_arguments)]
pub fn halo_update(
    state: &mut SpotState,
    spot: &SpotPlan,
    fields: &mut [LocalField],
    comm: &mut Comm,
    decomp: &Decomposition,
    mode: Mode,
    step: i64,
    times: &mut ExchangeTimes,
) -> Result<(), Error> {
    state.epoch = state.epoch.wrapping_add(1);
    let rank = comm.rank();
    let nd = decomp.ndims();
    let targets: Vec<(usize, usize, &PlanEntry)> = spot
        .entries
        .iter()
        .map(|e| {
            let (f, b) = resolve(e, fields, step);
            (f, b, e)
        })
        .collect();
    match mode {
        Mode::Basic => {
            for axis in 0..nd {
                for side in [-1, 1] {
                    let mut dir = vec![0; nd];
                    dir[axis] = side;
                    let Some(nb) = decomp.neighbor(rank, &dir) else { continue };
                    let sends: Vec<_> = targets
                        .iter()
                        .map(|(f, b, e)| (*f, *b, fields[*f].layout().staged_send_box(axis, side, &e.radius)))
                        .collect();
                    let recvs: Vec<_> = targets
                        .iter()
                        .map(|(f, b, e)| (*f, *b, fields[*f].layout().staged_recv_box(axis, side, &e.radius)))
                        .collect();
                    if sends.iter().all(|(_, _, bx)| box_volume(bx) == 0) {
                        continue;
                    }
                    let p = post_pair(state, spot, fields, comm, nb, &dir, &sends, recvs, None, times)?;
                    state.pending.push(p);
                }
                if axis + 1 < nd {
                    let mut pending = std::mem::take(&mut state.pending);
                    complete(&mut pending, fields, comm, times)?;
                }
            }
        }
        Mode::Diagonal | Mode::Full => {
            for (di, dir) in directions(nd).iter().enumerate() {
                let Some(nb) = decomp.neighbor(rank, dir) else { continue };
                let sends: Vec<_> = targets
                    .iter()
                    .map(|(f, b, e)| (*f, *b, fields[*f].layout().send_box(dir, &e.radius)))
                    .collect();
                let recvs: Vec<_> = targets
                    .iter()
                    .map(|(f, b, e)| (*f, *b, fields[*f].layout().recv_box(dir, &e.radius)))
                    .collect();
                if sends.iter().all(|(_, _, bx)| box_volume(bx) == 0) {
                    continue;
                }
                let p = post_pair(state, spot, fields, comm, nb, dir, &sends, recvs, Some(di), times)?;
                state.pending.push(p);
            }
        }
    }
    Ok(())
}

/// Finish an exchange started by [`halo_update`].
pub fn halo_wait(
    state: &mut SpotState,
    spot: &SpotPlan,
    fields: &mut [LocalField],
    comm: &mut Comm,
    step: i64,
    times: &mut ExchangeTimes,
) -> Result<(), Error> {
    let mut pending = std::mem::take(&mut state.pending);
    complete(&mut pending, fields, comm, times)?;
    for mut s in state.sends.drain(..) {
        comm.wait(&mut s)?;
    }
    let ndirs = directions(fields.first().map(|f| f.layout().ndims()).unwrap_or(0)).len();
    for e in &spot.entries {
        let (f, b) = resolve(e, fields, step);
        for d in 0..ndirs {
            fields[f].mark_clean(b, d);
        }
    }
    Ok(())
}

/// One-off blocking exchange of a single field buffer, outside any plan.
pub fn exchange_field(
    field: &mut LocalField,
    buffer: usize,
    radius: &[usize],
    comm: &mut Comm,
    decomp: &Decomposition,
    mode: Mode,
) -> Result<ExchangeTimes, Error> {
    let spot = SpotPlan {
        id: u16::MAX as usize,
        entries: vec![PlanEntry {
            field: 0,
            time: TimeSel::Buffer(buffer),
            radius: radius.to_vec(),
        }],
        radius: radius.to_vec(),
        label: field.field().name().to_string(),
    };
    let fields = std::slice::from_mut(field);
    let mut state = SpotState::new(&spot, fields, mode, decomp, comm.rank());
    let mut times = ExchangeTimes::default();
    halo_update(&mut state, &spot, fields, comm, decomp, mode, 0, &mut times)?;
    halo_wait(&mut state, &spot, fields, comm, 0, &mut times)?;
    Ok(times)
}
