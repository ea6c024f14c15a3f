//! Plan executor: row-vectorized kernel interpreter, exchange driving,
//! sparse operations, progress hooks, tracing and section timings.

use std::time::Instant;

use serde::Serialize;

use crate::compiler::{Action, ExecPlan, Op, Operand, Region, RowKernel, SparseKind};
use crate::decomposition::Span;
use crate::distfield::{gather, LocalField};
use crate::error::{Error, FieldError};
use crate::sparse;

use super::comm::{spawn_ranks, Comm, CommStats, SpawnOptions};
use super::exchange::{halo_update, halo_wait, ExchangeTimes, SpotState};

/// Wall time per section of the step loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SectionTimes {
    pub exchange_post: f64,
    pub wait: f64,
    pub pack: f64,
    pub unpack: f64,
    pub compute_core: f64,
    pub compute_remainder: f64,
    pub compute_domain: f64,
    pub sparse: f64,
}

impl SectionTimes {
    pub fn total(&self) -> f64 {
        self.exchange_post
            + self.wait
            + self.pack
            + self.unpack
            + self.compute_core
            + self.compute_remainder
            + self.compute_domain
            + self.sparse
    }

    fn add_exchange(&mut self, t: &ExchangeTimes) {
        // post and wait include nested pack/unpack only in basic mode's
        // intermediate axes; keep the four phases disjoint
        self.exchange_post += t.post.as_secs_f64();
        self.wait += t.wait.as_secs_f64();
        self.pack += t.pack.as_secs_f64();
        self.unpack += t.unpack.as_secs_f64();
    }

    pub fn max(&self, o: &SectionTimes) -> SectionTimes {
        SectionTimes {
            exchange_post: self.exchange_post.max(o.exchange_post),
            wait: self.wait.max(o.wait),
            pack: self.pack.max(o.pack),
            unpack: self.unpack.max(o.unpack),
            compute_core: self.compute_core.max(o.compute_core),
            compute_remainder: self.compute_remainder.max(o.compute_remainder),
            compute_domain: self.compute_domain.max(o.compute_domain),
            sparse: self.sparse.max(o.sparse),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TraceEvent {
    Update(usize),
    Wait(usize),
    Core(usize),
    Remainder(usize),
    Domain(usize),
    Sparse(usize),
    /// A progress hook fired before a CORE tile.
    Progress,
    StepEnd,
}

#[derive(Clone, Debug, Default)]
pub struct ExecOptions {
    pub trace: bool,
    /// Reject interpolation from a halo that has not been refreshed.
    pub check_stale: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Record {
    pub set: usize,
    pub step: usize,
    pub point: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub stats: CommStats,
    pub times: SectionTimes,
    pub wall: f64,
    #[serde(skip)]
    pub trace: Vec<TraceEvent>,
    #[serde(skip)]
    pub records: Vec<Record>,
    /// CORE tiles visited, and tile rows (tiles along all but the innermost axis).
    pub core_tiles: u64,
    pub core_tile_rows: u64,
    /// Halo messages sent per step, by step.
    #[serde(skip)]
    pub halo_msgs_per_step: Vec<u64>,
    #[serde(skip)]
    pub halo_bytes_per_step: Vec<u64>,
    pub prologue_msgs: u64,
}

/// Row interpreter scratch.
struct Rows {
    regs: Vec<Vec<f64>>,
}

enum Src<'a> {
    Row(&'a [f64]),
    Val(f64),
}

#[inline]
fn binary(d: &mut [f64], a: Src, b: Src, f: impl Fn(f64, f64) -> f64) {
    match (a, b) {
        (Src::Row(x), Src::Row(y)) => {
            for ((o, &p), &q) in d.iter_mut().zip(x).zip(y) {
                *o = f(p, q);
            }
        }
        (Src::Row(x), Src::Val(q)) => {
            for (o, &p) in d.iter_mut().zip(x) {
                *o = f(p, q);
            }
        }
        (Src::Val(p), Src::Row(y)) => {
            for (o, &q) in d.iter_mut().zip(y) {
                *o = f(p, q);
            }
        }
        (Src::Val(p), Src::Val(q)) => d.fill(f(p, q)),
    }
}

#[inline]
fn unary(d: &mut [f64], a: Src, f: impl Fn(f64) -> f64) {
    match a {
        Src::Row(x) => {
            for (o, &p) in d.iter_mut().zip(x) {
                *o = f(p);
            }
        }
        Src::Val(p) => d.fill(f(p)),
    }
}

/// Per-kernel constants resolved for the current step.
struct Bound {
    /// `(field, buffer, linear delta)` per slot.
    slots: Vec<(usize, usize, isize)>,
    lhs: (usize, usize, isize),
}

fn bind(k: &RowKernel, fields: &[LocalField], step: i64) -> Bound {
    let lin = |f: usize, offs: &[i32]| -> isize {
        offs.iter()
            .zip(fields[f].strides())
            .map(|(&o, &s)| o as isize * s as isize)
            .sum()
    };
    let buf = |f: usize, t: i32| fields[f].field().spec().buffer_index(step, t);
    Bound {
        slots: k
            .slots
            .iter()
            .map(|s| (s.field, buf(s.field, s.time), lin(s.field, &s.offsets)))
            .collect(),
        lhs: (k.lhs_field, buf(k.lhs_field, k.lhs_time), lin(k.lhs_field, &k.lhs_offsets)),
    }
}

impl Rows {
    fn new() -> Self {
        Self { regs: Vec::new() }
    }

    /// Evaluate `k` over the DOMAIN-relative row starting at `idx`
    /// (innermost coordinate included) of length `len`.
    fn run(&mut self, k: &RowKernel, bound: &Bound, fields: &mut [LocalField], idx: &[usize], len: usize) {
        if self.regs.len() < k.nregs {
            self.regs.resize_with(k.nregs, Vec::new);
        }
        for r in self.regs.iter_mut().take(k.nregs) {
            if r.len() < len {
                r.resize(len, 0.0);
            }
        }
        let base = |f: usize, fields: &[LocalField]| -> isize {
            idx.iter()
                .zip(fields[f].strides())
                .map(|(&i, &s)| (i * s) as isize)
                .sum()
        };
        {
            let fr: &[LocalField] = fields;
            let mem: Vec<&[f64]> = bound
                .slots
                .iter()
                .map(|&(f, b, d)| {
                    let start = (base(f, fr) + d) as usize;
                    &fr[f].buffer(b)[start..start + len]
                })
                .collect();
            for ins in &k.code {
                let mut dst = std::mem::take(&mut self.regs[ins.dst]);
                {
                    let regs = &self.regs;
                    let src = |o: Operand| -> Src {
                        match o {
                            Operand::Reg(r) => Src::Row(&regs[r][..len]),
                            Operand::Val(v) => Src::Val(v),
                            Operand::Mem(m) => Src::Row(mem[m]),
                        }
                    };
                    let d = &mut dst[..len];
                    match ins.op {
                        Op::Add(a, b) => binary(d, src(a), src(b), |p, q| p + q),
                        Op::Mul(a, b) => binary(d, src(a), src(b), |p, q| p * q),
                        Op::Neg(a) => unary(d, src(a), |p| -p),
                        Op::Recip(a) => unary(d, src(a), |p| 1.0 / p),
                        Op::Call(m, a) => unary(d, src(a), |p| m.apply(p)),
                        Op::Copy(a) => unary(d, src(a), |p| p),
                    }
                }
                self.regs[ins.dst] = dst;
            }
        }
        let (f, b, d) = bound.lhs;
        let start = (base(f, fields) + d) as usize;
        let out = &self.regs[k.result][..len];
        fields[f].buffer_mut(b)[start..start + len].copy_from_slice(out);
    }

    /// Evaluate `k` over a DOMAIN-relative box.
    fn run_box(&mut self, k: &RowKernel, bound: &Bound, fields: &mut [LocalField], bx: &[Span]) {
        if bx.iter().any(Span::is_empty) {
            return;
        }
        let nd = bx.len();
        let len = bx[nd - 1].len();
        let mut idx: Vec<usize> = bx.iter().map(|s| s.start).collect();
        loop {
            self.run(k, bound, fields, &idx, len);
            let mut a = nd - 1;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < bx[a].end {
                    break;
                }
                idx[a] = bx[a].start;
            }
        }
    }
}

/// Split a box into tiles of edge `tile` along every axis.
fn tiles(bx: &[Span], tile: usize) -> Vec<Vec<Span>> {
    let mut out: Vec<Vec<Span>> = vec![Vec::new()];
    for s in bx {
        let mut pieces = Vec::new();
        let mut start = s.start;
        while start < s.end {
            let end = (start + tile).min(s.end);
            pieces.push(Span::new(start, end));
            start = end;
        }
        out = out
            .into_iter()
            .flat_map(|prefix| {
                pieces.iter().map(move |p| {
                    let mut v = prefix.clone();
                    v.push(*p);
                    v
                })
            })
            .collect();
    }
    out
}

fn tile_rows(bx: &[Span], tile: usize) -> u64 {
    bx[..bx.len() - 1]
        .iter()
        .map(|s| s.len().div_ceil(tile) as u64)
        .product()
}

/// Run `nsteps` iterations of `plan` on this rank's fields.
pub fn execute(
    plan: &ExecPlan,
    fields: &mut [LocalField],
    comm: &mut Comm,
    nsteps: usize,
    opts: &ExecOptions,
) -> Result<RankReport, Error> {
    let rank = comm.rank();
    let decomp = &plan.decomposition;
    let mut report = RankReport {
        rank,
        ..Default::default()
    };
    let mut states: Vec<SpotState> = plan
        .spots
        .iter()
        .map(|s| SpotState::new(s, fields, plan.mode, decomp, rank))
        .collect();
    let mut rows = Rows::new();
    let mut xt = ExchangeTimes::default();
    let layout = |k: &RowKernel, fields: &[LocalField]| fields[k.lhs_field].layout().clone();
    let start = Instant::now();

    let mut run_actions = |actions: &[Action],
                           step: i64,
                           fields: &mut [LocalField],
                           comm: &mut Comm,
                           report: &mut RankReport,
                           xt: &mut ExchangeTimes|
     -> Result<(), Error> {
        for a in actions {
            match *a {
                Action::HaloUpdate(s) => {
                    halo_update(&mut states[s], &plan.spots[s], fields, comm, decomp, plan.mode, step, xt)?;
                    if opts.trace {
                        report.trace.push(TraceEvent::Update(s));
                    }
                }
                Action::HaloWait(s) => {
                    halo_wait(&mut states[s], &plan.spots[s], fields, comm, step, xt)?;
                    if opts.trace {
                        report.trace.push(TraceEvent::Wait(s));
                    }
                }
                Action::Compute { kernel, region } => {
                    let k = &plan.kernels[kernel];
                    let bound = bind(k, fields, step);
                    let boxes = crate::compiler::region_spans(&layout(k, fields), region, &plan.spots);
                    let t0 = Instant::now();
                    match region {
                        Region::Core(_) => {
                            for bx in &boxes {
                                report.core_tile_rows += tile_rows(bx, plan.tile);
                                for t in tiles(bx, plan.tile) {
                                    comm.progress()?;
                                    report.core_tiles += 1;
                                    if opts.trace {
                                        report.trace.push(TraceEvent::Progress);
                                    }
                                    rows.run_box(k, &bound, fields, &t);
                                }
                            }
                            report.times.compute_core += t0.elapsed().as_secs_f64();
                            if opts.trace {
                                report.trace.push(TraceEvent::Core(kernel));
                            }
                        }
                        Region::Remainder(_) => {
                            for bx in &boxes {
                                rows.run_box(k, &bound, fields, bx);
                            }
                            report.times.compute_remainder += t0.elapsed().as_secs_f64();
                            if opts.trace {
                                report.trace.push(TraceEvent::Remainder(kernel));
                            }
                        }
                        Region::Domain => {
                            for bx in &boxes {
                                rows.run_box(k, &bound, fields, bx);
                            }
                            report.times.compute_domain += t0.elapsed().as_secs_f64();
                            if opts.trace {
                                report.trace.push(TraceEvent::Domain(kernel));
                            }
                        }
                    }
                    fields[k.lhs_field].mark_all_dirty(bound.lhs.1);
                }
                Action::Sparse(op) => {
                    let t0 = Instant::now();
                    let sop = &plan.sparse_ops[op];
                    let set = &plan.sparse_sets[sop.set];
                    let buffer = fields[sop.field].field().spec().buffer_index(step, sop.time);
                    match sop.kind {
                        SparseKind::Inject { scale } => {
                            let ps = plan
                                .pointsets
                                .iter()
                                .find(|p| p.name == set.name)
                                .expect("point set resolved at plan time");
                            let s = step as usize;
                            sparse::inject(&mut fields[sop.field], buffer, set, rank, |p| ps.amplitude(s, p), scale);
                        }
                        SparseKind::Interpolate => {
                            if opts.check_stale && !fields[sop.field].halo_fresh(buffer, decomp) {
                                return Err(FieldError::StaleHalo {
                                    field: fields[sop.field].field().name().to_string(),
                                    buffer,
                                }
                                .into());
                            }
                            for (point, value) in sparse::interpolate(&fields[sop.field], buffer, set, rank) {
                                report.records.push(Record {
                                    set: sop.set,
                                    step: step as usize,
                                    point,
                                    value,
                                });
                            }
                        }
                    }
                    report.times.sparse += t0.elapsed().as_secs_f64();
                    if opts.trace {
                        report.trace.push(TraceEvent::Sparse(op));
                    }
                }
            }
        }
        Ok(())
    };

    run_actions(&plan.prologue, 0, fields, comm, &mut report, &mut xt)?;
    report.prologue_msgs = comm.stats.halo_msgs;
    for step in 0..nsteps {
        let (m0, b0) = (comm.stats.halo_msgs, comm.stats.halo_bytes);
        run_actions(&plan.step, step as i64, fields, comm, &mut report, &mut xt)?;
        report.halo_msgs_per_step.push(comm.stats.halo_msgs - m0);
        report.halo_bytes_per_step.push(comm.stats.halo_bytes - b0);
        if opts.trace {
            report.trace.push(TraceEvent::StepEnd);
        }
    }
    report.wall = start.elapsed().as_secs_f64();
    report.times.add_exchange(&xt);
    report.stats = comm.stats.clone();
    Ok(report)
}

/// Per-field initializer: receives the plan field index and the rank's
/// zeroed storage; must only use collective writes.
pub type InitFn<'a> = dyn Fn(usize, &mut LocalField) -> Result<(), Error> + Sync + 'a;

/// Gathered state of a distributed run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    /// `(field name, buffers)`, each buffer a row-major global array.
    pub fields: Vec<(String, Vec<Vec<f64>>)>,
    pub reports: Vec<RankReport>,
    /// `(set name, values[step][point])`.
    pub records: Vec<(String, Vec<Vec<f64>>)>,
    pub nsteps: usize,
}

impl RunOutput {
    pub fn field(&self, name: &str) -> Option<&Vec<Vec<f64>>> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }

    /// Largest wall time across ranks.
    pub fn wall(&self) -> f64 {
        self.reports.iter().map(|r| r.wall).fold(0.0, f64::max)
    }

    /// Largest absolute difference over every buffer of every field.
    pub fn max_abs_diff(&self, other: &RunOutput) -> f64 {
        let mut m: f64 = 0.0;
        for ((na, a), (nb, b)) in self.fields.iter().zip(&other.fields) {
            assert_eq!(na, nb, "runs over different fields");
            for (x, y) in a.iter().zip(b) {
                for (p, q) in x.iter().zip(y) {
                    let d = (p - q).abs();
                    m = if d.is_nan() { f64::INFINITY } else { m.max(d) };
                }
            }
        }
        for ((_, a), (_, b)) in self.records.iter().zip(&other.records) {
            for (x, y) in a.iter().zip(b) {
                for (p, q) in x.iter().zip(y) {
                    let d = (p - q).abs();
                    m = if d.is_nan() { f64::INFINITY } else { m.max(d) };
                }
            }
        }
        m
    }
}

/// Spawn the ranks, initialize, execute and gather.
pub fn run_plan(
    plan: &ExecPlan,
    nsteps: usize,
    init: &InitFn,
    spawn: &SpawnOptions,
    opts: &ExecOptions,
) -> Result<RunOutput, Error> {
    let decomp = &plan.decomposition;
    let results = spawn_ranks(decomp.nranks(), Some(decomp.topology()), spawn, |comm| {
        let rank = comm.rank();
        let mut fields = plan
            .fields
            .iter()
            .map(|f| LocalField::allocate(f, decomp, rank))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, f) in fields.iter_mut().enumerate() {
            init(i, f)?;
        }
        comm.barrier()?;
        let report = execute(plan, &mut fields, comm, nsteps, opts)?;
        let mut gathered = Vec::new();
        for f in &fields {
            let mut bufs = Vec::new();
            for b in 0..f.nbuffers() {
                bufs.push(gather(comm, f, decomp, b)?);
            }
            gathered.push(bufs);
        }
        Ok((report, gathered))
    })?;
    let mut reports = Vec::new();
    let mut fields = Vec::new();
    for (rank, (report, gathered)) in results.into_iter().enumerate() {
        if rank == 0 {
            for (f, bufs) in plan.fields.iter().zip(gathered) {
                fields.push((f.name().to_string(), bufs.into_iter().map(Option::unwrap_or_default).collect()));
            }
        }
        reports.push(report);
    }
    let mut records = Vec::new();
    for (si, set) in plan.sparse_sets.iter().enumerate() {
        let npts = set.weights.len();
        let mut table = vec![vec![f64::NAN; npts]; nsteps];
        for r in reports.iter() {
            for rec in r.records.iter().filter(|rec| rec.set == si) {
                table[rec.step][rec.point] = rec.value;
            }
        }
        let interpolated = plan
            .sparse_ops
            .iter()
            .any(|o| o.set == si && o.kind == SparseKind::Interpolate);
        if interpolated {
            records.push((set.name.clone(), table));
        }
    }
    Ok(RunOutput {
        fields,
        reports,
        records,
        nsteps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiling_covers_box() {
        let bx = vec![Span::new(2, 70), Span::new(3, 40)];
        let t = tiles(&bx, 32);
        assert_eq!(t.len(), 3 * 2);
        let total: usize = t.iter().map(|b| b.iter().map(Span::len).product::<usize>()).sum();
        assert_eq!(total, 68 * 37);
        assert_eq!(tile_rows(&bx, 32), 3);
    }
}
