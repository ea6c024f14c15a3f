//! Rank-local storage for decomposed fields: region algebra, collective
//! global writes, gather, packing and on-disk snapshots.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::decomposition::{
    box_intersect, box_is_empty, box_volume, directions, global_to_local, Decomposition, IndexBox,
    Span,
};
use crate::error::{Error, FieldError, RuntimeError};
use crate::runtime::{kind, make_tag, Comm, ReduceOp};
use crate::symbolics::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum RegionName {
    Core,
    Owned,
    Halo,
    Domain,
    Full,
}

/// Geometry of one rank's local buffer. Boxes are expressed in buffer
/// coordinates, so the DOMAIN starts at `halo` on every axis.
#[derive(Clone, Debug, PartialEq)]
pub struct RankLayout {
    pub rank: usize,
    pub extent: IndexBox,
    pub halo: Vec<usize>,
    /// `[low, high]` face-neighbour presence per axis.
    pub sides: Vec<[bool; 2]>,
}

impl RankLayout {
    pub fn new(decomp: &Decomposition, rank: usize, halo: &[usize]) -> Self {
        Self {
            rank,
            extent: decomp.extent(rank),
            halo: halo.to_vec(),
            sides: decomp.neighbor_sides(rank),
        }
    }

    pub fn ndims(&self) -> usize {
        self.extent.len()
    }

    pub fn owned_shape(&self) -> Vec<usize> {
        self.extent.iter().map(Span::len).collect()
    }

    pub fn full_shape(&self) -> Vec<usize> {
        self.extent
            .iter()
            .zip(&self.halo)
            .map(|(e, h)| e.len() + 2 * h)
            .collect()
    }

    pub fn domain_box(&self) -> IndexBox {
        self.extent
            .iter()
            .zip(&self.halo)
            .map(|(e, &h)| Span::new(h, h + e.len()))
            .collect()
    }

    /// Per-axis CORE range: DOMAIN shrunk by `radius` on sides with a neighbour.
    fn core_span(&self, axis: usize, r: usize) -> Span {
        let h = self.halo[axis];
        let n = self.extent[axis].len();
        let lo = h + if self.sides[axis][0] { r.min(n) } else { 0 };
        let hi = (h + n).saturating_sub(if self.sides[axis][1] { r } else { 0 });
        Span::new(lo, hi.max(lo))
    }

    fn extended_span(&self, axis: usize, r: usize) -> Span {
        let h = self.halo[axis];
        let n = self.extent[axis].len();
        let lo = if self.sides[axis][0] { h - r } else { h };
        let hi = h + n + if self.sides[axis][1] { r } else { 0 };
        Span::new(lo, hi)
    }

    pub fn check_radius(&self, radius: &[usize]) -> Result<(), FieldError> {
        if radius.len() != self.ndims() || radius.iter().zip(&self.halo).any(|(r, h)| r > h) {
            return Err(FieldError::RadiusExceedsHalo {
                radius: radius.to_vec(),
                halo: self.halo.clone(),
            });
        }
        Ok(())
    }

    /// Disjoint boxes making up the named region for a given exchange radius.
    pub fn region_boxes(&self, name: RegionName, radius: &[usize]) -> Result<Vec<IndexBox>, FieldError> {
        self.check_radius(radius)?;
        let nd = self.ndims();
        let domain = self.domain_box();
        let mut out = Vec::new();
        match name {
            RegionName::Domain => out.push(domain),
            RegionName::Core => out.push((0..nd).map(|a| self.core_span(a, radius[a])).collect()),
            RegionName::Owned => {
                for a in 0..nd {
                    let core = self.core_span(a, radius[a]);
                    let slabs = [
                        Span::new(domain[a].start, core.start),
                        Span::new(core.end, domain[a].end),
                    ];
                    for slab in slabs {
                        let b: IndexBox = (0..nd)
                            .map(|k| match k.cmp(&a) {
                                std::cmp::Ordering::Less => self.core_span(k, radius[k]),
                                std::cmp::Ordering::Equal => slab,
                                std::cmp::Ordering::Greater => domain[k],
                            })
                            .collect();
                        out.push(b);
                    }
                }
            }
            RegionName::Halo => out.extend(self.halo_boxes(radius)),
            RegionName::Full => {
                out.push(domain);
                out.extend(self.halo_boxes(radius));
            }
        }
        out.retain(|b| !box_is_empty(b));
        Ok(out)
    }

    fn halo_boxes(&self, radius: &[usize]) -> Vec<IndexBox> {
        let nd = self.ndims();
        let domain = self.domain_box();
        let mut out = Vec::new();
        for a in 0..nd {
            let r = radius[a];
            let h = self.halo[a];
            let n = self.extent[a].len();
            let mut slabs = Vec::new();
            if self.sides[a][0] {
                slabs.push(Span::new(h - r, h));
            }
            if self.sides[a][1] {
                slabs.push(Span::new(h + n, h + n + r));
            }
            for slab in slabs {
                out.push(
                    (0..nd)
                        .map(|k| match k.cmp(&a) {
                            std::cmp::Ordering::Less => domain[k],
                            std::cmp::Ordering::Equal => slab,
                            std::cmp::Ordering::Greater => self.extended_span(k, radius[k]),
                        })
                        .collect(),
                );
            }
        }
        out
    }

    /// Slab of OWNED data shipped toward direction `dir` (single-step pattern).
    pub fn send_box(&self, dir: &[i32], radius: &[usize]) -> IndexBox {
        (0..self.ndims())
            .map(|a| {
                let h = self.halo[a];
                let n = self.extent[a].len();
                let r = radius[a].min(n);
                match dir[a] {
                    -1 => Span::new(h, h + r),
                    1 => Span::new(h + n - r, h + n),
                    _ => Span::new(h, h + n),
                }
            })
            .collect()
    }

    /// HALO slab filled from the neighbour at direction `dir`.
    pub fn recv_box(&self, dir: &[i32], radius: &[usize]) -> IndexBox {
        (0..self.ndims())
            .map(|a| {
                let h = self.halo[a];
                let n = self.extent[a].len();
                let r = radius[a];
                match dir[a] {
                    -1 => Span::new(h - r, h),
                    1 => Span::new(h + n, h + n + r),
                    _ => Span::new(h, h + n),
                }
            })
            .collect()
    }

    /// Box sent along `axis` toward `side` in the axis-sequenced pattern:
    /// earlier axes include the halo layers received in earlier steps.
    pub fn staged_send_box(&self, axis: usize, side: i32, radius: &[usize]) -> IndexBox {
        let mut dir = vec![0; self.ndims()];
        dir[axis] = side;
        let mut b = self.send_box(&dir, radius);
        for k in 0..axis {
            b[k] = self.extended_span(k, radius[k]);
        }
        b
    }

    pub fn staged_recv_box(&self, axis: usize, side: i32, radius: &[usize]) -> IndexBox {
        let mut dir = vec![0; self.ndims()];
        dir[axis] = side;
        let mut b = self.recv_box(&dir, radius);
        for k in 0..axis {
            b[k] = self.extended_span(k, radius[k]);
        }
        b
    }

    /// Convert a buffer-coordinate box inside the DOMAIN to DOMAIN-relative
    /// coordinates.
    pub fn to_domain_relative(&self, b: &[Span]) -> IndexBox {
        b.iter()
            .zip(&self.halo)
            .map(|(s, &h)| Span::new(s.start - h, s.end - h))
            .collect()
    }
}

pub fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}

/// Visit each innermost-axis row of `b` as `(linear start, length)`.
pub fn for_each_row(b: &[Span], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    if box_is_empty(b) {
        return;
    }
    let nd = b.len();
    let len = b[nd - 1].len();
    let mut idx: Vec<usize> = b.iter().map(|s| s.start).collect();
    loop {
        let base: usize = idx.iter().zip(strides).map(|(i, s)| i * s).sum();
        f(base, len);
        let mut a = nd - 1;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < b[a].end {
                break;
            }
            idx[a] = b[a].start;
            if a == 0 {
                return;
            }
        }
    }
}

/// Value for [`LocalField::write_global`].
pub enum GlobalValue<'a> {
    Scalar(f64),
    /// Row-major values conforming to the region.
    Array(&'a [f64]),
}

/// One rank's piece of a distributed field.
#[derive(Clone, Debug)]
pub struct LocalField {
    field: Field,
    layout: RankLayout,
    shape: Vec<usize>,
    strides: Vec<usize>,
    data: Vec<Vec<f64>>,
    /// `[buffer][direction]`: OWNED data facing that neighbour changed since
    /// the last exchange of the buffer.
    dirty: Vec<Vec<bool>>,
}

impl LocalField {
    /// Zero-initialized storage for `rank`.
    pub fn allocate(field: &Field, decomp: &Decomposition, rank: usize) -> Result<Self, Error> {
        decomp.check_rank(rank)?;
        let spec = field.spec();
        if spec.grid.shape() != decomp.shape() {
            return Err(FieldError::NotCollective.into());
        }
        let layout = RankLayout::new(decomp, rank, &spec.halo);
        if layout.owned_shape().iter().any(|&n| n == 0) {
            return Err(FieldError::EmptyOwnedExtent {
                field: spec.name.clone(),
                rank,
            }
            .into());
        }
        let shape = layout.full_shape();
        let strides = row_major_strides(&shape);
        let len: usize = shape.iter().product();
        let nb = spec.time_buffers();
        let ndirs = directions(layout.ndims()).len();
        Ok(Self {
            field: field.clone(),
            layout,
            shape,
            strides,
            data: vec![vec![0.0; len]; nb],
            dirty: vec![vec![false; ndirs]; nb],
        })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn layout(&self) -> &RankLayout {
        &self.layout
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn nbuffers(&self) -> usize {
        self.data.len()
    }

    fn check_buffer(&self, buffer: usize) -> Result<(), FieldError> {
        if buffer >= self.data.len() {
            return Err(FieldError::BadBuffer {
                field: self.field.name().to_string(),
                buffer,
            });
        }
        Ok(())
    }

    pub fn buffer(&self, buffer: usize) -> &[f64] {
        &self.data[buffer]
    }

    pub fn buffer_mut(&mut self, buffer: usize) -> &mut [f64] {
        &mut self.data[buffer]
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Value at buffer coordinates `idx`.
    pub fn get(&self, buffer: usize, idx: &[usize]) -> f64 {
        self.data[buffer][self.linear(idx)]
    }

    pub fn region_boxes(&self, name: RegionName, radius: &[usize]) -> Result<Vec<IndexBox>, FieldError> {
        self.layout.region_boxes(name, radius)
    }

    /// DOMAIN values in row-major order.
    pub fn domain_values(&self, buffer: usize) -> Vec<f64> {
        self.pack(buffer, &self.layout.domain_box())
            .expect("domain box is in bounds")
    }

    fn check_box(&self, b: &[Span]) -> Result<(), FieldError> {
        let ok = b.len() == self.shape.len()
            && b.iter().zip(&self.shape).all(|(s, &n)| s.start <= s.end && s.end <= n);
        if !ok {
            return Err(FieldError::BoxOutOfBounds(b.iter().map(|s| (s.start, s.end)).collect()));
        }
        Ok(())
    }

    pub fn pack(&self, buffer: usize, b: &[Span]) -> Result<Vec<f64>, FieldError> {
        let mut out = Vec::with_capacity(box_volume(b));
        self.pack_into(buffer, b, &mut out)?;
        Ok(out)
    }

    /// Append the values of box `b` (row-major) to `out`.
    pub fn pack_into(&self, buffer: usize, b: &[Span], out: &mut Vec<f64>) -> Result<(), FieldError> {
        self.check_buffer(buffer)?;
        self.check_box(b)?;
        let data = &self.data[buffer];
        for_each_row(b, &self.strides, |base, len| {
            out.extend_from_slice(&data[base..base + len]);
        });
        Ok(())
    }

    pub fn unpack(&mut self, buffer: usize, b: &[Span], values: &[f64]) -> Result<(), FieldError> {
        self.check_buffer(buffer)?;
        self.check_box(b)?;
        let expected = box_volume(b);
        if values.len() != expected {
            return Err(FieldError::UnpackMismatch {
                expected,
                got: values.len(),
            });
        }
        let data = &mut self.data[buffer];
        let mut pos = 0;
        for_each_row(b, &self.strides, |base, len| {
            data[base..base + len].copy_from_slice(&values[pos..pos + len]);
            pos += len;
        });
        Ok(())
    }

    /// Write the part of a global region this rank owns. Every rank must
    /// make the same call; returns the number of local points written.
    pub fn write_global(
        &mut self,
        buffer: usize,
        region: &[Span],
        value: GlobalValue<'_>,
    ) -> Result<usize, FieldError> {
        self.check_buffer(buffer)?;
        let gshape = self.field.spec().grid.shape().to_vec();
        let inside = region.len() == gshape.len()
            && region.iter().zip(&gshape).all(|(s, &n)| s.start <= s.end && s.end <= n);
        if !inside {
            return Err(FieldError::RegionOutOfBounds {
                region: region.iter().map(|s| (s.start, s.end)).collect(),
                shape: gshape,
            });
        }
        if let GlobalValue::Array(a) = &value {
            if a.len() != box_volume(region) {
                return Err(FieldError::NonConformingArray {
                    expected: box_volume(region),
                    got: a.len(),
                });
            }
        }
        let Some(local) = global_to_local(&self.layout.extent, region) else {
            return Ok(0);
        };
        let target: IndexBox = local
            .iter()
            .zip(&self.layout.halo)
            .map(|(s, &h)| s.shift(h))
            .collect();
        let count = box_volume(&target);
        match value {
            GlobalValue::Scalar(v) => {
                let data = &mut self.data[buffer];
                for_each_row(&target, &self.strides, |base, len| {
                    data[base..base + len].fill(v);
                });
            }
            GlobalValue::Array(a) => {
                // rows of the overlap, located inside the row-major region array
                let rstrides = row_major_strides(&region.iter().map(Span::len).collect::<Vec<_>>());
                let global: IndexBox = local
                    .iter()
                    .zip(&self.layout.extent)
                    .map(|(s, e)| s.shift(e.start))
                    .collect();
                let in_region: IndexBox = global
                    .iter()
                    .zip(region)
                    .map(|(g, r)| Span::new(g.start - r.start, g.end - r.start))
                    .collect();
                let mut src_rows = Vec::new();
                for_each_row(&in_region, &rstrides, |base, len| src_rows.push((base, len)));
                let data = &mut self.data[buffer];
                let mut k = 0;
                for_each_row(&target, &self.strides, |base, len| {
                    let (sb, sl) = src_rows[k];
                    debug_assert_eq!(sl, len);
                    data[base..base + len].copy_from_slice(&a[sb..sb + sl]);
                    k += 1;
                });
            }
        }
        self.mark_written(buffer, &target);
        Ok(count)
    }

    /// Record that `b` (buffer coordinates) was modified.
    pub fn mark_written(&mut self, buffer: usize, b: &[Span]) {
        let full_halo = self.layout.halo.clone();
        for (d, dir) in directions(self.layout.ndims()).iter().enumerate() {
            let slab = self.layout.send_box(dir, &full_halo);
            if !box_is_empty(&box_intersect(&slab, b)) {
                self.dirty[buffer][d] = true;
            }
        }
    }

    pub fn mark_all_dirty(&mut self, buffer: usize) {
        self.dirty[buffer].iter_mut().for_each(|d| *d = true);
    }

    pub fn mark_clean(&mut self, buffer: usize, dir_index: usize) {
        self.dirty[buffer][dir_index] = false;
    }

    pub fn is_dirty(&self, buffer: usize, dir_index: usize) -> bool {
        self.dirty[buffer][dir_index]
    }

    /// Whether every neighbour-facing slab of `buffer` has been exchanged
    /// since it was last written.
    pub fn halo_fresh(&self, buffer: usize, decomp: &Decomposition) -> bool {
        directions(self.layout.ndims())
            .iter()
            .enumerate()
            .all(|(d, dir)| decomp.neighbor(self.layout.rank, dir).is_none() || !self.dirty[buffer][d])
    }

    /// Debug-build agreement check for collective writes: every rank must
    /// pass the same fingerprint.
    pub fn check_collective(comm: &mut Comm, fingerprint: u32) -> Result<(), Error> {
        let v = fingerprint as f64;
        let hi = comm.allreduce(ReduceOp::Max, v)?;
        let lo = comm.allreduce(ReduceOp::Min, v)?;
        if hi != lo {
            return Err(FieldError::NotCollective.into());
        }
        Ok(())
    }
}

/// Collect the DOMAIN of `buffer` from every rank into a row-major global
/// array on rank 0; other ranks get `None`.
pub fn gather(comm: &mut Comm, field: &LocalField, decomp: &Decomposition, buffer: usize) -> Result<Option<Vec<f64>>, Error> {
    let tag = make_tag(kind::GATHER, 0, 0, buffer as u32);
    let mine = field.domain_values(buffer);
    if comm.rank() != 0 {
        comm.send(0, tag, &mine)?;
        return Ok(None);
    }
    let shape = decomp.shape().to_vec();
    let strides = row_major_strides(&shape);
    let mut global = vec![0.0; shape.iter().product()];
    for r in 0..comm.nranks() {
        let part = if r == 0 { mine.clone() } else { comm.recv(r, tag)? };
        let ext = decomp.extent(r);
        if part.len() != box_volume(&ext) {
            return Err(RuntimeError::Transport(format!("gather: rank {r} sent {} values", part.len())).into());
        }
        let mut pos = 0;
        for_each_row(&ext, &strides, |base, len| {
            global[base..base + len].copy_from_slice(&part[pos..pos + len]);
            pos += len;
        });
    }
    Ok(Some(global))
}

const MAGIC: &str = "stencil-dmp-field";

/// Write a gathered field: one text header line, then row-major f64 LE.
pub fn save_field_file(path: &Path, name: &str, shape: &[usize], values: &[f64]) -> Result<(), Error> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let dims: Vec<String> = shape.iter().map(|n| n.to_string()).collect();
    writeln!(f, "{MAGIC} name={name} shape={}", dims.join(","))?;
    for v in values {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn load_field_file(path: &Path) -> Result<(String, Vec<usize>, Vec<f64>), Error> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let bad = |m: &str| Error::from(FieldError::BadFile(m.to_string()));
    let mut parts = header.trim_end().split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(bad("missing magic"));
    }
    let name = parts
        .next()
        .and_then(|p| p.strip_prefix("name="))
        .ok_or_else(|| bad("missing name"))?
        .to_string();
    let shape: Vec<usize> = parts
        .next()
        .and_then(|p| p.strip_prefix("shape="))
        .ok_or_else(|| bad("missing shape"))?
        .split(',')
        .map(|s| s.parse::<usize>().map_err(|_| bad("bad shape")))
        .collect::<Result<_, _>>()?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let n: usize = shape.iter().product();
    if bytes.len() != n * 8 {
        return Err(bad("payload length does not match shape"));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((name, shape, values))
}
