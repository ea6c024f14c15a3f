//! Cartesian rank topologies, balanced partitioning and ownership queries.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::error::{DecompositionError, SparseError};
use crate::symbolics::GridSpec;

/// Half-open index interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    pub fn intersect(&self, other: &Span) -> Span {
        Span::new(self.start.max(other.start), self.end.min(other.end))
    }

    pub fn shift(&self, by: usize) -> Span {
        Span::new(self.start + by, self.end + by)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Multi-dimensional box as one span per axis.
pub type IndexBox = Vec<Span>;

pub fn box_volume(b: &[Span]) -> usize {
    b.iter().map(Span::len).product()
}

pub fn box_is_empty(b: &[Span]) -> bool {
    b.iter().any(Span::is_empty)
}

pub fn box_intersect(a: &[Span], b: &[Span]) -> IndexBox {
    a.iter().zip(b).map(|(x, y)| x.intersect(y)).collect()
}

/// Every non-zero vector in `{-1, 0, 1}^ndims`, lexicographic order.
pub fn directions(ndims: usize) -> Vec<Vec<i32>> {
    let total = 3usize.pow(ndims as u32);
    (0..total)
        .map(|mut k| {
            let mut d = vec![0i32; ndims];
            for a in (0..ndims).rev() {
                d[a] = (k % 3) as i32 - 1;
                k /= 3;
            }
            d
        })
        .filter(|d| d.iter().any(|&c| c != 0))
        .collect()
}

/// Index of `dir` within [`directions`].
pub fn direction_index(dir: &[i32]) -> usize {
    let mut k = 0usize;
    for &c in dir {
        k = k * 3 + (c + 1) as usize;
    }
    let centre = (3usize.pow(dir.len() as u32) - 1) / 2;
    if k > centre {
        k - 1
    } else {
        k
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Topology {
    dims: Vec<usize>,
}

impl Topology {
    pub fn new(dims: &[usize]) -> Result<Self, DecompositionError> {
        if dims.iter().any(|&d| d == 0) || dims.is_empty() {
            return Err(DecompositionError::ZeroDim(dims.to_vec()));
        }
        Ok(Self { dims: dims.to_vec() })
    }

    /// Explicit override, checked against the requested rank count.
    pub fn with_ranks(dims: &[usize], nranks: usize) -> Result<Self, DecompositionError> {
        let t = Self::new(dims)?;
        if t.nranks() != nranks {
            return Err(DecompositionError::TopologyMismatch {
                dims: dims.to_vec(),
                product: t.nranks(),
                nranks,
            });
        }
        Ok(t)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    pub fn nranks(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major coordinates of `rank`.
    pub fn coords(&self, rank: usize) -> Vec<usize> {
        let mut c = vec![0; self.dims.len()];
        let mut r = rank;
        for a in (0..self.dims.len()).rev() {
            c[a] = r % self.dims[a];
            r /= self.dims[a];
        }
        c
    }

    pub fn rank_of(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&c, &d)| acc * d + c)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

/// Balanced factorization of `nranks` into `ndims` factors: the maximum
/// factor is minimized, then the descending-sorted factor list is minimized
/// lexicographically; the result is stored descending.
pub fn default_topology(nranks: usize, ndims: usize) -> Topology {
    fn factorizations(n: usize, k: usize, out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>) {
        if k == 1 {
            cur.push(n);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for d in 1..=n {
            if n % d == 0 {
                cur.push(d);
                factorizations(n / d, k - 1, out, cur);
                cur.pop();
            }
        }
    }
    let n = nranks.max(1);
    let mut all = Vec::new();
    factorizations(n, ndims, &mut all, &mut Vec::new());
    let best = all
        .into_iter()
        .map(|mut f| {
            f.sort_unstable_by(|a, b| b.cmp(a));
            f
        })
        .min_by(|a, b| a[0].cmp(&b[0]).then_with(|| a.cmp(b)))
        .expect("at least one factorization");
    Topology { dims: best }
}

/// Split `[0, npoints)` into `nparts` contiguous ranges; earlier parts take
/// the remainder.
pub fn decompose_axis(npoints: usize, nparts: usize) -> Result<Vec<Span>, DecompositionError> {
    if nparts == 0 || nparts > npoints {
        return Err(DecompositionError::TooManyParts { npoints, nparts });
    }
    let base = npoints / nparts;
    let rem = npoints % nparts;
    let mut out = Vec::with_capacity(nparts);
    let mut start = 0;
    for i in 0..nparts {
        let len = base + usize::from(i < rem);
        out.push(Span::new(start, start + len));
        start += len;
    }
    Ok(out)
}

/// Intersect a global region with a rank's owned extent, returning the
/// overlap in coordinates local to the extent (`local + extent.start ==
/// global`), or `None` when the overlap is empty.
pub fn global_to_local(extent: &[Span], region: &[Span]) -> Option<IndexBox> {
    let mut out = Vec::with_capacity(extent.len());
    for (e, r) in extent.iter().zip(region) {
        let i = e.intersect(r);
        if i.is_empty() {
            return None;
        }
        out.push(Span::new(i.start - e.start, i.end - e.start));
    }
    Some(out)
}

/// Inverse of [`global_to_local`].
pub fn local_to_global(extent: &[Span], local: &[Span]) -> IndexBox {
    extent
        .iter()
        .zip(local)
        .map(|(e, l)| l.shift(e.start))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    shape: Vec<usize>,
    topology: Topology,
    axis_parts: Vec<Vec<Span>>,
    neighbors: Vec<Vec<Option<usize>>>,
}

impl Decomposition {
    pub fn new(shape: &[usize], topology: Topology) -> Result<Self, DecompositionError> {
        if shape.len() != topology.ndims() {
            return Err(DecompositionError::DimensionMismatch {
                topology: topology.ndims(),
                grid: shape.len(),
            });
        }
        let axis_parts = shape
            .iter()
            .zip(topology.dims())
            .map(|(&n, &p)| decompose_axis(n, p))
            .collect::<Result<Vec<_>, _>>()?;
        let dirs = directions(shape.len());
        let neighbors = (0..topology.nranks())
            .map(|r| {
                let c = topology.coords(r);
                dirs.iter()
                    .map(|d| {
                        let mut nc = Vec::with_capacity(c.len());
                        for a in 0..c.len() {
                            let v = c[a] as i64 + d[a] as i64;
                            if v < 0 || v >= topology.dims()[a] as i64 {
                                return None;
                            }
                            nc.push(v as usize);
                        }
                        Some(topology.rank_of(&nc))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            shape: shape.to_vec(),
            topology,
            axis_parts,
            neighbors,
        })
    }

    pub fn single(shape: &[usize]) -> Result<Self, DecompositionError> {
        Self::new(shape, Topology::new(&vec![1; shape.len()])?)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndims(&self) -> usize {
        self.shape.len()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn nranks(&self) -> usize {
        self.topology.nranks()
    }

    pub fn check_rank(&self, rank: usize) -> Result<(), DecompositionError> {
        if rank >= self.nranks() {
            return Err(DecompositionError::BadRank {
                rank,
                nranks: self.nranks(),
            });
        }
        Ok(())
    }

    /// Owned global extent of `rank`.
    pub fn extent(&self, rank: usize) -> IndexBox {
        let c = self.topology.coords(rank);
        c.iter()
            .enumerate()
            .map(|(a, &ci)| self.axis_parts[a][ci])
            .collect()
    }

    pub fn owned_shape(&self, rank: usize) -> Vec<usize> {
        self.extent(rank).iter().map(Span::len).collect()
    }

    /// Neighbour at direction `dir` (components in `{-1, 0, 1}`).
    pub fn neighbor(&self, rank: usize, dir: &[i32]) -> Option<usize> {
        if dir.iter().all(|&c| c == 0) {
            return Some(rank);
        }
        self.neighbors[rank][direction_index(dir)]
    }

    /// Whether `rank` has a neighbour on the low (`side = 0`) or high
    /// (`side = 1`) face of `axis`.
    pub fn has_face_neighbor(&self, rank: usize, axis: usize, side: usize) -> bool {
        let mut d = vec![0; self.ndims()];
        d[axis] = if side == 0 { -1 } else { 1 };
        self.neighbor(rank, &d).is_some()
    }

    pub fn neighbor_sides(&self, rank: usize) -> Vec<[bool; 2]> {
        (0..self.ndims())
            .map(|a| [self.has_face_neighbor(rank, a, 0), self.has_face_neighbor(rank, a, 1)])
            .collect()
    }

    /// Rank owning global index `idx`.
    pub fn owner_of_index(&self, idx: &[usize]) -> usize {
        let coords: Vec<usize> = idx
            .iter()
            .enumerate()
            .map(|(a, &i)| {
                self.axis_parts[a]
                    .iter()
                    .position(|s| s.contains(i))
                    .expect("index inside the grid")
            })
            .collect();
        self.topology.rank_of(&coords)
    }

    /// Ranks whose owned box, grown by `support` cells per side, contains the
    /// cell enclosing `coords`.
    pub fn owners_of_point(
        &self,
        coords: &[f64],
        grid: &GridSpec,
        support: usize,
    ) -> Result<BTreeSet<usize>, DecompositionError> {
        let (cell, _) = enclosing_cell(coords, grid).map_err(|_| {
            DecompositionError::PointOutsideDomain {
                coords: coords.to_vec(),
            }
        })?;
        let mut out = BTreeSet::new();
        for r in 0..self.nranks() {
            let ext = self.extent(r);
            let inside = ext.iter().zip(&cell).all(|(e, &c)| {
                let lo = e.start.saturating_sub(support);
                c >= lo && c < e.end + support
            });
            if inside {
                out.insert(r);
            }
        }
        Ok(out)
    }
}

/// Lower-corner index of the cell containing `coords`, plus the fractional
/// position inside it along each axis (in `[0, 1]`). A point exactly on a
/// grid node belongs to the cell below it.
pub fn enclosing_cell(coords: &[f64], grid: &GridSpec) -> Result<(Vec<usize>, Vec<f64>), SparseError> {
    if coords.len() != grid.ndims() {
        return Err(SparseError::DimensionMismatch {
            expected: grid.ndims(),
            got: coords.len(),
        });
    }
    let mut cell = Vec::with_capacity(coords.len());
    let mut frac = Vec::with_capacity(coords.len());
    for a in 0..coords.len() {
        let x = coords[a];
        let ext = grid.extent()[a];
        let tol = 1e-12 * ext;
        if !x.is_finite() || x < -tol || x > ext + tol {
            return Err(SparseError::OutsideDomain {
                coords: coords.to_vec(),
            });
        }
        let n = grid.shape()[a];
        let xi = (x / grid.spacing()[a]).clamp(0.0, (n - 1) as f64);
        let nearest = xi.round();
        let xi = if (xi - nearest).abs() <= 1e-9 { nearest } else { xi };
        let c = (xi.ceil() as i64 - 1).clamp(0, n as i64 - 2) as usize;
        cell.push(c);
        frac.push(xi - c as f64);
    }
    Ok((cell, frac))
}
