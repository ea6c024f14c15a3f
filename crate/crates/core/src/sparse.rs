//! Off-grid point sets: multilinear weights, ownership, injection,
//! interpolation and the Ricker source wavelet.

use std::f64::consts::PI;

use crate::decomposition::{enclosing_cell, Decomposition};
use crate::distfield::LocalField;
use crate::error::{Error, SparseError};
use crate::symbolics::GridSpec;

/// Corner indices of the enclosing cell with their multilinear weights.
/// Corners are lexicographic with the last axis varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub cell: Vec<usize>,
    pub corners: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

pub fn multilinear_weights(coords: &[f64], grid: &GridSpec) -> Result<Weights, SparseError> {
    let (cell, frac) = enclosing_cell(coords, grid)?;
    let nd = cell.len();
    let mut corners = Vec::with_capacity(1 << nd);
    let mut weights = Vec::with_capacity(1 << nd);
    for bits in 0..(1usize << nd) {
        let mut idx = cell.clone();
        let mut w = 1.0;
        for a in 0..nd {
            let upper = bits >> (nd - 1 - a) & 1 == 1;
            if upper {
                idx[a] += 1;
                w *= frac[a];
            } else {
                w *= 1.0 - frac[a];
            }
        }
        corners.push(idx);
        weights.push(w);
    }
    Ok(Weights {
        cell,
        corners,
        weights,
    })
}

/// A named set of off-grid points with an optional per-step signal
/// (`signal[step][point]`; missing steps read as zero).
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    pub name: String,
    pub coords: Vec<Vec<f64>>,
    pub signal: Vec<Vec<f64>>,
}

impl PointSet {
    pub fn new(name: &str, coords: Vec<Vec<f64>>) -> Self {
        Self {
            name: name.to_string(),
            coords,
            signal: Vec::new(),
        }
    }

    pub fn with_signal(mut self, signal: Vec<Vec<f64>>) -> Self {
        self.signal = signal;
        self
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn amplitude(&self, step: usize, point: usize) -> f64 {
        self.signal
            .get(step)
            .and_then(|row| row.get(point))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Point set resolved against a grid and decomposition.
#[derive(Clone, Debug)]
pub struct SparsePlan {
    pub name: String,
    pub weights: Vec<Weights>,
    /// Point ids replicated on each rank, ascending.
    pub replicas: Vec<Vec<usize>>,
    /// Rank reporting each point's interpolated value.
    pub reporter: Vec<usize>,
}

impl SparsePlan {
    pub fn new(points: &PointSet, grid: &GridSpec, decomp: &Decomposition) -> Result<Self, Error> {
        let mut weights = Vec::with_capacity(points.len());
        let mut replicas = vec![Vec::new(); decomp.nranks()];
        let mut reporter = Vec::with_capacity(points.len());
        for (id, c) in points.coords.iter().enumerate() {
            let w = multilinear_weights(c, grid)?;
            for r in decomp.owners_of_point(c, grid, 1)? {
                replicas[r].push(id);
            }
            reporter.push(decomp.owner_of_index(&w.cell));
            weights.push(w);
        }
        Ok(Self {
            name: points.name.clone(),
            weights,
            replicas,
            reporter,
        })
    }
}

fn local_index(field: &LocalField, global: &[usize], halo_ok: bool) -> Option<Vec<usize>> {
    let layout = field.layout();
    let mut out = Vec::with_capacity(global.len());
    for (a, &g) in global.iter().enumerate() {
        let ext = layout.extent[a];
        let h = layout.halo[a];
        let lo = if halo_ok { ext.start.saturating_sub(h) } else { ext.start };
        let hi = if halo_ok { ext.end + h } else { ext.end };
        if g < lo || g >= hi {
            return None;
        }
        out.push(g + h - ext.start);
    }
    Some(out)
}

/// Add `(w * amplitude) * scale` to every corner node inside this rank's
/// DOMAIN, visiting points in id order.
pub fn inject(
    field: &mut LocalField,
    buffer: usize,
    plan: &SparsePlan,
    rank: usize,
    amplitudes: impl Fn(usize) -> f64,
    scale: f64,
) {
    let mut touched = false;
    for &p in &plan.replicas[rank] {
        let amp = amplitudes(p);
        let w = &plan.weights[p];
        for (corner, &wt) in w.corners.iter().zip(&w.weights) {
            if let Some(idx) = local_index(field, corner, false) {
                let lin = field.linear(&idx);
                field.buffer_mut(buffer)[lin] += wt * amp * scale;
                touched = true;
            }
        }
    }
    if touched {
        field.mark_all_dirty(buffer);
    }
}

/// Multilinear value at one point; corners may lie in the HALO.
pub fn interpolate_point(field: &LocalField, buffer: usize, w: &Weights) -> f64 {
    let mut acc = 0.0;
    for (corner, &wt) in w.corners.iter().zip(&w.weights) {
        let idx = local_index(field, corner, true).expect("corner within the local buffer");
        acc += wt * field.get(buffer, &idx);
    }
    acc
}

/// Values of the points this rank reports, as `(point id, value)`.
pub fn interpolate(field: &LocalField, buffer: usize, plan: &SparsePlan, rank: usize) -> Vec<(usize, f64)> {
    plan.replicas[rank]
        .iter()
        .filter(|&&p| plan.reporter[p] == rank)
        .map(|&p| (p, interpolate_point(field, buffer, &plan.weights[p])))
        .collect()
}

/// Ricker wavelet with peak frequency `f0` and delay `t0`.
pub fn ricker(f0: f64, t: f64, t0: f64) -> Result<f64, SparseError> {
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(SparseError::BadFrequency(f0));
    }
    let a = (PI * f0 * (t - t0)).powi(2);
    Ok((1.0 - 2.0 * a) * (-a).exp())
}

/// Parse a point file: one point per line, whitespace-separated
/// coordinates. Blank lines and `#` comments are skipped.
pub fn parse_points(text: &str, ndims: usize) -> Result<Vec<Vec<f64>>, SparseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let coords = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|e| SparseError::Parse {
                    line: i + 1,
                    reason: format!("`{t}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if coords.len() != ndims {
            return Err(SparseError::Parse {
                line: i + 1,
                reason: format!("expected {ndims} coordinates, found {}", coords.len()),
            });
        }
        out.push(coords);
    }
    Ok(out)
}

/// Parse `x,y[,z]`.
pub fn parse_point(text: &str) -> Result<Vec<f64>, SparseError> {
    text.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|e| SparseError::Parse {
                line: 1,
                reason: format!("`{t}`: {e}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_on_node_and_midpoint() {
        let g = GridSpec::unit(&[5, 5]).unwrap();
        let w = multilinear_weights(&[2.0, 3.0], &g).unwrap();
        let hot: Vec<_> = w
            .corners
            .iter()
            .zip(&w.weights)
            .filter(|(_, &x)| x != 0.0)
            .collect();
        assert_eq!(hot.len(), 1);
        assert_eq!(hot[0].0, &vec![2, 3]);
        assert_eq!(*hot[0].1, 1.0);
        let m = multilinear_weights(&[1.5, 2.5], &g).unwrap();
        assert_eq!(m.weights, vec![0.25; 4]);
    }

    #[test]
    fn fractional_weights_order() {
        let g = GridSpec::unit(&[4, 4]).unwrap();
        let w = multilinear_weights(&[1.25, 1.75], &g).unwrap();
        assert_eq!(w.weights, vec![0.75 * 0.25, 0.75 * 0.75, 0.25 * 0.25, 0.25 * 0.75]);
        assert_eq!(w.corners[1], vec![1, 2]);
    }

    #[test]
    fn ricker_values() {
        assert_eq!(ricker(10.0, 0.1, 0.1).unwrap(), 1.0);
        let f0 = 15.0;
        let tau = 1.0 / (PI * f0 * 2f64.sqrt());
        assert!(ricker(f0, tau, 0.0).unwrap().abs() <= 1e-12);
        assert!(ricker(f0, 10.0 / f0, 0.0).unwrap().abs() < 1e-12);
        assert!(ricker(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn point_file() {
        let pts = parse_points("# header\n1 2\n\n3.5 4 # trailing\n", 2).unwrap();
        assert_eq!(pts, vec![vec![1.0, 2.0], vec![3.5, 4.0]]);
        assert!(parse_points("1 2 3\n", 2).is_err());
        assert!(parse_points("a b\n", 2).is_err());
    }
}
