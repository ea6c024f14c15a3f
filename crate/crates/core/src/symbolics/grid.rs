use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::SymbolicsError;

use super::expr::{Access, Derivative, Expr};

/// Axis labels in row-major order: axis 0 varies slowest.
pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// A structured, uniformly spaced grid anchored at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    shape: Vec<usize>,
    extent: Vec<f64>,
    spacing: Vec<f64>,
}

impl GridSpec {
    pub fn new(shape: &[usize], extent: &[f64]) -> Result<Self, SymbolicsError> {
        if !(2..=3).contains(&shape.len()) {
            return Err(SymbolicsError::BadDimensionality(shape.len()));
        }
        if shape.len() != extent.len() {
            return Err(SymbolicsError::ShapeExtentMismatch {
                shape: shape.len(),
                extent: extent.len(),
            });
        }
        for (axis, (&n, &e)) in shape.iter().zip(extent).enumerate() {
            if n < 2 {
                return Err(SymbolicsError::AxisTooSmall { axis, points: n });
            }
            if !(e.is_finite() && e > 0.0) {
                return Err(SymbolicsError::BadExtent { axis, extent: e });
            }
        }
        let spacing = shape
            .iter()
            .zip(extent)
            .map(|(&n, &e)| e / (n - 1) as f64)
            .collect();
        Ok(Self {
            shape: shape.to_vec(),
            extent: extent.to_vec(),
            spacing,
        })
    }

    /// Grid with unit spacing along every axis.
    pub fn unit(shape: &[usize]) -> Result<Self, SymbolicsError> {
        let extent: Vec<f64> = shape.iter().map(|&n| n.saturating_sub(1) as f64).collect();
        Self::new(shape, &extent)
    }

    pub fn ndims(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn npoints(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Static description of a discrete function living on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub grid: GridSpec,
    pub space_order: usize,
    pub time_order: usize,
    pub halo: Vec<usize>,
}

impl FieldSpec {
    /// Number of rotating time buffers; static fields have one.
    pub fn time_buffers(&self) -> usize {
        if self.time_order == 0 {
            1
        } else {
            self.time_order + 1
        }
    }

    pub fn is_static(&self) -> bool {
        self.time_order == 0
    }

    /// Whether `offset` (relative to the current step) names one of this
    /// field's buffers.
    pub fn valid_time_offset(&self, offset: i32) -> bool {
        match self.time_order {
            0 => offset == 0,
            1 => offset == 0 || offset == 1,
            _ => (-1..=1).contains(&offset),
        }
    }

    /// Buffer index holding `offset` at iteration `time`.
    pub fn buffer_index(&self, time: i64, offset: i32) -> usize {
        (time + offset as i64).rem_euclid(self.time_buffers() as i64) as usize
    }
}

/// Shared handle to a [`FieldSpec`]. Identity is the field name.
#[derive(Clone)]
pub struct Field(Arc<FieldSpec>);

impl Field {
    /// A static (time-invariant) field, e.g. a material parameter.
    pub fn function(name: &str, grid: &GridSpec, space_order: usize) -> Result<Self, SymbolicsError> {
        Self::build(name, grid, space_order, 0)
    }

    /// A time-evolving field with `time_order + 1` rotating buffers.
    pub fn time_function(
        name: &str,
        grid: &GridSpec,
        space_order: usize,
        time_order: usize,
    ) -> Result<Self, SymbolicsError> {
        if !(1..=2).contains(&time_order) {
            return Err(SymbolicsError::BadTimeOrder(time_order));
        }
        Self::build(name, grid, space_order, time_order)
    }

    fn build(
        name: &str,
        grid: &GridSpec,
        space_order: usize,
        time_order: usize,
    ) -> Result<Self, SymbolicsError> {
        if space_order == 0 || space_order % 2 != 0 {
            return Err(SymbolicsError::BadSpaceOrder(space_order));
        }
        Ok(Field(Arc::new(FieldSpec {
            name: name.to_string(),
            grid: grid.clone(),
            space_order,
            time_order,
            halo: vec![space_order; grid.ndims()],
        })))
    }

    /// Same field with an explicit per-axis halo width.
    pub fn with_halo(self, halo: &[usize]) -> Self {
        let mut spec = (*self.0).clone();
        spec.halo = halo.to_vec();
        Field(Arc::new(spec))
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.0
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn ndims(&self) -> usize {
        self.0.grid.ndims()
    }

    /// Access at a relative time offset and per-axis spatial offsets.
    pub fn access(&self, time: i32, offsets: &[i32]) -> Expr {
        Expr::Access(Access::new(self.clone(), time, offsets.to_vec()))
    }

    /// `u[t]` (or `m[x]` for a static field).
    pub fn center(&self) -> Expr {
        self.access(0, &vec![0; self.ndims()])
    }

    /// `u[t+1]`.
    pub fn forward(&self) -> Expr {
        self.access(1, &vec![0; self.ndims()])
    }

    /// `u[t-1]`.
    pub fn backward(&self) -> Expr {
        self.access(-1, &vec![0; self.ndims()])
    }

    /// Unknown used by [`super::solve_forward`].
    pub fn forward_access(&self) -> Access {
        Access::new(self.clone(), 1, vec![0; self.ndims()])
    }

    /// First-order forward time derivative placeholder.
    pub fn dt(&self) -> Expr {
        Derivative::time(self.center(), 1)
    }

    /// Second-order central time derivative placeholder.
    pub fn dt2(&self) -> Expr {
        Derivative::time(self.center(), 2)
    }

    /// Spatial derivative placeholder of the given order along `axis`.
    pub fn d(&self, axis: usize, order: usize) -> Expr {
        Derivative::space(self.center(), axis, order, self.0.space_order)
    }

    /// Sum of the second derivatives along every spatial axis.
    pub fn laplace(&self) -> Expr {
        Expr::Add((0..self.ndims()).map(|a| self.d(a, 2)).collect())
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.0.name == other.0.name
    }
}

impl Eq for Field {}

impl Hash for Field {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.name.hash(state);
    }
}

impl PartialOrd for Field {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Field {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.name.cmp(&other.0.name)
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field({})", self.0.name)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.name)
    }
}
