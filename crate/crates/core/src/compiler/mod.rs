//! From stencil equations to per-rank execution plans: access alignment,
//! clusters with halo requirements, schedule and iteration trees with
//! HaloSpots, HaloSpot optimization and mode-specific lowering.

mod cluster;
mod iet;
mod kernel;
mod plan;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use cluster::{align_accesses, build_clusters, Cluster, HaloRequirement};
pub use iet::{build_schedule_tree, hoist_invariants, lower_to_iet, optimize_halospots, HaloSpot, Iet, IetNode, LoweredEq, SpotEntry, TimeSel};
pub use kernel::{Instr, Op, Operand, RowKernel, Slot};
pub use plan::{lower_mode, region_spans, Action, ExecPlan, PlanEntry, Region, SparseKind, SparseOp, SpotPlan};

use crate::decomposition::Decomposition;
use crate::error::{CompileError, Error};
use crate::sparse::PointSet;
use crate::symbolics::{Access, Expr, Field, GridSpec, StencilEquation};

/// Communication/computation pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Basic,
    Diagonal,
    Full,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Basic, Mode::Diagonal, Mode::Full];
}

impl FromStr for Mode {
    type Err = CompileError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "basic" => Ok(Mode::Basic),
            "diagonal" => Ok(Mode::Diagonal),
            "full" => Ok(Mode::Full),
            _ => Err(CompileError::UnknownMode(s.to_string())),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Basic => "basic",
            Mode::Diagonal => "diagonal",
            Mode::Full => "full",
        })
    }
}

/// One statement of the time-loop body.
#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Eq(StencilEquation),
    /// `target += (weight * amplitude) * scale` at the nodes around each point.
    Inject {
        target: Access,
        points: String,
        scale: Expr,
    },
    /// Record the multilinear value of `source` at each point.
    Interpolate { source: Access, points: String },
}

impl Stmt {
    /// `(field, time offset)` pairs written.
    pub fn writes(&self) -> Vec<(Field, i32)> {
        match self {
            Stmt::Eq(eq) => vec![(eq.lhs.field.clone(), eq.lhs.time)],
            Stmt::Inject { target, .. } => vec![(target.field.clone(), target.time)],
            Stmt::Interpolate { .. } => Vec::new(),
        }
    }

    /// `(field, time offset)` pairs read, in first-occurrence order.
    pub fn reads(&self) -> Vec<(Field, i32)> {
        let mut out: Vec<(Field, i32)> = Vec::new();
        let mut push = |f: &Field, t: i32| {
            if !out.iter().any(|(g, s)| g == f && *s == t) {
                out.push((f.clone(), t));
            }
        };
        match self {
            Stmt::Eq(eq) => eq.reads().into_iter().for_each(|a| push(&a.field, a.time)),
            Stmt::Inject { target, scale, .. } => {
                push(&target.field, target.time);
                scale.accesses().into_iter().for_each(|a| push(&a.field, a.time));
            }
            Stmt::Interpolate { source, .. } => push(&source.field, source.time),
        }
        out
    }

    pub fn label(&self) -> String {
        match self {
            Stmt::Eq(eq) => eq.lhs.to_string(),
            Stmt::Inject { target, points, .. } => format!("inject({points} -> {target})"),
            Stmt::Interpolate { source, points } => format!("interpolate({source} -> {points})"),
        }
    }
}

/// A time-stepping program: the loop body plus the point sets it uses.
#[derive(Clone, Debug)]
pub struct Program {
    pub grid: GridSpec,
    pub stmts: Vec<Stmt>,
    pub pointsets: Vec<PointSet>,
}

impl Program {
    pub fn new(grid: &GridSpec, stmts: Vec<Stmt>) -> Self {
        Self {
            grid: grid.clone(),
            stmts,
            pointsets: Vec::new(),
        }
    }

    pub fn with_pointset(mut self, p: PointSet) -> Self {
        self.pointsets.push(p);
        self
    }

    /// Every field touched, in first-occurrence order.
    pub fn fields(&self) -> Vec<Field> {
        let mut out: Vec<Field> = Vec::new();
        for s in &self.stmts {
            for (f, _) in s.writes().into_iter().chain(s.reads()) {
                if !out.contains(&f) {
                    out.push(f);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct CompileOptions {
    pub mode: Mode,
    /// Apply drop/merge/hoist to HaloSpots.
    pub optimize: bool,
    /// CORE tile edge for full mode.
    pub tile: usize,
    pub dt: f64,
    pub bindings: BTreeMap<String, f64>,
}

impl CompileOptions {
    pub fn new(mode: Mode, dt: f64) -> Self {
        Self {
            mode,
            optimize: true,
            tile: 32,
            dt,
            bindings: BTreeMap::new(),
        }
    }

    pub fn bind(mut self, name: &str, value: f64) -> Self {
        self.bindings.insert(name.to_string(), value);
        self
    }
}

/// Full pipeline: clusters, IET, optimization, lowering.
pub fn compile(program: &Program, decomp: &Decomposition, opts: &CompileOptions) -> Result<ExecPlan, Error> {
    if program.grid.shape() != decomp.shape() {
        return Err(CompileError::MixedGrids.into());
    }
    for f in program.fields() {
        if f.spec().grid.ndims() != program.grid.ndims() {
            return Err(CompileError::MixedGrids.into());
        }
    }
    let clusters = build_clusters(&program.stmts, decomp)?;
    let mut iet = lower_to_iet(&clusters)?;
    if opts.optimize {
        iet = optimize_halospots(&iet);
    }
    lower_mode(&iet, program, decomp, opts)
}
