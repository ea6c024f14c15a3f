use std::collections::HashMap;
use std::fmt;

use crate::decomposition::{Decomposition, Span};
use crate::distfield::RankLayout;
use crate::error::{CompileError, Error, SymbolicsError};
use crate::sparse::{PointSet, SparsePlan};
use crate::symbolics::{Access, EvalEnv, Expr, Field, Symbol};

use super::iet::{write_cluster, HaloSpot, Iet, IetNode, TimeSel};
use super::kernel::RowKernel;
use super::{CompileOptions, Mode, Program, Stmt};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Domain,
    /// CORE for the radius of the given spot.
    Core(usize),
    /// OWNED slabs for the radius of the given spot.
    Remainder(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    HaloUpdate(usize),
    HaloWait(usize),
    Compute { kernel: usize, region: Region },
    Sparse(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanEntry {
    pub field: usize,
    pub time: TimeSel,
    pub radius: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpotPlan {
    pub id: usize,
    pub entries: Vec<PlanEntry>,
    /// Per-axis maximum over entries.
    pub radius: Vec<usize>,
    pub label: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SparseKind {
    Inject { scale: f64 },
    Interpolate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOp {
    pub kind: SparseKind,
    pub field: usize,
    pub time: i32,
    /// Index into `ExecPlan::sparse_sets`.
    pub set: usize,
    pub cluster: usize,
}

/// Immutable per-run schedule shared by every rank.
#[derive(Clone, Debug)]
pub struct ExecPlan {
    pub mode: Mode,
    pub fields: Vec<Field>,
    pub prologue: Vec<Action>,
    pub step: Vec<Action>,
    pub spots: Vec<SpotPlan>,
    pub kernels: Vec<RowKernel>,
    /// Cluster index each kernel came from.
    pub kernel_cluster: Vec<usize>,
    pub sparse_ops: Vec<SparseOp>,
    pub sparse_sets: Vec<SparsePlan>,
    pub pointsets: Vec<PointSet>,
    pub tile: usize,
    pub dt: f64,
    pub decomposition: Decomposition,
    pub invariants: Vec<(usize, Expr, f64)>,
    pub iet: Iet,
}

impl ExecPlan {
    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name() == name)
    }

    /// Exchanges executed per time step.
    pub fn exchanges_per_step(&self) -> usize {
        self.step.iter().filter(|a| matches!(a, Action::HaloUpdate(_))).count()
    }

    pub fn prologue_exchanges(&self) -> usize {
        self.prologue.iter().filter(|a| matches!(a, Action::HaloUpdate(_))).count()
    }

    /// Fields written inside the time loop.
    pub fn evolving_fields(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for k in &self.kernels {
            if !out.contains(&k.lhs_field) {
                out.push(k.lhs_field);
            }
        }
        out
    }
}

struct SymbolEnv<'a> {
    dt: f64,
    spacing: &'a [f64],
    bindings: &'a std::collections::BTreeMap<String, f64>,
}

impl EvalEnv for SymbolEnv<'_> {
    fn access(&self, _: &Access) -> f64 {
        f64::NAN
    }
    fn symbol(&self, s: &Symbol) -> Option<f64> {
        match s {
            Symbol::Dt => Some(self.dt),
            Symbol::Spacing(a) => self.spacing.get(*a).copied(),
            Symbol::Named(n) => self.bindings.get(n).copied(),
        }
    }
}

fn spot_label(s: &HaloSpot) -> String {
    s.field_names().join(",")
}

fn check_extents(decomp: &Decomposition, radius: &[usize], full: bool) -> Result<(), CompileError> {
    for rank in 0..decomp.nranks() {
        let sides = decomp.neighbor_sides(rank);
        let owned = decomp.owned_shape(rank);
        for a in 0..owned.len() {
            let has = sides[a][0] || sides[a][1];
            if has && owned[a] < radius[a] {
                return Err(CompileError::ExtentBelowRadius {
                    rank,
                    axis: a,
                    extent: owned[a],
                    radius: radius[a],
                });
            }
            if full {
                let shrink = radius[a] * (sides[a][0] as usize + sides[a][1] as usize);
                if owned[a] <= shrink {
                    return Err(CompileError::EmptyCore {
                        rank,
                        extent: owned,
                        radius: radius.to_vec(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Replace HaloSpots by update/wait actions in the order the mode dictates.
pub fn lower_mode(iet: &Iet, program: &Program, decomp: &Decomposition, opts: &CompileOptions) -> Result<ExecPlan, Error> {
    if opts.tile == 0 {
        return Err(crate::error::ConfigError::Invalid("tile size must be positive".into()).into());
    }
    let fields = program.fields();
    let index: HashMap<String, usize> = fields
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name().to_string(), i))
        .collect();
    let field_index = |f: &Field| index[f.name()];
    let env = SymbolEnv {
        dt: opts.dt,
        spacing: program.grid.spacing(),
        bindings: &opts.bindings,
    };

    let mut invariants = Vec::new();
    for (i, e) in &iet.invariants {
        let v = e.eval(&env).map_err(CompileError::from)?;
        invariants.push((*i, e.clone(), v));
    }
    let inv_values: Vec<f64> = invariants.iter().map(|(_, _, v)| *v).collect();

    let mut kernels = Vec::new();
    let mut kernel_cluster = Vec::new();
    let mut kernel_of = HashMap::new();
    let mut sparse_ops = Vec::new();
    let mut sparse_of = HashMap::new();
    let mut sparse_sets: Vec<SparsePlan> = Vec::new();
    let mut set_index: HashMap<String, usize> = HashMap::new();
    for c in &iet.clusters {
        match &c.stmt {
            Stmt::Eq(_) => {
                let l = iet.lowered[c.index].as_ref().expect("stencil clusters are lowered");
                let k = RowKernel::build(&c.label(), l, &field_index, &inv_values, &|s| env.symbol(s))
                    .map_err(CompileError::from)?;
                kernel_of.insert(c.index, kernels.len());
                kernels.push(k);
                kernel_cluster.push(c.index);
            }
            Stmt::Inject { points, .. } | Stmt::Interpolate { points, .. } => {
                let set = match set_index.get(points) {
                    Some(&s) => s,
                    None => {
                        let ps = program
                            .pointsets
                            .iter()
                            .find(|p| &p.name == points)
                            .ok_or_else(|| CompileError::UnknownPointSet(points.clone()))?;
                        sparse_sets.push(SparsePlan::new(ps, &program.grid, decomp)?);
                        set_index.insert(points.clone(), sparse_sets.len() - 1);
                        sparse_sets.len() - 1
                    }
                };
                let (kind, acc) = match &c.stmt {
                    Stmt::Inject { target, scale, .. } => {
                        if scale.has_access() {
                            return Err(CompileError::NonPointwiseScale(scale.to_string()).into());
                        }
                        let v = scale.eval(&env).map_err(CompileError::from)?;
                        (SparseKind::Inject { scale: v }, target)
                    }
                    Stmt::Interpolate { source, .. } => (SparseKind::Interpolate, source),
                    Stmt::Eq(_) => unreachable!(),
                };
                sparse_of.insert(c.index, sparse_ops.len());
                sparse_ops.push(SparseOp {
                    kind,
                    field: field_index(&acc.field),
                    time: acc.time,
                    set,
                    cluster: c.index,
                });
            }
        }
    }

    let mut spots = Vec::new();
    let make_spot = |s: &HaloSpot, spots: &mut Vec<SpotPlan>| -> Result<usize, Error> {
        let nd = program.grid.ndims();
        let mut radius = vec![0; nd];
        let entries: Vec<PlanEntry> = s
            .entries
            .iter()
            .map(|e| {
                for (r, x) in radius.iter_mut().zip(&e.radius) {
                    *r = (*r).max(*x);
                }
                PlanEntry {
                    field: field_index(&e.field),
                    time: e.time,
                    radius: e.radius.clone(),
                }
            })
            .collect();
        for e in &s.entries {
            if e.radius.iter().zip(&e.field.spec().halo).any(|(r, h)| r > h) {
                return Err(SymbolicsError::RadiusExceedsHalo {
                    field: e.field.name().to_string(),
                    axis: e.radius.iter().zip(&e.field.spec().halo).position(|(r, h)| r > h).unwrap(),
                    radius: *e.radius.iter().max().unwrap(),
                    halo: *e.field.spec().halo.iter().min().unwrap(),
                }
                .into());
            }
        }
        check_extents(decomp, &radius, false)?;
        spots.push(SpotPlan {
            id: spots.len(),
            entries,
            radius,
            label: spot_label(s),
        });
        Ok(spots.len() - 1)
    };

    let mut prologue = Vec::new();
    for s in &iet.prologue {
        let id = make_spot(s, &mut spots)?;
        prologue.push(Action::HaloUpdate(id));
        prologue.push(Action::HaloWait(id));
    }

    // groups: an optional leading spot followed by the clusters up to the next spot
    let mut groups: Vec<(Option<usize>, Vec<usize>)> = Vec::new();
    for node in &iet.body {
        match node {
            IetNode::Spot(s) => {
                let id = make_spot(s, &mut spots)?;
                groups.push((Some(id), Vec::new()));
            }
            IetNode::Cluster(ci) => match groups.last_mut() {
                Some((_, members)) => members.push(*ci),
                None => groups.push((None, vec![*ci])),
            },
        }
    }

    let domain_action = |ci: usize| match kernel_of.get(&ci) {
        Some(&k) => Action::Compute {
            kernel: k,
            region: Region::Domain,
        },
        None => Action::Sparse(sparse_of[&ci]),
    };

    let mut step = Vec::new();
    for (spot, members) in &groups {
        let Some(spot) = *spot else {
            step.extend(members.iter().map(|&ci| domain_action(ci)));
            continue;
        };
        let overlap = opts.mode == Mode::Full
            && members.iter().any(|ci| kernel_of.contains_key(ci))
            && !sparse_conflict(iet, members, &kernel_of);
        if overlap {
            check_extents(decomp, &spots[spot].radius, true)?;
            step.push(Action::HaloUpdate(spot));
            for ci in members {
                if let Some(&k) = kernel_of.get(ci) {
                    step.push(Action::Compute {
                        kernel: k,
                        region: Region::Core(spot),
                    });
                }
            }
            step.push(Action::HaloWait(spot));
            for &ci in members {
                step.push(match kernel_of.get(&ci) {
                    Some(&k) => Action::Compute {
                        kernel: k,
                        region: Region::Remainder(spot),
                    },
                    None => Action::Sparse(sparse_of[&ci]),
                });
            }
        } else {
            step.push(Action::HaloUpdate(spot));
            step.push(Action::HaloWait(spot));
            step.extend(members.iter().map(|&ci| domain_action(ci)));
        }
    }

    Ok(ExecPlan {
        mode: opts.mode,
        fields,
        prologue,
        step,
        spots,
        kernels,
        kernel_cluster,
        sparse_ops,
        sparse_sets,
        pointsets: program.pointsets.clone(),
        tile: opts.tile,
        dt: opts.dt,
        decomposition: decomp.clone(),
        invariants,
        iet: iet.clone(),
    })
}

/// A sparse operation ahead of a stencil in the same group that touches
/// what the stencil reads or writes (or vice versa) prevents reordering.
fn sparse_conflict(iet: &Iet, members: &[usize], kernel_of: &HashMap<usize, usize>) -> bool {
    let clusters = &iet.clusters;
    for (i, &si) in members.iter().enumerate() {
        if kernel_of.contains_key(&si) {
            continue;
        }
        let s = &clusters[si];
        for &ki in &members[i + 1..] {
            if !kernel_of.contains_key(&ki) {
                continue;
            }
            let k = &clusters[ki];
            let touches = |w: &[(Field, i32)], r: &[(Field, i32)]| {
                w.iter().any(|(f, t)| r.iter().any(|(g, u)| f == g && super::cluster::same_buffer(f, *t, *u)))
            };
            let k_all: Vec<(Field, i32)> = k.reads.iter().chain(&k.writes).cloned().collect();
            if touches(&s.writes, &k_all) || touches(&k.writes, &s.reads) {
                return true;
            }
        }
    }
    false
}

/// Per-axis CORE boxes of a rank in DOMAIN-relative coordinates.
pub fn region_spans(layout: &RankLayout, region: Region, spots: &[SpotPlan]) -> Vec<Vec<Span>> {
    use crate::distfield::RegionName;
    let zero = vec![0; layout.ndims()];
    let (name, radius) = match region {
        Region::Domain => (RegionName::Domain, &zero),
        Region::Core(s) => (RegionName::Core, &spots[s].radius),
        Region::Remainder(s) => (RegionName::Owned, &spots[s].radius),
    };
    // radii were checked against every halo at plan time; compare against
    // the buffer halo only for box arithmetic
    let probe = RankLayout {
        halo: layout.halo.iter().zip(radius).map(|(h, r)| (*h).max(*r)).collect(),
        ..layout.clone()
    };
    probe
        .region_boxes(name, radius)
        .expect("radius within halo")
        .into_iter()
        .map(|b| probe.to_domain_relative(&b))
        .collect()
}

impl fmt::Display for ExecPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let iet = &self.iet;
        writeln!(f, "<Callable Kernel mode={}>", self.mode)?;
        for (i, e, _) in &self.invariants {
            writeln!(f, " <Expression r{i} = {e}>")?;
        }
        let write_action = |f: &mut fmt::Formatter<'_>, a: &Action, indent: usize| -> fmt::Result {
            let pad = " ".repeat(indent);
            match a {
                Action::HaloUpdate(s) => {
                    writeln!(f, "{pad}<HaloUpdateList>")?;
                    writeln!(f, "{pad} <HaloUpdateCall({})>", self.spots[*s].label)
                }
                Action::HaloWait(s) => {
                    writeln!(f, "{pad}<HaloWaitList>")?;
                    writeln!(f, "{pad} <HaloWaitCall({})>", self.spots[*s].label)
                }
                Action::Compute { kernel, region } => {
                    let tag = match region {
                        Region::Domain => None,
                        Region::Core(_) => Some("CORE"),
                        Region::Remainder(_) => Some("REMAINDER"),
                    };
                    write_cluster(f, iet, self.kernel_cluster[*kernel], indent, tag)
                }
                Action::Sparse(op) => write_cluster(f, iet, self.sparse_ops[*op].cluster, indent, None),
            }
        };
        for a in &self.prologue {
            write_action(f, a, 1)?;
        }
        writeln!(f, " <[affine,sequential] Iteration time...>")?;
        for a in &self.step {
            write_action(f, a, 2)?;
        }
        Ok(())
    }
}
