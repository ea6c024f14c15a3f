use std::collections::HashMap;
use std::fmt;

use crate::error::Error;
use crate::symbolics::{Expr, Field, StencilEquation, AXIS_NAMES};

use super::cluster::{same_buffer, Cluster};
use super::Stmt;

/// Which buffer of a field a HaloSpot refreshes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimeSel {
    /// Relative to the current step.
    Offset(i32),
    /// A fixed buffer; used for exchanges hoisted out of the time loop.
    Buffer(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpotEntry {
    pub field: Field,
    pub time: TimeSel,
    pub radius: Vec<usize>,
}

impl SpotEntry {
    fn same_target(&self, other: &SpotEntry) -> bool {
        self.field == other.field
            && match (self.time, other.time) {
                (TimeSel::Offset(a), TimeSel::Offset(b)) => same_buffer(&self.field, a, b),
                (a, b) => a == b,
            }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HaloSpot {
    pub entries: Vec<SpotEntry>,
}

impl HaloSpot {
    /// Add an entry, widening the radius of an existing one on the same buffer.
    pub fn merge_entry(&mut self, e: SpotEntry) {
        if let Some(cur) = self.entries.iter_mut().find(|c| c.same_target(&e)) {
            for (r, n) in cur.radius.iter_mut().zip(&e.radius) {
                *r = (*r).max(*n);
            }
        } else {
            self.entries.push(e);
        }
    }

    pub fn field_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.iter().any(|n| n == e.field.name()) {
                out.push(e.field.name().to_string());
            }
        }
        out
    }
}

impl fmt::Display for HaloSpot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HaloSpot({})", self.field_names().join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum IetNode {
    Spot(HaloSpot),
    Cluster(usize),
}

/// Equation after invariant hoisting. `Temp(i)` with `i` below the number of
/// invariants names a plan-time scalar; larger ids are per-point temporaries.
#[derive(Clone, Debug, PartialEq)]
pub struct LoweredEq {
    pub lhs: crate::symbolics::Access,
    pub temps: Vec<(usize, Expr)>,
    pub rhs: Expr,
}

const POINT_BASE: usize = 1 << 40;

struct Hoister {
    invariants: Vec<Expr>,
}

struct LocalTemps<'a> {
    defs: HashMap<usize, &'a Expr>,
    map: HashMap<usize, Expr>,
    pending: Vec<(usize, Expr)>,
    next_point: &'a mut usize,
}

impl Hoister {
    fn is_invariant(&self, e: &Expr, local: &LocalTemps) -> bool {
        let mut ok = true;
        e.walk(&mut |n| match n {
            Expr::Access(_) => ok = false,
            Expr::Temp(i) => {
                if let Some(def) = local.defs.get(i) {
                    if !self.is_invariant(def, local) {
                        ok = false;
                    }
                }
            }
            _ => {}
        });
        ok
    }

    fn inline(&self, e: &Expr, local: &LocalTemps) -> Expr {
        e.transform(&mut |n| match n {
            Expr::Temp(i) => match local.defs.get(&i) {
                Some(def) => self.inline(def, local),
                None => Expr::Temp(i),
            },
            other => other,
        })
    }

    fn invariant_id(&mut self, e: Expr) -> usize {
        match self.invariants.iter().position(|x| *x == e) {
            Some(i) => i,
            None => {
                self.invariants.push(e);
                self.invariants.len() - 1
            }
        }
    }

    fn rewrite(&mut self, e: &Expr, local: &mut LocalTemps) -> Expr {
        let hoistable = match e {
            Expr::Num(_) | Expr::Sym(_) => false,
            Expr::Temp(_) => self.is_invariant(e, local),
            _ => self.is_invariant(e, local),
        };
        if hoistable {
            let full = self.inline(e, local);
            if full.is_leaf() {
                return full;
            }
            return Expr::Temp(self.invariant_id(full));
        }
        match e {
            Expr::Temp(i) => {
                if let Some(m) = local.map.get(i) {
                    return m.clone();
                }
                let def = local.defs[i];
                let body = self.rewrite(def, local);
                let id = POINT_BASE + *local.next_point;
                *local.next_point += 1;
                local.pending.push((id, body));
                local.map.insert(*i, Expr::Temp(id));
                Expr::Temp(id)
            }
            Expr::Add(v) => Expr::Add(v.iter().map(|c| self.rewrite(c, local)).collect()),
            Expr::Mul(v) => Expr::Mul(v.iter().map(|c| self.rewrite(c, local)).collect()),
            Expr::Neg(c) => Expr::Neg(Box::new(self.rewrite(c, local))),
            Expr::Recip(c) => Expr::Recip(Box::new(self.rewrite(c, local))),
            Expr::Call(m, c) => Expr::Call(*m, Box::new(self.rewrite(c, local))),
            leaf => leaf.clone(),
        }
    }
}

/// Split CSE temporaries and maximal access-free subtrees into plan-time
/// invariants (numbered in order of first reference across all equations)
/// and per-point temporaries (numbered after every invariant).
pub fn hoist_invariants(eqs: &[&StencilEquation]) -> (Vec<(usize, Expr)>, Vec<LoweredEq>) {
    let mut h = Hoister { invariants: Vec::new() };
    let mut next_point = 0usize;
    let mut raw = Vec::new();
    for eq in eqs {
        let mut local = LocalTemps {
            defs: eq.temporaries.iter().map(|(i, e)| (*i, e)).collect(),
            map: HashMap::new(),
            pending: Vec::new(),
            next_point: &mut next_point,
        };
        let rhs = h.rewrite(&eq.rhs, &mut local);
        raw.push((eq.lhs.clone(), local.pending, rhs));
    }
    let ninv = h.invariants.len();
    let renumber = |e: &Expr| {
        e.transform(&mut |n| match n {
            Expr::Temp(i) if i >= POINT_BASE => Expr::Temp(ninv + i - POINT_BASE),
            other => other,
        })
    };
    let lowered = raw
        .into_iter()
        .map(|(lhs, temps, rhs)| LoweredEq {
            lhs,
            temps: temps
                .iter()
                .map(|(i, e)| (ninv + i - POINT_BASE, renumber(e)))
                .collect(),
            rhs: renumber(&rhs),
        })
        .collect();
    (h.invariants.into_iter().enumerate().collect(), lowered)
}

fn cluster_equations(clusters: &[Cluster]) -> Vec<&StencilEquation> {
    clusters
        .iter()
        .filter_map(|c| match &c.stmt {
            Stmt::Eq(eq) => Some(eq),
            _ => None,
        })
        .collect()
}

/// Iteration/expression tree with HaloSpots.
#[derive(Clone, Debug)]
pub struct Iet {
    pub clusters: Vec<Cluster>,
    pub ndims: usize,
    pub invariants: Vec<(usize, Expr)>,
    /// Per cluster; `None` for sparse operations.
    pub lowered: Vec<Option<LoweredEq>>,
    /// Exchanges executed once before the time loop.
    pub prologue: Vec<HaloSpot>,
    pub body: Vec<IetNode>,
}

impl Iet {
    pub fn spots(&self) -> impl Iterator<Item = &HaloSpot> {
        self.prologue.iter().chain(self.body.iter().filter_map(|n| match n {
            IetNode::Spot(s) => Some(s),
            IetNode::Cluster(_) => None,
        }))
    }
}

/// Place one HaloSpot immediately before every cluster with requirements.
pub fn lower_to_iet(clusters: &[Cluster]) -> Result<Iet, Error> {
    let ndims = clusters
        .iter()
        .flat_map(|c| c.writes.iter().chain(&c.reads))
        .map(|(f, _)| f.ndims())
        .next()
        .unwrap_or(0);
    let (invariants, lowered_eqs) = hoist_invariants(&cluster_equations(clusters));
    let mut it = lowered_eqs.into_iter();
    let lowered = clusters
        .iter()
        .map(|c| if c.is_stencil() { it.next() } else { None })
        .collect();
    let mut body = Vec::new();
    for c in clusters {
        if !c.requirements.is_empty() {
            let mut spot = HaloSpot::default();
            for r in &c.requirements {
                spot.merge_entry(SpotEntry {
                    field: r.field.clone(),
                    time: TimeSel::Offset(r.time),
                    radius: r.radius.clone(),
                });
            }
            body.push(IetNode::Spot(spot));
        }
        body.push(IetNode::Cluster(c.index));
    }
    Ok(Iet {
        clusters: clusters.to_vec(),
        ndims,
        invariants,
        lowered,
        prologue: Vec::new(),
        body,
    })
}

/// Optimize HaloSpot placement.
///
/// Entries on fields never written in the loop move to a single spot before
/// the loop. Every other entry moves to the earliest preceding spot with no
/// intervening write of its buffer; spots left empty disappear.
pub fn optimize_halospots(iet: &Iet) -> Iet {
    let clusters = &iet.clusters;
    let written = |f: &Field| clusters.iter().any(|c| c.writes.iter().any(|(g, _)| g == f));
    let writes_buffer = |ci: usize, e: &SpotEntry| match e.time {
        TimeSel::Offset(t) => clusters[ci]
            .writes
            .iter()
            .any(|(g, s)| *g == e.field && same_buffer(g, *s, t)),
        TimeSel::Buffer(_) => clusters[ci].writes.iter().any(|(g, _)| *g == e.field),
    };

    let mut prologue = iet.prologue.first().cloned().unwrap_or_default();
    let mut body: Vec<IetNode> = Vec::new();
    for node in &iet.body {
        match node {
            IetNode::Cluster(i) => body.push(IetNode::Cluster(*i)),
            IetNode::Spot(spot) => {
                let mut rest = HaloSpot::default();
                for e in &spot.entries {
                    if !written(&e.field) {
                        let nb = e.field.spec().time_buffers();
                        for b in 0..nb {
                            prologue.merge_entry(SpotEntry {
                                field: e.field.clone(),
                                time: if nb == 1 { TimeSel::Buffer(0) } else { TimeSel::Buffer(b) },
                                radius: e.radius.clone(),
                            });
                        }
                        continue;
                    }
                    // walk back to the earliest spot not separated by a write
                    let mut target = None;
                    for (pos, prev) in body.iter().enumerate().rev() {
                        match prev {
                            IetNode::Cluster(ci) if writes_buffer(*ci, e) => break,
                            IetNode::Spot(_) => target = Some(pos),
                            IetNode::Cluster(_) => {}
                        }
                    }
                    match target {
                        Some(pos) => {
                            if let IetNode::Spot(s) = &mut body[pos] {
                                s.merge_entry(e.clone());
                            }
                        }
                        None => rest.merge_entry(e.clone()),
                    }
                }
                if !rest.entries.is_empty() {
                    body.push(IetNode::Spot(rest));
                }
            }
        }
    }
    let mut out = iet.clone();
    out.prologue = if prologue.entries.is_empty() { Vec::new() } else { vec![prologue] };
    out.body = body;
    out
}

fn loop_header(axis: usize, ndims: usize) -> String {
    if axis + 1 == ndims {
        format!("<[affine,parallel,vector-dim] Iteration {}...>", AXIS_NAMES[axis])
    } else {
        format!("<[affine,parallel] Iteration {}...>", AXIS_NAMES[axis])
    }
}

pub(crate) fn write_cluster(
    f: &mut fmt::Formatter<'_>,
    iet: &Iet,
    ci: usize,
    indent: usize,
    region: Option<&str>,
) -> fmt::Result {
    let pad = |n: usize| " ".repeat(n);
    match (&iet.clusters[ci].stmt, &iet.lowered[ci]) {
        (Stmt::Eq(_), Some(l)) => {
            for axis in 0..iet.ndims {
                let mut h = loop_header(axis, iet.ndims);
                if let (0, Some(r)) = (axis, region) {
                    h = h.replace("...>", &format!("... {r}>"));
                }
                writeln!(f, "{}{}", pad(indent + axis), h)?;
            }
            let inner = pad(indent + iet.ndims);
            for (i, e) in &l.temps {
                writeln!(f, "{inner}<Expression r{i} = {e}>")?;
            }
            writeln!(f, "{inner}<Expression {} = {}>", l.lhs, l.rhs)
        }
        (Stmt::Inject { target, points, scale }, _) => {
            writeln!(f, "{}<SparseInject {points} -> {target} scale {scale}>", pad(indent))
        }
        (Stmt::Interpolate { source, points }, _) => {
            writeln!(f, "{}<SparseInterpolate {source} -> {points}>", pad(indent))
        }
        (Stmt::Eq(_), None) => Ok(()),
    }
}

impl fmt::Display for Iet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "<Callable Kernel>")?;
        for (i, e) in &self.invariants {
            writeln!(f, " <Expression r{i} = {e}>")?;
        }
        for s in &self.prologue {
            writeln!(f, " <{s}>")?;
        }
        writeln!(f, " <[affine,sequential] Iteration time...>")?;
        for node in &self.body {
            match node {
                IetNode::Spot(s) => writeln!(f, "  <{s}>")?,
                IetNode::Cluster(ci) => write_cluster(f, self, *ci, 2, None)?,
            }
        }
        Ok(())
    }
}

/// Schedule tree: loop placement with Halo nodes ahead of dependent nests.
#[derive(Clone, Debug)]
pub struct ScheduleTree {
    lines: Vec<String>,
}

impl fmt::Display for ScheduleTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

pub fn build_schedule_tree(clusters: &[Cluster]) -> ScheduleTree {
    let iet = lower_to_iet(clusters).expect("clusters are valid");
    let eqs = |n: usize| format!("[{}]", vec!["Eq"; n].join(","));
    let node = |depth: usize, text: &str| format!("{}|-- {text}", "    ".repeat(depth));
    let mut lines = Vec::new();
    if !iet.invariants.is_empty() {
        lines.push(node(0, &eqs(iet.invariants.len())));
    }
    lines.push(node(0, "time++"));
    for c in clusters {
        let mut depth = 1;
        if !c.requirements.is_empty() {
            lines.push(node(depth, "<Halo>"));
            depth += 1;
        }
        match (&c.stmt, &iet.lowered[c.index]) {
            (Stmt::Eq(_), Some(l)) => {
                for axis in 0..iet.ndims {
                    lines.push(node(depth + axis, &format!("{}++", AXIS_NAMES[axis])));
                }
                lines.push(node(depth + iet.ndims, &eqs(l.temps.len() + 1)));
            }
            (Stmt::Inject { points, .. }, _) => lines.push(node(depth, &format!("[Inject({points})]"))),
            (Stmt::Interpolate { points, .. }, _) => {
                lines.push(node(depth, &format!("[Interpolate({points})]")))
            }
            _ => {}
        }
    }
    ScheduleTree { lines }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::build_clusters;
    use crate::decomposition::{Decomposition, Topology};
    use crate::symbolics::{solve_forward, Eq, GridSpec};

    fn diffusion_clusters() -> Vec<Cluster> {
        let g = GridSpec::new(&[8, 8], &[2.0, 2.0]).unwrap();
        let u = Field::time_function("u", &g, 2, 1).unwrap();
        let st = solve_forward(&Eq::new(u.dt(), u.laplace()), &u.forward_access()).unwrap();
        let d = Decomposition::new(&[8, 8], Topology::new(&[2, 2]).unwrap()).unwrap();
        build_clusters(&[Stmt::Eq(st)], &d).unwrap()
    }

    #[test]
    fn invariants_are_named_first() {
        let iet = lower_to_iet(&diffusion_clusters()).unwrap();
        let inv: Vec<String> = iet.invariants.iter().map(|(_, e)| e.to_string()).collect();
        assert_eq!(inv, vec!["1/dt", "1/(h_x*h_x)", "1/(h_y*h_y)"]);
        let l = iet.lowered[0].as_ref().unwrap();
        assert_eq!(l.temps.len(), 1);
        assert_eq!(l.temps[0].0, 3);
        assert_eq!(l.temps[0].1.to_string(), "-2*u[t0, x + 2, y + 2]");
        assert!(l.rhs.to_string().starts_with("dt*(r0*u[t0, x + 2, y + 2] + r1*r3"), "{}", l.rhs);
    }

    #[test]
    fn schedule_tree_shape() {
        let t = build_schedule_tree(&diffusion_clusters()).to_string();
        let expected = "|-- [Eq,Eq,Eq]\n|-- time++\n    |-- <Halo>\n        |-- x++\n            |-- y++\n                |-- [Eq,Eq]\n";
        assert_eq!(t, expected);
    }
}
