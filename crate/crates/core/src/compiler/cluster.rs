use crate::decomposition::Decomposition;
use crate::error::{CompileError, Error};
use crate::symbolics::{apply_cse, Access, Expr, Field, StencilEquation};

use super::Stmt;

/// Shift every spatial index by `+halo`; DOMAIN iteration then starts at
/// local index 0.
pub fn align_accesses(eq: &StencilEquation, halo: &[usize]) -> StencilEquation {
    shift_equation(eq, &|_| halo.to_vec())
}

/// Like [`align_accesses`] with each field shifted by its own halo.
pub fn align_to_halos(eq: &StencilEquation) -> StencilEquation {
    shift_equation(eq, &|f| f.spec().halo.clone())
}

fn shift_access(a: &Access, halo: &[usize]) -> Access {
    let mut out = a.clone();
    for (o, h) in out.offsets.iter_mut().zip(halo) {
        *o += *h as i32;
    }
    out
}

fn shift_equation(eq: &StencilEquation, halo: &dyn Fn(&Field) -> Vec<usize>) -> StencilEquation {
    let map = |a: &Access| shift_access(a, &halo(&a.field));
    StencilEquation {
        lhs: map(&eq.lhs),
        rhs: eq.rhs.map_accesses(&map),
        temporaries: eq
            .temporaries
            .iter()
            .map(|(i, e)| (*i, e.map_accesses(&map)))
            .collect(),
    }
}

/// Exchange needed before a cluster may run: `field` at relative time
/// `time`, `radius` layers per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct HaloRequirement {
    pub field: Field,
    pub time: i32,
    pub radius: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Cluster {
    pub index: usize,
    /// Statement with aligned, CSE-processed equations.
    pub stmt: Stmt,
    pub writes: Vec<(Field, i32)>,
    pub reads: Vec<(Field, i32)>,
    pub requirements: Vec<HaloRequirement>,
}

impl Cluster {
    pub fn label(&self) -> String {
        self.stmt.label()
    }

    pub fn is_stencil(&self) -> bool {
        matches!(self.stmt, Stmt::Eq(_))
    }
}

/// Whether two relative time offsets of `field` name the same buffer.
pub(crate) fn same_buffer(field: &Field, a: i32, b: i32) -> bool {
    let n = field.spec().time_buffers() as i32;
    a.rem_euclid(n) == b.rem_euclid(n)
}

fn radius_of(reads: &[&Access], field: &Field, time: i32) -> Vec<usize> {
    let mut r = vec![0usize; field.ndims()];
    for a in reads.iter().filter(|a| &a.field == field && a.time == time) {
        for (ra, o) in r.iter_mut().zip(&a.offsets) {
            *ra = (*ra).max(o.unsigned_abs() as usize);
        }
    }
    r
}

/// One cluster per statement, each carrying the exchanges its reads need.
/// Statements are given unaligned; alignment and CSE happen here.
pub fn build_clusters(stmts: &[Stmt], decomp: &Decomposition) -> Result<Vec<Cluster>, Error> {
    let distributed = decomp.nranks() > 1;
    let mut clusters = Vec::with_capacity(stmts.len());
    for (index, stmt) in stmts.iter().enumerate() {
        let mut requirements = Vec::new();
        let aligned = match stmt {
            Stmt::Eq(eq) => {
                eq.validate().map_err(CompileError::from)?;
                let reads = eq.reads();
                for (f, t) in stmt.reads() {
                    let radius = radius_of(&reads, &f, t);
                    if distributed && radius.iter().any(|&r| r > 0) {
                        requirements.push(HaloRequirement { field: f, time: t, radius });
                    }
                }
                Stmt::Eq(apply_cse(&align_to_halos(eq)))
            }
            Stmt::Interpolate { source, .. } => {
                if distributed {
                    requirements.push(HaloRequirement {
                        field: source.field.clone(),
                        time: source.time,
                        radius: vec![1; source.field.ndims()],
                    });
                }
                stmt.clone()
            }
            Stmt::Inject { scale, .. } => {
                if scale.accesses().iter().any(|a| !a.is_centered()) {
                    return Err(CompileError::NonPointwiseScale(scale.to_string()).into());
                }
                stmt.clone()
            }
        };
        clusters.push(Cluster {
            index,
            writes: stmt.writes(),
            reads: stmt.reads(),
            stmt: aligned,
            requirements,
        });
    }
    check_cycles(&clusters)?;
    Ok(clusters)
}

fn check_cycles(clusters: &[Cluster]) -> Result<(), CompileError> {
    for (i, c) in clusters.iter().enumerate() {
        for (f, t) in &c.reads {
            for later in &clusters[i + 1..] {
                if later.writes.iter().any(|(g, s)| g == f && same_buffer(f, *s, *t)) {
                    let buffer = Access::new(f.clone(), *t, vec![0; f.ndims()]);
                    return Err(CompileError::CyclicDependency {
                        reader: c.label(),
                        buffer: Expr::Access(buffer).to_string(),
                    });
                }
            }
        }
    }
    Ok(())
}
