//! Benchmark equations expressed through the symbolic layer.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compiler::{Program, Stmt};
use crate::decomposition::Span;
use crate::distfield::{GlobalValue, LocalField};
use crate::error::{ConfigError, Error};
use crate::sparse::{ricker, PointSet};
use crate::symbolics::{fd_coefficients, rational_to_f64, solve_forward, Derivative, Eq, Expr, Field, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Diffusion,
    Acoustic,
    Elastic,
    Tti,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [KernelKind::Diffusion, KernelKind::Acoustic, KernelKind::Elastic, KernelKind::Tti];
}

impl FromStr for KernelKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "diffusion" => Ok(KernelKind::Diffusion),
            "acoustic" => Ok(KernelKind::Acoustic),
            "elastic" => Ok(KernelKind::Elastic),
            "tti" => Ok(KernelKind::Tti),
            _ => Err(ConfigError::UnknownKernel(s.to_string())),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Diffusion => "diffusion",
            KernelKind::Acoustic => "acoustic",
            KernelKind::Elastic => "elastic",
            KernelKind::Tti => "tti",
        })
    }
}

/// Initializer of a static coefficient field.
#[derive(Clone, Debug, PartialEq)]
pub enum Material {
    Constant(f64),
    /// Equal-thickness bands along the last axis, top to bottom.
    Layered(Vec<f64>),
    /// Uniform in `[lo, hi)`, drawn from the run seed.
    Random { lo: f64, hi: f64 },
}

impl Material {
    pub fn max(&self) -> f64 {
        match self {
            Material::Constant(v) => *v,
            Material::Layered(v) => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Material::Random { hi, .. } => *hi,
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Material::Constant(v) => *v,
            Material::Layered(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
            Material::Random { lo, .. } => *lo,
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Material {
        match self {
            Material::Constant(v) => Material::Constant(f(*v)),
            Material::Layered(v) => Material::Layered(v.iter().map(|&x| f(x)).collect()),
            Material::Random { lo, hi } => {
                let (a, b) = (f(*lo), f(*hi));
                Material::Random { lo: a.min(b), hi: a.max(b) }
            }
        }
    }
}

/// A benchmark model ready to compile.
#[derive(Clone, Debug)]
pub struct KernelDef {
    pub kind: KernelKind,
    pub grid: GridSpec,
    pub space_order: usize,
    pub program: Program,
    pub dt: f64,
    /// Fields advanced in time (throughput counts their DOMAIN points).
    pub evolving: Vec<Field>,
    /// Static fields with their initializers.
    pub materials: Vec<(Field, Material)>,
    /// Static fields written inside the loop.
    pub scratch: Vec<Field>,
    pub uses_source: bool,
    pub uses_receivers: bool,
    /// Distinct arrays touched per step.
    pub working_set: usize,
}

fn check_dims(kind: KernelKind, grid: &GridSpec, allowed: &[usize]) -> Result<(), Error> {
    if allowed.contains(&grid.ndims()) {
        return Ok(());
    }
    Err(ConfigError::KernelDimensionality {
        kernel: kind.to_string(),
        expected: allowed[allowed.len() - 1],
        got: grid.ndims(),
    }
    .into())
}

/// Sum of absolute stencil weights for a derivative order.
fn weight_sum(order: usize, so: usize) -> Result<f64, Error> {
    Ok(fd_coefficients(order, so)?.iter().map(|c| rational_to_f64(c).abs()).sum())
}

fn seed_for(seed: u64, name: &str) -> u64 {
    // FNV-1a over the field name
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Row-major global array of uniform values in `[lo, hi)`.
pub fn random_global(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn material_global(m: &Material, shape: &[usize], seed: u64) -> Vec<f64> {
    let n: usize = shape.iter().product();
    match m {
        Material::Constant(v) => vec![*v; n],
        Material::Random { lo, hi } if lo == hi => vec![*lo; n],
        Material::Random { lo, hi } => random_global(shape, seed, *lo, *hi),
        Material::Layered(bands) => {
            let last = shape[shape.len() - 1];
            (0..n)
                .map(|i| {
                    let k = i % last;
                    bands[(k * bands.len() / last).min(bands.len() - 1)]
                })
                .collect()
        }
    }
}

impl KernelDef {
    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    /// Every field of the program, static ones included.
    pub fn fields(&self) -> Vec<Field> {
        self.program.fields()
    }

    /// Fill one rank's piece of `field`. Evolving fields get uniform values
    /// in `[-1, 1)` on every buffer when `seed` is set and stay zero
    /// otherwise; static fields follow their material.
    pub fn init_field(&self, field: &mut LocalField, seed: Option<u64>) -> Result<(), Error> {
        let f = field.field().clone();
        let shape = self.grid.shape().to_vec();
        let all: Vec<Span> = shape.iter().map(|&n| Span::new(0, n)).collect();
        if let Some((_, m)) = self.materials.iter().find(|(g, _)| *g == f) {
            let values = material_global(m, &shape, seed_for(seed.unwrap_or(0), f.name()));
            field.write_global(0, &all, GlobalValue::Array(&values))?;
            return Ok(());
        }
        if let (Some(s), true) = (seed, self.evolving.contains(&f)) {
            for b in 0..field.nbuffers() {
                let values = random_global(&shape, seed_for(s, &format!("{}#{b}", f.name())), -1.0, 1.0);
                field.write_global(b, &all, GlobalValue::Array(&values))?;
            }
        }
        Ok(())
    }
}

/// `u.dt = u.laplace`.
pub fn diffusion_kernel(grid: &GridSpec, so: usize) -> Result<KernelDef, Error> {
    check_dims(KernelKind::Diffusion, grid, &[2, 3])?;
    let u = Field::time_function("u", grid, so, 1)?;
    let eq = solve_forward(&Eq::new(u.dt(), u.laplace()), &u.forward_access())?;
    // forward Euler: dt * max|eig(laplace)| <= 2, with half of that margin
    let s = weight_sum(2, so)?;
    let rate: f64 = grid.spacing().iter().map(|h| s / (h * h)).sum();
    Ok(KernelDef {
        kind: KernelKind::Diffusion,
        grid: grid.clone(),
        space_order: so,
        program: Program::new(grid, vec![Stmt::Eq(eq)]),
        dt: 1.0 / rate,
        evolving: vec![u],
        materials: Vec::new(),
        scratch: Vec::new(),
        uses_source: false,
        uses_receivers: false,
        working_set: 1,
    })
}

/// Largest stable time step of the acoustic update for wave speed `vmax`.
pub fn acoustic_dt_bound(grid: &GridSpec, so: usize, vmax: f64) -> Result<f64, Error> {
    let s = weight_sum(2, so)?;
    let q: f64 = grid.spacing().iter().map(|h| s / (h * h)).sum();
    Ok(2.0 / (vmax * q.sqrt()))
}

/// Acoustic setup options.
#[derive(Clone, Debug)]
pub struct AcousticSetup {
    pub velocity: Material,
    /// `None` takes half the stability bound.
    pub dt: Option<f64>,
    pub source: Option<Vec<f64>>,
    /// Receiver coordinates; `None` places a line through the centre.
    pub receivers: Option<Vec<Vec<f64>>>,
    /// Signal length in steps.
    pub nsteps: usize,
}

impl Default for AcousticSetup {
    fn default() -> Self {
        Self {
            velocity: Material::Constant(1.5),
            dt: None,
            source: None,
            receivers: None,
            nsteps: 20,
        }
    }
}

/// Centre of the physical domain.
pub fn grid_center(grid: &GridSpec) -> Vec<f64> {
    grid.extent().iter().map(|e| e / 2.0).collect()
}

/// `m * u.dt2 - u.laplace = 0` with `m = 1/v^2`, a Ricker source injected
/// into `u[t+1]` and receivers interpolated from `u[t]`.
pub fn acoustic_kernel(grid: &GridSpec, so: usize, setup: &AcousticSetup) -> Result<KernelDef, Error> {
    check_dims(KernelKind::Acoustic, grid, &[2, 3])?;
    if !(setup.velocity.min() > 0.0) {
        return Err(ConfigError::Invalid("wave speed must be positive".into()).into());
    }
    let bound = acoustic_dt_bound(grid, so, setup.velocity.max())?;
    let dt = setup.dt.unwrap_or(0.5 * bound);
    if !(dt > 0.0 && dt <= bound) {
        return Err(ConfigError::UnstableTimeStep { dt, bound }.into());
    }
    let u = Field::time_function("u", grid, so, 2)?;
    let m = Field::function("m", grid, so)?;
    let pde = Eq::new(Expr::mul2(m.center(), u.dt2()) - u.laplace(), Expr::zero());
    let update = solve_forward(&pde, &u.forward_access())?;

    let center = grid_center(grid);
    let src = setup.source.clone().unwrap_or_else(|| center.clone());
    let f0 = 1.0 / (20.0 * dt);
    let signal = (0..setup.nsteps)
        .map(|n| ricker(f0, n as f64 * dt, 1.0 / f0).map(|a| vec![a]))
        .collect::<Result<Vec<_>, _>>()?;
    let receivers = setup.receivers.clone().unwrap_or_else(|| {
        let n = grid.shape()[0].min(16);
        let h = grid.spacing();
        (0..n)
            .map(|i| {
                let mut p = center.clone();
                p[0] = (i as f64 + 0.37) * grid.extent()[0] / n as f64;
                p[0] = p[0].min(grid.extent()[0] - 0.5 * h[0]);
                if p.len() > 1 {
                    p[1] += 0.25 * h[1];
                }
                p
            })
            .collect()
    });

    let stmts = vec![
        Stmt::Interpolate {
            source: crate::symbolics::Access::new(u.clone(), 0, vec![0; grid.ndims()]),
            points: "rec".into(),
        },
        Stmt::Eq(update),
        Stmt::Inject {
            target: u.forward_access(),
            points: "src".into(),
            scale: Expr::mul2(Expr::dt(), Expr::dt()),
        },
    ];
    let program = Program::new(grid, stmts)
        .with_pointset(PointSet::new("src", vec![src]).with_signal(signal))
        .with_pointset(PointSet::new("rec", receivers));
    let slowness = setup.velocity.map(|v| 1.0 / (v * v));
    Ok(KernelDef {
        kind: KernelKind::Acoustic,
        grid: grid.clone(),
        space_order: so,
        program,
        dt,
        evolving: vec![u],
        materials: vec![(m, slowness)],
        scratch: Vec::new(),
        uses_source: true,
        uses_receivers: true,
        working_set: 5,
    })
}

const VEL: [&str; 3] = ["vx", "vy", "vz"];
const AX: [&str; 3] = ["x", "y", "z"];

/// Collocated velocity-stress system with buoyancy `b` and Lame `lam`, `mu`.
pub fn elastic_kernel(grid: &GridSpec, so: usize) -> Result<KernelDef, Error> {
    check_dims(KernelKind::Elastic, grid, &[2, 3])?;
    let nd = grid.ndims();
    let (lam_v, mu_v, b_v): (f64, f64, f64) = (2.0, 1.0, 1.0);
    let v: Vec<Field> = (0..nd)
        .map(|i| Field::time_function(VEL[i], grid, so, 1))
        .collect::<Result<_, _>>()?;
    // symmetric stress, upper triangle
    let mut tau: Vec<Vec<Option<Field>>> = vec![vec![None; nd]; nd];
    let mut tau_list = Vec::new();
    for i in 0..nd {
        for j in i..nd {
            let f = Field::time_function(&format!("t{}{}", AX[i], AX[j]), grid, so, 1)?;
            tau[i][j] = Some(f.clone());
            tau_list.push((i, j, f));
        }
    }
    let t = |i: usize, j: usize| tau[i.min(j)][i.max(j)].clone().expect("upper triangle");
    let b = Field::function("b", grid, so)?;
    let lam = Field::function("lam", grid, so)?;
    let mu = Field::function("mu", grid, so)?;
    let d1 = |e: Expr, axis: usize| Derivative::space(e, axis, 1, so);

    let mut stmts = Vec::new();
    for (i, vi) in v.iter().enumerate() {
        let div = Expr::Add((0..nd).map(|j| d1(t(i, j).center(), j)).collect());
        let eq = solve_forward(&Eq::new(vi.dt(), Expr::mul2(b.center(), div)), &vi.forward_access())?;
        stmts.push(Stmt::Eq(eq));
    }
    for (i, j, f) in &tau_list {
        let (i, j) = (*i, *j);
        let rhs = if i == j {
            let tr = Expr::Add((0..nd).map(|k| d1(v[k].forward(), k)).collect());
            Expr::add2(
                Expr::mul2(lam.center(), tr),
                Expr::Mul(vec![Expr::int(2), mu.center(), d1(v[i].forward(), i)]),
            )
        } else {
            Expr::mul2(mu.center(), Expr::add2(d1(v[i].forward(), j), d1(v[j].forward(), i)))
        };
        let eq = solve_forward(&Eq::new(f.dt(), rhs), &f.forward_access())?;
        stmts.push(Stmt::Eq(eq));
    }
    let s1 = weight_sum(1, so)?;
    let hmin = grid.spacing().iter().copied().fold(f64::INFINITY, f64::min);
    let vp = ((lam_v + 2.0 * mu_v) * b_v).sqrt();
    let dt = 0.5 * hmin / (vp * s1 * (nd as f64).sqrt());
    let mut evolving = v.clone();
    evolving.extend(tau_list.iter().map(|(_, _, f)| f.clone()));
    let working_set = evolving.len() + 3;
    Ok(KernelDef {
        kind: KernelKind::Elastic,
        grid: grid.clone(),
        space_order: so,
        program: Program::new(grid, stmts),
        dt,
        evolving,
        materials: vec![
            (b, Material::Constant(b_v)),
            (lam, Material::Constant(lam_v)),
            (mu, Material::Constant(mu_v)),
        ],
        scratch: Vec::new(),
        uses_source: false,
        uses_receivers: false,
        working_set,
    })
}

/// Rotated-axis coefficients `(cos t cos p, cos t sin p, -sin t)`.
pub fn tti_coefficients(theta: &Field, phi: &Field) -> [Expr; 3] {
    let (th, ph) = (theta.center(), phi.center());
    [
        Expr::mul2(th.clone().cos(), ph.clone().cos()),
        Expr::mul2(th.clone().cos(), ph.sin()),
        -th.sin(),
    ]
}

/// TTI setup: tilt and azimuth materials.
#[derive(Clone, Debug)]
pub struct TtiSetup {
    pub theta: Material,
    pub phi: Material,
}

impl Default for TtiSetup {
    fn default() -> Self {
        Self {
            theta: Material::Random { lo: 0.0, hi: PI / 3.0 },
            phi: Material::Random { lo: 0.0, hi: PI / 2.0 },
        }
    }
}

/// Rotated second derivative in two passes:
/// `w = D p` with `D = sum_j c_j d_j`, then `p.dt = sum_i d_i(c_i w)`.
pub fn tti_kernel(grid: &GridSpec, so: usize, setup: &TtiSetup) -> Result<KernelDef, Error> {
    check_dims(KernelKind::Tti, grid, &[3])?;
    let p = Field::time_function("p", grid, so, 1)?;
    let w = Field::function("w", grid, so)?;
    let theta = Field::function("theta", grid, so)?;
    let phi = Field::function("phi", grid, so)?;
    let c = tti_coefficients(&theta, &phi);

    let dp = Expr::Add((0..3).map(|j| Expr::mul2(c[j].clone(), p.d(j, 1))).collect());
    let w_eq = crate::symbolics::StencilEquation::new(
        crate::symbolics::Access::new(w.clone(), 0, vec![0; 3]),
        crate::symbolics::discretize_expr(&dp)?,
    )?;
    let g = Expr::Add(
        (0..3)
            .map(|i| Derivative::space(Expr::mul2(c[i].clone(), w.center()), i, 1, so))
            .collect(),
    );
    let p_eq = solve_forward(&Eq::new(p.dt(), g), &p.forward_access())?;

    let s1 = weight_sum(1, so)?;
    let hmin = grid.spacing().iter().copied().fold(f64::INFINITY, f64::min);
    // |c| = 1, so the spectrum of the composed operator is below (sqrt(3) s1 / h)^2
    let dt = 0.5 * hmin * hmin / (3.0 * s1 * s1);
    Ok(KernelDef {
        kind: KernelKind::Tti,
        grid: grid.clone(),
        space_order: so,
        program: Program::new(grid, vec![Stmt::Eq(w_eq), Stmt::Eq(p_eq)]),
        dt,
        evolving: vec![p],
        materials: vec![(theta, setup.theta.clone()), (phi, setup.phi.clone())],
        scratch: vec![w],
        uses_source: false,
        uses_receivers: false,
        working_set: 4,
    })
}

/// Default setup of a kernel by kind.
pub fn build_kernel(kind: KernelKind, grid: &GridSpec, so: usize) -> Result<KernelDef, Error> {
    match kind {
        KernelKind::Diffusion => diffusion_kernel(grid, so),
        KernelKind::Acoustic => acoustic_kernel(grid, so, &AcousticSetup::default()),
        KernelKind::Elastic => elastic_kernel(grid, so),
        KernelKind::Tti => tti_kernel(grid, so, &TtiSetup::default()),
    }
}
