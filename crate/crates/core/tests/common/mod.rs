#![allow(dead_code)]

use stencil_dmp::compiler::{compile, CompileOptions, ExecPlan, Mode, Program};
use stencil_dmp::decomposition::{default_topology, Decomposition, Topology};
use stencil_dmp::distfield::LocalField;
use stencil_dmp::kernels::KernelDef;
use stencil_dmp::runtime::{run_plan, ExecOptions, RunOutput, SpawnOptions};

pub fn decomp(shape: &[usize], ranks: usize, topo: Option<&[usize]>) -> Decomposition {
    let t = match topo {
        Some(d) => Topology::with_ranks(d, ranks).unwrap(),
        None => default_topology(ranks, shape.len()),
    };
    Decomposition::new(shape, t).unwrap()
}

pub fn plan(program: &Program, d: &Decomposition, mode: Mode, dt: f64, optimize: bool) -> ExecPlan {
    let mut o = CompileOptions::new(mode, dt);
    o.optimize = optimize;
    compile(program, d, &o).unwrap()
}

pub fn run_def(def: &KernelDef, d: &Decomposition, mode: Mode, steps: usize, seed: Option<u64>) -> RunOutput {
    let p = plan(&def.program, d, mode, def.dt, true);
    run_with(def, &p, steps, seed, &ExecOptions::default())
}

pub fn run_with(def: &KernelDef, p: &ExecPlan, steps: usize, seed: Option<u64>, opts: &ExecOptions) -> RunOutput {
    let init = |_: usize, f: &mut LocalField| def.init_field(f, seed);
    run_plan(p, steps, &init, &SpawnOptions::default(), opts).unwrap()
}

/// Index of the first rank with a neighbour on every side.
pub fn interior_rank(d: &Decomposition) -> usize {
    (0..d.nranks())
        .find(|&r| d.neighbor_sides(r).iter().all(|s| s[0] && s[1]))
        .expect("topology has an interior rank")
}

/// Sub-block of a row-major global array.
pub fn block(global: &[f64], shape: &[usize], lo: &[usize], hi: &[usize]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut idx = lo.to_vec();
    loop {
        let lin = idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i);
        out.push(global[lin]);
        let mut a = shape.len();
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < hi[a] {
                break;
            }
            idx[a] = lo[a];
        }
    }
}
