mod common;

use stencil_dmp::compiler::{compile, CompileOptions, Mode, Program, Stmt};
use stencil_dmp::error::CompileError;
use stencil_dmp::kernels::{acoustic_kernel, diffusion_kernel, AcousticSetup};
use stencil_dmp::symbolics::{solve_forward, Eq, Field, GridSpec};
use stencil_dmp::Error;

use common::{decomp, plan, run_def};

fn positions(text: &str, needles: &[&str]) -> Vec<usize> {
    needles
        .iter()
        .map(|n| text.find(n).unwrap_or_else(|| panic!("`{n}` missing from\n{text}")))
        .collect()
}

#[test]
fn full_mode_display_overlaps_core_with_wait() {
    let def = diffusion_kernel(&GridSpec::unit(&[32, 32]).unwrap(), 2).unwrap();
    let p = plan(&def.program, &decomp(&[32, 32], 4, None), Mode::Full, def.dt, true);
    let text = p.to_string();
    let pos = positions(&text, &["mode=full", "HaloUpdateCall(u)", "x... CORE", "HaloWaitCall(u)", "x... REMAINDER"]);
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{text}");
}

#[test]
fn diagonal_display_waits_before_compute() {
    let g = GridSpec::unit(&[24, 24, 24]).unwrap();
    let def = acoustic_kernel(&g, 4, &AcousticSetup::default()).unwrap();
    let p = plan(&def.program, &decomp(&[24, 24, 24], 4, None), Mode::Diagonal, def.dt, true);
    let text = p.to_string();
    let pos = positions(
        &text,
        &["HaloUpdateCall(u)", "HaloWaitCall(u)", "SparseInterpolate", "Iteration x", "SparseInject src"],
    );
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{text}");
    assert!(!text.contains("HaloUpdateCall(m)"));
    assert!(text.contains("scale dt*dt"));
}

#[test]
fn cse_hoists_spacing_factors() {
    let def = diffusion_kernel(&GridSpec::unit(&[16, 16]).unwrap(), 2).unwrap();
    let text = plan(&def.program, &decomp(&[16, 16], 1, None), Mode::Basic, def.dt, true).to_string();
    let time = text.find("Iteration time").unwrap();
    let inv = text.find("1/(h_x*h_x)").unwrap();
    assert!(inv < time, "{text}");
}

#[test]
fn one_rank_sends_nothing() {
    let def = diffusion_kernel(&GridSpec::unit(&[16, 16]).unwrap(), 4).unwrap();
    for mode in Mode::ALL {
        let out = run_def(&def, &decomp(&[16, 16], 1, None), mode, 3, Some(5));
        assert_eq!(out.reports[0].stats.halo_msgs, 0, "{mode}");
    }
}

#[test]
fn thin_subdomains_are_rejected() {
    let def = diffusion_kernel(&GridSpec::unit(&[16, 16]).unwrap(), 8).unwrap();
    let err = compile(&def.program, &decomp(&[16, 16], 8, Some(&[8, 1])), &CompileOptions::new(Mode::Basic, def.dt))
        .unwrap_err();
    assert!(matches!(err, Error::Compile(CompileError::ExtentBelowRadius { .. })), "{err}");

    let err = compile(&def.program, &decomp(&[16, 16], 4, Some(&[4, 1])), &CompileOptions::new(Mode::Full, def.dt))
        .unwrap_err();
    assert!(matches!(err, Error::Compile(CompileError::EmptyCore { .. })), "{err}");
    compile(&def.program, &decomp(&[16, 16], 4, Some(&[4, 1])), &CompileOptions::new(Mode::Basic, def.dt)).unwrap();
}

#[test]
fn cyclic_forward_reads_are_rejected() {
    let g = GridSpec::unit(&[12, 12]).unwrap();
    let u = Field::time_function("u", &g, 2, 1).unwrap();
    let v = Field::time_function("v", &g, 2, 1).unwrap();
    let ahead = u.laplace().map_accesses(&|a| a.time_shifted(1));
    let e1 = solve_forward(&Eq::new(v.forward(), ahead), &v.forward_access()).unwrap();
    let e2 = solve_forward(&Eq::new(u.forward(), v.forward() + u.center()), &u.forward_access()).unwrap();
    let program = Program::new(&g, vec![Stmt::Eq(e1), Stmt::Eq(e2)]);
    let err = compile(&program, &decomp(&[12, 12], 1, None), &CompileOptions::new(Mode::Basic, 0.1)).unwrap_err();
    assert!(matches!(err, Error::Compile(CompileError::CyclicDependency { .. })), "{err}");
}
