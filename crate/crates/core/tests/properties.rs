mod common;

use std::collections::HashMap;

use proptest::prelude::*;

use stencil_dmp::compiler::Mode;
use stencil_dmp::decomposition::{decompose_axis, global_to_local, local_to_global, Span};
use stencil_dmp::distfield::{gather, GlobalValue, LocalField};
use stencil_dmp::kernels::{diffusion_kernel, random_global, tti_kernel, TtiSetup};
use stencil_dmp::runtime::{spawn_ranks, SpawnOptions};
use stencil_dmp::symbolics::{apply_cse, solve_forward, Access, Eq, EvalEnv, Field, GridSpec, Symbol};

use common::{decomp, run_def};

struct Env {
    salt: u64,
    temps: HashMap<usize, f64>,
}

impl EvalEnv for Env {
    fn access(&self, a: &Access) -> f64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ self.salt;
        for b in a.to_string().bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        ((h >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
    fn symbol(&self, s: &Symbol) -> Option<f64> {
        Some(match s {
            Symbol::Dt => 0.003,
            Symbol::Spacing(a) => 0.25 + 0.1 * *a as f64,
            Symbol::Named(_) => 1.5,
        })
    }
    fn temp(&self, i: usize) -> f64 {
        self.temps[&i]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn axis_parts_tile_the_axis(n in 1usize..400, p in 1usize..40) {
        prop_assume!(p <= n);
        let parts = decompose_axis(n, p).unwrap();
        prop_assert_eq!(parts.len(), p);
        prop_assert_eq!(parts[0].start, 0);
        prop_assert_eq!(parts[p - 1].end, n);
        for w in parts.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].len() >= w[1].len() && w[0].len() - w[1].len() <= 1);
        }
    }

    #[test]
    fn index_conversion_round_trips(a in 0usize..50, la in 1usize..30, b in 0usize..50, lb in 1usize..30,
                                    c in 0usize..90, lc in 0usize..60, d in 0usize..90, ld in 0usize..60) {
        let extent = vec![Span::new(a, a + la), Span::new(b, b + lb)];
        let region = vec![Span::new(c, c + lc), Span::new(d, d + ld)];
        match global_to_local(&extent, &region) {
            Some(local) => {
                let back = local_to_global(&extent, &local);
                for ((g, e), r) in back.iter().zip(&extent).zip(&region) {
                    prop_assert_eq!(*g, e.intersect(r));
                }
            }
            None => prop_assert!(extent.iter().zip(&region).any(|(e, r)| e.intersect(r).is_empty())),
        }
    }

    #[test]
    fn cse_preserves_values_bitwise(so in prop::sample::select(vec![2usize, 4, 8]), salt in any::<u64>()) {
        let g = GridSpec::unit(&[12, 10]).unwrap();
        let u = Field::time_function("u", &g, so, 2).unwrap();
        let m = Field::function("m", &g, so).unwrap();
        let eq = Eq::new(
            stencil_dmp::symbolics::Expr::mul2(m.center(), u.dt2()) - u.laplace(),
            stencil_dmp::symbolics::Expr::zero(),
        );
        let plain = solve_forward(&eq, &u.forward_access()).unwrap();
        let cse = apply_cse(&plain);
        let mut env = Env { salt, temps: HashMap::new() };
        let want = plain.rhs.eval(&env).unwrap();
        for (id, def) in &cse.temporaries {
            let v = def.eval(&env).unwrap();
            env.temps.insert(*id, v);
        }
        let got = cse.rhs.eval(&env).unwrap();
        prop_assert_eq!(got.to_bits(), want.to_bits());
    }

    #[test]
    fn scatter_gather_round_trips(nx in 6usize..30, ny in 6usize..30, ranks in 1usize..7, seed in any::<u64>()) {
        let g = GridSpec::unit(&[nx, ny]).unwrap();
        let f = Field::function("f", &g, 2).unwrap();
        let d = decomp(&[nx, ny], ranks, None);
        prop_assume!(d.topology().dims().iter().zip([nx, ny]).all(|(&p, n)| n / p >= 2));
        let global = random_global(&[nx, ny], seed, -1.0, 1.0);
        let all = [Span::new(0, nx), Span::new(0, ny)];
        let out = spawn_ranks(ranks, Some(d.topology()), &SpawnOptions::default(), |comm| {
            let mut lf = LocalField::allocate(&f, &d, comm.rank())?;
            lf.write_global(0, &all, GlobalValue::Array(&global))?;
            gather(comm, &lf, &d, 0)
        }).unwrap();
        prop_assert_eq!(out[0].as_ref().unwrap(), &global);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_decompositions_match_one_rank(nx in 14usize..40, ny in 14usize..40, ranks in 1usize..7,
                                            mode in prop::sample::select(Mode::ALL.to_vec()),
                                            so in prop::sample::select(vec![2usize, 4]), seed in any::<u64>()) {
        let shape = [nx, ny];
        let d = decomp(&shape, ranks, None);
        let r = so / 2;
        prop_assume!(d.topology().dims().iter().zip(shape).all(|(&p, n)| n / p >= 2 * r + 1));
        let def = diffusion_kernel(&GridSpec::unit(&shape).unwrap(), so).unwrap();
        let base = run_def(&def, &decomp(&shape, 1, None), Mode::Basic, 4, Some(seed));
        let out = run_def(&def, &d, mode, 4, Some(seed));
        prop_assert_eq!(out.max_abs_diff(&base), 0.0);
    }

    #[test]
    fn random_tti_decompositions_match_one_rank(ranks in 2usize..9, mode in prop::sample::select(Mode::ALL.to_vec()),
                                                seed in any::<u64>()) {
        let shape = [18, 16, 14];
        let d = decomp(&shape, ranks, None);
        prop_assume!(d.topology().dims().iter().zip(shape).all(|(&p, n)| n / p >= 5));
        let def = tti_kernel(&GridSpec::unit(&shape).unwrap(), 4, &TtiSetup::default()).unwrap();
        let base = run_def(&def, &decomp(&shape, 1, None), Mode::Diagonal, 3, Some(seed));
        let out = run_def(&def, &d, mode, 3, Some(seed));
        prop_assert_eq!(out.max_abs_diff(&base), 0.0);
    }
}
