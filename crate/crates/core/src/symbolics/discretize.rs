//! Derivative expansion, explicit-form rearrangement, and the discretized
//! equation type.

use std::fmt;

use num_traits::{One, Zero};

use crate::error::SymbolicsError;

use super::expr::{Access, DerivWrt, Derivative, Expr, Rational};
use super::fd::fd_coefficients;
use super::grid::Field;

/// A symbolic equation `lhs = rhs`, possibly containing derivative placeholders.
#[derive(Clone, Debug, PartialEq)]
pub struct Eq {
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Eq {
    pub fn new(lhs: Expr, rhs: Expr) -> Self {
        Self { lhs, rhs }
    }
}

/// Explicit update `lhs = rhs` where `rhs` holds only field accesses,
/// symbols, and constants, optionally preceded by extracted temporaries.
#[derive(Clone, Debug, PartialEq)]
pub struct StencilEquation {
    pub lhs: Access,
    pub rhs: Expr,
    /// `(id, definition)` in evaluation order; `Expr::Temp(id)` refers to them.
    pub temporaries: Vec<(usize, Expr)>,
}

impl StencilEquation {
    pub fn new(lhs: Access, rhs: Expr) -> Result<Self, SymbolicsError> {
        let eq = Self {
            lhs,
            rhs,
            temporaries: Vec::new(),
        };
        eq.validate()?;
        Ok(eq)
    }

    pub fn validate(&self) -> Result<(), SymbolicsError> {
        let spec = self.lhs.field.spec();
        if !spec.valid_time_offset(self.lhs.time) {
            return Err(SymbolicsError::BadTimeOffset {
                field: spec.name.clone(),
                offset: self.lhs.time,
                buffers: spec.time_buffers(),
            });
        }
        let mut bodies: Vec<&Expr> = self.temporaries.iter().map(|(_, e)| e).collect();
        bodies.push(&self.rhs);
        for body in bodies {
            if body.has_derivative() {
                return Err(SymbolicsError::UndiscretizedDerivative);
            }
            for a in body.accesses() {
                check_access(a)?;
                if a.field == self.lhs.field && a.time == self.lhs.time {
                    return Err(SymbolicsError::ImplicitEquation(self.lhs.to_string()));
                }
            }
        }
        Ok(())
    }

    /// All accesses read by the right-hand side and its temporaries.
    pub fn reads(&self) -> Vec<&Access> {
        let mut out: Vec<&Access> = self
            .temporaries
            .iter()
            .flat_map(|(_, e)| e.accesses())
            .collect();
        out.extend(self.rhs.accesses());
        out
    }

    pub fn fields(&self) -> Vec<Field> {
        let mut v: Vec<Field> = self.reads().into_iter().map(|a| a.field.clone()).collect();
        v.push(self.lhs.field.clone());
        v.sort();
        v.dedup();
        v
    }
}

impl fmt::Display for StencilEquation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (id, e) in &self.temporaries {
            writeln!(f, "r{id} = {e}")?;
        }
        write!(f, "{} = {}", self.lhs, self.rhs)
    }
}

fn check_access(a: &Access) -> Result<(), SymbolicsError> {
    let spec = a.field.spec();
    if !spec.valid_time_offset(a.time) {
        return Err(SymbolicsError::BadTimeOffset {
            field: spec.name.clone(),
            offset: a.time,
            buffers: spec.time_buffers(),
        });
    }
    for (axis, &off) in a.offsets.iter().enumerate() {
        let radius = off.unsigned_abs() as usize;
        if radius > spec.halo[axis] {
            return Err(SymbolicsError::RadiusExceedsHalo {
                field: spec.name.clone(),
                axis,
                radius,
                halo: spec.halo[axis],
            });
        }
    }
    Ok(())
}

/// Replace every derivative placeholder with weighted, shifted accesses.
///
/// Spatial terms are emitted centre first, then by increasing offset, each as
/// `spacing_factor * (weight * access)`; the nesting is what lets common
/// subexpression extraction share the centre term across axes.
pub fn discretize_expr(expr: &Expr) -> Result<Expr, SymbolicsError> {
    let out = match expr {
        Expr::Deriv(d) => discretize_derivative(d)?,
        Expr::Add(v) => Expr::Add(v.iter().map(discretize_expr).collect::<Result<_, _>>()?),
        Expr::Mul(v) => Expr::Mul(v.iter().map(discretize_expr).collect::<Result<_, _>>()?),
        Expr::Neg(e) => Expr::Neg(Box::new(discretize_expr(e)?)),
        Expr::Recip(e) => Expr::Recip(Box::new(discretize_expr(e)?)),
        Expr::Call(m, e) => Expr::Call(*m, Box::new(discretize_expr(e)?)),
        leaf => leaf.clone(),
    };
    for a in out.accesses() {
        check_access(a)?;
    }
    Ok(out)
}

/// Discretize both sides of an equation.
pub fn discretize(eq: &Eq) -> Result<Eq, SymbolicsError> {
    Ok(Eq::new(discretize_expr(&eq.lhs)?, discretize_expr(&eq.rhs)?))
}

fn discretize_derivative(d: &Derivative) -> Result<Expr, SymbolicsError> {
    let inner = discretize_expr(&d.expr)?;
    match d.wrt {
        DerivWrt::Space(axis) => {
            let weights = fd_coefficients(d.order, d.accuracy)?;
            let r = (weights.len() / 2) as i32;
            let h = Expr::spacing(axis);
            let scale = match d.order {
                1 => h.recip(),
                _ => Expr::Mul(vec![h.clone(), h]).recip(),
            };
            let order = std::iter::once(0).chain((-r..=r).filter(|&k| k != 0));
            let mut terms = Vec::new();
            for k in order {
                let idx = if d.transposed { r - k } else { r + k } as usize;
                let w = weights[idx];
                if w.is_zero() {
                    continue;
                }
                let shifted = inner.map_accesses(&|a| a.shifted(axis, k));
                let weighted = if w.is_one() {
                    shifted
                } else {
                    Expr::Mul(vec![Expr::Num(w), shifted])
                };
                terms.push(Expr::Mul(vec![scale.clone(), weighted]));
            }
            Ok(single_or_sum(terms))
        }
        DerivWrt::Time => {
            if let Some(a) = inner.accesses().into_iter().find(|a| a.field.spec().is_static()) {
                return Err(SymbolicsError::StaticTimeDerivative(a.field.name().to_string()));
            }
            let shift = |dt: i32| inner.map_accesses(&|a| a.time_shifted(dt));
            match d.order {
                1 => Ok(Expr::Mul(vec![
                    Expr::dt().recip(),
                    Expr::Add(vec![shift(1), Expr::Neg(Box::new(inner.clone()))]),
                ])),
                2 => Ok(Expr::Mul(vec![
                    Expr::Mul(vec![Expr::dt(), Expr::dt()]).recip(),
                    Expr::Add(vec![
                        shift(1),
                        Expr::Mul(vec![Expr::int(-2), inner.clone()]),
                        shift(-1),
                    ]),
                ])),
                n => Err(SymbolicsError::UnsupportedDerivativeOrder(n)),
            }
        }
    }
}

fn single_or_sum(mut terms: Vec<Expr>) -> Expr {
    match terms.len() {
        0 => Expr::zero(),
        1 => terms.pop().unwrap(),
        _ => Expr::Add(terms),
    }
}

/// Rearrange `eq` into an explicit update for `unknown`.
///
/// The equation is discretized first. If it already reads `unknown = rhs`
/// with `rhs` free of the unknown it is returned unchanged.
pub fn solve_forward(eq: &Eq, unknown: &Access) -> Result<StencilEquation, SymbolicsError> {
    if unknown.time != 1 || !unknown.is_centered() || unknown.field.spec().is_static() {
        return Err(SymbolicsError::BadUnknown(unknown.to_string()));
    }
    let eq = discretize(eq)?;
    let target = Expr::Access(unknown.clone());
    if eq.lhs == target && !eq.rhs.contains(&target) {
        return StencilEquation::new(unknown.clone(), eq.rhs);
    }
    let residual = if eq.rhs.is_zero() {
        eq.lhs.clone()
    } else {
        Expr::Add(vec![eq.lhs.clone(), Expr::Neg(Box::new(eq.rhs.clone()))])
    };
    let (coef, rest) = split_affine(&residual, &target)?;
    let coef = coef.ok_or_else(|| SymbolicsError::ZeroCoefficient(unknown.to_string()))?;
    let coef = simplify(&coef);
    if coef.is_zero() {
        return Err(SymbolicsError::ZeroCoefficient(unknown.to_string()));
    }
    let rhs = match rest {
        None => Expr::zero(),
        Some(rest) => simplify(&Expr::Mul(vec![
            Expr::Recip(Box::new(coef)),
            Expr::Neg(Box::new(rest)),
        ])),
    };
    StencilEquation::new(unknown.clone(), rhs)
}

type Affine = (Option<Expr>, Option<Expr>);

/// Split `expr` into `coef * target + rest`.
fn split_affine(expr: &Expr, target: &Expr) -> Result<Affine, SymbolicsError> {
    if expr == target {
        return Ok((Some(Expr::one()), None));
    }
    if !expr.contains(target) {
        return Ok((None, Some(expr.clone())));
    }
    let nonlinear = || SymbolicsError::NonlinearInUnknown(target.to_string());
    match expr {
        Expr::Add(v) => {
            let mut coefs = Vec::new();
            let mut rests = Vec::new();
            for e in v {
                let (c, r) = split_affine(e, target)?;
                coefs.extend(c);
                rests.extend(r);
            }
            Ok((non_empty_sum(coefs), non_empty_sum(rests)))
        }
        Expr::Mul(v) => {
            let hits: Vec<usize> = (0..v.len()).filter(|&i| v[i].contains(target)).collect();
            if hits.len() != 1 {
                return Err(nonlinear());
            }
            let i = hits[0];
            let (c, r) = split_affine(&v[i], target)?;
            let with = |part: Expr| {
                let mut f = v.clone();
                f[i] = part;
                Expr::Mul(f)
            };
            Ok((c.map(&with), r.map(&with)))
        }
        Expr::Neg(e) => {
            let (c, r) = split_affine(e, target)?;
            let neg = |x: Expr| Expr::Neg(Box::new(x));
            Ok((c.map(neg), r.map(neg)))
        }
        _ => Err(nonlinear()),
    }
}

fn non_empty_sum(mut v: Vec<Expr>) -> Option<Expr> {
    match v.len() {
        0 => None,
        1 => v.pop(),
        _ => Some(Expr::Add(v)),
    }
}

/// Light algebraic cleanup used on rearranged equations: sign propagation,
/// reciprocal cancellation, flattening of sums, and removal of unit factors.
/// Products are not flattened so shared stencil terms keep their shape.
pub fn simplify(expr: &Expr) -> Expr {
    match expr {
        Expr::Add(v) => {
            let mut out = Vec::new();
            for e in v {
                match simplify(e) {
                    Expr::Add(inner) => out.extend(inner),
                    e if e.is_zero() => {}
                    e => out.push(e),
                }
            }
            match out.len() {
                0 => Expr::zero(),
                1 => out.pop().unwrap(),
                _ => Expr::Add(out),
            }
        }
        Expr::Mul(v) => {
            let mut out = Vec::new();
            for e in v {
                let e = simplify(e);
                if e.is_zero() {
                    return Expr::zero();
                }
                if !e.is_one() {
                    out.push(e);
                }
            }
            match out.len() {
                0 => Expr::one(),
                1 => out.pop().unwrap(),
                _ => Expr::Mul(out),
            }
        }
        Expr::Neg(e) => negate(simplify(e)),
        Expr::Recip(e) => reciprocal(simplify(e)),
        Expr::Call(m, e) => Expr::Call(*m, Box::new(simplify(e))),
        other => other.clone(),
    }
}

fn negate(e: Expr) -> Expr {
    match e {
        Expr::Num(c) => Expr::Num(-c),
        Expr::Neg(inner) => *inner,
        Expr::Add(v) => Expr::Add(v.into_iter().map(negate).collect()),
        Expr::Mul(mut v) => {
            if let Some(i) = v.iter().position(|f| matches!(f, Expr::Neg(_))) {
                if let Expr::Neg(inner) = v[i].clone() {
                    v[i] = *inner;
                }
                return Expr::Mul(v);
            }
            if let Some(Expr::Num(c)) = v.first().cloned() {
                let c: Rational = -c;
                if c.is_one() {
                    v.remove(0);
                    return if v.len() == 1 { v.pop().unwrap() } else { Expr::Mul(v) };
                }
                v[0] = Expr::Num(c);
                return Expr::Mul(v);
            }
            Expr::Neg(Box::new(Expr::Mul(v)))
        }
        other => Expr::Neg(Box::new(other)),
    }
}

fn reciprocal(e: Expr) -> Expr {
    match e {
        Expr::Num(c) if !c.is_zero() => Expr::Num(c.recip()),
        Expr::Recip(inner) => *inner,
        Expr::Mul(v) if v.iter().any(|f| matches!(f, Expr::Recip(_))) => {
            Expr::Mul(v.into_iter().map(reciprocal).collect())
        }
        other => Expr::Recip(Box::new(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolics::expr::{EvalEnv, Symbol};
    use crate::symbolics::grid::GridSpec;
    use crate::symbolics::normal::normalize;

    fn grid2() -> GridSpec {
        GridSpec::new(&[4, 4], &[2.0, 2.0]).unwrap()
    }

    #[test]
    fn laplace_second_order_2d() {
        let u = Field::time_function("u", &grid2(), 2, 1).unwrap();
        let lap = discretize_expr(&u.laplace()).unwrap();
        assert_eq!(
            lap.to_string(),
            "1/(h_x*h_x)*(-2*u[t0, x, y]) + 1/(h_x*h_x)*u[t0, x - 1, y] + 1/(h_x*h_x)*u[t0, x + 1, y] \
             + 1/(h_y*h_y)*(-2*u[t0, x, y]) + 1/(h_y*h_y)*u[t0, x, y - 1] + 1/(h_y*h_y)*u[t0, x, y + 1]"
        );
        let max_off = lap
            .accesses()
            .iter()
            .flat_map(|a| a.offsets.iter().map(|o| o.abs()))
            .max()
            .unwrap();
        assert_eq!(max_off, 1);
    }

    #[test]
    fn first_time_derivative() {
        let u = Field::time_function("u", &grid2(), 2, 1).unwrap();
        let e = discretize_expr(&u.dt()).unwrap();
        assert_eq!(e.to_string(), "1/dt*(u[t1, x, y] - u[t0, x, y])");
    }

    #[test]
    fn second_time_derivative() {
        let u = Field::time_function("u", &grid2(), 2, 2).unwrap();
        let e = discretize_expr(&u.dt2()).unwrap();
        assert_eq!(
            e.to_string(),
            "1/(dt*dt)*(u[t1, x, y] + -2*u[t0, x, y] + u[t2, x, y])"
        );
    }

    #[test]
    fn radius_beyond_halo_is_rejected() {
        let u = Field::time_function("u", &grid2(), 4, 1).unwrap().with_halo(&[1, 2]);
        match discretize_expr(&u.laplace()) {
            Err(SymbolicsError::RadiusExceedsHalo { field, axis, radius, halo }) => {
                assert_eq!((field.as_str(), axis, radius, halo), ("u", 0, 2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diffusion_solve_matches_generated_form() {
        let u = Field::time_function("u", &grid2(), 2, 1).unwrap();
        let st = solve_forward(&Eq::new(u.dt(), u.laplace()), &u.forward_access()).unwrap();
        assert_eq!(st.lhs.to_string(), "u[t1, x, y]");
        let s = st.rhs.to_string();
        assert!(s.starts_with("dt*(1/dt*u[t0, x, y] + 1/(h_x*h_x)*(-2*u[t0, x, y])"), "{s}");
    }

    #[test]
    fn already_solved_is_unchanged() {
        let u = Field::time_function("u", &grid2(), 2, 1).unwrap();
        let st = solve_forward(&Eq::new(u.forward(), Expr::int(5)), &u.forward_access()).unwrap();
        assert_eq!(st.rhs, Expr::int(5));
        assert!(st.temporaries.is_empty());
    }

    #[test]
    fn nonlinear_and_missing_unknowns_rejected() {
        let u = Field::time_function("u", &grid2(), 2, 1).unwrap();
        let sq = Eq::new(u.forward() * u.forward(), Expr::int(1));
        assert!(matches!(
            solve_forward(&sq, &u.forward_access()),
            Err(SymbolicsError::NonlinearInUnknown(_))
        ));
        let inv = Eq::new(u.forward().recip(), Expr::int(1));
        assert!(matches!(
            solve_forward(&inv, &u.forward_access()),
            Err(SymbolicsError::NonlinearInUnknown(_))
        ));
        let absent = Eq::new(u.center(), Expr::int(1));
        assert!(matches!(
            solve_forward(&absent, &u.forward_access()),
            Err(SymbolicsError::ZeroCoefficient(_))
        ));
    }

    struct Rand {
        state: std::cell::Cell<u64>,
    }

    impl EvalEnv for Rand {
        fn access(&self, a: &Access) -> f64 {
            // deterministic pseudo-value per access
            let mut h = 1469598103934665603u64;
            for b in a.to_string().bytes() {
                h = (h ^ b as u64).wrapping_mul(1099511628211);
            }
            h ^= self.state.get();
            ((h >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
        fn symbol(&self, s: &Symbol) -> Option<f64> {
            Some(match s {
                Symbol::Dt => 0.01,
                Symbol::Spacing(a) => 0.5 + *a as f64 * 0.1,
                Symbol::Named(_) => 1.7,
            })
        }
    }

    #[test]
    fn acoustic_solve_matches_hand_algebra() {
        let g = GridSpec::new(&[8, 8], &[1.0, 1.0]).unwrap();
        let u = Field::time_function("u", &g, 2, 2).unwrap();
        let m = Field::function("m", &g, 2).unwrap();
        let eq = Eq::new(m.center() * u.dt2() - u.laplace(), Expr::zero());
        let st = solve_forward(&eq, &u.forward_access()).unwrap();
        // hand algebra: u+ = 2u - u- + dt^2/m * laplace(u)
        let lap = discretize_expr(&u.laplace()).unwrap();
        let hand = Expr::int(2) * u.center() - u.backward()
            + Expr::dt() * Expr::dt() / m.center() * lap;
        for seed in 0..20u64 {
            let env = Rand { state: std::cell::Cell::new(seed * 7919) };
            let a = st.rhs.eval(&env).unwrap();
            let b = hand.eval(&env).unwrap();
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn substitution_restores_equation() {
        let g = GridSpec::new(&[8, 8, 8], &[1.0, 1.0, 1.0]).unwrap();
        let u = Field::time_function("u", &g, 4, 2).unwrap();
        let m = Field::function("m", &g, 4).unwrap();
        let eqs = [
            Eq::new(m.center() * u.dt2() - u.laplace(), Expr::zero()),
            Eq::new(u.dt2(), u.laplace()),
        ];
        for eq in eqs {
            let st = solve_forward(&eq, &u.forward_access()).unwrap();
            let d = discretize(&eq).unwrap();
            let residual = d.lhs - d.rhs;
            let back = residual.substitute(&u.forward(), &st.rhs);
            assert!(normalize(&back).is_zero(), "{}", normalize(&back));
        }
        let v = Field::time_function("v", &g, 2, 1).unwrap();
        let eq = Eq::new(v.dt(), v.laplace());
        let st = solve_forward(&eq, &v.forward_access()).unwrap();
        let d = discretize(&eq).unwrap();
        let back = (d.lhs - d.rhs).substitute(&v.forward(), &st.rhs);
        assert!(normalize(&back).is_zero());
    }

    #[test]
    fn quadratic_laplacian_is_exact() {
        // sample x^2 + y^2 and apply the discrete Laplacian at interior points
        let g = GridSpec::new(&[9, 9], &[2.0, 3.0]).unwrap();
        for so in [2usize, 4, 8] {
            let u = Field::function("u", &g, so).unwrap();
            let lap = discretize_expr(&u.laplace()).unwrap();
            let r = so as i64 / 2;
            struct Env<'a> {
                g: &'a GridSpec,
                at: (i64, i64),
            }
            impl EvalEnv for Env<'_> {
                fn access(&self, a: &Access) -> f64 {
                    let x = (self.at.0 + a.offsets[0] as i64) as f64 * self.g.spacing()[0];
                    let y = (self.at.1 + a.offsets[1] as i64) as f64 * self.g.spacing()[1];
                    x * x + y * y
                }
                fn symbol(&self, s: &Symbol) -> Option<f64> {
                    match s {
                        Symbol::Spacing(a) => Some(self.g.spacing()[*a]),
                        _ => None,
                    }
                }
            }
            for i in r..9 - r {
                for j in r..9 - r {
                    let v = lap.eval(&Env { g: &g, at: (i, j) }).unwrap();
                    assert!((v - 4.0).abs() < 1e-9, "so {so} at ({i},{j}): {v}");
                }
            }
        }
    }

    #[test]
    fn transposed_first_derivative_negates_weights() {
        let g = GridSpec::unit(&[8, 8, 8]).unwrap();
        let u = Field::function("u", &g, 2).unwrap();
        let d = discretize_expr(&u.d(0, 1)).unwrap();
        let dt = discretize_expr(&Derivative::space_transposed(u.center(), 0, 1, 2)).unwrap();
        assert_eq!(d.to_string(), "1/h_x*(-1/2*u[x - 1, y, z]) + 1/h_x*(1/2*u[x + 1, y, z])");
        assert_eq!(dt.to_string(), "1/h_x*(1/2*u[x - 1, y, z]) + 1/h_x*(-1/2*u[x + 1, y, z])");
    }
}
