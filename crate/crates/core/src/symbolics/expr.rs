//! Expression trees: the currency of the compiler from symbolic input down
//! to index-lowered stencil updates.

use std::fmt;
use std::ops;

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::SymbolicsError;

use super::grid::{Field, AXIS_NAMES};

/// Exact coefficient type; converted to binary floating point once, at plan
/// build time.
pub type Rational = Ratio<i64>;

pub fn rational_to_f64(r: &Rational) -> f64 {
    // numerator and denominator are small; this is the correctly rounded quotient
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    /// The time step.
    Dt,
    /// Grid spacing along an axis.
    Spacing(usize),
    /// A named scalar constant bound at plan build time.
    Named(String),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Dt => f.write_str("dt"),
            Symbol::Spacing(a) => write!(f, "h_{}", AXIS_NAMES[*a]),
            Symbol::Named(n) => f.write_str(n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MathFn {
    Sin,
    Cos,
}

impl MathFn {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            MathFn::Sin => v.sin(),
            MathFn::Cos => v.cos(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MathFn::Sin => "sin",
            MathFn::Cos => "cos",
        }
    }
}

/// An indexed read or write of a field: relative time offset plus one
/// integer offset per spatial axis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Access {
    pub field: Field,
    pub time: i32,
    pub offsets: Vec<i32>,
}

impl Access {
    pub fn new(field: Field, time: i32, offsets: Vec<i32>) -> Self {
        Self {
            field,
            time,
            offsets,
        }
    }

    /// Same access displaced by `delta` along `axis`.
    pub fn shifted(&self, axis: usize, delta: i32) -> Self {
        let mut a = self.clone();
        a.offsets[axis] += delta;
        a
    }

    pub fn time_shifted(&self, delta: i32) -> Self {
        let mut a = self.clone();
        if !a.field.spec().is_static() {
            a.time += delta;
        }
        a
    }

    pub fn is_centered(&self) -> bool {
        self.offsets.iter().all(|&o| o == 0)
    }

    /// Name of the time buffer alias as printed in plans (`t0`, `t1`, `t2`).
    pub fn time_label(&self) -> Option<&'static str> {
        if self.field.spec().is_static() {
            return None;
        }
        Some(match self.time {
            0 => "t0",
            1 => "t1",
            -1 => "t2",
            _ => "t?",
        })
    }
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.field.name())?;
        let mut first = true;
        if let Some(t) = self.time_label() {
            f.write_str(t)?;
            first = false;
        }
        for (axis, &off) in self.offsets.iter().enumerate() {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            let name = AXIS_NAMES[axis];
            match off {
                0 => f.write_str(name)?,
                o if o > 0 => write!(f, "{name} + {o}")?,
                o => write!(f, "{name} - {}", -o)?,
            }
        }
        f.write_str("]")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum DerivWrt {
    Time,
    Space(usize),
}

/// Placeholder for a derivative, replaced by weighted accesses during
/// discretization.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Derivative {
    pub expr: Expr,
    pub wrt: DerivWrt,
    pub order: usize,
    /// Spatial accuracy order (ignored for time derivatives).
    pub accuracy: usize,
    /// Apply the transposed stencil: weight `c[k]` moves to offset `-k`.
    pub transposed: bool,
}

impl Derivative {
    pub fn space(expr: Expr, axis: usize, order: usize, accuracy: usize) -> Expr {
        Expr::Deriv(Box::new(Derivative {
            expr,
            wrt: DerivWrt::Space(axis),
            order,
            accuracy,
            transposed: false,
        }))
    }

    pub fn space_transposed(expr: Expr, axis: usize, order: usize, accuracy: usize) -> Expr {
        Expr::Deriv(Box::new(Derivative {
            expr,
            wrt: DerivWrt::Space(axis),
            order,
            accuracy,
            transposed: true,
        }))
    }

    pub fn time(expr: Expr, order: usize) -> Expr {
        Expr::Deriv(Box::new(Derivative {
            expr,
            wrt: DerivWrt::Time,
            order,
            accuracy: 0,
            transposed: false,
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Num(Rational),
    Sym(Symbol),
    Access(Access),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Recip(Box<Expr>),
    Call(MathFn, Box<Expr>),
    Deriv(Box<Derivative>),
    /// Reference to a temporary introduced by common-subexpression extraction.
    Temp(usize),
}

impl Expr {
    pub fn int(v: i64) -> Expr {
        Expr::Num(Rational::from_integer(v))
    }

    pub fn rational(numer: i64, denom: i64) -> Expr {
        Expr::Num(Rational::new(numer, denom))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn dt() -> Expr {
        Expr::Sym(Symbol::Dt)
    }

    pub fn spacing(axis: usize) -> Expr {
        Expr::Sym(Symbol::Spacing(axis))
    }

    pub fn named(name: &str) -> Expr {
        Expr::Sym(Symbol::Named(name.to_string()))
    }

    pub fn recip(self) -> Expr {
        Expr::Recip(Box::new(self))
    }

    pub fn cos(self) -> Expr {
        Expr::Call(MathFn::Cos, Box::new(self))
    }

    pub fn sin(self) -> Expr {
        Expr::Call(MathFn::Sin, Box::new(self))
    }

    /// Product of two factors, flattening nested products.
    pub fn mul2(a: Expr, b: Expr) -> Expr {
        let mut v = Vec::new();
        for e in [a, b] {
            match e {
                Expr::Mul(inner) => v.extend(inner),
                other => v.push(other),
            }
        }
        Expr::Mul(v)
    }

    pub fn add2(a: Expr, b: Expr) -> Expr {
        let mut v = Vec::new();
        for e in [a, b] {
            match e {
                Expr::Add(inner) => v.extend(inner),
                other => v.push(other),
            }
        }
        Expr::Add(v)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(r) if r.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Num(r) if r.is_one())
    }

    pub fn is_leaf(&self) -> bool {
        matches!(
            self,
            Expr::Num(_) | Expr::Sym(_) | Expr::Access(_) | Expr::Temp(_)
        )
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Add(v) | Expr::Mul(v) => v.iter().collect(),
            Expr::Neg(e) | Expr::Recip(e) | Expr::Call(_, e) => vec![e],
            Expr::Deriv(d) => vec![&d.expr],
            _ => Vec::new(),
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn accesses(&self) -> Vec<&Access> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Access(a) = e {
                out.push(a);
            }
        });
        out
    }

    pub fn has_access(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Access(_)));
        found
    }

    pub fn contains(&self, needle: &Expr) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= e == needle);
        found
    }

    pub fn has_derivative(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Deriv(_)));
        found
    }

    /// Bottom-up rebuild applying `f` to every node after its children.
    pub fn transform(&self, f: &mut impl FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Add(v) => Expr::Add(v.iter().map(|c| c.transform(f)).collect()),
            Expr::Mul(v) => Expr::Mul(v.iter().map(|c| c.transform(f)).collect()),
            Expr::Neg(e) => Expr::Neg(Box::new(e.transform(f))),
            Expr::Recip(e) => Expr::Recip(Box::new(e.transform(f))),
            Expr::Call(m, e) => Expr::Call(*m, Box::new(e.transform(f))),
            Expr::Deriv(d) => Expr::Deriv(Box::new(Derivative {
                expr: d.expr.transform(f),
                ..(**d).clone()
            })),
            leaf => leaf.clone(),
        };
        f(rebuilt)
    }

    pub fn map_accesses(&self, f: &impl Fn(&Access) -> Access) -> Expr {
        self.transform(&mut |e| match e {
            Expr::Access(a) => Expr::Access(f(&a)),
            other => other,
        })
    }

    /// Replace every occurrence of `target` with `replacement`.
    pub fn substitute(&self, target: &Expr, replacement: &Expr) -> Expr {
        if self == target {
            return replacement.clone();
        }
        match self {
            Expr::Add(v) => Expr::Add(v.iter().map(|c| c.substitute(target, replacement)).collect()),
            Expr::Mul(v) => Expr::Mul(v.iter().map(|c| c.substitute(target, replacement)).collect()),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(target, replacement))),
            Expr::Recip(e) => Expr::Recip(Box::new(e.substitute(target, replacement))),
            Expr::Call(m, e) => Expr::Call(*m, Box::new(e.substitute(target, replacement))),
            Expr::Deriv(d) => Expr::Deriv(Box::new(Derivative {
                expr: d.expr.substitute(target, replacement),
                ..(**d).clone()
            })),
            leaf => leaf.clone(),
        }
    }

    /// Scalar evaluation with the canonical operation order: sums and
    /// products fold left to right. The runtime's row kernels reproduce this
    /// order exactly.
    pub fn eval(&self, env: &dyn EvalEnv) -> Result<f64, SymbolicsError> {
        Ok(match self {
            Expr::Num(r) => rational_to_f64(r),
            Expr::Sym(s) => env
                .symbol(s)
                .ok_or_else(|| SymbolicsError::UnboundSymbol(s.to_string()))?,
            Expr::Access(a) => env.access(a),
            Expr::Temp(i) => env.temp(*i),
            Expr::Add(v) => {
                let mut it = v.iter();
                let mut acc = match it.next() {
                    Some(e) => e.eval(env)?,
                    None => 0.0,
                };
                for e in it {
                    acc += e.eval(env)?;
                }
                acc
            }
            Expr::Mul(v) => {
                let mut it = v.iter();
                let mut acc = match it.next() {
                    Some(e) => e.eval(env)?,
                    None => 1.0,
                };
                for e in it {
                    acc *= e.eval(env)?;
                }
                acc
            }
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Recip(e) => 1.0 / e.eval(env)?,
            Expr::Call(m, e) => m.apply(e.eval(env)?),
            Expr::Deriv(_) => return Err(SymbolicsError::UndiscretizedDerivative),
        })
    }
}

/// Value source for [`Expr::eval`].
pub trait EvalEnv {
    fn access(&self, a: &Access) -> f64;
    fn symbol(&self, s: &Symbol) -> Option<f64>;
    fn temp(&self, _index: usize) -> f64 {
        f64::NAN
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add2(self, rhs)
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::add2(self, Expr::Neg(Box::new(rhs)))
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul2(self, rhs)
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::mul2(self, rhs.recip())
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl From<i64> for Expr {
    fn from(v: i64) -> Self {
        Expr::int(v)
    }
}

fn fmt_num(r: &Rational, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if r.is_integer() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(r) => fmt_num(r, f),
            Expr::Sym(s) => write!(f, "{s}"),
            Expr::Access(a) => write!(f, "{a}"),
            Expr::Temp(i) => write!(f, "r{i}"),
            Expr::Add(v) => {
                for (i, c) in v.iter().enumerate() {
                    match (i, c) {
                        (0, Expr::Neg(inner)) => write!(f, "-{}", Paren(inner, false))?,
                        (0, c) => write!(f, "{c}")?,
                        (_, Expr::Neg(inner)) => write!(f, " - {}", Paren(inner, false))?,
                        (_, c) => write!(f, " + {c}")?,
                    }
                }
                Ok(())
            }
            Expr::Mul(v) => {
                for (i, c) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    let wrap = match c {
                        Expr::Add(_) | Expr::Neg(_) => true,
                        Expr::Recip(_) | Expr::Mul(_) => i > 0,
                        Expr::Num(r) => i > 0 && (r.is_negative() || !r.is_integer()),
                        _ => false,
                    };
                    if wrap {
                        write!(f, "({c})")?;
                    } else {
                        write!(f, "{c}")?;
                    }
                }
                Ok(())
            }
            Expr::Neg(e) => write!(f, "-{}", Paren(e, true)),
            Expr::Recip(e) => write!(f, "1/{}", Paren(e, true)),
            Expr::Call(m, e) => write!(f, "{}({e})", m.name()),
            Expr::Deriv(d) => {
                let wrt = match d.wrt {
                    DerivWrt::Time => "time".to_string(),
                    DerivWrt::Space(a) => AXIS_NAMES[a].to_string(),
                };
                let t = if d.transposed { "^T" } else { "" };
                write!(f, "Derivative{t}({}, {wrt}, {})", d.expr, d.order)
            }
        }
    }
}

/// Parenthesizes compound operands.
struct Paren<'a>(&'a Expr, bool);

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let compound = match self.0 {
            Expr::Add(_) => true,
            Expr::Mul(_) | Expr::Neg(_) | Expr::Recip(_) => self.1,
            Expr::Num(r) => !r.is_integer() || r.is_negative(),
            _ => false,
        };
        if compound {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}
