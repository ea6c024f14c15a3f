//! Canonical Laurent-polynomial form, used to decide whether two expressions
//! are algebraically identical.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};

use super::expr::{Expr, Rational};

/// Monomial: atom key -> integer exponent (never zero).
type Monomial = BTreeMap<String, i32>;

/// Sum of rational multiples of monomials over opaque atoms.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, Rational>,
}

impl Polynomial {
    fn constant(c: Rational) -> Self {
        let mut p = Self::default();
        p.add_term(Monomial::new(), c);
        p
    }

    fn atom(key: String) -> Self {
        let mut m = Monomial::new();
        m.insert(key, 1);
        let mut p = Self::default();
        p.add_term(m, Rational::one());
        p
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        let entry = self.terms.entry(m).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add(mut self, other: &Polynomial) -> Self {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), *c);
        }
        self
    }

    fn mul(&self, other: &Polynomial) -> Self {
        let mut out = Self::default();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mut m = ma.clone();
                for (k, e) in mb {
                    let v = m.entry(k.clone()).or_insert(0);
                    *v += e;
                    if *v == 0 {
                        m.remove(k);
                    }
                }
                out.add_term(m, *ca * *cb);
            }
        }
        out
    }

    fn scale(mut self, c: Rational) -> Self {
        for v in self.terms.values_mut() {
            *v *= c;
        }
        self.terms.retain(|_, v| !v.is_zero());
        self
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({c})")?;
            for (k, e) in m {
                write!(f, "*{k}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Expand `expr` into canonical form. Reciprocals of single monomials are
/// folded into negative exponents; other reciprocals and function calls
/// become atoms keyed by their own canonical form.
pub fn normalize(expr: &Expr) -> Polynomial {
    match expr {
        Expr::Num(c) => Polynomial::constant(*c),
        Expr::Sym(_) | Expr::Access(_) | Expr::Temp(_) | Expr::Deriv(_) => {
            Polynomial::atom(expr.to_string())
        }
        Expr::Add(v) => v
            .iter()
            .fold(Polynomial::default(), |acc, e| acc.add(&normalize(e))),
        Expr::Mul(v) => v
            .iter()
            .fold(Polynomial::constant(Rational::one()), |acc, e| acc.mul(&normalize(e))),
        Expr::Neg(e) => normalize(e).scale(-Rational::one()),
        Expr::Recip(e) => {
            let p = normalize(e);
            if p.terms.len() == 1 {
                let (m, c) = p.terms.iter().next().unwrap();
                let inv: Monomial = m.iter().map(|(k, e)| (k.clone(), -e)).collect();
                let mut out = Polynomial::default();
                out.add_term(inv, c.recip());
                out
            } else {
                Polynomial::atom(format!("1/({p})"))
            }
        }
        Expr::Call(f, e) => Polynomial::atom(format!("{}({})", f.name(), normalize(e))),
    }
}

/// Whether two expressions expand to the same canonical form.
pub fn equivalent(a: &Expr, b: &Expr) -> bool {
    normalize(a) == normalize(b)
}
