//! Centered finite-difference weights.

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::SymbolicsError;

use super::expr::Rational;

/// Weights `c[k]` over offsets `-r..=r`, `r = accuracy_order / 2`, such that
/// `sum_k c[k] f(x + k h) = h^d f^(d)(x) + O(h^(d + accuracy_order))`.
///
/// Computed exactly with Fornberg's recurrence over rationals.
pub fn fd_coefficients(
    derivative_order: usize,
    accuracy_order: usize,
) -> Result<Vec<Rational>, SymbolicsError> {
    if !(1..=2).contains(&derivative_order) {
        return Err(SymbolicsError::UnsupportedDerivativeOrder(derivative_order));
    }
    if accuracy_order < 2 || accuracy_order % 2 != 0 {
        return Err(SymbolicsError::BadAccuracyOrder(accuracy_order));
    }
    let r = (accuracy_order / 2) as i128;
    let nodes: Vec<i128> = (-r..=r).collect();
    let weights = fornberg(&nodes, derivative_order);
    Ok(weights
        .into_iter()
        .map(|w| Rational::new(*w.numer() as i64, *w.denom() as i64))
        .collect())
}

/// Weights at `x = 0` of the `m`-th derivative for the given integer nodes.
fn fornberg(nodes: &[i128], m: usize) -> Vec<Ratio<i128>> {
    type Q = Ratio<i128>;
    let n = nodes.len();
    let mut c = vec![vec![Q::zero(); m + 1]; n];
    let x = |i: usize| Q::from_integer(nodes[i]);
    let mut c1 = Q::from_integer(1);
    let mut c4 = x(0);
    c[0][0] = Q::from_integer(1);
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = Q::from_integer(1);
        let c5 = c4;
        c4 = x(i);
        for j in 0..i {
            let c3 = x(i) - x(j);
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    let kq = Q::from_integer(k as i128);
                    c[i][k] = c1 * (kq * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                let kq = Q::from_integer(k as i128);
                c[j][k] = (c4 * c[j][k] - kq * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn second_order_second_derivative() {
        assert_eq!(fd_coefficients(2, 2).unwrap(), vec![q(1, 1), q(-2, 1), q(1, 1)]);
    }

    #[test]
    fn second_order_first_derivative() {
        assert_eq!(fd_coefficients(1, 2).unwrap(), vec![q(-1, 2), q(0, 1), q(1, 2)]);
    }

    #[test]
    fn fourth_order_second_derivative() {
        assert_eq!(
            fd_coefficients(2, 4).unwrap(),
            vec![q(-1, 12), q(4, 3), q(-5, 2), q(4, 3), q(-1, 12)]
        );
    }

    #[test]
    fn moment_conditions() {
        for acc in [2, 4, 6, 8, 12, 16] {
            for d in [1usize, 2] {
                let c = fd_coefficients(d, acc).unwrap();
                let r = (acc / 2) as i64;
                let m0: Rational = c.iter().sum();
                let m1: Rational = c
                    .iter()
                    .zip(-r..=r)
                    .map(|(w, k)| *w * Rational::from_integer(k))
                    .sum();
                assert_eq!(m0, q(0, 1));
                assert_eq!(m1, if d == 1 { q(1, 1) } else { q(0, 1) });
                let n = c.len();
                for k in 0..n {
                    if d == 2 {
                        assert_eq!(c[k], c[n - 1 - k], "symmetric");
                    } else {
                        assert_eq!(c[k], -c[n - 1 - k], "antisymmetric");
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_unsupported_orders() {
        assert_eq!(
            fd_coefficients(3, 2),
            Err(SymbolicsError::UnsupportedDerivativeOrder(3))
        );
        assert_eq!(fd_coefficients(0, 2), Err(SymbolicsError::UnsupportedDerivativeOrder(0)));
        assert_eq!(fd_coefficients(2, 3), Err(SymbolicsError::BadAccuracyOrder(3)));
        assert_eq!(fd_coefficients(2, 0), Err(SymbolicsError::BadAccuracyOrder(0)));
    }
}
