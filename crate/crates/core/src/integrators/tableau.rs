//! Butcher tableaus and the symplecticity condition
//! `a_{αβ} b_α + a_{βα} b_β = b_α b_β`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Names accepted by [`builtin_tableau`].
pub const BUILTIN_TABLEAUS: [&str; 3] = ["midpoint", "method-1", "method-2"];

/// Coefficients of an `s`-stage Runge–Kutta method.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    name: String,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl ButcherTableau {
    pub fn new(name: impl Into<String>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let s = b.len();
        if s == 0 {
            return Err(Error::Domain("a tableau needs at least one stage".into()));
        }
        if a.nrows() != s || a.ncols() != s {
            return Err(Error::Domain(format!(
                "coefficient matrix is {}x{}, expected {s}x{s}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("tableau coefficients must be finite".into()));
        }
        Ok(ButcherTableau {
            name: name.into(),
            a,
            b,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// True when no stage depends on itself or a later stage.
    pub fn is_explicit(&self) -> bool {
        (0..self.stages()).all(|i| (i..self.stages()).all(|j| self.a[(i, j)] == 0.0))
    }

    /// `max_{α,β} |a_{αβ} b_α + a_{βα} b_β − b_α b_β|`.
    pub fn symplectic_residual(&self) -> f64 {
        let (a, b) = (&self.a, &self.b);
        let s = self.stages();
        let mut worst = 0.0_f64;
        for i in 0..s {
            for j in 0..s {
                let r = a[(i, j)] * b[i] + a[(j, i)] * b[j] - b[i] * b[j];
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    pub fn is_symplectic(&self, tol: f64) -> bool {
        self.symplectic_residual() <= tol
    }
}

pub fn is_symplectic(tableau: &ButcherTableau, tol: f64) -> bool {
    tableau.is_symplectic(tol)
}

/// Implicit midpoint: `a = [[1/2]]`, `b = [1]`.
pub fn midpoint() -> ButcherTableau {
    ButcherTableau::new(
        "midpoint",
        DMatrix::from_element(1, 1, 0.5),
        DVector::from_element(1, 1.0),
    )
    .unwrap()
}

/// Two-stage Gauss collocation method.
pub fn method_one() -> ButcherTableau {
    let r3 = 3.0_f64.sqrt();
    let a = DMatrix::from_row_slice(2, 2, &[0.25, (3.0 - 2.0 * r3) / 12.0, (3.0 + 2.0 * r3) / 12.0, 0.25]);
    ButcherTableau::new("method-1", a, DVector::from_vec(vec![0.5, 0.5])).unwrap()
}

/// Three-stage diagonally implicit composition of midpoint steps with
/// weights `(a, a, 1 − 2a)`, `a` the real root of `6x³ − 12x² + 6x − 1`.
pub fn method_two() -> ButcherTableau {
    let x = method_two_root();
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(3, 3, &[
        x / 2.0, 0.0,     0.0,
        x,       x / 2.0, 0.0,
        x,       x,       0.5 - x,
    ]);
    ButcherTableau::new("method-2", a, DVector::from_vec(vec![x, x, 1.0 - 2.0 * x])).unwrap()
}

/// Real root of `6x³ − 12x² + 6x − 1`, refined by Newton's method from 1.351207.
///
/// The residual is evaluated with compensated Horner, so the result is the
/// double nearest to the root rather than one within a few ulps of it.
pub fn method_two_root() -> f64 {
    const COEFFS: [f64; 4] = [6.0, -12.0, 6.0, -1.0];
    let dp = |x: f64| (18.0 * x - 24.0) * x + 6.0;
    let mut x: f64 = 1.351207;
    for _ in 0..50 {
        let step = compensated_horner(&COEFFS, x) / dp(x);
        x -= step;
        if step.abs() <= f64::EPSILON * x {
            break;
        }
    }
    let residual = |v: f64| compensated_horner(&COEFFS, v).abs();
    [x.next_down(), x.next_up()]
        .into_iter()
        .fold(x, |best, v| if residual(v) < residual(best) { v } else { best })
}

fn compensated_horner(coeffs: &[f64], x: f64) -> f64 {
    let mut s = coeffs[0];
    let mut err = 0.0;
    for &c in &coeffs[1..] {
        let p = s * x;
        let p_err = s.mul_add(x, -p);
        let sum = p + c;
        let bb = sum - p;
        let s_err = (p - (sum - bb)) + (c - bb);
        s = sum;
        err = err * x + (p_err + s_err);
    }
    s + err
}

/// Explicit Euler, `a = [[0]]`, `b = [1]`. Not symplectic.
pub fn explicit_euler() -> ButcherTableau {
    ButcherTableau::new("explicit-euler", DMatrix::zeros(1, 1), DVector::from_element(1, 1.0)).unwrap()
}

pub fn builtin_tableau(name: &str) -> Result<ButcherTableau> {
    match name {
        "midpoint" => Ok(midpoint()),
        "method-1" => Ok(method_one()),
        "method-2" => Ok(method_two()),
        other => Err(Error::UnknownTableau(other.to_string())),
    }
}
