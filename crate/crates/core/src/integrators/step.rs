//! Single-step maps and their Jacobians.

use nalgebra::DMatrix;

use super::solver::{combine, solve_stages, stacked_operator, SolverConfig, StageSolution};
use super::tableau::ButcherTableau;
use crate::error::{Error, Result};
use crate::systems::{State, SystemSpec};

/// Order of a simplified step-N Euler scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EulerOrder {
    Two,
    Three,
}

impl EulerOrder {
    pub fn from_order(order: u8) -> Result<Self> {
        match order {
            2 => Ok(EulerOrder::Two),
            3 => Ok(EulerOrder::Three),
            other => Err(Error::Domain(format!(
                "simplified Euler order must be 2 or 3, got {other}"
            ))),
        }
    }

    pub fn order(self) -> u8 {
        match self {
            EulerOrder::Two => 2,
            EulerOrder::Three => 3,
        }
    }
}

/// One Runge–Kutta step `y + Σ_α b_α F(Z_α)`.
pub fn rk_step(
    system: &dyn SystemSpec,
    tableau: &ButcherTableau,
    y: &State,
    dx: &[f64],
    cfg: &SolverConfig,
) -> Result<State> {
    let sol = solve_stages(system, tableau, y, dx, cfg)?;
    Ok(rk_update(system, tableau, y, dx, &sol))
}

pub(crate) fn rk_update(
    system: &dyn SystemSpec,
    tableau: &ButcherTableau,
    y: &State,
    dx: &[f64],
    sol: &StageSolution,
) -> State {
    let mut next = y.clone();
    for (z, &b) in sol.stages.iter().zip(tableau.b().iter()) {
        if b != 0.0 {
            next.axpy(b, &system.drive(z, dx), 1.0);
        }
    }
    next
}

/// Tangent map of a Runge–Kutta step at converged stages.
///
/// The `J`-stages `K_α = J + Σ_β a_{αβ} D_β K_β`, with `D_β = Σ_i DV_i(Z_β) dxⁱ`,
/// are linear once the state stages are known and are solved densely.
pub(crate) fn rk_tangent(
    system: &dyn SystemSpec,
    tableau: &ButcherTableau,
    dx: &[f64],
    sol: &StageSolution,
    jac: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = jac.nrows();
    let s = tableau.stages();
    let blocks: Vec<DMatrix<f64>> = sol.stages.iter().map(|z| system.drive_jacobian(z, dx)).collect();
    let op = stacked_operator(tableau.a(), &blocks, n);
    let mut rhs = DMatrix::zeros(s * n, n);
    for i in 0..s {
        rhs.view_mut((i * n, 0), (n, n)).copy_from(jac);
    }
    let k = op.lu().solve(&rhs).ok_or(Error::SingularMatrix)?;
    let mut next = jac.clone();
    for (i, block) in blocks.iter().enumerate() {
        let b = tableau.b()[i];
        if b != 0.0 {
            next += block * k.view((i * n, 0), (n, n)) * b;
        }
    }
    Ok(next)
}

/// The midpoint step's propagator `(I − M/2)⁻¹ (I + M/2)` for `M = Σ_i A_i dxⁱ`.
pub fn cayley(matrices: &[DMatrix<f64>], dx: &[f64]) -> Result<DMatrix<f64>> {
    let m = combine(matrices, dx);
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let lhs = &id - &m * 0.5;
    lhs.lu().solve(&(&id + &m * 0.5)).ok_or(Error::SingularMatrix)
}

/// Midpoint step for `V_i(Y) = A_i Y` by a direct solve of
/// `(I − ½ Σ_i A_i dxⁱ) Y_mid = y`, then `y + Σ_i A_i Y_mid dxⁱ`.
pub fn midpoint_step_linear(matrices: &[DMatrix<f64>], y: &State, dx: &[f64]) -> Result<State> {
    if matrices.is_empty() || matrices.iter().any(|a| !a.is_square() || a.nrows() != y.len()) {
        return Err(Error::Domain(
            "linear midpoint needs square matrices matching the state".into(),
        ));
    }
    let m = combine(matrices, dx);
    let n = m.nrows();
    let lhs = DMatrix::<f64>::identity(n, n) - &m * 0.5;
    let lu = lhs.lu();
    // Reject resolvents that are singular up to rounding.
    let det = lu.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularMatrix);
    }
    let mid = lu.solve(y).ok_or(Error::SingularMatrix)?;
    Ok(y + &m * mid)
}

/// Explicit Taylor step in which iterated integrals are replaced by
/// symmetrised increment products `dx^{⊗n}/n!`.
///
/// With `F = Σ_i V_i dxⁱ` and `D = Σ_i DV_i dxⁱ` at `y`:
/// order 2 is `y + F + D F / 2`; order 3 adds
/// `(Σ_i dxⁱ D²V_i(F, F) + D D F) / 6`.
pub fn simplified_euler_step(system: &dyn SystemSpec, order: EulerOrder, y: &State, dx: &[f64]) -> Result<State> {
    let f = system.drive(y, dx);
    let d = system.drive_jacobian(y, dx);
    let df = &d * &f;
    let mut next = y + &f + &df * 0.5;
    if order == EulerOrder::Three {
        let mut third = &d * &df;
        for (i, &w) in dx.iter().enumerate() {
            if w != 0.0 {
                let hess = system
                    .hessian_field(i, y)
                    .ok_or_else(|| Error::MissingHessian(system.name().to_string()))?;
                third.axpy(w, &hess.contract(&f, &f), 1.0);
            }
        }
        next.axpy(1.0 / 6.0, &third, 1.0);
    }
    Ok(next)
}

/// Step used when differentiating the order-3 Euler map numerically.
const EULER_TANGENT_STEP: f64 = 1e-6;

/// Derivative of the simplified Euler step map at `y`.
///
/// Order 2 is differentiated analytically (needs `hessian_field`). Order 3 is
/// exact for linear systems and uses central differences of the step map
/// otherwise, since its analytic form would need third derivatives.
pub(crate) fn euler_tangent(system: &dyn SystemSpec, order: EulerOrder, y: &State, dx: &[f64]) -> Result<DMatrix<f64>> {
    let n = y.len();
    let id = DMatrix::<f64>::identity(n, n);
    if let Some(matrices) = system.linear_form() {
        let m = combine(matrices, dx);
        let m2 = &m * &m;
        let mut map = &id + &m + &m2 * 0.5;
        if order == EulerOrder::Three {
            map += &m2 * &m / 6.0;
        }
        return Ok(map);
    }
    match order {
        EulerOrder::Two => {
            let f = system.drive(y, dx);
            let d = system.drive_jacobian(y, dx);
            let mut second = &d * &d;
            for (i, &w) in dx.iter().enumerate() {
                if w != 0.0 {
                    let hess = system
                        .hessian_field(i, y)
                        .ok_or_else(|| Error::MissingHessian(system.name().to_string()))?;
                    second += hess.directional(&f) * w;
                }
            }
            Ok(id + d + second * 0.5)
        }
        EulerOrder::Three => {
            let mut jac = DMatrix::zeros(n, n);
            for a in 0..n {
                let step = EULER_TANGENT_STEP * y[a].abs().max(1.0);
                let mut plus = y.clone();
                let mut minus = y.clone();
                plus[a] += step;
                minus[a] -= step;
                let col = (simplified_euler_step(system, order, &plus, dx)?
                    - simplified_euler_step(system, order, &minus, dx)?)
                    / (2.0 * step);
                jac.set_column(a, &col);
            }
            Ok(jac)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::tableau::{builtin_tableau, midpoint};
    use crate::systems::{kubo_system, trig_system, KuboParams, TrigSystem};
    use nalgebra::DVector;

    #[test]
    fn zero_increment_is_identity() {
        let y = DVector::from_vec(vec![0.7, -1.2]);
        let trig = trig_system();
        let kubo = kubo_system(KuboParams::default()).unwrap();
        for name in ["midpoint", "method-1", "method-2"] {
            let t = builtin_tableau(name).unwrap();
            assert_eq!(rk_step(&trig, &t, &y, &[0.0; 3], &SolverConfig::default()).unwrap(), y);
        }
        assert_eq!(
            midpoint_step_linear(kubo.linear_form().unwrap(), &y, &[0.0; 4]).unwrap(),
            y
        );
        for order in [EulerOrder::Two, EulerOrder::Three] {
            assert_eq!(simplified_euler_step(&trig, order, &y, &[0.0; 3]).unwrap(), y);
        }
    }

    #[test]
    fn cayley_oracle_for_pure_drift() {
        let kubo = kubo_system(KuboParams::default()).unwrap();
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let h: f64 = 0.1;
        let got = midpoint_step_linear(kubo.linear_form().unwrap(), &y, &[h, 0.0, 0.0, 0.0]).unwrap();
        // (I − (h/2)A)⁻¹(I + (h/2)A) for A the quarter-turn generator:
        // [[1 − c², −2c], [2c, 1 − c²]] / (1 + c²), c = h/2.
        let c = h / 2.0;
        let den = 1.0 + c * c;
        let expected = DVector::from_vec(vec![
            ((1.0 - c * c) * 1.0 - 2.0 * c * 2.0) / den,
            (2.0 * c * 1.0 + (1.0 - c * c) * 2.0) / den,
        ]);
        assert!((got - expected).amax() < 1e-15);
    }

    #[test]
    fn linear_midpoint_conserves_norm() {
        let kubo = kubo_system(KuboParams {
            epsilon: 2.0,
            ..Default::default()
        })
        .unwrap();
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let next = midpoint_step_linear(kubo.linear_form().unwrap(), &y, &[0.3, 1.2, -0.7, 2.5]).unwrap();
        assert!((next.norm() - y.norm()).abs() / y.norm() < 1e-13);
    }

    #[test]
    fn linear_midpoint_detects_singular_resolvent() {
        // I − ½·(2I) = 0.
        let a = vec![DMatrix::identity(2, 2)];
        let y = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(
            midpoint_step_linear(&a, &y, &[2.0]),
            Err(Error::SingularMatrix)
        ));
    }

    #[test]
    fn linear_midpoint_matches_fixed_point() {
        let kubo = kubo_system(KuboParams {
            epsilon: 1.5,
            ..Default::default()
        })
        .unwrap();
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let dx = [0.002, 0.05, -0.03, 0.04];
        let direct = midpoint_step_linear(kubo.linear_form().unwrap(), &y, &dx).unwrap();
        let iterated = rk_step(&kubo, &midpoint(), &y, &dx, &SolverConfig::default()).unwrap();
        assert!((direct - iterated).amax() < 1e-10);
    }

    #[test]
    fn euler_two_on_linear_system() {
        let kubo = kubo_system(KuboParams {
            epsilon: 1.5,
            ..Default::default()
        })
        .unwrap();
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let dx = [0.01, 0.2, -0.1, 0.3];
        let m = combine(kubo.linear_form().unwrap(), &dx);
        let expected = (DMatrix::identity(2, 2) + &m + &m * &m * 0.5) * &y;
        let got = simplified_euler_step(&kubo, EulerOrder::Two, &y, &dx).unwrap();
        assert!((got.clone() - expected).amax() < 1e-15);
        // |1 + iθ − θ²/2|² = 1 + θ⁴/4 for a rotation generator.
        let theta: f64 = 0.01 + 1.5 * 0.4;
        let ratio = got.norm_squared() / y.norm_squared();
        assert!((ratio - (1.0 + theta.powi(4) / 4.0)).abs() < 1e-13);
        assert!(ratio > 1.0);
    }

    #[test]
    fn euler_three_on_linear_system() {
        let kubo = kubo_system(KuboParams::default()).unwrap();
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let dx = [0.01, 0.2, -0.1, 0.3];
        let m = combine(kubo.linear_form().unwrap(), &dx);
        let m2 = &m * &m;
        let expected = (DMatrix::identity(2, 2) + &m + &m2 * 0.5 + &m2 * &m / 6.0) * &y;
        let got = simplified_euler_step(&kubo, EulerOrder::Three, &y, &dx).unwrap();
        assert!((got.clone() - expected).amax() < 1e-15);
        // 1 − θ⁴/12 + θ⁶/36
        let theta: f64 = 0.41;
        let ratio = got.norm_squared() / y.norm_squared();
        assert!((ratio - (1.0 - theta.powi(4) / 12.0 + theta.powi(6) / 36.0)).abs() < 1e-13);
    }

    #[derive(Debug)]
    struct NoHessian;

    impl SystemSpec for NoHessian {
        fn name(&self) -> &str {
            "no-hessian"
        }
        fn state_dim(&self) -> usize {
            2
        }
        fn noise_dim(&self) -> usize {
            2
        }
        fn vector_field(&self, c: usize, y: &State) -> State {
            TrigSystem.vector_field(c, y)
        }
        fn jacobian_field(&self, c: usize, y: &State) -> DMatrix<f64> {
            TrigSystem.jacobian_field(c, y)
        }
    }

    #[test]
    fn euler_three_needs_hessian() {
        let y = DVector::from_vec(vec![0.1, 0.2]);
        let dx = [0.01, 0.1, 0.1];
        assert!(simplified_euler_step(&NoHessian, EulerOrder::Two, &y, &dx).is_ok());
        assert!(matches!(
            simplified_euler_step(&NoHessian, EulerOrder::Three, &y, &dx),
            Err(Error::MissingHessian(_))
        ));
    }

    #[test]
    fn euler_tangents_match_finite_differences() {
        let sys = trig_system();
        let y = DVector::from_vec(vec![0.4, -0.9]);
        let dx = [0.05, 0.3, -0.2];
        for order in [EulerOrder::Two, EulerOrder::Three] {
            let jac = euler_tangent(&sys, order, &y, &dx).unwrap();
            let eps = 1e-6;
            for a in 0..2 {
                let mut p = y.clone();
                let mut m = y.clone();
                p[a] += eps;
                m[a] -= eps;
                let col = (simplified_euler_step(&sys, order, &p, &dx).unwrap()
                    - simplified_euler_step(&sys, order, &m, &dx).unwrap())
                    / (2.0 * eps);
                assert!((jac.column(a) - col).amax() < 1e-8, "{order:?}");
            }
        }
    }

    #[test]
    fn rk_tangent_matches_finite_differences() {
        let sys = trig_system();
        let y = DVector::from_vec(vec![0.4, -0.9]);
        let dx = [0.05, 0.1, -0.2];
        let cfg = SolverConfig {
            tolerance: 1e-14,
            ..Default::default()
        };
        for name in ["midpoint", "method-1", "method-2"] {
            let t = builtin_tableau(name).unwrap();
            let sol = solve_stages(&sys, &t, &y, &dx, &cfg).unwrap();
            let jac = rk_tangent(&sys, &t, &dx, &sol, &DMatrix::identity(2, 2)).unwrap();
            let eps = 1e-6;
            for a in 0..2 {
                let mut p = y.clone();
                let mut m = y.clone();
                p[a] += eps;
                m[a] -= eps;
                let col = (rk_step(&sys, &t, &p, &dx, &cfg).unwrap() - rk_step(&sys, &t, &m, &dx, &cfg).unwrap())
                    / (2.0 * eps);
                assert!((jac.column(a) - col).amax() < 1e-7, "{name}");
            }
            assert!((jac.determinant() - 1.0).abs() < 1e-12, "{name}");
        }
    }
}
