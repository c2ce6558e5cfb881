//! Solvers for the implicit stage equations
//! `Z_α = y + Σ_β a_{αβ} Σ_i V_i(Z_β) dxⁱ`.

use nalgebra::{DMatrix, DVector};

use super::tableau::ButcherTableau;
use crate::error::{Error, Result};
use crate::systems::{State, SystemSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum StageStrategy {
    /// Picard iteration from `Z_α = y`.
    #[default]
    FixedPoint,
    /// Newton's method on the stacked stage residual, using `jacobian_field`.
    Newton,
    /// One dense linear solve; requires a linear system.
    DirectLinear,
}

impl StageStrategy {
    pub fn name(self) -> &'static str {
        match self {
            StageStrategy::FixedPoint => "fixed-point",
            StageStrategy::Newton => "newton",
            StageStrategy::DirectLinear => "direct-linear",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "fixed-point" => Ok(StageStrategy::FixedPoint),
            "newton" => Ok(StageStrategy::Newton),
            "direct-linear" => Ok(StageStrategy::DirectLinear),
            other => Err(Error::Domain(format!("unknown stage strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Bound on the sup-norm of the stage residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub strategy: StageStrategy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-12,
            max_iterations: 100,
            strategy: StageStrategy::FixedPoint,
        }
    }
}

impl SolverConfig {
    pub fn with_strategy(mut self, strategy: StageStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Domain(format!(
                "solver tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Converged stage values.
#[derive(Debug, Clone)]
pub struct StageSolution {
    pub stages: Vec<State>,
    /// Updates performed after the initial residual check.
    pub iterations: usize,
    pub residual: f64,
}

/// Solves the stage equations of one Runge–Kutta step.
pub fn solve_stages(
    system: &dyn SystemSpec,
    tableau: &ButcherTableau,
    y: &State,
    dx: &[f64],
    cfg: &SolverConfig,
) -> Result<StageSolution> {
    cfg.validate()?;
    match cfg.strategy {
        StageStrategy::FixedPoint => fixed_point(system, tableau, y, dx, cfg),
        StageStrategy::Newton => newton(system, tableau, y, dx, cfg),
        StageStrategy::DirectLinear => direct_linear(system, tableau, y, dx),
    }
}

/// `Z_α − y − Σ_β a_{αβ} F(Z_β)` given `F(Z_β)`.
fn stage_residuals(a: &DMatrix<f64>, y: &State, z: &[State], f: &[State]) -> Vec<State> {
    let s = z.len();
    (0..s)
        .map(|i| {
            let mut r = &z[i] - y;
            for j in 0..s {
                if a[(i, j)] != 0.0 {
                    r.axpy(-a[(i, j)], &f[j], 1.0);
                }
            }
            r
        })
        .collect()
}

fn sup_norm(v: &[State]) -> f64 {
    v.iter()
        .flat_map(|x| x.iter())
        .fold(0.0_f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn fixed_point(
    system: &dyn SystemSpec,
    tableau: &ButcherTableau,
    y: &State,
    dx: &[f64],
    cfg: &SolverConfig,
) -> Result<StageSolution> {
    let s = tableau.stages();
    let mut z = vec![y.clone(); s];
    let mut iterations = 0;
    loop {
        let f: Vec<State> = z.iter().map(|zj| system.drive(zj, dx)).collect();
        let r = stage_residuals(tableau.a(), y, &z, &f);
        let residual = sup_norm(&r);
        if residual <= cfg.tolerance {
            return Ok(StageSolution {
                stages: z,
                iterations,
                residual,
            });
        }
        if !residual.is_finite() || iterations == cfg.max_iterations {
            return Err(Error::NonConvergence { iterations, residual });
        }
        // Picard update: Z ← Z − r = y + a·F(Z).
        for (zi, ri) in z.iter_mut().zip(&r) {
            *zi -= ri;
        }
        iterations += 1;
    }
}

fn newton(
    system: &dyn SystemSpec,
    tableau: &ButcherTableau,
    y: &State,
    dx: &[f64],
    cfg: &SolverConfig,
) -> Result<StageSolution> {
    let s = tableau.stages();
    let n = y.len();
    let a = tableau.a();
    let mut z = vec![y.clone(); s];
    let mut iterations = 0;
    loop {
        let f: Vec<State> = z.iter().map(|zj| system.drive(zj, dx)).collect();
        let r = stage_residuals(a, y, &z, &f);
        let residual = sup_norm(&r);
        if residual <= cfg.tolerance {
            return Ok(StageSolution {
                stages: z,
                iterations,
                residual,
            });
        }
        if !residual.is_finite() || iterations == cfg.max_iterations {
            return Err(Error::NonConvergence { iterations, residual });
        }
        let blocks: Vec<DMatrix<f64>> = z.iter().map(|zj| system.drive_jacobian(zj, dx)).collect();
        let jac = stacked_operator(a, &blocks, n);
        let rhs = DVector::from_iterator(s * n, r.iter().flat_map(|ri| ri.iter().map(|v| -v)));
        let delta = jac.lu().solve(&rhs).ok_or(Error::SingularMatrix)?;
        for (i, zi) in z.iter_mut().enumerate() {
            *zi += delta.rows(i * n, n);
        }
        iterations += 1;
    }
}

/// `I − [a_{αβ} B_β]` on the stacked stage vector, with `B_β` the per-stage blocks.
pub(crate) fn stacked_operator(a: &DMatrix<f64>, blocks: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let s = blocks.len();
    let mut op = DMatrix::identity(s * n, s * n);
    for i in 0..s {
        for j in 0..s {
            if a[(i, j)] != 0.0 {
                let mut view = op.view_mut((i * n, j * n), (n, n));
                view -= &blocks[j] * a[(i, j)];
            }
        }
    }
    op
}

fn direct_linear(system: &dyn SystemSpec, tableau: &ButcherTableau, y: &State, dx: &[f64]) -> Result<StageSolution> {
    let matrices = system
        .linear_form()
        .ok_or_else(|| Error::MissingLinearForm(system.name().to_string()))?;
    let n = y.len();
    let s = tableau.stages();
    let m = combine(matrices, dx);
    let op = stacked_operator(tableau.a(), &vec![m; s], n);
    let rhs = DVector::from_iterator(s * n, (0..s).flat_map(|_| y.iter().copied()));
    let sol = op.lu().solve(&rhs).ok_or(Error::SingularMatrix)?;
    let stages: Vec<State> = (0..s).map(|i| sol.rows(i * n, n).into_owned()).collect();
    let f: Vec<State> = stages.iter().map(|zj| system.drive(zj, dx)).collect();
    let residual = sup_norm(&stage_residuals(tableau.a(), y, &stages, &f));
    Ok(StageSolution {
        stages,
        iterations: 0,
        residual,
    })
}

/// `M = Σ_i A_i dxⁱ`.
pub fn combine(matrices: &[DMatrix<f64>], dx: &[f64]) -> DMatrix<f64> {
    let n = matrices[0].nrows();
    matrices
        .iter()
        .zip(dx)
        .fold(DMatrix::zeros(n, n), |acc, (a, &w)| acc + a * w)
}
