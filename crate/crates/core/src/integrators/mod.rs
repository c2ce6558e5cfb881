//! Runge–Kutta schemes driven by path increments, the explicit simplified
//! Euler baselines, and trajectory integration with optional tangent
//! (Jacobian) propagation.
//!
//! The time channel is channel 0 of every increment vector, so drift and
//! noise are handled by the same code path.

mod solver;
mod step;
mod tableau;

use std::io::Write;

use nalgebra::DMatrix;

pub use solver::{combine, solve_stages, SolverConfig, StageSolution, StageStrategy};
pub use step::{cayley, midpoint_step_linear, rk_step, simplified_euler_step, EulerOrder};
pub use tableau::{
    builtin_tableau, explicit_euler, is_symplectic, method_one, method_two, method_two_root, midpoint, ButcherTableau,
    BUILTIN_TABLEAUS,
};

use crate::csv::fmt_f64;
use crate::error::{Error, Result};
use crate::paths::SamplePath;
use crate::systems::{State, SystemSpec};

/// Scheme names accepted by [`Scheme::from_name`].
pub const SCHEME_NAMES: [&str; 6] = [
    "midpoint",
    "method-1",
    "method-2",
    "linear-midpoint",
    "euler2",
    "euler3",
];

/// A one-step method.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    RungeKutta {
        tableau: ButcherTableau,
        solver: SolverConfig,
    },
    SimplifiedEuler(EulerOrder),
    /// Midpoint solved directly through the linear form.
    LinearMidpoint,
}

impl Scheme {
    pub fn runge_kutta(tableau: ButcherTableau, solver: SolverConfig) -> Self {
        Scheme::RungeKutta { tableau, solver }
    }

    pub fn from_name(name: &str, solver: SolverConfig) -> Result<Self> {
        match name {
            "linear-midpoint" => Ok(Scheme::LinearMidpoint),
            "euler2" => Ok(Scheme::SimplifiedEuler(EulerOrder::Two)),
            "euler3" => Ok(Scheme::SimplifiedEuler(EulerOrder::Three)),
            other => match builtin_tableau(other) {
                Ok(tableau) => Ok(Scheme::RungeKutta { tableau, solver }),
                Err(_) => Err(Error::UnknownScheme(other.to_string())),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            Scheme::RungeKutta { tableau, .. } => tableau.name().to_string(),
            Scheme::SimplifiedEuler(order) => format!("euler{}", order.order()),
            Scheme::LinearMidpoint => "linear-midpoint".to_string(),
        }
    }

    /// Advances `y` by one increment. When `jac` is given it is replaced by
    /// the propagated tangent. Returns the stage solver's iteration count.
    pub fn step(
        &self,
        system: &dyn SystemSpec,
        y: &mut State,
        jac: Option<&mut DMatrix<f64>>,
        dx: &[f64],
    ) -> Result<usize> {
        match self {
            Scheme::RungeKutta { tableau, solver } => {
                let sol = solve_stages(system, tableau, y, dx, solver)?;
                if let Some(j) = jac {
                    *j = step::rk_tangent(system, tableau, dx, &sol, j)?;
                }
                *y = step::rk_update(system, tableau, y, dx, &sol);
                Ok(sol.iterations)
            }
            Scheme::SimplifiedEuler(order) => {
                if let Some(j) = jac {
                    *j = step::euler_tangent(system, *order, y, dx)? * &*j;
                }
                *y = simplified_euler_step(system, *order, y, dx)?;
                Ok(0)
            }
            Scheme::LinearMidpoint => {
                let matrices = system
                    .linear_form()
                    .ok_or_else(|| Error::MissingLinearForm(system.name().to_string()))?;
                if let Some(j) = jac {
                    *j = cayley(matrices, dx)? * &*j;
                }
                *y = midpoint_step_linear(matrices, y, dx)?;
                Ok(0)
            }
        }
    }
}

/// Numerical solution on the grid of a [`SamplePath`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// `∂Y_k/∂z`, identity at `k = 0`.
    pub jacobians: Option<Vec<DMatrix<f64>>>,
    /// Stage-solver iterations per step (zero for explicit and direct schemes).
    pub stage_iterations: Vec<usize>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Writes `t,y1,...,yn[,j11,...,jnn]`, Jacobians row-major.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.states[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("y{i}")));
        if self.jacobians.is_some() {
            for r in 1..=n {
                header.extend((1..=n).map(|c| format!("j{r}{c}")));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for (k, (t, y)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row = vec![fmt_f64(*t)];
            row.extend(y.iter().map(|&v| fmt_f64(v)));
            if let Some(jacs) = &self.jacobians {
                let j = &jacs[k];
                for r in 0..n {
                    row.extend((0..n).map(|c| fmt_f64(j[(r, c)])));
                }
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Integrates `system` along `path` from `z`.
///
/// With `with_jacobian`, the tangent `∂Y/∂z` is propagated by the same
/// scheme applied to the variational equation, reusing the state stages.
pub fn integrate(
    system: &dyn SystemSpec,
    scheme: &Scheme,
    path: &SamplePath,
    z: &State,
    with_jacobian: bool,
) -> Result<Trajectory> {
    if path.noise_dim() != system.noise_dim() {
        return Err(Error::NoiseDimension {
            system: system.noise_dim(),
            path: path.noise_dim(),
        });
    }
    if z.len() != system.state_dim() {
        return Err(Error::Domain(format!(
            "initial value has dimension {}, system expects {}",
            z.len(),
            system.state_dim()
        )));
    }
    let steps = path.steps();
    let n = z.len();
    let mut states = Vec::with_capacity(steps + 1);
    let mut jacobians = with_jacobian.then(|| Vec::with_capacity(steps + 1));
    let mut stage_iterations = Vec::with_capacity(steps);
    let mut y = z.clone();
    let mut jac = DMatrix::identity(n, n);
    states.push(y.clone());
    if let Some(js) = jacobians.as_mut() {
        js.push(jac.clone());
    }
    for k in 0..steps {
        let dx = path.increment(k);
        let iters = scheme
            .step(system, &mut y, with_jacobian.then_some(&mut jac), &dx)
            .map_err(|e| Error::Step {
                step: k,
                source: Box::new(e),
            })?;
        stage_iterations.push(iters);
        states.push(y.clone());
        if let Some(js) = jacobians.as_mut() {
            js.push(jac.clone());
        }
    }
    Ok(Trajectory {
        times: path.times().to_vec(),
        states,
        jacobians,
        stage_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{sample_fbm, FbmConfig};
    use crate::systems::{kubo_system, trig_system, KuboParams};
    use nalgebra::DVector;

    #[test]
    fn scheme_names_round_trip() {
        for name in SCHEME_NAMES {
            assert_eq!(Scheme::from_name(name, SolverConfig::default()).unwrap().name(), name);
        }
        assert!(matches!(
            Scheme::from_name("rk4", SolverConfig::default()),
            Err(Error::UnknownScheme(_))
        ));
    }

    #[test]
    fn zero_step_path() {
        let path = SamplePath::zero(2, 0.0, 0).unwrap();
        let z = DVector::from_vec(vec![1.0, 2.0]);
        let scheme = Scheme::from_name("midpoint", SolverConfig::default()).unwrap();
        let tr = integrate(&trig_system(), &scheme, &path, &z, true).unwrap();
        assert_eq!(tr.states, vec![z]);
        assert_eq!(tr.jacobians.unwrap(), vec![DMatrix::identity(2, 2)]);
    }

    #[test]
    fn dimension_checks() {
        let path = sample_fbm(&FbmConfig::new(0.4, 3, 1.0, 8, 1).unwrap()).unwrap();
        let scheme = Scheme::from_name("midpoint", SolverConfig::default()).unwrap();
        let z = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            integrate(&trig_system(), &scheme, &path, &z, false),
            Err(Error::NoiseDimension { system: 2, path: 3 })
        ));
        let kubo = kubo_system(KuboParams::default()).unwrap();
        assert!(integrate(&kubo, &scheme, &path, &DVector::zeros(3), false).is_err());
    }

    #[test]
    fn failing_step_is_indexed() {
        let kubo = kubo_system(KuboParams {
            epsilon: 50.0,
            ..Default::default()
        })
        .unwrap();
        let path = sample_fbm(&FbmConfig::new(0.4, 3, 1.0, 8, 1).unwrap()).unwrap();
        let scheme = Scheme::from_name("midpoint", SolverConfig::default()).unwrap();
        let err = integrate(&kubo, &scheme, &path, &DVector::from_vec(vec![1.0, 1.0]), false).unwrap_err();
        assert!(matches!(err, Error::Step { step: 0, .. }));
        assert!(err.is_non_convergence());
    }

    #[test]
    fn kubo_midpoint_determinant_is_one() {
        let kubo = kubo_system(KuboParams {
            epsilon: 1.5,
            ..Default::default()
        })
        .unwrap();
        let path = sample_fbm(&FbmConfig::new(0.4, 3, 1.0, 200, 4).unwrap()).unwrap();
        let z = DVector::from_vec(vec![1.0, 2.0]);
        for name in ["midpoint", "linear-midpoint"] {
            let scheme = Scheme::from_name(name, SolverConfig::default()).unwrap();
            let tr = integrate(&kubo, &scheme, &path, &z, true).unwrap();
            for j in tr.jacobians.as_ref().unwrap() {
                assert!((j.determinant() - 1.0).abs() < 1e-9, "{name}");
            }
        }
    }

    #[test]
    fn trajectory_csv_layout() {
        let path = sample_fbm(&FbmConfig::new(0.4, 2, 0.1, 4, 1).unwrap()).unwrap();
        let scheme = Scheme::from_name("method-1", SolverConfig::default()).unwrap();
        let tr = integrate(&trig_system(), &scheme, &path, &DVector::from_vec(vec![1.0, 2.0]), true).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,y1,y2,j11,j12,j21,j22");
        assert_eq!(lines.count(), 5);
    }
}
