//! Rough Hamiltonian systems `dY = Σ_{i=0}^{d} V_i(Y) dX^i` with `X⁰_t = t`.
//!
//! A system is a set of pure functions: the vector fields, their Jacobians,
//! optionally their second derivatives, a linear form `V_i(Y) = A_i Y` and an
//! exact solution. Two built-ins are provided: a bounded trigonometric system
//! in the plane and the Kubo oscillator.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type State = DVector<f64>;

/// Dense second derivative of one vector field: entry `(r, a, b)` is
/// `∂²V^r / ∂y_a ∂y_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hessian {
    dim: usize,
    data: Vec<f64>,
}

impl Hessian {
    pub fn zeros(dim: usize) -> Self {
        Hessian {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, a: usize, b: usize) -> f64 {
        self.data[(r * self.dim + a) * self.dim + b]
    }

    pub fn set(&mut self, r: usize, a: usize, b: usize, v: f64) {
        self.data[(r * self.dim + a) * self.dim + b] = v;
    }

    /// Sets a mixed partial and its mirror.
    fn set_sym(&mut self, r: usize, a: usize, b: usize, v: f64) {
        self.set(r, a, b, v);
        self.set(r, b, a, v);
    }

    /// Bilinear contraction `D²V(u, v)`.
    pub fn contract(&self, u: &State, v: &State) -> State {
        let n = self.dim;
        DVector::from_fn(n, |r, _| {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += self.get(r, a, b) * u[a] * v[b];
                }
            }
            acc
        })
    }

    /// Matrix `w ↦ D²V(u, w)`.
    pub fn directional(&self, u: &State) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |r, b| (0..n).map(|a| self.get(r, a, b) * u[a]).sum())
    }
}

/// A system of vector fields indexed by channel `0..=d`; channel 0 is time.
pub trait SystemSpec: Send + Sync + Debug {
    fn name(&self) -> &str;

    /// Phase-space dimension `2m`.
    fn state_dim(&self) -> usize;

    /// Number of Gaussian channels `d`.
    fn noise_dim(&self) -> usize;

    fn vector_field(&self, channel: usize, y: &State) -> State;

    fn jacobian_field(&self, channel: usize, y: &State) -> DMatrix<f64>;

    fn hessian_field(&self, _channel: usize, _y: &State) -> Option<Hessian> {
        None
    }

    /// Matrices `A_0..A_d` when every field is linear.
    fn linear_form(&self) -> Option<&[DMatrix<f64>]> {
        None
    }

    /// Exact solution from `z` at time `t`, given `X¹_t..X^d_t`.
    fn exact_solution(&self, _z: &State, _t: f64, _noise_values: &[f64]) -> Option<State> {
        None
    }

    /// `Σ_i V_i(y) dxⁱ`.
    fn drive(&self, y: &State, dx: &[f64]) -> State {
        let mut out = DVector::zeros(self.state_dim());
        for (i, &w) in dx.iter().enumerate() {
            if w != 0.0 {
                out.axpy(w, &self.vector_field(i, y), 1.0);
            }
        }
        out
    }

    /// `Σ_i DV_i(y) dxⁱ`.
    fn drive_jacobian(&self, y: &State, dx: &[f64]) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut out = DMatrix::zeros(n, n);
        for (i, &w) in dx.iter().enumerate() {
            if w != 0.0 {
                out += self.jacobian_field(i, y) * w;
            }
        }
        out
    }
}

/// Central-difference Jacobian of `vector_field(channel, ·)`.
pub fn finite_difference_jacobian(system: &dyn SystemSpec, channel: usize, y: &State, step: f64) -> DMatrix<f64> {
    let n = system.state_dim();
    let mut jac = DMatrix::zeros(n, n);
    for a in 0..n {
        let mut plus = y.clone();
        let mut minus = y.clone();
        plus[a] += step;
        minus[a] -= step;
        let col = (system.vector_field(channel, &plus) - system.vector_field(channel, &minus)) / (2.0 * step);
        jac.set_column(a, &col);
    }
    jac
}

/// Central-difference second derivative built from `jacobian_field`.
pub fn finite_difference_hessian(system: &dyn SystemSpec, channel: usize, y: &State, step: f64) -> Hessian {
    let n = system.state_dim();
    let mut hess = Hessian::zeros(n);
    for b in 0..n {
        let mut plus = y.clone();
        let mut minus = y.clone();
        plus[b] += step;
        minus[b] -= step;
        let d = (system.jacobian_field(channel, &plus) - system.jacobian_field(channel, &minus)) / (2.0 * step);
        for r in 0..n {
            for a in 0..n {
                hess.set(r, a, b, d[(r, a)]);
            }
        }
    }
    hess
}

/// Step used by the finite-difference Hessian fallback.
pub const HESSIAN_FD_STEP: f64 = 1e-5;

/// Canonical symplectic matrix `[[0, I], [−I, 0]]` of size `2m`.
pub fn canonical_symplectic(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(2 * m, 2 * m, |r, c| {
        if c == r + m {
            1.0
        } else if r == c + m {
            -1.0
        } else {
            0.0
        }
    })
}

/// `H_0 = sin P cos Q`, `H_1 = cos P`, `H_2 = sin Q` with two noise channels.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigSystem;

pub fn trig_system() -> TrigSystem {
    TrigSystem
}

impl SystemSpec for TrigSystem {
    fn name(&self) -> &str {
        "trig"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn vector_field(&self, channel: usize, y: &State) -> State {
        let (p, q) = (y[0], y[1]);
        match channel {
            0 => DVector::from_vec(vec![p.sin() * q.sin(), p.cos() * q.cos()]),
            1 => DVector::from_vec(vec![0.0, -p.sin()]),
            2 => DVector::from_vec(vec![-q.cos(), 0.0]),
            _ => panic!("trig system has channels 0..=2, got {channel}"),
        }
    }

    fn jacobian_field(&self, channel: usize, y: &State) -> DMatrix<f64> {
        let (sp, cp, sq, cq) = (y[0].sin(), y[0].cos(), y[1].sin(), y[1].cos());
        match channel {
            0 => DMatrix::from_row_slice(2, 2, &[cp * sq, sp * cq, -sp * cq, -cp * sq]),
            1 => DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -cp, 0.0]),
            2 => DMatrix::from_row_slice(2, 2, &[0.0, sq, 0.0, 0.0]),
            _ => panic!("trig system has channels 0..=2, got {channel}"),
        }
    }

    fn hessian_field(&self, channel: usize, y: &State) -> Option<Hessian> {
        let (sp, cp, sq, cq) = (y[0].sin(), y[0].cos(), y[1].sin(), y[1].cos());
        let mut h = Hessian::zeros(2);
        match channel {
            0 => {
                h.set(0, 0, 0, -sp * sq);
                h.set_sym(0, 0, 1, cp * cq);
                h.set(0, 1, 1, -sp * sq);
                h.set(1, 0, 0, -cp * cq);
                h.set_sym(1, 0, 1, sp * sq);
                h.set(1, 1, 1, -cp * cq);
            }
            1 => h.set(1, 0, 0, sp),
            2 => h.set(0, 1, 1, cq),
            _ => panic!("trig system has channels 0..=2, got {channel}"),
        }
        Some(h)
    }
}

/// Parameters of the Kubo oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KuboParams {
    /// Noise amplitude `ε`.
    pub epsilon: f64,
    /// Number of noise channels `d`.
    pub dims: usize,
    /// Initial value `(p, q)`.
    pub initial: [f64; 2],
}

impl Default for KuboParams {
    fn default() -> Self {
        KuboParams {
            epsilon: 1.0,
            dims: 3,
            initial: [1.0, 1.0],
        }
    }
}

/// `dY = A_0 Y dt + ε Σ_i A_0 Y dXⁱ` with `A_0` the quarter-turn generator.
#[derive(Debug, Clone)]
pub struct KuboSystem {
    pub params: KuboParams,
    matrices: Vec<DMatrix<f64>>,
}

pub fn kubo_system(params: KuboParams) -> Result<KuboSystem> {
    if params.dims == 0 {
        return Err(Error::Domain(
            "the Kubo oscillator needs at least one noise channel".into(),
        ));
    }
    let generator = |s: f64| DMatrix::from_row_slice(2, 2, &[0.0, -s, s, 0.0]);
    let matrices = std::iter::once(generator(1.0))
        .chain((0..params.dims).map(|_| generator(params.epsilon)))
        .collect();
    Ok(KuboSystem { params, matrices })
}

/// Exact Kubo flow: a rotation of `z` by `θ = t + ε Σ_i X^i_t`.
pub fn kubo_exact(params: &KuboParams, z: [f64; 2], t: f64, noise_values: &[f64]) -> [f64; 2] {
    let theta = t + params.epsilon * noise_values.iter().sum::<f64>();
    let (s, c) = theta.sin_cos();
    [z[0] * c - z[1] * s, z[1] * c + z[0] * s]
}

impl SystemSpec for KuboSystem {
    fn name(&self) -> &str {
        "kubo"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        self.params.dims
    }

    fn vector_field(&self, channel: usize, y: &State) -> State {
        &self.matrices[channel] * y
    }

    fn jacobian_field(&self, channel: usize, _y: &State) -> DMatrix<f64> {
        self.matrices[channel].clone()
    }

    fn hessian_field(&self, _channel: usize, _y: &State) -> Option<Hessian> {
        Some(Hessian::zeros(2))
    }

    fn linear_form(&self) -> Option<&[DMatrix<f64>]> {
        Some(&self.matrices)
    }

    fn exact_solution(&self, z: &State, t: f64, noise_values: &[f64]) -> Option<State> {
        let [p, q] = kubo_exact(&self.params, [z[0], z[1]], t, noise_values);
        Some(DVector::from_vec(vec![p, q]))
    }
}

/// Built-in system by name (`"trig"` or `"kubo"`).
pub fn builtin_system(name: &str, kubo: KuboParams) -> Result<Box<dyn SystemSpec>> {
    match name {
        "trig" => Ok(Box::new(TrigSystem)),
        "kubo" => Ok(Box::new(kubo_system(kubo)?)),
        other => Err(Error::Domain(format!("unknown system `{other}`"))),
    }
}
