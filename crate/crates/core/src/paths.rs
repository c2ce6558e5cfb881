//! Fractional Brownian motion drivers on a uniform grid.
//!
//! A [`SamplePath`] carries the time channel `X⁰_t = t` in column 0 and `d`
//! independent fBm channels in columns `1..=d`. Increments (fractional
//! Gaussian noise) are the simulated primitive; path values are their
//! cumulative sums, so every channel starts at zero.
//!
//! Two exact samplers are available. [`FbmMethod::Cholesky`] factors the
//! dense Toeplitz covariance of the increments; [`FbmMethod::CirculantEmbedding`]
//! diagonalises a circulant extension of it with an FFT. Both reproduce the
//! increment covariance exactly; the circulant route is the only one that
//! scales past a few thousand steps.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::csv::fmt_f64;
use crate::error::{Error, Result};

/// Largest step count sampled with a dense Cholesky factor under [`FbmMethod::Auto`].
pub const CHOLESKY_MAX_STEPS: usize = 2048;

/// Sampling algorithm for the increments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FbmMethod {
    /// Cholesky up to [`CHOLESKY_MAX_STEPS`], circulant embedding above.
    #[default]
    Auto,
    Cholesky,
    CirculantEmbedding,
}

impl FbmMethod {
    fn resolve(self, steps: usize) -> FbmMethod {
        match self {
            FbmMethod::Auto if steps <= CHOLESKY_MAX_STEPS => FbmMethod::Cholesky,
            FbmMethod::Auto => FbmMethod::CirculantEmbedding,
            other => other,
        }
    }
}

/// Parameters of a multi-channel fBm sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmConfig {
    pub hurst: f64,
    /// Number of independent noise channels `d`.
    pub dims: usize,
    /// Horizon `T`.
    pub horizon: f64,
    /// Number of grid steps `N`.
    pub steps: usize,
    pub seed: u64,
    pub method: FbmMethod,
}

impl FbmConfig {
    pub fn new(hurst: f64, dims: usize, horizon: f64, steps: usize, seed: u64) -> Result<Self> {
        let cfg = FbmConfig {
            hurst,
            dims,
            horizon,
            steps,
            seed,
            method: FbmMethod::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_method(mut self, method: FbmMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        if self.dims == 0 {
            return Err(Error::Domain("at least one noise channel is required".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 {
            return Err(Error::Domain("step count must be at least 1".into()));
        }
        Ok(())
    }

    /// Regularity index `ρ = 1/(2H)`.
    pub fn rho(&self) -> f64 {
        1.0 / (2.0 * self.hurst)
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "Hurst parameter must lie in (0, 1), got {hurst}"
        )))
    }
}

/// Autocovariance of fractional Gaussian noise with step `h` at integer `lag`.
///
/// `γ(k) = ½(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H}) h^{2H}`
pub fn fgn_covariance(lag: usize, hurst: f64, h: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Domain(format!("step size must be positive, got {h}")));
    }
    Ok(unit_fgn_covariance(lag, hurst) * h.powf(2.0 * hurst))
}

fn unit_fgn_covariance(lag: usize, hurst: f64) -> f64 {
    let two_h = 2.0 * hurst;
    let k = lag as f64;
    if lag == 0 {
        return 1.0;
    }
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).powf(two_h))
}

/// Discretised driver: time channel plus `d` Gaussian channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    times: Vec<f64>,
    /// Row-major `(N+1) × (d+1)`.
    values: Vec<f64>,
    width: usize,
    pub hurst: f64,
    pub seed: u64,
}

impl SamplePath {
    /// Builds a path from per-channel increments (each of length `N`).
    /// A zero-step path is the single point `t = 0`.
    pub fn from_increments(horizon: f64, increments: &[Vec<f64>], hurst: f64, seed: u64) -> Result<Self> {
        if increments.is_empty() {
            return Err(Error::Domain("at least one noise channel is required".into()));
        }
        let steps = increments[0].len();
        if increments.iter().any(|c| c.len() != steps) {
            return Err(Error::Domain("channels must share one step count".into()));
        }
        let width = increments.len() + 1;
        let times = grid(horizon, steps);
        let mut values = vec![0.0; (steps + 1) * width];
        for k in 0..=steps {
            values[k * width] = times[k];
        }
        for (c, incs) in increments.iter().enumerate() {
            let mut acc = 0.0;
            for (k, dx) in incs.iter().enumerate() {
                acc += dx;
                values[(k + 1) * width + c + 1] = acc;
            }
        }
        Ok(SamplePath {
            times,
            values,
            width,
            hurst,
            seed,
        })
    }

    /// A path whose Gaussian channels are identically zero (pure drift).
    pub fn zero(dims: usize, horizon: f64, steps: usize) -> Result<Self> {
        Self::from_increments(horizon, &vec![vec![0.0; steps]; dims], 0.5, 0)
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Number of Gaussian channels `d` (excluding time).
    pub fn noise_dim(&self) -> usize {
        self.width - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.steps()]
    }

    /// Grid spacing; zero for a single-point path.
    pub fn step_size(&self) -> f64 {
        match self.steps() {
            0 => 0.0,
            n => self.horizon() / n as f64,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Row `k`: `(t_k, X¹_{t_k}, …, X^d_{t_k})`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.width..(k + 1) * self.width]
    }

    /// Gaussian channel values at grid point `k` (without the time channel).
    pub fn noise_values(&self, k: usize) -> &[f64] {
        &self.row(k)[1..]
    }

    /// Increment `X_{t_k, t_{k+1}}` over all `d+1` channels, time first.
    pub fn increment(&self, k: usize) -> Vec<f64> {
        let (a, b) = (self.row(k), self.row(k + 1));
        b.iter().zip(a).map(|(x1, x0)| x1 - x0).collect()
    }

    /// Restriction to every `factor`-th grid point. Values are copied.
    pub fn coarsen(&self, factor: usize) -> Result<SamplePath> {
        let steps = self.steps();
        if factor == 0 || !steps.is_multiple_of(factor) {
            return Err(Error::CoarsenFactor { factor, steps });
        }
        let times = self.times.iter().copied().step_by(factor).collect();
        let values = (0..=steps)
            .step_by(factor)
            .flat_map(|k| self.row(k).iter().copied())
            .collect();
        Ok(SamplePath {
            times,
            values,
            width: self.width,
            hurst: self.hurst,
            seed: self.seed,
        })
    }

    /// Writes `t,x1,...,xd` with one row per grid point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..self.width).map(|i| format!("x{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for k in 0..=self.steps() {
            let row: Vec<String> = self.row(k).iter().map(|&v| fmt_f64(v)).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn grid(horizon: f64, steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![0.0];
    }
    (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect()
}

#[derive(Debug)]
enum Factor {
    /// Lower Cholesky factor of the unit-step fGn covariance, rows packed
    /// contiguously (row `i` starts at `i * (i + 1) / 2`).
    Cholesky(Vec<f64>),
    /// `sqrt(λ_j / M)` for the circulant embedding of size `M = 2N`.
    Circulant(Vec<f64>),
}

/// Reusable exact fGn sampler for a fixed `(H, N, h)`.
///
/// The factorisation is computed once and is immutable afterwards, so a
/// sampler can be shared across threads.
#[derive(Debug, Clone)]
pub struct FgnSampler {
    hurst: f64,
    steps: usize,
    scale: f64,
    factor: Arc<Factor>,
}

impl FgnSampler {
    pub fn new(hurst: f64, steps: usize, h: f64, method: FbmMethod) -> Result<Self> {
        check_hurst(hurst)?;
        if steps == 0 {
            return Err(Error::Domain("step count must be at least 1".into()));
        }
        if h.is_nan() || h <= 0.0 {
            return Err(Error::Domain(format!("step size must be positive, got {h}")));
        }
        let factor = match method.resolve(steps) {
            FbmMethod::Cholesky => cholesky_factor(hurst, steps)?,
            _ => circulant_factor(hurst, steps)?,
        };
        Ok(FgnSampler {
            hurst,
            steps,
            scale: h.powf(hurst),
            factor: Arc::new(factor),
        })
    }

    pub fn for_config(cfg: &FbmConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(cfg.hurst, cfg.steps, cfg.step_size(), cfg.method)
    }

    /// One channel of increments drawn from `rng`.
    pub fn sample_increments(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.steps;
        match &*self.factor {
            Factor::Cholesky(l) => {
                let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
                (0..n)
                    .map(|i| {
                        let row = &l[i * (i + 1) / 2..][..=i];
                        let s: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                        s * self.scale
                    })
                    .collect()
            }
            Factor::Circulant(sqrt_eig) => {
                let m = sqrt_eig.len();
                let mut w: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let re: f64 = StandardNormal.sample(rng);
                        let im: f64 = StandardNormal.sample(rng);
                        Complex::new(s * re, s * im)
                    })
                    .collect();
                FftPlanner::new().plan_fft_forward(m).process(&mut w);
                w[..n].iter().map(|c| c.re * self.scale).collect()
            }
        }
    }

    /// Samples a `dims`-channel path. Channel `i` draws from stream `i` of
    /// the generator keyed by `seed`, so channels never share randomness.
    pub fn sample_path(&self, dims: usize, horizon: f64, seed: u64) -> Result<SamplePath> {
        let increments: Vec<Vec<f64>> = (1..=dims)
            .map(|channel| {
                let mut rng = channel_rng(seed, channel);
                self.sample_increments(&mut rng)
            })
            .collect();
        SamplePath::from_increments(horizon, &increments, self.hurst, seed)
    }
}

/// Generator for channel `channel` (1-based) of the path keyed by `seed`.
pub fn channel_rng(seed: u64, channel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel as u64);
    rng
}

fn cholesky_factor(hurst: f64, steps: usize) -> Result<Factor> {
    let gamma: Vec<f64> = (0..steps).map(|k| unit_fgn_covariance(k, hurst)).collect();
    let cov = DMatrix::from_fn(steps, steps, |i, j| gamma[i.abs_diff(j)]);
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("Cholesky failed for H = {hurst}, N = {steps}")))?;
    let l = chol.unpack();
    let packed = (0..steps)
        .flat_map(|i| (0..=i).map(move |j| (i, j)))
        .map(|(i, j)| l[(i, j)])
        .collect();
    Ok(Factor::Cholesky(packed))
}

fn circulant_factor(hurst: f64, steps: usize) -> Result<Factor> {
    let m = 2 * steps;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= steps { j } else { m - j };
            Complex::new(unit_fgn_covariance(lag, hurst), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    let max = row.iter().map(|c| c.re).fold(0.0_f64, f64::max);
    // Eigenvalues are real and nonnegative in exact arithmetic; only rounding-level
    // negatives are accepted.
    let floor = -1e-12 * max.max(1.0);
    let mut sqrt_eig = Vec::with_capacity(m);
    for (j, c) in row.iter().enumerate() {
        if c.re < floor {
            return Err(Error::NotPositiveDefinite(format!(
                "circulant eigenvalue {j} is {:e} for H = {hurst}, N = {steps}",
                c.re
            )));
        }
        sqrt_eig.push((c.re.max(0.0) / m as f64).sqrt());
    }
    Ok(Factor::Circulant(sqrt_eig))
}

/// Samples a multi-channel fBm path; a pure function of `cfg`.
pub fn sample_fbm(cfg: &FbmConfig) -> Result<SamplePath> {
    FgnSampler::for_config(cfg)?.sample_path(cfg.dims, cfg.horizon, cfg.seed)
}
