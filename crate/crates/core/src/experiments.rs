//! Pathwise studies: convergence-rate fits, phase-area evolution and
//! quadratic-invariant drift.
//!
//! Every step size in a convergence study is obtained by coarsening one fine
//! sample path, so all errors for a given path index refer to the same
//! realisation of the driver. Paths run in parallel; results are always
//! reported in path-index order.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::csv::fmt_f64;
use crate::error::{Error, Result};
use crate::integrators::{integrate, Scheme, Trajectory};
use crate::paths::{FbmMethod, FgnSampler, SamplePath};
use crate::systems::{builtin_system, KuboParams, State, SystemSpec};

/// Seed of path `index` in a study seeded with `base`.
///
/// A plain counter: adding paths never changes the seeds of earlier ones.
pub fn path_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// What the numerical solutions are compared against.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// The system's exact solution evaluated on the path.
    Exact,
    /// A numerical solution on the grid with `2^level` steps.
    FineGrid { scheme: Scheme, level: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    /// Built-in system name, `"trig"` or `"kubo"`.
    pub system: String,
    /// Used when `system == "kubo"`.
    pub kubo: KuboParams,
    pub schemes: Vec<Scheme>,
    pub hurst: f64,
    pub horizon: f64,
    pub initial: Vec<f64>,
    /// Coarsest grid has `2^coarsest_level` steps.
    pub coarsest_level: u32,
    /// Finest tested grid has `2^finest_level` steps.
    pub finest_level: u32,
    pub paths: usize,
    pub seed_base: u64,
    pub reference: Reference,
    /// Replace the Gaussian channels by zero (deterministic drift only).
    pub zero_noise: bool,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coarsest_level >= self.finest_level {
            return Err(Error::Domain(format!(
                "coarsest level {} must be below finest level {}",
                self.coarsest_level, self.finest_level
            )));
        }
        if self.finest_level > 24 {
            return Err(Error::Domain("finest level above 24 is not supported".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Domain("at least one scheme is required".into()));
        }
        if self.paths == 0 {
            return Err(Error::Domain("at least one path is required".into()));
        }
        if self.horizon.is_nan() || self.horizon <= 0.0 {
            return Err(Error::Domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(Error::Domain(format!(
                "Hurst parameter must lie in (0, 1), got {}",
                self.hurst
            )));
        }
        if let Reference::FineGrid { level, .. } = &self.reference {
            if *level < self.finest_level || *level > 24 {
                return Err(Error::Domain(format!(
                    "reference level {level} must lie between the finest level {} and 24",
                    self.finest_level
                )));
            }
        }
        Ok(())
    }

    fn sampled_level(&self) -> u32 {
        match &self.reference {
            Reference::FineGrid { level, .. } => (*level).max(self.finest_level),
            Reference::Exact => self.finest_level,
        }
    }

    pub fn step_sizes(&self) -> Vec<f64> {
        (self.coarsest_level..=self.finest_level)
            .map(|l| self.horizon / (1u64 << l) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPoint {
    pub h: f64,
    /// `max_{k ≥ 1} |Y^h_k − Y_ref(t_k)|` over the coarse grid.
    pub max_error: f64,
}

/// A step size left out of the slope fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedPoint {
    pub h: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathReport {
    pub path_index: usize,
    pub seed: u64,
    /// Every step size whose integration completed, finest last.
    pub points: Vec<ErrorPoint>,
    pub excluded: Vec<ExcludedPoint>,
    /// Least-squares slope over the finite points; `None` with fewer than two.
    pub slope: Option<f64>,
}

impl PathReport {
    /// Error at the largest tested step size, if it was measured.
    pub fn coarsest_error(&self) -> Option<f64> {
        self.points.first().map(|p| p.max_error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeReport {
    pub scheme: String,
    pub paths: Vec<PathReport>,
    /// Median of the per-path slopes that exist.
    pub median_slope: Option<f64>,
}

impl SchemeReport {
    /// Writes `path_index,h,max_error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "path_index,h,max_error")?;
        for p in &self.paths {
            for pt in &p.points {
                writeln!(out, "{},{},{}", p.path_index, fmt_f64(pt.h), fmt_f64(pt.max_error))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub schemes: Vec<SchemeReport>,
}

impl ConvergenceReport {
    pub fn scheme(&self, name: &str) -> Option<&SchemeReport> {
        self.schemes.iter().find(|s| s.scheme == name)
    }
}

/// Ordinary least-squares slope of `log(error)` against `log(h)`.
///
/// Returns `f64::INFINITY` when some error is exactly zero (the scheme is
/// exact on these data).
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Domain(format!(
            "slope fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(h, e)| !(h > 0.0 && h.is_finite()) || !(e >= 0.0 && e.is_finite()))
    {
        return Err(Error::Domain(
            "slope fit needs positive step sizes and finite nonnegative errors".into(),
        ));
    }
    if points.iter().any(|&(_, e)| e == 0.0) {
        return Ok(f64::INFINITY);
    }
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(h, e)| (sx + h.ln(), sy + e.ln()));
    let (mx, my) = (mx / n, my / n);
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(sxy, sxx), &(h, e)| {
        let dx = h.ln() - mx;
        (sxy + dx * (e.ln() - my), sxx + dx * dx)
    });
    if sxx == 0.0 {
        return Err(Error::Domain("slope fit needs at least two distinct step sizes".into()));
    }
    Ok(sxy / sxx)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

fn run_in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs a pathwise convergence study.
pub fn convergence_experiment(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let system = builtin_system(&cfg.system, cfg.kubo)?;
    if cfg.initial.len() != system.state_dim() {
        return Err(Error::Domain(format!(
            "initial value has dimension {}, system expects {}",
            cfg.initial.len(),
            system.state_dim()
        )));
    }
    if cfg.reference == Reference::Exact
        && system
            .exact_solution(
                &DVector::from_column_slice(&cfg.initial),
                0.0,
                &vec![0.0; system.noise_dim()],
            )
            .is_none()
    {
        return Err(Error::MissingExactSolution(system.name().to_string()));
    }
    let fine_steps = 1usize << cfg.sampled_level();
    let sampler = if cfg.zero_noise {
        None
    } else {
        Some(FgnSampler::new(
            cfg.hurst,
            fine_steps,
            cfg.horizon / fine_steps as f64,
            FbmMethod::Auto,
        )?)
    };
    let per_path: Vec<Result<Vec<PathReport>>> = run_in_pool(cfg.workers, || {
        (0..cfg.paths)
            .into_par_iter()
            .map(|index| {
                let seed = path_seed(cfg.seed_base, index);
                let path = match &sampler {
                    Some(s) => s.sample_path(system.noise_dim(), cfg.horizon, seed)?,
                    None => SamplePath::zero(system.noise_dim(), cfg.horizon, fine_steps)?,
                };
                study_path(system.as_ref(), cfg, &path, index, seed)
            })
            .collect()
    })?;
    let mut by_scheme: Vec<Vec<PathReport>> = vec![Vec::with_capacity(cfg.paths); cfg.schemes.len()];
    for reports in per_path {
        for (slot, r) in by_scheme.iter_mut().zip(reports?) {
            slot.push(r);
        }
    }
    let schemes = cfg
        .schemes
        .iter()
        .zip(by_scheme)
        .map(|(scheme, paths)| {
            let slopes: Vec<f64> = paths.iter().filter_map(|p| p.slope).collect();
            SchemeReport {
                scheme: scheme.name(),
                median_slope: median(&slopes),
                paths,
            }
        })
        .collect();
    Ok(ConvergenceReport { schemes })
}

/// Reference solution at every point of the `2^level` grid.
fn reference_states(
    system: &dyn SystemSpec,
    cfg: &ConvergenceConfig,
    path: &SamplePath,
    z: &State,
) -> Result<(Vec<State>, u32)> {
    let fine_level = cfg.sampled_level();
    match &cfg.reference {
        Reference::Exact => {
            let states = (0..=path.steps())
                .map(|k| {
                    system
                        .exact_solution(z, path.times()[k], path.noise_values(k))
                        .ok_or_else(|| Error::MissingExactSolution(system.name().to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((states, fine_level))
        }
        Reference::FineGrid { scheme, level } => {
            let grid = path.coarsen(1 << (fine_level - level))?;
            let tr = integrate(system, scheme, &grid, z, false)
                .map_err(|e| Error::Domain(format!("reference trajectory failed: {e}")))?;
            Ok((tr.states, *level))
        }
    }
}

fn study_path(
    system: &dyn SystemSpec,
    cfg: &ConvergenceConfig,
    path: &SamplePath,
    index: usize,
    seed: u64,
) -> Result<Vec<PathReport>> {
    let z = DVector::from_column_slice(&cfg.initial);
    let fine_level = cfg.sampled_level();
    let (reference, ref_level) = reference_states(system, cfg, path, &z)?;
    cfg.schemes
        .iter()
        .map(|scheme| {
            let mut points = Vec::new();
            let mut excluded = Vec::new();
            for level in cfg.coarsest_level..=cfg.finest_level {
                let grid = path.coarsen(1 << (fine_level - level))?;
                let h = cfg.horizon / (1u64 << level) as f64;
                let stride = 1usize << (ref_level - level);
                match integrate(system, scheme, &grid, &z, false) {
                    Ok(tr) => {
                        let err = max_error(&tr, &reference, stride);
                        if !err.is_finite() {
                            excluded.push(ExcludedPoint {
                                h,
                                reason: "non-finite error".into(),
                            });
                        }
                        points.push(ErrorPoint { h, max_error: err });
                    }
                    Err(e) if e.is_non_convergence() => excluded.push(ExcludedPoint {
                        h,
                        reason: e.to_string(),
                    }),
                    Err(e) => return Err(e),
                }
            }
            let usable: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.max_error.is_finite())
                .map(|p| (p.h, p.max_error))
                .collect();
            let slope = if usable.len() >= 2 {
                Some(fit_slope(&usable)?)
            } else {
                None
            };
            Ok(PathReport {
                path_index: index,
                seed,
                points,
                excluded,
                slope,
            })
        })
        .collect()
}

fn max_error(tr: &Trajectory, reference: &[State], stride: usize) -> f64 {
    tr.states
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, y)| (y - &reference[k * stride]).norm())
        .fold(0.0, |m: f64, e| if e.is_nan() { f64::NAN } else { m.max(e) })
}

/// Area enclosed by an ordered polygon (shoelace formula, counter-clockwise positive).
pub fn shoelace_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    0.5 * twice
}

/// Boundary of the quadrilateral with the given corners, `per_edge` points
/// per edge, starting at each corner.
pub fn polygon_boundary(corners: &[[f64; 2]], per_edge: usize) -> Vec<[f64; 2]> {
    let n = corners.len();
    (0..n)
        .flat_map(|i| {
            let (a, b) = (corners[i], corners[(i + 1) % n]);
            (0..per_edge).map(move |j| {
                let s = j as f64 / per_edge as f64;
                [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
            })
        })
        .collect()
}

/// Corners of the initial square used for area studies.
pub const UNIT_SQUARE: [[f64; 2]; 4] = [[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]];

/// Boundary points per edge used for area studies.
pub const POINTS_PER_EDGE: usize = 16;

/// Area of the evolved domain at the snapshot times, for one map.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaSeries {
    pub scheme: String,
    /// `(t, area)` pairs, in snapshot order.
    pub samples: Vec<(f64, f64)>,
}

impl AreaSeries {
    pub fn area_at(&self, t: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|(s, _)| (s - t).abs() < 1e-12)
            .map(|&(_, a)| a)
    }
}

/// Writes `scheme,t,area`.
pub fn write_area_csv<W: Write>(series: &[AreaSeries], mut out: W) -> Result<()> {
    writeln!(out, "scheme,t,area")?;
    for s in series {
        for &(t, a) in &s.samples {
            writeln!(out, "{},{},{}", s.scheme, fmt_f64(t), fmt_f64(a))?;
        }
    }
    Ok(())
}

fn snapshot_indices(path: &SamplePath, times: &[f64]) -> Result<Vec<usize>> {
    let h = path.step_size();
    times
        .iter()
        .map(|&t| {
            let k = (t / h).round();
            if !(k >= 0.0 && k as usize <= path.steps()) || (k * h - t).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(Error::Domain(format!("snapshot time {t} is not a grid point")));
            }
            Ok(k as usize)
        })
        .collect()
}

/// Evolves the boundary of a domain under each scheme (and the exact flow,
/// when available) and measures the enclosed area at the snapshot times.
pub fn area_evolution(
    system: &dyn SystemSpec,
    schemes: &[Scheme],
    corners: &[[f64; 2]],
    path: &SamplePath,
    snapshot_times: &[f64],
    per_edge: usize,
) -> Result<Vec<AreaSeries>> {
    if system.state_dim() != 2 {
        return Err(Error::Domain("area evolution needs a planar system".into()));
    }
    if corners.len() < 3 || per_edge == 0 {
        return Err(Error::Domain(
            "a domain needs at least three corners and one point per edge".into(),
        ));
    }
    let snapshots = snapshot_indices(path, snapshot_times)?;
    let boundary: Vec<State> = polygon_boundary(corners, per_edge)
        .into_iter()
        .map(|p| DVector::from_vec(p.to_vec()))
        .collect();
    let area_of = |points: Vec<[f64; 2]>| shoelace_area(&points);

    let mut out = Vec::new();
    let z0 = &boundary[0];
    if system.exact_solution(z0, 0.0, path.noise_values(0)).is_some() {
        let samples = snapshots
            .iter()
            .zip(snapshot_times)
            .map(|(&k, &t)| {
                let pts = boundary
                    .iter()
                    .map(|z| {
                        let y = system.exact_solution(z, path.times()[k], path.noise_values(k)).unwrap();
                        [y[0], y[1]]
                    })
                    .collect();
                (t, area_of(pts))
            })
            .collect();
        out.push(AreaSeries {
            scheme: "exact".into(),
            samples,
        });
    }
    for scheme in schemes {
        let trajectories: Vec<Trajectory> = boundary
            .par_iter()
            .map(|z| integrate(system, scheme, path, z, false))
            .collect::<Result<_>>()?;
        let samples = snapshots
            .iter()
            .zip(snapshot_times)
            .map(|(&k, &t)| {
                let pts = trajectories
                    .iter()
                    .map(|tr| [tr.states[k][0], tr.states[k][1]])
                    .collect();
                (t, area_of(pts))
            })
            .collect();
        out.push(AreaSeries {
            scheme: scheme.name(),
            samples,
        });
    }
    Ok(out)
}

/// Signed drift `|Y_k| − |z|` of the Euclidean norm along a trajectory.
pub fn invariant_drift(trajectory: &Trajectory, z: &State) -> Vec<f64> {
    let r = z.norm();
    trajectory.states.iter().map(|y| y.norm() - r).collect()
}

/// Writes `t,drift`.
pub fn write_drift_csv<W: Write>(times: &[f64], drift: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "t,drift")?;
    for (t, d) in times.iter().zip(drift) {
        writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*d))?;
    }
    Ok(())
}
