use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rough_symplectic::experiments::{
    area_evolution, convergence_experiment, invariant_drift, path_seed, write_area_csv, write_drift_csv,
    ConvergenceConfig, Reference, POINTS_PER_EDGE, UNIT_SQUARE,
};
use rough_symplectic::integrators::{integrate, method_two_root, Scheme};
use rough_symplectic::paths::{sample_fbm, FbmConfig, SamplePath};
use rough_symplectic::systems::{builtin_system, KuboParams, State, SystemSpec};

use crate::config::RunConfig;
use crate::CliError;

/// Files written by one run, relative to the output directory.
pub struct RunOutput {
    pub manifest: PathBuf,
    pub files: Vec<String>,
    pub summary: Vec<String>,
}

struct Sink<'a> {
    dir: &'a Path,
    prefix: String,
    files: Vec<String>,
}

impl Sink<'_> {
    fn write(
        &mut self,
        suffix: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let name = format!("{}-{suffix}.csv", self.prefix);
        let mut out = BufWriter::new(File::create(self.dir.join(&name))?);
        f(&mut out)?;
        out.flush()?;
        self.files.push(name);
        Ok(())
    }
}

fn kubo_params(cfg: &RunConfig) -> KuboParams {
    KuboParams {
        epsilon: cfg.epsilon,
        dims: cfg.dims,
        initial: [cfg.z[0], cfg.z[1]],
    }
}

fn sample(cfg: &RunConfig, system: &dyn SystemSpec, index: usize) -> Result<SamplePath, CliError> {
    let seed = path_seed(cfg.seed, index);
    if cfg.zero_noise {
        return Ok(SamplePath::zero(system.noise_dim(), cfg.horizon, cfg.steps)?);
    }
    Ok(sample_fbm(&FbmConfig::new(
        cfg.hurst,
        system.noise_dim(),
        cfg.horizon,
        cfg.steps,
        seed,
    )?)?)
}

pub fn run(cfg: &RunConfig, dir: &Path) -> Result<RunOutput, CliError> {
    fs::create_dir_all(dir)?;
    let system = builtin_system(&cfg.system, kubo_params(cfg))?;
    let schemes = cfg.schemes()?;
    let z = State::from_column_slice(&cfg.z);
    let hash = cfg.hash();
    let mut sink = Sink {
        dir,
        prefix: format!("{}-{hash}", cfg.command),
        files: Vec::new(),
    };
    let mut summary = Vec::new();

    match cfg.command.as_str() {
        "sample-path" => {
            for i in 0..cfg.paths {
                let path = sample(cfg, system.as_ref(), i)?;
                sink.write(&format!("p{i}"), |out| Ok(path.write_csv(out)?))?;
            }
        }
        "integrate" => {
            for i in 0..cfg.paths {
                let path = sample(cfg, system.as_ref(), i)?;
                for scheme in &schemes {
                    let tr = integrate(system.as_ref(), scheme, &path, &z, cfg.jacobian)?;
                    sink.write(&format!("{}-p{i}", scheme.name()), |out| Ok(tr.write_csv(out)?))?;
                }
            }
        }
        "convergence" => {
            let reference = match cfg.reference.as_str() {
                "exact" => Reference::Exact,
                _ => Reference::FineGrid {
                    scheme: Scheme::from_name(&cfg.reference_scheme, cfg.solver()?)?,
                    level: cfg.reference_level,
                },
            };
            let study = ConvergenceConfig {
                system: cfg.system.clone(),
                kubo: kubo_params(cfg),
                schemes,
                hurst: cfg.hurst,
                horizon: cfg.horizon,
                initial: cfg.z.clone(),
                coarsest_level: cfg.coarsest_level,
                finest_level: cfg.finest_level,
                paths: cfg.paths,
                seed_base: cfg.seed,
                reference,
                zero_noise: cfg.zero_noise,
                workers: cfg.workers,
            };
            let report = convergence_experiment(&study)?;
            for s in &report.schemes {
                sink.write(&s.scheme, |out| Ok(s.write_csv(out)?))?;
                let median = s.median_slope.map_or("n/a".to_string(), |m| format!("{m:.4}"));
                summary.push(format!("{}: median slope {median}", s.scheme));
            }
            sink.write("slopes", |out| {
                writeln!(out, "scheme,path_index,seed,slope")?;
                for s in &report.schemes {
                    for p in &s.paths {
                        let slope = p.slope.map_or(String::new(), rough_symplectic::csv::fmt_f64);
                        writeln!(out, "{},{},{},{slope}", s.scheme, p.path_index, p.seed)?;
                    }
                }
                Ok(())
            })?;
        }
        "area" => {
            for i in 0..cfg.paths {
                let path = sample(cfg, system.as_ref(), i)?;
                let series = area_evolution(
                    system.as_ref(),
                    &schemes,
                    &UNIT_SQUARE,
                    &path,
                    &cfg.snapshots,
                    POINTS_PER_EDGE,
                )?;
                sink.write(&format!("p{i}"), |out| Ok(write_area_csv(&series, out)?))?;
            }
        }
        "invariant" => {
            for i in 0..cfg.paths {
                let path = sample(cfg, system.as_ref(), i)?;
                for scheme in &schemes {
                    let tr = integrate(system.as_ref(), scheme, &path, &z, false)?;
                    let drift = invariant_drift(&tr, &z);
                    let worst = drift.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
                    summary.push(format!("{} path {i}: max |drift| {worst:.3e}", scheme.name()));
                    sink.write(&format!("{}-p{i}", scheme.name()), |out| {
                        Ok(write_drift_csv(&tr.times, &drift, out)?)
                    })?;
                }
            }
        }
        other => return Err(CliError::Config(format!("unknown command `{other}`"))),
    }

    let manifest = dir.join(format!("{}.manifest.toml", sink.prefix));
    fs::write(&manifest, manifest_text(cfg, &hash, &sink.files))?;
    Ok(RunOutput {
        manifest,
        files: sink.files,
        summary,
    })
}

/// The canonical config followed by build facts and the list of outputs.
fn manifest_text(cfg: &RunConfig, hash: &str, files: &[String]) -> String {
    let outputs = files.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>().join(", ");
    format!(
        "{}method2_root = {:?}\nconfig_hash = \"{hash}\"\nversion = \"{}\"\noutputs = [{outputs}]\n",
        cfg.to_toml(),
        method_two_root(),
        env!("CARGO_PKG_VERSION"),
    )
}
