//! Dispatch from an [`ExperimentConfig`] to the library estimators, and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use leafwise::conformal::{Base, ConformalFamily};
use leafwise::diffusion::{Diffusion, DiffusionPath, DriftField, SimConfig, Space};
use leafwise::estimators::{
    busemann_gap, clt_stats, covariance_derivative, covariance_values, drift_busemann, drift_integral, drift_pathwise,
    entropy_green, ergodic_samples, joint_z, main_formula_symmetric, paired_difference, slope_values, CovarianceSpec,
    CsvRow, Estimate, FiniteDifference, Functional, MainFormulaOptions, Method, Weight, CSV_HEADER,
};
use leafwise::field::{ScalarField, SumField};
use leafwise::hypgeom::{random_boundary, random_point_in_ball, BoundaryPoint, LeafState, ModelPoint};
use leafwise::minkowski::Vector;
use leafwise::quotient::{normalize_mean_zero, FuchsianGroup, InvariantField, InvariantFieldParams};
use leafwise::validate::{self, PropertyResult, ValidateOptions};

use crate::config::{Backend, ExperimentConfig, Kind, Which};
use crate::CliError;

pub const SCHEMA: &str = "leafwise-run/1";

/// One estimate or property with its pass criterion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub t: f64,
    pub target: Option<f64>,
    /// Human-readable pass criterion.
    pub criterion: String,
    pub passed: bool,
}

impl Check {
    /// `|value − target| ≤ sigmas·stderr` (with a roundoff allowance for exact estimates).
    pub fn sigma(name: &str, e: &Estimate, target: f64, sigmas: f64) -> Self {
        let gap = (e.value - target).abs();
        Self {
            name: name.into(),
            value: e.value,
            stderr: e.stderr,
            n: e.n,
            t: e.horizon_t,
            target: Some(target),
            criterion: format!("within {sigmas} stderr"),
            passed: gap <= sigmas * e.stderr + 1e-12 * target.abs().max(1.0),
        }
    }

    pub fn report(name: &str, e: &Estimate) -> Self {
        Self {
            name: name.into(),
            value: e.value,
            stderr: e.stderr,
            n: e.n,
            t: e.horizon_t,
            target: None,
            criterion: "reported".into(),
            passed: true,
        }
    }

    pub fn bound(name: &str, value: f64, bound: f64, n: usize, t: f64) -> Self {
        Self {
            name: name.into(),
            value,
            stderr: 0.0,
            n,
            t,
            target: None,
            criterion: format!("at most {bound:e}"),
            passed: value <= bound,
        }
    }

    fn property(p: &PropertyResult) -> Self {
        Self {
            name: p.name.clone(),
            value: p.worst,
            stderr: 0.0,
            n: p.samples,
            t: 0.0,
            target: None,
            criterion: match p.tolerance {
                Some(t) => format!("at most {t:e}"),
                None => "finite".into(),
            },
            passed: p.passed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub schema: String,
    pub config_hash: String,
    pub kind: Kind,
    pub backend: Backend,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn start_state<const N: usize>() -> LeafState<N> {
    let mut d = Vector::<N>::zeros();
    d[1] = 1.0;
    LeafState::new(ModelPoint::origin(), BoundaryPoint::from_direction(&d))
}

fn sim_config(cfg: &ExperimentConfig) -> SimConfig {
    let s = &cfg.simulation;
    let interval = s.record_interval.unwrap_or(cfg.estimator_t() / 4.0);
    SimConfig {
        horizon: s.horizon,
        dt: s.dt,
        stride: 1,
        seed: s.seed,
        reorthonormalize_every: s.reorthonormalize_every,
    }
    .with_record_interval(interval)
}

fn space<const N: usize>(backend: Backend) -> Space<N> {
    match backend {
        Backend::Quotient => Space::Quotient(Arc::new(FuchsianGroup::regular_octagon())),
        _ => Space::Hyperbolic,
    }
}

fn simulate<const N: usize>(cfg: &ExperimentConfig, drift: DriftField<N>, girsanov: Vec<DriftField<N>>) -> Result<Vec<DiffusionPath<N>>, CliError> {
    let mut d = Diffusion::new(space(cfg.backend), drift);
    d.girsanov = girsanov;
    let batch = d.batch(&start_state(), &sim_config(cfg), cfg.simulation.paths)?;
    batch.require_complete()?;
    Ok(batch.paths)
}

/// Runs the configured experiment and returns its checks.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<Check>, CliError> {
    match (cfg.kind, cfg.backend) {
        (Kind::Validate, _) => {
            let opts = ValidateOptions {
                seed: cfg.simulation.seed,
                ..Default::default()
            };
            Ok(validate::run_all(&opts)?.iter().map(Check::property).collect())
        }
        (Kind::Morse, _) => Ok(validate::morse_suite()?.iter().map(Check::property).collect()),
        (_, Backend::H3) => execute_on::<4>(cfg),
        _ => execute_on::<3>(cfg),
    }
}

fn execute_on<const N: usize>(cfg: &ExperimentConfig) -> Result<Vec<Check>, CliError> {
    let m = (N - 1) as f64;
    let lambda = cfg.family.lambda;
    let t = cfg.estimator_t();
    let sigmas = cfg.estimator.sigmas;
    let method = cfg.estimator.method;
    let ell = m - 1.0 - lambda;
    let mut checks = Vec::new();
    match cfg.kind {
        Kind::Drift => {
            let paths = simulate::<N>(cfg, DriftField::Spray(lambda), Vec::new())?;
            checks.push(Check::sigma("drift_pathwise", &drift_pathwise(&paths, t, method)?, ell, sigmas));
            checks.push(Check::sigma("drift_busemann", &drift_busemann(&paths, t, method)?, ell, sigmas));
            checks.push(Check::report("drift_pathwise_ratio", &drift_pathwise(&paths, t, Method::Ratio)?));
            checks.push(Check::report("busemann_gap", &busemann_gap(&paths, t)?));
            if cfg.backend == Backend::Quotient {
                let e = drift_integral(&paths, &Base::Hyperbolic, &DriftField::Spray(lambda), cfg.simulation.burn_in)?;
                checks.push(Check::sigma("drift_integral", &e, ell, sigmas));
            }
        }
        Kind::Entropy => {
            let paths = simulate::<N>(cfg, DriftField::Spray(lambda), Vec::new())?;
            let green = entropy_green(&paths, t, method)?;
            checks.push(Check::sigma("entropy_green", &green, (m - 1.0) * ell, sigmas));
            checks.push(Check::report("entropy_green_ratio", &entropy_green(&paths, t, Method::Ratio)?));
            // the heat kernel is that of Brownian motion, so it measures entropy only without drift
            if N == 4 && lambda == 0.0 {
                let kernel = slope_values(&paths, t, Functional::HeatKernelEntropy, Method::LogCorrected)?;
                let e = Estimate::from_values(&kernel, t, Method::LogCorrected)?;
                checks.push(Check::sigma("entropy_kernel", &e, 4.0, sigmas));
                let g = slope_values(&paths, t, Functional::GreenEntropy, method)?;
                checks.push(Check::sigma("entropy_green_minus_kernel", &paired_difference(&g, &kernel, t)?, 0.0, sigmas));
            }
        }
        Kind::Clt => {
            let paths = simulate::<N>(cfg, DriftField::Spray(lambda), Vec::new())?;
            let (functional, target) = match cfg.estimator.which {
                Which::Drift => (Functional::Distance, 2.0),
                Which::Entropy => (Functional::GreenEntropy, 2.0 * (m - 1.0) * (m - 1.0)),
            };
            let c = clt_stats(&paths, t, functional)?;
            checks.push(Check::sigma("clt_variance", &c.sigma2, target, sigmas));
            checks.push(Check::bound("clt_ks_distance", c.ks_distance, 0.05, c.sigma2.n, t));
        }
        Kind::Derivative => {
            if cfg.backend == Backend::Quotient {
                return Err(CliError::Library(leafwise::Error::Unsupported(
                    "derivative experiments run on H² and H³".into(),
                )));
            }
            let small = 0.1;
            let paths = simulate::<N>(cfg, DriftField::Zero, vec![DriftField::Spray(1.0), DriftField::Spray(small)])?;
            let (functional, baseline, target) = match cfg.estimator.which {
                Which::Drift => (Functional::Distance, m - 1.0, -1.0),
                Which::Entropy => (Functional::GreenEntropy, (m - 1.0) * (m - 1.0), -(m - 1.0)),
            };
            let spec = CovarianceSpec { field: 0, scale: 1.0, t, functional, baseline, method, weight: Weight::Linear };
            let cov = covariance_derivative(&paths, &spec)?;
            checks.push(Check::sigma("covariance_derivative", &cov, target, sigmas));
            let lin = covariance_values(&paths, &CovarianceSpec { field: 1, scale: small, ..spec })?;
            let exp = covariance_values(&paths, &CovarianceSpec { field: 1, scale: small, weight: Weight::Exponential, ..spec })?;
            checks.push(Check::sigma("exponential_minus_linear_weight", &paired_difference(&exp, &lin, t)?, 0.0, sigmas));
            let fd = FiniteDifference {
                space: space::<N>(cfg.backend),
                direction: DriftField::Spray(1.0),
                start: start_state(),
                config: SimConfig {
                    seed: cfg.simulation.seed.wrapping_add(1 << 32),
                    ..sim_config(cfg)
                },
                paths: cfg.simulation.paths,
                t,
                functional,
                method,
            };
            for l in &cfg.family.lambdas {
                let e = fd.estimate(*l)?;
                checks.push(Check::sigma(&format!("finite_difference_{l}"), &e, target, sigmas));
                let z = joint_z(&cov, &e);
                let mut c = Check::bound(&format!("covariance_vs_finite_difference_{l}"), z.abs(), sigmas, e.n, t);
                c.criterion = format!("|z| at most {sigmas}");
                checks.push(c);
            }
        }
        Kind::MainFormula => {
            let (family, samples, group) = main_formula_inputs::<N>(cfg)?;
            let r = main_formula_symmetric(&family, &samples, &MainFormulaOptions { group, ..Default::default() })?;
            checks.push(Check::sigma("main_formula_dl", &r.dl, 0.0, 2.0));
            checks.push(Check::sigma("main_formula_dh", &r.dh, 0.0, 2.0));
            checks.push(Check::report("phi_sample_mean", &r.phi_mean));
            checks.push(Check::bound("spray_integral_normality", r.spray_normality, 1e-9, r.dl.n, 0.0));
            if N == 3 {
                checks.push(Check::bound("main_formula_dh_exact_zero", r.dh.value.abs(), 0.0, r.dh.n, 0.0));
            }
        }
        Kind::Validate | Kind::Morse => unreachable!("dispatched before"),
    }
    Ok(checks)
}

type MainInputs<const N: usize> = (ConformalFamily<N>, Vec<Vec<LeafState<N>>>, Option<Arc<FuchsianGroup>>);

fn main_formula_inputs<const N: usize>(cfg: &ExperimentConfig) -> Result<MainInputs<N>, CliError> {
    let f = &cfg.family;
    let per_path = cfg.estimator.samples_per_path.max(1);
    if cfg.backend == Backend::Quotient {
        let group = Arc::new(FuchsianGroup::regular_octagon());
        let params = InvariantFieldParams {
            amplitude: f.phi_amplitude,
            bump_radius: f.phi_radius,
            center_offset: f.phi_center_distance,
            ..Default::default()
        };
        let phi = normalize_mean_zero(&InvariantField::from_params(group.clone(), &params), 100_000)?;
        let paths = simulate::<N>(cfg, DriftField::Zero, Vec::new())?;
        let samples = ergodic_samples(&paths, cfg.simulation.burn_in)
            .into_iter()
            .map(|g| {
                let stride = (g.len() / per_path).max(1);
                g.into_iter().step_by(stride).take(per_path).collect()
            })
            .collect();
        let phi: Arc<dyn ScalarField<N>> = recast_field(Arc::new(phi))?;
        Ok((ConformalFamily::hyperbolic(phi), samples, Some(group)))
    } else {
        let r = f.phi_radius;
        let phi = SumField::<N>::zero_integral(ModelPoint::origin(), r, 2.0 * r, f.phi_amplitude);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.simulation.seed);
        let samples = (0..cfg.simulation.paths)
            .map(|_| {
                (0..per_path)
                    .map(|_| LeafState::new(random_point_in_ball(&mut rng, 2.0 * r), random_boundary(&mut rng)))
                    .collect()
            })
            .collect();
        Ok((ConformalFamily::hyperbolic(Arc::new(phi)), samples, None))
    }
}

/// The quotient field is defined on H² only.
fn recast_field<const N: usize>(phi: Arc<dyn ScalarField<3>>) -> Result<Arc<dyn ScalarField<N>>, CliError> {
    let any: Box<dyn std::any::Any> = Box::new(phi);
    any.downcast::<Arc<dyn ScalarField<N>>>()
        .map(|b| *b)
        .map_err(|_| CliError::Library(leafwise::Error::Unsupported("quotient fields live on H²".into())))
}

/// Writes `bytes` to `path` through a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_lines(cfg: &ExperimentConfig, checks: &[Check]) -> Vec<CsvRow> {
    let id = format!("{}_{}", kind_name(cfg.kind), backend_name(cfg.backend));
    let hash = cfg.hash();
    checks
        .iter()
        .map(|c| {
            let e = Estimate {
                value: c.value,
                stderr: c.stderr,
                n: c.n,
                horizon_t: c.t,
                method: cfg.estimator.method,
            };
            CsvRow::new(&id, &c.name, &e, cfg.simulation.dt, cfg.simulation.seed, &hash)
        })
        .collect()
}

pub fn kind_name(k: Kind) -> String {
    serde_json::to_value(k).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

pub fn backend_name(b: Backend) -> String {
    serde_json::to_value(b).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Runs `cfg` and writes `config.toml`, `results.csv` and `summary.json` into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let checks = execute(cfg)?;
    fs::create_dir_all(out)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in csv_lines(cfg, &checks) {
        csv.push_str(&row.to_line());
        csv.push('\n');
    }
    let summary = Summary {
        schema: SCHEMA.into(),
        config_hash: cfg.hash(),
        kind: cfg.kind,
        backend: cfg.backend,
        seed: cfg.simulation.seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    };
    write_atomic(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    write_atomic(&out.join("results.csv"), csv.as_bytes())?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Config(e.to_string()))?;
    write_atomic(&out.join("summary.json"), json.as_bytes())?;
    Ok(summary)
}

/// Seed of run `i` of a sweep.
pub fn sweep_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add((i as u64 + 1) << 40)
}

/// Independent runs along `axis` (an overridable key), each in `out/run_<i>`, plus a merged
/// long-format `sweep.csv`.
pub fn sweep(text: &str, overrides: &[String], axis: &str, values: &[String], out: &Path) -> Result<Vec<Summary>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let base = ExperimentConfig::parse(text, overrides)?;
    let configs: Vec<(PathBuf, ExperimentConfig)> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut o = overrides.to_vec();
            o.push(format!("{axis}={v}"));
            o.push(format!("simulation.seed={}", sweep_seed(base.simulation.seed, i)));
            Ok((out.join(format!("run_{i}")), ExperimentConfig::parse(text, &o)?))
        })
        .collect::<Result<_, CliError>>()?;
    let summaries: Vec<Summary> = configs
        .par_iter()
        .map(|(dir, c)| run(c, dir))
        .collect::<Result<_, CliError>>()?;
    let mut csv = format!("axis,axis_value,{CSV_HEADER}\n");
    for ((v, (_, c)), s) in values.iter().zip(&configs).zip(&summaries) {
        for row in csv_lines(c, &s.checks) {
            csv.push_str(&format!("{axis},{v},{}\n", row.to_line()));
        }
    }
    fs::create_dir_all(out)?;
    write_atomic(&out.join("sweep.csv"), csv.as_bytes())?;
    Ok(summaries)
}
