//! Statistical reductions over batches of diffusion paths: drift and entropy slopes, CLT
//! statistics, derivative estimators and the symmetric-case derivative formulas.
//!
//! Every per-path quantity is computed independently and reduced with [`Welford`], so results do
//! not depend on how a batch was scheduled or split.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{Base, ConformalFamily};
use crate::diffusion::{Diffusion, DiffusionPath, DriftField, SimConfig, Space};
use crate::hypgeom::{self, LeafState};
use crate::jacobi::{self, riccati_limit, Geodesic, Side};
use crate::minkowski::dot;
use crate::quotient::FuchsianGroup;
use crate::stats::{ks_distance_normal, variance_stderr, Welford};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `F(t)/t`.
    Ratio,
    /// `(F(t) − F(t/2))/(t/2)`: removes the additive constant of `F`.
    Increment,
    /// `(F(t) − 2F(t/2) + F(t/4))/(t/4)`: removes additive and `ln t` terms.
    LogCorrected,
    /// Time average along paths.
    Ergodic,
    /// Sample variance.
    Variance,
    /// Plain sample mean.
    Mean,
    /// First-order error propagation.
    Propagated,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ratio => "ratio",
            Method::Increment => "increment",
            Method::LogCorrected => "log_corrected",
            Method::Ergodic => "ergodic",
            Method::Variance => "variance",
            Method::Mean => "mean",
            Method::Propagated => "propagated",
        }
    }

    /// Combines `g(s)` at the sample times of a slope method.
    fn combine(&self, t: f64, mut g: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
        match self {
            Method::Ratio => Ok(g(t)? / t),
            Method::Increment => Ok((g(t)? - g(t / 2.0)?) / (t / 2.0)),
            Method::LogCorrected => Ok((g(t)? - 2.0 * g(t / 2.0)? + g(t / 4.0)?) / (t / 4.0)),
            _ => Err(Error::Contract(format!("{} is not a slope method", self.name()))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub horizon_t: f64,
    pub method: Method,
}

impl Estimate {
    pub fn from_values(values: &[f64], horizon_t: f64, method: Method) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let w = Welford::from_slice(values);
        Ok(Self {
            value: w.mean(),
            stderr: w.stderr(),
            n: values.len(),
            horizon_t,
            method,
        })
    }

    pub fn exact(value: f64, n: usize, horizon_t: f64, method: Method) -> Self {
        Self {
            value,
            stderr: 0.0,
            n,
            horizon_t,
            method,
        }
    }

    /// `(value − target)/stderr`; zero when both the gap and the stderr vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        let gap = self.value - target;
        if gap == 0.0 {
            0.0
        } else {
            gap / self.stderr
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z_score(target).abs() < sigmas
    }
}

/// `z` of the difference of two estimates from independent samples.
pub fn joint_z(a: &Estimate, b: &Estimate) -> f64 {
    let gap = a.value - b.value;
    if gap == 0.0 {
        return 0.0;
    }
    gap / (a.stderr * a.stderr + b.stderr * b.stderr).sqrt()
}

/// Mean of the per-path differences `a − b` for estimates computed on the same paths.
pub fn paired_difference(a: &[f64], b: &[f64], horizon_t: f64) -> Result<Estimate> {
    if a.len() != b.len() {
        return Err(Error::Contract("paired samples must have equal length".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Estimate::from_values(&d, horizon_t, Method::Mean)
}

/// Pathwise functionals whose growth rates are the drift and the entropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// `d(ω(0), ω(t))`.
    Distance,
    /// `b_{ω(0),ξ}(ω(t))`.
    Busemann,
    /// `−ln G(ω(0), ω(t))`.
    GreenEntropy,
    /// `−ln p(t, ω(0), ω(t))`, H³ only.
    HeatKernelEntropy,
}

impl Functional {
    pub fn value<const N: usize>(&self, path: &DiffusionPath<N>, t: f64) -> Result<f64> {
        let m = N - 1;
        match self {
            Functional::Distance => path.distance(t),
            Functional::Busemann => path.busemann(t),
            Functional::GreenEntropy => Ok(-hypgeom::ln_green_function(m, path.distance(t)?)?),
            Functional::HeatKernelEntropy => {
                if m != 3 {
                    return Err(Error::Unsupported("the heat kernel is available on H³ only".into()));
                }
                Ok(-hypgeom::ln_heat_kernel_h3(t, path.distance(t)?)?)
            }
        }
    }

    /// The centred functional `Z` of the derivative estimators at time `s`.
    fn centred<const N: usize>(&self, path: &DiffusionPath<N>, s: f64, baseline: f64) -> Result<f64> {
        match self {
            Functional::GreenEntropy => {
                let d = path.distance(s)?;
                let ln_g = if d >= 1.0 { hypgeom::ln_green_function(N - 1, d)? } else { 0.0 };
                Ok(-ln_g - baseline * s)
            }
            _ => Ok(self.value(path, s)? - baseline * s),
        }
    }
}

fn check_horizon<const N: usize>(paths: &[DiffusionPath<N>], t: f64) -> Result<()> {
    let first = paths.first().ok_or(Error::EmptyBatch)?;
    if !(t > 0.0) {
        return Err(Error::Contract(format!("t must be positive, got {t}")));
    }
    if t > first.horizon * (1.0 + 1e-12) {
        return Err(Error::Horizon { t, horizon: first.horizon });
    }
    Ok(())
}

fn tag<T>(path_id: u64, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Path {
        path_id,
        source: Box::new(e),
    })
}

/// Per-path slope estimates of `functional` at time `t`.
pub fn slope_values<const N: usize>(
    paths: &[DiffusionPath<N>],
    t: f64,
    functional: Functional,
    method: Method,
) -> Result<Vec<f64>> {
    check_horizon(paths, t)?;
    paths
        .iter()
        .map(|p| tag(p.path_id, method.combine(t, |s| functional.value(p, s))))
        .collect()
}

pub fn slope<const N: usize>(paths: &[DiffusionPath<N>], t: f64, functional: Functional, method: Method) -> Result<Estimate> {
    Estimate::from_values(&slope_values(paths, t, functional, method)?, t, method)
}

/// Linear drift from `d(ω(0), ω(t))`.
pub fn drift_pathwise<const N: usize>(paths: &[DiffusionPath<N>], t: f64, method: Method) -> Result<Estimate> {
    slope(paths, t, Functional::Distance, method)
}

/// Linear drift from the Busemann function of the leaf.
pub fn drift_busemann<const N: usize>(paths: &[DiffusionPath<N>], t: f64, method: Method) -> Result<Estimate> {
    slope(paths, t, Functional::Busemann, method)
}

/// Mean of `|d(ω(0), ω(t)) − b(ω(t))|`, which stays bounded in `t`.
pub fn busemann_gap<const N: usize>(paths: &[DiffusionPath<N>], t: f64) -> Result<Estimate> {
    check_horizon(paths, t)?;
    let v: Vec<f64> = paths
        .iter()
        .map(|p| tag(p.path_id, Ok((p.distance(t)? - p.busemann(t)?).abs())))
        .collect::<Result<_>>()?;
    Estimate::from_values(&v, t, Method::Mean)
}

pub fn entropy_green<const N: usize>(paths: &[DiffusionPath<N>], t: f64, method: Method) -> Result<Estimate> {
    slope(paths, t, Functional::GreenEntropy, method)
}

pub fn entropy_kernel_h3(paths: &[DiffusionPath<4>], t: f64, method: Method) -> Result<Estimate> {
    slope(paths, t, Functional::HeatKernelEntropy, method)
}

/// Linear drift as the ergodic average of `−(trace S′(0) + ⟨Y, X̄⟩)` over recorded states with
/// `t ≥ burn_in`; one time average per path.
pub fn drift_integral<const N: usize>(
    paths: &[DiffusionPath<N>],
    base: &Base<N>,
    drift: &DriftField<N>,
    burn_in: f64,
) -> Result<Estimate> {
    let first = paths.first().ok_or(Error::EmptyBatch)?;
    if !base.is_constant_curvature() {
        return Err(Error::Unsupported(
            "drift_integral on a variable-curvature leaf needs diffusion paths of that metric".into(),
        ));
    }
    let values: Vec<f64> = paths
        .par_iter()
        .map(|p| {
            let mut w = Welford::default();
            for r in p.records.iter().filter(|r| r.t >= burn_in) {
                let st = r.state.leaf_state();
                let geo = Geodesic::new(base, &st.spray(), 0.0, 20.0, 1e-2)?;
                let div = riccati_limit(&geo, Side::Stable, 20.0, 1e-2)?.trace();
                let y = drift.eval(&r.state)?;
                w.push(-(div + dot(&y, &r.state.spray_local())));
            }
            if w.n() == 0 {
                return Err(Error::Contract(format!("no records after burn-in {burn_in}")));
            }
            Ok(w.mean())
        })
        .zip(paths.par_iter())
        .map(|(r, p)| tag(p.path_id, r))
        .collect::<Result<_>>()?;
    Estimate::from_values(&values, first.horizon, Method::Ergodic)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CltStats {
    /// Empirical variance of `(F(t) − ŝ·t)/√t`.
    pub sigma2: Estimate,
    /// Kolmogorov–Smirnov distance of the standardized residuals to N(0, 1).
    pub ks_distance: f64,
    /// The slope `ŝ` used for centring.
    pub slope: f64,
}

pub fn clt_stats<const N: usize>(paths: &[DiffusionPath<N>], t: f64, which: Functional) -> Result<CltStats> {
    if paths.len() < 2 {
        return Err(Error::Contract("clt_stats needs at least two paths".into()));
    }
    let ratios = slope_values(paths, t, which, Method::Ratio)?;
    let s = Welford::from_slice(&ratios).mean();
    let residuals: Vec<f64> = ratios.iter().map(|r| (r - s) * t.sqrt()).collect();
    let w = Welford::from_slice(&residuals);
    let sd = w.variance().sqrt();
    let standardized: Vec<f64> = residuals.iter().map(|r| (r - w.mean()) / sd).collect();
    Ok(CltStats {
        sigma2: Estimate {
            value: w.variance(),
            stderr: variance_stderr(&residuals),
            n: residuals.len(),
            horizon_t: t,
            method: Method::Variance,
        },
        ks_distance: ks_distance_normal(&standardized),
        slope: s,
    })
}

/// Martingale used in [`covariance_derivative`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    /// `½A(t)`.
    Linear,
    /// `exp(½A(t) − ¼Q(t)) − 1`.
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceSpec {
    /// Index of the registered Girsanov field.
    pub field: usize,
    /// The registered field is `scale·V′₀`; the martingale is divided by `scale`.
    pub scale: f64,
    pub t: f64,
    pub functional: Functional,
    /// Unperturbed drift or entropy subtracted inside `Z`.
    pub baseline: f64,
    pub method: Method,
    pub weight: Weight,
}

/// Per-path values of the covariance derivative estimator `(1/t)·Z·M`.
pub fn covariance_values<const N: usize>(paths: &[DiffusionPath<N>], spec: &CovarianceSpec) -> Result<Vec<f64>> {
    check_horizon(paths, spec.t)?;
    if spec.scale == 0.0 {
        return Err(Error::Contract("field scale must be non-zero".into()));
    }
    paths
        .iter()
        .map(|p| {
            tag(
                p.path_id,
                spec.method.combine(spec.t, |s| {
                    let acc = p.accumulator(spec.field, s)?;
                    let m = match spec.weight {
                        Weight::Linear => 0.5 * acc.a,
                        Weight::Exponential => (0.5 * acc.a - 0.25 * acc.q).exp_m1(),
                    } / spec.scale;
                    if m == 0.0 {
                        return Ok(0.0);
                    }
                    Ok(spec.functional.centred(p, s, spec.baseline)? * m)
                }),
            )
        })
        .collect()
}

/// `dℓ/dλ` or `dh/dλ` at 0 as the covariance of the centred functional with the Girsanov
/// martingale, on paths simulated without drift.
pub fn covariance_derivative<const N: usize>(paths: &[DiffusionPath<N>], spec: &CovarianceSpec) -> Result<Estimate> {
    Estimate::from_values(&covariance_values(paths, spec)?, spec.t, spec.method)
}

/// Central finite difference `(F_λ − F_{−λ})/2λ` of a slope functional under the drifts `±λ·V′₀`,
/// with common random numbers: path `i` of both runs uses the same seed.
#[derive(Clone)]
pub struct FiniteDifference<const N: usize> {
    pub space: Space<N>,
    pub direction: DriftField<N>,
    pub start: LeafState<N>,
    pub config: SimConfig,
    pub paths: usize,
    pub t: f64,
    pub functional: Functional,
    pub method: Method,
}

impl<const N: usize> FiniteDifference<N> {
    pub fn values(&self, lambda: f64) -> Result<Vec<f64>> {
        if self.paths == 0 {
            return Err(Error::EmptyBatch);
        }
        if !(lambda > 0.0) {
            return Err(Error::Contract(format!("λ must be positive, got {lambda}")));
        }
        let plus = Diffusion::new(self.space.clone(), self.direction.scaled(lambda));
        let minus = Diffusion::new(self.space.clone(), self.direction.scaled(-lambda));
        let t = self.t;
        (0..self.paths as u64)
            .into_par_iter()
            .map(|id| {
                let run = |d: &Diffusion<N>| -> Result<f64> {
                    let p = d.simulate(&self.start, &self.config, id)?;
                    check_horizon(std::slice::from_ref(&p), t)?;
                    self.method.combine(t, |s| self.functional.value(&p, s))
                };
                tag(id, Ok((run(&plus)? - run(&minus)?) / (2.0 * lambda)))
            })
            .collect()
    }

    pub fn estimate(&self, lambda: f64) -> Result<Estimate> {
        Estimate::from_values(&self.values(lambda)?, self.t, self.method)
    }

    pub fn grid(&self, lambdas: &[f64]) -> Result<Vec<Estimate>> {
        lambdas.iter().map(|&l| self.estimate(l)).collect()
    }
}

/// Recorded leaf states with `t ≥ burn_in`, grouped by path.
pub fn ergodic_samples<const N: usize>(paths: &[DiffusionPath<N>], burn_in: f64) -> Vec<Vec<LeafState<N>>> {
    paths
        .iter()
        .map(|p| {
            p.records
                .iter()
                .filter(|r| r.t >= burn_in)
                .map(|r| r.state.leaf_state())
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct MainFormulaOptions {
    /// Truncation of the stable-form spray integral.
    pub horizon: f64,
    pub dt: f64,
    /// Reduce the spray geodesics into this group's fundamental domain (quotient fields).
    pub group: Option<Arc<FuchsianGroup>>,
}

impl Default for MainFormulaOptions {
    fn default() -> Self {
        Self {
            horizon: 20.0,
            dt: 2e-2,
            group: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MainFormula {
    pub dl: Estimate,
    pub dh: Estimate,
    /// Sample mean of `φ`, of which both derivatives are multiples here.
    pub phi_mean: Estimate,
    /// Largest `|⟨∫(K′ − S′K), X̄⟩|` seen; zero up to roundoff.
    pub spray_normality: f64,
}

/// Derivative formulas for `ℓ` and `h` on a locally symmetric base, where `∇ln k_v = (m−1)X̄` and
/// the correctors are constant:
/// `dℓ = ⟨⟨φX̄ + ∫(K′ − S′K), (m−1)X̄⟩ + (m−2)(m−1)φ⟩` and `dh = (m−2)(m−1)²⟨φ⟩`.
///
/// Each group of samples (one per path) contributes one averaged value.
pub fn main_formula_symmetric<const N: usize>(
    family: &ConformalFamily<N>,
    samples: &[Vec<LeafState<N>>],
    opts: &MainFormulaOptions,
) -> Result<MainFormula> {
    if !family.base.is_constant_curvature() {
        return Err(Error::Unsupported("main_formula_symmetric needs a constant-curvature base".into()));
    }
    if samples.is_empty() || samples.iter().any(|g| g.is_empty()) {
        return Err(Error::EmptyBatch);
    }
    let m = (N - 1) as f64;
    let per_group: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .enumerate()
        .map(|(i, group)| {
            let mut dl = Welford::default();
            let mut phi = Welford::default();
            let mut normality: f64 = 0.0;
            for st in group {
                let f = family.phi.value(&st.point)?;
                let d = jacobi::spray_derivative_stable(family, st, opts.horizon, opts.dt, opts.group.as_deref())
                    .map_err(|e| Error::Path {
                        path_id: i as u64,
                        source: Box::new(e),
                    })?;
                let spray = st.spray().vec;
                let integral = d.vertical.vec + f * spray;
                let along = dot(&integral, &spray);
                normality = normality.max(along.abs());
                dl.push((f + along) * (m - 1.0) + (m - 2.0) * (m - 1.0) * f);
                phi.push(f);
            }
            Ok((dl.mean(), phi.mean(), normality))
        })
        .collect::<Result<_>>()?;
    let dl: Vec<f64> = per_group.iter().map(|g| g.0).collect();
    let phi: Vec<f64> = per_group.iter().map(|g| g.1).collect();
    let dh: Vec<f64> = phi.iter().map(|f| (m - 2.0) * (m - 1.0) * (m - 1.0) * f).collect();
    let horizon = opts.horizon;
    let dh = if N == 3 {
        Estimate::exact(0.0, dh.len(), horizon, Method::Ergodic)
    } else {
        Estimate::from_values(&dh, horizon, Method::Ergodic)?
    };
    Ok(MainFormula {
        dl: Estimate::from_values(&dl, horizon, Method::Ergodic)?,
        dh,
        phi_mean: Estimate::from_values(&phi, horizon, Method::Ergodic)?,
        spray_normality: per_group.iter().map(|g| g.2).fold(0.0, f64::max),
    })
}

/// `h/ℓ` with first-order error propagation for independent estimates.
pub fn dimension_ratio(l: &Estimate, h: &Estimate) -> Result<Estimate> {
    dimension_ratio_correlated(l, h, 0.0)
}

/// As [`dimension_ratio`] with correlation `rho` between the two estimates.
pub fn dimension_ratio_correlated(l: &Estimate, h: &Estimate, rho: f64) -> Result<Estimate> {
    if !(l.value > 0.0) {
        return Err(Error::Domain(format!("dimension ratio needs a positive drift, got {}", l.value)));
    }
    let r = h.value / l.value;
    let rl = l.stderr / l.value;
    let rh = if h.value != 0.0 { h.stderr / h.value } else { 0.0 };
    let var = rl * rl + rh * rh - 2.0 * rho * rl * rh;
    Ok(Estimate {
        value: r,
        stderr: r.abs() * var.max(0.0).sqrt(),
        n: l.n.min(h.n),
        horizon_t: l.horizon_t,
        method: Method::Propagated,
    })
}

pub const CSV_HEADER: &str = "experiment_id,method,value,stderr,n,t,dt,seed,config_hash";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub experiment_id: String,
    pub method: String,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub t: f64,
    pub dt: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl CsvRow {
    pub fn new(experiment_id: &str, label: &str, e: &Estimate, dt: f64, seed: u64, config_hash: &str) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            method: label.to_string(),
            value: e.value,
            stderr: e.stderr,
            n: e.n,
            t: e.horizon_t,
            dt,
            seed,
            config_hash: config_hash.to_string(),
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.experiment_id, self.method, self.value, self.stderr, self.n, self.t, self.dt, self.seed, self.config_hash
        )
    }
}
