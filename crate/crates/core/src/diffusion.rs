//! Leafwise diffusions `Δ + V` on H^m and on the octagon surface, simulated as geodesic random
//! walks on the orthonormal frame bundle with Girsanov accumulators.
//!
//! The walk is kept in a moving chart centred at the current point. Each step boosts the chart
//! and applies the inverse boost to two trackers, the start point and the leaf ray `ξ`, so
//! distances and Busemann values never suffer cancellation. The global frame is carried along
//! for evaluating position-dependent fields and, on the quotient, is reduced into the fundamental
//! domain after every step.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::ScalarField;
use crate::hypgeom::{self, BoundaryPoint, LeafState, ModelPoint, TangentVec};
use crate::minkowski::{
    dot, e0, lorentz_inverse, reorthonormalize, right_boost, sinh_cosh, spatial_norm, unboost_apply, Lorentz, Vector,
};
use crate::quotient::FuchsianGroup;
use crate::{Error, Result};

/// Largest admissible step.
pub const MAX_DT: f64 = 0.05;
/// Largest admissible number of steps per path.
pub const MAX_STEPS: f64 = 1e8;

#[derive(Clone)]
pub enum Space<const N: usize> {
    Hyperbolic,
    /// The genus-two octagon surface; only valid for `N = 3`.
    Quotient(Arc<FuchsianGroup>),
}

/// Drift and Girsanov vector fields, evaluated in the chart at the current point.
#[derive(Clone)]
pub enum DriftField<const N: usize> {
    Zero,
    /// `λ·X̄`, the spray towards the leaf point scaled by `λ`.
    Spray(f64),
    /// `c·∇f` for a scalar field `f` on the cover.
    Gradient(Arc<dyn ScalarField<N>>, f64),
    Sum(Vec<DriftField<N>>),
}

impl<const N: usize> DriftField<N> {
    pub fn is_zero(&self) -> bool {
        match self {
            DriftField::Zero => true,
            DriftField::Spray(l) => *l == 0.0,
            DriftField::Gradient(_, c) => *c == 0.0,
            DriftField::Sum(v) => v.iter().all(|f| f.is_zero()),
        }
    }

    /// The field multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            DriftField::Zero => DriftField::Zero,
            DriftField::Spray(l) => DriftField::Spray(c * l),
            DriftField::Gradient(f, k) => DriftField::Gradient(f.clone(), c * k),
            DriftField::Sum(v) => DriftField::Sum(v.iter().map(|f| f.scaled(c)).collect()),
        }
    }

    /// Value at the current point as a spatial vector of the chart (component 0 is zero).
    pub fn eval(&self, state: &FramedState<N>) -> Result<Vector<N>> {
        match self {
            DriftField::Zero => Ok(Vector::zeros()),
            DriftField::Spray(l) => Ok(*l * state.spray_local()),
            DriftField::Gradient(f, c) => {
                if *c == 0.0 {
                    return Ok(Vector::zeros());
                }
                let g = f.gradient(&state.point())?;
                let mut w = lorentz_inverse(&state.frame) * g.vec;
                w[0] = 0.0;
                Ok(*c * w)
            }
            DriftField::Sum(v) => {
                let mut w = Vector::zeros();
                for f in v {
                    w += f.eval(state)?;
                }
                Ok(w)
            }
        }
    }
}

/// Point, transported frame and leaf of a diffusion, in chart form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramedState<const N: usize> {
    /// Global frame; column 0 is the current point, columns 1.. the transported frame.
    pub frame: Lorentz<N>,
    /// Start point in the chart.
    pub origin: Vector<N>,
    /// Leaf ray `ξ` in the chart, normalized to `ray₀ = 1`.
    pub leaf: Vector<N>,
    /// Accumulated `ln` of the leaf normalizations: the Busemann value `b_{ω(0),ξ}(ω(t))`.
    pub log_scale: f64,
}

impl<const N: usize> FramedState<N> {
    pub fn new(start: &LeafState<N>) -> Self {
        let frame = hypgeom::frame_at(&start.point);
        let mut leaf = lorentz_inverse(&frame) * start.xi.ray();
        leaf /= leaf[0];
        Self {
            frame,
            origin: e0(),
            leaf,
            log_scale: 0.0,
        }
    }

    pub fn point(&self) -> ModelPoint<N> {
        ModelPoint::project(self.frame.column(0).into_owned())
    }

    pub fn frame_vectors(&self) -> Vec<TangentVec<N>> {
        let p = self.point();
        (1..N).map(|i| TangentVec::new(p, self.frame.column(i).into_owned())).collect()
    }

    pub fn leaf_point(&self) -> BoundaryPoint<N> {
        BoundaryPoint::from_direction(&(self.frame * self.leaf))
    }

    pub fn leaf_state(&self) -> LeafState<N> {
        LeafState::new(self.point(), self.leaf_point())
    }

    /// Spray `X̄` at the current point in chart coordinates.
    pub fn spray_local(&self) -> Vector<N> {
        let mut w = self.leaf;
        w[0] = 0.0;
        w
    }

    pub fn distance_from_start(&self) -> f64 {
        hypgeom::distance(&ModelPoint::origin(), &ModelPoint::project(self.origin))
    }

    pub fn busemann(&self) -> f64 {
        self.log_scale
    }

    /// Moves along the chart geodesic with initial velocity `w` (spatial), transporting the frame.
    fn advance(&mut self, w: &Vector<N>, space: &Space<N>) -> Result<()> {
        let s = spatial_norm(w);
        if s > 0.0 {
            let (sh, ch) = sinh_cosh(s);
            unboost_apply(w, s, sh, ch, &mut self.origin);
            unboost_apply(w, s, sh, ch, &mut self.leaf);
            let f = self.leaf[0];
            self.leaf /= f;
            self.log_scale += f.ln();
            right_boost(&mut self.frame, w, s, sh, ch);
        }
        if let Space::Quotient(g) = space {
            let mut f3 = to3(&self.frame)?;
            g.reduce_frame(&mut f3)?;
            self.frame = from3(&f3);
        }
        Ok(())
    }

    fn tidy(&mut self) {
        if self.frame[(0, 0)] < 1e4 {
            reorthonormalize(&mut self.frame);
        }
        let n = spatial_norm(&self.leaf);
        for i in 1..N {
            self.leaf[i] /= n;
        }
    }

    /// Largest deviation of the frame's Minkowski Gram matrix from the identity.
    pub fn frame_defect(&self) -> f64 {
        crate::minkowski::frame_defect(&self.frame)
    }
}

fn to3<const N: usize>(f: &Lorentz<N>) -> Result<Lorentz<3>> {
    if N != 3 {
        return Err(Error::Unsupported("the quotient backend is two-dimensional".into()));
    }
    Ok(Lorentz::<3>::from_fn(|i, j| f[(i, j)]))
}

fn from3<const N: usize>(f: &Lorentz<3>) -> Lorentz<N> {
    Lorentz::<N>::from_fn(|i, j| f[(i, j)])
}

/// One step of the geodesic random walk: `u = Σᵢ eᵢ √(2dt) nᵢ + V(x) dt`, move to `exp_x(u)` and
/// transport the frame along the step geodesic.
pub fn step<const N: usize>(
    state: &mut FramedState<N>,
    space: &Space<N>,
    drift: &DriftField<N>,
    dt: f64,
    noise: &[f64],
) -> Result<()> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::Contract(format!("dt must lie in (0, {MAX_DT}], got {dt}")));
    }
    if noise.len() != N - 1 {
        return Err(Error::Contract(format!("expected {} gaussians, got {}", N - 1, noise.len())));
    }
    let v = drift.eval(state)?;
    let sq = (2.0 * dt).sqrt();
    let mut w = v * dt;
    for i in 1..N {
        w[i] += sq * noise[i - 1];
    }
    state.advance(&w, space)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    /// `A(t) = ∫⟨V, w dB⟩` (Itô, pre-step evaluation).
    pub a: f64,
    /// `Q(t) = ∫‖V‖² ds`.
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record<const N: usize> {
    pub t: f64,
    pub state: FramedState<N>,
    pub accumulators: Vec<Accumulator>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionPath<const N: usize> {
    pub seed: u64,
    pub path_id: u64,
    pub dt: f64,
    pub horizon: f64,
    pub records: Vec<Record<N>>,
}

impl<const N: usize> DiffusionPath<N> {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.t)
    }

    pub fn record_at(&self, t: f64) -> Result<&Record<N>> {
        if t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::Horizon { t, horizon: self.horizon });
        }
        let tol = 1e-9 * t.abs().max(1.0);
        self.records
            .iter()
            .find(|r| (r.t - t).abs() <= tol)
            .ok_or_else(|| Error::Contract(format!("t = {t} is not a recorded time")))
    }

    pub fn distance(&self, t: f64) -> Result<f64> {
        Ok(self.record_at(t)?.state.distance_from_start())
    }

    pub fn busemann(&self, t: f64) -> Result<f64> {
        Ok(self.record_at(t)?.state.busemann())
    }

    pub fn accumulator(&self, field: usize, t: f64) -> Result<Accumulator> {
        self.record_at(t)?
            .accumulators
            .get(field)
            .copied()
            .ok_or(Error::UnregisteredField(field))
    }

    /// `M_t = exp(½A(t) − ¼Q(t))` for the registered field `field`.
    pub fn girsanov_weight(&self, field: usize, t: f64) -> Result<f64> {
        let acc = self.accumulator(field, t)?;
        Ok((0.5 * acc.a - 0.25 * acc.q).exp())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    /// Recording stride in steps.
    pub stride: usize,
    pub seed: u64,
    pub reorthonormalize_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            dt: 1e-3,
            stride: 100,
            seed: 0,
            reorthonormalize_every: 100,
        }
    }
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Stride that records exactly at multiples of `t`.
    pub fn with_record_interval(mut self, t: f64) -> Self {
        self.stride = ((t / self.dt).round() as usize).max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::Contract(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !(self.horizon >= 0.0) || self.horizon / self.dt > MAX_STEPS {
            return Err(Error::Contract(format!("T/dt must be at most {MAX_STEPS:e}")));
        }
        if self.stride == 0 || self.reorthonormalize_every == 0 {
            return Err(Error::Contract("stride and re-orthonormalization period must be positive".into()));
        }
        Ok(())
    }
}

/// A drifted leafwise diffusion together with the fields whose Girsanov integrals are accumulated.
#[derive(Clone)]
pub struct Diffusion<const N: usize> {
    pub space: Space<N>,
    pub drift: DriftField<N>,
    pub girsanov: Vec<DriftField<N>>,
}

impl<const N: usize> Diffusion<N> {
    pub fn new(space: Space<N>, drift: DriftField<N>) -> Self {
        Self {
            space,
            drift,
            girsanov: Vec::new(),
        }
    }

    pub fn brownian(space: Space<N>) -> Self {
        Self::new(space, DriftField::Zero)
    }

    pub fn with_girsanov(mut self, field: DriftField<N>) -> Self {
        self.girsanov.push(field);
        self
    }

    pub fn simulate(&self, start: &LeafState<N>, cfg: &SimConfig, path_id: u64) -> Result<DiffusionPath<N>> {
        cfg.validate()?;
        if let Space::Quotient(_) = self.space {
            if N != 3 {
                return Err(Error::Unsupported("the quotient backend is two-dimensional".into()));
            }
        }
        let seed = cfg.seed.wrapping_add(path_id);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = cfg.steps();
        let dt = cfg.dt;
        let sq = (2.0 * dt).sqrt();
        let mut state = FramedState::new(start);
        if let Space::Quotient(g) = &self.space {
            let mut f3 = to3(&state.frame)?;
            g.reduce_frame(&mut f3)?;
            state.frame = from3(&f3);
        }
        let mut acc = vec![Accumulator::default(); self.girsanov.len()];
        let mut records = Vec::with_capacity(steps / cfg.stride + 1);
        records.push(Record {
            t: 0.0,
            state,
            accumulators: acc.clone(),
        });
        let drift_zero = self.drift.is_zero();
        let mut noise = Vector::<N>::zeros();
        for i in 1..=steps {
            for k in 1..N {
                noise[k] = sq * rng.sample::<f64, _>(StandardNormal);
            }
            for (a, f) in acc.iter_mut().zip(&self.girsanov) {
                let v = f.eval(&state)?;
                a.a += dot(&v, &noise);
                a.q += dot(&v, &v) * dt;
            }
            let mut w = noise;
            if !drift_zero {
                w += self.drift.eval(&state)? * dt;
            }
            state.advance(&w, &self.space)?;
            if i % cfg.reorthonormalize_every == 0 {
                state.tidy();
            }
            if i % cfg.stride == 0 {
                records.push(Record {
                    t: i as f64 * dt,
                    state,
                    accumulators: acc.clone(),
                });
            }
        }
        Ok(DiffusionPath {
            seed,
            path_id,
            dt,
            horizon: steps as f64 * dt,
            records,
        })
    }

    /// `n` independent paths with ids `0..n`; the result does not depend on scheduling.
    pub fn batch(&self, start: &LeafState<N>, cfg: &SimConfig, n: usize) -> Result<Batch<N>> {
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        self.batch_range(start, cfg, 0..n as u64)
    }

    pub fn batch_range(&self, start: &LeafState<N>, cfg: &SimConfig, ids: std::ops::Range<u64>) -> Result<Batch<N>> {
        cfg.validate()?;
        let out: Vec<(u64, Result<DiffusionPath<N>>)> =
            ids.into_par_iter().map(|id| (id, self.simulate(start, cfg, id))).collect();
        let mut batch = Batch::default();
        for (id, r) in out {
            match r {
                Ok(p) => batch.paths.push(p),
                Err(e) => batch.failures.push((id, e)),
            }
        }
        Ok(batch)
    }
}

#[derive(Clone, Debug)]
pub struct Batch<const N: usize> {
    pub paths: Vec<DiffusionPath<N>>,
    pub failures: Vec<(u64, Error)>,
}

impl<const N: usize> Default for Batch<N> {
    fn default() -> Self {
        Self {
            paths: Vec::new(),
            failures: Vec::new(),
        }
    }
}

impl<const N: usize> Batch<N> {
    /// Fails with the first per-path error (tagged with its path id) if any path failed.
    pub fn require_complete(&self) -> Result<&[DiffusionPath<N>]> {
        match self.failures.first() {
            None => Ok(&self.paths),
            Some((id, e)) => Err(Error::Path {
                path_id: *id,
                source: Box::new(e.clone()),
            }),
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.paths.extend(other.paths);
        self.failures.extend(other.failures);
        self.paths.sort_by_key(|p| p.path_id);
        self.failures.sort_by_key(|f| f.0);
        self
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}
