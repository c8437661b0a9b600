//! Jacobi fields, Riccati limits and the infinitesimal Morse correspondence along base geodesics.
//!
//! Normal-bundle quantities live in a parallel orthonormal normal frame, so they are vectors in
//! `R^{m−1}` (at most 2 here) and operators are `(m−1)×(m−1)` matrices stored in a `Matrix2`
//! together with the active dimension.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::conformal::{self, Base, Chart, ConformalFamily};
use crate::field::Constant;
use crate::hypgeom::{self, direction_to, LeafState, ModelPoint, TangentVec};
use crate::minkowski::{cross3, dot, recast, reorthonormalize, right_boost, sinh_cosh, Lorentz, Vector};
use crate::quotient::FuchsianGroup;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiccatiOp {
    op: Matrix2<f64>,
    dim: usize,
    pub t: f64,
}

impl RiccatiOp {
    pub fn new(op: Matrix2<f64>, dim: usize, t: f64) -> Self {
        let mut r = Self { op, dim, t };
        r.mask();
        r.symmetrize();
        r
    }

    pub fn scalar_identity(dim: usize, k: f64) -> Self {
        Self::new(Matrix2::identity() * k, dim, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.op[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.op
    }

    fn mask(&mut self) {
        if self.dim == 1 {
            self.op[(0, 1)] = 0.0;
            self.op[(1, 0)] = 0.0;
            self.op[(1, 1)] = 0.0;
        }
    }

    fn symmetrize(&mut self) {
        let s = 0.5 * (self.op[(0, 1)] + self.op[(1, 0)]);
        self.op[(0, 1)] = s;
        self.op[(1, 0)] = s;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.op[(i, i)]).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim == 1 {
            return vec![self.op[(0, 0)]];
        }
        let e = self.op.symmetric_eigenvalues();
        let mut v = vec![e[0], e[1]];
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn asymmetry(&self) -> f64 {
        (self.op - self.op.transpose()).amax()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobiPair {
    pub j: Vector2<f64>,
    pub jp: Vector2<f64>,
    pub t: f64,
}

impl JacobiPair {
    pub fn new(j: Vector2<f64>, jp: Vector2<f64>, t: f64) -> Self {
        Self { j, jp, t }
    }

    pub fn scalar(j: f64, jp: f64, t: f64) -> Self {
        Self::new(Vector2::new(j, 0.0), Vector2::new(jp, 0.0), t)
    }
}

/// `J₁·J₂′ − J₁′·J₂`, constant along any geodesic.
pub fn wronskian(a: &JacobiPair, b: &JacobiPair) -> f64 {
    a.j.dot(&b.jp) - a.jp.dot(&b.j)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Side {
    Stable,
    Unstable,
}

/// Horizontal and vertical parts of a vector in `T(SM)` along a geodesic, both normal to it.
#[derive(Clone, Copy, Debug)]
pub struct MorseVector<const N: usize> {
    pub horizontal: TangentVec<N>,
    pub vertical: TangentVec<N>,
    pub base: LeafState<N>,
}

/// A unit-speed geodesic of the base metric with a parallel orthonormal normal frame.
pub struct Geodesic<const N: usize> {
    base: Base<N>,
    x: ModelPoint<N>,
    v: Vector<N>,
    normals: Vec<Vector<N>>,
    track: Option<Track<N>>,
}

/// Precomputed geodesic of a variable-curvature surface at half-step resolution.
struct Track<const N: usize> {
    t0: f64,
    h: f64,
    points: Vec<ModelPoint<N>>,
    velocities: Vec<Vector<N>>,
    normals: Vec<Vector<N>>,
    curvature: Vec<f64>,
}

impl<const N: usize> Geodesic<N> {
    /// Geodesic of the base metric through `v.base` with initial direction `v` (normalized for the
    /// base metric). Variable-curvature bases are integrated over `[t_min, t_max]` with step `dt`.
    pub fn new(base: &Base<N>, v: &TangentVec<N>, t_min: f64, t_max: f64, dt: f64) -> Result<Self> {
        let x = v.base;
        match base {
            Base::Hyperbolic => {
                let u = v.unit()?;
                let f = hypgeom::frame_at(&x);
                // Gram–Schmidt the frame columns against u
                let mut normals: Vec<Vector<N>> = Vec::new();
                for i in 1..N {
                    let mut w: Vector<N> = f.column(i).into_owned();
                    w -= dot(&w, &u.vec) * u.vec;
                    for n in &normals {
                        w -= dot(&w, n) * n;
                    }
                    let nn = dot(&w, &w).sqrt();
                    if nn > 1e-6 {
                        normals.push(w / nn);
                    }
                    if normals.len() == N - 2 {
                        break;
                    }
                }
                Ok(Self {
                    base: base.clone(),
                    x,
                    v: u.vec,
                    normals,
                    track: None,
                })
            }
            Base::Conformal(_) => {
                if N != 3 {
                    return Err(Error::Unsupported("variable curvature is supported on surfaces only".into()));
                }
                let track = Track::build(base, v, t_min, t_max, dt)?;
                let i0 = ((0.0 - track.t0) / track.h).round() as usize;
                Ok(Self {
                    base: base.clone(),
                    x,
                    v: track.velocities[i0],
                    normals: vec![track.normals[i0]],
                    track: Some(track),
                })
            }
        }
    }

    pub fn normal_dim(&self) -> usize {
        N - 2
    }

    pub fn is_constant_curvature(&self) -> bool {
        self.track.is_none()
    }

    fn index(&self, t: f64) -> Result<usize> {
        let tr = self.track.as_ref().expect("track");
        let k = (t - tr.t0) / tr.h;
        let i = k.round();
        if (k - i).abs() > 1e-6 || i < 0.0 || i as usize >= tr.points.len() {
            return Err(Error::Contract(format!("time {t} is not on the precomputed geodesic grid")));
        }
        Ok(i as usize)
    }

    /// Point, unit velocity and parallel normal frame at arclength `t`.
    pub fn frame(&self, t: f64) -> Result<(ModelPoint<N>, Vector<N>, Vec<Vector<N>>)> {
        match &self.track {
            None => {
                let (sh, ch) = crate::minkowski::sinh_cosh(t.abs());
                let sh = sh.copysign(t);
                let p = ModelPoint::project(ch * self.x.coords() + sh * self.v);
                let vel = sh * self.x.coords() + ch * self.v;
                Ok((p, vel, self.normals.clone()))
            }
            Some(tr) => {
                let i = self.index(t)?;
                Ok((tr.points[i], tr.velocities[i], vec![tr.normals[i]]))
            }
        }
    }

    /// Curvature operator `R(t)` in the normal frame.
    pub fn curvature(&self, t: f64) -> Result<Matrix2<f64>> {
        match &self.track {
            None => Ok(-identity(N - 2)),
            Some(tr) => {
                let i = self.index(t)?;
                Ok(Matrix2::new(tr.curvature[i], 0.0, 0.0, 0.0))
            }
        }
    }

    pub fn state(&self, t: f64) -> Result<LeafState<N>> {
        let (p, vel, _) = self.frame(t)?;
        Ok(LeafState::from_tangent(&TangentVec::new(p, vel).unit()?))
    }

    /// Normal-frame components of an ambient tangent vector at arclength `t` (base-metric inner product).
    pub fn components(&self, t: f64, w: &Vector<N>) -> Result<Vector2<f64>> {
        let (p, _, normals) = self.frame(t)?;
        let e2 = (2.0 * self.base.exponent(&p)?.value).exp();
        let mut c = Vector2::zeros();
        for (i, n) in normals.iter().enumerate() {
            c[i] = e2 * dot(w, n);
        }
        Ok(c)
    }

    pub fn assemble(&self, t: f64, c: &Vector2<f64>) -> Result<Vector<N>> {
        let (_, _, normals) = self.frame(t)?;
        let mut w = Vector::<N>::zeros();
        for (i, n) in normals.iter().enumerate() {
            w += c[i] * n;
        }
        Ok(w)
    }
}

impl<const N: usize> Track<N> {
    fn build(base: &Base<N>, v: &TangentVec<N>, t_min: f64, t_max: f64, dt: f64) -> Result<Self> {
        let fam = ConformalFamily::new(base.clone(), Arc::new(Constant(0.0)));
        let h = 0.5 * dt;
        let nb = (-t_min / h).round().max(0.0) as usize;
        let nf = (t_max / h).round().max(0.0) as usize;
        let psi0 = base.exponent(&v.base)?.value;
        let u = v.unit()?.vec * (-psi0).exp();
        // (point, velocity, normal) in ambient coordinates
        let run = |sign: f64, n: usize| -> Result<Vec<(ModelPoint<N>, Vector<N>, Vector<N>)>> {
            let mut chart = Chart::new(&v.base, &(sign * u));
            let mut out = Vec::with_capacity(n + 1);
            let sample = |c: &Chart<N>| {
                let mut a = Vector::<3>::zeros();
                let mut b = Vector::<3>::zeros();
                for i in 0..3 {
                    a[i] = c.x[i];
                    b[i] = c.v[i];
                }
                let nrm = cross3(&a, &b);
                let mut loc = Vector::<N>::zeros();
                for i in 0..3 {
                    loc[i] = nrm[i];
                }
                (c.point(), c.velocity(), c.frame * loc)
            };
            out.push(sample(&chart));
            for _ in 0..n {
                chart.step(&fam, 0.0, h, false)?;
                out.push(sample(&chart));
            }
            Ok(out)
        };
        let back = run(-1.0, nb)?;
        let fwd = run(1.0, nf)?;
        // reversing the velocity flips the cross-product normal, reversing it back restores it
        let mut states: Vec<_> = back.into_iter().skip(1).rev().map(|(p, w, n)| (p, -w, -n)).collect();
        states.extend(fwd);
        let mut tr = Self {
            t0: -(nb as f64) * h,
            h,
            points: Vec::with_capacity(states.len()),
            velocities: Vec::with_capacity(states.len()),
            normals: Vec::with_capacity(states.len()),
            curvature: Vec::with_capacity(states.len()),
        };
        for (p, w, n) in states {
            let j = base.exponent(&p)?;
            let nh = dot(&n, &n).sqrt();
            tr.points.push(p);
            tr.velocities.push(w);
            tr.normals.push(n * ((-j.value).exp() / nh));
            tr.curvature.push((-2.0 * j.value).exp() * (-1.0 - j.laplacian));
        }
        Ok(tr)
    }
}

fn identity(dim: usize) -> Matrix2<f64> {
    if dim == 1 {
        Matrix2::new(1.0, 0.0, 0.0, 0.0)
    } else {
        Matrix2::identity()
    }
}

/// Solves `J″ + R(t)J = 0` from `j0.t` to `t1` (closed form on constant curvature, RK4 otherwise).
pub fn jacobi_solve<const N: usize>(geo: &Geodesic<N>, j0: &JacobiPair, t1: f64, dt: f64) -> Result<JacobiPair> {
    let tau = t1 - j0.t;
    if geo.is_constant_curvature() {
        let (sh, ch) = crate::minkowski::sinh_cosh(tau.abs());
        let sh = sh.copysign(tau);
        return Ok(JacobiPair::new(ch * j0.j + sh * j0.jp, sh * j0.j + ch * j0.jp, t1));
    }
    let steps = (tau.abs() / dt).round() as usize;
    if steps == 0 {
        return Ok(JacobiPair::new(j0.j, j0.jp, t1));
    }
    let h = tau / steps as f64;
    if ((h.abs() - dt) / dt).abs() > 1e-9 {
        return Err(Error::Integration(format!("interval {tau} is not a multiple of dt = {dt}")));
    }
    let (mut j, mut jp, mut t) = (j0.j, j0.jp, j0.t);
    for _ in 0..steps {
        let r0 = geo.curvature(t)?;
        let rm = geo.curvature(t + 0.5 * h)?;
        let r1 = geo.curvature(t + h)?;
        let k1j = jp;
        let k1p = -r0 * j;
        let k2j = jp + 0.5 * h * k1p;
        let k2p = -rm * (j + 0.5 * h * k1j);
        let k3j = jp + 0.5 * h * k2p;
        let k3p = -rm * (j + 0.5 * h * k2j);
        let k4j = jp + h * k3p;
        let k4p = -r1 * (j + h * k3j);
        j += h / 6.0 * (k1j + 2.0 * k2j + 2.0 * k3j + k4j);
        jp += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        t += h;
        if !j.iter().all(|c| c.is_finite()) {
            return Err(Error::Integration("Jacobi field overflow".into()));
        }
    }
    Ok(JacobiPair::new(j, jp, t1))
}

/// Integrates the Riccati equation `V′ + V² + R = 0` from `t_start` with `V = v0` to `t_end`.
fn riccati_run<const N: usize>(geo: &Geodesic<N>, v0: Matrix2<f64>, t_start: f64, t_end: f64, dt: f64) -> Result<Matrix2<f64>> {
    let steps = ((t_end - t_start).abs() / dt).round() as usize;
    let h = (t_end - t_start) / steps.max(1) as f64;
    let f = |v: &Matrix2<f64>, r: &Matrix2<f64>| -(v * v) - r;
    let mut v = v0;
    let mut t = t_start;
    for _ in 0..steps {
        let r0 = geo.curvature(t)?;
        let rm = geo.curvature(t + 0.5 * h)?;
        let r1 = geo.curvature(t + h)?;
        let k1 = f(&v, &r0);
        let k2 = f(&(v + 0.5 * h * k1), &rm);
        let k3 = f(&(v + 0.5 * h * k2), &rm);
        let k4 = f(&(v + h * k3), &r1);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let s = 0.5 * (v[(0, 1)] + v[(1, 0)]);
        v[(0, 1)] = s;
        v[(1, 0)] = s;
        t += h;
    }
    Ok(v)
}

/// Integrates the Riccati equation `V′ + V² + R = 0` along `geo` from `v0` at `t_start` to `t_end`,
/// on any base (no closed-form shortcut).
pub fn riccati_integrate<const N: usize>(geo: &Geodesic<N>, v0: &RiccatiOp, t_start: f64, t_end: f64, dt: f64) -> Result<RiccatiOp> {
    let v = riccati_run(geo, *v0.matrix(), t_start, t_end, dt)?;
    Ok(RiccatiOp::new(v, geo.normal_dim(), t_end))
}

/// Largest horizon tried by [`riccati_limit`] before reporting non-convergence.
pub const RICCATI_HORIZON_CAP: f64 = 320.0;

/// Stable (`S′(0)`) or unstable (`U′(0)`) Riccati limit along `geo`, with horizon-doubling certificate.
pub fn riccati_limit<const N: usize>(geo: &Geodesic<N>, side: Side, horizon: f64, dt: f64) -> Result<RiccatiOp> {
    if horizon < 20.0 {
        return Err(Error::Contract(format!("riccati_limit needs T ≥ 20, got {horizon}")));
    }
    let dim = geo.normal_dim();
    let id = identity(dim);
    if geo.is_constant_curvature() {
        let s = if side == Side::Stable { -1.0 } else { 1.0 };
        return Ok(RiccatiOp::new(id * s, dim, 0.0));
    }
    let run = |t: f64| match side {
        Side::Unstable => riccati_run(geo, id, -t, 0.0, dt),
        Side::Stable => riccati_run(geo, -id, t, 0.0, dt),
    };
    let mut t = horizon;
    let mut prev = run(t)?;
    while 2.0 * t <= RICCATI_HORIZON_CAP {
        let next = run(2.0 * t)?;
        if (next - prev).amax() < 1e-8 {
            return Ok(RiccatiOp::new(next, dim, 0.0));
        }
        prev = next;
        t *= 2.0;
    }
    Err(Error::Convergence(format!("Riccati limit not converged at horizon {t}")))
}

/// Options shared by [`morse_xi`] and [`spray_derivative`].
#[derive(Clone, Copy, Debug)]
pub struct MorseOptions {
    pub horizon: f64,
    pub dt: f64,
}

impl Default for MorseOptions {
    fn default() -> Self {
        Self { horizon: 30.0, dt: 1e-3 }
    }
}

/// Half-line integrals `∫_{−T}^0 (K′_s − U′K_s)(0) ds` and `∫_0^T (K′_s − S′K_s)(0) ds` with the
/// Riccati limits at 0.
struct HalfLines {
    past: Vector2<f64>,
    future: Vector2<f64>,
    s_op: Matrix2<f64>,
    u_op: Matrix2<f64>,
}

fn upsilon_components<const N: usize>(family: &ConformalFamily<N>, geo: &Geodesic<N>, s: f64) -> Result<Vector2<f64>> {
    let (p, vel, _) = geo.frame(s)?;
    let u = conformal::upsilon_along(family, &TangentVec::new(p, vel))?;
    geo.components(s, &u.vec)
}

fn half_lines<const N: usize>(family: &ConformalFamily<N>, geo: &Geodesic<N>, opts: &MorseOptions) -> Result<HalfLines> {
    let dt = opts.dt;
    let n = (opts.horizon / dt).round() as usize;
    let n = n + n % 2;
    let h = opts.horizon / n as f64;
    let s_op = *riccati_limit(geo, Side::Stable, 20.0f64.max(opts.horizon), dt)?.matrix();
    let u_op = *riccati_limit(geo, Side::Unstable, 20.0f64.max(opts.horizon), dt)?.matrix();
    let integrand = |s: f64, op: &Matrix2<f64>| -> Result<(Vector2<f64>, f64)> {
        let ups = upsilon_components(family, geo, s)?;
        let k = jacobi_solve(geo, &JacobiPair::new(Vector2::zeros(), ups, s), 0.0, h)?;
        let scale = k.jp.amax().max(k.j.amax());
        Ok((k.jp - op * k.j, scale))
    };
    let simpson = |sign: f64, op: &Matrix2<f64>| -> Result<Vector2<f64>> {
        let mut acc = Vector2::zeros();
        let mut cancel: f64 = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let (f, scale) = integrand(sign * i as f64 * h, op)?;
            cancel = cancel.max(scale);
            acc += w * f;
        }
        // ends of the window: the forcing must have died out
        let (tail, _) = integrand(sign * opts.horizon, op)?;
        let ups_end = upsilon_components(family, geo, sign * opts.horizon)?;
        if ups_end.amax() > 1e-12 || tail.amax() > 1e-6 {
            return Err(Error::Integrability(format!(
                "forcing does not vanish at the end of the window (|Υ| = {:.3e}); enlarge T or use a compactly supported φ",
                ups_end.amax()
            )));
        }
        if cancel * 1e-16 > 1e-9 {
            return Err(Error::Integrability(format!(
                "cancellation in K′ − S′K too large (|K| up to {cancel:.3e})"
            )));
        }
        Ok(acc * (h / 3.0))
    };
    let future = simpson(1.0, &s_op)?;
    let past = simpson(-1.0, &u_op)?;
    Ok(HalfLines {
        past,
        future,
        s_op,
        u_op,
    })
}

fn base_geodesic<const N: usize>(family: &ConformalFamily<N>, state: &LeafState<N>, opts: &MorseOptions) -> Result<Geodesic<N>> {
    let v = direction_to(&state.point, &state.xi);
    if !family.base.is_constant_curvature() {
        return Err(Error::Unsupported(
            "leaf states determine base geodesics only on constant curvature; use morse_xi_along".into(),
        ));
    }
    let span = opts.horizon.max(20.0) * 2.0;
    Geodesic::new(&family.base, &v, -span, span, opts.dt)
}

fn inverse(m: &Matrix2<f64>, dim: usize) -> Result<Matrix2<f64>> {
    if dim == 1 {
        if m[(0, 0)] == 0.0 {
            return Err(Error::Degenerate("singular operator".into()));
        }
        return Ok(Matrix2::new(1.0 / m[(0, 0)], 0.0, 0.0, 0.0));
    }
    m.try_inverse().ok_or_else(|| Error::Degenerate("singular operator".into()))
}

/// Infinitesimal Morse correspondence `(Ξ_γ(0), ∇_γ̇Ξ_γ(0))` along the geodesic of `state`.
pub fn morse_xi<const N: usize>(family: &ConformalFamily<N>, state: &LeafState<N>, opts: &MorseOptions) -> Result<MorseVector<N>> {
    let geo = base_geodesic(family, state, opts)?;
    morse_xi_along(family, &geo, opts)
}

/// As [`morse_xi`] on an explicitly constructed base geodesic, at arclength 0.
pub fn morse_xi_along<const N: usize>(family: &ConformalFamily<N>, geo: &Geodesic<N>, opts: &MorseOptions) -> Result<MorseVector<N>> {
    let hl = half_lines(family, geo, opts)?;
    let dim = geo.normal_dim();
    let gap = inverse(&(hl.u_op - hl.s_op), dim)?;
    let a = gap * hl.past;
    let b = gap * hl.future;
    let xi = a + b;
    let dxi = hl.s_op * a + hl.u_op * b;
    let (p, _, _) = geo.frame(0.0)?;
    Ok(MorseVector {
        horizontal: TangentVec::new(p, geo.assemble(0.0, &xi)?),
        vertical: TangentVec::new(p, geo.assemble(0.0, &dxi)?),
        base: geo.state(0.0)?,
    })
}

/// `(X̄^λ)′₀ = (0, −φ(x)·v + ∫₀^∞ (K′_s(0) − S′(0)K_s(0)) ds)`.
pub fn spray_derivative<const N: usize>(
    family: &ConformalFamily<N>,
    state: &LeafState<N>,
    opts: &MorseOptions,
) -> Result<MorseVector<N>> {
    let geo = base_geodesic(family, state, opts)?;
    let hl = half_lines(family, &geo, opts)?;
    let (p, vel, _) = geo.frame(0.0)?;
    let phi = family.phi.value(&p)?;
    let vertical = -phi * vel + geo.assemble(0.0, &hl.future)?;
    Ok(MorseVector {
        horizontal: TangentVec::new(p, Vector::<N>::zeros()),
        vertical: TangentVec::new(p, vertical),
        base: *state,
    })
}

/// [`spray_derivative`] on a constant-curvature base with the closed-form stable integrand
/// `K′_s − S′K_s = e^{−s}·Υ(s)` (transported back to 0), truncated at `horizon`.
///
/// Suited to forcings that do not die out, such as invariant fields on the quotient: the
/// truncation error is at most `e^{−horizon}·sup‖Υ‖`. With `group` given (`N = 3`), the geodesic
/// frame is reduced into the fundamental domain as it advances, so `φ` is only ever evaluated at
/// well-conditioned points.
pub fn spray_derivative_stable<const N: usize>(
    family: &ConformalFamily<N>,
    state: &LeafState<N>,
    horizon: f64,
    dt: f64,
    group: Option<&FuchsianGroup>,
) -> Result<MorseVector<N>> {
    if !family.base.is_constant_curvature() {
        return Err(Error::Unsupported("the stable-tensor form needs a constant-curvature base".into()));
    }
    if !(horizon >= 10.0 && dt > 0.0 && dt <= 0.1) {
        return Err(Error::Contract(format!("need horizon ≥ 10 and dt ∈ (0, 0.1], got {horizon}, {dt}")));
    }
    if group.is_some() && N != 3 {
        return Err(Error::Unsupported("the quotient backend is two-dimensional".into()));
    }
    let v = direction_to(&state.point, &state.xi);
    let start = adapted_frame(&state.point, &v.vec);
    let n = (horizon / dt).round() as usize;
    let n = n + n % 2;
    let h = horizon / n as f64;
    let mut step = Vector::<N>::zeros();
    step[1] = h;
    let (sh, ch) = sinh_cosh(h);
    let mut f = start;
    let mut acc = Vector::<N>::zeros();
    for i in 0..=n {
        if i > 0 {
            right_boost(&mut f, &step, h, sh, ch);
            if let Some(g) = group {
                let mut f3: Lorentz<3> = recast(&f);
                g.reduce_frame(&mut f3)?;
                // errors transverse to the flow grow like e^s; keep the frame Lorentz
                reorthonormalize(&mut f3);
                f = recast(&f3);
            }
        }
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let s = i as f64 * h;
        let x = ModelPoint::project(f.column(0).into_owned());
        let ups = conformal::upsilon_along(family, &TangentVec::new(x, f.column(1).into_owned()))?;
        let weight = w * (-s).exp();
        for j in 2..N {
            acc[j] += weight * dot(&ups.vec, &f.column(j).into_owned());
        }
    }
    let integral = start * (acc * (h / 3.0));
    let phi = family.phi.value(&state.point)?;
    Ok(MorseVector {
        horizontal: TangentVec::new(state.point, Vector::<N>::zeros()),
        vertical: TangentVec::new(state.point, -phi * v.vec + integral),
        base: *state,
    })
}

/// Lorentz frame with columns `x`, `v` and an orthonormal completion.
fn adapted_frame<const N: usize>(x: &ModelPoint<N>, v: &Vector<N>) -> Lorentz<N> {
    let base = hypgeom::frame_at(x);
    let mut cols: Vec<Vector<N>> = vec![*x.coords(), *v];
    for k in 1..N {
        let mut c: Vector<N> = base.column(k).into_owned();
        for e in &cols[1..] {
            c -= dot(&c, e) * e;
        }
        let n = dot(&c, &c).sqrt();
        if n > 0.3 && cols.len() < N {
            cols.push(c / n);
        }
    }
    Lorentz::<N>::from_fn(|i, j| cols[j][i])
}

/// Finite-difference shooting estimate of `(X̄^λ)′₀` on H²: the normal component `dθ/dλ` and the
/// tangential component `d/dλ e^{−λφ(x)}`, from `g^{±h}` geodesics aimed at the point at distance
/// `target_distance` along the base geodesic, Richardson-extrapolated over the step list.
#[derive(Clone, Copy, Debug)]
pub struct ShootingEstimate {
    pub normal: f64,
    pub tangential: f64,
    /// Central differences for each step in `steps`, before extrapolation.
    pub raw: [f64; 2],
}

pub fn spray_derivative_by_shooting(
    family: &ConformalFamily<3>,
    state: &LeafState<3>,
    target_distance: f64,
    steps: [f64; 2],
    dt: f64,
) -> Result<ShootingEstimate> {
    if !family.base.is_constant_curvature() {
        return Err(Error::Unsupported("shooting oracle is implemented on H²".into()));
    }
    let x = state.point;
    let v = direction_to(&x, &state.xi);
    let n = TangentVec::new(x, cross3(x.coords(), &v.vec)).unit()?;
    let target = hypgeom::exp_map(&x, &v, target_distance)?;
    let (center, radius) = family
        .phi
        .support_radius()
        .ok_or_else(|| Error::Unsupported("shooting needs a compactly supported φ".into()))?;
    let exit = hypgeom::distance(&x, &center) + radius + 0.5;
    let miss = |lambda: f64, theta: f64| -> Result<f64> {
        let dir = TangentVec::new(x, theta.cos() * v.vec + theta.sin() * n.vec);
        let path = conformal::geodesic_lambda(family, &x, &dir, lambda, exit, dt)?;
        let (p, w) = path.end();
        if hypgeom::distance(&p, &center) <= radius {
            return Err(Error::Integration("shooting path still inside the support".into()));
        }
        let mut a = Vector::<3>::zeros();
        let mut b = Vector::<3>::zeros();
        for i in 0..3 {
            a[i] = p.coords()[i];
            b[i] = w[i];
        }
        let plane = cross3(&a, &b);
        Ok(dot(&plane, target.coords()) / (dot(&plane, &plane).sqrt() * target.coords()[0]))
    };
    let solve = |lambda: f64| -> Result<f64> {
        let (mut t0, mut t1) = (0.0, 1e-4);
        let (mut f0, mut f1) = (miss(lambda, t0)?, miss(lambda, t1)?);
        for _ in 0..40 {
            if f1 == f0 {
                break;
            }
            let t2 = t1 - f1 * (t1 - t0) / (f1 - f0);
            t0 = t1;
            f0 = f1;
            t1 = t2;
            f1 = miss(lambda, t1)?;
            if (t1 - t0).abs() < 1e-15 {
                break;
            }
        }
        Ok(t1)
    };
    let mut raw = [0.0; 2];
    for (k, &h) in steps.iter().enumerate() {
        raw[k] = (solve(h)? - solve(-h)?) / (2.0 * h);
    }
    let r = (steps[0] / steps[1]).powi(2);
    let normal = (r * raw[1] - raw[0]) / (r - 1.0);
    Ok(ShootingEstimate {
        normal,
        tangential: -family.phi.value(&x)?,
        raw,
    })
}

/// Largest plug-back residuals of [`morse_xi`] along the geodesic of `state`.
#[derive(Clone, Copy, Debug)]
pub struct MorseResidual {
    /// `|Ξ″ + RΞ + Υ|` with `Ξ″` by central differences.
    pub ode: f64,
    /// `|Ξ′ − ∇Ξ|` between the differenced horizontal part and the returned vertical part.
    pub derivative: f64,
}

/// Evaluates [`morse_xi`] at the shifted states `γ(t), γ(t ± h)` for each `t` and differences the
/// horizontal part in the parallel normal frame.
pub fn morse_residual<const N: usize>(
    family: &ConformalFamily<N>,
    state: &LeafState<N>,
    ts: &[f64],
    h: f64,
    opts: &MorseOptions,
) -> Result<MorseResidual> {
    let geo = base_geodesic(family, state, opts)?;
    let comp = |s: f64| -> Result<(Vector2<f64>, Vector2<f64>)> {
        let m = morse_xi(family, &geo.state(s)?, opts)?;
        Ok((geo.components(s, &m.horizontal.vec)?, geo.components(s, &m.vertical.vec)?))
    };
    let mut out = MorseResidual { ode: 0.0, derivative: 0.0 };
    for &t in ts {
        let (xm, _) = comp(t - h)?;
        let (x0, d0) = comp(t)?;
        let (xp, _) = comp(t + h)?;
        let second = (xp - 2.0 * x0 + xm) / (h * h);
        let first = (xp - xm) / (2.0 * h);
        let res = second + geo.curvature(t)? * x0 + upsilon_components(family, &geo, t)?;
        out.ode = out.ode.max(res.amax());
        out.derivative = out.derivative.max((first - d0).amax());
    }
    Ok(out)
}
