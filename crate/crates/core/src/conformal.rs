//! Conformal families `g^λ = e^{2(ψ + λφ + λ²φ₂/2)} g_hyp` and their first-order geometry.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::field::{Jet, ScalarField};
use crate::hypgeom::{direction_to, frame_at, LeafState, ModelPoint, TangentVec};
use crate::jacobi::RiccatiOp;
use crate::minkowski::{dot, e0, lorentz_inverse, reorthonormalize, Lorentz, Vector};
use crate::{Error, Result};

/// The base metric `e^{2ψ} g_hyp` of a family.
#[derive(Clone)]
pub enum Base<const N: usize> {
    /// Constant curvature −1.
    Hyperbolic,
    /// Conformal exponent `ψ` on H² (or a quotient surface, when `ψ` is invariant).
    Conformal(Arc<dyn ScalarField<N>>),
}

impl<const N: usize> Base<N> {
    pub fn is_constant_curvature(&self) -> bool {
        matches!(self, Base::Hyperbolic)
    }

    pub fn exponent(&self, x: &ModelPoint<N>) -> Result<Jet<N>> {
        match self {
            Base::Hyperbolic => Ok(Jet::zero(x)),
            Base::Conformal(psi) => psi.jet(x),
        }
    }
}

#[derive(Clone)]
pub struct ConformalFamily<const N: usize> {
    pub base: Base<N>,
    /// `dφ^λ/dλ` at `λ = 0`.
    pub phi: Arc<dyn ScalarField<N>>,
    /// `d²φ^λ/dλ²` at `λ = 0`; absent means zero.
    pub second_order: Option<Arc<dyn ScalarField<N>>>,
}

impl<const N: usize> ConformalFamily<N> {
    pub fn new(base: Base<N>, phi: Arc<dyn ScalarField<N>>) -> Self {
        Self {
            base,
            phi,
            second_order: None,
        }
    }

    pub fn hyperbolic(phi: Arc<dyn ScalarField<N>>) -> Self {
        Self::new(Base::Hyperbolic, phi)
    }

    /// Jet of the full exponent `ψ + λφ + λ²φ₂/2` at `x`.
    pub fn exponent(&self, lambda: f64, x: &ModelPoint<N>) -> Result<Jet<N>> {
        let mut j = self.base.exponent(x)?;
        if lambda != 0.0 {
            j.add(&self.phi.jet(x)?.scaled(lambda));
            if let Some(p2) = &self.second_order {
                j.add(&p2.jet(x)?.scaled(0.5 * lambda * lambda));
            }
        }
        Ok(j)
    }

    /// Same family with `φ` replaced by `−φ`.
    pub fn negated(&self) -> Self {
        Self {
            base: self.base.clone(),
            phi: Arc::new(crate::field::Scaled {
                factor: -1.0,
                inner: self.phi.clone(),
            }),
            second_order: self.second_order.clone(),
        }
    }
}

/// `Υ = −∇φ + ⟨∇φ, γ̇⟩γ̇` for a base-metric unit velocity `γ̇` (gradient and inner product of the base metric).
pub fn upsilon_along<const N: usize>(family: &ConformalFamily<N>, velocity: &TangentVec<N>) -> Result<TangentVec<N>> {
    let x = velocity.base;
    let psi = family.base.exponent(&x)?;
    let g = family.phi.gradient(&x)?;
    let e = (-2.0 * psi.value).exp();
    let along = g.inner(velocity);
    Ok(TangentVec::new(x, -e * g.vec + along * velocity.vec))
}

/// `Υ` along the hyperbolic geodesic through `state` towards its boundary point.
pub fn upsilon<const N: usize>(family: &ConformalFamily<N>, state: &LeafState<N>) -> Result<TangentVec<N>> {
    if !family.base.is_constant_curvature() {
        return Err(Error::Unsupported(
            "upsilon from a leaf state needs a constant-curvature base; use upsilon_along".into(),
        ));
    }
    upsilon_along(family, &direction_to(&state.point, &state.xi))
}

/// First-order connection difference `(Xφ)Y + (Yφ)X − ⟨X,Y⟩∇φ`.
pub fn christoffel_correction<const N: usize>(
    family: &ConformalFamily<N>,
    x: &TangentVec<N>,
    y: &TangentVec<N>,
) -> Result<TangentVec<N>> {
    let p = x.base;
    let scale = 1.0 + p.coords()[0];
    if (x.base.coords() - y.base.coords()).amax() > 1e-9 * scale {
        return Err(Error::Contract("christoffel_correction needs vectors at the same point".into()));
    }
    let g = family.phi.gradient(&p)?;
    let xf = g.inner(x);
    let yf = g.inner(y);
    // ⟨X,Y⟩_g ∇^g φ = ⟨X,Y⟩_hyp ∇^hyp φ: the conformal factors cancel.
    Ok(TangentVec::new(p, xf * y.vec + yf * x.vec - x.inner(y) * g.vec))
}

/// Sectional curvatures of `e^{2f} g_hyp` at the point of `jet` over the coordinate planes of an
/// orthonormal frame, and the largest one over all planes.
pub fn max_sectional_curvature<const N: usize>(jet: &Jet<N>) -> f64 {
    let x = jet.gradient.base;
    let m = N - 1;
    let f = frame_at(&x);
    // T = Hess f − df⊗df + ½|df|² g ; K(P) = e^{−2f}(−1 − tr_P T)
    let mut t = DMatrix::<f64>::zeros(m, m);
    let grad = jet.gradient.vec;
    let g2 = dot(&grad, &grad);
    for i in 0..m {
        let ei: Vector<N> = f.column(i + 1).into_owned();
        let hi = jet.hessian_apply(&ei);
        for j in 0..m {
            let ej: Vector<N> = f.column(j + 1).into_owned();
            t[(i, j)] = dot(&hi, &ej) - dot(&grad, &ei) * dot(&grad, &ej);
        }
        t[(i, i)] += 0.5 * g2;
    }
    let t = 0.5 * (&t + t.transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(t).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    (-2.0 * jet.value).exp() * (-1.0 - ev[0] - ev[1])
}

/// Gaussian curvature `e^{−2f}(−1 − Δ_hyp f)` of `e^{2f} g_hyp` on H².
pub fn gaussian_curvature(jet: &Jet<3>) -> f64 {
    (-2.0 * jet.value).exp() * (-1.0 - jet.laplacian)
}

/// Curvature operator `Y ↦ R(Y, γ̇)γ̇` of the base metric in a parallel normal frame.
pub fn curvature_along<const N: usize>(base: &Base<N>, footpoint: &ModelPoint<N>) -> Result<RiccatiOp> {
    match base {
        Base::Hyperbolic => Ok(RiccatiOp::scalar_identity(N - 2, -1.0)),
        Base::Conformal(psi) => {
            if N != 3 {
                return Err(Error::Unsupported("variable curvature is supported on surfaces only".into()));
            }
            let j = psi.jet(footpoint)?;
            let k = (-2.0 * j.value).exp() * (-1.0 - j.laplacian);
            Ok(RiccatiOp::scalar_identity(1, k))
        }
    }
}

/// Largest `λ` such that `e^{2(ψ+λ'φ)} g_hyp` has negative curvature at every sample point for
/// all `|λ'| ≤ λ`, times the safety factor 0.5.
pub fn lambda_max<const N: usize>(family: &ConformalFamily<N>, points: &[ModelPoint<N>]) -> Result<f64> {
    let negative = |lam: f64| -> Result<bool> {
        for p in points {
            for s in [lam, -lam] {
                if max_sectional_curvature(&family.exponent(s, p)?) >= 0.0 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while negative(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(f64::INFINITY);
        }
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if negative(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // the scan is monotone only on a grid; confirm every grid value below the answer
    let ans = 0.5 * lo;
    for k in 1..=20 {
        if !negative(ans * k as f64 / 20.0)? {
            return Err(Error::Domain("curvature scan is not monotone in λ".into()));
        }
    }
    Ok(ans)
}

/// A discretized geodesic of `g^λ`.
#[derive(Clone, Debug)]
pub struct GeodesicPath<const N: usize> {
    pub times: Vec<f64>,
    pub points: Vec<ModelPoint<N>>,
    /// Ambient velocities with respect to the parameter, unit for `g^λ`.
    pub velocities: Vec<Vector<N>>,
    /// Largest relative deviation of the `g^λ`-speed from 1.
    pub speed_drift: f64,
}

impl<const N: usize> GeodesicPath<N> {
    pub fn end(&self) -> (ModelPoint<N>, Vector<N>) {
        (*self.points.last().unwrap(), *self.velocities.last().unwrap())
    }
}

/// Geodesic state in a moving chart: the ambient state is `frame · (x, v)` with `x` kept near the
/// origin, so velocities never carry the ε·cosh² roundoff of far-out ambient coordinates.
#[derive(Clone, Debug)]
pub(crate) struct Chart<const N: usize> {
    pub frame: Lorentz<N>,
    inv: Lorentz<N>,
    pub x: Vector<N>,
    pub v: Vector<N>,
    moves: usize,
}

impl<const N: usize> Chart<N> {
    pub fn new(x: &ModelPoint<N>, v: &Vector<N>) -> Self {
        let frame = frame_at(x);
        let inv = lorentz_inverse(&frame);
        let loc = TangentVec::new(ModelPoint::origin(), inv * v);
        Self {
            frame,
            inv,
            x: e0(),
            v: loc.vec,
            moves: 0,
        }
    }

    pub fn point(&self) -> ModelPoint<N> {
        ModelPoint::project(self.frame * self.x)
    }

    pub fn velocity(&self) -> Vector<N> {
        self.frame * self.v
    }

    fn accel(&self, family: &ConformalFamily<N>, lambda: f64, x: &Vector<N>, v: &Vector<N>) -> Result<Vector<N>> {
        let p = ModelPoint::project(self.frame * x);
        let g = self.inv * family.exponent(lambda, &p)?.gradient.vec;
        let vv = dot(v, v);
        Ok(vv * x - 2.0 * dot(&g, v) * v + vv * g)
    }

    /// One RK4 step of length `h` from `(x, v)` in local coordinates.
    fn rk4(&self, family: &ConformalFamily<N>, lambda: f64, x: &Vector<N>, v: &Vector<N>, h: f64) -> Result<(Vector<N>, Vector<N>)> {
        let k1v = self.accel(family, lambda, x, v)?;
        let v2 = v + 0.5 * h * k1v;
        let k2v = self.accel(family, lambda, &(x + 0.5 * h * v), &v2)?;
        let v3 = v + 0.5 * h * k2v;
        let k3v = self.accel(family, lambda, &(x + 0.5 * h * v2), &v3)?;
        let v4 = v + h * k3v;
        let k4v = self.accel(family, lambda, &(x + h * v3), &v4)?;
        let nx = x + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4);
        let nv = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        let p = ModelPoint::project(nx);
        Ok((*p.coords(), TangentVec::new(p, nv).vec))
    }

    /// Advances by `h`; with `check`, also compares against two half steps and returns the gap.
    pub fn step(&mut self, family: &ConformalFamily<N>, lambda: f64, h: f64, check: bool) -> Result<f64> {
        let full = self.rk4(family, lambda, &self.x, &self.v, h)?;
        let mut err = 0.0;
        if check {
            let mid = self.rk4(family, lambda, &self.x, &self.v, 0.5 * h)?;
            let half = self.rk4(family, lambda, &mid.0, &mid.1, 0.5 * h)?;
            err = tangent_gap(&full.0, &(full.0 - half.0)).max(tangent_gap(&full.0, &(full.1 - half.1)));
        }
        if !full.0.iter().chain(full.1.iter()).all(|c| c.is_finite()) {
            return Err(Error::Integration("non-finite geodesic state".into()));
        }
        self.x = full.0;
        self.v = full.1;
        // each frame product rounds at the scale of the frame, so move the chart rarely
        if self.x[0] > 1.125 {
            self.recenter();
        }
        Ok(err)
    }

    fn recenter(&mut self) {
        let b = frame_at(&ModelPoint::project(self.x));
        let bi = lorentz_inverse(&b);
        self.v = TangentVec::new(ModelPoint::origin(), bi * self.v).vec;
        self.x = e0();
        self.frame *= b;
        self.moves += 1;
        // Gram–Schmidt loses ε·cosh² in the Gram matrix, so only correct well-conditioned frames
        if self.moves.is_multiple_of(16) && self.frame[(0, 0)] < 1e4 {
            reorthonormalize(&mut self.frame);
        }
        self.inv = lorentz_inverse(&self.frame);
    }
}

// Size of the tangential part of an ambient difference at `x`.
fn tangent_gap<const N: usize>(x: &Vector<N>, d: &Vector<N>) -> f64 {
    let t = d + dot(x, d) * x;
    dot(&t, &t).max(0.0).sqrt()
}

/// Integrates the geodesic of `g^λ` from `x` in the direction of `v` for parameter time `T`
/// with fixed-step RK4 in a recentred chart and periodic step-halving checks.
pub fn geodesic_lambda<const N: usize>(
    family: &ConformalFamily<N>,
    x: &ModelPoint<N>,
    v: &TangentVec<N>,
    lambda: f64,
    horizon: f64,
    dt: f64,
) -> Result<GeodesicPath<N>> {
    if !(dt > 0.0 && dt <= 1e-3 + 1e-15) {
        return Err(Error::Contract(format!("geodesic_lambda needs 0 < dt ≤ 1e-3, got {dt}")));
    }
    let steps = (horizon / dt).round() as usize;
    let h = horizon / steps.max(1) as f64;
    let speed = |c: &Chart<N>| -> Result<f64> {
        let f = family.exponent(lambda, &c.point())?.value;
        Ok(f.exp() * dot(&c.v, &c.v).max(0.0).sqrt())
    };
    let mut chart = Chart::new(x, &v.vec);
    let s0 = speed(&chart)?;
    if s0 == 0.0 {
        return Err(Error::Degenerate("zero initial velocity".into()));
    }
    chart.v /= s0;
    let mut out = GeodesicPath {
        times: Vec::with_capacity(steps + 1),
        points: Vec::with_capacity(steps + 1),
        velocities: Vec::with_capacity(steps + 1),
        speed_drift: 0.0,
    };
    out.times.push(0.0);
    out.points.push(*x);
    out.velocities.push(chart.velocity());
    for i in 0..steps {
        let check = i % 128 == 0;
        if check && (lambda != 0.0 || !family.base.is_constant_curvature()) {
            let k = max_sectional_curvature(&family.exponent(lambda, &chart.point())?);
            if k >= 0.0 {
                return Err(Error::Integration(format!("curvature {k} ≥ 0 along the path at λ = {lambda}")));
            }
        }
        let err = chart.step(family, lambda, h, check)?;
        if err > 1e-9 || !err.is_finite() {
            return Err(Error::Integration(format!("step rejected at t = {}: error {err}", i as f64 * h)));
        }
        out.speed_drift = out.speed_drift.max((speed(&chart)? - 1.0).abs());
        out.times.push((i + 1) as f64 * h);
        out.points.push(chart.point());
        out.velocities.push(chart.velocity());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Constant, RadialBump};
    use crate::hypgeom::{exp_map, geodesic_velocity, random_point, random_unit_tangent, H2, H3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bump_family() -> ConformalFamily<3> {
        let c = H2::from_spatial(&[0.8, 0.6]).unwrap();
        ConformalFamily::hyperbolic(Arc::new(RadialBump::new(c, 1.0, 0.3)))
    }

    #[test]
    fn upsilon_properties() {
        let fam = bump_family();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x: H2 = random_point(&mut rng, 2.0);
            let v = random_unit_tangent(&mut rng, &x);
            let u = upsilon_along(&fam, &v).unwrap();
            assert!(u.inner(&v).abs() < 1e-10);
            let g = fam.phi.gradient(&x).unwrap();
            let lhs = u.inner(&u) + g.inner(&v).powi(2);
            assert!((lhs - g.inner(&g)).abs() < 1e-10);
            let state = LeafState::from_tangent(&v);
            let u2 = upsilon(&fam, &state).unwrap();
            assert!((u2.vec - u.vec).amax() < 1e-9);
        }
        let flat = ConformalFamily::<3>::hyperbolic(Arc::new(Constant(2.0)));
        let x = H2::origin();
        let v = TangentVec::new(x, Vector::<3>::new(0.0, 1.0, 0.0));
        assert_eq!(upsilon_along(&flat, &v).unwrap().vec, Vector::<3>::zeros());
        // gradient parallel to the velocity
        let c = H2::polar(1.0, &Vector::<3>::new(0.0, 1.0, 0.0));
        let fam = ConformalFamily::<3>::hyperbolic(Arc::new(RadialBump::new(c, 2.0, 1.0)));
        assert!(upsilon_along(&fam, &v).unwrap().norm() < 1e-14);
    }

    #[test]
    fn christoffel_identities() {
        let fam = bump_family();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let x: H2 = random_point(&mut rng, 2.0);
            let v = random_unit_tangent(&mut rng, &x);
            let w = random_unit_tangent(&mut rng, &x).scale(0.7);
            let z = random_unit_tangent(&mut rng, &x).scale(-1.3);
            let g = fam.phi.gradient(&x).unwrap();
            let gvv = christoffel_correction(&fam, &v, &v).unwrap();
            let paper = 2.0 * g.inner(&v) * v.vec - g.vec;
            assert!((gvv.vec - paper).amax() < 1e-12);
            // normal part of Γ_γ̇γ̇ is +Υ with Υ = −∇φ + ⟨∇φ,γ̇⟩γ̇
            let normal = gvv.vec - gvv.inner(&v) * v.vec;
            let ups = upsilon_along(&fam, &v).unwrap();
            assert!((normal - ups.vec).amax() < 1e-10);
            let a = christoffel_correction(&fam, &w, &z).unwrap();
            let b = christoffel_correction(&fam, &z, &w).unwrap();
            assert!((a.vec - b.vec).amax() < 1e-12);
            let sum = TangentVec::new(x, 2.0 * w.vec + z.vec);
            let lin = christoffel_correction(&fam, &sum, &v).unwrap();
            let parts = 2.0 * christoffel_correction(&fam, &w, &v).unwrap().vec
                + christoffel_correction(&fam, &z, &v).unwrap().vec;
            assert!((lin.vec - parts).amax() < 1e-12);
        }
        let flat = ConformalFamily::<3>::hyperbolic(Arc::new(Constant(1.0)));
        let x = H2::origin();
        let v = TangentVec::new(x, Vector::<3>::new(0.0, 1.0, 0.0));
        assert_eq!(christoffel_correction(&flat, &v, &v).unwrap().vec, Vector::<3>::zeros());
        let y = H2::from_spatial(&[1.0, 0.0]).unwrap();
        let w = TangentVec::new(y, Vector::<3>::new(0.0, 0.0, 1.0));
        assert!(matches!(christoffel_correction(&flat, &v, &w), Err(Error::Contract(_))));
    }

    #[test]
    fn christoffel_matches_connection_derivative() {
        // the exact connection difference of e^{2λφ}g is λ·Γ: geodesic acceleration is linear in λ
        let fam = bump_family();
        let x = H2::from_spatial(&[0.5, 0.3]).unwrap();
        let v = TangentVec::new(x, frame_at(&x).column(1).into_owned());
        let lam = 1e-3;
        let chart = Chart::new(&x, &v.vec);
        let a_plus = chart.accel(&fam, lam, &chart.x, &chart.v).unwrap();
        let a_zero = chart.accel(&fam, 0.0, &chart.x, &chart.v).unwrap();
        let d = chart.frame * (a_plus - a_zero) / lam;
        let gamma = christoffel_correction(&fam, &v, &v).unwrap();
        assert!((d + gamma.vec).amax() < 1e-9);
    }

    #[test]
    fn geodesic_matches_exp_map_at_lambda_zero() {
        let fam = bump_family();
        let x = H2::from_spatial(&[0.2, -0.1]).unwrap();
        let v = random_unit_tangent(&mut ChaCha8Rng::seed_from_u64(3), &x);
        let path = geodesic_lambda(&fam, &x, &v, 0.0, 10.0, 1e-3).unwrap();
        let (end, vel) = path.end();
        let exact = exp_map(&x, &v, 10.0).unwrap();
        let ev = geodesic_velocity(&x, &v, 10.0).unwrap();
        let scale = exact.coords()[0];
        assert!((end.coords() - exact.coords()).amax() < 1e-8 * scale, "{}", (end.coords() - exact.coords()).amax() / scale);
        assert!((vel - ev.vec).amax() < 1e-8 * scale);
    }

    #[test]
    fn geodesic_conserves_speed_and_respects_support() {
        let fam = bump_family();
        let x = H2::from_spatial(&[-0.5, 0.0]).unwrap();
        let v = TangentVec::new(x, Vector::<3>::new(0.0, 1.0, 0.5));
        let path = geodesic_lambda(&fam, &x, &v, 0.2, 20.0, 1e-3).unwrap();
        assert!(path.speed_drift < 1e-6, "{}", path.speed_drift);
        // far from the support the path is an exact hyperbolic geodesic
        let far = H2::from_spatial(&[-5.0, -5.0]).unwrap();
        let u = TangentVec::new(far, Vector::<3>::new(0.0, -1.0, 0.2)).unit().unwrap();
        let p = geodesic_lambda(&fam, &far, &u, 0.2, 5.0, 1e-3).unwrap();
        let exact = exp_map(&far, &u, 5.0).unwrap();
        assert!((p.end().0.coords() - exact.coords()).amax() < 1e-8 * exact.coords()[0]);
        assert!(geodesic_lambda(&fam, &x, &v, 0.2, 1.0, 2e-3).is_err());
    }

    #[test]
    fn family_symmetry() {
        let fam = bump_family();
        let neg = fam.negated();
        let x = H2::from_spatial(&[-0.5, 0.2]).unwrap();
        let v = TangentVec::new(x, Vector::<3>::new(0.0, 1.0, 0.3));
        let a = geodesic_lambda(&fam, &x, &v, 0.2, 6.0, 1e-3).unwrap();
        let b = geodesic_lambda(&neg, &x, &v, -0.2, 6.0, 1e-3).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((p.coords() - q.coords()).amax() < 1e-8);
        }
    }

    #[test]
    fn curvature_of_constant_exponent() {
        for c in [-0.5, 0.0, 0.7] {
            let base = Base::<3>::Conformal(Arc::new(Constant(c)));
            let k = curvature_along(&base, &H2::origin()).unwrap();
            assert!((k.get(0, 0) + (-2.0 * c).exp()).abs() < 1e-15);
        }
        let k = curvature_along(&Base::<4>::Hyperbolic, &H3::origin()).unwrap();
        assert_eq!(k.dim(), 2);
        assert_eq!(k.get(0, 0), -1.0);
        assert_eq!(k.get(0, 1), k.get(1, 0));
    }

    #[test]
    fn gaussian_curvature_by_finite_differences() {
        // K = −Δ_g ln √(metric) in isothermal half-plane coordinates with metric e^{2f}/y².
        let psi = RadialBump::new(H2::from_spatial(&[0.1, 0.2]).unwrap(), 1.5, 0.4);
        let conf = |z: nalgebra::Complex<f64>| -> f64 {
            let p = crate::quotient::from_half_plane(z).unwrap();
            psi.value(&p).unwrap() - z.im.ln()
        };
        for &(a, b) in &[(0.1, 1.1), (-0.3, 0.8), (0.25, 1.4)] {
            let z = nalgebra::Complex::new(a, b);
            let h = 1e-4;
            let lap = (conf(z + h) + conf(z - h) + conf(z + nalgebra::Complex::new(0.0, h))
                + conf(z - nalgebra::Complex::new(0.0, h))
                - 4.0 * conf(z))
                / (h * h);
            let k_fd = -(-2.0 * conf(z)).exp() * lap;
            let p = crate::quotient::from_half_plane(z).unwrap();
            let k = gaussian_curvature(&psi.jet(&p).unwrap());
            assert!((k - k_fd).abs() < 1e-5, "{k} {k_fd}");
            let k2 = max_sectional_curvature(&psi.jet(&p).unwrap());
            assert!((k - k2).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_max_scan() {
        let fam = bump_family();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<H2> = (0..400).map(|_| random_point(&mut rng, 3.0)).collect();
        let lm = lambda_max(&fam, &pts).unwrap();
        assert!(lm > 0.0 && lm.is_finite());
        for p in &pts {
            assert!(max_sectional_curvature(&fam.exponent(lm, p).unwrap()) < 0.0);
        }
    }
}
