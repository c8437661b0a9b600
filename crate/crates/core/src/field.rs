//! Scalar fields on H^m with their first and second covariant derivatives.

use std::sync::Arc;

use crate::hypgeom::{ModelPoint, TangentVec};
use crate::minkowski::{dot, Lorentz, Vector};
use crate::Result;

/// Value, gradient, Hessian and Laplacian of a scalar field at a point.
///
/// `hessian` acts on ambient vectors; restricted to the tangent space at the point it is the
/// symmetric Hessian operator `v ↦ ∇_v ∇φ`.
#[derive(Clone, Copy, Debug)]
pub struct Jet<const N: usize> {
    pub value: f64,
    pub gradient: TangentVec<N>,
    pub hessian: Lorentz<N>,
    pub laplacian: f64,
}

impl<const N: usize> Jet<N> {
    pub fn zero(x: &ModelPoint<N>) -> Self {
        Self {
            value: 0.0,
            gradient: TangentVec::new(*x, Vector::zeros()),
            hessian: Lorentz::zeros(),
            laplacian: 0.0,
        }
    }

    pub fn hessian_apply(&self, v: &Vector<N>) -> Vector<N> {
        let h = self.hessian * v;
        let x = self.gradient.base.coords();
        h + dot(&h, x) * x
    }

    /// Jet of the field composed with the isometry `g⁻¹`, evaluated at `g·x`.
    pub fn push_forward(&self, g: &Lorentz<N>, g_inv: &Lorentz<N>) -> Self {
        Self {
            value: self.value,
            gradient: self.gradient.transform(g),
            hessian: g * self.hessian * g_inv,
            laplacian: self.laplacian,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            value: s * self.value,
            gradient: self.gradient.scale(s),
            hessian: self.hessian * s,
            laplacian: s * self.laplacian,
        }
    }

    pub fn add(&mut self, other: &Self) {
        self.value += other.value;
        self.gradient.vec += other.gradient.vec;
        self.hessian += other.hessian;
        self.laplacian += other.laplacian;
    }
}

pub trait ScalarField<const N: usize>: Send + Sync {
    fn jet(&self, x: &ModelPoint<N>) -> Result<Jet<N>>;

    fn value(&self, x: &ModelPoint<N>) -> Result<f64> {
        Ok(self.jet(x)?.value)
    }

    fn gradient(&self, x: &ModelPoint<N>) -> Result<TangentVec<N>> {
        Ok(self.jet(x)?.gradient)
    }

    /// Radius of a ball around the origin outside of which the field is constant, if any.
    fn support_radius(&self) -> Option<(ModelPoint<N>, f64)> {
        None
    }
}

impl<const N: usize, F: ScalarField<N> + ?Sized> ScalarField<N> for Arc<F> {
    fn jet(&self, x: &ModelPoint<N>) -> Result<Jet<N>> {
        (**self).jet(x)
    }
    fn support_radius(&self) -> Option<(ModelPoint<N>, f64)> {
        (**self).support_radius()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constant(pub f64);

impl<const N: usize> ScalarField<N> for Constant {
    fn jet(&self, x: &ModelPoint<N>) -> Result<Jet<N>> {
        let mut j = Jet::zero(x);
        j.value = self.0;
        Ok(j)
    }
}

/// Compactly supported radial bump `A (1 − w)⁴`, `w = (cosh d − 1)/(cosh R − 1)`, which is C³.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialBump<const N: usize> {
    pub center: ModelPoint<N>,
    pub radius: f64,
    pub amplitude: f64,
}

impl<const N: usize> RadialBump<N> {
    pub fn new(center: ModelPoint<N>, radius: f64, amplitude: f64) -> Self {
        Self {
            center,
            radius,
            amplitude,
        }
    }

    /// Profile `h(u)` in terms of `u = −⟨x, c⟩ = cosh d` and its first two derivatives.
    #[inline]
    pub fn profile(&self, u: f64) -> (f64, f64, f64) {
        let k = self.radius.cosh() - 1.0;
        let w = (u - 1.0) / k;
        if w >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let q = 1.0 - w;
        let a = self.amplitude;
        (a * q.powi(4), -4.0 * a / k * q.powi(3), 12.0 * a / (k * k) * q * q)
    }

    /// `∫_{H²} bump dVol` in closed form (m = 2 only): `2π A (cosh R − 1) / 5`.
    pub fn integral_h2(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.amplitude * (self.radius.cosh() - 1.0) / 5.0
    }

    /// `∫_{H^m} bump dVol` for `m = N − 1` by Simpson's rule in the radial variable.
    pub fn integral(&self) -> f64 {
        let m = N - 1;
        let sphere = if m == 2 { 2.0 * std::f64::consts::PI } else { 4.0 * std::f64::consts::PI };
        let n = 4000;
        let h = self.radius / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let r = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.profile(r.cosh()).0 * r.sinh().powi(m as i32 - 1);
        }
        sphere * acc * h / 3.0
    }

    pub(crate) fn jet_unchecked(&self, x: &ModelPoint<N>) -> Jet<N> {
        let xc = x.coords();
        let c = self.center.coords();
        let u = (-dot(xc, c)).max(1.0);
        let (h, h1, h2) = self.profile(u);
        if h == 0.0 && h1 == 0.0 {
            return Jet::zero(x);
        }
        let ct = c - u * xc;
        let mut jc = ct;
        jc[0] = -jc[0];
        let m = (N - 1) as f64;
        Jet {
            value: h,
            gradient: TangentVec::new(*x, -h1 * ct),
            hessian: h2 * ct * jc.transpose() + h1 * u * Lorentz::<N>::identity(),
            laplacian: h2 * (u * u - 1.0) + m * h1 * u,
        }
    }
}

impl<const N: usize> ScalarField<N> for RadialBump<N> {
    fn jet(&self, x: &ModelPoint<N>) -> Result<Jet<N>> {
        Ok(self.jet_unchecked(x))
    }
    fn support_radius(&self) -> Option<(ModelPoint<N>, f64)> {
        Some((self.center, self.radius))
    }
}

/// Sum of scalar fields.
pub struct SumField<const N: usize> {
    pub parts: Vec<Arc<dyn ScalarField<N>>>,
}

impl<const N: usize> ScalarField<N> for SumField<N> {
    fn jet(&self, x: &ModelPoint<N>) -> Result<Jet<N>> {
        let mut j = Jet::zero(x);
        for p in &self.parts {
            j.add(&p.jet(x)?);
        }
        Ok(j)
    }
}

impl<const N: usize> SumField<N> {
    /// `bump(c, r_inner, A) − k·bump(c, r_outer, A)` with `k` chosen so the total integral vanishes.
    pub fn zero_integral(center: ModelPoint<N>, r_inner: f64, r_outer: f64, amplitude: f64) -> Self {
        let inner = RadialBump::new(center, r_inner, amplitude);
        let outer = RadialBump::new(center, r_outer, amplitude);
        let k = inner.integral() / outer.integral();
        Self {
            parts: vec![Arc::new(inner), Arc::new(RadialBump::new(center, r_outer, -k * amplitude))],
        }
    }
}

/// Scalar multiple of a field.
pub struct Scaled<const N: usize> {
    pub factor: f64,
    pub inner: Arc<dyn ScalarField<N>>,
}

impl<const N: usize> ScalarField<N> for Scaled<N> {
    fn jet(&self, x: &ModelPoint<N>) -> Result<Jet<N>> {
        Ok(self.inner.jet(x)?.scaled(self.factor))
    }
    fn support_radius(&self) -> Option<(ModelPoint<N>, f64)> {
        self.inner.support_radius()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::hypgeom::{exp_map, random_point, random_unit_tangent, H2, H3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Checks gradient, Hessian and Laplacian of `f` against central differences along geodesics.
    pub(crate) fn check_jet<const N: usize>(f: &dyn ScalarField<N>, x: &ModelPoint<N>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = f.jet(x).unwrap();
        let h = 1e-4;
        let mut lap = 0.0;
        let frame = crate::hypgeom::frame_at(x);
        for i in 1..N {
            let e = TangentVec::new(*x, frame.column(i).into_owned());
            let fp = f.value(&exp_map(x, &e, h).unwrap()).unwrap();
            let fm = f.value(&exp_map(x, &e, -h).unwrap()).unwrap();
            lap += (fp - 2.0 * j.value + fm) / (h * h);
        }
        let scale = 1.0 + j.gradient.norm() + j.laplacian.abs();
        assert!((lap - j.laplacian).abs() < 1e-5 * scale, "laplacian {lap} {}", j.laplacian);
        for _ in 0..4 {
            let v = random_unit_tangent(&mut rng, x);
            let fp = f.value(&exp_map(x, &v, h).unwrap()).unwrap();
            let fm = f.value(&exp_map(x, &v, -h).unwrap()).unwrap();
            let d1 = (fp - fm) / (2.0 * h);
            let d2 = (fp - 2.0 * j.value + fm) / (h * h);
            let g = j.gradient.inner(&v);
            assert!((d1 - g).abs() < 1e-6 * scale, "gradient {d1} {g}");
            let hv = dot(&j.hessian_apply(&v.vec), &v.vec);
            assert!((d2 - hv).abs() < 1e-5 * scale, "hessian {d2} {hv}");
        }
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b2 = RadialBump::new(H2::from_spatial(&[0.3, -0.2]).unwrap(), 1.2, 0.7);
        let b3 = RadialBump::new(H3::from_spatial(&[0.1, 0.2, -0.4]).unwrap(), 1.5, -0.4);
        for k in 0..50 {
            let x: H2 = random_point(&mut rng, 1.5);
            check_jet(&b2, &x, k);
            let y: H3 = random_point(&mut rng, 1.8);
            check_jet(&b3, &y, k);
        }
    }

    #[test]
    fn bump_value_and_support() {
        let c = H2::from_spatial(&[0.3, 0.0]).unwrap();
        let b = RadialBump::new(c, 0.9, 2.0);
        assert_eq!(b.value(&c).unwrap(), 2.0);
        let far = H2::from_spatial(&[3.0, 0.0]).unwrap();
        assert_eq!(b.value(&far).unwrap(), 0.0);
    }

    #[test]
    fn bump_integral_matches_quadrature() {
        let b = RadialBump::new(H2::origin(), 1.1, 0.8);
        let n = 20000;
        let h = 1.1 / n as f64;
        let f = |r: f64| b.profile(r.cosh()).0 * 2.0 * std::f64::consts::PI * r.sinh();
        let mut s = f(0.0) + f(1.1);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert!((s * h / 3.0 - b.integral_h2()).abs() < 1e-10);
    }

    #[test]
    fn numerical_integral_and_zero_integral_pairs() {
        let b = RadialBump::new(H2::origin(), 1.1, 0.8);
        assert!((b.integral() - b.integral_h2()).abs() < 1e-10);
        // Monte Carlo over the volume-uniform ball: ∫ = vol(B_R)·E[φ]
        let c = H3::from_spatial(&[0.2, 0.0, -0.1]).unwrap();
        let bump = RadialBump::new(c, 1.0, 1.0);
        let pair = SumField::zero_integral(c, 1.0, 2.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rb: f64 = 2.5;
        let vol = std::f64::consts::PI * ((2.0 * rb).sinh() - 2.0 * rb);
        let (mut w1, mut w2) = (crate::stats::Welford::default(), crate::stats::Welford::default());
        for _ in 0..200_000 {
            let x: H3 = crate::hypgeom::random_point_in_ball(&mut rng, rb);
            w1.push(bump.value(&x).unwrap() * vol);
            w2.push(pair.value(&x).unwrap() * vol);
        }
        assert!((w1.mean() - bump.integral()).abs() < 3.0 * w1.stderr(), "{} vs {}", w1.mean(), bump.integral());
        assert!(w2.mean().abs() < 3.0 * w2.stderr());
    }
}
