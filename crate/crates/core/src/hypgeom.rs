//! Closed-form geometry of H² and H³ in the hyperboloid model.
//!
//! Points satisfy `⟨x, x⟩ = −1`, `x₀ > 0`. `N` is the ambient dimension `m + 1`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::minkowski::{self, dot, spatial_norm, Lorentz, Vector};
use crate::{Error, Result};

/// Tolerance for the sheet, null-cone and unit-norm invariants.
pub const INVARIANT_TOL: f64 = 1e-9;
/// Tolerance used when checking caller-supplied unit vectors.
pub const UNIT_TOL: f64 = 1e-8;
/// Constant in the Green metric `−ln(c₂ G)`.
pub const GREEN_METRIC_C2: f64 = 0.1;

pub type H2 = ModelPoint<3>;
pub type H3 = ModelPoint<4>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelPoint<const N: usize> {
    coords: Vector<N>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVec<const N: usize> {
    pub base: ModelPoint<N>,
    pub vec: Vector<N>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint<const N: usize> {
    ray: Vector<N>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeafState<const N: usize> {
    pub point: ModelPoint<N>,
    pub xi: BoundaryPoint<N>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ideal<const N: usize> {
    Interior(ModelPoint<N>),
    Boundary(BoundaryPoint<N>),
}

impl<const N: usize> ModelPoint<N> {
    pub fn origin() -> Self {
        Self {
            coords: minkowski::e0(),
        }
    }

    /// Projects arbitrary ambient coordinates onto the upper sheet by recomputing the time coordinate.
    pub fn project(v: Vector<N>) -> Self {
        let mut c = v;
        let s = spatial_norm(&c);
        c[0] = (1.0 + s * s).sqrt();
        Self { coords: c }
    }

    /// Point with the given spatial coordinates.
    pub fn from_spatial(spatial: &[f64]) -> Result<Self> {
        if spatial.len() != N - 1 {
            return Err(Error::Contract(format!(
                "expected {} spatial coordinates, got {}",
                N - 1,
                spatial.len()
            )));
        }
        let mut v = Vector::<N>::zeros();
        for (i, s) in spatial.iter().enumerate() {
            v[i + 1] = *s;
        }
        Ok(Self::project(v))
    }

    /// Validating constructor; the result is renormalized.
    pub fn new(coords: Vector<N>) -> Result<Self> {
        let q = dot(&coords, &coords);
        if coords[0] <= 0.0 || (q + 1.0).abs() > INVARIANT_TOL * coords[0] * coords[0] {
            return Err(Error::Contract(format!("not on the upper sheet: ⟨x,x⟩ = {q}")));
        }
        Ok(Self::project(coords))
    }

    #[inline]
    pub fn coords(&self) -> &Vector<N> {
        &self.coords
    }

    pub const fn dim() -> usize {
        N - 1
    }

    /// Point at distance `r` from the origin in the given spatial direction.
    pub fn polar(r: f64, direction: &Vector<N>) -> Self {
        let n = spatial_norm(direction);
        let (sh, ch) = minkowski::sinh_cosh(r);
        let mut c = Vector::<N>::zeros();
        c[0] = ch;
        for i in 1..N {
            c[i] = sh * direction[i] / n;
        }
        Self { coords: c }
    }

    pub fn transform(&self, g: &Lorentz<N>) -> Self {
        Self::project(g * self.coords)
    }
}

impl<const N: usize> TangentVec<N> {
    /// Tangent vector at `base`, projecting away any normal component.
    pub fn new(base: ModelPoint<N>, vec: Vector<N>) -> Self {
        let x = base.coords;
        let c = dot(&vec, &x);
        Self { base, vec: vec + c * x }
    }

    pub fn norm(&self) -> f64 {
        dot(&self.vec, &self.vec).max(0.0).sqrt()
    }

    pub fn unit(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Degenerate("zero tangent vector".into()));
        }
        Ok(Self {
            base: self.base,
            vec: self.vec / n,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            base: self.base,
            vec: self.vec * s,
        }
    }

    pub fn inner(&self, other: &Self) -> f64 {
        dot(&self.vec, &other.vec)
    }

    pub fn transform(&self, g: &Lorentz<N>) -> Self {
        Self::new(self.base.transform(g), g * self.vec)
    }
}

impl<const N: usize> BoundaryPoint<N> {
    /// Normalizes a future-pointing null direction so that `ray₀ = 1`.
    pub fn from_ray(ray: Vector<N>) -> Result<Self> {
        let s = spatial_norm(&ray);
        if s == 0.0 || !s.is_finite() || ray[0] <= 0.0 {
            return Err(Error::Contract("boundary ray must be future-pointing and non-zero".into()));
        }
        if (ray[0] - s).abs() > 1e-6 * ray[0] {
            return Err(Error::Contract(format!("ray is not null: ⟨p,p⟩ = {}", dot(&ray, &ray))));
        }
        Ok(Self::from_direction(&ray))
    }

    /// Boundary point in the spatial direction of `d` (time component ignored).
    pub fn from_direction(d: &Vector<N>) -> Self {
        let s = spatial_norm(d);
        let mut r = Vector::<N>::zeros();
        r[0] = 1.0;
        for i in 1..N {
            r[i] = d[i] / s;
        }
        Self { ray: r }
    }

    #[inline]
    pub fn ray(&self) -> &Vector<N> {
        &self.ray
    }

    pub fn transform(&self, g: &Lorentz<N>) -> Self {
        Self::from_direction(&(g * self.ray))
    }
}

impl<const N: usize> LeafState<N> {
    pub fn new(point: ModelPoint<N>, xi: BoundaryPoint<N>) -> Self {
        Self { point, xi }
    }

    /// Unit tangent of the geodesic from the footpoint towards `xi` (the spray direction).
    pub fn spray(&self) -> TangentVec<N> {
        direction_to(&self.point, &self.xi)
    }

    pub fn from_tangent(v: &TangentVec<N>) -> Self {
        Self {
            point: v.base,
            xi: boundary_of(&v.base, v),
        }
    }
}

fn check_unit_at<const N: usize>(x: &ModelPoint<N>, v: &TangentVec<N>) -> Result<()> {
    let scale = 1.0 + x.coords[0];
    if (v.base.coords - x.coords).amax() > INVARIANT_TOL * scale {
        return Err(Error::Contract("tangent vector based at a different point".into()));
    }
    let q = dot(&v.vec, &v.vec);
    if (q - 1.0).abs() > UNIT_TOL * scale * scale {
        return Err(Error::Contract(format!("tangent vector is not unit: ⟨v,v⟩ = {q}")));
    }
    if dot(&v.vec, &x.coords).abs() > UNIT_TOL * scale * scale {
        return Err(Error::Contract("vector is not tangent at its base".into()));
    }
    Ok(())
}

/// `cosh t · x + sinh t · v` for a unit tangent `v` at `x`.
pub fn exp_map<const N: usize>(x: &ModelPoint<N>, v: &TangentVec<N>, t: f64) -> Result<ModelPoint<N>> {
    check_unit_at(x, v)?;
    let (sh, ch) = minkowski::sinh_cosh(t.abs());
    let sh = sh.copysign(t);
    Ok(ModelPoint::project(ch * x.coords + sh * v.vec))
}

/// Velocity at time `t` of the unit-speed geodesic `exp_map(x, v, ·)`.
pub fn geodesic_velocity<const N: usize>(x: &ModelPoint<N>, v: &TangentVec<N>, t: f64) -> Result<TangentVec<N>> {
    let y = exp_map(x, v, t)?;
    let (sh, ch) = minkowski::sinh_cosh(t.abs());
    let sh = sh.copysign(t);
    TangentVec::new(y, sh * x.coords + ch * v.vec).unit()
}

pub fn distance<const N: usize>(x: &ModelPoint<N>, y: &ModelPoint<N>) -> f64 {
    let c = -dot(&x.coords, &y.coords);
    if c < 1.5 {
        // arccosh loses precision near 1: use the chordal form 2·asinh(‖x−y‖/2).
        let d = x.coords - y.coords;
        let chord = dot(&d, &d).max(0.0).sqrt();
        return 2.0 * (0.5 * chord).asinh();
    }
    c.acosh()
}

pub fn log_map<const N: usize>(x: &ModelPoint<N>, y: &ModelPoint<N>) -> Result<TangentVec<N>> {
    let d = distance(x, y);
    if d < 1e-14 {
        return Err(Error::Degenerate("log_map of coincident points".into()));
    }
    let c = dot(&x.coords, &y.coords);
    TangentVec::new(*x, y.coords + c * x.coords).unit()
}

/// Levi-Civita transport along the geodesic from `v.base` to `y`.
pub fn parallel_transport<const N: usize>(v: &TangentVec<N>, y: &ModelPoint<N>) -> TangentVec<N> {
    let x = v.base.coords;
    let yc = y.coords;
    if (x - yc).amax() == 0.0 {
        return *v;
    }
    let c = dot(&yc, &v.vec) / (1.0 - dot(&x, &yc));
    TangentVec::new(*y, v.vec + c * (x + yc))
}

pub fn direction_to<const N: usize>(x: &ModelPoint<N>, xi: &BoundaryPoint<N>) -> TangentVec<N> {
    let p = xi.ray;
    let c = -dot(&x.coords, &p);
    let t = TangentVec::new(*x, p / c - x.coords);
    t.unit().unwrap_or(t)
}

pub fn boundary_of<const N: usize>(x: &ModelPoint<N>, v: &TangentVec<N>) -> BoundaryPoint<N> {
    BoundaryPoint::from_direction(&(x.coords + v.vec))
}

/// Busemann function `b_v(z) = ln(−⟨z, p⟩)` with `p` normalized by `⟨v.point, p⟩ = −1`.
pub fn busemann<const N: usize>(v: &LeafState<N>, z: &ModelPoint<N>) -> f64 {
    let p = v.xi.ray;
    let c = -dot(&v.point.coords, &p);
    (-dot(&z.coords, &p) / c).ln()
}

/// Gromov product `(a|b)_x`, with the closed-form limits at boundary points.
pub fn gromov_product<const N: usize>(x: &ModelPoint<N>, a: &Ideal<N>, b: &Ideal<N>) -> f64 {
    match (a, b) {
        (Ideal::Interior(y), Ideal::Interior(z)) => {
            0.5 * (distance(x, y) + distance(x, z) - distance(y, z))
        }
        (Ideal::Interior(y), Ideal::Boundary(xi)) | (Ideal::Boundary(xi), Ideal::Interior(y)) => {
            let leaf = LeafState::new(*x, *xi);
            0.5 * (distance(x, y) - busemann(&leaf, y))
        }
        (Ideal::Boundary(p), Ideal::Boundary(q)) => {
            let pq = -dot(&p.ray, &q.ray);
            if pq <= 1e-300 {
                return f64::INFINITY;
            }
            let xp = -dot(&x.coords, &p.ray);
            let xq = -dot(&x.coords, &q.ray);
            -0.5 * (pq / (2.0 * xp * xq)).ln()
        }
    }
}

fn check_dim(m: usize) -> Result<()> {
    if m == 2 || m == 3 {
        Ok(())
    } else {
        Err(Error::Domain(format!("dimension must be 2 or 3, got {m}")))
    }
}

/// Radial Green function of the Laplacian on H^m, normalized by `−ΔG = δ`.
pub fn green_function(m: usize, r: f64) -> Result<f64> {
    Ok(ln_green_function(m, r)?.exp())
}

/// `ln G(m, r)`, accurate for large `r`.
pub fn ln_green_function(m: usize, r: f64) -> Result<f64> {
    check_dim(m)?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("green function needs r > 0, got {r}")));
    }
    Ok(match m {
        // (1/2π) ln coth(r/2) = atanh(e^{−r}) / π
        2 => {
            let q = (-r).exp();
            let ratio = if q < 1e-8 { 1.0 + q * q / 3.0 } else { q.atanh() / q };
            -r + ratio.ln() - PI.ln()
        }
        // (coth r − 1) / 4π = 1 / (2π (e^{2r} − 1))
        _ => {
            let ln_expm1 = if r > 1.0 {
                2.0 * r + (-(-2.0 * r).exp()).ln_1p()
            } else {
                (2.0 * r).exp_m1().ln()
            };
            -(2.0 * PI).ln() - ln_expm1
        }
    })
}

/// Heat kernel of `∂_t u = Δu` on H³.
pub fn heat_kernel_h3(t: f64, r: f64) -> Result<f64> {
    Ok(ln_heat_kernel_h3(t, r)?.exp())
}

pub fn ln_heat_kernel_h3(t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    let r = r.abs();
    // ln(r / sinh r)
    let ratio = if r < 1e-4 {
        -r * r / 6.0
    } else if r < 20.0 {
        (r / r.sinh()).ln()
    } else {
        r.ln() - r + std::f64::consts::LN_2 - (-(-2.0 * r).exp()).ln_1p()
    };
    Ok(-1.5 * (4.0 * PI * t).ln() + ratio - t - r * r / (4.0 * t))
}

/// Green metric `−ln(c₂ G)` for separated points, `−ln c₂` otherwise.
pub fn green_metric<const N: usize>(x: &ModelPoint<N>, z: &ModelPoint<N>) -> f64 {
    green_metric_radial(N - 1, distance(x, z)).expect("ambient dimension is 3 or 4")
}

pub fn green_metric_radial(m: usize, d: f64) -> Result<f64> {
    check_dim(m)?;
    if d > 1.0 {
        Ok(-GREEN_METRIC_C2.ln() - ln_green_function(m, d)?)
    } else {
        Ok(-GREEN_METRIC_C2.ln())
    }
}

/// Lorentz matrix whose first column is `x` and whose remaining columns are the
/// transport of the standard frame at the origin along the geodesic to `x`.
pub fn frame_at<const N: usize>(x: &ModelPoint<N>) -> Lorentz<N> {
    let d = distance(&ModelPoint::origin(), x);
    let mut w = Vector::<N>::zeros();
    let s = spatial_norm(&x.coords);
    if s > 0.0 {
        for i in 1..N {
            w[i] = d * x.coords[i] / s;
        }
    }
    minkowski::boost(&w)
}

/// Random point at distance `r` uniform in `[0, r_max]` from the origin in a uniform direction.
pub fn random_point<const N: usize, R: Rng + ?Sized>(rng: &mut R, r_max: f64) -> ModelPoint<N> {
    let r = rng.random::<f64>() * r_max;
    ModelPoint::polar(r, &random_direction::<N, R>(rng))
}

/// Point uniformly distributed for the hyperbolic volume in the ball of radius `r_max` about the
/// origin.
pub fn random_point_in_ball<const N: usize, R: Rng + ?Sized>(rng: &mut R, r_max: f64) -> ModelPoint<N> {
    let top = r_max.sinh().powi(N as i32 - 2);
    loop {
        let r = rng.random::<f64>() * r_max;
        if rng.random::<f64>() * top <= r.sinh().powi(N as i32 - 2) {
            return ModelPoint::polar(r, &random_direction::<N, R>(rng));
        }
    }
}

/// Uniformly distributed spatial unit direction (time component zero).
pub fn random_direction<const N: usize, R: Rng + ?Sized>(rng: &mut R) -> Vector<N> {
    loop {
        let mut v = Vector::<N>::zeros();
        for i in 1..N {
            v[i] = StandardNormal.sample(rng);
        }
        let n = spatial_norm(&v);
        if n > 1e-12 {
            return v / n;
        }
    }
}

pub fn random_unit_tangent<const N: usize, R: Rng + ?Sized>(rng: &mut R, x: &ModelPoint<N>) -> TangentVec<N> {
    let f = frame_at(x);
    TangentVec::new(*x, f * random_direction::<N, R>(rng))
}

pub fn random_boundary<const N: usize, R: Rng + ?Sized>(rng: &mut R) -> BoundaryPoint<N> {
    BoundaryPoint::from_direction(&random_direction::<N, R>(rng))
}
