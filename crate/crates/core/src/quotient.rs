//! A closed genus-2 surface as the quotient of H² by the regular-octagon Fuchsian group.
//!
//! Group elements are stored as SL(2,R) matrices acting on the upper half-plane and converted
//! to SO⁺(2,1) for the hyperboloid. The identification sends `z = x + iy` to the hyperboloid
//! point `((|z|²+1)/2y, (|z|²−1)/2y, x/y)`, so `i` is the origin.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Complex, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::{Jet, RadialBump, ScalarField};
use crate::hypgeom::{distance, ModelPoint, H2};
use crate::minkowski::{dot, lorentz_inverse, Lorentz, Vector};
use crate::{Error, Result};

pub const WORD_LENGTH_CAP: usize = 20;
/// Fixed seed of the Monte Carlo domain average used by [`normalize_mean_zero`].
pub const NORMALIZATION_SEED: u64 = 0x006f_6374_6167_6f6e;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoebiusIsometry {
    matrix: Matrix2<f64>,
}

impl MoebiusIsometry {
    pub fn new(matrix: Matrix2<f64>) -> Result<Self> {
        let det = matrix.determinant();
        if (det - 1.0).abs() > 1e-10 {
            return Err(Error::Contract(format!("Möbius matrix has determinant {det}")));
        }
        Ok(Self { matrix })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix2::identity(),
        }
    }

    /// Rotation about `i` by `angle` in the hyperboloid's spatial plane.
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = (-0.5 * angle).sin_cos();
        Self {
            matrix: Matrix2::new(c, s, -s, c),
        }
    }

    /// Translation by `length` along the geodesic through `i` in the first spatial direction.
    pub fn translation(length: f64) -> Self {
        Self {
            matrix: Matrix2::new((0.5 * length).exp(), 0.0, 0.0, (-0.5 * length).exp()),
        }
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.matrix
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix * other.matrix,
        }
    }

    pub fn inverse(&self) -> Self {
        let m = self.matrix;
        Self {
            matrix: Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]),
        }
    }

    pub fn apply(&self, z: Complex<f64>) -> Complex<f64> {
        let m = self.matrix;
        (z * m[(0, 0)] + m[(0, 1)]) / (z * m[(1, 0)] + m[(1, 1)])
    }

    /// Distance to ±identity in the max norm (the projective identity test).
    pub fn distance_to_identity(&self) -> f64 {
        let i = Matrix2::identity();
        (self.matrix - i).amax().min((self.matrix + i).amax())
    }

    /// The SO⁺(2,1) matrix of the same isometry, via `X ↦ A X Aᵀ` on symmetric matrices.
    pub fn to_lorentz(&self) -> Lorentz<3> {
        let a = self.matrix;
        let basis = [
            Matrix2::new(1.0, 0.0, 0.0, 1.0),
            Matrix2::new(1.0, 0.0, 0.0, -1.0),
            Matrix2::new(0.0, 1.0, 1.0, 0.0),
        ];
        let mut l = Lorentz::<3>::zeros();
        for (j, b) in basis.iter().enumerate() {
            let s = a * b * a.transpose();
            l[(0, j)] = 0.5 * (s[(0, 0)] + s[(1, 1)]);
            l[(1, j)] = 0.5 * (s[(0, 0)] - s[(1, 1)]);
            l[(2, j)] = 0.5 * (s[(0, 1)] + s[(1, 0)]);
        }
        l
    }
}

pub fn to_half_plane(x: &H2) -> Complex<f64> {
    let c = x.coords();
    let y = 1.0 / (c[0] - c[1]);
    Complex::new(c[2] * y, y)
}

pub fn from_half_plane(z: Complex<f64>) -> Result<H2> {
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("{z} is not in the upper half-plane")));
    }
    let n = z.norm_sqr();
    let y = z.im;
    Ok(ModelPoint::project(Vector::<3>::new(
        (n + 1.0) / (2.0 * y),
        (n - 1.0) / (2.0 * y),
        z.re / y,
    )))
}

/// Which side pairing pattern to use on the regular octagon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Sides 0↔2, 1↔3, 4↔6, 5↔7: surface relation `[a₁,b₁][a₂,b₂] = 1`.
    #[default]
    Commutator,
}

/// The regular-octagon genus-2 group with Dirichlet domain centered at the origin.
#[derive(Clone, Debug)]
pub struct FuchsianGroup {
    /// `side_maps[k]` carries the domain to its neighbour across side `k`.
    side_maps: Vec<MoebiusIsometry>,
    lorentz: Vec<Lorentz<3>>,
    lorentz_inv: Vec<Lorentz<3>>,
    /// `side_maps[k] · origin`
    neighbours: Vec<Vector<3>>,
    pub base_point: H2,
    pub word_length_cap: usize,
    inverse_index: Vec<usize>,
}

impl FuchsianGroup {
    pub fn regular_octagon() -> Self {
        let d = inradius();
        let theta = |k: usize| k as f64 * PI / 4.0;
        let pair = |i: usize, j: usize| {
            MoebiusIsometry::rotation(theta(i))
                .compose(&MoebiusIsometry::translation(2.0 * d))
                .compose(&MoebiusIsometry::rotation(PI - theta(j)))
        };
        let partner = [2usize, 3, 0, 1, 6, 7, 4, 5];
        let side_maps: Vec<MoebiusIsometry> = (0..8).map(|k| pair(k, partner[k])).collect();
        let lorentz: Vec<Lorentz<3>> = side_maps.iter().map(|g| g.to_lorentz()).collect();
        let lorentz_inv = lorentz.iter().map(lorentz_inverse).collect();
        let o = crate::minkowski::e0::<3>();
        let neighbours = lorentz.iter().map(|g| g * o).collect();
        Self {
            side_maps,
            lorentz,
            lorentz_inv,
            neighbours,
            base_point: H2::origin(),
            word_length_cap: WORD_LENGTH_CAP,
            inverse_index: partner.to_vec(),
        }
    }

    pub fn side_maps(&self) -> &[MoebiusIsometry] {
        &self.side_maps
    }

    pub fn lorentz(&self, k: usize) -> &Lorentz<3> {
        &self.lorentz[k]
    }

    pub fn lorentz_inv(&self, k: usize) -> &Lorentz<3> {
        &self.lorentz_inv[k]
    }

    /// Index of the side map inverse to side map `k`.
    pub fn inverse_of(&self, k: usize) -> usize {
        self.inverse_index[k]
    }

    /// The four generators `(a₁, b₁, a₂, b₂)` in the order of the surface relation.
    pub fn surface_generators(&self) -> [MoebiusIsometry; 4] {
        [
            self.side_maps[0],
            self.side_maps[3],
            self.side_maps[4],
            self.side_maps[7],
        ]
    }

    /// `[a₁,b₁][a₂,b₂]` with `[a,b] = a b a⁻¹ b⁻¹`.
    pub fn relator(&self) -> MoebiusIsometry {
        let [a1, b1, a2, b2] = self.surface_generators();
        let comm = |a: &MoebiusIsometry, b: &MoebiusIsometry| {
            a.compose(b).compose(&a.inverse()).compose(&b.inverse())
        };
        comm(&a1, &b1).compose(&comm(&a2, &b2))
    }

    /// Side map index that most decreases the distance to the base point, if any.
    #[inline]
    fn best_descent(&self, x: &Vector<3>) -> Option<usize> {
        // d(x, g·o) < d(x, o)  ⟺  −⟨x, g·o⟩ < x₀
        let mut best = None;
        let mut best_val = x[0] * (1.0 - 1e-13);
        for (k, n) in self.neighbours.iter().enumerate() {
            let v = -dot(x, n);
            if v < best_val {
                best_val = v;
                best = Some(k);
            }
        }
        best
    }

    /// Whether `x` lies in the Dirichlet domain of the base point.
    pub fn in_domain(&self, x: &H2) -> bool {
        x.coords()[0] <= inradius_cosh() || self.best_descent(x.coords()).is_none()
    }

    /// Greedy reduction of a Lorentz frame: returns the side-map indices `[k₁, …, kₙ]` with
    /// `f_in = g_{k₁} ⋯ g_{kₙ} · f_out`, replacing `f` by `f_out`.
    pub fn reduce_frame(&self, f: &mut Lorentz<3>) -> Result<Vec<usize>> {
        let mut word = Vec::new();
        if f[(0, 0)] <= inradius_cosh() {
            return Ok(word);
        }
        loop {
            let x: Vector<3> = f.column(0).into_owned();
            match self.best_descent(&x) {
                None => return Ok(word),
                Some(k) => {
                    if word.len() >= self.word_length_cap {
                        return Err(Error::ReductionOverflow {
                            cap: self.word_length_cap,
                        });
                    }
                    *f = self.lorentz_inv[k] * *f;
                    word.push(k);
                }
            }
        }
    }

    /// Product of side maps for a word, as a Lorentz matrix.
    pub fn word_lorentz(&self, word: &[usize]) -> Lorentz<3> {
        let mut g = Lorentz::<3>::identity();
        for &k in word {
            g *= self.lorentz[k];
        }
        g
    }

    pub fn word_moebius(&self, word: &[usize]) -> MoebiusIsometry {
        word.iter()
            .fold(MoebiusIsometry::identity(), |g, &k| g.compose(&self.side_maps[k]))
    }

    /// Random point of the Dirichlet domain, uniform for the hyperbolic area.
    pub fn sample_domain<R: Rng + ?Sized>(&self, rng: &mut R) -> H2 {
        let k = circumradius().cosh() - 1.0;
        loop {
            let r = (1.0 + rng.random::<f64>() * k).acosh();
            let a = rng.random::<f64>() * 2.0 * PI;
            let x = H2::polar(r, &Vector::<3>::new(0.0, a.cos(), a.sin()));
            if self.in_domain(&x) {
                return x;
            }
        }
    }
}

impl Default for FuchsianGroup {
    fn default() -> Self {
        Self::regular_octagon()
    }
}

/// Distance from the center to the side midpoints: `cosh d = cot(π/8)`.
pub fn inradius() -> f64 {
    inradius_cosh().acosh()
}

pub fn inradius_cosh() -> f64 {
    1.0 + std::f64::consts::SQRT_2
}

/// Distance from the center to the vertices: `cosh r = cot²(π/8)`.
pub fn circumradius() -> f64 {
    (3.0 + 2.0 * std::f64::consts::SQRT_2).acosh()
}

/// Reduces `x` into the Dirichlet domain; `x = word · point`.
pub fn reduce(group: &FuchsianGroup, x: &H2) -> Result<(H2, Vec<usize>)> {
    let mut f = crate::hypgeom::frame_at(x);
    let word = group.reduce_frame(&mut f)?;
    Ok((ModelPoint::project(f.column(0).into_owned()), word))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantFieldParams {
    /// Distance of the bump center from the domain center, towards the midpoint of side 0.
    pub center_offset: f64,
    pub bump_radius: f64,
    pub amplitude: f64,
    pub truncation_word_length: usize,
}

impl Default for InvariantFieldParams {
    fn default() -> Self {
        Self {
            center_offset: 1.0,
            bump_radius: 0.9,
            amplitude: 1.0,
            truncation_word_length: 3,
        }
    }
}

/// G-invariant scalar field `c + Σ_{g ∈ G} bump(g⁻¹·x)` on H².
///
/// The series is evaluated after reduction to the Dirichlet domain, over the translates of the
/// bump (words up to `truncation_word_length`) whose support meets the domain.
#[derive(Clone, Debug)]
pub struct InvariantField {
    pub bump: RadialBump<3>,
    pub truncation_word_length: usize,
    pub constant: f64,
    group: Arc<FuchsianGroup>,
    translates: Vec<RadialBump<3>>,
}

impl InvariantField {
    pub fn new(group: Arc<FuchsianGroup>, bump: RadialBump<3>, truncation_word_length: usize) -> Self {
        let reach = circumradius() + bump.radius + 1e-9;
        let mut centers: Vec<Vector<3>> = Vec::new();
        let mut frontier = vec![Lorentz::<3>::identity()];
        let mut all = vec![Lorentz::<3>::identity()];
        for _ in 0..truncation_word_length {
            let mut next = Vec::new();
            for g in &frontier {
                for k in 0..8 {
                    next.push(g * group.lorentz(k));
                }
            }
            all.extend(next.iter().copied());
            frontier = next;
        }
        let mut translates = Vec::new();
        for g in all {
            let c = ModelPoint::project(g * bump.center.coords());
            if c.coords()[0] > reach.cosh() {
                continue;
            }
            if centers.iter().any(|e| (e - c.coords()).amax() < 1e-8) {
                continue;
            }
            centers.push(*c.coords());
            translates.push(RadialBump::new(c, bump.radius, bump.amplitude));
        }
        Self {
            bump,
            truncation_word_length,
            constant: 0.0,
            group,
            translates,
        }
    }

    pub fn from_params(group: Arc<FuchsianGroup>, p: &InvariantFieldParams) -> Self {
        let center = H2::polar(p.center_offset, &Vector::<3>::new(0.0, 1.0, 0.0));
        Self::new(group, RadialBump::new(center, p.bump_radius, p.amplitude), p.truncation_word_length)
    }

    /// The constant field `c`.
    pub fn constant(group: Arc<FuchsianGroup>, c: f64) -> Self {
        let mut f = Self::new(group, RadialBump::new(H2::origin(), 0.5, 0.0), 0);
        f.constant = c;
        f
    }

    pub fn group(&self) -> &Arc<FuchsianGroup> {
        &self.group
    }

    pub fn translate_count(&self) -> usize {
        self.translates.len()
    }

    /// Exact mean over the surface (area 4π) of the bump part plus the constant.
    pub fn exact_mean(&self) -> f64 {
        self.constant + self.bump.integral_h2() / (4.0 * PI)
    }

    fn jet_in_domain(&self, y: &H2) -> Jet<3> {
        let mut j = Jet::zero(y);
        for b in &self.translates {
            j.add(&b.jet_unchecked(y));
        }
        j.value += self.constant;
        j
    }
}

impl ScalarField<3> for InvariantField {
    fn jet(&self, x: &H2) -> Result<Jet<3>> {
        let mut f = crate::hypgeom::frame_at(x);
        let word = self.group.reduce_frame(&mut f)?;
        let y = ModelPoint::project(f.column(0).into_owned());
        let j = self.jet_in_domain(&y);
        if word.is_empty() {
            return Ok(j);
        }
        let g = self.group.word_lorentz(&word);
        let mut out = j.push_forward(&g, &lorentz_inverse(&g));
        out.gradient = crate::hypgeom::TangentVec::new(*x, out.gradient.vec);
        Ok(out)
    }
}

/// Value, gradient and Hessian of an invariant field.
pub fn eval_invariant(field: &InvariantField, x: &H2) -> Result<Jet<3>> {
    field.jet(x)
}

/// Monte Carlo mean of the field over the fundamental domain: `(mean, stderr)`.
pub fn domain_mean(field: &InvariantField, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group = field.group.clone();
    let mut acc = crate::stats::Welford::default();
    for _ in 0..samples {
        let y = group.sample_domain(&mut rng);
        acc.push(field.jet_in_domain(&y).value);
    }
    Ok((acc.mean(), acc.stderr()))
}

/// Subtracts the Monte Carlo domain mean so the field integrates to zero over the surface.
pub fn normalize_mean_zero(field: &InvariantField, samples: usize) -> Result<InvariantField> {
    normalize_mean_zero_seeded(field, samples, NORMALIZATION_SEED)
}

pub fn normalize_mean_zero_seeded(field: &InvariantField, samples: usize, seed: u64) -> Result<InvariantField> {
    if samples < 10_000 {
        return Err(Error::Contract(format!("normalization needs at least 10⁴ samples, got {samples}")));
    }
    let (mean, _) = domain_mean(field, samples, seed)?;
    let mut out = field.clone();
    out.constant -= mean;
    Ok(out)
}

/// Distance from `x` to the nearest translate of the base point under the side maps.
pub fn nearest_neighbour_distance(group: &FuchsianGroup, x: &H2) -> f64 {
    (0..8)
        .map(|k| distance(x, &group.base_point.transform(group.lorentz(k))))
        .fold(f64::INFINITY, f64::min)
}
