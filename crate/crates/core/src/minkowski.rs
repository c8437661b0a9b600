//! Linear algebra in Minkowski space R^{1,m}, signature (−,+,…,+).
//!
//! Ambient vectors have `N = m + 1` components with the time coordinate first.
//! Lorentz matrices are stored column-major as frames: column 0 is a point of the
//! hyperboloid and columns 1..N are an orthonormal frame of its tangent space.

use nalgebra::{SMatrix, SVector};

pub type Vector<const N: usize> = SVector<f64, N>;
pub type Lorentz<const N: usize> = SMatrix<f64, N, N>;

#[inline]
pub fn dot<const N: usize>(a: &Vector<N>, b: &Vector<N>) -> f64 {
    let mut s = -a[0] * b[0];
    for i in 1..N {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn spatial_norm<const N: usize>(a: &Vector<N>) -> f64 {
    let mut s = 0.0;
    for i in 1..N {
        s += a[i] * a[i];
    }
    s.sqrt()
}

#[inline]
pub fn spatial_dot<const N: usize>(a: &Vector<N>, b: &Vector<N>) -> f64 {
    let mut s = 0.0;
    for i in 1..N {
        s += a[i] * b[i];
    }
    s
}

pub fn e0<const N: usize>() -> Vector<N> {
    let mut v = Vector::<N>::zeros();
    v[0] = 1.0;
    v
}

/// Lorentz boost carrying the origin to `exp_o(w)` and the frame at the origin to its
/// parallel transport. Only the spatial part of `w` is read.
pub fn boost<const N: usize>(w: &Vector<N>) -> Lorentz<N> {
    let s = spatial_norm(w);
    let mut b = Lorentz::<N>::identity();
    if s == 0.0 {
        return b;
    }
    let (sh, ch) = sinh_cosh(s);
    for i in 1..N {
        let ni = w[i] / s;
        b[(0, i)] = sh * ni;
        b[(i, 0)] = sh * ni;
        for j in 1..N {
            b[(i, j)] += (ch - 1.0) * ni * w[j] / s;
        }
    }
    b[(0, 0)] = ch;
    b
}

/// Applies `boost(w)^{-1}` to `y` without forming the matrix.
#[inline]
pub fn unboost_apply<const N: usize>(w: &Vector<N>, s: f64, sh: f64, ch: f64, y: &mut Vector<N>) {
    if s == 0.0 {
        return;
    }
    let a = spatial_dot(w, y) / s;
    let y0 = y[0];
    y[0] = ch * y0 - sh * a;
    let c = ((ch - 1.0) * a - sh * y0) / s;
    for i in 1..N {
        y[i] += c * w[i];
    }
}

/// Replaces `f` by `f · boost(w)` as a rank-two update.
#[inline]
pub fn right_boost<const N: usize>(f: &mut Lorentz<N>, w: &Vector<N>, s: f64, sh: f64, ch: f64) {
    if s == 0.0 {
        return;
    }
    let f0: Vector<N> = f.column(0).into_owned();
    let mut fnv = Vector::<N>::zeros();
    for j in 1..N {
        let nj = w[j] / s;
        for i in 0..N {
            fnv[i] += f[(i, j)] * nj;
        }
    }
    for i in 0..N {
        f[(i, 0)] = ch * f0[i] + sh * fnv[i];
    }
    for j in 1..N {
        let nj = w[j] / s;
        for i in 0..N {
            f[(i, j)] += sh * f0[i] * nj + (ch - 1.0) * fnv[i] * nj;
        }
    }
}

#[inline]
pub fn sinh_cosh(s: f64) -> (f64, f64) {
    if s < 1e-3 {
        let s2 = s * s;
        (
            s * (1.0 + s2 / 6.0 * (1.0 + s2 / 20.0)),
            1.0 + s2 / 2.0 * (1.0 + s2 / 12.0 * (1.0 + s2 / 30.0)),
        )
    } else {
        let e = s.exp();
        let ie = 1.0 / e;
        (0.5 * (e - ie), 0.5 * (e + ie))
    }
}

/// Inverse of a Lorentz matrix: `J Fᵀ J` with `J = diag(−1, 1, …, 1)`.
pub fn lorentz_inverse<const N: usize>(f: &Lorentz<N>) -> Lorentz<N> {
    let mut g = f.transpose();
    for i in 0..N {
        for j in 0..N {
            if (i == 0) != (j == 0) {
                g[(i, j)] = -g[(i, j)];
            }
        }
    }
    g
}

/// Lorentz Gram–Schmidt on the columns of `f`, time column first.
pub fn reorthonormalize<const N: usize>(f: &mut Lorentz<N>) {
    let mut x: Vector<N> = f.column(0).into_owned();
    let n = (-dot(&x, &x)).sqrt();
    x /= n;
    if x[0] < 0.0 {
        x = -x;
    }
    f.set_column(0, &x);
    for i in 1..N {
        let mut v: Vector<N> = f.column(i).into_owned();
        let c = dot(&v, &x);
        v += c * x;
        for j in 1..i {
            let ej: Vector<N> = f.column(j).into_owned();
            let c = dot(&v, &ej);
            v -= c * ej;
        }
        let n = dot(&v, &v).sqrt();
        v /= n;
        f.set_column(i, &v);
    }
}

/// Copies a frame between equal-dimension const parameters; panics if the sizes differ.
pub(crate) fn recast<const A: usize, const B: usize>(f: &Lorentz<A>) -> Lorentz<B> {
    assert_eq!(A, B);
    Lorentz::<B>::from_fn(|i, j| f[(i, j)])
}

/// Max-norm deviation of the Minkowski Gram matrix of the columns from `diag(−1, 1, …)`.
pub fn frame_defect<const N: usize>(f: &Lorentz<N>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..N {
        for j in 0..N {
            let a: Vector<N> = f.column(i).into_owned();
            let b: Vector<N> = f.column(j).into_owned();
            let target = if i != j {
                0.0
            } else if i == 0 {
                -1.0
            } else {
                1.0
            };
            worst = worst.max((dot(&a, &b) - target).abs());
        }
    }
    worst
}

/// Minkowski cross product in R^{1,2}: the vector `n` with `⟨n, c⟩ = det(a, b, c)` for all `c`.
pub fn cross3(a: &Vector<3>, b: &Vector<3>) -> Vector<3> {
    let e = a.cross(b);
    Vector::<3>::new(-e[0], e[1], e[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    #[test]
    fn boost_is_lorentz_and_inverts() {
        let w = Vector::<4>::new(0.0, 0.3, -1.2, 0.7);
        let b = boost(&w);
        assert!(frame_defect(&b) < 1e-12);
        let bi = lorentz_inverse(&b);
        assert!((b * bi - Lorentz::<4>::identity()).amax() < 1e-12);
        let s = spatial_norm(&w);
        let (sh, ch) = sinh_cosh(s);
        let mut y = Vector::<4>::new(3.0, 1.0, 2.0, -2.0);
        let direct = bi * y;
        unboost_apply(&w, s, sh, ch, &mut y);
        assert!((direct - y).amax() < 1e-12);
    }

    #[test]
    fn right_boost_matches_product() {
        let f = boost(&Vector::<3>::new(0.0, 0.4, 0.9));
        let w = Vector::<3>::new(0.0, -0.2, 0.5);
        let s = spatial_norm(&w);
        let (sh, ch) = sinh_cosh(s);
        let mut g = f;
        right_boost(&mut g, &w, s, sh, ch);
        assert!((g - f * boost(&w)).amax() < 1e-12);
    }

    #[test]
    fn small_argument_sinh_cosh_is_accurate() {
        for &s in &[1e-8, 1e-5, 5e-4, 9.9e-4] {
            let (sh, ch) = sinh_cosh(s);
            assert!((sh - f64::sinh(s)).abs() <= 1e-16 * sh.abs().max(1e-300) * 4.0);
            assert!((ch - f64::cosh(s)).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_product_is_minkowski_dual() {
        let a = Vector::<3>::new(1.3, 0.2, -0.4);
        let b = Vector::<3>::new(0.1, 2.0, 0.5);
        let c = Vector::<3>::new(-0.7, 0.3, 1.1);
        let n = cross3(&a, &b);
        let det = Matrix3::from_columns(&[a, b, c]).determinant();
        assert!((dot(&n, &c) - det).abs() < 1e-12);
    }

    #[test]
    fn reorthonormalize_repairs_perturbed_frame() {
        let mut f = boost(&Vector::<4>::new(0.0, 1.0, 0.5, -0.3));
        f[(1, 2)] += 1e-6;
        f[(0, 0)] += 1e-6;
        reorthonormalize(&mut f);
        assert!(frame_defect(&f) < 1e-13);
    }
}
