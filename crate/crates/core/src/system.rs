//! The slow-fast vector field, its Jacobian, equilibria, and their linear
//! classification. This module is the single source of truth for the model
//! equations; every other module consumes these definitions.
//!
//! The flow has one fast variable `x` and two slow variables `y`, `z`:
//!
//! ```text
//! x' = (y - x^2 - x^3) / eps
//! y' = z - x
//! z' = -nu - a x - b y - c z
//! ```
//!
//! written in the slow time variable, i.e. the fast equation is divided
//! through by `eps` so that all three components share one clock.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::{cross, dot, mat_vec, norm, normalize, scale, sub, Mat3, Vec3};

/// System parameters fixing one vector field instance. `eps` is the
/// timescale separation; `nu`, `a`, `b`, `c` shape the slow drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub eps: f64,
    pub nu: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Params {
    pub fn new(eps: f64, nu: f64, a: f64, b: f64, c: f64) -> Result<Self> {
        let p = Params { eps, nu, a, b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParams(format!("eps must be > 0, got {}", self.eps)));
        }
        for (name, v) in [
            ("eps", self.eps),
            ("nu", self.nu),
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    /// Same vector field with `nu` replaced; used by parameter scans.
    pub fn with_nu(&self, nu: f64) -> Params {
        Params { nu, ..*self }
    }
}

/// A phase-space point. `x` is the fast variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        State { x, y, z }
    }

    pub fn from_array(v: &Vec3) -> Self {
        State { x: v[0], y: v[1], z: v[2] }
    }

    pub fn to_array(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dist(&self, other: &State) -> f64 {
        norm(&sub(&self.to_array(), &other.to_array()))
    }
}

/// Right-hand side (dx/dt, dy/dt, dz/dt) in the slow time variable.
pub fn vector_field(p: &Params, s: &State) -> Vec3 {
    [
        (s.y - s.x * s.x - s.x * s.x * s.x) / p.eps,
        s.z - s.x,
        -p.nu - p.a * s.x - p.b * s.y - p.c * s.z,
    ]
}

/// Jacobian matrix of the vector field at `s`.
pub fn jacobian(p: &Params, s: &State) -> Mat3 {
    [
        [(-2.0 * s.x - 3.0 * s.x * s.x) / p.eps, 1.0 / p.eps, 0.0],
        [-1.0, 0.0, 1.0],
        [-p.a, -p.b, -p.c],
    ]
}

const EQ_SCAN_LO: f64 = -1.0;
const EQ_SCAN_HI: f64 = 1.0;
const EQ_SCAN_STEPS: usize = 2000;
const EQ_RESIDUAL_TOL: f64 = 1e-14;
const DEGENERACY_TOL: f64 = 1e-10;

/// Equilibria satisfy `y = x^2 + x^3` and `z = x`, with `x` a real root of
/// the reduced scalar equation `-nu - (a+c) x - b (x^2 + x^3) = 0`. The
/// bracket [-1, 1] is scanned for sign changes and each one is refined by
/// bisection; the root closest to the origin wins.
pub fn find_equilibrium(p: &Params) -> Result<State> {
    p.validate()?;
    let g = |x: f64| -p.nu - (p.a + p.c) * x - p.b * (x * x + x * x * x);
    let mut roots: Vec<f64> = Vec::new();
    let step = (EQ_SCAN_HI - EQ_SCAN_LO) / EQ_SCAN_STEPS as f64;
    let mut x_prev = EQ_SCAN_LO;
    let mut g_prev = g(x_prev);
    for i in 1..=EQ_SCAN_STEPS {
        let x = EQ_SCAN_LO + i as f64 * step;
        let gx = g(x);
        if g_prev == 0.0 {
            roots.push(x_prev);
        } else if g_prev * gx < 0.0 {
            roots.push(bisect_scalar(&g, x_prev, x));
        }
        x_prev = x;
        g_prev = gx;
    }
    if g_prev == 0.0 {
        roots.push(x_prev);
    }
    let x = roots
        .into_iter()
        .min_by(|u, v| u.abs().partial_cmp(&v.abs()).unwrap())
        .ok_or(Error::NoEquilibriumInBracket)?;
    Ok(State::new(x, x * x + x * x * x, x))
}

fn bisect_scalar(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = g(lo);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() < EQ_RESIDUAL_TOL {
            return mid;
        }
        if (gm > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= f64::EPSILON * mid.abs() {
            break;
        }
    }
    mid
}

/// Roots of a monic cubic with real coefficients.
#[derive(Debug, Clone, Copy)]
pub(crate) enum CubicRoots {
    ThreeReal([f64; 3]),
    /// One real root plus the complex-conjugate pair `re +/- i im`, im > 0.
    OneRealPair { real: f64, pair: Complex64 },
}

/// Closed-form roots of `x^3 + c2 x^2 + c1 x + c0`, polished by Newton
/// iteration on the original cubic.
pub(crate) fn cubic_roots(c2: f64, c1: f64, c0: f64) -> CubicRoots {
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let shift = c2 / 3.0;
    let disc = 0.25 * q * q + p * p * p / 27.0;
    if disc > 0.0 {
        let sd = disc.sqrt();
        let u = (-0.5 * q + sd).cbrt();
        let v = (-0.5 * q - sd).cbrt();
        let real = polish_cubic_root(c2, c1, c0, u + v - shift);
        // Deflate and take the quadratic's complex pair.
        let beta = c2 + real;
        let gamma = c1 + real * beta;
        let qd = beta * beta - 4.0 * gamma;
        if qd < 0.0 {
            let pair = Complex64::new(-0.5 * beta, 0.5 * (-qd).sqrt());
            CubicRoots::OneRealPair { real, pair }
        } else {
            // Discriminant signs disagree only in near-degenerate cases;
            // fall back to the real triple from the deflation.
            let r1 = 0.5 * (-beta + qd.sqrt());
            let r2 = 0.5 * (-beta - qd.sqrt());
            CubicRoots::ThreeReal(sorted3([real, r1, r2]))
        }
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = if m == 0.0 { 1.0 } else { (3.0 * q / (p * m)).clamp(-1.0, 1.0) };
        let phi = arg.acos() / 3.0;
        let mut roots = [0.0f64; 3];
        for (k, r) in roots.iter_mut().enumerate() {
            let t = m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos();
            *r = polish_cubic_root(c2, c1, c0, t - shift);
        }
        CubicRoots::ThreeReal(sorted3(roots))
    }
}

fn sorted3(mut r: [f64; 3]) -> [f64; 3] {
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    r
}

fn polish_cubic_root(c2: f64, c1: f64, c0: f64, mut x: f64) -> f64 {
    for _ in 0..4 {
        let f = ((x + c2) * x + c1) * x + c0;
        let df = (3.0 * x + 2.0 * c2) * x + c1;
        if df == 0.0 {
            break;
        }
        let step = f / df;
        x -= step;
        if step.abs() <= f64::EPSILON * x.abs() {
            break;
        }
    }
    x
}

/// Coefficients (c2, c1, c0) of det(xI - M) = x^3 + c2 x^2 + c1 x + c0.
pub(crate) fn characteristic_coeffs(m: &Mat3) -> (f64, f64, f64) {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let minors = m[1][1] * m[2][2] - m[1][2] * m[2][1]
        + m[0][0] * m[2][2] - m[0][2] * m[2][0]
        + m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    (-tr, minors, -det)
}

pub(crate) fn eigenvalues3(m: &Mat3) -> CubicRoots {
    let (c2, c1, c0) = characteristic_coeffs(m);
    cubic_roots(c2, c1, c0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumType {
    /// One real negative eigenvalue plus a complex pair with positive real
    /// part: 1D stable manifold, 2D unstable manifold.
    SaddleFocus,
    Other,
}

/// Linear data at the equilibrium: eigenvalues, the stable eigenvector and
/// an orthonormal basis of the plane spanned by the complex pair.
#[derive(Debug, Clone)]
pub struct EquilibriumInfo {
    pub location: State,
    pub eigenvalues: [Complex64; 3],
    pub stable_eigvec: Vec3,
    pub unstable_plane: [Vec3; 2],
    pub type_tag: EquilibriumType,
}

pub fn classify_equilibrium(p: &Params) -> Result<EquilibriumInfo> {
    let location = find_equilibrium(p)?;
    let j = jacobian(p, &location);
    match eigenvalues3(&j) {
        CubicRoots::OneRealPair { real, pair } => {
            if (Complex64::new(real, 0.0) - pair).norm() < DEGENERACY_TOL
                || (2.0 * pair.im).abs() < DEGENERACY_TOL
            {
                return Err(Error::DegenerateSpectrum);
            }
            let stable_eigvec = real_eigenvector(&j, real)?;
            let w = complex_eigenvector(&j, pair)?;
            let unstable_plane = orthonormal_plane(&w)?;
            let type_tag = if real < 0.0 && pair.re > 0.0 {
                EquilibriumType::SaddleFocus
            } else {
                EquilibriumType::Other
            };
            Ok(EquilibriumInfo {
                location,
                eigenvalues: [Complex64::new(real, 0.0), pair, pair.conj()],
                stable_eigvec,
                unstable_plane,
                type_tag,
            })
        }
        CubicRoots::ThreeReal(r) => {
            if r[1] - r[0] < DEGENERACY_TOL || r[2] - r[1] < DEGENERACY_TOL {
                return Err(Error::DegenerateSpectrum);
            }
            // All-real spectrum: keep the most contracting direction in the
            // stable slot and span the remaining two in the plane slot.
            let stable_eigvec = real_eigenvector(&j, r[0])?;
            let v1 = real_eigenvector(&j, r[1])?;
            let v2 = real_eigenvector(&j, r[2])?;
            let e1 = normalize(&v1).ok_or(Error::DegenerateSpectrum)?;
            let mut e2 = sub(&v2, &scale(&e1, dot(&v2, &e1)));
            e2 = normalize(&e2).ok_or(Error::DegenerateSpectrum)?;
            Ok(EquilibriumInfo {
                location,
                eigenvalues: [
                    Complex64::new(r[0], 0.0),
                    Complex64::new(r[1], 0.0),
                    Complex64::new(r[2], 0.0),
                ],
                stable_eigvec,
                unstable_plane: [e1, e2],
                type_tag: EquilibriumType::Other,
            })
        }
    }
}

/// Unit null vector of (J - lambda I) via the best-conditioned row cross
/// product; sign fixed so the largest-magnitude component is positive.
fn real_eigenvector(j: &Mat3, lambda: f64) -> Result<Vec3> {
    let m = shifted(j, lambda);
    let candidates = [
        cross(&m[0], &m[1]),
        cross(&m[0], &m[2]),
        cross(&m[1], &m[2]),
    ];
    let best = candidates
        .iter()
        .max_by(|u, v| norm(u).partial_cmp(&norm(v)).unwrap())
        .unwrap();
    let mut v = normalize(best).ok_or(Error::DegenerateSpectrum)?;
    let k = argmax_abs(&v);
    if v[k] < 0.0 {
        v = scale(&v, -1.0);
    }
    Ok(v)
}

fn shifted(j: &Mat3, lambda: f64) -> Mat3 {
    let mut m = *j;
    m[0][0] -= lambda;
    m[1][1] -= lambda;
    m[2][2] -= lambda;
    m
}

fn argmax_abs(v: &Vec3) -> usize {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    k
}

type CVec3 = [Complex64; 3];

/// Null vector of (J - lambda I) for a complex eigenvalue, phase-fixed so
/// the largest-magnitude component is real positive.
fn complex_eigenvector(j: &Mat3, lambda: Complex64) -> Result<CVec3> {
    let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = Complex64::new(j[r][c], 0.0);
        }
        m[r][r] -= lambda;
    }
    let ccross = |u: &[Complex64; 3], v: &[Complex64; 3]| -> CVec3 {
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    };
    let cnorm = |u: &CVec3| -> f64 { u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() };
    let candidates = [
        ccross(&m[0], &m[1]),
        ccross(&m[0], &m[2]),
        ccross(&m[1], &m[2]),
    ];
    let best = candidates
        .iter()
        .max_by(|u, v| cnorm(u).partial_cmp(&cnorm(v)).unwrap())
        .unwrap();
    let n = cnorm(best);
    if n < 1e-300 {
        return Err(Error::DegenerateSpectrum);
    }
    let mut w = [best[0] / n, best[1] / n, best[2] / n];
    let mut k = 0;
    for i in 1..3 {
        if w[i].norm() > w[k].norm() {
            k = i;
        }
    }
    let phase = w[k].conj() / w[k].norm();
    for wi in w.iter_mut() {
        *wi *= phase;
    }
    Ok(w)
}

/// Orthonormal (Re w, Im w) basis of the plane spanned by the pair's
/// eigenvector. The second vector keeps a positive component along Im w.
fn orthonormal_plane(w: &CVec3) -> Result<[Vec3; 2]> {
    let re = [w[0].re, w[1].re, w[2].re];
    let im = [w[0].im, w[1].im, w[2].im];
    let e1 = normalize(&re).ok_or(Error::DegenerateSpectrum)?;
    let mut e2 = sub(&im, &scale(&e1, dot(&im, &e1)));
    e2 = normalize(&e2).ok_or(Error::DegenerateSpectrum)?;
    Ok([e1, e2])
}

const HOPF_RE_TOL: f64 = 1e-12;

fn pair_real_part(p: &Params) -> Result<f64> {
    let loc = find_equilibrium(p)?;
    match eigenvalues3(&jacobian(p, &loc)) {
        CubicRoots::OneRealPair { pair, .. } => Ok(pair.re),
        CubicRoots::ThreeReal(_) => Err(Error::NoComplexPair),
    }
}

/// Locate the Hopf bifurcation parameter: bisection on the sign of the
/// complex pair's real part over [nu_lo, nu_hi] with everything else fixed.
pub fn hopf_scan(p: &Params, nu_lo: f64, nu_hi: f64) -> Result<f64> {
    let f_lo = pair_real_part(&p.with_nu(nu_lo))?;
    let f_hi = pair_real_part(&p.with_nu(nu_hi))?;
    if f_lo.abs() < HOPF_RE_TOL {
        return Ok(nu_lo);
    }
    if f_hi.abs() < HOPF_RE_TOL {
        return Ok(nu_hi);
    }
    if (f_lo > 0.0) == (f_hi > 0.0) {
        return Err(Error::NoSignChange);
    }
    let mut lo = nu_lo;
    let mut hi = nu_hi;
    let mut s_lo = f_lo > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = pair_real_part(&p.with_nu(mid))?;
        if fm.abs() < HOPF_RE_TOL {
            return Ok(mid);
        }
        if (fm > 0.0) == s_lo {
            lo = mid;
            s_lo = fm > 0.0;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= f64::EPSILON * mid.abs() {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Residual of lambda against det(J - lambda I), normalized by the cubic's
/// coefficient scale. Used by callers validating eigen output.
pub fn char_poly_residual(j: &Mat3, lambda: Complex64) -> f64 {
    let (c2, c1, c0) = characteristic_coeffs(j);
    let val = ((lambda + c2) * lambda + c1) * lambda + c0;
    let scale = lambda.norm().powi(3).max(c0.abs()).max(1.0);
    val.norm() / scale
}

/// |J v - lambda v| for a claimed real eigenpair.
pub fn eigvec_residual(j: &Mat3, lambda: f64, v: &Vec3) -> f64 {
    let jv = mat_vec(j, v);
    norm(&sub(&jv, &scale(v, lambda)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::XorShift;

    fn base_params(nu: f64) -> Params {
        Params::new(0.01, nu, -0.3, -1.0, 1.0).unwrap()
    }

    #[test]
    fn vector_field_at_origin() {
        let p = base_params(0.00802);
        let f = vector_field(&p, &State::new(0.0, 0.0, 0.0));
        assert_eq!(f, [0.0, 0.0, -0.00802]);
    }

    #[test]
    fn vector_field_direct_substitution() {
        let p = base_params(0.00802);
        let f = vector_field(&p, &State::new(1.0, 2.0, 1.0));
        assert!((f[0] - 0.0).abs() < 1e-12);
        assert!((f[1] - 0.0).abs() < 1e-12);
        assert!((f[2] - 1.29198).abs() < 1e-12);
    }

    #[test]
    fn vector_field_vanishes_at_equilibrium() {
        let p = base_params(0.00802);
        let eq = find_equilibrium(&p).unwrap();
        let f = vector_field(&p, &eq);
        assert!(norm(&f) < 1e-10, "residual {}", norm(&f));
    }

    #[test]
    fn slow_components_match_closed_form() {
        let p = base_params(0.0087);
        let mut rng = XorShift::new(11);
        for _ in 0..200 {
            let s = State::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0));
            let f = vector_field(&p, &s);
            assert_eq!(f[1], s.z - s.x);
            assert_eq!(f[2], -p.nu - p.a * s.x - p.b * s.y - p.c * s.z);
        }
    }

    #[test]
    fn jacobian_at_origin() {
        let p = base_params(0.00802);
        let j = jacobian(&p, &State::new(0.0, 0.0, 0.0));
        let expect = [[0.0, 100.0, 0.0], [-1.0, 0.0, 1.0], [0.3, 1.0, -1.0]];
        for r in 0..3 {
            for c in 0..3 {
                assert!((j[r][c] - expect[r][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_third_column_structure() {
        let p = base_params(0.005);
        let mut rng = XorShift::new(3);
        for _ in 0..50 {
            let s = State::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0));
            let j = jacobian(&p, &s);
            assert_eq!([j[0][2], j[1][2], j[2][2]], [0.0, 1.0, -p.c]);
        }
    }

    fn fd_jacobian(p: &Params, s: &State, h: f64) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for c in 0..3 {
            let mut lo = s.to_array();
            let mut hi = s.to_array();
            lo[c] -= h;
            hi[c] += h;
            let f_lo = vector_field(p, &State::from_array(&lo));
            let f_hi = vector_field(p, &State::from_array(&hi));
            for r in 0..3 {
                m[r][c] = (f_hi[r] - f_lo[r]) / (2.0 * h);
            }
        }
        m
    }

    fn assert_jacobian_close(j: &Mat3, fd: &Mat3, rel: f64) {
        for r in 0..3 {
            for c in 0..3 {
                let scale = j[r][c].abs().max(fd[r][c].abs()).max(1.0);
                assert!(
                    (j[r][c] - fd[r][c]).abs() / scale < rel,
                    "entry ({r},{c}): {} vs {}",
                    j[r][c],
                    fd[r][c]
                );
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences_at_point() {
        let p = base_params(0.00802);
        let s = State::new(0.1, 0.02, -0.05);
        assert_jacobian_close(&jacobian(&p, &s), &fd_jacobian(&p, &s, 1e-6), 1e-5);
    }

    #[test]
    fn jacobian_matches_central_differences_random() {
        let p = base_params(0.0087);
        let mut rng = XorShift::new(77);
        for _ in 0..100 {
            let s = State::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0));
            assert_jacobian_close(&jacobian(&p, &s), &fd_jacobian(&p, &s, 1e-6), 1e-5);
        }
    }

    #[test]
    fn equilibrium_at_origin_when_nu_zero() {
        let p = base_params(0.0);
        let eq = find_equilibrium(&p).unwrap();
        assert_eq!(eq, State::new(0.0, 0.0, 0.0));
    }

    /// Independent oracle: bisect the explicit cubic x^3 + x^2 - 0.7x - nu,
    /// which is the reduced equation at a = -0.3, b = -1, c = 1.
    fn oracle_root(nu: f64) -> f64 {
        let g = |x: f64| x * x * x + x * x - 0.7 * x - nu;
        let mut best: Option<f64> = None;
        let n = 4000;
        for i in 0..n {
            let lo = -1.0 + 2.0 * i as f64 / n as f64;
            let hi = lo + 2.0 / n as f64;
            if g(lo) * g(hi) <= 0.0 {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if g(a) * g(m) <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                let r = 0.5 * (a + b);
                if best.map_or(true, |x: f64| r.abs() < x.abs()) {
                    best = Some(r);
                }
            }
        }
        best.expect("oracle found no root")
    }

    #[test]
    fn equilibrium_matches_bisection_oracle() {
        for nu in [0.00870134, 0.00802] {
            let p = base_params(nu);
            let eq = find_equilibrium(&p).unwrap();
            let x_star = oracle_root(nu);
            assert!((eq.x - x_star).abs() < 1e-11, "x {} vs oracle {}", eq.x, x_star);
            assert_eq!(eq.y, eq.x * eq.x + eq.x * eq.x * eq.x);
            assert_eq!(eq.z, eq.x);
            assert!(norm(&vector_field(&p, &eq)) < 1e-12);
        }
    }

    #[test]
    fn classification_is_saddle_focus_at_reference_parameters() {
        let p = base_params(0.00870134);
        let info = classify_equilibrium(&p).unwrap();
        assert_eq!(info.type_tag, EquilibriumType::SaddleFocus);
        assert!(info.eigenvalues[0].re < 0.0 && info.eigenvalues[0].im == 0.0);
        assert!(info.eigenvalues[1].re > 0.0 && info.eigenvalues[1].im > 0.0);
    }

    #[test]
    fn eigen_residuals_are_small() {
        let p = base_params(0.00870134);
        let info = classify_equilibrium(&p).unwrap();
        let j = jacobian(&p, &info.location);
        for lam in info.eigenvalues {
            assert!(char_poly_residual(&j, lam) < 1e-8);
        }
        let lam0 = info.eigenvalues[0].re;
        assert!(eigvec_residual(&j, lam0, &info.stable_eigvec) < 1e-8);
        // The plane must be J-invariant with the pair's trace/determinant.
        let [e1, e2] = info.unstable_plane;
        let je1 = mat_vec(&j, &e1);
        let je2 = mat_vec(&j, &e2);
        let proj = |v: &Vec3| {
            let r = sub(v, &scale(&e1, dot(v, &e1)));
            let r = sub(&r, &scale(&e2, dot(&r, &e2)));
            norm(&r)
        };
        assert!(proj(&je1) < 1e-8, "plane not invariant: {}", proj(&je1));
        assert!(proj(&je2) < 1e-8);
        let m = [
            [dot(&e1, &je1), dot(&e1, &je2)],
            [dot(&e2, &je1), dot(&e2, &je2)],
        ];
        let pair = info.eigenvalues[1];
        assert!((m[0][0] + m[1][1] - 2.0 * pair.re).abs() < 1e-8);
        assert!((m[0][0] * m[1][1] - m[0][1] * m[1][0] - pair.norm_sqr()).abs() < 1e-6);
    }

    /// Durand-Kerner on the characteristic polynomial, independent of the
    /// closed-form path.
    fn durand_kerner(c2: f64, c1: f64, c0: f64) -> [Complex64; 3] {
        let poly = |x: Complex64| ((x + c2) * x + c1) * x + c0;
        let mut r = [
            Complex64::new(0.4, 0.9),
            Complex64::new(0.4, 0.9).powi(2),
            Complex64::new(0.4, 0.9).powi(3),
        ];
        for _ in 0..200 {
            let old = r;
            for i in 0..3 {
                let mut denom = Complex64::new(1.0, 0.0);
                for k in 0..3 {
                    if k != i {
                        denom *= old[i] - old[k];
                    }
                }
                r[i] = old[i] - poly(old[i]) / denom;
            }
        }
        r
    }

    #[test]
    fn eigenvalues_match_polynomial_root_oracle() {
        let p = base_params(0.00870134);
        let info = classify_equilibrium(&p).unwrap();
        let j = jacobian(&p, &info.location);
        let (c2, c1, c0) = characteristic_coeffs(&j);
        let mut oracle = durand_kerner(c2, c1, c0).to_vec();
        for lam in info.eigenvalues {
            let (idx, _) = oracle
                .iter()
                .enumerate()
                .min_by(|(_, u), (_, v)| {
                    (lam - *u).norm().partial_cmp(&(lam - *v).norm()).unwrap()
                })
                .unwrap();
            let nearest = oracle.swap_remove(idx);
            assert!(
                (lam - nearest).norm() < 1e-9 * lam.norm().max(1.0),
                "{lam} vs {nearest}"
            );
        }
    }

    #[test]
    fn hopf_lies_below_tangency_value() {
        let p = base_params(0.0);
        let nu_h = hopf_scan(&p, 0.0, 0.00647).unwrap();
        assert!(nu_h > 0.0 && nu_h < 0.00647, "nu_H = {nu_h}");
        // The pair's real part changes sign across the located value.
        let below = pair_real_part(&p.with_nu(nu_h - 1e-5)).unwrap();
        let above = pair_real_part(&p.with_nu(nu_h + 1e-5)).unwrap();
        assert!(below * above < 0.0);
    }

    #[test]
    fn hopf_rejects_sign_preserving_bracket() {
        let p = base_params(0.0);
        assert_eq!(hopf_scan(&p, 0.0, 1e-5), Err(Error::NoSignChange));
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(Params::new(0.01, f64::NAN, 0.0, 0.0, 0.0).is_err());
        assert!(Params::new(0.01, 0.0, 0.0, 0.0, 0.0).is_ok());
    }
}
