//! Fixed-size vector helpers. Everything here is branch-free arithmetic so
//! results are bit-reproducible across runs.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];
pub type Vec2 = [f64; 2];

pub fn dot(u: &Vec3, v: &Vec3) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

pub fn cross(u: &Vec3, v: &Vec3) -> Vec3 {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

pub fn norm(u: &Vec3) -> f64 {
    dot(u, u).sqrt()
}

pub fn sub(u: &Vec3, v: &Vec3) -> Vec3 {
    [u[0] - v[0], u[1] - v[1], u[2] - v[2]]
}

pub fn add(u: &Vec3, v: &Vec3) -> Vec3 {
    [u[0] + v[0], u[1] + v[1], u[2] + v[2]]
}

pub fn scale(u: &Vec3, s: f64) -> Vec3 {
    [u[0] * s, u[1] * s, u[2] * s]
}

/// u + s * v
pub fn axpy(u: &Vec3, s: f64, v: &Vec3) -> Vec3 {
    [u[0] + s * v[0], u[1] + s * v[1], u[2] + s * v[2]]
}

pub fn normalize(u: &Vec3) -> Option<Vec3> {
    let n = norm(u);
    if n < 1e-300 {
        None
    } else {
        Some(scale(u, 1.0 / n))
    }
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

pub fn dot2(u: &Vec2, v: &Vec2) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}

/// z-component of the 2D cross product.
pub fn cross2(u: &Vec2, v: &Vec2) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

pub fn norm2(u: &Vec2) -> f64 {
    dot2(u, u).sqrt()
}

pub fn sub2(u: &Vec2, v: &Vec2) -> Vec2 {
    [u[0] - v[0], u[1] - v[1]]
}

pub fn dist2(u: &Vec2, v: &Vec2) -> f64 {
    norm2(&sub2(u, v))
}

/// Proper intersection of segments [p1,p2] and [q1,q2], if any, together
/// with the crossing angle in (0, pi/2].
pub fn segment_intersection(p1: &Vec2, p2: &Vec2, q1: &Vec2, q2: &Vec2) -> Option<(Vec2, f64)> {
    let r = sub2(p2, p1);
    let s = sub2(q2, q1);
    let denom = cross2(&r, &s);
    if denom == 0.0 {
        return None;
    }
    let qp = sub2(q1, p1);
    let t = cross2(&qp, &s) / denom;
    let u = cross2(&qp, &r) / denom;
    if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&u) {
        return None;
    }
    let point = [p1[0] + t * r[0], p1[1] + t * r[1]];
    let angle = cross2(&r, &s).abs().atan2(dot2(&r, &s).abs());
    Some((point, angle))
}
