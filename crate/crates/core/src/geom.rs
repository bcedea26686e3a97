//! Plane geometry primitives: points, symmetric 2x2 matrices (Hessians) and
//! the handful of triangle measures the assembly routines need.

use crate::scalar::Real;
use std::ops::{Add, Mul, Neg, Sub};

/// A point (or vector) in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pt<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Pt<T> {
    pub fn new(x: T, y: T) -> Self {
        Pt { x, y }
    }
    pub fn zero() -> Self {
        Pt { x: T::zero(), y: T::zero() }
    }
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }
    /// z-component of the cross product `self x o`.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }
    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }
    pub fn scale(self, s: T) -> Self {
        Pt { x: self.x * s, y: self.y * s }
    }
    /// Rotate by -90 degrees: `(y, -x)`.
    pub fn rot_cw(self) -> Self {
        Pt { x: self.y, y: -self.x }
    }
    pub fn normalize(self) -> Self {
        let n = self.norm();
        Pt { x: self.x / n, y: self.y / n }
    }
    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }
    pub fn mid(self, o: Self) -> Self {
        (self + o).scale(T::half())
    }
}

impl<T: Real> Add for Pt<T> {
    type Output = Pt<T>;
    fn add(self, o: Self) -> Self {
        Pt { x: self.x + o.x, y: self.y + o.y }
    }
}
impl<T: Real> Sub for Pt<T> {
    type Output = Pt<T>;
    fn sub(self, o: Self) -> Self {
        Pt { x: self.x - o.x, y: self.y - o.y }
    }
}
impl<T: Real> Neg for Pt<T> {
    type Output = Pt<T>;
    fn neg(self) -> Self {
        Pt { x: -self.x, y: -self.y }
    }
}
impl<T: Real> Mul<T> for Pt<T> {
    type Output = Pt<T>;
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

/// Symmetric 2x2 matrix, used for Hessians and matrix-valued source data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym2<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

impl<T: Real> Sym2<T> {
    pub fn new(xx: T, xy: T, yy: T) -> Self {
        Sym2 { xx, xy, yy }
    }
    pub fn zero() -> Self {
        Sym2 { xx: T::zero(), xy: T::zero(), yy: T::zero() }
    }
    pub fn trace(self) -> T {
        self.xx + self.yy
    }
    /// Frobenius inner product `A : B` (the off-diagonal counts twice).
    pub fn ddot(self, o: Self) -> T {
        self.xx * o.xx + self.yy * o.yy + T::two() * self.xy * o.xy
    }
    pub fn frobenius_sq(self) -> T {
        self.ddot(self)
    }
    /// Matrix-vector product.
    pub fn mv(self, v: Pt<T>) -> Pt<T> {
        Pt { x: self.xx * v.x + self.xy * v.y, y: self.xy * v.x + self.yy * v.y }
    }
    pub fn scale(self, s: T) -> Self {
        Sym2 { xx: self.xx * s, xy: self.xy * s, yy: self.yy * s }
    }
    /// Symmetrized outer product `u (x) v + v (x) u`.
    pub fn sym_outer(u: Pt<T>, v: Pt<T>) -> Self {
        Sym2 {
            xx: T::two() * u.x * v.x,
            xy: u.x * v.y + u.y * v.x,
            yy: T::two() * u.y * v.y,
        }
    }
}

impl<T: Real> Add for Sym2<T> {
    type Output = Sym2<T>;
    fn add(self, o: Self) -> Self {
        Sym2 { xx: self.xx + o.xx, xy: self.xy + o.xy, yy: self.yy + o.yy }
    }
}
impl<T: Real> Sub for Sym2<T> {
    type Output = Sym2<T>;
    fn sub(self, o: Self) -> Self {
        Sym2 { xx: self.xx - o.xx, xy: self.xy - o.xy, yy: self.yy - o.yy }
    }
}

/// Twice the signed area of the triangle `(a, b, c)`; positive when the
/// vertices are in counterclockwise order.
pub fn signed_area2<T: Real>(a: Pt<T>, b: Pt<T>, c: Pt<T>) -> T {
    (b - a).cross(c - a)
}

pub fn tri_area<T: Real>(a: Pt<T>, b: Pt<T>, c: Pt<T>) -> T {
    signed_area2(a, b, c).abs() * T::half()
}

pub fn tri_diameter<T: Real>(a: Pt<T>, b: Pt<T>, c: Pt<T>) -> T {
    let e0 = a.dist(b);
    let e1 = b.dist(c);
    let e2 = c.dist(a);
    e0.max(e1).max(e2)
}

/// Barycentric coordinates of `p` with respect to the triangle `(a, b, c)`.
pub fn barycentric<T: Real>(a: Pt<T>, b: Pt<T>, c: Pt<T>, p: Pt<T>) -> [T; 3] {
    let d = signed_area2(a, b, c);
    let l0 = signed_area2(p, b, c) / d;
    let l1 = signed_area2(a, p, c) / d;
    let l2 = signed_area2(a, b, p) / d;
    [l0, l1, l2]
}
