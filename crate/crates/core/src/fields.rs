//! Piecewise field abstraction.
//!
//! Assembly, interpolation and estimation all consume "fields": objects that
//! can be evaluated (value, gradient, Hessian) at a point *from the side of a
//! given triangle*. Discrete functions, companion lifts and analytic
//! solutions implement the same trait, so the quadrature-driven operators do
//! not care where a field comes from.

use crate::geom::{Pt, Sym2};
use crate::scalar::Real;

/// Value, gradient and Hessian of a field at one point.
#[derive(Clone, Copy, Debug)]
pub struct Eval<T> {
    pub v: T,
    pub g: Pt<T>,
    pub h: Sym2<T>,
}

impl<T: Real> Eval<T> {
    pub fn zero() -> Self {
        Eval { v: T::zero(), g: Pt::zero(), h: Sym2::zero() }
    }
    pub fn laplacian(&self) -> T {
        self.h.trace()
    }
    /// `Curl v = (dv/dy, -dv/dx)`.
    pub fn curl(&self) -> Pt<T> {
        Pt::new(self.g.y, -self.g.x)
    }
}

/// A piecewise smooth field over a fixed triangulation.
pub trait PwField<T: Real> {
    /// Evaluate at `p` from the side of triangle `t` (the one-sided trace
    /// when `p` lies on the triangle boundary).
    fn eval_on(&self, t: usize, p: Pt<T>) -> Eval<T>;

    /// True when the field is only piecewise polynomial with respect to the
    /// interior 3-split of each triangle (companion lifts), in which case
    /// quadrature must run over the subtriangles.
    fn needs_split(&self) -> bool {
        false
    }
}

/// Field defined by a closure, for exact solutions and manufactured data.
pub struct AnalyticField<T, F: Fn(Pt<T>) -> Eval<T>> {
    pub f: F,
    _marker: std::marker::PhantomData<T>,
}

impl<T, F: Fn(Pt<T>) -> Eval<T>> AnalyticField<T, F> {
    pub fn new(f: F) -> Self {
        AnalyticField { f, _marker: std::marker::PhantomData }
    }
}

impl<T: Real, F: Fn(Pt<T>) -> Eval<T>> PwField<T> for AnalyticField<T, F> {
    fn eval_on(&self, _t: usize, p: Pt<T>) -> Eval<T> {
        (self.f)(p)
    }
}

/// Pointwise difference `a - b`, e.g. an exact solution minus a discrete one.
pub struct DiffField<A, B> {
    pub a: A,
    pub b: B,
}

impl<A, B> DiffField<A, B> {
    pub fn new(a: A, b: B) -> Self {
        DiffField { a, b }
    }
}

impl<T: Real, A: PwField<T>, B: PwField<T>> PwField<T> for DiffField<A, B> {
    fn eval_on(&self, t: usize, p: Pt<T>) -> Eval<T> {
        let ea = self.a.eval_on(t, p);
        let eb = self.b.eval_on(t, p);
        Eval { v: ea.v - eb.v, g: ea.g - eb.g, h: ea.h - eb.h }
    }
    fn needs_split(&self) -> bool {
        self.a.needs_split() || self.b.needs_split()
    }
}

impl<T: Real, F: PwField<T> + ?Sized> PwField<T> for &F {
    fn eval_on(&self, t: usize, p: Pt<T>) -> Eval<T> {
        (**self).eval_on(t, p)
    }
    fn needs_split(&self) -> bool {
        (**self).needs_split()
    }
}
