//! A posteriori error estimation.
//!
//! Explicit residual-based indicators for the Navier-Stokes and von Karman
//! problems, data oscillations, the single-force indicator `mu`, the
//! inconsistency surrogate `eta`, and the Jacobi-polynomial test function
//! used to verify efficiency of the point-load term.
//!
//! Per-triangle bookkeeping: the printed indicator sums edge terms over the
//! triangle boundary, which would double-count interior edges in the total.
//! Every interior-edge integral is therefore split half-half between the two
//! adjacent triangles, each applying its own `|T|`-power weight; boundary
//! edges count fully towards their owner. This keeps `sigma^2 = sum_T
//! sigma^2(T)` free of double counting and changes per-triangle values by at
//! most a factor sqrt(2).

use crate::fields::{Eval, PwField};
use crate::forms::{edge_rule, vk_bracket, SourceTerm};
use crate::geom::{barycentric, Pt, Sym2};
use crate::mesh::Triangulation;
use crate::quadrature::quad_triangle;
use crate::scalar::Real;
use crate::smalldense::DMat;
use crate::space::{edge_jump, DiscreteFunction, SchemeKind};
use crate::transfer::{l2_project, PkField};
use std::fmt::Write as _;

// ---------------------------------------------------------------------------
// Report.
// ---------------------------------------------------------------------------

/// Per-triangle refinement indicators `sigma^2(T)` with their component
/// breakdown, the data oscillations, and the optional efficiency index.
///
/// `sigma_sq[t]` is by construction the exact sum of the six component
/// columns for triangle `t`.
#[derive(Clone, Debug)]
pub struct EstimatorReport<T> {
    pub sigma_sq: Vec<T>,
    /// `|T|^2 ||Lambda_0 - div Lambda_1||^2` (plus bracket terms for VKE).
    pub volume: Vec<T>,
    /// `|T|^{3/2}` times the squared normal jump of the first-order residual.
    pub f_jump: Vec<T>,
    /// `|T|^{1/2}` times the squared (mean-free unless C0IP) normal-normal
    /// Hessian residual jump.
    pub normal_jump: Vec<T>,
    /// `|T|^{1/2}` times the squared tangential Hessian jump over all edges.
    pub tangential_jump: Vec<T>,
    /// Mean normal-derivative jumps squared and `|T|^{-1}`-weighted vertex
    /// value jumps squared.
    pub penalty: Vec<T>,
    /// Point-load contributions `|lambda| |T|^{1/2}` on load patches.
    pub point_load: Vec<T>,
    pub osc_sq: Vec<T>,
    /// Set when a point load violates the separation condition
    /// `dist(zeta, V) >= h_zeta / 4`.
    pub separation_warning: bool,
    /// Efficiency index `sigma / ||e||_h`, set via [`set_exact_error`].
    ///
    /// [`set_exact_error`]: EstimatorReport::set_exact_error
    pub ef: Option<T>,
}

impl<T: Real> EstimatorReport<T> {
    fn new(n: usize) -> Self {
        EstimatorReport {
            sigma_sq: vec![T::zero(); n],
            volume: vec![T::zero(); n],
            f_jump: vec![T::zero(); n],
            normal_jump: vec![T::zero(); n],
            tangential_jump: vec![T::zero(); n],
            penalty: vec![T::zero(); n],
            point_load: vec![T::zero(); n],
            osc_sq: vec![T::zero(); n],
            separation_warning: false,
            ef: None,
        }
    }

    /// Sum the component columns into `sigma_sq`.
    fn finish(&mut self) {
        for t in 0..self.sigma_sq.len() {
            self.sigma_sq[t] = self.volume[t]
                + self.f_jump[t]
                + self.normal_jump[t]
                + self.tangential_jump[t]
                + self.penalty[t]
                + self.point_load[t];
        }
    }

    /// Total estimator `sigma = sqrt(sum_T sigma^2(T))`.
    pub fn sigma(&self) -> T {
        self.sigma_sq.iter().copied().sum::<T>().sqrt()
    }

    /// Total oscillation `sqrt(sum_T osc_k^2(F, T))`.
    pub fn osc(&self) -> T {
        self.osc_sq.iter().copied().sum::<T>().sqrt()
    }

    /// Record the exact error and the efficiency index `EF = sigma / error`.
    pub fn set_exact_error(&mut self, error: T) {
        self.ef = Some(self.sigma() / error);
    }

    /// One CSV row per triangle with all indicator components.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "triangle,sigma_sq,volume,f_jump,normal_jump,tangential_jump,penalty,point_load,osc_sq\n",
        );
        for t in 0..self.sigma_sq.len() {
            writeln!(
                out,
                "{t},{},{},{},{},{},{},{},{}",
                self.sigma_sq[t],
                self.volume[t],
                self.f_jump[t],
                self.normal_jump[t],
                self.tangential_jump[t],
                self.penalty[t],
                self.point_load[t],
                self.osc_sq[t]
            )
            .unwrap();
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Data oscillations.
// ---------------------------------------------------------------------------

fn lambda_projections<T: Real>(
    mesh: &Triangulation<T>,
    f: &SourceTerm<T>,
) -> (PkField<T, T>, PkField<T, Pt<T>>, PkField<T, Sym2<T>>) {
    let p0 = match &f.f0 {
        Some(g) => l2_project(mesh, g, f.k, f.quad_degree),
        None => PkField::zeros(mesh, f.k),
    };
    let p1 = match &f.f1 {
        Some(g) => l2_project(mesh, g, f.k, f.quad_degree),
        None => PkField::zeros(mesh, f.k),
    };
    let p2 = match &f.f2 {
        Some(g) => l2_project(mesh, g, f.k, f.quad_degree),
        None => PkField::zeros(mesh, f.k),
    };
    (p0, p1, p2)
}

fn oscillation_sq<T: Real>(
    mesh: &Triangulation<T>,
    f: &SourceTerm<T>,
    p0: &PkField<T, T>,
    p1: &PkField<T, Pt<T>>,
    p2: &PkField<T, Sym2<T>>,
) -> Vec<T> {
    let mut out = vec![T::zero(); mesh.n_triangles()];
    if !f.has_volume_part() {
        return out;
    }
    let rule = quad_triangle::<T>(f.quad_degree);
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.tri_pts(t);
        let h2 = mesh.diameter(t).pow2();
        let (mut s0, mut s1, mut s2) = (T::zero(), T::zero(), T::zero());
        for (p, w) in rule.map_to(a, b, c) {
            if f.f0.is_some() {
                s0 += w * (f.eval_f0(p) - p0.eval(t, p)).pow2();
            }
            if f.f1.is_some() {
                let d = f.eval_f1(p) - p1.eval(t, p);
                s1 += w * d.dot(d);
            }
            if f.f2.is_some() {
                s2 += w * (f.eval_f2(p) - p2.eval(t, p)).frobenius_sq();
            }
        }
        out[t] = h2 * h2 * s0 + h2 * s1 + s2;
    }
    out
}

/// Data oscillation `osc_k(F, T)^2 = ||h^2 (f0 - Pi_k f0)||^2 +
/// ||h (f1 - Pi_k f1)||^2 + ||f2 - Pi_k f2||^2` per triangle (`h` the
/// triangle diameter), and the total `osc_k(F, T) = sqrt(sum)`.
pub fn oscillation<T: Real>(mesh: &Triangulation<T>, f: &SourceTerm<T>) -> (Vec<T>, T) {
    let (p0, p1, p2) = lambda_projections(mesh, f);
    let per = oscillation_sq(mesh, f, &p0, &p1, &p2);
    let total = per.iter().copied().sum::<T>().sqrt();
    (per, total)
}

// ---------------------------------------------------------------------------
// Point-load indicator.
// ---------------------------------------------------------------------------

/// Localized single-force indicator contributions.
#[derive(Clone, Debug)]
pub struct PointLoadReport<T> {
    /// Contribution to `sigma^2(T)`: `|lambda| |T|^{1/2}` for `T` in the
    /// patch of a non-vertex atom, summed over loads.
    pub per_triangle: Vec<T>,
    /// `mu = sum |lambda| h_zeta` with `h_zeta = min {|T|^{1/2}}` over the
    /// patch; atoms at vertices contribute zero.
    pub mu: T,
    pub separation_warning: bool,
}

/// The estimator `mu(zeta) = |lambda| h_zeta` of a point load, distributed
/// to the triangles of the load patch. Loads at mesh vertices have no
/// contribution; a load closer to a vertex than `h_zeta / 4` raises the
/// separation warning (not a fatal error).
pub fn point_load_indicator<T: Real>(
    mesh: &Triangulation<T>,
    loads: &[(Pt<T>, T)],
) -> PointLoadReport<T> {
    let mut rep = PointLoadReport {
        per_triangle: vec![T::zero(); mesh.n_triangles()],
        mu: T::zero(),
        separation_warning: false,
    };
    let vertex_tol = T::c(1e-12) * mesh.max_diameter();
    for &(z, lambda) in loads {
        let dist = mesh.vertex_distance(z);
        if dist <= vertex_tol {
            continue;
        }
        let patch = mesh.point_patch(z);
        assert!(!patch.is_empty(), "point load lies outside the domain");
        let h_zeta = patch.iter().map(|&t| mesh.area(t).sqrt()).fold(T::infinity(), T::min);
        rep.mu += lambda.abs() * h_zeta;
        for &t in &patch {
            rep.per_triangle[t] += lambda.abs() * mesh.area(t).sqrt();
        }
        if dist < h_zeta / T::c(4.0) {
            rep.separation_warning = true;
        }
    }
    rep
}

// ---------------------------------------------------------------------------
// Residual estimators.
// ---------------------------------------------------------------------------

/// Edge terms of one solution component: tangential Hessian jumps (all
/// edges), normal-normal jumps of `lam2 = Pi_k f2 - D^2 u` (interior edges,
/// mean-free unless `vartheta = 0`), and the penalty terms (all edges).
fn component_edge_terms<T: Real>(
    mesh: &Triangulation<T>,
    u: &DiscreteFunction<T>,
    p2: &PkField<T, Sym2<T>>,
    vartheta: T,
    tangential: &mut [T],
    normal: &mut [T],
    penalty: &mut [T],
) {
    let rule = edge_rule::<T>();
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
        let tp = edge.tris[0].unwrap();
        let (mut tang, mut nsq, mut nint, mut slope) = (T::zero(), T::zero(), T::zero(), T::zero());
        for (p, w) in rule.map_to(pa, pb) {
            let j = edge_jump(u, mesh, e, p);
            let jt = j.h.mv(edge.tau);
            tang += w * jt.dot(jt);
            slope += w * j.g.dot(edge.nu);
            if let Some(tm) = edge.tris[1] {
                let lam = |t: usize| (p2.eval(t, p) - u.eval_on(t, p).h).mv(edge.nu).dot(edge.nu);
                let g = lam(tp) - lam(tm);
                nsq += w * g.pow2();
                nint += w * g;
            }
        }
        // ||(1 - vartheta Pi_{E,0}) g||^2 = ||g||^2 - vartheta |E| (mean g)^2,
        // clamped at zero against cancellation when g is edge-constant.
        let normal_edge = (nsq - vartheta * nint.pow2() / edge.length).max(T::zero());
        let pen_slope = (slope / edge.length).pow2();
        let mut pen_vertex = T::zero();
        for &z in &edge.v {
            pen_vertex += edge_jump(u, mesh, e, mesh.vertices[z]).v.pow2();
        }
        match edge.tris[1] {
            Some(tm) => {
                for t in [tp, tm] {
                    let at = mesh.area(t);
                    tangential[t] += T::half() * at.sqrt() * tang;
                    normal[t] += T::half() * at.sqrt() * normal_edge;
                    penalty[t] += T::half() * (pen_slope + pen_vertex / at);
                }
            }
            None => {
                // The normal-normal residual jump runs over dT minus the
                // domain boundary only.
                let at = mesh.area(tp);
                tangential[tp] += at.sqrt() * tang;
                penalty[tp] += pen_slope + pen_vertex / at;
            }
        }
    }
}

/// Interior-edge normal jumps of the first-order residual
/// `[Lambda_1 - div Lambda_2 - d_s(Lambda_2 tau)] . nu` with the
/// problem-specific extra convection term subtracted from `Lambda_1`.
fn f_jump_terms<T: Real>(
    mesh: &Triangulation<T>,
    p1: &PkField<T, Pt<T>>,
    p2: &PkField<T, Sym2<T>>,
    extra: &dyn Fn(usize, Pt<T>) -> Pt<T>,
    out: &mut [T],
) {
    let rule = edge_rule::<T>();
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        let Some(tm) = edge.tris[1] else { continue };
        let tp = edge.tris[0].unwrap();
        let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
        let mut s = T::zero();
        for (p, w) in rule.map_to(pa, pb) {
            let side = |t: usize| {
                p1.eval(t, p) - extra(t, p) - p2.div(t) - p2.dir_deriv(t, edge.tau).mv(edge.tau)
            };
            s += w * (side(tp) - side(tm)).dot(edge.nu).pow2();
        }
        for t in [tp, tm] {
            let at = mesh.area(t);
            out[t] += T::half() * at * at.sqrt() * s;
        }
    }
}

fn estimate_scalar<T: Real>(
    u: &DiscreteFunction<T>,
    f: &SourceTerm<T>,
    convection: bool,
) -> EstimatorReport<T> {
    let mesh = &u.space.mesh;
    let vartheta = if u.space.config.kind == SchemeKind::C0ip { T::zero() } else { T::one() };
    let (p0, p1, p2) = lambda_projections(mesh, f);
    let mut rep = EstimatorReport::new(mesh.n_triangles());

    // |T|^2 ||Pi_k f0 - div Pi_k f1||^2; div^2 of the (at most affine)
    // Pi_k f2 vanishes identically for k <= 1.
    let rule = quad_triangle::<T>(2);
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.tri_pts(t);
        let mut s = T::zero();
        for (p, w) in rule.map_to(a, b, c) {
            s += w * (p0.eval(t, p) - p1.div(t)).pow2();
        }
        rep.volume[t] = mesh.area(t).pow2() * s;
    }

    component_edge_terms(
        mesh,
        u,
        &p2,
        vartheta,
        &mut rep.tangential_jump,
        &mut rep.normal_jump,
        &mut rep.penalty,
    );
    if convection {
        let conv = |t: usize, p: Pt<T>| {
            let e = u.eval_on(t, p);
            e.curl().scale(e.laplacian())
        };
        f_jump_terms(mesh, &p1, &p2, &conv, &mut rep.f_jump);
    } else {
        f_jump_terms(mesh, &p1, &p2, &|_, _| Pt::zero(), &mut rep.f_jump);
    }

    let pl = point_load_indicator(mesh, &f.point_loads);
    rep.point_load = pl.per_triangle;
    rep.separation_warning = pl.separation_warning;
    rep.osc_sq = oscillation_sq(mesh, f, &p0, &p1, &p2);
    rep.finish();
    rep
}

/// Residual a posteriori estimator for the stream-function Navier-Stokes
/// problem: per triangle
/// `sigma^2(T) = |T|^2 ||Pi_k f0 - div Pi_k f1||^2
///  + |T|^{3/2} ||[Pi_k f1 - Du Curl u - div Pi_k f2 - d_s(Pi_k f2 tau)].nu||^2 (interior)
///  + |T|^{1/2} ||(1 - vartheta Pi_{E,0}) [(Pi_k f2 - D^2 u) nu].nu||^2 (interior)
///  + |T|^{1/2} ||[D^2 u] tau||^2 (all edges)
///  + sum_E (|mean [du/dnu]|^2 + |T|^{-1} sum_z [u](z)^2)`
/// with `vartheta = 0` for C0IP and `1` otherwise, interior edge terms split
/// half-half between the adjacent triangles.
pub fn estimate_nse<T: Real>(u: &DiscreteFunction<T>, f: &SourceTerm<T>) -> EstimatorReport<T> {
    estimate_scalar(u, f, true)
}

/// The [`estimate_nse`] indicator without the convection jump, for the
/// linear biharmonic model problem.
pub fn estimate_biharmonic<T: Real>(
    u: &DiscreteFunction<T>,
    f: &SourceTerm<T>,
) -> EstimatorReport<T> {
    estimate_scalar(u, f, false)
}

/// Residual a posteriori estimator for the von Karman system: volume terms
/// `|T|^2 (||Pi_k f0 + [u1,u2] - div Pi_k f1||^2 + ||[u1,u1]||^2)`, the
/// shared first-order residual jump, tangential and (mean-free unless C0IP)
/// normal-normal Hessian jumps and penalties for both components, plus the
/// point-load indicators.
pub fn estimate_vke<T: Real>(
    u1: &DiscreteFunction<T>,
    u2: &DiscreteFunction<T>,
    f: &SourceTerm<T>,
) -> EstimatorReport<T> {
    assert!(
        std::sync::Arc::ptr_eq(&u1.space, &u2.space),
        "VKE components must share one space"
    );
    let mesh = &u1.space.mesh;
    let vartheta = if u1.space.config.kind == SchemeKind::C0ip { T::zero() } else { T::one() };
    let (p0, p1, p2) = lambda_projections(mesh, f);
    let mut rep = EstimatorReport::new(mesh.n_triangles());

    // The brackets of piecewise quadratics are constant per triangle.
    let rule = quad_triangle::<T>(2);
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.tri_pts(t);
        let m = mesh.centroid(t);
        let (e1, e2) = (u1.eval_on(t, m), u2.eval_on(t, m));
        let br12 = vk_bracket(&e1, &e2);
        let br11 = vk_bracket(&e1, &e1);
        let mut s = T::zero();
        for (p, w) in rule.map_to(a, b, c) {
            s += w * (p0.eval(t, p) + br12 - p1.div(t)).pow2();
        }
        let at = mesh.area(t);
        rep.volume[t] = at.pow2() * (s + at * br11.pow2());
    }

    let p2_zero = PkField::zeros(mesh, f.k);
    for u in [u1, u2] {
        // The second component has no source data: its normal-normal
        // residual is the plain Hessian jump.
        let p2c = if std::ptr::eq(u, u1) { &p2 } else { &p2_zero };
        component_edge_terms(
            mesh,
            u,
            p2c,
            vartheta,
            &mut rep.tangential_jump,
            &mut rep.normal_jump,
            &mut rep.penalty,
        );
    }
    f_jump_terms(mesh, &p1, &p2, &|_, _| Pt::zero(), &mut rep.f_jump);

    let pl = point_load_indicator(mesh, &f.point_loads);
    rep.point_load = pl.per_triangle;
    rep.separation_warning = pl.separation_warning;
    rep.osc_sq = oscillation_sq(mesh, f, &p0, &p1, &p2);
    rep.finish();
    rep
}

// ---------------------------------------------------------------------------
// Inconsistency surrogate.
// ---------------------------------------------------------------------------

/// The computable surrogate `||h_E^{1/2} [D^2 u] tau||_{L^2} + j_h(u,u)^{1/2}`
/// of the inconsistency `||u - J I_M u||_h`, with jumps across interior
/// edges (so that globally smooth fields report zero).
pub fn eta_jump<T: Real, F: PwField<T>>(mesh: &Triangulation<T>, u: &F) -> T {
    let rule = edge_rule::<T>();
    let (mut tang, mut jh) = (T::zero(), T::zero());
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        if edge.boundary {
            continue;
        }
        let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
        let (mut t2, mut slope) = (T::zero(), T::zero());
        for (p, w) in rule.map_to(pa, pb) {
            let j = edge_jump(u, mesh, e, p);
            let jt = j.h.mv(edge.tau);
            t2 += w * jt.dot(jt);
            slope += w * j.g.dot(edge.nu);
        }
        tang += edge.length * t2;
        jh += (slope / edge.length).pow2();
        for &z in &edge.v {
            jh += (edge_jump(u, mesh, e, mesh.vertices[z]).v / edge.length).pow2();
        }
    }
    tang.sqrt() + jh.sqrt()
}

// ---------------------------------------------------------------------------
// The single-force test function (Jacobi polynomial construction).
// ---------------------------------------------------------------------------

/// Monomial coefficients of the Jacobi polynomial `P_m^{(4,4)}` on `[-1,1]`
/// (index = power), from the three-term recurrence.
fn jacobi44_coeffs<T: Real>(m: usize) -> Vec<T> {
    let mut prev = vec![T::one()];
    if m == 0 {
        return prev;
    }
    let mut cur = vec![T::zero(), T::c(5.0)];
    for j in 2..=m {
        let jf = j as f64;
        // 2j (j+8) (2j+6) P_j = (2j+7)(2j+8)(2j+6) x P_{j-1}
        //                       - 2 (j+3)^2 (2j+8) P_{j-2}.
        let denom = 2.0 * jf * (jf + 8.0) * (2.0 * jf + 6.0);
        let ax = T::c((2.0 * jf + 7.0) * (2.0 * jf + 8.0) * (2.0 * jf + 6.0) / denom);
        let b = T::c(2.0 * (jf + 3.0) * (jf + 3.0) * (2.0 * jf + 8.0) / denom);
        let mut next = vec![T::zero(); j + 1];
        for (p, &c) in cur.iter().enumerate() {
            next[p + 1] += ax * c;
        }
        for (p, &c) in prev.iter().enumerate() {
            next[p] -= b * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// The printed closed form `c_n = P_{2n}^{(4,4)}(0) = (-4)^{-n} binom(2n+4, n)`.
pub fn jacobi44_zero_value<T: Real>(n: usize) -> T {
    let mut binom = 1.0f64;
    for i in 0..n {
        binom = binom * (2 * n + 4 - i) as f64 / (i + 1) as f64;
    }
    T::c((-4.0f64).powi(-(n as i32)) * binom)
}

/// Value and first two derivatives by Horner's rule.
fn polyval2<T: Real>(coeffs: &[T], x: T) -> (T, T, T) {
    let (mut v, mut d, mut dd) = (T::zero(), T::zero(), T::zero());
    for &c in coeffs.iter().rev() {
        dd = dd * x + d * T::two();
        d = d * x + v;
        v = v * x + c;
    }
    (v, d, dd)
}

/// `(1 - x^2)^2` with derivatives.
fn bump<T: Real>(x: T) -> (T, T, T) {
    let s = T::one() - x * x;
    (s * s, -T::c(4.0) * x * s, T::c(12.0) * x * x - T::c(4.0))
}

/// Distance from `from` along the unit direction `dir` to the boundary of
/// triangle `t` (`from` on the boundary, `dir` pointing inward).
fn exit_distance<T: Real>(mesh: &Triangulation<T>, t: usize, from: Pt<T>, dir: Pt<T>) -> T {
    let [p0, p1, p2] = mesh.tri_pts(t);
    let tol = T::c(1e-12) * mesh.diameter(t);
    let mut best = T::infinity();
    for (a, b) in [(p0, p1), (p1, p2), (p2, p0)] {
        let e = b - a;
        let denom = e.cross(dir);
        if denom.abs() < T::c(1e-14) {
            continue;
        }
        let s = e.cross(a - from) / denom;
        if s > tol && s < best {
            best = s;
        }
    }
    assert!(best.is_finite(), "ray never leaves the triangle");
    best
}

/// The composite test function `psi` of the single-force efficiency
/// analysis: a rotated tensor bubble `g` on the largest square centered at
/// the load point with one diagonal on the edge, minus squared cubic-bubble
/// corrections `b^2 q` on the two adjacent triangles. It satisfies
/// `psi(zeta) = 1`, vanishes at all vertices and outside the edge patch, and
/// is L2-orthogonal to `P_k` on both triangles, on the edge, and in the
/// gradient along the edge.
#[derive(Clone, Debug)]
pub struct PsiFunction<T> {
    /// Adjacent triangles `[T+, T-]` of the carrying edge.
    pub tris: [usize; 2],
    pub zeta: Pt<T>,
    /// Square half-size: the support square is `|xi| <= 1`, `|eta| <= 1` in
    /// the frame coordinates `(xi, eta) = ((p - zeta).e1, (p - zeta).e2)/h`.
    pub h: T,
    e1: Pt<T>,
    e2: Pt<T>,
    /// `psi1 = P_{2n}^{(4,4)} / c_n` monomial coefficients.
    psi1: Vec<T>,
    tri_pts: [[Pt<T>; 3]; 2],
    /// Half-square triangles `{A, B_side, C}`; `A`, `C` are the square
    /// corners on the edge.
    half_square: [[Pt<T>; 3]; 2],
    /// Correction polynomials `q_side = c0 + c1 x + c2 y`.
    q: [[T; 3]; 2],
}

/// Construct the Supplement-style test function for a load point `zeta` in
/// the interior of edge `e`; `k` is the orthogonality degree (0 or 1).
pub fn build_psi<T: Real>(
    mesh: &Triangulation<T>,
    e: usize,
    zeta: Pt<T>,
    k: usize,
) -> PsiFunction<T> {
    assert!(k <= 1, "build_psi supports k in {{0, 1}}");
    let edge = &mesh.edges[e];
    let tm = edge.tris[1].expect("the load-bearing edge must be interior");
    let tp = edge.tris[0].unwrap();
    let pa = mesh.vertices[edge.v[0]];
    let off = zeta - pa;
    assert!(
        off.cross(edge.tau).abs() <= T::c(1e-10) * edge.length,
        "load point does not lie on the edge"
    );
    let along = off.dot(edge.tau);
    assert!(
        along > T::zero() && along < edge.length,
        "load point must lie in the open edge (separation violated)"
    );

    // Largest square with midpoint zeta and a diagonal on the edge inside
    // the two adjacent triangles: half-diagonal sqrt(2) h limited by the
    // distances to the edge endpoints and the exit distances along +-nu.
    let reach = along
        .min(edge.length - along)
        .min(exit_distance(mesh, tm, zeta, edge.nu))
        .min(exit_distance(mesh, tp, zeta, Pt::zero() - edge.nu));
    let h = reach / T::SQRT_2();
    // Frame axes: the reference diagonal (1,1)/sqrt(2) maps to tau and the
    // antidiagonal (1,-1)/sqrt(2) to nu.
    let e1 = (edge.tau + edge.nu).scale(T::FRAC_1_SQRT_2());
    let e2 = (edge.tau - edge.nu).scale(T::FRAC_1_SQRT_2());

    let a_pt = zeta - edge.tau.scale(reach);
    let c_pt = zeta + edge.tau.scale(reach);
    let b_plus = zeta - edge.nu.scale(reach);
    let b_minus = zeta + edge.nu.scale(reach);

    let n = std::cmp::max(1, k.div_ceil(2));
    let coeffs = jacobi44_coeffs::<T>(2 * n);
    let c_n = polyval2(&coeffs, T::zero()).0;
    let psi1 = coeffs.iter().map(|&c| c / c_n).collect();

    let mut psi = PsiFunction {
        tris: [tp, tm],
        zeta,
        h,
        e1,
        e2,
        psi1,
        tri_pts: [mesh.tri_pts(tp), mesh.tri_pts(tm)],
        half_square: [[a_pt, b_plus, c_pt], [a_pt, b_minus, c_pt]],
        q: [[T::zero(); 3]; 2],
    };

    // Bubble corrections: q_side in P_k solves
    //   int_T b^2 q m = int_{half square} g m   for all m in P_k(T).
    let nb = if k == 0 { 1 } else { 3 };
    let mono = |i: usize, p: Pt<T>| match i {
        0 => T::one(),
        1 => p.x,
        _ => p.y,
    };
    for side in 0..2 {
        let [a, b, c] = psi.tri_pts[side];
        let mass_rule = quad_triangle::<T>(8);
        let mut mass = DMat::zeros(nb, nb);
        for (p, w) in mass_rule.map_to(a, b, c) {
            let bb = psi.bubble(side, p).v.pow2();
            for i in 0..nb {
                for j in 0..nb {
                    mass[(i, j)] += w * bb * mono(i, p) * mono(j, p);
                }
            }
        }
        let g_rule = quad_triangle::<T>(12);
        let [ha, hb, hc] = psi.half_square[side];
        let mut rhs = DMat::zeros(nb, 1);
        for (p, w) in g_rule.map_to(ha, hb, hc) {
            let gv = psi.eval_g(p).v;
            for i in 0..nb {
                rhs[(i, 0)] += w * gv * mono(i, p);
            }
        }
        let sol = mass.solve(rhs);
        for i in 0..nb {
            psi.q[side][i] = sol[(i, 0)];
        }
    }
    psi
}

impl<T: Real> PsiFunction<T> {
    /// The square bubble `g(p) = w(xi, eta) psi1((xi + eta)/2)` in frame
    /// coordinates, zero outside the square.
    fn eval_g(&self, p: Pt<T>) -> Eval<T> {
        let d = p - self.zeta;
        let xi = d.dot(self.e1) / self.h;
        let eta = d.dot(self.e2) / self.h;
        if xi.abs() >= T::one() || eta.abs() >= T::one() {
            return Eval::zero();
        }
        let (wx, wx1, wx2) = bump(xi);
        let (wy, wy1, wy2) = bump(eta);
        let (ps, ps1, ps2) = polyval2(&self.psi1, (xi + eta) * T::half());
        let v = wx * wy * ps;
        let gx = wx1 * wy * ps + wx * wy * ps1 * T::half();
        let gy = wx * wy1 * ps + wx * wy * ps1 * T::half();
        let q = T::c(0.25);
        let hxx = wx2 * wy * ps + wx1 * wy * ps1 + wx * wy * ps2 * q;
        let hyy = wx * wy2 * ps + wx * wy1 * ps1 + wx * wy * ps2 * q;
        let hxy =
            wx1 * wy1 * ps + (wx1 * wy + wx * wy1) * ps1 * T::half() + wx * wy * ps2 * q;
        // Push through the orthonormal frame map.
        let s = T::one() / self.h;
        let g = (self.e1.scale(gx) + self.e2.scale(gy)).scale(s);
        let he11 = Sym2::new(self.e1.x * self.e1.x, self.e1.x * self.e1.y, self.e1.y * self.e1.y);
        let he22 = Sym2::new(self.e2.x * self.e2.x, self.e2.x * self.e2.y, self.e2.y * self.e2.y);
        let he12 = Sym2::sym_outer(self.e1, self.e2);
        let hmat = (he11.scale(hxx) + he12.scale(hxy) + he22.scale(hyy)).scale(s * s);
        Eval { v, g, h: hmat }
    }

    /// The cubic bubble `b = l1 l2 l3` of triangle `side` (unnormalized).
    fn bubble(&self, side: usize, p: Pt<T>) -> Eval<T> {
        let [a, b, c] = self.tri_pts[side];
        let area2 = (b - a).cross(c - a);
        let rot = |u: Pt<T>| Pt::new(-u.y, u.x);
        let lam = [
            ((c - b).cross(p - b) / area2, rot(c - b).scale(T::one() / area2)),
            ((a - c).cross(p - c) / area2, rot(a - c).scale(T::one() / area2)),
            ((b - a).cross(p - a) / area2, rot(b - a).scale(T::one() / area2)),
        ];
        let v = lam[0].0 * lam[1].0 * lam[2].0;
        let mut g = Pt::zero();
        let mut h = Sym2::zero();
        for i in 0..3 {
            let (j, l) = ((i + 1) % 3, (i + 2) % 3);
            g = g + lam[i].1.scale(lam[j].0 * lam[l].0);
            h = h + Sym2::sym_outer(lam[j].1, lam[l].1).scale(lam[i].0);
        }
        Eval { v, g, h }
    }

    /// The bubble correction `b^2 q_side` with derivatives.
    fn bubble_correction(&self, side: usize, p: Pt<T>) -> Eval<T> {
        let b = self.bubble(side, p);
        let [c0, c1, c2] = self.q[side];
        let qv = c0 + c1 * p.x + c2 * p.y;
        let qg = Pt::new(c1, c2);
        let b2 = b.v * b.v;
        let b2g = b.g.scale(T::two() * b.v);
        let b2h = (b.h.scale(b.v) + Sym2::sym_outer(b.g, b.g).scale(T::half())).scale(T::two());
        Eval {
            v: b2 * qv,
            g: b2g.scale(qv) + qg.scale(b2),
            h: b2h.scale(qv) + Sym2::sym_outer(b2g, qg),
        }
    }

    /// Global evaluation: `g - b^2 q` on the two carrier triangles, zero
    /// elsewhere.
    pub fn eval(&self, p: Pt<T>) -> Eval<T> {
        for side in 0..2 {
            let [a, b, c] = self.tri_pts[side];
            let lam = barycentric(a, b, c, p);
            if lam.iter().all(|&l| l >= -T::c(1e-12)) {
                let g = self.eval_g(p);
                let corr = self.bubble_correction(side, p);
                return Eval { v: g.v - corr.v, g: g.g - corr.g, h: g.h - corr.h };
            }
        }
        Eval::zero()
    }

    /// The square corners on the edge (the support of `psi` on the edge).
    pub fn edge_support(&self) -> (Pt<T>, Pt<T>) {
        (self.half_square[0][0], self.half_square[0][2])
    }

    /// `int_{T_side} psi m dx` by exact quadrature over the two polynomial
    /// subregions (the half square and the full triangle).
    pub fn integrate_against(
        &self,
        side: usize,
        m: impl Fn(Pt<T>) -> T,
        degree: usize,
    ) -> T {
        let rule = quad_triangle::<T>(degree);
        let [ha, hb, hc] = self.half_square[side];
        let mut s = T::zero();
        for (p, w) in rule.map_to(ha, hb, hc) {
            s += w * self.eval_g(p).v * m(p);
        }
        let [a, b, c] = self.tri_pts[side];
        for (p, w) in rule.map_to(a, b, c) {
            s -= w * self.bubble_correction(side, p).v * m(p);
        }
        s
    }

    /// The energy norm `|| D^2 psi ||_{L^2}`, the quantity with the
    /// `h_zeta^{-1}` scaling.
    pub fn energy_norm(&self) -> T {
        let hs_rule = quad_triangle::<T>(18);
        let tri_rule = quad_triangle::<T>(10);
        let mut s = T::zero();
        for side in 0..2 {
            let [ha, hb, hc] = self.half_square[side];
            for (p, w) in hs_rule.map_to(ha, hb, hc) {
                let g = self.eval_g(p).h;
                let corr = self.bubble_correction(side, p).h;
                s += w * (g.frobenius_sq() - T::two() * g.ddot(corr));
            }
            let [a, b, c] = self.tri_pts[side];
            for (p, w) in tri_rule.map_to(a, b, c) {
                s += w * self.bubble_correction(side, p).h.frobenius_sq();
            }
        }
        s.sqrt()
    }
}
