//! Discrete bilinear and trilinear forms.
//!
//! The bilinear form is `a_h = a_pw + b_h + c_h` with the scheme-dependent
//! lifting terms `b_h` and penalties `c_h`: none for Morley, the Hessian
//! lifting with `c_dG` for dG I, the same lifting restricted to the
//! continuous space with `c_IP` for C0IP, the over-penalized `c_P` for
//! WOPSIP, and the Laplacian form with its own lifting and `c_dG` for dG II.
//! The trilinear forms are the stream-function vorticity convection term
//! and the two von Karman forms built from the bracket `[.,.]`.
//!
//! Matrix assembly loops over triangles and edges with local basis
//! evaluations; form-level functions evaluate the same expressions for
//! arbitrary piecewise fields and serve as independent cross-checks and for
//! norms of errors.

use crate::fields::{Eval, PwField};
use crate::geom::Pt;
use crate::hct::HctSpace;
use crate::mesh::Triangulation;
use crate::quadrature::{quad_edge, quad_triangle, EdgeRule, QuadRule};
use crate::scalar::Real;
use crate::space::{DofMap, SchemeKind, TriP2};
use crate::sparse::{CsrMatrix, Triplets};

/// Volume quadrature degree: exact for products of two Hessian entries and
/// one gradient entry of piecewise cubics (total degree 5).
pub const VOLUME_DEGREE: usize = 6;
/// Edge quadrature degree: exact for products of two quadratic traces.
pub const EDGE_DEGREE: usize = 8;

/// Physical quadrature points on triangle `t`, split into the three
/// centroid subtriangles when a participating field is only piecewise
/// polynomial with respect to that split.
pub fn quad_points<T: Real>(
    mesh: &Triangulation<T>,
    t: usize,
    split: bool,
    rule: &QuadRule<T>,
) -> Vec<(Pt<T>, T)> {
    let [a, b, c] = mesh.tri_pts(t);
    if !split {
        return rule.map_to(a, b, c);
    }
    let g = mesh.centroid(t);
    let mut out = rule.map_to(a, b, g);
    out.extend(rule.map_to(b, c, g));
    out.extend(rule.map_to(c, a, g));
    out
}

// ---------------------------------------------------------------------------
// Form-level evaluations on arbitrary piecewise fields.
// ---------------------------------------------------------------------------

/// `a_pw(v, w) = sum_T int_T D^2 v : D^2 w dx`.
pub fn a_pw_form<T: Real>(
    mesh: &Triangulation<T>,
    v: &impl PwField<T>,
    w: &impl PwField<T>,
) -> T {
    let rule = quad_triangle::<T>(VOLUME_DEGREE);
    let split = v.needs_split() || w.needs_split();
    let mut s = T::zero();
    for t in 0..mesh.n_triangles() {
        for (p, wt) in quad_points(mesh, t, split, &rule) {
            s += wt * v.eval_on(t, p).h.ddot(w.eval_on(t, p).h);
        }
    }
    s
}

/// The jump form `j_h(v, w) = sum_E [ h_E^{-2} sum_{z in V(E)} [v](z)[w](z)
/// + (mean of [dv/dnu]) (mean of [dw/dnu]) ]` over all edges.
pub fn jh_form<T: Real>(mesh: &Triangulation<T>, v: &impl PwField<T>, w: &impl PwField<T>) -> T {
    let rule = quad_edge::<T>(EDGE_DEGREE);
    let mut s = T::zero();
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        let h = edge.length;
        for &z in &edge.v {
            let p = mesh.vertices[z];
            let jv = crate::space::edge_jump(v, mesh, e, p).v;
            let jw = crate::space::edge_jump(w, mesh, e, p).v;
            s += jv * jw / (h * h);
        }
        let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
        let mut mv = T::zero();
        let mut mw = T::zero();
        for (p, wt) in rule.map_to(pa, pb) {
            mv += wt * crate::space::edge_jump(v, mesh, e, p).g.dot(edge.nu);
            mw += wt * crate::space::edge_jump(w, mesh, e, p).g.dot(edge.nu);
        }
        s += (mv / h) * (mw / h);
    }
    s
}

/// `c_dG` penalty with weights `s1 h^{-3}` on value jumps and `s2 h^{-1}` on
/// normal-slope jumps.
pub fn cdg_form<T: Real>(
    mesh: &Triangulation<T>,
    v: &impl PwField<T>,
    w: &impl PwField<T>,
    s1: T,
    s2: T,
) -> T {
    let rule = quad_edge::<T>(EDGE_DEGREE);
    let mut s = T::zero();
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        let h = edge.length;
        let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
        let mut sv = T::zero();
        let mut sn = T::zero();
        for (p, wt) in rule.map_to(pa, pb) {
            let jv = crate::space::edge_jump(v, mesh, e, p);
            let jw = crate::space::edge_jump(w, mesh, e, p);
            sv += wt * jv.v * jw.v;
            sn += wt * jv.g.dot(edge.nu) * jw.g.dot(edge.nu);
        }
        s += s1 * sv / (h * h * h) + s2 * sn / h;
    }
    s
}

/// `c_P` penalty: `h_E^{-4} ( sum_z [v](z)[w](z) + int_E [dv/dnu] int_E [dw/dnu] )`.
pub fn cp_form<T: Real>(mesh: &Triangulation<T>, v: &impl PwField<T>, w: &impl PwField<T>) -> T {
    let rule = quad_edge::<T>(EDGE_DEGREE);
    let mut s = T::zero();
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        let h2 = edge.length * edge.length;
        let h4 = h2 * h2;
        let mut acc = T::zero();
        for &z in &edge.v {
            let p = mesh.vertices[z];
            acc += crate::space::edge_jump(v, mesh, e, p).v
                * crate::space::edge_jump(w, mesh, e, p).v;
        }
        let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
        let mut iv = T::zero();
        let mut iw = T::zero();
        for (p, wt) in rule.map_to(pa, pb) {
            iv += wt * crate::space::edge_jump(v, mesh, e, p).g.dot(edge.nu);
            iw += wt * crate::space::edge_jump(w, mesh, e, p).g.dot(edge.nu);
        }
        s += (acc + iv * iw) / h4;
    }
    s
}

/// `||v||_h = ( |||v|||_pw^2 + j_h(v,v) )^{1/2}`.
pub fn h_norm<T: Real>(mesh: &Triangulation<T>, v: &impl PwField<T>) -> T {
    (a_pw_form(mesh, v, v) + jh_form(mesh, v, v)).sqrt()
}

/// `||v||_dG` with the `c_dG` penalty (the C0IP norm uses `s1 = 0`).
pub fn dg_norm<T: Real>(mesh: &Triangulation<T>, v: &impl PwField<T>, s1: T, s2: T) -> T {
    (a_pw_form(mesh, v, v) + cdg_form(mesh, v, v, s1, s2)).sqrt()
}

/// WOPSIP norm `||v||_P`.
pub fn p_norm<T: Real>(mesh: &Triangulation<T>, v: &impl PwField<T>) -> T {
    (a_pw_form(mesh, v, v) + cp_form(mesh, v, v)).sqrt()
}

/// Navier-Stokes trilinear form
/// `Gamma_pw(eta, chi, phi) = sum_T int_T (Delta eta)(chi_y phi_x - chi_x phi_y)`.
pub fn trilinear_nse<T: Real>(
    mesh: &Triangulation<T>,
    eta: &impl PwField<T>,
    chi: &impl PwField<T>,
    phi: &impl PwField<T>,
) -> T {
    let rule = quad_triangle::<T>(VOLUME_DEGREE);
    let split = eta.needs_split() || chi.needs_split() || phi.needs_split();
    let mut s = T::zero();
    for t in 0..mesh.n_triangles() {
        for (p, wt) in quad_points(mesh, t, split, &rule) {
            let e = eta.eval_on(t, p);
            let c = chi.eval_on(t, p);
            let f = phi.eval_on(t, p);
            s += wt * e.laplacian() * (c.g.y * f.g.x - c.g.x * f.g.y);
        }
    }
    s
}

/// Von Karman bracket `[eta, chi] = eta_xx chi_yy + eta_yy chi_xx - 2 eta_xy chi_xy`.
pub fn vk_bracket<T: Real>(eta: &Eval<T>, chi: &Eval<T>) -> T {
    eta.h.xx * chi.h.yy + eta.h.yy * chi.h.xx - T::two() * eta.h.xy * chi.h.xy
}

/// `sum_T int_T [xi, theta] phi dx`; the von Karman trilinear forms are
/// `Gamma_pw,1 = -1` and `Gamma_pw,2 = +1/2` times this integral.
pub fn bracket_integral<T: Real>(
    mesh: &Triangulation<T>,
    xi: &impl PwField<T>,
    theta: &impl PwField<T>,
    phi: &impl PwField<T>,
) -> T {
    let rule = quad_triangle::<T>(VOLUME_DEGREE);
    let split = xi.needs_split() || theta.needs_split() || phi.needs_split();
    let mut s = T::zero();
    for t in 0..mesh.n_triangles() {
        for (p, wt) in quad_points(mesh, t, split, &rule) {
            let x = xi.eval_on(t, p);
            let h = theta.eval_on(t, p);
            let f = phi.eval_on(t, p);
            s += wt * vk_bracket(&x, &h) * f.v;
        }
    }
    s
}

pub fn trilinear_vke_1<T: Real>(
    mesh: &Triangulation<T>,
    xi: &impl PwField<T>,
    theta: &impl PwField<T>,
    phi: &impl PwField<T>,
) -> T {
    -bracket_integral(mesh, xi, theta, phi)
}

pub fn trilinear_vke_2<T: Real>(
    mesh: &Triangulation<T>,
    xi: &impl PwField<T>,
    theta: &impl PwField<T>,
    phi: &impl PwField<T>,
) -> T {
    bracket_integral(mesh, xi, theta, phi) * T::half()
}

// ---------------------------------------------------------------------------
// Basis spaces: a uniform local-basis interface over the scheme spaces and
// the HCT companion space, used by the matrix assemblers.
// ---------------------------------------------------------------------------

pub trait BasisSpace<T: Real> {
    fn n_dofs(&self) -> usize;
    fn n_local(&self) -> usize;
    fn global_index(&self, t: usize, slot: usize) -> Option<usize>;
    /// Evaluations of all local basis functions at the given points:
    /// `result[slot][point]`.
    fn local_evals(&self, t: usize, pts: &[Pt<T>]) -> Vec<Vec<Eval<T>>>;
    fn needs_split(&self) -> bool;
}

impl<T: Real> BasisSpace<T> for DofMap<T> {
    fn n_dofs(&self) -> usize {
        self.n_dofs
    }
    fn n_local(&self) -> usize {
        6
    }
    fn global_index(&self, t: usize, slot: usize) -> Option<usize> {
        self.local2global[t][slot]
    }
    fn local_evals(&self, t: usize, pts: &[Pt<T>]) -> Vec<Vec<Eval<T>>> {
        let tri = TriP2::from_mesh(&self.mesh, t);
        (0..6)
            .map(|slot| {
                let coeffs = self.basis_local_lagrange(t, slot);
                pts.iter().map(|&p| tri.eval(&coeffs, p)).collect()
            })
            .collect()
    }
    fn needs_split(&self) -> bool {
        false
    }
}

impl<T: Real> BasisSpace<T> for HctSpace<T> {
    fn n_dofs(&self) -> usize {
        self.n_dofs
    }
    fn n_local(&self) -> usize {
        12
    }
    fn global_index(&self, t: usize, slot: usize) -> Option<usize> {
        self.local2global[t][slot]
    }
    fn local_evals(&self, t: usize, pts: &[Pt<T>]) -> Vec<Vec<Eval<T>>> {
        self.local_basis_evals(t, pts)
    }
    fn needs_split(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Matrix assembly of a_h.
// ---------------------------------------------------------------------------

/// Per-edge one-sided basis contribution: global column, jump sign of the
/// owning side, and evaluations at the edge quadrature points.
struct EdgeContrib<T> {
    col: usize,
    sign: T,
    evals: Vec<Eval<T>>,
    /// Traces at the two edge endpoints (for c_P).
    endpoint_vals: [T; 2],
}

fn edge_contribs<T: Real>(
    space: &DofMap<T>,
    e: usize,
    qpts: &[Pt<T>],
    with_endpoints: bool,
) -> Vec<EdgeContrib<T>> {
    let mesh = &space.mesh;
    let edge = &mesh.edges[e];
    let endpoints =
        [mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]];
    let mut out = Vec::new();
    for (side, t) in edge.tris.iter().enumerate() {
        let Some(t) = *t else { continue };
        let sign = if side == 0 { T::one() } else { -T::one() };
        let tri = TriP2::from_mesh(mesh, t);
        for slot in 0..6 {
            let Some(col) = space.local2global[t][slot] else { continue };
            let coeffs = space.basis_local_lagrange(t, slot);
            let evals = qpts.iter().map(|&p| tri.eval(&coeffs, p)).collect();
            let endpoint_vals = if with_endpoints {
                [tri.eval(&coeffs, endpoints[0]).v, tri.eval(&coeffs, endpoints[1]).v]
            } else {
                [T::zero(); 2]
            };
            out.push(EdgeContrib { col, sign, evals, endpoint_vals });
        }
    }
    out
}

/// Assemble the scheme matrix `a_h` (rows = test, columns = trial).
pub fn assemble_a<T: Real>(space: &DofMap<T>) -> CsrMatrix<T> {
    let mesh = &space.mesh;
    let cfg = &space.config;
    let kind = cfg.kind;
    let mut tri = Triplets::new(space.n_dofs, space.n_dofs);

    // Volume part: Hessians of quadratics are constant per triangle.
    for t in 0..mesh.n_triangles() {
        let shapes = TriP2::from_mesh(mesh, t);
        let area = mesh.area(t);
        let c = mesh.centroid(t);
        let evals: Vec<Eval<T>> = (0..6)
            .map(|slot| shapes.eval(&space.basis_local_lagrange(t, slot), c))
            .collect();
        for i in 0..6 {
            let Some(gi) = space.local2global[t][i] else { continue };
            for j in 0..6 {
                let Some(gj) = space.local2global[t][j] else { continue };
                let val = if kind == SchemeKind::Dg2 {
                    evals[i].laplacian() * evals[j].laplacian()
                } else {
                    evals[i].h.ddot(evals[j].h)
                };
                // Row = test j? No: row = test, and entry a_h(b_trial, b_test)
                // lands at (test, trial); the volume part is symmetric.
                tri.push(gj, gi, val * area);
            }
        }
    }

    if kind == SchemeKind::Morley {
        return tri.to_csr();
    }

    let rule = quad_edge::<T>(EDGE_DEGREE);
    let wopsip = kind == SchemeKind::Wopsip;
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        let h = edge.length;
        let nu = edge.nu;
        let nsides = T::c(edge.tris.iter().flatten().count() as f64);
        let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
        let mapped = rule.map_to(pa, pb);
        let qpts: Vec<Pt<T>> = mapped.iter().map(|&(p, _)| p).collect();
        let weights: Vec<T> = mapped.iter().map(|&(_, w)| w).collect();
        let contribs = edge_contribs(space, e, &qpts, wopsip);

        match kind {
            SchemeKind::Morley => unreachable!(),
            SchemeKind::Dg1 | SchemeKind::C0ip | SchemeKind::Dg2 => {
                // Lifting terms -theta J(trial, test) - J(test, trial) plus
                // the penalty c_dG resp. c_IP.
                for a in &contribs {
                    for b in &contribs {
                        // (trial, test) = (a, b): entry at row b.col, col a.col.
                        let mut val = T::zero();
                        for (q, &wt) in weights.iter().enumerate() {
                            let ea = &a.evals[q];
                            let eb = &b.evals[q];
                            let lift = if kind == SchemeKind::Dg2 {
                                // J~(v,w) = int [dv/dnu] <Delta w>
                                let jva = a.sign * ea.g.dot(nu);
                                let avb = eb.laplacian() / nsides;
                                let jvb = b.sign * eb.g.dot(nu);
                                let ava = ea.laplacian() / nsides;
                                -cfg.theta * jva * avb - jvb * ava
                            } else {
                                // J(v,w) = int <D^2 v nu> . [grad w]
                                let da = ea.h.mv(nu).scale(T::one() / nsides);
                                let db = eb.h.mv(nu).scale(T::one() / nsides);
                                let ja = ea.g.scale(a.sign);
                                let jb = eb.g.scale(b.sign);
                                -cfg.theta * da.dot(jb) - db.dot(ja)
                            };
                            let pen = if kind == SchemeKind::C0ip {
                                cfg.sigma_ip / h
                                    * (a.sign * ea.g.dot(nu))
                                    * (b.sign * eb.g.dot(nu))
                            } else {
                                cfg.sigma1 / (h * h * h) * (a.sign * ea.v) * (b.sign * eb.v)
                                    + cfg.sigma2 / h
                                        * (a.sign * ea.g.dot(nu))
                                        * (b.sign * eb.g.dot(nu))
                            };
                            val += wt * (lift + pen);
                        }
                        tri.push(b.col, a.col, val);
                    }
                }
            }
            SchemeKind::Wopsip => {
                // c_P: pointwise vertex jumps and products of integrated
                // normal jumps, scaled h^{-4}.
                let h2 = h * h;
                let h4 = h2 * h2;
                let ints: Vec<T> = contribs
                    .iter()
                    .map(|c| {
                        let mut s = T::zero();
                        for (q, &wt) in weights.iter().enumerate() {
                            s += wt * c.sign * c.evals[q].g.dot(nu);
                        }
                        s
                    })
                    .collect();
                for (ia, a) in contribs.iter().enumerate() {
                    for (ib, b) in contribs.iter().enumerate() {
                        let vertex = a.sign * b.sign
                            * (a.endpoint_vals[0] * b.endpoint_vals[0]
                                + a.endpoint_vals[1] * b.endpoint_vals[1]);
                        let val = (vertex + ints[ia] * ints[ib]) / h4;
                        tri.push(b.col, a.col, val);
                    }
                }
            }
        }
    }
    tri.to_csr()
}

/// Gram matrix of the norm `||.||_h` on the scheme space (piecewise
/// Hessian product plus `j_h`); coincides with `a_h` for Morley.
pub fn assemble_h_gram<T: Real>(space: &DofMap<T>) -> CsrMatrix<T> {
    let mesh = &space.mesh;
    let mut tri = Triplets::new(space.n_dofs, space.n_dofs);
    for t in 0..mesh.n_triangles() {
        let shapes = TriP2::from_mesh(mesh, t);
        let area = mesh.area(t);
        let c = mesh.centroid(t);
        let evals: Vec<Eval<T>> = (0..6)
            .map(|slot| shapes.eval(&space.basis_local_lagrange(t, slot), c))
            .collect();
        for i in 0..6 {
            let Some(gi) = space.local2global[t][i] else { continue };
            for j in 0..6 {
                let Some(gj) = space.local2global[t][j] else { continue };
                tri.push(gj, gi, evals[i].h.ddot(evals[j].h) * area);
            }
        }
    }
    let rule = quad_edge::<T>(EDGE_DEGREE);
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        let h2 = edge.length * edge.length;
        let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
        let mapped = rule.map_to(pa, pb);
        let mut qpts: Vec<Pt<T>> = mapped.iter().map(|&(p, _)| p).collect();
        qpts.push(pa);
        qpts.push(pb);
        let contribs = edge_contribs(space, e, &qpts, false);
        let nq = mapped.len();
        // Means of the normal-slope jumps and endpoint value jumps.
        let data: Vec<(T, T, T)> = contribs
            .iter()
            .map(|c| {
                let mut mean = T::zero();
                for (q, &(_, wt)) in mapped.iter().enumerate() {
                    mean += wt * c.sign * c.evals[q].g.dot(edge.nu);
                }
                mean /= edge.length;
                (mean, c.sign * c.evals[nq].v, c.sign * c.evals[nq + 1].v)
            })
            .collect();
        for (ia, a) in contribs.iter().enumerate() {
            for (ib, b) in contribs.iter().enumerate() {
                let (ma, va0, va1) = data[ia];
                let (mb, vb0, vb1) = data[ib];
                let val = (va0 * vb0 + va1 * vb1) / h2 + ma * mb;
                tri.push(b.col, a.col, val);
            }
        }
    }
    tri.to_csr()
}

// ---------------------------------------------------------------------------
// Trilinear assembly over basis spaces (for residuals and Jacobians).
// ---------------------------------------------------------------------------

/// `out[j] = Gamma_pw(eta, chi, phi_j)` over the basis of `s_space`.
pub fn nse_gamma_vector<T: Real>(
    mesh: &Triangulation<T>,
    eta: &impl PwField<T>,
    chi: &impl PwField<T>,
    s_space: &dyn BasisSpace<T>,
) -> Vec<T> {
    let rule = quad_triangle::<T>(VOLUME_DEGREE);
    let split = eta.needs_split() || chi.needs_split() || s_space.needs_split();
    let mut out = vec![T::zero(); s_space.n_dofs()];
    for t in 0..mesh.n_triangles() {
        let pw = quad_points(mesh, t, split, &rule);
        let pts: Vec<Pt<T>> = pw.iter().map(|&(p, _)| p).collect();
        let basis = s_space.local_evals(t, &pts);
        for slot in 0..s_space.n_local() {
            let Some(j) = s_space.global_index(t, slot) else { continue };
            let mut s = T::zero();
            for (q, &(p, wt)) in pw.iter().enumerate() {
                let e = eta.eval_on(t, p);
                let c = chi.eval_on(t, p);
                let f = &basis[slot][q];
                s += wt * e.laplacian() * (c.g.y * f.g.x - c.g.x * f.g.y);
            }
            out[j] += s;
        }
    }
    out
}

/// `K[j][i] = Gamma_pw(u, r_i, s_j) + Gamma_pw(r_i, u, s_j)` (rows over
/// `s_space`, columns over `r_space`): the Navier-Stokes Jacobian block on
/// the smoother ranges.
pub fn nse_gamma_jacobian<T: Real>(
    mesh: &Triangulation<T>,
    u: &impl PwField<T>,
    r_space: &dyn BasisSpace<T>,
    s_space: &dyn BasisSpace<T>,
) -> CsrMatrix<T> {
    let rule = quad_triangle::<T>(VOLUME_DEGREE);
    let split = u.needs_split() || r_space.needs_split() || s_space.needs_split();
    let mut tri = Triplets::new(s_space.n_dofs(), r_space.n_dofs());
    for t in 0..mesh.n_triangles() {
        let pw = quad_points(mesh, t, split, &rule);
        let pts: Vec<Pt<T>> = pw.iter().map(|&(p, _)| p).collect();
        let rbasis = r_space.local_evals(t, &pts);
        let sbasis = s_space.local_evals(t, &pts);
        let uevals: Vec<Eval<T>> = pts.iter().map(|&p| u.eval_on(t, p)).collect();
        for ri in 0..r_space.n_local() {
            let Some(i) = r_space.global_index(t, ri) else { continue };
            for sj in 0..s_space.n_local() {
                let Some(j) = s_space.global_index(t, sj) else { continue };
                let mut s = T::zero();
                for (q, &(_, wt)) in pw.iter().enumerate() {
                    let ue = &uevals[q];
                    let re = &rbasis[ri][q];
                    let se = &sbasis[sj][q];
                    s += wt
                        * (ue.laplacian() * (re.g.y * se.g.x - re.g.x * se.g.y)
                            + re.laplacian() * (ue.g.y * se.g.x - ue.g.x * se.g.y));
                }
                tri.push(j, i, s);
            }
        }
    }
    tri.to_csr()
}

/// `out[j] = coeff * sum_T int_T [xi, theta] phi_j` over the basis of
/// `s_space` (von Karman residual blocks with `coeff = -1` resp. `1/2`).
pub fn vke_gamma_vector<T: Real>(
    mesh: &Triangulation<T>,
    xi: &impl PwField<T>,
    theta: &impl PwField<T>,
    s_space: &dyn BasisSpace<T>,
    coeff: T,
) -> Vec<T> {
    let rule = quad_triangle::<T>(VOLUME_DEGREE);
    let split = xi.needs_split() || theta.needs_split() || s_space.needs_split();
    let mut out = vec![T::zero(); s_space.n_dofs()];
    for t in 0..mesh.n_triangles() {
        let pw = quad_points(mesh, t, split, &rule);
        let pts: Vec<Pt<T>> = pw.iter().map(|&(p, _)| p).collect();
        let basis = s_space.local_evals(t, &pts);
        let brackets: Vec<T> = pts
            .iter()
            .map(|&p| vk_bracket(&xi.eval_on(t, p), &theta.eval_on(t, p)))
            .collect();
        for slot in 0..s_space.n_local() {
            let Some(j) = s_space.global_index(t, slot) else { continue };
            let mut s = T::zero();
            for (q, &(_, wt)) in pw.iter().enumerate() {
                s += wt * brackets[q] * basis[slot][q].v;
            }
            out[j] += coeff * s;
        }
    }
    out
}

/// `K[j][i] = coeff * sum_T int_T [w, r_i] s_j` (rows over `s_space`,
/// columns over `r_space`): the von Karman Jacobian blocks.
pub fn vke_gamma_jacobian<T: Real>(
    mesh: &Triangulation<T>,
    w: &impl PwField<T>,
    r_space: &dyn BasisSpace<T>,
    s_space: &dyn BasisSpace<T>,
    coeff: T,
) -> CsrMatrix<T> {
    let rule = quad_triangle::<T>(VOLUME_DEGREE);
    let split = w.needs_split() || r_space.needs_split() || s_space.needs_split();
    let mut tri = Triplets::new(s_space.n_dofs(), r_space.n_dofs());
    for t in 0..mesh.n_triangles() {
        let pw = quad_points(mesh, t, split, &rule);
        let pts: Vec<Pt<T>> = pw.iter().map(|&(p, _)| p).collect();
        let rbasis = r_space.local_evals(t, &pts);
        let sbasis = s_space.local_evals(t, &pts);
        let wevals: Vec<Eval<T>> = pts.iter().map(|&p| w.eval_on(t, p)).collect();
        for ri in 0..r_space.n_local() {
            let Some(i) = r_space.global_index(t, ri) else { continue };
            for sj in 0..s_space.n_local() {
                let Some(j) = s_space.global_index(t, sj) else { continue };
                let mut s = T::zero();
                for (q, &(_, wt)) in pw.iter().enumerate() {
                    s += wt * vk_bracket(&wevals[q], &rbasis[ri][q]) * sbasis[sj][q].v;
                }
                tri.push(j, i, coeff * s);
            }
        }
    }
    tri.to_csr()
}

// ---------------------------------------------------------------------------
// Source terms.
// ---------------------------------------------------------------------------

pub type ScalarFn<T> = Box<dyn Fn(Pt<T>) -> T + Send + Sync>;
pub type VectorFn<T> = Box<dyn Fn(Pt<T>) -> Pt<T> + Send + Sync>;
pub type MatrixFn<T> = Box<dyn Fn(Pt<T>) -> crate::geom::Sym2<T> + Send + Sync>;

/// Right-hand side `F(phi) = int (f0 phi + f1 . grad phi + f2 : D^2 phi) dx
/// + sum_z lambda_z phi(z)`; any component may be absent.
pub struct SourceTerm<T> {
    pub f0: Option<ScalarFn<T>>,
    pub f1: Option<VectorFn<T>>,
    pub f2: Option<MatrixFn<T>>,
    pub point_loads: Vec<(Pt<T>, T)>,
    /// Projection degree for the data oscillations and estimators.
    pub k: usize,
    /// Volume quadrature degree for the `f` integrals.
    pub quad_degree: usize,
}

impl<T: Real> SourceTerm<T> {
    pub fn zero(k: usize) -> Self {
        SourceTerm { f0: None, f1: None, f2: None, point_loads: Vec::new(), k, quad_degree: VOLUME_DEGREE }
    }

    pub fn has_volume_part(&self) -> bool {
        self.f0.is_some() || self.f1.is_some() || self.f2.is_some()
    }

    pub fn eval_f0(&self, p: Pt<T>) -> T {
        self.f0.as_ref().map_or(T::zero(), |f| f(p))
    }
    pub fn eval_f1(&self, p: Pt<T>) -> Pt<T> {
        self.f1.as_ref().map_or(Pt::zero(), |f| f(p))
    }
    pub fn eval_f2(&self, p: Pt<T>) -> crate::geom::Sym2<T> {
        self.f2.as_ref().map_or(crate::geom::Sym2::zero(), |f| f(p))
    }

    /// `F(phi)` for a single piecewise field (quadrature + point values with
    /// the averaged-trace convention).
    pub fn apply<F: PwField<T>>(&self, mesh: &Triangulation<T>, phi: &F) -> T {
        let rule = quad_triangle::<T>(self.quad_degree);
        let mut s = T::zero();
        if self.has_volume_part() {
            for t in 0..mesh.n_triangles() {
                for (p, wt) in quad_points(mesh, t, phi.needs_split(), &rule) {
                    let e = phi.eval_on(t, p);
                    s += wt
                        * (self.eval_f0(p) * e.v
                            + self.eval_f1(p).dot(e.g)
                            + self.eval_f2(p).ddot(e.h));
                }
            }
        }
        for &(z, lambda) in &self.point_loads {
            s += lambda * crate::space::eval_averaged(phi, mesh, z);
        }
        s
    }
}

/// Vector of `F(phi_j)` over the basis of `space`.
pub fn assemble_source_on_basis<T: Real>(
    mesh: &Triangulation<T>,
    f: &SourceTerm<T>,
    space: &dyn BasisSpace<T>,
) -> Vec<T> {
    let mut out = vec![T::zero(); space.n_dofs()];
    if f.has_volume_part() {
        let rule = quad_triangle::<T>(f.quad_degree);
        for t in 0..mesh.n_triangles() {
            let pw = quad_points(mesh, t, space.needs_split(), &rule);
            let pts: Vec<Pt<T>> = pw.iter().map(|&(p, _)| p).collect();
            let basis = space.local_evals(t, &pts);
            let f0: Vec<T> = pts.iter().map(|&p| f.eval_f0(p)).collect();
            let f1: Vec<Pt<T>> = pts.iter().map(|&p| f.eval_f1(p)).collect();
            let f2: Vec<crate::geom::Sym2<T>> = pts.iter().map(|&p| f.eval_f2(p)).collect();
            for slot in 0..space.n_local() {
                let Some(j) = space.global_index(t, slot) else { continue };
                let mut s = T::zero();
                for (q, &(_, wt)) in pw.iter().enumerate() {
                    let e = &basis[slot][q];
                    s += wt * (f0[q] * e.v + f1[q].dot(e.g) + f2[q].ddot(e.h));
                }
                out[j] += s;
            }
        }
    }
    for &(z, lambda) in &f.point_loads {
        let patch = mesh.point_patch(z);
        assert!(!patch.is_empty(), "point load lies outside the domain");
        let npatch = T::c(patch.len() as f64);
        for &t in &patch {
            let basis = space.local_evals(t, &[z]);
            for slot in 0..space.n_local() {
                let Some(j) = space.global_index(t, slot) else { continue };
                out[j] += lambda * basis[slot][0].v / npatch;
            }
        }
    }
    out
}

pub fn edge_rule<T: Real>() -> EdgeRule<T> {
    quad_edge(EDGE_DEGREE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AnalyticField;
    use crate::geom::Sym2;
    use crate::space::{DiscreteFunction, SchemeConfig};
    use rand::prelude::*;
    use std::sync::Arc;

    fn spaces(kind: SchemeKind) -> (Arc<Triangulation<f64>>, Arc<DofMap<f64>>) {
        let mesh = Arc::new(Triangulation::<f64>::lshape().uniform_refine());
        let space = Arc::new(DofMap::new(mesh.clone(), SchemeConfig::new(kind)));
        (mesh, space)
    }

    fn random_fn(space: &Arc<DofMap<f64>>, seed: u64) -> DiscreteFunction<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..space.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DiscreteFunction::from_coeffs(space.clone(), coeffs)
    }

    #[test]
    fn matrix_matches_forms_for_all_schemes() {
        for kind in SchemeKind::ALL {
            let (mesh, space) = spaces(kind);
            let a = assemble_a(&space);
            let u = random_fn(&space, 1);
            let v = random_fn(&space, 2);
            let cfg = &space.config;
            let mut want = if kind == SchemeKind::Dg2 {
                // Laplacian volume form.
                let rule = quad_triangle::<f64>(VOLUME_DEGREE);
                let mut s = 0.0;
                for t in 0..mesh.n_triangles() {
                    for (p, wt) in quad_points(&mesh, t, false, &rule) {
                        s += wt * u.eval_on(t, p).laplacian() * v.eval_on(t, p).laplacian();
                    }
                }
                s
            } else {
                a_pw_form(&*mesh, &u, &v)
            };
            match kind {
                SchemeKind::Morley => {}
                SchemeKind::Wopsip => want += cp_form(&*mesh, &u, &v),
                SchemeKind::C0ip => {
                    want += lifting(&mesh, &space, &u, &v, cfg.theta)
                        + cdg_form(&*mesh, &u, &v, 0.0, cfg.sigma_ip);
                }
                SchemeKind::Dg1 | SchemeKind::Dg2 => {
                    want += lifting(&mesh, &space, &u, &v, cfg.theta)
                        + cdg_form(&*mesh, &u, &v, cfg.sigma1, cfg.sigma2);
                }
            }
            // x^T A y with x = test = v, y = trial = u.
            let got = a.bilinear(&v.coeffs, &u.coeffs);
            assert!(
                (got - want).abs() < 1e-9 * (1.0 + want.abs()),
                "{kind:?}: matrix {got} vs forms {want}"
            );
        }
    }

    /// -theta J(u, v) - J(v, u) evaluated at field level.
    fn lifting(
        mesh: &Triangulation<f64>,
        space: &DofMap<f64>,
        u: &DiscreteFunction<f64>,
        v: &DiscreteFunction<f64>,
        theta: f64,
    ) -> f64 {
        let rule = quad_edge::<f64>(EDGE_DEGREE);
        let dg2 = space.config.kind == SchemeKind::Dg2;
        let mut s = 0.0;
        for e in 0..mesh.n_edges() {
            let edge = &mesh.edges[e];
            let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
            for (p, wt) in rule.map_to(pa, pb) {
                let ju = crate::space::edge_jump(u, mesh, e, p);
                let jv = crate::space::edge_jump(v, mesh, e, p);
                let au = crate::space::edge_average(u, mesh, e, p);
                let av = crate::space::edge_average(v, mesh, e, p);
                let (juv, jvu) = if dg2 {
                    (ju.g.dot(edge.nu) * av.laplacian(), jv.g.dot(edge.nu) * au.laplacian())
                } else {
                    (au.h.mv(edge.nu).dot(jv.g), av.h.mv(edge.nu).dot(ju.g))
                };
                s += wt * (-theta * juv - jvu);
            }
        }
        s
    }

    #[test]
    fn theta_one_matrices_are_symmetric() {
        for kind in SchemeKind::ALL {
            let (_, space) = spaces(kind);
            let a = assemble_a(&space);
            let at = a.transpose();
            let norm = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for r in 0..a.nrows {
                let (cols, vals) = a.row(r);
                for (c, v) in cols.iter().zip(vals) {
                    let (tcols, tvals) = at.row(r);
                    let tv = tcols
                        .iter()
                        .position(|x| x == c)
                        .map(|k| tvals[k])
                        .unwrap_or(0.0);
                    assert!((v - tv).abs() <= 1e-12 * norm, "{kind:?} asymmetric at ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn morley_energy_of_quadratic() {
        // The Morley interpolation of a global quadratic q (here via local
        // dofs, interior ones only) has piecewise Hessian equal to D^2 q on
        // each triangle it is interpolated on; instead verify the quadratic
        // form against direct quadrature for a random Morley function.
        let (mesh, space) = spaces(SchemeKind::Morley);
        let a = assemble_a(&space);
        let u = random_fn(&space, 3);
        let want = a_pw_form(&*mesh, &u, &u);
        let got = a.bilinear(&u.coeffs, &u.coeffs);
        assert!((got - want).abs() < 1e-10 * want.abs());
    }

    #[test]
    fn jh_vanishes_on_morley_and_hgram_matches() {
        let (mesh, space) = spaces(SchemeKind::Morley);
        let u = random_fn(&space, 4);
        assert!(jh_form(&*mesh, &u, &u).abs() < 1e-12);
        // For dG functions the Gram matrix reproduces the form level norm.
        let (mesh, dg) = spaces(SchemeKind::Dg1);
        let g = assemble_h_gram(&dg);
        let v = random_fn(&dg, 5);
        let want = a_pw_form(&*mesh, &v, &v) + jh_form(&*mesh, &v, &v);
        let got = g.bilinear(&v.coeffs, &v.coeffs);
        assert!((got - want).abs() < 1e-9 * want.abs(), "{got} vs {want}");
    }

    #[test]
    fn trilinear_nse_oracle_and_antisymmetry() {
        // Oracle (computed before build): eta = x^2, chi = xy, phi = y^2 on
        // the reference triangle conv{(0,0),(1,0),(0,1)} gives
        // Gamma = int 2 (x * 0 - y * 2y) = -2 int 2 y^2 = -1/3.
        let mesh = Arc::new(Triangulation::<f64>::from_raw(
            vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        ));
        let eta = AnalyticField::new(|p: Pt<f64>| Eval {
            v: p.x * p.x,
            g: Pt::new(2.0 * p.x, 0.0),
            h: Sym2::new(2.0, 0.0, 0.0),
        });
        let chi = AnalyticField::new(|p: Pt<f64>| Eval {
            v: p.x * p.y,
            g: Pt::new(p.y, p.x),
            h: Sym2::new(0.0, 1.0, 0.0),
        });
        let phi = AnalyticField::new(|p: Pt<f64>| Eval {
            v: p.y * p.y,
            g: Pt::new(0.0, 2.0 * p.y),
            h: Sym2::new(0.0, 0.0, 2.0),
        });
        let got = trilinear_nse(&mesh, &eta, &chi, &phi);
        assert!((got - (-1.0 / 3.0)).abs() < 1e-14, "{got}");
        // Antisymmetry in the last two arguments.
        let g1 = trilinear_nse(&mesh, &eta, &chi, &phi);
        let g2 = trilinear_nse(&mesh, &eta, &phi, &chi);
        assert!((g1 + g2).abs() < 1e-14);
        assert!(trilinear_nse(&mesh, &chi, &phi, &phi).abs() < 1e-14);
    }

    #[test]
    fn vk_bracket_oracles() {
        let e1 = Eval {
            v: 0.0,
            g: Pt::zero(),
            h: Sym2::new(1.0, 0.0, 0.0),
        };
        // [x^2/2, y^2/2] = 1: Hessians diag(1,0) and diag(0,1).
        let e2 = Eval { v: 0.0, g: Pt::zero(), h: Sym2::new(0.0, 0.0, 1.0) };
        assert_eq!(vk_bracket(&e1, &e2), 1.0);
        // [xy, xy] = -2.
        let exy = Eval { v: 0.0, g: Pt::zero(), h: Sym2::new(0.0, 1.0, 0.0) };
        assert_eq!(vk_bracket(&exy, &exy), -2.0);
        // Symmetry on random Hessians.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let a = Eval {
                v: 0.0,
                g: Pt::zero(),
                h: Sym2::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()),
            };
            let b = Eval {
                v: 0.0,
                g: Pt::zero(),
                h: Sym2::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()),
            };
            assert!((vk_bracket(&a, &b) - vk_bracket(&b, &a)).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_vector_matches_scalar_form() {
        let (mesh, space) = spaces(SchemeKind::Dg1);
        let u = random_fn(&space, 7);
        let v = random_fn(&space, 8);
        let phi = random_fn(&space, 9);
        let vec = nse_gamma_vector(&mesh, &u, &v, &*space);
        let got: f64 = vec.iter().zip(&phi.coeffs).map(|(a, b)| a * b).sum();
        let want = trilinear_nse(&*mesh, &u, &v, &phi);
        assert!((got - want).abs() < 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn source_point_load_on_morley_vertex_basis() {
        // A unit load at an interior vertex z with smoother Id: the entry of
        // the Morley vertex unknown at z is 1.
        let mesh = Arc::new(Triangulation::<f64>::lshape().uniform_refine());
        let space = Arc::new(DofMap::new(mesh.clone(), SchemeConfig::new(SchemeKind::Morley)));
        let z = (0..mesh.n_vertices())
            .find(|&v| !mesh.vertex_boundary[v])
            .unwrap();
        let mut f = SourceTerm::zero(1);
        f.point_loads.push((mesh.vertices[z], 1.0));
        let vec = assemble_source_on_basis(&mesh, &f, &*space);
        for v in 0..mesh.n_vertices() {
            if let Some(dof) = space.vertex_dof[v] {
                let want = if v == z { 1.0 } else { 0.0 };
                assert!((vec[dof] - want).abs() < 1e-12);
            }
        }
        for e in 0..mesh.n_edges() {
            if let Some(dof) = space.edge_dof[e] {
                assert!(vec[dof].abs() < 1e-12);
            }
        }
    }
}
