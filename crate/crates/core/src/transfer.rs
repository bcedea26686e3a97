//! Interpolation and transfer operators between the discrete spaces:
//! the Morley interpolation `I_M`, the transfer `I_C` onto the C0IP space,
//! matrix representations of the smoothers, and prolongation between
//! refinement levels.

use crate::fields::PwField;
use crate::geom::{Pt, Sym2};
use crate::mesh::Triangulation;
use crate::quadrature::{quad_edge, quad_triangle};
use crate::scalar::Real;
use crate::space::{DiscreteFunction, DofMap, SchemeKind, TriP2};
use crate::sparse::{CsrMatrix, Triplets};
use std::sync::Arc;

/// Smoother entering the trilinear form and the right-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmootherChoice {
    /// No smoothing: the discrete function itself.
    Id,
    /// Morley interpolation of the discrete function.
    Morley,
    /// Companion operator composed with Morley interpolation (conforming).
    Companion,
}

impl SmootherChoice {
    pub const ALL: [SmootherChoice; 3] =
        [SmootherChoice::Id, SmootherChoice::Morley, SmootherChoice::Companion];

    pub fn name(&self) -> &'static str {
        match self {
            SmootherChoice::Id => "id",
            SmootherChoice::Morley => "morley",
            SmootherChoice::Companion => "companion",
        }
    }

    pub fn parse(s: &str) -> Option<SmootherChoice> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }
}

/// Quadrature degree used for the edge means in the Morley interpolation;
/// exact for the piecewise cubics produced by the companion operator.
const EDGE_MEAN_DEGREE: usize = 6;

/// Morley interpolation of an arbitrary piecewise smooth field.
///
/// Interior vertex values are the averages of the one-sided traces, interior
/// edge degrees of freedom the edge means of the averaged normal slope;
/// boundary degrees of freedom vanish.
pub fn morley_interpolate<T: Real, F: PwField<T>>(
    f: &F,
    space: &Arc<DofMap<T>>,
) -> DiscreteFunction<T> {
    assert_eq!(space.kind(), SchemeKind::Morley);
    let mesh = &space.mesh;
    let mut out = DiscreteFunction::zero(space.clone());
    for v in 0..mesh.n_vertices() {
        if let Some(dof) = space.vertex_dof[v] {
            let patch = &mesh.vertex_tris[v];
            let mut s = T::zero();
            for &t in patch {
                s += f.eval_on(t, mesh.vertices[v]).v;
            }
            out.coeffs[dof] = s / T::c(patch.len() as f64);
        }
    }
    let rule = quad_edge::<T>(EDGE_MEAN_DEGREE);
    for e in 0..mesh.n_edges() {
        if let Some(dof) = space.edge_dof[e] {
            let edge = &mesh.edges[e];
            let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
            let mut mean = T::zero();
            for (p, w) in rule.map_to(pa, pb) {
                let mut dn = T::zero();
                let mut count = 0usize;
                for t in edge.tris.iter().flatten() {
                    dn += f.eval_on(*t, p).g.dot(edge.nu);
                    count += 1;
                }
                mean += w * dn / T::c(count as f64);
            }
            out.coeffs[dof] = mean / edge.length;
        }
    }
    out
}

/// Matrix of the Morley interpolation restricted to one of the quadratic
/// scheme spaces: rows are Morley degrees of freedom, columns unknowns of
/// `src`. On the Morley space itself this is the identity.
pub fn morley_matrix<T: Real>(src: &DofMap<T>, dst: &Arc<DofMap<T>>) -> CsrMatrix<T> {
    assert_eq!(dst.kind(), SchemeKind::Morley);
    assert!(Arc::ptr_eq(&src.mesh, &dst.mesh), "spaces must share a mesh");
    let mesh = &dst.mesh;
    let mut tri = Triplets::new(dst.n_dofs, src.n_dofs);
    let rule = quad_edge::<T>(4);
    for t in 0..mesh.n_triangles() {
        let shapes = TriP2::from_mesh(mesh, t);
        let pts = shapes.pts;
        for slot in 0..6 {
            let Some(col) = src.local2global[t][slot] else { continue };
            let local = src.basis_local_lagrange(t, slot);
            // Vertex averages.
            for i in 0..3 {
                let v = mesh.triangles[t][i];
                if let Some(row) = dst.vertex_dof[v] {
                    let npatch = T::c(mesh.vertex_tris[v].len() as f64);
                    let val = shapes.eval(&local, pts[i]).v;
                    tri.push(row, col, val / npatch);
                }
            }
            // Edge means of the averaged normal slope.
            for i in 0..3 {
                let e = mesh.tri_edges[t][i];
                if let Some(row) = dst.edge_dof[e] {
                    let edge = &mesh.edges[e];
                    let nsides = T::c(edge.tris.iter().flatten().count() as f64);
                    let (pa, pb) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
                    let mut mean = T::zero();
                    for (p, w) in rule.map_to(pa, pb) {
                        mean += w * shapes.eval(&local, p).g.dot(edge.nu);
                    }
                    tri.push(row, col, mean / (edge.length * nsides));
                }
            }
        }
    }
    tri.to_csr()
}

/// Transfer of a Morley function onto the C0IP space: vertex values are kept
/// (Morley functions are continuous at vertices), interior edge midpoint
/// values are the two-sided averages, boundary values vanish.
pub fn ic_matrix<T: Real>(morley: &DofMap<T>, c0ip: &Arc<DofMap<T>>) -> CsrMatrix<T> {
    assert_eq!(morley.kind(), SchemeKind::Morley);
    assert_eq!(c0ip.kind(), SchemeKind::C0ip);
    assert!(Arc::ptr_eq(&morley.mesh, &c0ip.mesh), "spaces must share a mesh");
    let mesh = &c0ip.mesh;
    let mut tri = Triplets::new(c0ip.n_dofs, morley.n_dofs);
    let mut done = vec![false; c0ip.n_dofs];
    for t in 0..mesh.n_triangles() {
        let shapes = TriP2::from_mesh(mesh, t);
        for slot in 0..6 {
            let Some(col) = morley.local2global[t][slot] else { continue };
            let local = morley.basis_local_lagrange(t, slot);
            for i in 0..3 {
                // Vertex values: continuous, write from the first triangle
                // that owns the vertex.
                let v = mesh.triangles[t][i];
                if let Some(row) = c0ip.vertex_dof[v] {
                    if !done[row] {
                        let val = shapes.eval(&local, shapes.pts[i]).v;
                        tri.push(row, col, val);
                    }
                }
                // Midpoint averages over the adjacent triangles.
                let e = mesh.tri_edges[t][i];
                if let Some(row) = c0ip.edge_dof[e] {
                    let edge = &mesh.edges[e];
                    let nsides = T::c(edge.tris.iter().flatten().count() as f64);
                    let mid = shapes.pts[(i + 1) % 3].mid(shapes.pts[(i + 2) % 3]);
                    let val = shapes.eval(&local, mid).v;
                    tri.push(row, col, val / nsides);
                }
            }
        }
        // Vertex rows are now complete for the vertices of this triangle.
        for i in 0..3 {
            if let Some(row) = c0ip.vertex_dof[mesh.triangles[t][i]] {
                done[row] = true;
            }
        }
    }
    tri.to_csr()
}

/// A coarse piecewise field viewed on a one-step refinement of its mesh,
/// through the parent map of the fine mesh.
pub struct ProlongedField<'a, T, F> {
    coarse: &'a F,
    parent: &'a [usize],
    _marker: std::marker::PhantomData<T>,
}

impl<'a, T: Real, F: PwField<T>> ProlongedField<'a, T, F> {
    /// The caller asserts that `fine_mesh` descends from the mesh `coarse`
    /// lives on; for discrete functions prefer [`ProlongedField::new`].
    pub fn new_unchecked(coarse: &'a F, fine_mesh: &'a Triangulation<T>) -> Self {
        ProlongedField { coarse, parent: &fine_mesh.parent, _marker: std::marker::PhantomData }
    }
}

impl<'a, T: Real> ProlongedField<'a, T, DiscreteFunction<T>> {
    pub fn new(coarse: &'a DiscreteFunction<T>, fine_mesh: &'a Triangulation<T>) -> Self {
        fine_mesh
            .check_descends_from(&coarse.space.mesh)
            .expect("fine mesh must descend from the coarse mesh");
        Self::new_unchecked(coarse, fine_mesh)
    }
}

impl<'a, T: Real, F: PwField<T>> PwField<T> for ProlongedField<'a, T, F> {
    fn eval_on(&self, t: usize, p: crate::geom::Pt<T>) -> crate::fields::Eval<T> {
        self.coarse.eval_on(self.parent[t], p)
    }
    fn needs_split(&self) -> bool {
        self.coarse.needs_split()
    }
}

/// Embed a Morley function into the scheme space on the same mesh via the
/// transfer `I_h`: the identity for Morley/dG/WOPSIP (Morley functions are
/// piecewise quadratics) and `I_C` for C0IP.
pub fn embed_morley<T: Real>(
    morley_fun: &DiscreteFunction<T>,
    dst: &Arc<DofMap<T>>,
) -> DiscreteFunction<T> {
    assert_eq!(morley_fun.space.kind(), SchemeKind::Morley);
    assert!(Arc::ptr_eq(&morley_fun.space.mesh, &dst.mesh), "spaces must share a mesh");
    match dst.kind() {
        SchemeKind::Morley => morley_fun.clone(),
        SchemeKind::Dg1 | SchemeKind::Dg2 | SchemeKind::Wopsip => {
            let mesh = &dst.mesh;
            let mut coeffs = vec![T::zero(); dst.n_dofs];
            for t in 0..mesh.n_triangles() {
                let local = morley_fun.space.local_lagrange(t, &morley_fun.coeffs);
                for (slot, g) in dst.local2global[t].iter().enumerate() {
                    if let Some(g) = g {
                        coeffs[*g] = local[slot];
                    }
                }
            }
            DiscreteFunction::from_coeffs(dst.clone(), coeffs)
        }
        SchemeKind::C0ip => {
            let m = ic_matrix(&morley_fun.space, dst);
            DiscreteFunction::from_coeffs(dst.clone(), m.matvec(&morley_fun.coeffs))
        }
    }
}

/// Coarse-to-fine prolongation for nested iteration.
///
/// With the companion smoother enabled the initial guess is
/// `I_h J I_M u_coarse`: coarse Morley interpolation, coarse companion lift,
/// then fine Morley interpolation and the transfer `I_h` into the scheme
/// space.  Otherwise dG and WOPSIP use the exact polynomial embedding
/// (piecewise quadratics are nested under bisection) and Morley/C0IP apply
/// the generalized interpolations on the fine mesh directly to the coarse
/// function.
pub fn prolong<T: Real>(
    u_coarse: &DiscreteFunction<T>,
    fine: &Arc<DofMap<T>>,
) -> DiscreteFunction<T> {
    let coarse_space = &u_coarse.space;
    assert_eq!(coarse_space.kind(), fine.kind(), "scheme mismatch in prolongation");
    fine.mesh
        .check_descends_from(&coarse_space.mesh)
        .expect("fine mesh must descend from the coarse mesh");
    let cfg = &fine.config;
    let companion = cfg.smoother_r == SmootherChoice::Companion
        || cfg.smoother_sq == SmootherChoice::Companion;

    let fine_morley_space = || -> Arc<DofMap<T>> {
        if fine.kind() == SchemeKind::Morley {
            fine.clone()
        } else {
            Arc::new(DofMap::new(
                fine.mesh.clone(),
                crate::space::SchemeConfig::new(SchemeKind::Morley),
            ))
        }
    };

    if companion {
        // J I_M on the coarse mesh.
        let cmorley = if coarse_space.kind() == SchemeKind::Morley {
            coarse_space.clone()
        } else {
            Arc::new(DofMap::new(
                coarse_space.mesh.clone(),
                crate::space::SchemeConfig::new(SchemeKind::Morley),
            ))
        };
        let im = morley_interpolate(u_coarse, &cmorley);
        let hct = crate::hct::HctSpace::new(coarse_space.mesh.clone());
        let j = hct.companion_matrix(&cmorley).matvec(&im.coeffs);
        let lift = crate::hct::HctFunction::from_dofs(&hct, &j);
        let pro = ProlongedField::new_unchecked(&lift, &fine.mesh);
        let fm = morley_interpolate(&pro, &fine_morley_space());
        embed_morley(&fm, fine)
    } else {
        match fine.kind() {
            SchemeKind::Dg1 | SchemeKind::Dg2 | SchemeKind::Wopsip => {
                let pro = ProlongedField::new(u_coarse, &fine.mesh);
                let mesh = &fine.mesh;
                let mut coeffs = vec![T::zero(); fine.n_dofs];
                for t in 0..mesh.n_triangles() {
                    // Lagrange nodes of the fine triangle: vertices and edge
                    // midpoints, evaluated one-sided through the parent.
                    let [a, b, c] = mesh.tri_pts(t);
                    let nodes = [a, b, c, b.mid(c), c.mid(a), a.mid(b)];
                    for (slot, g) in fine.local2global[t].iter().enumerate() {
                        if let Some(g) = g {
                            coeffs[*g] = pro.eval_on(t, nodes[slot]).v;
                        }
                    }
                }
                DiscreteFunction::from_coeffs(fine.clone(), coeffs)
            }
            SchemeKind::Morley => {
                let pro = ProlongedField::new(u_coarse, &fine.mesh);
                morley_interpolate(&pro, &fine_morley_space())
            }
            SchemeKind::C0ip => {
                let pro = ProlongedField::new(u_coarse, &fine.mesh);
                let fm = morley_interpolate(&pro, &fine_morley_space());
                embed_morley(&fm, fine)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Piecewise L2 projection onto P_0 / P_1.
// ---------------------------------------------------------------------------

/// Target values of the piecewise `L^2` projection: scalars, vectors and
/// symmetric matrices, projected componentwise.
pub trait ProjValue<T: Real>: Copy {
    fn zero() -> Self;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn scale(self, s: T) -> Self;
    /// Inner product inducing the `L^2` pairing (Frobenius for matrices).
    fn inner(self, o: Self) -> T;
}

impl<T: Real> ProjValue<T> for T {
    fn zero() -> Self {
        T::zero()
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn scale(self, s: T) -> Self {
        self * s
    }
    fn inner(self, o: Self) -> T {
        self * o
    }
}

impl<T: Real> ProjValue<T> for Pt<T> {
    fn zero() -> Self {
        Pt::zero()
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn scale(self, s: T) -> Self {
        Pt::scale(self, s)
    }
    fn inner(self, o: Self) -> T {
        self.dot(o)
    }
}

impl<T: Real> ProjValue<T> for Sym2<T> {
    fn zero() -> Self {
        Sym2::zero()
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn scale(self, s: T) -> Self {
        Sym2::scale(self, s)
    }
    fn inner(self, o: Self) -> T {
        self.ddot(o)
    }
}

/// A piecewise polynomial of degree at most one, stored per triangle as
/// `c0 + cx (x - mx) + cy (y - my)` about the centroid `(mx, my)`; degree
/// zero keeps `cx = cy = 0`. The value type `V` is a scalar, vector or
/// symmetric matrix.
#[derive(Clone, Debug)]
pub struct PkField<T, V> {
    pub k: usize,
    centroids: Vec<Pt<T>>,
    /// `[c0, cx, cy]` per triangle.
    pub coeffs: Vec<[V; 3]>,
}

impl<T: Real, V: ProjValue<T>> PkField<T, V> {
    /// The zero field (used when a data component is absent).
    pub fn zeros(mesh: &Triangulation<T>, k: usize) -> Self {
        PkField {
            k,
            centroids: (0..mesh.n_triangles()).map(|t| mesh.centroid(t)).collect(),
            coeffs: vec![[V::zero(); 3]; mesh.n_triangles()],
        }
    }

    pub fn eval(&self, t: usize, p: Pt<T>) -> V {
        let c = self.centroids[t];
        let [c0, cx, cy] = self.coeffs[t];
        c0.add(cx.scale(p.x - c.x)).add(cy.scale(p.y - c.y))
    }
}

impl<T: Real> PkField<T, Pt<T>> {
    /// Exact piecewise divergence (a constant per triangle).
    pub fn div(&self, t: usize) -> T {
        self.coeffs[t][1].x + self.coeffs[t][2].y
    }
}

impl<T: Real> PkField<T, Sym2<T>> {
    /// Exact piecewise row-wise divergence (a constant vector per triangle).
    pub fn div(&self, t: usize) -> Pt<T> {
        let [_, cx, cy] = self.coeffs[t];
        Pt::new(cx.xx + cy.xy, cx.xy + cy.yy)
    }

    /// Exact directional derivative along the unit vector `d` (a constant
    /// matrix per triangle).
    pub fn dir_deriv(&self, t: usize, d: Pt<T>) -> Sym2<T> {
        let [_, cx, cy] = self.coeffs[t];
        cx.scale(d.x) + cy.scale(d.y)
    }
}

/// Piecewise `L^2`-best approximation of `g` by polynomials of total degree
/// `k in {0, 1}`, componentwise in the value type. The moments of `g` are
/// computed with a volume rule of the given `degree`.
pub fn l2_project<T: Real, V: ProjValue<T>>(
    mesh: &Triangulation<T>,
    g: impl Fn(Pt<T>) -> V,
    k: usize,
    degree: usize,
) -> PkField<T, V> {
    assert!(k <= 1, "l2_project supports k in {{0, 1}}");
    let rule = quad_triangle::<T>(degree);
    let mut out = PkField::zeros(mesh, k);
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.tri_pts(t);
        let m = out.centroids[t];
        // Moment matrix of the basis {1, x - mx, y - my}: the constant is
        // L2-orthogonal to the centered linear terms, so only a 2x2 block
        // couples.
        let mut area = T::zero();
        let (mut ixx, mut ixy, mut iyy) = (T::zero(), T::zero(), T::zero());
        let mut r0 = V::zero();
        let (mut rx, mut ry) = (V::zero(), V::zero());
        for (p, w) in rule.map_to(a, b, c) {
            let (dx, dy) = (p.x - m.x, p.y - m.y);
            let gv = g(p);
            area += w;
            ixx += w * dx * dx;
            ixy += w * dx * dy;
            iyy += w * dy * dy;
            r0 = r0.add(gv.scale(w));
            rx = rx.add(gv.scale(w * dx));
            ry = ry.add(gv.scale(w * dy));
        }
        out.coeffs[t][0] = r0.scale(T::one() / area);
        if k == 1 {
            let det = ixx * iyy - ixy * ixy;
            out.coeffs[t][1] = rx.scale(iyy / det).add(ry.scale(-ixy / det));
            out.coeffs[t][2] = ry.scale(ixx / det).add(rx.scale(-ixy / det));
        }
    }
    out
}
