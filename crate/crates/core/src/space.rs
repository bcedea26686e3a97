//! Discrete spaces for the five lowest-order quadratic schemes.
//!
//! All spaces are piecewise quadratic; per triangle every function is stored
//! through its six local Lagrange coefficients (values at the three vertices
//! and the three edge midpoints). The Morley space additionally carries a
//! per-triangle transform from its natural degrees of freedom (vertex values
//! and mean normal slopes across edges) to Lagrange coefficients.

use crate::fields::{Eval, PwField};
use crate::geom::{self, Pt, Sym2};
use crate::mesh::Triangulation;
use crate::scalar::Real;
use crate::smalldense::DMat;
use crate::transfer::SmootherChoice;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    /// Nonconforming Morley element (no penalty, no lifting terms).
    Morley,
    /// Symmetric/nonsymmetric interior penalty dG with the full Hessian.
    Dg1,
    /// dG variant with the piecewise Laplacian bilinear form.
    Dg2,
    /// C0 interior penalty on the continuous P2 space.
    C0ip,
    /// Weakly over-penalized symmetric interior penalty.
    Wopsip,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] =
        [SchemeKind::Morley, SchemeKind::Dg1, SchemeKind::Dg2, SchemeKind::C0ip, SchemeKind::Wopsip];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Morley => "morley",
            SchemeKind::Dg1 => "dg1",
            SchemeKind::Dg2 => "dg2",
            SchemeKind::C0ip => "c0ip",
            SchemeKind::Wopsip => "wopsip",
        }
    }

    pub fn parse(s: &str) -> Option<SchemeKind> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }
}

/// Scheme parameters: penalty weights, the symmetrization parameter of the
/// lifting terms, and the smoother choices entering the nonlinearity and the
/// right-hand side.
#[derive(Clone, Copy, Debug)]
pub struct SchemeConfig<T> {
    pub kind: SchemeKind,
    /// Symmetrization parameter of the lifting terms (1 = symmetric).
    pub theta: T,
    /// Penalty weight on function jumps (dG schemes).
    pub sigma1: T,
    /// Penalty weight on normal-derivative jumps (dG schemes).
    pub sigma2: T,
    /// Penalty weight for the C0 interior penalty scheme.
    pub sigma_ip: T,
    /// Smoother R applied to the discrete state inside the trilinear form.
    pub smoother_r: SmootherChoice,
    /// Smoother S = Q applied to test functions and the right-hand side.
    pub smoother_sq: SmootherChoice,
}

impl<T: Real> SchemeConfig<T> {
    pub fn new(kind: SchemeKind) -> Self {
        SchemeConfig {
            kind,
            theta: T::one(),
            sigma1: T::c(20.0),
            sigma2: T::c(20.0),
            sigma_ip: T::c(20.0),
            smoother_r: SmootherChoice::Companion,
            smoother_sq: SmootherChoice::Companion,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sigma1 <= T::zero() || self.sigma2 <= T::zero() || self.sigma_ip <= T::zero() {
            return Err("penalty parameters must be positive".into());
        }
        if self.theta < -T::one() || self.theta > T::one() {
            return Err("theta must lie in [-1, 1]".into());
        }
        Ok(())
    }
}

/// Quadratic shape functions on one triangle.
///
/// Local numbering: shapes 0..3 are the vertex functions `l_i (2 l_i - 1)`,
/// shapes 3..6 the edge-midpoint bubbles `4 l_{i+1} l_{i+2}` where shape
/// `3 + i` belongs to the midpoint of the edge opposite vertex `i`.
pub struct TriP2<T> {
    pub pts: [Pt<T>; 3],
    grads: [Pt<T>; 3],
}

impl<T: Real> TriP2<T> {
    pub fn new(pts: [Pt<T>; 3]) -> Self {
        let d = geom::signed_area2(pts[0], pts[1], pts[2]);
        let g = |a: Pt<T>, b: Pt<T>| (a - b).rot_cw().scale(T::one() / d);
        TriP2 { pts, grads: [g(pts[1], pts[2]), g(pts[2], pts[0]), g(pts[0], pts[1])] }
    }

    pub fn from_mesh(mesh: &Triangulation<T>, t: usize) -> Self {
        Self::new(mesh.tri_pts(t))
    }

    pub fn barycentric(&self, p: Pt<T>) -> [T; 3] {
        geom::barycentric(self.pts[0], self.pts[1], self.pts[2], p)
    }

    /// Values, gradients and Hessians of the six shape functions at `p`.
    pub fn shapes(&self, p: Pt<T>) -> [Eval<T>; 6] {
        let l = self.barycentric(p);
        let g = &self.grads;
        let mut out = [Eval::zero(); 6];
        for i in 0..3 {
            let li = l[i];
            let gi = g[i];
            out[i] = Eval {
                v: li * (T::two() * li - T::one()),
                g: gi.scale(T::c(4.0) * li - T::one()),
                h: Sym2::new(
                    T::c(4.0) * gi.x * gi.x,
                    T::c(4.0) * gi.x * gi.y,
                    T::c(4.0) * gi.y * gi.y,
                ),
            };
            let (a, b) = ((i + 1) % 3, (i + 2) % 3);
            let (la, lb) = (l[a], l[b]);
            let (ga, gb) = (g[a], g[b]);
            out[3 + i] = Eval {
                v: T::c(4.0) * la * lb,
                g: (ga.scale(lb) + gb.scale(la)).scale(T::c(4.0)),
                h: Sym2::new(
                    T::c(8.0) * ga.x * gb.x,
                    T::c(4.0) * (ga.x * gb.y + gb.x * ga.y),
                    T::c(8.0) * ga.y * gb.y,
                ),
            };
        }
        out
    }

    /// Evaluate the quadratic with the given local Lagrange coefficients.
    pub fn eval(&self, coeffs: &[T; 6], p: Pt<T>) -> Eval<T> {
        let shapes = self.shapes(p);
        let mut out = Eval::zero();
        for i in 0..6 {
            let c = coeffs[i];
            out.v += c * shapes[i].v;
            out.g = out.g + shapes[i].g.scale(c);
            out.h = out.h + shapes[i].h.scale(c);
        }
        out
    }
}

/// Map between local degrees of freedom and global unknowns for one scheme.
///
/// Local slots follow the `TriP2` numbering. For the Morley space the local
/// slots are the Morley degrees of freedom (vertex values, mean normal
/// slopes), and `morley_transform` converts them to Lagrange coefficients.
/// Boundary degrees of freedom of the Morley and C0IP spaces are eliminated
/// (`None`), realizing the homogeneous boundary conditions; the dG and
/// WOPSIP schemes keep all unknowns and enforce boundary conditions weakly
/// through their penalty terms.
#[derive(Debug)]
pub struct DofMap<T> {
    pub mesh: Arc<Triangulation<T>>,
    pub config: SchemeConfig<T>,
    pub n_dofs: usize,
    pub local2global: Vec<[Option<usize>; 6]>,
    /// Global unknown attached to each vertex (Morley, C0IP).
    pub vertex_dof: Vec<Option<usize>>,
    /// Global unknown attached to each edge (Morley: normal slope; C0IP:
    /// midpoint value).
    pub edge_dof: Vec<Option<usize>>,
    /// Per triangle, Lagrange coefficients = transform * local Morley dofs.
    morley_transform: Option<Vec<[T; 36]>>,
}

impl<T: Real> DofMap<T> {
    pub fn new(mesh: Arc<Triangulation<T>>, config: SchemeConfig<T>) -> Self {
        config.validate().expect("invalid scheme configuration");
        match config.kind {
            SchemeKind::Morley => Self::build_shared(mesh, config, true),
            SchemeKind::C0ip => Self::build_shared(mesh, config, false),
            _ => Self::build_dg(mesh, config),
        }
    }

    fn build_dg(mesh: Arc<Triangulation<T>>, config: SchemeConfig<T>) -> Self {
        let nt = mesh.n_triangles();
        let local2global = (0..nt)
            .map(|t| {
                let mut row = [None; 6];
                for (i, slot) in row.iter_mut().enumerate() {
                    *slot = Some(6 * t + i);
                }
                row
            })
            .collect();
        DofMap {
            vertex_dof: vec![None; mesh.n_vertices()],
            edge_dof: vec![None; mesh.n_edges()],
            mesh,
            config,
            n_dofs: 6 * nt,
            local2global,
            morley_transform: None,
        }
    }

    fn build_shared(mesh: Arc<Triangulation<T>>, config: SchemeConfig<T>, morley: bool) -> Self {
        let mut vertex_dof = vec![None; mesh.n_vertices()];
        let mut edge_dof = vec![None; mesh.n_edges()];
        let mut n = 0usize;
        for v in 0..mesh.n_vertices() {
            if !mesh.vertex_boundary[v] {
                vertex_dof[v] = Some(n);
                n += 1;
            }
        }
        for e in 0..mesh.n_edges() {
            if !mesh.edges[e].boundary {
                edge_dof[e] = Some(n);
                n += 1;
            }
        }
        let local2global = (0..mesh.n_triangles())
            .map(|t| {
                let tri = mesh.triangles[t];
                let mut row = [None; 6];
                for i in 0..3 {
                    row[i] = vertex_dof[tri[i]];
                    row[3 + i] = edge_dof[mesh.tri_edges[t][i]];
                }
                row
            })
            .collect();
        let morley_transform = morley.then(|| {
            (0..mesh.n_triangles())
                .map(|t| Self::morley_to_lagrange(&mesh, t))
                .collect()
        });
        DofMap { mesh, config, n_dofs: n, local2global, vertex_dof, edge_dof, morley_transform }
    }

    /// 6x6 transform from Morley degrees of freedom (values at vertices,
    /// mean normal slope across each opposite edge with the global edge
    /// normal) to Lagrange coefficients, via inversion of the local
    /// functional matrix.
    fn morley_to_lagrange(mesh: &Triangulation<T>, t: usize) -> [T; 36] {
        let tri = TriP2::from_mesh(mesh, t);
        let mut n = DMat::<T>::zeros(6, 6);
        // Vertex value functionals.
        for j in 0..3 {
            let shapes = tri.shapes(tri.pts[j]);
            for i in 0..6 {
                n[(j, i)] = shapes[i].v;
            }
        }
        // Mean normal slope across edge j (opposite vertex j); for a
        // quadratic this is the midpoint value of the linear normal slope.
        for j in 0..3 {
            let e = mesh.tri_edges[t][j];
            let nu = mesh.edges[e].nu;
            let mid = tri.pts[(j + 1) % 3].mid(tri.pts[(j + 2) % 3]);
            let shapes = tri.shapes(mid);
            for i in 0..6 {
                n[(3 + j, i)] = shapes[i].g.dot(nu);
            }
        }
        let inv = n.inverse();
        let mut out = [T::zero(); 36];
        for r in 0..6 {
            for c in 0..6 {
                out[6 * r + c] = inv[(r, c)];
            }
        }
        out
    }

    pub fn kind(&self) -> SchemeKind {
        self.config.kind
    }

    pub fn is_morley(&self) -> bool {
        self.config.kind == SchemeKind::Morley
    }

    /// Gather the global coefficient vector into local *Lagrange*
    /// coefficients on triangle `t` (eliminated slots read as zero).
    pub fn local_lagrange(&self, t: usize, coeffs: &[T]) -> [T; 6] {
        let mut local = [T::zero(); 6];
        for (i, slot) in self.local2global[t].iter().enumerate() {
            if let Some(g) = slot {
                local[i] = coeffs[*g];
            }
        }
        match &self.morley_transform {
            None => local,
            Some(tr) => {
                let m = &tr[t];
                let mut out = [T::zero(); 6];
                for r in 0..6 {
                    let mut s = T::zero();
                    for c in 0..6 {
                        s += m[6 * r + c] * local[c];
                    }
                    out[r] = s;
                }
                out
            }
        }
    }

    /// Local Lagrange coefficients of a single global basis function.
    pub fn basis_local_lagrange(&self, t: usize, local_slot: usize) -> [T; 6] {
        let mut local = [T::zero(); 6];
        local[local_slot] = T::one();
        match &self.morley_transform {
            None => local,
            Some(tr) => {
                let m = &tr[t];
                let mut out = [T::zero(); 6];
                for r in 0..6 {
                    out[r] = m[6 * r + local_slot];
                }
                out
            }
        }
    }
}

/// A finite element function: coefficients over a `DofMap`.
#[derive(Clone, Debug)]
pub struct DiscreteFunction<T> {
    pub space: Arc<DofMap<T>>,
    pub coeffs: Vec<T>,
}

impl<T: Real> DiscreteFunction<T> {
    pub fn zero(space: Arc<DofMap<T>>) -> Self {
        let n = space.n_dofs;
        DiscreteFunction { space, coeffs: vec![T::zero(); n] }
    }

    pub fn from_coeffs(space: Arc<DofMap<T>>, coeffs: Vec<T>) -> Self {
        assert_eq!(coeffs.len(), space.n_dofs);
        DiscreteFunction { space, coeffs }
    }
}

impl<T: Real> PwField<T> for DiscreteFunction<T> {
    fn eval_on(&self, t: usize, p: Pt<T>) -> Eval<T> {
        let local = self.space.local_lagrange(t, &self.coeffs);
        TriP2::from_mesh(&self.space.mesh, t).eval(&local, p)
    }
}

/// Jump of a field across edge `e` at point `p`: trace from the first
/// adjacent triangle minus trace from the second; on boundary edges the jump
/// is the trace itself.
pub fn edge_jump<T: Real, F: PwField<T>>(
    f: &F,
    mesh: &Triangulation<T>,
    e: usize,
    p: Pt<T>,
) -> Eval<T> {
    let edge = &mesh.edges[e];
    let plus = f.eval_on(edge.tris[0].unwrap(), p);
    match edge.tris[1] {
        None => plus,
        Some(tm) => {
            let minus = f.eval_on(tm, p);
            Eval { v: plus.v - minus.v, g: plus.g - minus.g, h: plus.h - minus.h }
        }
    }
}

/// Average of a field across edge `e` at `p`; the trace itself on boundary
/// edges.
pub fn edge_average<T: Real, F: PwField<T>>(
    f: &F,
    mesh: &Triangulation<T>,
    e: usize,
    p: Pt<T>,
) -> Eval<T> {
    let edge = &mesh.edges[e];
    let plus = f.eval_on(edge.tris[0].unwrap(), p);
    match edge.tris[1] {
        None => plus,
        Some(tm) => {
            let minus = f.eval_on(tm, p);
            Eval {
                v: (plus.v + minus.v) * T::half(),
                g: (plus.g + minus.g).scale(T::half()),
                h: (plus.h + minus.h).scale(T::half()),
            }
        }
    }
}

/// Point evaluation of a possibly discontinuous field: the average over all
/// triangles whose closure contains `p` (a single value inside a triangle,
/// the two-sided average on an edge, the vertex average at a vertex).
pub fn eval_averaged<T: Real, F: PwField<T>>(
    f: &F,
    mesh: &Triangulation<T>,
    p: Pt<T>,
) -> T {
    let patch = mesh.point_patch(p);
    assert!(!patch.is_empty(), "point lies outside the triangulation");
    let mut s = T::zero();
    for &t in &patch {
        s += f.eval_on(t, p).v;
    }
    s / T::c(patch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Triangulation;

    fn quadratic(p: Pt<f64>) -> Eval<f64> {
        // q = 1 + 2x + 3y + x^2 - xy + 2y^2
        Eval {
            v: 1.0 + 2.0 * p.x + 3.0 * p.y + p.x * p.x - p.x * p.y + 2.0 * p.y * p.y,
            g: Pt::new(2.0 + 2.0 * p.x - p.y, 3.0 - p.x + 4.0 * p.y),
            h: Sym2::new(2.0, -1.0, 4.0),
        }
    }

    #[test]
    fn p2_reproduces_quadratics() {
        let mesh = Triangulation::<f64>::lshape();
        for t in 0..mesh.n_triangles() {
            let tri = TriP2::from_mesh(&mesh, t);
            let mut coeffs = [0.0; 6];
            for i in 0..3 {
                coeffs[i] = quadratic(tri.pts[i]).v;
                coeffs[3 + i] = quadratic(tri.pts[(i + 1) % 3].mid(tri.pts[(i + 2) % 3])).v;
            }
            let p = tri.pts[0].scale(0.2) + tri.pts[1].scale(0.3) + tri.pts[2].scale(0.5);
            let got = tri.eval(&coeffs, p);
            let want = quadratic(p);
            assert!((got.v - want.v).abs() < 1e-12);
            assert!((got.g - want.g).norm() < 1e-12);
            assert!((got.h.xx - want.h.xx).abs() < 1e-12);
            assert!((got.h.xy - want.h.xy).abs() < 1e-12);
            assert!((got.h.yy - want.h.yy).abs() < 1e-12);
        }
    }

    #[test]
    fn dof_counts_on_initial_lshape() {
        let mesh = Arc::new(Triangulation::<f64>::lshape());
        let morley = DofMap::new(mesh.clone(), SchemeConfig::new(SchemeKind::Morley));
        // No interior vertices, five interior edges.
        assert_eq!(morley.n_dofs, 5);
        let c0ip = DofMap::new(mesh.clone(), SchemeConfig::new(SchemeKind::C0ip));
        assert_eq!(c0ip.n_dofs, 5);
        let dg = DofMap::new(mesh.clone(), SchemeConfig::new(SchemeKind::Dg1));
        assert_eq!(dg.n_dofs, 36);
    }

    #[test]
    fn morley_local_duality() {
        let mesh = Arc::new(Triangulation::<f64>::lshape().uniform_refine());
        let space = DofMap::new(mesh.clone(), SchemeConfig::new(SchemeKind::Morley));
        for t in [0usize, 5, 11] {
            let tri = TriP2::from_mesh(&mesh, t);
            for slot in 0..6 {
                let coeffs = space.basis_local_lagrange(t, slot);
                // Vertex values.
                for j in 0..3 {
                    let v = tri.eval(&coeffs, tri.pts[j]).v;
                    let expect = if slot == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-12, "t {t} slot {slot} vertex {j}");
                }
                // Midpoint normal slopes (equal to the edge means).
                for j in 0..3 {
                    let e = mesh.tri_edges[t][j];
                    let nu = mesh.edges[e].nu;
                    let mid = tri.pts[(j + 1) % 3].mid(tri.pts[(j + 2) % 3]);
                    let dn = tri.eval(&coeffs, mid).g.dot(nu);
                    let expect = if slot == 3 + j { 1.0 } else { 0.0 };
                    assert!((dn - expect).abs() < 1e-12, "t {t} slot {slot} edge {j}");
                }
            }
        }
    }

    #[test]
    fn morley_interelement_continuity() {
        use rand::prelude::*;
        let mesh = Arc::new(Triangulation::<f64>::lshape().uniform_refine());
        let space = Arc::new(DofMap::new(mesh.clone(), SchemeConfig::new(SchemeKind::Morley)));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<f64> = (0..space.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = DiscreteFunction::from_coeffs(space.clone(), coeffs);
        for e in 0..mesh.n_edges() {
            let edge = &mesh.edges[e];
            // Vertex values are continuous (zero jump at edge endpoints).
            for &v in &edge.v {
                let p = mesh.vertices[v];
                let j = edge_jump(&f, &mesh, e, p);
                if !edge.boundary {
                    assert!(j.v.abs() < 1e-12);
                } else {
                    // Boundary values vanish by construction.
                    assert!(j.v.abs() < 1e-12);
                }
            }
            // The mean normal slope is continuous across interior edges and
            // vanishes on boundary edges; for quadratics it equals the
            // midpoint value.
            let mid = mesh.vertices[edge.v[0]].mid(mesh.vertices[edge.v[1]]);
            let jn = edge_jump(&f, &mesh, e, mid).g.dot(edge.nu);
            assert!(jn.abs() < 1e-12, "edge {e}");
        }
    }

    #[test]
    fn averaged_point_evaluation() {
        let mesh = Arc::new(Triangulation::<f64>::lshape());
        let space = Arc::new(DofMap::new(mesh.clone(), SchemeConfig::new(SchemeKind::Dg1)));
        let mut f = DiscreteFunction::zero(space.clone());
        // Constant 1 on triangle 0, constant 0 elsewhere.
        for i in 0..6 {
            f.coeffs[i] = 1.0;
        }
        // Interior point of triangle 0.
        let c = mesh.centroid(0);
        assert!((eval_averaged(&f, &mesh, c) - 1.0).abs() < 1e-14);
        // Point on the shared diagonal edge between triangles 0 and 1.
        let z = Pt::new(-1.0 / 6.0, -1.0 / 6.0);
        assert!((eval_averaged(&f, &mesh, z) - 0.5).abs() < 1e-14);
    }
}
