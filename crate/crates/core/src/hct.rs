//! The cubic Hsieh-Clough-Tocher (HCT) macro element and the companion
//! operator `J` lifting Morley functions into `H^2_0`.
//!
//! Each triangle is split into three subtriangles at the centroid; on each
//! subtriangle the function is a cubic, glued with C1 continuity across the
//! internal interfaces. The twelve local degrees of freedom are the values
//! and gradients at the three vertices and the normal slopes at the three
//! edge midpoints. The companion of a Morley function keeps its vertex
//! values, averages its one-sided gradients at the vertices, and picks the
//! midpoint normal slopes so that the edge means of the normal derivative
//! are preserved exactly; consequently `I_M (J v) = v` for every Morley
//! function `v`.

use crate::fields::{Eval, PwField};
use crate::geom::{Pt, Sym2};
use crate::mesh::Triangulation;
use crate::scalar::Real;
use crate::smalldense::DMat;
use crate::space::{DofMap, SchemeKind, TriP2};
use crate::sparse::{CsrMatrix, Triplets};
use std::sync::Arc;

/// Reference vertices of the macro element.
fn ref_vertices<T: Real>() -> [Pt<T>; 3] {
    [Pt::new(T::zero(), T::zero()), Pt::new(T::one(), T::zero()), Pt::new(T::zero(), T::one())]
}

fn ref_centroid<T: Real>() -> Pt<T> {
    let third = T::one() / T::c(3.0);
    Pt::new(third, third)
}

/// Monomial basis 1, x, y, x^2, xy, y^2, x^3, x^2 y, x y^2, y^3.
fn mono_val<T: Real>(p: Pt<T>) -> [T; 10] {
    let (x, y) = (p.x, p.y);
    [T::one(), x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y]
}

fn mono_grad<T: Real>(p: Pt<T>) -> [Pt<T>; 10] {
    let (x, y) = (p.x, p.y);
    let z = T::zero();
    let c2 = T::two();
    let c3 = T::c(3.0);
    [
        Pt::new(z, z),
        Pt::new(T::one(), z),
        Pt::new(z, T::one()),
        Pt::new(c2 * x, z),
        Pt::new(y, x),
        Pt::new(z, c2 * y),
        Pt::new(c3 * x * x, z),
        Pt::new(c2 * x * y, x * x),
        Pt::new(y * y, c2 * x * y),
        Pt::new(z, c3 * y * y),
    ]
}

fn mono_hess<T: Real>(p: Pt<T>) -> [Sym2<T>; 10] {
    let (x, y) = (p.x, p.y);
    let z = T::zero();
    let c2 = T::two();
    let c6 = T::c(6.0);
    [
        Sym2::zero(),
        Sym2::zero(),
        Sym2::zero(),
        Sym2::new(c2, z, z),
        Sym2::new(z, T::one(), z),
        Sym2::new(z, z, c2),
        Sym2::new(c6 * x, z, z),
        Sym2::new(c2 * y, c2 * x, z),
        Sym2::new(z, c2 * y, c2 * x),
        Sym2::new(z, z, c6 * y),
    ]
}

/// Index of the reference subtriangle `[V_k, V_{k+1}, G]` whose closure
/// contains the reference point (the one it lies deepest inside).
fn ref_subtriangle<T: Real>(p: Pt<T>) -> usize {
    let v = ref_vertices::<T>();
    let g = ref_centroid::<T>();
    let mut best = 0;
    let mut best_min = -T::infinity();
    for k in 0..3 {
        let l = crate::geom::barycentric(v[k], v[(k + 1) % 3], g, p);
        let m = l[0].min(l[1]).min(l[2]);
        if m > best_min {
            best_min = m;
            best = k;
        }
    }
    best
}

/// Geometry-independent data of the macro element: a basis of the C1 glue
/// space (dimension 12) and its functional values at the reference nodes.
#[derive(Debug)]
pub struct ReferenceHct<T> {
    /// 30 x 12: columns are piecewise cubics (10 monomial coefficients per
    /// subtriangle) spanning the C1 macro space.
    pub kernel: DMat<T>,
    /// Values of the 12 kernel functions at the three vertices (3 x 12).
    vert_val: DMat<T>,
    /// Reference gradients of the kernel functions at the vertices.
    vert_gx: DMat<T>,
    vert_gy: DMat<T>,
    /// Reference gradients at the three edge midpoints (midpoint `k`
    /// opposite vertex `k`).
    mid_gx: DMat<T>,
    mid_gy: DMat<T>,
}

impl<T: Real> ReferenceHct<T> {
    pub fn build() -> Self {
        let v = ref_vertices::<T>();
        let g = ref_centroid::<T>();
        // C1 continuity across the interfaces [G, V_j], between subtriangle
        // j-1 (block left) and subtriangle j (block right): the cubic value
        // difference vanishes at four points of the segment, the transversal
        // derivative difference (a quadratic) at three.
        let mut c = DMat::<T>::zeros(21, 30);
        let mut row = 0;
        for j in 0..3 {
            let left = 10 * ((j + 2) % 3);
            let right = 10 * j;
            let dir = v[j] - g;
            let w = dir.rot_cw();
            for (n, den) in [(4usize, 3.0), (3usize, 6.0)] {
                for s in 0..n {
                    // Value points at t = s/3; derivative points at
                    // t = (2s+1)/6, strictly inside the segment.
                    let t = if n == 4 {
                        T::c(s as f64 / den)
                    } else {
                        T::c((2 * s + 1) as f64 / den)
                    };
                    let p = g + dir.scale(t);
                    if n == 4 {
                        let m = mono_val(p);
                        for i in 0..10 {
                            c[(row, left + i)] = m[i];
                            c[(row, right + i)] = -m[i];
                        }
                    } else {
                        let m = mono_grad(p);
                        for i in 0..10 {
                            c[(row, left + i)] = m[i].dot(w);
                            c[(row, right + i)] = -m[i].dot(w);
                        }
                    }
                    row += 1;
                }
            }
        }
        assert_eq!(row, 21);
        let kernel = c.kernel(T::c(1e-9)).orthonormalize_cols();
        assert_eq!(kernel.ncols, 12, "HCT glue space must have dimension 12");

        let eval_block = |p: Pt<T>, k: usize| {
            // Value and gradient of each kernel column on subtriangle k.
            let mv = mono_val(p);
            let mg = mono_grad(p);
            let mut val = vec![T::zero(); 12];
            let mut gx = vec![T::zero(); 12];
            let mut gy = vec![T::zero(); 12];
            for i in 0..12 {
                for m in 0..10 {
                    let coef = kernel[(10 * k + m, i)];
                    val[i] += coef * mv[m];
                    gx[i] += coef * mg[m].x;
                    gy[i] += coef * mg[m].y;
                }
            }
            (val, gx, gy)
        };
        let mut vert_val = DMat::zeros(3, 12);
        let mut vert_gx = DMat::zeros(3, 12);
        let mut vert_gy = DMat::zeros(3, 12);
        let mut mid_gx = DMat::zeros(3, 12);
        let mut mid_gy = DMat::zeros(3, 12);
        for k in 0..3 {
            // Vertex V_k lies in subtriangle k; value and gradient are
            // continuous there, so any adjacent subtriangle would do.
            let (val, gx, gy) = eval_block(v[k], k);
            for i in 0..12 {
                vert_val[(k, i)] = val[i];
                vert_gx[(k, i)] = gx[i];
                vert_gy[(k, i)] = gy[i];
            }
            // Midpoint of the edge opposite V_k lies in subtriangle k+1.
            let mid = v[(k + 1) % 3].mid(v[(k + 2) % 3]);
            let (_, gx, gy) = eval_block(mid, (k + 1) % 3);
            for i in 0..12 {
                mid_gx[(k, i)] = gx[i];
                mid_gy[(k, i)] = gy[i];
            }
        }
        ReferenceHct { kernel, vert_val, vert_gx, vert_gy, mid_gx, mid_gy }
    }
}

/// Inverse Jacobian of the affine map from the reference triangle onto
/// `pts`, as rows `[i00 i01; i10 i11]` with `x_ref = Binv (p - pts[0])`.
fn inverse_jacobian<T: Real>(pts: &[Pt<T>; 3]) -> [[T; 2]; 2] {
    let e1 = pts[1] - pts[0];
    let e2 = pts[2] - pts[0];
    let det = e1.cross(e2);
    [[e2.y / det, -e2.x / det], [-e1.y / det, e1.x / det]]
}

fn pullback_point<T: Real>(pts: &[Pt<T>; 3], binv: &[[T; 2]; 2], p: Pt<T>) -> Pt<T> {
    let d = p - pts[0];
    Pt::new(binv[0][0] * d.x + binv[0][1] * d.y, binv[1][0] * d.x + binv[1][1] * d.y)
}

/// Physical gradient from a reference gradient: `Binv^T g_ref`.
fn push_gradient<T: Real>(binv: &[[T; 2]; 2], g: Pt<T>) -> Pt<T> {
    Pt::new(binv[0][0] * g.x + binv[1][0] * g.y, binv[0][1] * g.x + binv[1][1] * g.y)
}

/// Physical Hessian `Binv^T H_ref Binv`.
fn push_hessian<T: Real>(binv: &[[T; 2]; 2], h: Sym2<T>) -> Sym2<T> {
    // Rows of Binv.
    let (a, b) = (binv[0][0], binv[0][1]);
    let (c, d) = (binv[1][0], binv[1][1]);
    // M = H_ref * Binv, columns in physical indices.
    let m00 = h.xx * a + h.xy * c;
    let m01 = h.xx * b + h.xy * d;
    let m10 = h.xy * a + h.yy * c;
    let m11 = h.xy * b + h.yy * d;
    Sym2::new(a * m00 + c * m10, a * m01 + c * m11, b * m01 + d * m11)
}

/// The global HCT space with homogeneous (clamped) boundary conditions:
/// values and gradients at interior vertices, normal slopes at interior edge
/// midpoints. Boundary degrees of freedom are eliminated.
#[derive(Debug)]
pub struct HctSpace<T> {
    pub mesh: Arc<Triangulation<T>>,
    pub reference: Arc<ReferenceHct<T>>,
    pub n_dofs: usize,
    /// Value / d_x / d_y unknowns per vertex.
    pub vertex_dofs: Vec<Option<[usize; 3]>>,
    /// Midpoint normal slope unknown per edge (with the global edge normal).
    pub edge_dof: Vec<Option<usize>>,
    /// Local slots: `[v0 gx0 gy0 v1 gx1 gy1 v2 gx2 gy2 n0 n1 n2]` where
    /// `n_k` belongs to the midpoint of the edge opposite vertex `k`.
    pub local2global: Vec<[Option<usize>; 12]>,
}

impl<T: Real> HctSpace<T> {
    pub fn new(mesh: Arc<Triangulation<T>>) -> Self {
        let reference = Arc::new(ReferenceHct::build());
        let mut vertex_dofs = vec![None; mesh.n_vertices()];
        let mut edge_dof = vec![None; mesh.n_edges()];
        let mut n = 0;
        for v in 0..mesh.n_vertices() {
            if !mesh.vertex_boundary[v] {
                vertex_dofs[v] = Some([n, n + 1, n + 2]);
                n += 3;
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
                let mut row = [None; 12];
                for k in 0..3 {
                    if let Some([a, b, c]) = vertex_dofs[mesh.triangles[t][k]] {
                        row[3 * k] = Some(a);
                        row[3 * k + 1] = Some(b);
                        row[3 * k + 2] = Some(c);
                    }
                    row[9 + k] = edge_dof[mesh.tri_edges[t][k]];
                }
                row
            })
            .collect();
        HctSpace { mesh, reference, n_dofs: n, vertex_dofs, edge_dof, local2global }
    }

    /// 12 x 12 matrix applying the local degree-of-freedom functionals of
    /// triangle `t` to the reference kernel functions.
    fn dof_matrix(&self, t: usize) -> DMat<T> {
        let pts = self.mesh.tri_pts(t);
        let binv = inverse_jacobian(&pts);
        let r = &*self.reference;
        let mut a = DMat::zeros(12, 12);
        for k in 0..3 {
            for i in 0..12 {
                let gref = Pt::new(r.vert_gx[(k, i)], r.vert_gy[(k, i)]);
                let g = push_gradient(&binv, gref);
                a[(3 * k, i)] = r.vert_val[(k, i)];
                a[(3 * k + 1, i)] = g.x;
                a[(3 * k + 2, i)] = g.y;
            }
            let nu = self.mesh.edges[self.mesh.tri_edges[t][k]].nu;
            for i in 0..12 {
                let gref = Pt::new(r.mid_gx[(k, i)], r.mid_gy[(k, i)]);
                a[(9 + k, i)] = push_gradient(&binv, gref).dot(nu);
            }
        }
        a
    }

    /// Local basis of triangle `t` as a 30 x 12 matrix of piecewise cubic
    /// coefficients (columns follow the local slot order).
    pub fn local_basis(&self, t: usize) -> DMat<T> {
        let a = self.dof_matrix(t);
        self.reference.kernel.matmul(&a.inverse())
    }

    /// Evaluations of the 12 local basis functions of triangle `t` at the
    /// given physical points: `result[slot][point]`.
    pub fn local_basis_evals(&self, t: usize, pts_phys: &[Pt<T>]) -> Vec<Vec<Eval<T>>> {
        let basis = self.local_basis(t);
        let pts = self.mesh.tri_pts(t);
        let binv = inverse_jacobian(&pts);
        let mut out = vec![Vec::with_capacity(pts_phys.len()); 12];
        for &p in pts_phys {
            let pref = pullback_point(&pts, &binv, p);
            let k = ref_subtriangle(pref);
            let mv = mono_val(pref);
            let mg = mono_grad(pref);
            let mh = mono_hess(pref);
            for (slot, column) in out.iter_mut().enumerate() {
                let mut v = T::zero();
                let mut g = Pt::zero();
                let mut h = Sym2::zero();
                for i in 0..10 {
                    let c = basis[(10 * k + i, slot)];
                    v += c * mv[i];
                    g = g + mg[i].scale(c);
                    h = h + mh[i].scale(c);
                }
                column.push(Eval { v, g: push_gradient(&binv, g), h: push_hessian(&binv, h) });
            }
        }
        out
    }

    /// Matrix of the companion operator `J`: rows are HCT unknowns, columns
    /// Morley unknowns.
    pub fn companion_matrix(&self, morley: &DofMap<T>) -> CsrMatrix<T> {
        assert_eq!(morley.kind(), SchemeKind::Morley);
        assert!(Arc::ptr_eq(&morley.mesh, &self.mesh), "spaces must share a mesh");
        let mesh = &self.mesh;
        // Sparse rows for the averaged one-sided Morley gradients at each
        // interior vertex; needed both directly and for the midpoint rows.
        let mut grad_rows: Vec<Vec<(usize, Pt<T>)>> = vec![Vec::new(); mesh.n_vertices()];
        for z in 0..mesh.n_vertices() {
            if mesh.vertex_boundary[z] {
                continue;
            }
            let patch = &mesh.vertex_tris[z];
            let weight = T::one() / T::c(patch.len() as f64);
            let mut row: Vec<(usize, Pt<T>)> = Vec::new();
            for &t in patch {
                let shapes = TriP2::from_mesh(mesh, t);
                for slot in 0..6 {
                    let Some(col) = morley.local2global[t][slot] else { continue };
                    let local = morley.basis_local_lagrange(t, slot);
                    let g = shapes.eval(&local, mesh.vertices[z]).g.scale(weight);
                    row.push((col, g));
                }
            }
            grad_rows[z] = row;
        }
        let mut tri = Triplets::new(self.n_dofs, morley.n_dofs);
        for z in 0..mesh.n_vertices() {
            let Some([rv, rx, ry]) = self.vertex_dofs[z] else { continue };
            // Vertex value: the Morley vertex unknown itself.
            if let Some(col) = morley.vertex_dof[z] {
                tri.push(rv, col, T::one());
            }
            for &(col, g) in &grad_rows[z] {
                tri.push(rx, col, g.x);
                tri.push(ry, col, g.y);
            }
        }
        for e in 0..mesh.n_edges() {
            let Some(rm) = self.edge_dof[e] else { continue };
            let edge = &mesh.edges[e];
            // Simpson's rule on the edge: the mean of the (quadratic) normal
            // slope of the companion equals the Morley edge unknown exactly
            // when the midpoint slope is (6 mean - endpoint slopes) / 4.
            if let Some(col) = morley.edge_dof[e] {
                tri.push(rm, col, T::c(1.5));
            }
            let quarter = T::c(0.25);
            for &z in &edge.v {
                for &(col, g) in &grad_rows[z] {
                    tri.push(rm, col, -quarter * g.dot(edge.nu));
                }
            }
        }
        tri.to_csr()
    }
}

/// A function in the HCT space, stored as per-triangle piecewise cubic
/// coefficients in reference coordinates for fast evaluation.
#[derive(Clone, Debug)]
pub struct HctFunction<T> {
    pub mesh: Arc<Triangulation<T>>,
    /// 30 coefficients per triangle.
    coeffs: Vec<[T; 30]>,
}

impl<T: Real> HctFunction<T> {
    pub fn from_dofs(space: &HctSpace<T>, dofs: &[T]) -> Self {
        assert_eq!(dofs.len(), space.n_dofs);
        let mesh = space.mesh.clone();
        let coeffs = (0..mesh.n_triangles())
            .map(|t| {
                let mut local = DMat::zeros(12, 1);
                for (slot, g) in space.local2global[t].iter().enumerate() {
                    if let Some(g) = g {
                        local[(slot, 0)] = dofs[*g];
                    }
                }
                let y = space.dof_matrix(t).solve(local);
                let c = space.reference.kernel.matmul(&y);
                let mut out = [T::zero(); 30];
                for i in 0..30 {
                    out[i] = c[(i, 0)];
                }
                out
            })
            .collect();
        HctFunction { mesh, coeffs }
    }
}

impl<T: Real> PwField<T> for HctFunction<T> {
    fn eval_on(&self, t: usize, p: Pt<T>) -> Eval<T> {
        let pts = self.mesh.tri_pts(t);
        let binv = inverse_jacobian(&pts);
        let pref = pullback_point(&pts, &binv, p);
        let k = ref_subtriangle(pref);
        let c = &self.coeffs[t][10 * k..10 * (k + 1)];
        let mv = mono_val(pref);
        let mg = mono_grad(pref);
        let mh = mono_hess(pref);
        let mut v = T::zero();
        let mut g = Pt::zero();
        let mut h = Sym2::zero();
        for i in 0..10 {
            v += c[i] * mv[i];
            g = g + mg[i].scale(c[i]);
            h = h + mh[i].scale(c[i]);
        }
        Eval { v, g: push_gradient(&binv, g), h: push_hessian(&binv, h) }
    }

    fn needs_split(&self) -> bool {
        true
    }
}
