//! Conforming triangulations with newest-vertex bisection (NVB).
//!
//! Triangles are stored as vertex triples in counterclockwise order with the
//! vertex opposite the refinement edge listed last, so the refinement edge of
//! `[a, b, c]` is `(a, b)`. Bisection inserts the midpoint `m` of `(a, b)`
//! and produces the children `[c, a, m]` and `[b, c, m]`, which makes the
//! newest vertex the last entry of each child and keeps orientation.

use crate::geom::{self, Pt};
use crate::scalar::Real;
use std::collections::BTreeMap;
use std::fmt::Write as FmtWrite;
use std::sync::atomic::{AtomicU64, Ordering};

static MESH_ID: AtomicU64 = AtomicU64::new(1);

/// An edge of the triangulation.
///
/// The unit normal `nu` is fixed once at edge creation: it points out of the
/// first adjacent triangle `tris[0]` (for boundary edges, out of the domain).
/// Jumps across the edge are taken as `trace from tris[0] - trace from
/// tris[1]`; on boundary edges the jump is the trace itself.
#[derive(Clone, Debug)]
pub struct Edge<T> {
    /// Endpoint vertex indices with `v[0] < v[1]`.
    pub v: [usize; 2],
    /// Adjacent triangles; `tris[1]` is `None` on the boundary.
    pub tris: [Option<usize>; 2],
    /// Unit normal, outward for `tris[0]`.
    pub nu: Pt<T>,
    /// Unit tangent with `nu = tau` rotated by -90 degrees.
    pub tau: Pt<T>,
    pub length: T,
    pub boundary: bool,
}

/// A set of triangles selected for refinement.
#[derive(Clone, Debug, Default)]
pub struct MarkSet {
    tris: Vec<usize>,
}

impl MarkSet {
    pub fn new(mut tris: Vec<usize>) -> Self {
        tris.sort_unstable();
        tris.dedup();
        MarkSet { tris }
    }
    pub fn all(n: usize) -> Self {
        MarkSet { tris: (0..n).collect() }
    }
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.tris.iter().copied()
    }
    pub fn len(&self) -> usize {
        self.tris.len()
    }
    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Triangulation<T> {
    pub vertices: Vec<Pt<T>>,
    /// CCW vertex triples; refinement edge is `(t[0], t[1])`.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge<T>>,
    /// Per triangle, the edge index opposite each local vertex.
    pub tri_edges: Vec<[usize; 3]>,
    pub vertex_boundary: Vec<bool>,
    /// Triangles adjacent to each vertex, in ascending triangle order.
    pub vertex_tris: Vec<Vec<usize>>,
    /// Index of the parent triangle in the previous mesh (identity at level 0).
    pub parent: Vec<usize>,
    pub level: usize,
    id: u64,
    parent_id: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("triangle {0} is not counterclockwise")]
    Orientation(usize),
    #[error("edge ({0}, {1}) is adjacent to {2} triangles")]
    NonManifold(usize, usize, usize),
    #[error("Euler characteristic is {0}, expected 1")]
    Euler(i64),
    #[error("vertex {0} hangs on edge {1}")]
    HangingNode(usize, usize),
    #[error("meshes are not nested: fine mesh does not descend from coarse mesh")]
    NotNested,
}

impl<T: Real> Triangulation<T> {
    /// Build a triangulation from raw vertex and (CCW, refinement-edge-first)
    /// triangle lists; edges and adjacency are derived.
    pub fn from_raw(vertices: Vec<Pt<T>>, triangles: Vec<[usize; 3]>) -> Self {
        let n = triangles.len();
        let mut mesh = Triangulation {
            vertices,
            triangles,
            edges: Vec::new(),
            tri_edges: vec![[usize::MAX; 3]; n],
            vertex_boundary: Vec::new(),
            vertex_tris: Vec::new(),
            parent: (0..n).collect(),
            level: 0,
            id: MESH_ID.fetch_add(1, Ordering::Relaxed),
            parent_id: None,
        };
        mesh.build_connectivity();
        mesh
    }

    /// Initial triangulation of the L-shaped domain
    /// `(-1,1)^2 \ [0,1)^2`: three unit squares, each split along the
    /// diagonal parallel to the main diagonal, with the hypotenuses as
    /// refinement edges.
    pub fn lshape() -> Self {
        let p = |x: f64, y: f64| Pt::new(T::c(x), T::c(y));
        let vertices = vec![
            p(-1.0, -1.0), // 0
            p(0.0, -1.0),  // 1
            p(1.0, -1.0),  // 2
            p(-1.0, 0.0),  // 3
            p(0.0, 0.0),   // 4 (reentrant corner)
            p(1.0, 0.0),   // 5
            p(-1.0, 1.0),  // 6
            p(0.0, 1.0),   // 7
        ];
        let triangles = vec![
            [4, 0, 1],
            [0, 4, 3],
            [5, 1, 2],
            [1, 5, 4],
            [7, 3, 4],
            [3, 7, 6],
        ];
        Self::from_raw(vertices, triangles)
    }

    /// Triangulation of the axis-aligned rectangle `(x0,x1) x (y0,y1)` by an
    /// `nx` by `ny` grid of cells, each split along its south-west to
    /// north-east diagonal with the hypotenuse as refinement edge.
    pub fn rectangle(x0: T, y0: T, x1: T, y1: T, nx: usize, ny: usize) -> Self {
        assert!(nx >= 1 && ny >= 1, "the grid needs at least one cell per direction");
        assert!(x1 > x0 && y1 > y0, "the rectangle must have positive extent");
        let fx = (x1 - x0) / T::from_usize(nx).unwrap();
        let fy = (y1 - y0) / T::from_usize(ny).unwrap();
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Pt::new(
                    x0 + fx * T::from_usize(i).unwrap(),
                    y0 + fy * T::from_usize(j).unwrap(),
                ));
            }
        }
        let at = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (sw, se) = (at(i, j), at(i + 1, j));
                let (nw, ne) = (at(i, j + 1), at(i + 1, j + 1));
                triangles.push([ne, sw, se]);
                triangles.push([sw, ne, nw]);
            }
        }
        Self::from_raw(vertices, triangles)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn mesh_id(&self) -> u64 {
        self.id
    }
    pub fn parent_mesh_id(&self) -> Option<u64> {
        self.parent_id
    }

    pub fn tri_pts(&self, t: usize) -> [Pt<T>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> T {
        let [a, b, c] = self.tri_pts(t);
        geom::tri_area(a, b, c)
    }

    pub fn diameter(&self, t: usize) -> T {
        let [a, b, c] = self.tri_pts(t);
        geom::tri_diameter(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Pt<T> {
        let [a, b, c] = self.tri_pts(t);
        (a + b + c).scale(T::one() / T::c(3.0))
    }

    pub fn max_diameter(&self) -> T {
        (0..self.n_triangles())
            .map(|t| self.diameter(t))
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// The one or two triangles adjacent to edge `e` (the edge patch).
    pub fn edge_patch(&self, e: usize) -> Vec<usize> {
        self.edges[e].tris.iter().flatten().copied().collect()
    }

    /// Triangles whose closure contains `p` (one for interior points, two
    /// across an edge, more around a vertex).
    pub fn point_patch(&self, p: Pt<T>) -> Vec<usize> {
        let tol = T::c(1e-12);
        let mut out = Vec::new();
        for t in 0..self.n_triangles() {
            let [a, b, c] = self.tri_pts(t);
            let l = geom::barycentric(a, b, c, p);
            if l.iter().all(|&li| li >= -tol) {
                out.push(t);
            }
        }
        out
    }

    /// Distance from `p` to the nearest mesh vertex.
    pub fn vertex_distance(&self, p: Pt<T>) -> T {
        self.vertices
            .iter()
            .map(|&v| v.dist(p))
            .fold(T::infinity(), |a, b| a.min(b))
    }

    fn build_connectivity(&mut self) {
        let mut map: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        self.edges.clear();
        for (t, tri) in self.triangles.iter().enumerate() {
            // Local edge i is opposite local vertex i.
            let locals = [(tri[1], tri[2]), (tri[2], tri[0]), (tri[0], tri[1])];
            for (i, &(a, b)) in locals.iter().enumerate() {
                let key = (a.min(b), a.max(b));
                let e = *map.entry(key).or_insert_with(|| {
                    let pa = self.vertices[key.0];
                    let pb = self.vertices[key.1];
                    let tau = (pb - pa).normalize();
                    self.edges.push(Edge {
                        v: [key.0, key.1],
                        tris: [None, None],
                        nu: tau.rot_cw(),
                        tau,
                        length: pa.dist(pb),
                        boundary: false,
                    });
                    self.edges.len() - 1
                });
                let slots = &mut self.edges[e].tris;
                if slots[0].is_none() {
                    slots[0] = Some(t);
                } else if slots[1].is_none() {
                    slots[1] = Some(t);
                } else {
                    panic!("edge ({}, {}) adjacent to more than two triangles", a, b);
                }
                self.tri_edges[t][i] = e;
            }
        }
        // Fix the normal orientation: nu must point out of tris[0]. For
        // interior edges reorder the pair, for boundary edges flip the frame.
        for e in 0..self.edges.len() {
            let edge = &self.edges[e];
            let mid = self.vertices[edge.v[0]].mid(self.vertices[edge.v[1]]);
            let t0 = edge.tris[0].expect("edge with no adjacent triangle");
            let outward_of_t0 = edge.nu.dot(self.centroid(t0) - mid) < T::zero();
            match edge.tris[1] {
                Some(_) => {
                    if !outward_of_t0 {
                        self.edges[e].tris.swap(0, 1);
                    }
                }
                None => {
                    self.edges[e].boundary = true;
                    if !outward_of_t0 {
                        self.edges[e].nu = -self.edges[e].nu;
                        self.edges[e].tau = -self.edges[e].tau;
                    }
                }
            }
        }
        self.vertex_boundary = vec![false; self.vertices.len()];
        for edge in &self.edges {
            if edge.boundary {
                self.vertex_boundary[edge.v[0]] = true;
                self.vertex_boundary[edge.v[1]] = true;
            }
        }
        self.vertex_tris = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                self.vertex_tris[v].push(t);
            }
        }
    }

    /// Structural audit: orientation, manifold edges, Euler characteristic
    /// and absence of hanging nodes.
    pub fn audit(&self) -> Result<(), MeshError> {
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]];
            if geom::signed_area2(a, b, c) <= T::zero() {
                return Err(MeshError::Orientation(t));
            }
        }
        for edge in &self.edges {
            let n = edge.tris.iter().flatten().count();
            if n == 0 || n > 2 || (n == 1) != edge.boundary {
                return Err(MeshError::NonManifold(edge.v[0], edge.v[1], n));
            }
        }
        let chi = self.n_vertices() as i64 - self.n_edges() as i64 + self.n_triangles() as i64;
        if chi != 1 {
            return Err(MeshError::Euler(chi));
        }
        // A hanging node is a vertex in the relative interior of an edge.
        let tol = T::c(1e-12);
        for (e, edge) in self.edges.iter().enumerate() {
            let (pa, pb) = (self.vertices[edge.v[0]], self.vertices[edge.v[1]]);
            // Direction from v[0] to v[1]; `tau` itself may be flipped on
            // boundary edges to keep the (nu, tau) frame right-handed.
            let dir = (pb - pa).scale(T::one() / edge.length);
            for (v, &p) in self.vertices.iter().enumerate() {
                if v == edge.v[0] || v == edge.v[1] {
                    continue;
                }
                let s = (p - pa).dot(dir);
                if s > tol && s < edge.length - tol && (p - pa).cross(dir).abs() < tol {
                    return Err(MeshError::HangingNode(v, e));
                }
            }
        }
        Ok(())
    }

    /// Newest-vertex bisection of the marked triangles, with closure: the
    /// result is conforming and every marked triangle has been bisected at
    /// least once.
    pub fn refine(&self, marks: &MarkSet) -> Self {
        let mut marked_edges = vec![false; self.n_edges()];
        let mut stack: Vec<usize> = marks.iter().map(|t| self.tri_edges[t][2]).collect();
        while let Some(e) = stack.pop() {
            if marked_edges[e] {
                continue;
            }
            marked_edges[e] = true;
            for t in self.edge_patch(e) {
                let re = self.tri_edges[t][2];
                if re != e && !marked_edges[re] {
                    stack.push(re);
                }
            }
        }
        self.refine_edges(&marked_edges)
    }

    /// Uniform refinement: every edge is bisected, splitting every triangle
    /// into four similar children.
    pub fn uniform_refine(&self) -> Self {
        self.refine_edges(&vec![true; self.n_edges()])
    }

    fn refine_edges(&self, marked_edges: &[bool]) -> Self {
        let mut vertices = self.vertices.clone();
        // Midpoint vertex for each marked edge, created in edge order.
        let mut midpoint = vec![usize::MAX; self.n_edges()];
        for (e, edge) in self.edges.iter().enumerate() {
            if marked_edges[e] {
                midpoint[e] = vertices.len();
                vertices.push(self.vertices[edge.v[0]].mid(self.vertices[edge.v[1]]));
            }
        }
        let mut edge_lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (e, edge) in self.edges.iter().enumerate() {
            edge_lookup.insert((edge.v[0], edge.v[1]), e);
        }
        let marked_pair = |a: usize, b: usize| -> Option<usize> {
            let key = (a.min(b), a.max(b));
            edge_lookup
                .get(&key)
                .copied()
                .filter(|&e| marked_edges[e])
                .map(|e| midpoint[e])
        };
        let mut triangles = Vec::new();
        let mut parent = Vec::new();
        // Bisect recursively; children's refinement edges are edges of the
        // original triangle, so at most two generations are created here.
        fn emit(
            tri: [usize; 3],
            par: usize,
            marked_pair: &dyn Fn(usize, usize) -> Option<usize>,
            triangles: &mut Vec<[usize; 3]>,
            parent: &mut Vec<usize>,
        ) {
            let [a, b, c] = tri;
            match marked_pair(a, b) {
                Some(m) => {
                    emit([c, a, m], par, marked_pair, triangles, parent);
                    emit([b, c, m], par, marked_pair, triangles, parent);
                }
                None => {
                    triangles.push(tri);
                    parent.push(par);
                }
            }
        }
        for (t, &tri) in self.triangles.iter().enumerate() {
            emit(tri, t, &marked_pair, &mut triangles, &mut parent);
        }
        let n = triangles.len();
        let mut mesh = Triangulation {
            vertices,
            triangles,
            edges: Vec::new(),
            tri_edges: vec![[usize::MAX; 3]; n],
            vertex_boundary: Vec::new(),
            vertex_tris: Vec::new(),
            parent,
            level: self.level + 1,
            id: MESH_ID.fetch_add(1, Ordering::Relaxed),
            parent_id: Some(self.id),
        };
        mesh.build_connectivity();
        mesh
    }

    /// Check that `self` was produced from `coarse` by a single `refine` or
    /// `uniform_refine` call, so the parent map is meaningful.
    pub fn check_descends_from(&self, coarse: &Self) -> Result<(), MeshError> {
        if self.parent_id == Some(coarse.id) && self.parent.iter().all(|&p| p < coarse.n_triangles())
        {
            Ok(())
        } else {
            Err(MeshError::NotNested)
        }
    }

    /// Plain text export: one `x y` line per vertex, a blank line, then one
    /// `v0 v1 v2` line per triangle.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "{} {}", v.x, v.y);
        }
        let _ = writeln!(s);
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Triangulation<f64>;

    fn total_area(m: &M) -> f64 {
        (0..m.n_triangles()).map(|t| m.area(t)).sum()
    }

    #[test]
    fn lshape_initial_counts() {
        let m = M::lshape();
        assert_eq!(m.n_vertices(), 8);
        assert_eq!(m.n_triangles(), 6);
        assert_eq!(m.n_edges(), 13);
        let interior = m.edges.iter().filter(|e| !e.boundary).count();
        assert_eq!(interior, 5);
        assert!((total_area(&m) - 3.0).abs() < 1e-14);
        m.audit().unwrap();
    }

    #[test]
    fn lshape_refinement_edges_are_hypotenuses() {
        let m = M::lshape();
        for t in 0..m.n_triangles() {
            let tri = m.triangles[t];
            let h = m.vertices[tri[0]].dist(m.vertices[tri[1]]);
            assert!((h - 2.0f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn rectangle_counts_and_area() {
        let m = M::rectangle(0.0, -1.0, 3.0, 1.0, 3, 2);
        assert_eq!(m.n_vertices(), 4 * 3);
        assert_eq!(m.n_triangles(), 12);
        assert!((total_area(&m) - 6.0).abs() < 1e-14);
        m.audit().unwrap();
        // Refinement edges are the cell diagonals.
        let diag = 2.0f64.sqrt();
        for t in 0..m.n_triangles() {
            let tri = m.triangles[t];
            let h = m.vertices[tri[0]].dist(m.vertices[tri[1]]);
            assert!((h - diag).abs() < 1e-14);
        }
        let fine = m.uniform_refine();
        assert_eq!(fine.n_triangles(), 24);
        fine.audit().unwrap();
    }

    #[test]
    fn uniform_refinement_quadruples() {
        let mut m = M::lshape();
        for level in 1..=4usize {
            m = m.uniform_refine();
            assert_eq!(m.n_triangles(), 6 * 4usize.pow(level as u32));
            assert!((total_area(&m) - 3.0).abs() < 1e-12);
            m.audit().unwrap();
        }
        // Level 4 has 1536 triangles.
        assert_eq!(m.n_triangles(), 1536);
    }

    #[test]
    fn single_mark_is_bisected_and_conforming() {
        let m = M::lshape();
        let fine = m.refine(&MarkSet::new(vec![0]));
        fine.audit().unwrap();
        fine.check_descends_from(&m).unwrap();
        // Triangle 0 must have at least two children.
        let children = fine.parent.iter().filter(|&&p| p == 0).count();
        assert!(children >= 2);
        assert!((total_area(&fine) - 3.0).abs() < 1e-14);
        // The neighbor across the shared refinement edge is bisected too.
        let children1 = fine.parent.iter().filter(|&&p| p == 1).count();
        assert!(children1 >= 2);
    }

    #[test]
    fn closure_terminates_on_random_marks() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut m = M::lshape();
        for _ in 0..6 {
            let k = 1 + rng.gen_range(0..m.n_triangles() / 2 + 1);
            let marks: Vec<usize> = (0..k).map(|_| rng.gen_range(0..m.n_triangles())).collect();
            let ms = MarkSet::new(marks);
            let fine = m.refine(&ms);
            fine.audit().unwrap();
            for t in ms.iter() {
                assert!(fine.parent.iter().filter(|&&p| p == t).count() >= 2);
            }
            assert!((total_area(&fine) - 3.0).abs() < 1e-12);
            m = fine;
        }
    }

    #[test]
    fn edge_normals_consistent() {
        let m = M::lshape().uniform_refine();
        for (e, edge) in m.edges.iter().enumerate() {
            assert!((edge.nu.norm() - 1.0).abs() < 1e-14);
            assert!((edge.tau.norm() - 1.0).abs() < 1e-14);
            assert!(edge.nu.dot(edge.tau).abs() < 1e-14);
            // nu = tau rotated by -90 degrees.
            assert!((edge.nu.x - edge.tau.y).abs() < 1e-14);
            assert!((edge.nu.y + edge.tau.x).abs() < 1e-14);
            let mid = m.vertices[edge.v[0]].mid(m.vertices[edge.v[1]]);
            let t0 = edge.tris[0].unwrap();
            assert!(edge.nu.dot(m.centroid(t0) - mid) < 0.0, "edge {e}");
            if let Some(t1) = edge.tris[1] {
                assert!(edge.nu.dot(m.centroid(t1) - mid) > 0.0, "edge {e}");
            }
        }
    }

    #[test]
    fn boundary_edges_lie_on_domain_boundary() {
        let m = M::lshape().uniform_refine().uniform_refine();
        for edge in &m.edges {
            let mid = m.vertices[edge.v[0]].mid(m.vertices[edge.v[1]]);
            let (x, y) = (mid.x, mid.y);
            let on_outer = x == -1.0 || y == -1.0 || x == 1.0 || y == 1.0;
            let on_reentrant =
                (x == 0.0 && (0.0..=1.0).contains(&y)) || (y == 0.0 && (0.0..=1.0).contains(&x));
            assert_eq!(edge.boundary, on_outer || on_reentrant);
        }
    }

    #[test]
    fn surviving_edge_keeps_normal() {
        let m = M::lshape();
        let fine = m.refine(&MarkSet::new(vec![5]));
        // The interior diagonal (0,4) of square one survives if untouched by
        // closure; whenever an old edge survives, its normal is unchanged.
        for edge in &m.edges {
            for fedge in &fine.edges {
                if fedge.v == edge.v {
                    assert!((fedge.nu - edge.nu).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn export_roundtrip_shape() {
        let m = M::lshape();
        let txt = m.export_text();
        let lines: Vec<&str> = txt.lines().collect();
        assert_eq!(lines.len(), 8 + 1 + 6);
        assert_eq!(lines[0], "-1 -1");
        assert_eq!(lines[8], "");
        assert_eq!(lines[9], "4 0 1");
    }

    #[test]
    fn point_patch_and_vertex_distance() {
        let m = M::lshape();
        // Centroid of the domain lies on the diagonal edge between t0 and t1.
        let z = Pt::new(-1.0 / 6.0, -1.0 / 6.0);
        let patch = m.point_patch(z);
        assert_eq!(patch, vec![0, 1]);
        let d = m.vertex_distance(z);
        assert!((d - 2.0f64.sqrt() / 6.0).abs() < 1e-14);
    }
}
