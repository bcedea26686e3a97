//! Quadrature rules on the reference triangle and the unit interval.
//!
//! Triangle rules are built from tensor Gauss-Legendre rules through the
//! Duffy (collapsed square) map, which keeps all weights positive and gives
//! provable polynomial exactness without hard-coded point tables.

use crate::geom::Pt;
use crate::scalar::Real;

/// Quadrature rule on the reference triangle `(0,0), (1,0), (0,1)`.
///
/// Points are stored in barycentric coordinates; weights sum to the
/// reference area `1/2`.
#[derive(Clone, Debug)]
pub struct QuadRule<T> {
    pub degree: usize,
    /// Barycentric coordinates `(l0, l1, l2)` of each node.
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
}

/// Gauss rule on the unit interval `[0, 1]`.
#[derive(Clone, Debug)]
pub struct EdgeRule<T> {
    pub degree: usize,
    pub points: Vec<T>,
    pub weights: Vec<T>,
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre polynomial.
fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1);
    let mut xs = vec![T::zero(); n];
    let mut ws = vec![T::zero(); n];
    for i in 0..n {
        // Chebyshev-like initial guess.
        let guess = ((T::c(i as f64) + T::c(0.75)) * T::PI()
            / (T::c(n as f64) + T::half()))
        .cos();
        let mut x = guess;
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let mut p0 = T::one();
            let mut p1 = x;
            for k in 2..=n {
                let kf = T::c(k as f64);
                let p2 = ((T::two() * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dpn = T::c(n as f64) * (x * p1 - p0) / (x * x - T::one());
            let dx = p1 / dpn;
            x = x - dx;
            if dx.abs() <= T::epsilon() * T::two() {
                break;
            }
        }
        // Weight 2 / ((1-x^2) P_n'(x)^2).
        let mut p0 = T::one();
        let mut p1 = x;
        for k in 2..=n {
            let kf = T::c(k as f64);
            let p2 = ((T::two() * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dpn = T::c(n as f64) * (x * p1 - p0) / (x * x - T::one());
        xs[i] = x;
        ws[i] = T::two() / ((T::one() - x * x) * dpn * dpn);
    }
    // Newton starting from descending cos() guesses yields descending nodes;
    // store them ascending for determinism.
    xs.reverse();
    ws.reverse();
    (xs, ws)
}

/// Gauss rule on `[0, 1]` exact for polynomials of degree `<= degree`.
pub fn quad_edge<T: Real>(degree: usize) -> EdgeRule<T> {
    let n = degree / 2 + 1; // 2n - 1 >= degree
    let (xs, ws) = gauss_legendre::<T>(n);
    let points = xs.iter().map(|&x| (x + T::one()) * T::half()).collect();
    let weights = ws.iter().map(|&w| w * T::half()).collect();
    EdgeRule { degree, points, weights }
}

/// Rule on the reference triangle exact for all polynomials of total degree
/// `<= degree` (supported for `1 <= degree <= 12`, higher degrees work too).
pub fn quad_triangle<T: Real>(degree: usize) -> QuadRule<T> {
    assert!(degree >= 1, "quadrature degree must be at least 1");
    // Duffy map (u, v) -> (x, y) = (u, v(1-u)) with Jacobian (1-u): the
    // integrand picks up one extra degree in u.
    let n = (degree + 2) / 2 + 1;
    let (xs, ws) = gauss_legendre::<T>(n);
    let u: Vec<T> = xs.iter().map(|&x| (x + T::one()) * T::half()).collect();
    let wu: Vec<T> = ws.iter().map(|&w| w * T::half()).collect();
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = u[i];
            let y = u[j] * (T::one() - u[i]);
            let w = wu[i] * wu[j] * (T::one() - u[i]);
            points.push([T::one() - x - y, x, y]);
            weights.push(w);
        }
    }
    QuadRule { degree, points, weights }
}

impl<T: Real> QuadRule<T> {
    /// Physical nodes and weights for the triangle `(a, b, c)`; the weights
    /// integrate over the physical triangle (they sum to its area).
    pub fn map_to(&self, a: Pt<T>, b: Pt<T>, c: Pt<T>) -> Vec<(Pt<T>, T)> {
        // Reference weights sum to 1/2, so the scale factor is twice the area.
        let area2 = crate::geom::signed_area2(a, b, c).abs();
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(l, &w)| {
                let p = a.scale(l[0]) + b.scale(l[1]) + c.scale(l[2]);
                (p, w * area2)
            })
            .collect()
    }
}

impl<T: Real> EdgeRule<T> {
    /// Physical nodes and weights along the segment `[a, b]`; the weights sum
    /// to the segment length.
    pub fn map_to(&self, a: Pt<T>, b: Pt<T>) -> Vec<(Pt<T>, T)> {
        let len = a.dist(b);
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| (a + (b - a).scale(t), w * len))
            .collect()
    }
}
