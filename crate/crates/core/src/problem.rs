//! Discrete problems: smoother operators, residuals and Jacobians.
//!
//! The scheme for both model problems reads `N_h(u_h; phi) = a_h(u_h, phi)
//! + Gamma_pw(R u_h, R u_h, S phi) - F(Q phi) = 0` with smoothers `R` and
//! `S = Q` chosen among the identity, the Morley interpolation `I_M`, and
//! the conforming companion `J I_M`.  The von Karman system is the
//! vectorized analogue with componentwise forms and the two trilinear
//! brackets.

use std::sync::Arc;

use crate::fields::{Eval, PwField};
use crate::forms::{
    assemble_a, assemble_h_gram, assemble_source_on_basis, nse_gamma_jacobian, nse_gamma_vector,
    vke_gamma_jacobian, vke_gamma_vector, BasisSpace, SourceTerm,
};
use crate::hct::{HctFunction, HctSpace};
use crate::scalar::Real;
use crate::space::{DiscreteFunction, DofMap, SchemeConfig, SchemeKind};
use crate::sparse::{CsrMatrix, Triplets};
use crate::transfer::{morley_matrix, SmootherChoice};

/// The continuous problems the schemes discretize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    /// Linear biharmonic plate problem (no trilinear term).
    Biharmonic,
    /// Stream-function vorticity formulation of 2D Navier-Stokes.
    NavierStokes,
    /// Von Karman plate equations (two coupled components).
    VonKarman,
}

impl ProblemKind {
    pub fn n_components(self) -> usize {
        if self == ProblemKind::VonKarman {
            2
        } else {
            1
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "biharmonic" => Some(ProblemKind::Biharmonic),
            "navier-stokes" | "nse" => Some(ProblemKind::NavierStokes),
            "von-karman" | "vke" => Some(ProblemKind::VonKarman),
            _ => None,
        }
    }
}

/// A smoother applied to scheme functions: the target space together with
/// the matrix mapping scheme coefficients to target coefficients.
pub struct Smoother<T: Real> {
    pub choice: SmootherChoice,
    /// Maps scheme coefficients to coefficients in `space`; identity for
    /// the trivial smoother.
    pub matrix: CsrMatrix<T>,
    pub space: SmootherSpace<T>,
}

pub enum SmootherSpace<T: Real> {
    P2(Arc<DofMap<T>>),
    Hct(Arc<HctSpace<T>>),
}

/// A smoothed scheme function, living either in a quadratic space or in the
/// conforming HCT space.
#[derive(Clone)]
pub enum SmoothedField<T: Real> {
    P2(DiscreteFunction<T>),
    Hct(HctFunction<T>),
}

impl<T: Real> PwField<T> for SmoothedField<T> {
    fn eval_on(&self, t: usize, p: crate::geom::Pt<T>) -> Eval<T> {
        match self {
            SmoothedField::P2(f) => f.eval_on(t, p),
            SmoothedField::Hct(f) => f.eval_on(t, p),
        }
    }
    fn needs_split(&self) -> bool {
        matches!(self, SmoothedField::Hct(_))
    }
}

impl<T: Real> Smoother<T> {
    pub fn basis(&self) -> &dyn BasisSpace<T> {
        match &self.space {
            SmootherSpace::P2(s) => &**s,
            SmootherSpace::Hct(s) => &**s,
        }
    }

    /// Apply the smoother to scheme coefficients.
    pub fn apply(&self, coeffs: &[T]) -> SmoothedField<T> {
        let c = self.matrix.matvec(coeffs);
        match &self.space {
            SmootherSpace::P2(s) => SmoothedField::P2(DiscreteFunction::from_coeffs(s.clone(), c)),
            SmootherSpace::Hct(s) => SmoothedField::Hct(HctFunction::from_dofs(s, &c)),
        }
    }

    /// Pull a vector over the smoother-range basis back to scheme unknowns.
    pub fn pullback(&self, v: &[T]) -> Vec<T> {
        self.matrix.matvec_transpose(v)
    }
}

/// Everything needed to evaluate the discrete problem on one mesh level:
/// the scheme space, the assembled `a_h`, and the smoothers.
pub struct Discretization<T: Real> {
    pub space: Arc<DofMap<T>>,
    pub problem: ProblemKind,
    pub a: CsrMatrix<T>,
    pub smoother_r: Smoother<T>,
    pub smoother_sq: Smoother<T>,
    /// Morley space on the same mesh (built when any smoother needs it).
    pub morley: Option<Arc<DofMap<T>>>,
    /// HCT companion space (built for the companion smoother).
    pub hct: Option<Arc<HctSpace<T>>>,
}

impl<T: Real> Discretization<T> {
    pub fn new(space: Arc<DofMap<T>>, problem: ProblemKind) -> Self {
        let cfg = &space.config;
        let choices = [cfg.smoother_r, cfg.smoother_sq];
        let needs_morley = choices.iter().any(|c| *c != SmootherChoice::Id);
        let needs_hct = choices.contains(&SmootherChoice::Companion);

        let morley = needs_morley.then(|| {
            if space.kind() == SchemeKind::Morley {
                space.clone()
            } else {
                Arc::new(DofMap::new(space.mesh.clone(), SchemeConfig::new(SchemeKind::Morley)))
            }
        });
        let hct = needs_hct.then(|| Arc::new(HctSpace::new(space.mesh.clone())));

        let build = |choice: SmootherChoice| -> Smoother<T> {
            match choice {
                SmootherChoice::Id => Smoother {
                    choice,
                    matrix: CsrMatrix::identity(space.n_dofs),
                    space: SmootherSpace::P2(space.clone()),
                },
                SmootherChoice::Morley => {
                    let m = morley.as_ref().unwrap();
                    Smoother {
                        choice,
                        matrix: morley_matrix(&space, m),
                        space: SmootherSpace::P2(m.clone()),
                    }
                }
                SmootherChoice::Companion => {
                    let m = morley.as_ref().unwrap();
                    let h = hct.as_ref().unwrap();
                    let im = morley_matrix(&space, m);
                    Smoother {
                        choice,
                        matrix: h.companion_matrix(m).matmul(&im),
                        space: SmootherSpace::Hct(h.clone()),
                    }
                }
            }
        };

        let a = assemble_a(&space);
        Discretization {
            smoother_r: build(cfg.smoother_r),
            smoother_sq: build(cfg.smoother_sq),
            space,
            problem,
            a,
            morley,
            hct,
        }
    }

    /// Total number of unknowns (both components for von Karman).
    pub fn n_total(&self) -> usize {
        self.space.n_dofs * self.problem.n_components()
    }

    /// `a_h` is symmetric for Morley and WOPSIP always, and for the lifted
    /// schemes exactly when `theta = 1`.
    pub fn is_symmetric(&self) -> bool {
        matches!(self.space.kind(), SchemeKind::Morley | SchemeKind::Wopsip)
            || self.space.config.theta == T::one()
    }

    /// Gram matrix used for Newton norms: `a_h` itself when symmetric,
    /// otherwise the `||.||_h` Gram matrix.
    pub fn gram(&self) -> CsrMatrix<T> {
        if self.is_symmetric() {
            self.a.clone()
        } else {
            assemble_h_gram(&self.space)
        }
    }

    /// Right-hand side vector `F(Q b_i)` (stacked `[F(Q b_i); 0]` for von
    /// Karman, where the load acts on the first component only).
    pub fn source_vector(&self, f: &SourceTerm<T>) -> Vec<T> {
        let g = assemble_source_on_basis(&self.space.mesh, f, self.smoother_sq.basis());
        let fv = self.smoother_sq.pullback(&g);
        match self.problem {
            ProblemKind::VonKarman => {
                let n = self.space.n_dofs;
                let mut out = vec![T::zero(); 2 * n];
                out[..n].copy_from_slice(&fv);
                out
            }
            _ => fv,
        }
    }

    /// `N_h(u; b_i)` for all scheme test functions, given the precomputed
    /// source vector.
    pub fn residual(&self, u: &[T], source: &[T]) -> Vec<T> {
        assert_eq!(u.len(), self.n_total());
        assert_eq!(source.len(), self.n_total());
        let mesh = &self.space.mesh;
        let mut out = match self.problem {
            ProblemKind::Biharmonic => self.a.matvec(u),
            ProblemKind::NavierStokes => {
                let ru = self.smoother_r.apply(u);
                let g = nse_gamma_vector(mesh, &ru, &ru, self.smoother_sq.basis());
                let mut out = self.a.matvec(u);
                for (o, v) in out.iter_mut().zip(self.smoother_sq.pullback(&g)) {
                    *o += v;
                }
                out
            }
            ProblemKind::VonKarman => {
                let n = self.space.n_dofs;
                let r1 = self.smoother_r.apply(&u[..n]);
                let r2 = self.smoother_r.apply(&u[n..]);
                let sbasis = self.smoother_sq.basis();
                // Gamma_pw,1(R u1, R u2, S phi) and Gamma_pw,2(R u1, R u1, S phi).
                let g1 = vke_gamma_vector(mesh, &r1, &r2, sbasis, -T::one());
                let g2 = vke_gamma_vector(mesh, &r1, &r1, sbasis, T::half());
                let mut out = vec![T::zero(); 2 * n];
                let a1 = self.a.matvec(&u[..n]);
                let a2 = self.a.matvec(&u[n..]);
                let p1 = self.smoother_sq.pullback(&g1);
                let p2 = self.smoother_sq.pullback(&g2);
                for i in 0..n {
                    out[i] = a1[i] + p1[i];
                    out[n + i] = a2[i] + p2[i];
                }
                out
            }
        };
        for (o, f) in out.iter_mut().zip(source) {
            *o -= *f;
        }
        out
    }

    /// Exact Frechet derivative of the residual at `u`.
    pub fn jacobian(&self, u: &[T]) -> CsrMatrix<T> {
        assert_eq!(u.len(), self.n_total());
        let mesh = &self.space.mesh;
        let rmat = &self.smoother_r.matrix;
        let smat = &self.smoother_sq.matrix;
        match self.problem {
            ProblemKind::Biharmonic => self.a.clone(),
            ProblemKind::NavierStokes => {
                let ru = self.smoother_r.apply(u);
                let k = nse_gamma_jacobian(
                    mesh,
                    &ru,
                    self.smoother_r.basis(),
                    self.smoother_sq.basis(),
                );
                self.a.add_scaled(&smat.transpose().matmul(&k).matmul(rmat), T::one())
            }
            ProblemKind::VonKarman => {
                let n = self.space.n_dofs;
                let r1 = self.smoother_r.apply(&u[..n]);
                let r2 = self.smoother_r.apply(&u[n..]);
                let rb = self.smoother_r.basis();
                let sb = self.smoother_sq.basis();
                let st = smat.transpose();
                let pull = |k: CsrMatrix<T>| st.matmul(&k).matmul(rmat);
                // d/du1 Gamma_1(u1,u2,phi) = -int [x, R u2] phi.
                let b11 = pull(vke_gamma_jacobian(mesh, &r2, rb, sb, -T::one()));
                // d/du2 Gamma_1(u1,u2,phi) = -int [R u1, x] phi.
                let b12 = pull(vke_gamma_jacobian(mesh, &r1, rb, sb, -T::one()));
                // d/du1 Gamma_2(u1,u1,phi) = int [R u1, x] phi (the two
                // halves of the symmetric bracket add up).
                let b21 = pull(vke_gamma_jacobian(mesh, &r1, rb, sb, T::one()));
                let mut tri = Triplets::new(2 * n, 2 * n);
                let push_block = |tri: &mut Triplets<T>, m: &CsrMatrix<T>, ro: usize, co: usize| {
                    for r in 0..m.nrows {
                        let (cols, vals) = m.row(r);
                        for (c, v) in cols.iter().zip(vals) {
                            tri.push(ro + r, co + c, *v);
                        }
                    }
                };
                push_block(&mut tri, &self.a, 0, 0);
                push_block(&mut tri, &b11, 0, 0);
                push_block(&mut tri, &b12, 0, n);
                push_block(&mut tri, &b21, n, 0);
                push_block(&mut tri, &self.a, n, n);
                tri.to_csr()
            }
        }
    }

    /// Energy norm used by the Newton termination criteria: component-wise
    /// Gram norm with the matrix from [`Self::gram`].
    pub fn energy_norm(&self, gram: &CsrMatrix<T>, x: &[T]) -> T {
        let n = self.space.n_dofs;
        let mut s = T::zero();
        for c in 0..self.problem.n_components() {
            let xc = &x[c * n..(c + 1) * n];
            s += gram.bilinear(xc, xc);
        }
        s.max(T::zero()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Triangulation;
    use crate::sparse::norm2;
    use rand::prelude::*;

    fn disc(
        kind: SchemeKind,
        problem: ProblemKind,
        r: SmootherChoice,
        sq: SmootherChoice,
    ) -> Discretization<f64> {
        let mesh = Arc::new(Triangulation::<f64>::lshape().uniform_refine());
        let mut cfg = SchemeConfig::new(kind);
        cfg.smoother_r = r;
        cfg.smoother_sq = sq;
        Discretization::new(Arc::new(DofMap::new(mesh, cfg)), problem)
    }

    fn random_state(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    #[test]
    fn zero_source_gives_zero_residual_at_zero() {
        let d = disc(
            SchemeKind::Morley,
            ProblemKind::NavierStokes,
            SmootherChoice::Companion,
            SmootherChoice::Companion,
        );
        let f = SourceTerm::zero(1);
        let source = d.source_vector(&f);
        assert!(norm2(&source) == 0.0);
        let u = vec![0.0; d.n_total()];
        assert!(norm2(&d.residual(&u, &source)) == 0.0);
    }

    #[test]
    fn jacobian_at_zero_is_a_h() {
        for problem in [ProblemKind::NavierStokes, ProblemKind::VonKarman] {
            let d = disc(
                SchemeKind::Dg1,
                problem,
                SmootherChoice::Morley,
                SmootherChoice::Morley,
            );
            let u = vec![0.0; d.n_total()];
            let j = d.jacobian(&u);
            let n = d.space.n_dofs;
            let x = random_state(d.n_total(), 1);
            let y = random_state(d.n_total(), 2);
            let got = j.bilinear(&x, &y);
            let mut want = d.a.bilinear(&x[..n], &y[..n]);
            if problem == ProblemKind::VonKarman {
                want += d.a.bilinear(&x[n..], &y[n..]);
            }
            assert!((got - want).abs() <= 1e-12 * want.abs(), "{problem:?}");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        // Exact Frechet derivative against central differences at 5 random
        // states, relative tolerance 1e-6 with step 1e-7 (the residual is
        // quadratic in u, so central differences are exact up to roundoff).
        for (problem, kind, r, sq) in [
            (ProblemKind::NavierStokes, SchemeKind::Morley, SmootherChoice::Id, SmootherChoice::Id),
            (
                ProblemKind::NavierStokes,
                SchemeKind::C0ip,
                SmootherChoice::Companion,
                SmootherChoice::Companion,
            ),
            (
                ProblemKind::VonKarman,
                SchemeKind::Morley,
                SmootherChoice::Companion,
                SmootherChoice::Companion,
            ),
        ] {
            let d = disc(kind, problem, r, sq);
            let source = vec![0.0; d.n_total()];
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
            for trial in 0..5 {
                let u = random_state(d.n_total(), 10 + trial);
                let j = d.jacobian(&u);
                let h = 1e-7;
                // Probe a handful of random directions instead of all columns.
                for _ in 0..3 {
                    let i = rng.gen_range(0..d.n_total());
                    let mut up = u.clone();
                    let mut um = u.clone();
                    up[i] += h;
                    um[i] -= h;
                    let rp = d.residual(&up, &source);
                    let rm = d.residual(&um, &source);
                    let scale = norm2(&rp).max(1.0);
                    for row in 0..d.n_total() {
                        let fd = (rp[row] - rm[row]) / (2.0 * h);
                        let (cols, vals) = j.row(row);
                        let jv = cols.iter().position(|c| *c == i).map(|k| vals[k]).unwrap_or(0.0);
                        assert!(
                            (fd - jv).abs() <= 1e-6 * scale,
                            "{problem:?} {kind:?} row {row} col {i}: fd {fd} vs {jv}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn smoothers_agree_on_morley_space() {
        // R = S = Id and R = S = I_M produce identical residuals for Morley
        // functions since I_M restricted to the Morley space is the identity.
        let d_id = disc(
            SchemeKind::Morley,
            ProblemKind::NavierStokes,
            SmootherChoice::Id,
            SmootherChoice::Id,
        );
        let d_im = disc(
            SchemeKind::Morley,
            ProblemKind::NavierStokes,
            SmootherChoice::Morley,
            SmootherChoice::Morley,
        );
        let u = random_state(d_id.n_total(), 4);
        let source = vec![0.0; d_id.n_total()];
        let r1 = d_id.residual(&u, &source);
        let r2 = d_im.residual(&u, &source);
        let scale = norm2(&r1);
        for (a, b) in r1.iter().zip(&r2) {
            assert!((a - b).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn vke_offdiagonal_blocks_vanish_at_zero() {
        let d = disc(
            SchemeKind::Dg2,
            ProblemKind::VonKarman,
            SmootherChoice::Morley,
            SmootherChoice::Morley,
        );
        let j = d.jacobian(&vec![0.0; d.n_total()]);
        let n = d.space.n_dofs;
        for r in 0..n {
            let (cols, vals) = j.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if *c >= n {
                    assert!(v.abs() < 1e-14, "(1,2) block nonzero at ({r},{c})");
                }
            }
        }
        for r in n..2 * n {
            let (cols, vals) = j.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if *c < n {
                    assert!(v.abs() < 1e-14, "(2,1) block nonzero at ({r},{c})");
                }
            }
        }
    }
}
