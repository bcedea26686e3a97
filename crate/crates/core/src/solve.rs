//! Newton iteration with two-stage termination and nested iteration.
//!
//! Newton computes exact updates `u^{k+1} = u^k - DN_h(u^k)^{-1} N_h(u^k)`
//! with a sparse LU factorization per step.  The residual is measured by
//! the computable quantity `||A_h^{-1} N_h(u^k)||` in the `a_h`-norm when
//! `a_h` is a scalar product, otherwise in the norm `||.||_h`.  Stage one
//! iterates until the residual drops below `tol (||u^{k+1}|| + ||u^k||)`;
//! stage two continues while the residual still decreases and returns the
//! iterate before the first non-decrease, which is accurate up to machine
//! precision.

use std::sync::Arc;

use crate::forms::SourceTerm;
use crate::lu::{LuError, SparseLu};
use crate::mesh::Triangulation;
use crate::problem::{Discretization, ProblemKind};
use crate::scalar::Real;
use crate::space::{DofMap, SchemeConfig};
use crate::sparse::CsrMatrix;
use crate::transfer::prolong;
use thiserror::Error;

#[derive(Clone, Debug)]
pub struct NewtonConfig<T> {
    /// Stage-1 tolerance.
    pub tol: T,
    pub max_iter: usize,
    /// Measure residuals in the `a_h`-norm; automatically downgraded to the
    /// `||.||_h` Gram matrix when `a_h` is not symmetric.
    pub use_a_norm: bool,
}

impl<T: Real> Default for NewtonConfig<T> {
    fn default() -> Self {
        NewtonConfig { tol: T::c(1e-4), max_iter: 50, use_a_norm: true }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonReport<T> {
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    /// `||A_h^{-1} N_h(u^k)||` for `k = 0, ..., total`.
    pub residual_history: Vec<T>,
    pub converged: bool,
    pub solution: Vec<T>,
}

impl<T> NewtonReport<T> {
    pub fn total_iters(&self) -> usize {
        self.stage1_iters + self.stage2_iters
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("linear solve failed: {0}")]
    Linear(#[from] LuError),
    #[error("Newton did not reach the stage-1 criterion within {max_iter} iterations")]
    MaxIter { max_iter: usize },
}

/// Measures `||A_h^{-1} N_h(u)||` using a prefactorized `a_h` and the Gram
/// matrix of the chosen norm.
struct ResidualMeasure<'a, T: Real> {
    disc: &'a Discretization<T>,
    lu_a: SparseLu<T>,
    gram: CsrMatrix<T>,
}

impl<'a, T: Real> ResidualMeasure<'a, T> {
    fn new(disc: &'a Discretization<T>, cfg: &NewtonConfig<T>) -> Result<Self, LuError> {
        let lu_a = SparseLu::factorize(&disc.a)?;
        let gram = if cfg.use_a_norm && disc.is_symmetric() {
            disc.a.clone()
        } else {
            crate::forms::assemble_h_gram(&disc.space)
        };
        Ok(ResidualMeasure { disc, lu_a, gram })
    }

    /// Solve `A_h xi = N_h(u)` componentwise and return `||xi||`.
    fn measure(&self, residual: &[T]) -> T {
        let n = self.disc.space.n_dofs;
        let mut s = T::zero();
        for c in 0..self.disc.problem.n_components() {
            let xi = self.lu_a.solve(&residual[c * n..(c + 1) * n]);
            s += self.gram.bilinear(&xi, &xi);
        }
        s.max(T::zero()).sqrt()
    }

    fn norm(&self, u: &[T]) -> T {
        self.disc.energy_norm(&self.gram, u)
    }
}

/// Newton iteration for `N_h(u) = 0` from the initial guess `u0`.
pub fn newton_solve<T: Real>(
    disc: &Discretization<T>,
    source: &[T],
    u0: Vec<T>,
    cfg: &NewtonConfig<T>,
) -> Result<NewtonReport<T>, SolveError> {
    assert!(cfg.tol > T::zero() && cfg.max_iter >= 1);
    let measure = ResidualMeasure::new(disc, cfg)?;
    let mut u = u0;
    let mut res = measure.measure(&disc.residual(&u, source));
    let mut history = vec![res];

    // Residual exactly zero: nothing to do (e.g. F = 0 with u0 = 0).
    if res == T::zero() {
        return Ok(NewtonReport {
            stage1_iters: 0,
            stage2_iters: 0,
            residual_history: history,
            converged: true,
            solution: u,
        });
    }

    let step = |u: &[T]| -> Result<Vec<T>, SolveError> {
        let j = disc.jacobian(u);
        let lu = SparseLu::factorize(&j)?;
        let r = disc.residual(u, source);
        let du = lu.solve_refined(&j, &r);
        Ok(u.iter().zip(&du).map(|(a, b)| *a - *b).collect())
    };

    // Newton is exact on the linear problem: a single step.
    if disc.problem == ProblemKind::Biharmonic {
        u = step(&u)?;
        res = measure.measure(&disc.residual(&u, source));
        history.push(res);
        return Ok(NewtonReport {
            stage1_iters: 1,
            stage2_iters: 0,
            residual_history: history,
            converged: true,
            solution: u,
        });
    }

    // Stage 1: iterate until the residual is small relative to the iterates.
    let mut stage1 = 0;
    loop {
        if stage1 >= cfg.max_iter {
            return Err(SolveError::MaxIter { max_iter: cfg.max_iter });
        }
        let next = step(&u)?;
        stage1 += 1;
        res = measure.measure(&disc.residual(&next, source));
        history.push(res);
        let bound = cfg.tol * (measure.norm(&next) + measure.norm(&u));
        u = next;
        if res <= bound {
            break;
        }
    }

    // Stage 2: continue while the residual still decreases; return the
    // iterate before the first non-decrease.
    let mut stage2 = 0;
    while res > T::zero() && stage1 + stage2 < 2 * cfg.max_iter {
        let next = step(&u)?;
        stage2 += 1;
        let next_res = measure.measure(&disc.residual(&next, source));
        history.push(next_res);
        if res <= next_res {
            // u^k is already optimal.
            break;
        }
        u = next;
        res = next_res;
    }

    Ok(NewtonReport {
        stage1_iters: stage1,
        stage2_iters: stage2,
        residual_history: history,
        converged: true,
        solution: u,
    })
}

/// The computable algebraic-error proxy: solve `a_h xi = N_h(v)` and return
/// `||xi||` in the `a_h`-norm (or `||.||_h` for nonsymmetric `a_h`).
pub fn algebraic_residual<T: Real>(
    disc: &Discretization<T>,
    v: &[T],
    source: &[T],
) -> Result<T, LuError> {
    let cfg = NewtonConfig::default();
    let measure = ResidualMeasure::new(disc, &cfg)?;
    Ok(measure.measure(&disc.residual(v, source)))
}

/// Solution of one mesh level inside a nested iteration.
pub struct LevelSolution<T: Real> {
    pub space: Arc<DofMap<T>>,
    pub disc: Discretization<T>,
    pub source: Vec<T>,
    pub solution: Vec<T>,
    pub report: NewtonReport<T>,
}

impl<T: Real> LevelSolution<T> {
    /// Solve on the given mesh with the initial guess prolonged from the
    /// previous level (zero on the coarsest).
    pub fn solve(
        mesh: Arc<Triangulation<T>>,
        scheme: SchemeConfig<T>,
        problem: ProblemKind,
        f: &SourceTerm<T>,
        ncfg: &NewtonConfig<T>,
        previous: Option<&LevelSolution<T>>,
    ) -> Result<Self, SolveError> {
        let space = Arc::new(DofMap::new(mesh, scheme));
        let disc = Discretization::new(space.clone(), problem);
        let source = disc.source_vector(f);
        let u0 = match previous {
            None => vec![T::zero(); disc.n_total()],
            Some(prev) => {
                let n_c = prev.space.n_dofs;
                let n_f = space.n_dofs;
                let mut u0 = vec![T::zero(); disc.n_total()];
                for c in 0..problem.n_components() {
                    let comp = crate::space::DiscreteFunction::from_coeffs(
                        prev.space.clone(),
                        prev.solution[c * n_c..(c + 1) * n_c].to_vec(),
                    );
                    let fine = prolong(&comp, &space);
                    u0[c * n_f..(c + 1) * n_f].copy_from_slice(&fine.coeffs);
                }
                u0
            }
        };
        let report = newton_solve(&disc, &source, u0, ncfg)?;
        Ok(LevelSolution {
            space,
            disc,
            source,
            solution: report.solution.clone(),
            report,
        })
    }

    /// Solution component `c` as a discrete function.
    pub fn component(&self, c: usize) -> crate::space::DiscreteFunction<T> {
        let n = self.space.n_dofs;
        crate::space::DiscreteFunction::from_coeffs(
            self.space.clone(),
            self.solution[c * n..(c + 1) * n].to_vec(),
        )
    }
}

/// Nested iteration over a fixed mesh hierarchy.
pub fn nested_solve<T: Real>(
    meshes: &[Arc<Triangulation<T>>],
    scheme: SchemeConfig<T>,
    problem: ProblemKind,
    f: &SourceTerm<T>,
    ncfg: &NewtonConfig<T>,
) -> Result<Vec<LevelSolution<T>>, SolveError> {
    let mut levels: Vec<LevelSolution<T>> = Vec::with_capacity(meshes.len());
    for mesh in meshes {
        let prev = levels.last();
        let level = LevelSolution::solve(mesh.clone(), scheme.clone(), problem, f, ncfg, prev)?;
        levels.push(level);
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Pt, Sym2};
    use crate::space::SchemeKind;
    use crate::sparse::norm2;
    use crate::transfer::SmootherChoice;

    fn lshape_meshes(n: usize) -> Vec<Arc<Triangulation<f64>>> {
        let mut meshes = vec![Arc::new(Triangulation::<f64>::lshape())];
        for _ in 1..n {
            meshes.push(Arc::new(meshes.last().unwrap().uniform_refine()));
        }
        meshes
    }

    fn constant_load() -> SourceTerm<f64> {
        let mut f = SourceTerm::zero(1);
        f.f0 = Some(Box::new(|_| 1.0));
        f
    }

    #[test]
    fn zero_source_converges_in_zero_iterations() {
        let mesh = Arc::new(Triangulation::<f64>::lshape());
        let space = Arc::new(DofMap::new(mesh, SchemeConfig::new(SchemeKind::Morley)));
        let disc = Discretization::new(space, ProblemKind::NavierStokes);
        let f = SourceTerm::zero(1);
        let source = disc.source_vector(&f);
        let report =
            newton_solve(&disc, &source, vec![0.0; disc.n_total()], &NewtonConfig::default())
                .unwrap();
        assert_eq!(report.total_iters(), 0);
        assert_eq!(report.residual_history.len(), 1);
        assert!(report.converged);
    }

    #[test]
    fn linear_problem_needs_exactly_one_iteration() {
        for kind in SchemeKind::ALL {
            let mesh = Arc::new(Triangulation::<f64>::lshape().uniform_refine());
            let space = Arc::new(DofMap::new(mesh, SchemeConfig::new(kind)));
            let disc = Discretization::new(space, ProblemKind::Biharmonic);
            let source = disc.source_vector(&constant_load());
            // Arbitrary nonzero start.
            let u0: Vec<f64> = (0..disc.n_total()).map(|i| ((i % 5) as f64) - 2.0).collect();
            let report = newton_solve(&disc, &source, u0, &NewtonConfig::default()).unwrap();
            assert_eq!(report.total_iters(), 1, "{kind:?}");
            assert_eq!(report.residual_history.len(), 2);
            // Post-solve residual is at machine precision.
            let r = disc.residual(&report.solution, &source);
            assert!(norm2(&r) <= 1e-10 * norm2(&source), "{kind:?}");
        }
    }

    #[test]
    fn nse_newton_converges_and_history_contracts() {
        let mesh = Arc::new(Triangulation::<f64>::lshape().uniform_refine());
        let space = Arc::new(DofMap::new(mesh, SchemeConfig::new(SchemeKind::Morley)));
        let disc = Discretization::new(space, ProblemKind::NavierStokes);
        let source = disc.source_vector(&constant_load());
        let report =
            newton_solve(&disc, &source, vec![0.0; disc.n_total()], &NewtonConfig::default())
                .unwrap();
        assert!(report.converged);
        assert!(report.total_iters() >= 1);
        assert_eq!(report.residual_history.len(), report.total_iters() + 1);
        // Stage-2 termination: the history ends non-decreasing iff stage 2
        // performed iterations beyond the accepted one.
        let h = &report.residual_history;
        if report.stage2_iters > 0 {
            assert!(h[h.len() - 2] <= h[h.len() - 1] || h[h.len() - 1] == 0.0);
        }
        // The algebraic residual of the returned solution is tiny.
        let res = algebraic_residual(&disc, &report.solution, &source).unwrap();
        assert!(res <= 1e-9 * norm2(&source), "algebraic residual {res}");
    }

    #[test]
    fn algebraic_residual_scales_linearly_in_perturbation() {
        let mesh = Arc::new(Triangulation::<f64>::lshape().uniform_refine());
        let space = Arc::new(DofMap::new(mesh, SchemeConfig::new(SchemeKind::Morley)));
        let disc = Discretization::new(space, ProblemKind::NavierStokes);
        let source = disc.source_vector(&constant_load());
        let report =
            newton_solve(&disc, &source, vec![0.0; disc.n_total()], &NewtonConfig::default())
                .unwrap();
        let dir: Vec<f64> = (0..disc.n_total()).map(|i| (1.0 + i as f64).sin()).collect();
        let mut values = Vec::new();
        for eps in [1e-4, 1e-5, 1e-6] {
            let v: Vec<f64> =
                report.solution.iter().zip(&dir).map(|(u, d)| u + eps * d).collect();
            values.push(algebraic_residual(&disc, &v, &source).unwrap());
        }
        // Linear scaling: consecutive ratios near 10.
        for w in values.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 10.0).abs() < 0.5, "ratios {values:?}");
        }
    }

    #[test]
    fn nested_solve_matches_cold_start() {
        let meshes = lshape_meshes(3);
        let mut cfg = SchemeConfig::new(SchemeKind::Morley);
        cfg.smoother_r = SmootherChoice::Companion;
        cfg.smoother_sq = SmootherChoice::Companion;
        let f = constant_load();
        let ncfg = NewtonConfig::default();
        let levels =
            nested_solve(&meshes, cfg.clone(), ProblemKind::NavierStokes, &f, &ncfg).unwrap();
        assert_eq!(levels.len(), 3);
        // Cold start on the finest level only.
        let cold = LevelSolution::solve(
            meshes[2].clone(),
            cfg,
            ProblemKind::NavierStokes,
            &f,
            &ncfg,
            None,
        )
        .unwrap();
        let warm = &levels[2];
        let diff: Vec<f64> = warm
            .solution
            .iter()
            .zip(&cold.solution)
            .map(|(a, b)| a - b)
            .collect();
        let fun = crate::space::DiscreteFunction::from_coeffs(warm.space.clone(), diff);
        let err = crate::forms::h_norm(&warm.space.mesh, &fun);
        assert!(err < 1e-8, "nested vs cold-start differ by {err} in the h-norm");
        // Nested iteration needs few steps on refined levels.
        assert!(levels[2].report.total_iters() <= 8);
    }

    #[test]
    fn vke_with_point_load_solves() {
        let mesh = Arc::new(Triangulation::<f64>::lshape().uniform_refine());
        let mut cfg = SchemeConfig::new(SchemeKind::Morley);
        cfg.smoother_r = SmootherChoice::Companion;
        cfg.smoother_sq = SmootherChoice::Companion;
        let space = Arc::new(DofMap::new(mesh, cfg));
        let disc = Discretization::new(space, ProblemKind::VonKarman);
        let mut f = SourceTerm::zero(0);
        f.point_loads.push((Pt::new(-1.0 / 6.0, -1.0 / 6.0), 1.0));
        let source = disc.source_vector(&f);
        assert!(norm2(&source) > 0.0);
        let report =
            newton_solve(&disc, &source, vec![0.0; disc.n_total()], &NewtonConfig::default())
                .unwrap();
        assert!(report.converged);
        let res = algebraic_residual(&disc, &report.solution, &source).unwrap();
        assert!(res <= 1e-9 * norm2(&source));
        // The second component solves -1/2 [u1, u1]: nonzero in general.
        let u2 = report.solution[disc.space.n_dofs..].to_vec();
        assert!(norm2(&u2) > 0.0);
        let _ = Sym2::<f64>::zero();
    }
}
