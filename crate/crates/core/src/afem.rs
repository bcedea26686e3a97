//! The adaptive loop: Doerfler marking, newest-vertex refinement, and the
//! per-level convergence history.

use std::sync::Arc;
use std::time::Instant;

use crate::estimate::{estimate_biharmonic, estimate_nse, estimate_vke, EstimatorReport};
use crate::forms::SourceTerm;
use crate::mesh::{MarkSet, Triangulation};
use crate::problem::ProblemKind;
use crate::scalar::Real;
use crate::solve::{LevelSolution, NewtonConfig, SolveError};
use crate::space::SchemeConfig;
use std::fmt::Write as _;

/// Parameters of the adaptive loop.
#[derive(Clone, Debug)]
pub struct AdaptConfig<T> {
    /// Doerfler bulk parameter `theta_D` in `(0, 1]`.
    pub bulk: T,
    /// Stop after the first level whose dimension reaches this bound.
    pub max_ndof: usize,
    /// Refine uniformly instead of adaptively (for convergence studies).
    pub uniform: bool,
    /// Hard cap on the number of levels regardless of `max_ndof`.
    pub max_levels: usize,
}

impl<T: Real> Default for AdaptConfig<T> {
    fn default() -> Self {
        AdaptConfig { bulk: T::half(), max_ndof: 20_000, uniform: false, max_levels: 100 }
    }
}

/// Doerfler marking: the minimal set `M` with
/// `sum_{T in M} sigma^2(T) >= theta_D sum_T sigma^2(T)`,
/// realized as the shortest prefix of the indicators sorted descending,
/// ties broken by triangle index. `theta_D = 1` marks every triangle with a
/// positive indicator; `theta_D -> 0+` marks only the maximal one.
pub fn doerfler_mark<T: Real>(indicators: &[T], bulk: T) -> MarkSet {
    assert!(
        bulk > T::zero() && bulk <= T::one(),
        "bulk parameter must lie in (0, 1]"
    );
    let total: T = indicators.iter().copied().sum();
    if total <= T::zero() {
        return MarkSet::new(Vec::new());
    }
    let target = bulk * total;
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| {
        indicators[b]
            .partial_cmp(&indicators[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut marked = Vec::new();
    let mut acc = T::zero();
    for t in order {
        if indicators[t] <= T::zero() {
            break;
        }
        marked.push(t);
        acc += indicators[t];
        if acc >= target {
            break;
        }
    }
    MarkSet::new(marked)
}

/// One row of the convergence history.
#[derive(Clone, Debug)]
pub struct LevelRecord<T> {
    pub level: usize,
    pub ndof: usize,
    pub ntriangles: usize,
    pub sigma: T,
    pub osc: T,
    /// Discrete error `||u - u_h||_h` when an exact solution is available.
    pub error_h: Option<T>,
    /// Efficiency index `sigma / error_h`.
    pub ef: Option<T>,
    pub newton_iters: usize,
    /// Wall-clock seconds spent on this level (solve + estimate).
    pub wall_time: f64,
}

/// The per-level convergence history of one adaptive (or uniform) run.
#[derive(Clone, Debug)]
pub struct AdaptHistory<T> {
    pub levels: Vec<LevelRecord<T>>,
}

impl<T> Default for AdaptHistory<T> {
    fn default() -> Self {
        AdaptHistory { levels: Vec::new() }
    }
}

impl<T: Real> AdaptHistory<T> {
    fn push(&mut self, rec: LevelRecord<T>) {
        if let Some(last) = self.levels.last() {
            assert!(
                rec.ndof > last.ndof,
                "refinement must strictly increase the dimension"
            );
        }
        self.levels.push(rec);
    }

    /// CSV with one row per level. Wall times are excluded so that repeated
    /// identical runs serialize byte-identically.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,ndof,ntriangles,sigma,osc,error_h,ef,newton_iters\n");
        for r in &self.levels {
            let opt = |v: &Option<T>| match v {
                Some(x) => format!("{x}"),
                None => "NaN".to_string(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.level,
                r.ndof,
                r.ntriangles,
                r.sigma,
                r.osc,
                opt(&r.error_h),
                opt(&r.ef),
                r.newton_iters
            )
            .unwrap();
        }
        out
    }

    /// Least-squares slope of `log sigma` against `log ndof` over the last
    /// (up to) five levels.
    pub fn sigma_slope(&self) -> Option<T> {
        let pts: Vec<(T, T)> = self
            .levels
            .iter()
            .filter(|r| r.sigma > T::zero())
            .map(|r| (T::c(r.ndof as f64), r.sigma))
            .collect();
        tail_slope(&pts)
    }

    /// Least-squares slope of `log error_h` against `log ndof` over the last
    /// (up to) five levels with a recorded error.
    pub fn error_slope(&self) -> Option<T> {
        let pts: Vec<(T, T)> = self
            .levels
            .iter()
            .filter_map(|r| r.error_h.map(|e| (T::c(r.ndof as f64), e)))
            .filter(|(_, e)| *e > T::zero())
            .collect();
        tail_slope(&pts)
    }
}

fn tail_slope<T: Real>(pts: &[(T, T)]) -> Option<T> {
    let n = pts.len();
    if n < 2 {
        return None;
    }
    Some(loglog_slope(&pts[n.saturating_sub(5)..]))
}

/// Least-squares slope of `log y` versus `log x`.
pub fn loglog_slope<T: Real>(pts: &[(T, T)]) -> T {
    assert!(pts.len() >= 2, "slope needs at least two points");
    let n = T::c(pts.len() as f64);
    let (mut sx, mut sy, mut sxx, mut sxy) = (T::zero(), T::zero(), T::zero(), T::zero());
    for &(x, y) in pts {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Run the problem's a posteriori estimator on a solved level.
pub fn estimate_solution<T: Real>(
    level: &LevelSolution<T>,
    f: &SourceTerm<T>,
) -> EstimatorReport<T> {
    match level.disc.problem {
        ProblemKind::Biharmonic => estimate_biharmonic(&level.component(0), f),
        ProblemKind::NavierStokes => estimate_nse(&level.component(0), f),
        ProblemKind::VonKarman => estimate_vke(&level.component(0), &level.component(1), f),
    }
}

/// Result of [`adapt_loop`]: the history plus the finest-level solution and
/// its estimator report.
pub struct AdaptOutcome<T: Real> {
    pub history: AdaptHistory<T>,
    pub final_level: LevelSolution<T>,
    pub final_report: EstimatorReport<T>,
}

impl<T: Real> AdaptOutcome<T> {
    pub fn final_mesh(&self) -> &Arc<Triangulation<T>> {
        &self.final_level.space.mesh
    }
}

/// The adaptive loop SOLVE -> ESTIMATE -> MARK -> REFINE with nested Newton
/// initial guesses, run until a level reaches `max_ndof` unknowns (that
/// level is still solved and recorded). With `uniform` set, every triangle
/// is refined on each level instead of the Doerfler selection.
///
/// `exact_error` computes `||u - u_h||_h` against a known solution; when
/// given, the history records the error and the efficiency index.
/// `on_level` observes every solved level (artifact writers).
pub fn adapt_loop<T: Real>(
    initial: Arc<Triangulation<T>>,
    scheme: SchemeConfig<T>,
    problem: ProblemKind,
    f: &SourceTerm<T>,
    acfg: &AdaptConfig<T>,
    ncfg: &NewtonConfig<T>,
    exact_error: Option<&dyn Fn(&LevelSolution<T>) -> T>,
    mut on_level: Option<&mut dyn FnMut(usize, &LevelSolution<T>, &EstimatorReport<T>)>,
) -> Result<AdaptOutcome<T>, SolveError> {
    let mut history = AdaptHistory::default();
    let mut mesh = initial;
    let mut previous: Option<LevelSolution<T>> = None;

    assert!(acfg.max_levels >= 1, "at least one level must be allowed");
    for level in 0..acfg.max_levels {
        let start = Instant::now();
        let solved =
            LevelSolution::solve(mesh.clone(), scheme.clone(), problem, f, ncfg, previous.as_ref())?;
        let mut report = estimate_solution(&solved, f);
        let error_h = exact_error.map(|err| err(&solved));
        if let Some(e) = error_h {
            report.set_exact_error(e);
        }
        if let Some(observe) = on_level.as_deref_mut() {
            observe(level, &solved, &report);
        }
        history.push(LevelRecord {
            level,
            ndof: solved.disc.n_total(),
            ntriangles: mesh.n_triangles(),
            sigma: report.sigma(),
            osc: report.osc(),
            error_h,
            ef: report.ef,
            newton_iters: solved.report.total_iters(),
            wall_time: start.elapsed().as_secs_f64(),
        });

        let done =
            solved.disc.n_total() >= acfg.max_ndof || level + 1 == acfg.max_levels;
        if done {
            return Ok(AdaptOutcome { history, final_level: solved, final_report: report });
        }

        let next = if acfg.uniform {
            mesh.uniform_refine()
        } else {
            let marks = doerfler_mark(&report.sigma_sq, acfg.bulk);
            if marks.is_empty() {
                // Estimator is exactly zero: nothing left to refine.
                return Ok(AdaptOutcome { history, final_level: solved, final_report: report });
            }
            mesh.refine(&marks)
        };
        debug_assert!(next.check_descends_from(&mesh).is_ok());
        mesh = Arc::new(next);
        previous = Some(solved);
    }
    unreachable!("the final level always returns");
}
