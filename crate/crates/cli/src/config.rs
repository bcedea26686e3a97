//! Run configuration: flat `key = value` text grouped by `[section]`
//! headers, with `#` comments. Unknown or malformed entries are rejected
//! with the offending field named in the error.
//!
//! ```text
//! [problem]
//! kind = nse-grisvard     # nse-grisvard | vke-pointload | biharmonic-custom
//!
//! [scheme]
//! kind = morley           # morley | dg1 | dg2 | c0ip | wopsip
//! theta = 1
//! sigma1 = 20
//! sigma2 = 20
//! sigma_ip = 20
//!
//! [smoother]
//! r = companion           # id | morley | companion
//! s = companion
//!
//! [adapt]
//! bulk = 0.5
//! max_ndof = 20000
//! max_levels = 100
//! uniform = false
//!
//! [newton]
//! tol = 1e-4
//! max_iter = 50
//!
//! [output]
//! dir = out
//! write_matrix = false
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use plate_fem::problem::ProblemKind;
use plate_fem::solve::NewtonConfig;
use plate_fem::transfer::SmootherChoice;
use plate_fem::{AdaptConfig, SchemeConfig, SchemeKind};

/// Which benchmark the run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchProblem {
    /// Forced Navier-Stokes with the singular exact solution on the L-shape.
    NseGrisvard,
    /// Von Karman plate with a unit point load at the centroid.
    VkePointload,
    /// Linear biharmonic plate with a constant volume load.
    BiharmonicCustom,
}

impl BenchProblem {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nse-grisvard" => Some(BenchProblem::NseGrisvard),
            "vke-pointload" => Some(BenchProblem::VkePointload),
            "biharmonic-custom" => Some(BenchProblem::BiharmonicCustom),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BenchProblem::NseGrisvard => "nse-grisvard",
            BenchProblem::VkePointload => "vke-pointload",
            BenchProblem::BiharmonicCustom => "biharmonic-custom",
        }
    }

    pub fn kind(self) -> ProblemKind {
        match self {
            BenchProblem::NseGrisvard => ProblemKind::NavierStokes,
            BenchProblem::VkePointload => ProblemKind::VonKarman,
            BenchProblem::BiharmonicCustom => ProblemKind::Biharmonic,
        }
    }
}

/// Computational domain; the benchmarks fix the L-shape, custom runs may
/// pick an axis-aligned rectangle grid instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Lshape,
    Rectangle { x0: f64, y0: f64, x1: f64, y1: f64, nx: usize, ny: usize },
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: BenchProblem,
    pub domain: Domain,
    /// Constant volume load, `biharmonic-custom` only.
    pub f0: f64,
    pub scheme: SchemeConfig<f64>,
    pub adapt: AdaptConfig<f64>,
    pub newton: NewtonConfig<f64>,
    pub out_dir: PathBuf,
    /// Also export the final bilinear-form matrix in coordinate format.
    pub write_matrix: bool,
}

/// Configuration error naming the offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.to_string(), message: message.into() }
}

fn parse_f64(field: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse().map_err(|_| err(field, format!("expected a number, got `{v}`")))
}

fn parse_usize(field: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| err(field, format!("expected a non-negative integer, got `{v}`")))
}

fn parse_bool(field: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(field, format!("expected true or false, got `{v}`"))),
    }
}

fn parse_smoother(field: &str, v: &str) -> Result<SmootherChoice, ConfigError> {
    SmootherChoice::parse(v)
        .ok_or_else(|| err(field, format!("unknown smoother `{v}`; expected id, morley or companion")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(err(
                    &format!("line {}", lineno + 1),
                    format!("expected `key = value` or `[section]`, got `{line}`"),
                ));
            };
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(err(&key, "duplicate key"));
            }
        }
        Self::from_map(map)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
        let problem_raw = map.remove("problem.kind").ok_or_else(|| {
            err("problem.kind", "missing; expected nse-grisvard, vke-pointload or biharmonic-custom")
        })?;
        let problem = BenchProblem::parse(&problem_raw).ok_or_else(|| {
            err(
                "problem.kind",
                format!("unknown problem `{problem_raw}`; expected nse-grisvard, vke-pointload or biharmonic-custom"),
            )
        })?;

        let scheme_raw = map
            .remove("scheme.kind")
            .ok_or_else(|| err("scheme.kind", "missing; expected morley, dg1, dg2, c0ip or wopsip"))?;
        let kind = SchemeKind::parse(&scheme_raw).ok_or_else(|| {
            err(
                "scheme.kind",
                format!("unknown scheme `{scheme_raw}`; expected morley, dg1, dg2, c0ip or wopsip"),
            )
        })?;
        let mut scheme = SchemeConfig::new(kind);
        if let Some(v) = map.remove("scheme.theta") {
            scheme.theta = parse_f64("scheme.theta", &v)?;
        }
        if let Some(v) = map.remove("scheme.sigma1") {
            scheme.sigma1 = parse_f64("scheme.sigma1", &v)?;
        }
        if let Some(v) = map.remove("scheme.sigma2") {
            scheme.sigma2 = parse_f64("scheme.sigma2", &v)?;
        }
        if let Some(v) = map.remove("scheme.sigma_ip") {
            scheme.sigma_ip = parse_f64("scheme.sigma_ip", &v)?;
        }
        if let Some(v) = map.remove("smoother.r") {
            scheme.smoother_r = parse_smoother("smoother.r", &v)?;
        }
        if let Some(v) = map.remove("smoother.s") {
            scheme.smoother_sq = parse_smoother("smoother.s", &v)?;
        }
        scheme.validate().map_err(|m| err("scheme", m))?;

        let mut adapt = AdaptConfig::<f64>::default();
        if let Some(v) = map.remove("adapt.bulk") {
            adapt.bulk = parse_f64("adapt.bulk", &v)?;
        }
        if !(adapt.bulk > 0.0 && adapt.bulk <= 1.0) {
            return Err(err("adapt.bulk", format!("must lie in (0, 1], got {}", adapt.bulk)));
        }
        if let Some(v) = map.remove("adapt.max_ndof") {
            adapt.max_ndof = parse_usize("adapt.max_ndof", &v)?;
        }
        if let Some(v) = map.remove("adapt.max_levels") {
            adapt.max_levels = parse_usize("adapt.max_levels", &v)?;
        }
        if adapt.max_levels == 0 {
            return Err(err("adapt.max_levels", "at least one level is required"));
        }
        if let Some(v) = map.remove("adapt.uniform") {
            adapt.uniform = parse_bool("adapt.uniform", &v)?;
        }

        let mut newton = NewtonConfig::<f64>::default();
        if let Some(v) = map.remove("newton.tol") {
            newton.tol = parse_f64("newton.tol", &v)?;
            if newton.tol <= 0.0 {
                return Err(err("newton.tol", "must be positive"));
            }
        }
        if let Some(v) = map.remove("newton.max_iter") {
            newton.max_iter = parse_usize("newton.max_iter", &v)?;
        }

        let f0 = match map.remove("problem.f0") {
            Some(v) if problem == BenchProblem::BiharmonicCustom => parse_f64("problem.f0", &v)?,
            Some(_) => {
                return Err(err("problem.f0", "only meaningful for problem kind biharmonic-custom"))
            }
            None => 1.0,
        };

        let domain_kind = map.remove("domain.kind");
        if domain_kind.is_some() && problem != BenchProblem::BiharmonicCustom {
            return Err(err("domain.kind", "the benchmark problems are posed on the L-shape"));
        }
        let domain = match domain_kind.as_deref() {
            None | Some("lshape") => Domain::Lshape,
            Some("rectangle") => {
                let mut get = |key: &str, default: f64| -> Result<f64, ConfigError> {
                    match map.remove(key) {
                        Some(v) => parse_f64(key, &v),
                        None => Ok(default),
                    }
                };
                let x0 = get("domain.x0", 0.0)?;
                let y0 = get("domain.y0", 0.0)?;
                let x1 = get("domain.x1", 1.0)?;
                let y1 = get("domain.y1", 1.0)?;
                if !(x1 > x0 && y1 > y0) {
                    return Err(err("domain.x1", "the rectangle must have positive extent"));
                }
                let nx = match map.remove("domain.nx") {
                    Some(v) => parse_usize("domain.nx", &v)?,
                    None => 1,
                };
                let ny = match map.remove("domain.ny") {
                    Some(v) => parse_usize("domain.ny", &v)?,
                    None => 1,
                };
                if nx == 0 || ny == 0 {
                    return Err(err("domain.nx", "the grid needs at least one cell per direction"));
                }
                Domain::Rectangle { x0, y0, x1, y1, nx, ny }
            }
            Some(other) => {
                return Err(err(
                    "domain.kind",
                    format!("unknown domain `{other}`; expected lshape or rectangle"),
                ))
            }
        };

        let out_dir = PathBuf::from(map.remove("output.dir").unwrap_or_else(|| "out".into()));
        let write_matrix = match map.remove("output.write_matrix") {
            Some(v) => parse_bool("output.write_matrix", &v)?,
            None => false,
        };

        if let Some((key, _)) = map.into_iter().next() {
            return Err(err(&key, "unknown key"));
        }

        Ok(RunConfig { problem, domain, f0, scheme, adapt, newton, out_dir, write_matrix })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::parse(
            "[problem]\nkind = nse-grisvard\n[scheme]\nkind = morley\n",
        )
        .unwrap();
        assert_eq!(cfg.problem, BenchProblem::NseGrisvard);
        assert_eq!(cfg.scheme.kind, SchemeKind::Morley);
        assert_eq!(cfg.scheme.theta, 1.0);
        assert_eq!(cfg.scheme.sigma1, 20.0);
        assert_eq!(cfg.adapt.bulk, 0.5);
        assert_eq!(cfg.newton.tol, 1e-4);
        assert!(!cfg.adapt.uniform);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn comments_sections_and_overrides() {
        let cfg = RunConfig::parse(
            "# experiment\n[problem]\nkind = vke-pointload  # trailing comment\n\
             [scheme]\nkind = dg1\ntheta = -1\nsigma1 = 35\n\
             [smoother]\nr = id\ns = morley\n\
             [adapt]\nuniform = true\nmax_levels = 3\n[output]\ndir = /tmp/x\n",
        )
        .unwrap();
        assert_eq!(cfg.problem, BenchProblem::VkePointload);
        assert_eq!(cfg.scheme.kind, SchemeKind::Dg1);
        assert_eq!(cfg.scheme.theta, -1.0);
        assert_eq!(cfg.scheme.sigma1, 35.0);
        assert_eq!(cfg.scheme.smoother_r, SmootherChoice::Id);
        assert_eq!(cfg.scheme.smoother_sq, SmootherChoice::Morley);
        assert!(cfg.adapt.uniform);
        assert_eq!(cfg.adapt.max_levels, 3);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn invalid_scheme_names_the_field() {
        let e = RunConfig::parse("[problem]\nkind = nse-grisvard\n[scheme]\nkind = cubic\n")
            .unwrap_err();
        assert_eq!(e.field, "scheme.kind");
        assert!(e.message.contains("cubic"));
        assert!(e.to_string().contains("scheme.kind"));
    }

    #[test]
    fn unknown_and_malformed_keys_are_rejected() {
        let e = RunConfig::parse(
            "[problem]\nkind = nse-grisvard\n[scheme]\nkind = morley\nsigma9 = 1\n",
        )
        .unwrap_err();
        assert_eq!(e.field, "scheme.sigma9");

        let e = RunConfig::parse("problem kind nse\n").unwrap_err();
        assert!(e.field.contains("line 1"));

        let e = RunConfig::parse(
            "[problem]\nkind = nse-grisvard\nf0 = 2\n[scheme]\nkind = morley\n",
        )
        .unwrap_err();
        assert_eq!(e.field, "problem.f0");

        let e = RunConfig::parse(
            "[problem]\nkind = nse-grisvard\n[scheme]\nkind = morley\n[adapt]\nbulk = 1.5\n",
        )
        .unwrap_err();
        assert_eq!(e.field, "adapt.bulk");
    }
}
