//! JSON run configuration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MetricSpec, ScalarField, TorusGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    #[serde(default = "flat")]
    pub metric: MetricSpec,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn flat() -> MetricSpec {
    MetricSpec::Flat
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub n: usize,
    pub res: usize,
    /// One period per real axis; unit periods when omitted.
    #[serde(default)]
    pub periods: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    Calabi,
    Envelope,
    Degenerate,
    Singular,
    Gauduchon,
    Check,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub mode: Mode,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// In `solve` mode the exponent `f` of `e^{lambda phi + f}`; in
    /// `calabi`, `degenerate` and `singular` modes the density itself.
    #[serde(default)]
    pub f: Option<FourierSeries>,
    #[serde(default)]
    pub obstacle: Option<FourierSeries>,
    #[serde(default)]
    pub klt: Option<KltConfig>,
    #[serde(default = "default_p")]
    pub p_exponent: f64,
    /// Suite name for `check` mode.
    #[serde(default)]
    pub suite: Option<String>,
}

fn default_p() -> f64 {
    2.0
}

/// `constant + sum amplitude * cos(2 pi <index, x / P> + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSeries {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub modes: Vec<FourierMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    /// Integer frequency per real axis.
    pub index: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl FourierSeries {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            modes: Vec::new(),
        }
    }

    pub fn sample(&self, grid: &TorusGrid) -> Result<ScalarField> {
        let d = grid.real_dim();
        if let Some(m) = self.modes.iter().find(|m| m.index.len() != d) {
            return Err(Error::Config(format!(
                "fourier mode index {:?} needs {d} entries",
                m.index
            )));
        }
        let periods = grid.periods().to_vec();
        ScalarField::from_fn(grid, |x| {
            self.constant
                + self
                    .modes
                    .iter()
                    .map(|m| {
                        let arg: f64 = m
                            .index
                            .iter()
                            .zip(x.iter().zip(&periods))
                            .map(|(&k, (&xa, &p))| k as f64 * xa / p)
                            .sum();
                        m.amplitude * (2.0 * PI * arg + m.phase).cos()
                    })
                    .sum::<f64>()
        })
        .map_err(|e| Error::Config(format!("fourier series: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KltConfig {
    pub points: Vec<Vec<f64>>,
    pub exponents: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
    #[serde(default)]
    pub schedules: Schedules,
}

fn default_max_newton() -> usize {
    crate::solver::DEFAULT_MAX_NEWTON
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: None,
            max_newton: default_max_newton(),
            schedules: Schedules::default(),
        }
    }
}

/// Parameter schedules; omitted ones take the library defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedules {
    /// Continuity parameter; when given in `solve` mode the continuity path
    /// is run instead of a single Newton solve.
    #[serde(default)]
    pub t: Option<Vec<f64>>,
    /// `j` values of the `lambda_j = 1/j` cross-check in `calabi` mode.
    #[serde(default)]
    pub lambda_js: Option<Vec<usize>>,
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    /// Mollification radii; defaults to `4h, 2h, h`.
    #[serde(default)]
    pub delta: Option<Vec<f64>>,
    /// Penalization parameters for `envelope` mode.
    #[serde(default)]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: String,
    #[serde(default = "yes")]
    pub emit_fields: bool,
    #[serde(default = "yes")]
    pub emit_csv: bool,
}

fn default_dir() -> String {
    "out".into()
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            emit_fields: true,
            emit_csv: true,
        }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    /// Parses and validates; errors name the offending key, and syntax
    /// errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        let g = &self.geometry;
        match &g.periods {
            Some(p) => TorusGrid::with_periods(g.n, g.res, p),
            None => TorusGrid::new(g.n, g.res),
        }
        .map_err(|e| bad("geometry", e))
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let n = grid.n();
        self.metric.validate(n).map_err(|e| bad("metric", e))?;
        let p = &self.problem;
        if let Some(lambda) = p.lambda {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(bad("problem.lambda", format!("must be >= 0, got {lambda}")));
            }
        }
        if !(p.p_exponent > 1.0) {
            return Err(bad(
                "problem.p_exponent",
                format!("must exceed 1, got {}", p.p_exponent),
            ));
        }
        if let Some(tol) = self.solver.tol {
            if !(tol > 0.0) {
                return Err(bad("solver.tol", format!("must be positive, got {tol}")));
            }
        }
        if self.solver.max_newton == 0 {
            return Err(bad("solver.max_newton", "must be at least 1"));
        }
        for (key, series) in [("problem.f", &p.f), ("problem.obstacle", &p.obstacle)] {
            if let Some(s) = series {
                s.sample(&grid).map_err(|e| bad(key, e))?;
            }
        }
        let degenerate = matches!(self.metric, MetricSpec::Degenerate { .. });
        match p.mode {
            Mode::Solve => {
                let lambda = p
                    .lambda
                    .ok_or_else(|| bad("problem.lambda", "required in solve mode"))?;
                if lambda <= 0.0 {
                    return Err(bad(
                        "problem.lambda",
                        "must be > 0 in solve mode (use calabi for 0)",
                    ));
                }
                if self.solver.schedules.t.is_some() && lambda != 1.0 {
                    return Err(bad(
                        "solver.schedules.t",
                        "the continuity path needs lambda = 1",
                    ));
                }
            }
            Mode::Calabi | Mode::Singular => {
                if p.lambda.is_some_and(|l| l != 0.0) {
                    return Err(bad("problem.lambda", "must be 0 or omitted in this mode"));
                }
                if p.mode == Mode::Singular && p.klt.is_none() {
                    return Err(bad("problem.klt", "required in singular mode"));
                }
            }
            Mode::Degenerate => {
                if !degenerate {
                    return Err(bad("metric", "degenerate mode needs the degenerate metric"));
                }
            }
            Mode::Envelope => {
                if p.obstacle.is_none() {
                    return Err(bad("problem.obstacle", "required in envelope mode"));
                }
            }
            Mode::Gauduchon => {}
            Mode::Check => {
                let suite = p.suite.as_deref().unwrap_or("all");
                super::checks::Suite::parse(suite).map_err(|e| bad("problem.suite", e))?;
            }
        }
        if degenerate && p.mode != Mode::Degenerate && p.mode != Mode::Check {
            return Err(bad(
                "metric",
                "the degenerate form is only a reference for degenerate mode",
            ));
        }
        if p.klt.is_some() && p.mode != Mode::Singular {
            return Err(bad("problem.klt", "only used in singular mode"));
        }
        if let Some(t) = &self.solver.schedules.t {
            if t.first() != Some(&0.0)
                || t.last() != Some(&1.0)
                || t.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(bad(
                    "solver.schedules.t",
                    "must increase strictly from 0 to 1",
                ));
            }
        }
        if let Some(eps) = &self.solver.schedules.eps {
            if eps.is_empty()
                || eps.iter().any(|e| *e <= 0.0)
                || eps.windows(2).any(|w| w[1] >= w[0])
            {
                return Err(bad(
                    "solver.schedules.eps",
                    "must be positive and strictly decreasing",
                ));
            }
        }
        if let Some(js) = &self.solver.schedules.lambda_js {
            if js.len() < 2 || js.contains(&0) {
                return Err(bad(
                    "solver.schedules.lambda_js",
                    "needs at least two positive entries",
                ));
            }
        }
        if let Some(l) = &self.solver.schedules.lambda {
            if l.is_empty() || l[0] < 1.0 || l.windows(2).any(|w| w[1] <= w[0]) {
                return Err(bad(
                    "solver.schedules.lambda",
                    "must increase and start at >= 1",
                ));
            }
        }
        if let Some(d) = &self.solver.schedules.delta {
            if d.is_empty() || d.iter().any(|x| !(*x >= 0.0)) {
                return Err(bad("solver.schedules.delta", "must be nonnegative"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "geometry": {"n": 1, "res": 64},
        "metric": {"kind": "flat"},
        "problem": {"mode": "solve", "lambda": 1, "f": {"constant": 0}}
    }"#;

    #[test]
    fn minimal_parses() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.problem.mode, Mode::Solve);
        assert_eq!(c.output.directory, "out");
    }

    #[test]
    fn negative_lambda_names_key() {
        let text = MINIMAL.replace("\"lambda\": 1", "\"lambda\": -1");
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("problem.lambda"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("\"mode\"", "\"colour\": 1, \"mode\"");
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = RunConfig::from_json("{\"geometry\": ")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 1 column"), "{err}");
    }

    #[test]
    fn fourier_sampling() {
        let g = TorusGrid::new(1, 16).unwrap();
        let s = FourierSeries {
            constant: 1.0,
            modes: vec![FourierMode {
                index: vec![1, 0],
                amplitude: 0.3,
                phase: 0.0,
            }],
        };
        let f = s.sample(&g).unwrap();
        assert!((f.values()[0] - 1.3).abs() < 1e-15);
        assert!((f.max() - 1.3).abs() < 1e-15 && (f.min() - 0.7).abs() < 1e-15);
        let bad = FourierSeries {
            constant: 0.0,
            modes: vec![FourierMode {
                index: vec![1],
                amplitude: 1.0,
                phase: 0.0,
            }],
        };
        assert!(bad.sample(&g).is_err());
    }
}
