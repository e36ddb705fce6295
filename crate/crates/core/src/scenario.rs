//! JSON scenario files and the batch runners behind the command line.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controlled::{default_alpha, validate_exponents, ControlledPath};
use crate::error::{Error, Result};
use crate::integral::{integral_controlled, rough_integral, RateRow};
use crate::lipschitz::{compose, LipFunction};
use crate::rde::{solve, SolveReport, SolverConfig};
use crate::rough_path::{lift_path, GeometricRoughPath, PiecewiseLinearPath};
use crate::samples::{random_polyline, rough_polyline};
use crate::verify::{run_suites, VerifyReport, VerifyToggles};

pub const SCHEMA_VERSION: u32 = 1;

/// A generated driver, used when no CSV input is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    /// `x_t = x0 + t·direction` on `segments` equal steps.
    Linear {
        x0: Vec<f64>,
        direction: Vec<f64>,
        horizon: f64,
        segments: usize,
    },
    RandomWalk {
        segments: usize,
        horizon: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Midpoint displacement on `2^levels` segments.
    Rough {
        levels: u32,
        hurst: f64,
        horizon: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Solver settings other than the exponents, which live at the top level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default)]
    pub max_picard_iters: Option<usize>,
    #[serde(default)]
    pub contraction_tol: Option<f64>,
    #[serde(default)]
    pub tau_init: Option<f64>,
    #[serde(default)]
    pub tau_shrink: Option<f64>,
    #[serde(default)]
    pub max_patches: Option<usize>,
    #[serde(default)]
    pub contraction_ratio: Option<f64>,
    #[serde(default)]
    pub explosion_bound: Option<f64>,
    #[serde(default)]
    pub enforce_unit_ball: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    /// Path CSV, relative to the config file.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub driver: Option<DriverSpec>,
    pub d: usize,
    #[serde(rename = "N")]
    pub depth: usize,
    /// Defaults to the midpoint of `(1/(N+1), β)`.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub beta: f64,
    #[serde(default)]
    pub field: Option<LipFunction>,
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    /// Grid time to solve or integrate up to; defaults to the last grid time.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub verify: VerifyToggles,
    /// Also write `residuals.csv` from `solve`.
    #[serde(default)]
    pub residual_log: bool,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    /// Schema, shape and exponent checks; returns any exponent warning.
    pub fn validate(&self) -> Result<Option<String>> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        crate::tensor::check_caps(self.d, self.depth)?;
        let warn = validate_exponents(self.depth, self.alpha(), self.beta)?;
        if let Some(input) = &self.input {
            let p = self.base_dir.join(input);
            if !p.is_file() {
                return Err(Error::InvalidInput(format!("input file {} not found", p.display())));
            }
        }
        if self.input.is_some() && self.driver.is_some() {
            return Err(Error::InvalidInput("give either `input` or `driver`, not both".into()));
        }
        self.solver_config().validate(self.depth)?;
        Ok(warn)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| default_alpha(self.depth, self.beta))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn solver_config(&self) -> SolverConfig {
        let o = &self.solver;
        let base = SolverConfig::new(self.alpha(), self.beta);
        SolverConfig {
            max_picard_iters: o.max_picard_iters.unwrap_or(base.max_picard_iters),
            contraction_tol: o.contraction_tol.unwrap_or(base.contraction_tol),
            tau_init: o.tau_init.unwrap_or(base.tau_init),
            tau_shrink: o.tau_shrink.unwrap_or(base.tau_shrink),
            max_patches: o.max_patches.unwrap_or(base.max_patches),
            contraction_ratio: o.contraction_ratio.unwrap_or(base.contraction_ratio),
            explosion_bound: o.explosion_bound.unwrap_or(base.explosion_bound),
            enforce_unit_ball: o.enforce_unit_ball.unwrap_or(base.enforce_unit_ball),
            ..base
        }
    }

    /// The piecewise-linear driver, read from `input` or generated from `driver`.
    pub fn path(&self) -> Result<PiecewiseLinearPath> {
        let p = match (&self.input, &self.driver) {
            (Some(input), None) => PiecewiseLinearPath::from_csv(self.base_dir.join(input))?,
            (None, Some(spec)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                match spec {
                    DriverSpec::Linear { x0, direction, horizon, segments } => {
                        PiecewiseLinearPath::linear(x0, direction, *horizon, *segments)?
                    }
                    DriverSpec::RandomWalk { segments, horizon, scale } => {
                        random_polyline(&mut rng, self.d, *segments, *horizon, *scale)?
                    }
                    DriverSpec::Rough { levels, hurst, horizon, scale } => {
                        rough_polyline(&mut rng, self.d, *levels, *hurst, *horizon, *scale)?
                    }
                }
            }
            _ => return Err(Error::InvalidInput("config needs exactly one of `input` or `driver`".into())),
        };
        if p.dim() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "driver has dimension {}, config says d = {}",
                p.dim(),
                self.d
            )));
        }
        Ok(p)
    }

    pub fn rough_path(&self) -> Result<GeometricRoughPath> {
        lift_path(&self.path()?, self.depth, self.beta)
    }

    fn field(&self) -> Result<&LipFunction> {
        self.field
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("config has no `field`".into()))
    }

    fn end_index(&self, x: &GeometricRoughPath) -> Result<usize> {
        match self.horizon {
            None => Ok(x.len() - 1),
            Some(t) => x
                .index_of(t)
                .ok_or_else(|| Error::InvalidInput(format!("horizon {t} is not a grid time"))),
        }
    }

    fn out_dir(&self, out: Option<&Path>) -> PathBuf {
        out.map(Path::to_path_buf)
            .or_else(|| self.output_dir.as_ref().map(|p| self.base_dir.join(p)))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, contents)?;
    Ok(p)
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormRow {
    pub level: usize,
    pub beta: f64,
    pub norm: f64,
}

/// Writes `rough_path.json` and `holder_norms.csv`.
pub fn run_lift(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let x = cfg.rough_path()?;
    let rows = (1..=cfg.depth)
        .map(|level| {
            Ok(NormRow {
                level,
                beta: cfg.beta,
                norm: x.holder_norm(level, cfg.beta)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = cfg.out_dir(out);
    Ok(vec![
        write(&dir, "rough_path.json", &x.to_json())?,
        write(&dir, "holder_norms.csv", &csv_string(&rows)?)?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralSummary {
    pub start: f64,
    pub end: f64,
    pub value: Vec<f64>,
    pub error_estimate: f64,
}

/// Integrates `F(X)` for the canonical lift of the driver, writing
/// `integral.json`, `rates.csv` and the running integral in `integral_path.csv`.
pub fn run_integrate(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<(IntegralSummary, Vec<RateRow>)> {
    let x = cfg.rough_path()?;
    let end = cfg.end_index(&x)?;
    let f = cfg.field()?;
    let y = ControlledPath::canonical_lift(&x, cfg.alpha())?;
    let z = compose(f, &y, &x)?;
    let est = rough_integral(&z, &x, 0, end)?;
    let running = integral_controlled(&z, &x, &vec![0.0; z.target() / cfg.d])?.restrict(0, end)?;
    let summary = IntegralSummary {
        start: x.times()[0],
        end: x.times()[end],
        value: est.value.clone(),
        error_estimate: est.error_estimate,
    };
    let dir = cfg.out_dir(out);
    write(&dir, "integral.json", &pretty(&summary))?;
    write(&dir, "rates.csv", &csv_string(&est.rows)?)?;
    write(&dir, "integral_path.csv", &running.to_csv_string())?;
    Ok((summary, est.rows))
}

#[derive(Debug, Clone, Serialize)]
struct SolveFile<'a> {
    status: &'a str,
    partial: bool,
    error: Option<String>,
    report: &'a SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ResidualRow {
    patch: usize,
    iteration: usize,
    residual: f64,
}

/// Writes `solution.csv`, `report.json` and optionally `residuals.csv`.
/// On solver failure the partial solution is still written and the report
/// is flagged before the error is returned.
pub fn run_solve(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<(ControlledPath, SolveReport)> {
    let x = cfg.rough_path()?;
    let f = cfg.field()?;
    let y0 = cfg
        .y0
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config has no `y0`".into()))?;
    let end = cfg.end_index(&x)?;
    let solver = cfg.solver_config();
    let dir = cfg.out_dir(out);
    let result = solve(f, &x, y0, x.times()[end], &solver);
    let (path, report, error) = match result {
        Ok((y, r)) => (Some(y), r, None),
        Err(fail) => (fail.partial, fail.report, Some(fail.error)),
    };
    if let Some(y) = &path {
        write(&dir, "solution.csv", &y.to_csv_string())?;
    }
    let file = SolveFile {
        status: if error.is_some() { "failed" } else { "ok" },
        partial: error.is_some() && path.is_some(),
        error: error.as_ref().map(|e| e.to_string()),
        report: &report,
    };
    write(&dir, "report.json", &pretty(&file))?;
    if cfg.residual_log {
        let rows: Vec<ResidualRow> = report
            .patches
            .iter()
            .enumerate()
            .flat_map(|(p, pr)| {
                pr.residuals.iter().enumerate().map(move |(i, &r)| ResidualRow {
                    patch: p,
                    iteration: i + 1,
                    residual: r,
                })
            })
            .collect();
        write(&dir, "residuals.csv", &csv_string(&rows)?)?;
    }
    match error {
        None => Ok((path.expect("solution present"), report)),
        Some(e) => Err(e),
    }
}

/// Runs the selected suites and writes `verify.json`.
pub fn run_verify(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<VerifyReport> {
    let report = run_suites(cfg.d, cfg.depth, cfg.alpha(), cfg.beta, cfg.seed, &cfg.verify)?;
    write(&cfg.out_dir(out), "verify.json", &pretty(&report))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(extra: &str) -> String {
        format!(r#"{{"schema_version": 1, "d": 1, "N": 3, "beta": 0.3333333333333333{extra}}}"#)
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ScenarioConfig::from_json(&base(r#", "alpha": 0.2"#), ".").is_err());
        assert!(ScenarioConfig::from_json(&base(r#", "input": "missing.csv""#), ".").is_err());
        assert!(ScenarioConfig::from_json(&base(r#", "bogus": 1"#), ".").is_err());
        let v2 = base("").replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(ScenarioConfig::from_json(&v2, ".").is_err());
        let ok = ScenarioConfig::from_json(&base(""), ".").unwrap();
        assert!((ok.alpha() - (0.25 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!(ok.path().is_err());
    }

    #[test]
    fn exponential_scenario() {
        let text = base(
            r#", "driver": {"kind": "linear", "x0": [0.0], "direction": [1.0], "horizon": 1.0, "segments": 256},
               "field": {"spec": {"kind": "linear", "matrix": [[1.0]]}, "degree": 3},
               "y0": [1.0], "residual_log": true"#,
        );
        let cfg = ScenarioConfig::from_json(&text, ".").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (y, rep) = run_solve(&cfg, Some(dir.path())).unwrap();
        assert!((y.endpoint()[0] - std::f64::consts::E).abs() < 1e-7);
        assert!(rep.patches.len() >= 1);
        for f in ["solution.csv", "report.json", "residuals.csv"] {
            assert!(dir.path().join(f).is_file());
        }
        let report = fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(!report.contains("wall_time"));
    }

    #[test]
    fn lift_constant_path() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("p.csv"), "t,x1,x2\n0,1,2\n0.5,1,2\n1,1,2\n").unwrap();
        let text = r#"{"schema_version": 1, "input": "p.csv", "d": 2, "N": 2, "beta": 0.5}"#;
        let cfg = ScenarioConfig::from_json(text, dir.path()).unwrap();
        let out = dir.path().join("out");
        run_lift(&cfg, Some(&out)).unwrap();
        let norms = fs::read_to_string(out.join("holder_norms.csv")).unwrap();
        assert_eq!(norms, "level,beta,norm\n1,0.5,0.0\n2,0.5,0.0\n");
    }
}
