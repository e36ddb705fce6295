//! Solving `dY = F(Y) dX` as a fixed point of `Y ↦ Y_0 + ∫ F(Y) dX` on short
//! intervals, patched together to a grid horizon.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::controlled::{apply_leading_level, concatenate, ctrl_distance, l1, validate_exponents, ControlledPath};
use crate::error::{Error, Result};
use crate::integral::{integral_controlled, uncurry};
use crate::lipschitz::{compose, compose_at, surjection_table, LipFunction};
use crate::rough_path::GeometricRoughPath;

fn default_iters() -> usize {
    60
}
fn default_tol() -> f64 {
    1e-11
}
fn default_tau() -> f64 {
    f64::INFINITY
}
fn default_shrink() -> f64 {
    0.5
}
fn default_patches() -> usize {
    10_000
}
fn default_ratio() -> f64 {
    0.5
}
fn default_explosion() -> f64 {
    1e8
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_iters")]
    pub max_picard_iters: usize,
    #[serde(default = "default_tol")]
    pub contraction_tol: f64,
    /// Initial patch length in time units; clipped to the horizon.
    #[serde(default = "default_tau")]
    pub tau_init: f64,
    #[serde(default = "default_shrink")]
    pub tau_shrink: f64,
    #[serde(default = "default_patches")]
    pub max_patches: usize,
    /// Largest tolerated ratio of successive residuals.
    #[serde(default = "default_ratio")]
    pub contraction_ratio: f64,
    /// Abort once `max_t |Y^0_t|` exceeds this.
    #[serde(default = "default_explosion")]
    pub explosion_bound: f64,
    /// Reject local fixed points with `‖Y - W‖_{X;α} > 1`.
    #[serde(default = "default_true")]
    pub enforce_unit_ball: bool,
}

impl SolverConfig {
    pub fn new(alpha: f64, beta: f64) -> Self {
        SolverConfig {
            alpha,
            beta,
            max_picard_iters: default_iters(),
            contraction_tol: default_tol(),
            tau_init: default_tau(),
            tau_shrink: default_shrink(),
            max_patches: default_patches(),
            contraction_ratio: default_ratio(),
            explosion_bound: default_explosion(),
            enforce_unit_ball: true,
        }
    }

    /// Checks the exponents against `N` and returns any warning.
    pub fn validate(&self, depth: usize) -> Result<Option<String>> {
        let warn = validate_exponents(depth, self.alpha, self.beta)?;
        if self.max_picard_iters == 0 || self.max_patches == 0 {
            return Err(Error::InvalidInput("iteration and patch limits must be positive".into()));
        }
        if !(self.contraction_tol > 0.0) || !(self.tau_init > 0.0) {
            return Err(Error::InvalidInput("contraction_tol and tau_init must be positive".into()));
        }
        if !(self.tau_shrink > 0.0 && self.tau_shrink < 1.0) {
            return Err(Error::InvalidInput("tau_shrink must lie in (0, 1)".into()));
        }
        if !(self.contraction_ratio > 0.0 && self.contraction_ratio < 1.0) {
            return Err(Error::InvalidInput("contraction_ratio must lie in (0, 1)".into()));
        }
        if !(self.explosion_bound > 0.0) {
            return Err(Error::InvalidInput("explosion_bound must be positive".into()));
        }
        Ok(warn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchReport {
    pub start: f64,
    pub end: f64,
    pub start_index: usize,
    pub end_index: usize,
    pub iterations: usize,
    pub residual: f64,
    /// `‖Y - W‖_{X;α}` on the patch.
    pub ball_distance: f64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub patches: Vec<PatchReport>,
    /// Patch attempts rejected before `tau` was small enough.
    pub rejected: usize,
    pub tau_final: f64,
    pub seminorm: f64,
    pub global_residual: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Outcome of one local Picard iteration.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    pub path: ControlledPath,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub ball_distance: f64,
}

fn check_field(f: &LipFunction, y0: &[f64], x: &GeometricRoughPath, min_degree: usize) -> Result<()> {
    let m = y0.len();
    if f.input_dim() != m || f.output_dim() != m * x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "field maps R^{} to R^{}, expected R^{m} to L(R^{}, R^{m})",
            f.input_dim(),
            f.output_dim(),
            x.dim()
        )));
    }
    if f.degree() < min_degree {
        return Err(Error::InvalidInput(format!(
            "field degree {} below the required {min_degree}",
            f.degree()
        )));
    }
    Ok(())
}

/// Canonical initial path: `W^0_0 = Y_0`, `W^{r+1}_0` the uncurried `F(W)^r_0`,
/// and `W^i_t(ξ) = Σ_{j≥i} W^j_0(X^{j-i}_{0,t} ⊗ ξ)`, so every remainder vanishes.
pub fn initial_w(y0: &[f64], f: &LipFunction, x: &GeometricRoughPath, alpha: f64) -> Result<ControlledPath> {
    let (d, n) = (x.dim(), x.depth());
    check_field(f, y0, x, n.saturating_sub(1))?;
    let m = y0.len();
    let surj = surjection_table(n);
    let mut w0: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; m * crate::tensor::pow(d, i)]).collect();
    w0[0] = y0.to_vec();
    for r in 0..n - 1 {
        let refs: Vec<&[f64]> = w0.iter().map(|v| v.as_slice()).collect();
        let z = compose_at(f, &refs, d, n, &surj);
        w0[r + 1] = uncurry(&z[r], m, d, r);
    }
    let mut levels = vec![Vec::with_capacity(x.len()); n];
    for g in x.values() {
        for (i, lvl) in levels.iter_mut().enumerate() {
            let mut acc = w0[i].clone();
            for (j, wj) in w0.iter().enumerate().skip(i + 1) {
                let term = apply_leading_level(wj, m, d, j, j - i, g.level(j - i));
                acc.iter_mut().zip(term).for_each(|(a, b)| *a += b);
            }
            lvl.push(acc);
        }
    }
    ControlledPath::new(x.times().to_vec(), d, n, m, alpha, levels)
}

/// `J = Y_0 + ∫ F(Y) dX` with levels `J^i = F(Y)^{i-1}` for `i ≥ 1`.
pub fn picard_step(y: &ControlledPath, f: &LipFunction, x: &GeometricRoughPath, y0: &[f64]) -> Result<ControlledPath> {
    check_field(f, y0, x, x.depth())?;
    let z = compose(f, y, x)?;
    integral_controlled(&z, x, y0)
}

fn non_contraction(x: &GeometricRoughPath, reason: String) -> Error {
    Error::NonContraction {
        start: x.times()[0],
        end: *x.times().last().unwrap(),
        reason,
    }
}

fn sup_level0(y: &ControlledPath) -> f64 {
    y.level_path(0).iter().map(|v| l1(v)).fold(0.0, f64::max)
}

/// Picard iteration on the whole of `x`, starting from `guess` or from `W`.
pub fn solve_local(
    f: &LipFunction,
    x: &GeometricRoughPath,
    y0: &[f64],
    cfg: &SolverConfig,
    guess: Option<&ControlledPath>,
) -> Result<LocalSolution> {
    cfg.validate(x.depth())?;
    let w = initial_w(y0, f, x, cfg.alpha)?;
    let mut y = match guess {
        Some(g) => {
            if g.times() != x.times() || g.target() != y0.len() || g.depth() != x.depth() {
                return Err(Error::DimensionMismatch("initial guess does not match the driver".into()));
            }
            g.clone().with_alpha(cfg.alpha)
        }
        None => w.clone(),
    };
    let warmup = x.depth();
    let mut residuals = Vec::new();
    let mut converged = false;
    for it in 1..=cfg.max_picard_iters {
        let next = picard_step(&y, f, x, y0)?;
        let res = next.sub(&y)?.triple_norm(x, cfg.alpha)?;
        y = next;
        residuals.push(res);
        if !res.is_finite() || sup_level0(&y) > cfg.explosion_bound {
            return Err(non_contraction(x, format!("iterate blew up at iteration {it}")));
        }
        if res < cfg.contraction_tol {
            converged = true;
            break;
        }
        if it > warmup && res > 100.0 * cfg.contraction_tol {
            let ratio = res / residuals[it - 2];
            if ratio >= cfg.contraction_ratio {
                return Err(non_contraction(
                    x,
                    format!("residual ratio {ratio:.3} at iteration {it}"),
                ));
            }
        }
    }
    if !converged {
        return Err(non_contraction(
            x,
            format!(
                "residual {:e} after {} iterations",
                residuals.last().copied().unwrap_or(f64::NAN),
                cfg.max_picard_iters
            ),
        ));
    }
    let ball_distance = y.sub(&w)?.seminorm(x, cfg.alpha)?;
    if cfg.enforce_unit_ball && ball_distance > 1.0 {
        return Err(non_contraction(
            x,
            format!("fixed point at distance {ball_distance:.3} from W leaves the unit ball"),
        ));
    }
    Ok(LocalSolution {
        path: y,
        iterations: residuals.len(),
        residuals,
        ball_distance,
    })
}

/// Failure of [`solve`], carrying whatever was solved before it stopped.
#[derive(Debug)]
pub struct SolveFailure {
    pub error: Error,
    pub partial: Option<ControlledPath>,
    pub report: SolveReport,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for SolveFailure {}

impl From<Error> for SolveFailure {
    fn from(error: Error) -> Self {
        SolveFailure {
            error,
            partial: None,
            report: empty_report(f64::NAN, Vec::new()),
        }
    }
}

fn empty_report(tau: f64, warnings: Vec<String>) -> SolveReport {
    SolveReport {
        patches: Vec::new(),
        rejected: 0,
        tau_final: tau,
        seminorm: f64::NAN,
        global_residual: f64::NAN,
        warnings,
        wall_time: Duration::ZERO,
    }
}

/// Solve on `[t_0, horizon]`, where `horizon` must be a grid time of `x`.
pub fn solve(
    f: &LipFunction,
    x: &GeometricRoughPath,
    y0: &[f64],
    horizon: f64,
    cfg: &SolverConfig,
) -> std::result::Result<(ControlledPath, SolveReport), SolveFailure> {
    let clock = Instant::now();
    let warnings: Vec<String> = cfg.validate(x.depth())?.into_iter().collect();
    check_field(f, y0, x, x.depth())?;
    let end = x
        .index_of(horizon)
        .filter(|&e| e > 0)
        .ok_or_else(|| Error::InvalidInput(format!("horizon {horizon} is not a grid time after t_0")))?;
    let times = x.times();
    let mut tau = cfg.tau_init.min(times[end] - times[0]);
    let mut report = empty_report(tau, warnings);
    let mut solution: Option<ControlledPath> = None;
    let mut a = 0usize;
    let mut start = y0.to_vec();
    let fail = |error: Error, partial: Option<ControlledPath>, mut report: SolveReport| {
        report.wall_time = clock.elapsed();
        SolveFailure { error, partial, report }
    };
    while a < end {
        if report.patches.len() >= cfg.max_patches {
            let e = Error::Solver(format!("max_patches = {} reached at t = {}", cfg.max_patches, times[a]));
            return Err(fail(e, solution, report));
        }
        let limit = times[a] + tau * (1.0 + 1e-12);
        let b = (a + 1..=end).take_while(|&k| times[k] <= limit).last().unwrap_or(a + 1);
        let local_x = match x.restrict(a, b) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, solution, report)),
        };
        match solve_local(f, &local_x, &start, cfg, None) {
            Ok(local) => {
                if sup_level0(&local.path) > cfg.explosion_bound {
                    let e = Error::Solver(format!(
                        "|Y^0| exceeded {} on [{}, {}]",
                        cfg.explosion_bound, times[a], times[b]
                    ));
                    return Err(fail(e, solution, report));
                }
                report.patches.push(PatchReport {
                    start: times[a],
                    end: times[b],
                    start_index: a,
                    end_index: b,
                    iterations: local.iterations,
                    residual: *local.residuals.last().unwrap(),
                    ball_distance: local.ball_distance,
                    residuals: local.residuals,
                });
                start = local.path.endpoint().to_vec();
                let joined = match solution.take() {
                    None => Ok(local.path),
                    Some(left) => concatenate(&left, &local.path, x),
                };
                match joined {
                    Ok(p) => solution = Some(p),
                    Err(e) => return Err(fail(e, None, report)),
                }
                a = b;
            }
            Err(Error::NonContraction { reason, .. }) => {
                report.rejected += 1;
                if b == a + 1 {
                    let e = Error::NonContraction {
                        start: times[a],
                        end: times[b],
                        reason: format!("{reason}; no shorter patch on this grid"),
                    };
                    return Err(fail(e, solution, report));
                }
                tau *= cfg.tau_shrink;
                report.tau_final = tau;
            }
            Err(e) => return Err(fail(e, solution, report)),
        }
    }
    let y = solution.expect("at least one patch");
    let xs = match x.restrict(0, end) {
        Ok(v) => v,
        Err(e) => return Err(fail(e, Some(y), report)),
    };
    let global = picard_step(&y, f, &xs, y0)
        .and_then(|j| ctrl_distance(&y, &j, &xs, &xs, cfg.alpha))
        .and_then(|r| Ok((r, y.seminorm(&xs, cfg.alpha)?)));
    match global {
        Ok((r, s)) => {
            report.global_residual = r;
            report.seminorm = s;
        }
        Err(e) => return Err(fail(e, Some(y), report)),
    }
    report.tau_final = tau;
    report.wall_time = clock.elapsed();
    Ok((y, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityReport {
    pub d_out: f64,
    pub d_in: f64,
    pub ratio: f64,
}

/// Compare the solutions driven by `(X, Y_0)` and `(X̃, Ỹ_0)` on a shared grid.
pub fn continuity_probe(
    f: &LipFunction,
    x: &GeometricRoughPath,
    xt: &GeometricRoughPath,
    y0: &[f64],
    y0t: &[f64],
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<ContinuityReport> {
    if x.times() != xt.times() {
        return Err(Error::DimensionMismatch("drivers must share a grid".into()));
    }
    if y0.len() != y0t.len() {
        return Err(Error::DimensionMismatch("initial values differ in length".into()));
    }
    let (y, _) = solve(f, x, y0, horizon, cfg).map_err(|e| e.error)?;
    let (yt, _) = solve(f, xt, y0t, horizon, cfg).map_err(|e| e.error)?;
    let end = y.len() - 1;
    let (xs, xts) = (x.restrict(0, end)?, xt.restrict(0, end)?);
    let d_out = ctrl_distance(&y, &yt, &xs, &xts, cfg.alpha)?;
    let dy: f64 = y0.iter().zip(y0t).map(|(a, b)| (a - b).abs()).sum();
    let d_in = xs.rho_beta(&xts, cfg.beta)? + dy;
    let ratio = if d_in > 0.0 { d_out / d_in } else { 0.0 };
    Ok(ContinuityReport { d_out, d_in, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipschitz::FieldSpec;
    use crate::rough_path::{lift_path, PiecewiseLinearPath};

    fn time_driver(m: usize, horizon: f64, depth: usize) -> GeometricRoughPath {
        let p = PiecewiseLinearPath::linear(&[0.0], &[1.0], horizon, m).unwrap();
        lift_path(&p, depth, 1.0 / depth as f64).unwrap()
    }

    fn identity_field(degree: usize) -> LipFunction {
        LipFunction::linear_rde(&[vec![vec![1.0]]], degree).unwrap()
    }

    fn cfg(depth: usize) -> SolverConfig {
        let beta = 1.0 / depth as f64;
        SolverConfig::new(crate::controlled::default_alpha(depth, beta), beta)
    }

    #[test]
    fn initial_w_examples() {
        let x = time_driver(4, 1.0, 3);
        let w = initial_w(&[2.0], &identity_field(3), &x, 0.3).unwrap();
        assert_eq!(w.value(1, 0), &[2.0]);
        assert_eq!(w.value(2, 0), &[2.0]);
        let t = x.times()[3];
        assert!((w.value(0, 3)[0] - 2.0 * (1.0 + t + t * t / 2.0)).abs() < 1e-14);
        assert!(w.seminorm(&x, 0.3).unwrap() < 1e-14);
        let z = initial_w(&[2.0], &LipFunction::zero(1, 1, 3).unwrap(), &x, 0.3).unwrap();
        assert!(z.level_path(0).iter().all(|v| v == &[2.0]));
        assert!(z.level_path(1).iter().all(|v| v == &[0.0]));
    }

    #[test]
    fn initial_w_remainders_vanish_rough() {
        let p = PiecewiseLinearPath::new(
            vec![0.0, 0.25, 0.5, 0.75, 1.0],
            vec![vec![0.0, 0.0], vec![0.3, -0.2], vec![-0.1, 0.4], vec![0.2, 0.1], vec![0.5, -0.3]],
        )
        .unwrap();
        let x = lift_path(&p, 3, 1.0 / 3.0).unwrap();
        let spec = FieldSpec::Builtin {
            function: crate::lipschitz::Builtin::Sin,
            matrix: vec![vec![1.0], vec![0.5]],
            bias: None,
        };
        let f = LipFunction::smooth(spec, 4).unwrap();
        let w = initial_w(&[0.3], &f, &x, 0.3).unwrap();
        assert!(w.seminorm(&x, 0.3).unwrap() < 1e-13);
        assert_eq!(w.value(1, 0), f.eval(0, &[0.3]).unwrap().as_slice());
    }

    #[test]
    fn picard_trivial_fields() {
        let x = time_driver(8, 1.0, 3);
        let y = ControlledPath::canonical_lift(&x, 0.3).unwrap();
        let zero = LipFunction::zero(1, 1, 3).unwrap();
        let j = picard_step(&y, &zero, &x, &[1.5]).unwrap();
        assert!(j.level_path(0).iter().all(|v| v == &[1.5]));
        let c = LipFunction::smooth(FieldSpec::Constant { input_dim: 1, value: vec![2.0] }, 3).unwrap();
        let j = picard_step(&y, &c, &x, &[1.0]).unwrap();
        for k in 0..x.len() {
            assert!((j.value(0, k)[0] - (1.0 + 2.0 * x.times()[k])).abs() < 1e-14);
        }
        let again = picard_step(&j, &c, &x, &[1.0]).unwrap();
        assert!(again.max_abs_diff(&j).unwrap() < 1e-15);
    }

    #[test]
    fn local_exponential() {
        let x = time_driver(256, 1.0, 3);
        let half = x.restrict(0, 128).unwrap();
        let strict = solve_local(&identity_field(3), &half, &[1.0], &cfg(3), None);
        assert!(matches!(strict, Err(Error::NonContraction { .. })));
        let mut loose = cfg(3);
        loose.enforce_unit_ball = false;
        let sol = solve_local(&identity_field(3), &half, &[1.0], &loose, None).unwrap();
        assert!((sol.ball_distance - 1.06).abs() < 0.01);
        assert!(sol.residuals.windows(2).skip(3).all(|w| w[1] < 0.5 * w[0] || w[1] < 1e-9));
        for k in 0..half.len() {
            assert!((sol.path.value(0, k)[0] - half.times()[k].exp()).abs() < 1e-8);
        }
        let z = solve_local(&LipFunction::zero(1, 1, 3).unwrap(), &half, &[1.0], &cfg(3), None).unwrap();
        assert_eq!(z.iterations, 1);
    }

    #[test]
    fn solve_exponential_and_zero() {
        let x = time_driver(256, 1.0, 3);
        let (y, rep) = solve(&identity_field(3), &x, &[1.0], 1.0, &cfg(3)).unwrap();
        assert!((y.endpoint()[0] - std::f64::consts::E).abs() < 1e-7);
        assert!(rep.global_residual <= 10.0 * cfg(3).contraction_tol, "{rep:?}");
        let (z, rep) = solve(&LipFunction::zero(1, 1, 3).unwrap(), &x, &[0.7], 1.0, &cfg(3)).unwrap();
        assert_eq!(rep.patches.len(), 1);
        assert!(z.level_path(0).iter().all(|v| v == &[0.7]));
    }

    #[test]
    fn bad_horizon_and_exponents() {
        let x = time_driver(8, 1.0, 3);
        assert!(solve(&identity_field(3), &x, &[1.0], 0.3, &cfg(3)).is_err());
        let mut c = cfg(3);
        c.alpha = 0.25;
        let err = solve(&identity_field(3), &x, &[1.0], 1.0, &c).unwrap_err();
        assert!(err.error.is_validation());
    }

    #[test]
    fn continuity_identical_inputs() {
        let x = time_driver(32, 1.0, 2);
        let f = identity_field(2);
        let r = continuity_probe(&f, &x, &x, &[1.0], &[1.0], 1.0, &cfg(2)).unwrap();
        assert_eq!(r.d_out, 0.0);
    }
}
