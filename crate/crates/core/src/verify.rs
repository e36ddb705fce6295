//! Seeded invariant suites reported as pass/fail with their worst deviation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controlled::ControlledPath;
use crate::error::Result;
use crate::integral::{convergence_rate_probe, removal_identity_check, Partition};
use crate::lipschitz::{alg_lemma_check, compose, Builtin, FieldSpec, LipFunction};
use crate::oracle::delta_k_by_partitions;
use crate::rough_path::lift_path;
use crate::samples::{random_blocks, random_controlled, random_polyline, rough_polyline};
use crate::tensor::{delta_k, is_group_like, TensorSeries, Word};

fn yes() -> bool {
    true
}
fn default_trials() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyToggles {
    #[serde(default = "yes")]
    pub chen: bool,
    #[serde(default = "yes")]
    pub group_like: bool,
    #[serde(default = "yes")]
    pub coproduct: bool,
    #[serde(default = "yes")]
    pub alg_lemma: bool,
    #[serde(default = "yes")]
    pub removal: bool,
    #[serde(default = "yes")]
    pub rates: bool,
    /// Add 0.5 to one level-2 coefficient of every increment fed to the
    /// group-like suite.
    #[serde(default)]
    pub corrupt_level2: bool,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

impl Default for VerifyToggles {
    fn default() -> Self {
        VerifyToggles {
            chen: true,
            group_like: true,
            coproduct: true,
            alg_lemma: true,
            removal: true,
            rates: true,
            corrupt_level2: false,
            trials: default_trials(),
        }
    }
}

impl VerifyToggles {
    pub fn none() -> Self {
        VerifyToggles {
            chen: false,
            group_like: false,
            coproduct: false,
            alg_lemma: false,
            removal: false,
            rates: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub pass: bool,
    pub max_deviation: f64,
    pub threshold: f64,
    pub cases: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub d: usize,
    #[serde(rename = "N")]
    pub depth: usize,
    pub alpha: f64,
    pub beta: f64,
    pub all_pass: bool,
    pub suites: Vec<SuiteResult>,
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn result(name: &str, dev: f64, threshold: f64, cases: usize, detail: String) -> SuiteResult {
    SuiteResult {
        name: name.into(),
        pass: dev <= threshold,
        max_deviation: dev,
        threshold,
        cases,
        detail,
    }
}

fn chen(d: usize, n: usize, seed: u64, trials: usize) -> Result<SuiteResult> {
    let mut rng = rng_for(seed, 1);
    let (mut worst, mut cases) = (0.0f64, 0);
    for _ in 0..trials {
        let segs = rng.gen_range(2..=16);
        let p = random_polyline(&mut rng, d, segs, 1.0, 1.0)?;
        let x = lift_path(&p, n, 1.0 / n as f64)?;
        for s in 0..segs {
            for t in s + 2..=segs {
                let direct = x.increment(s, t)?;
                for u in s + 1..t {
                    let prod = x.increment(s, u)?.mul(&x.increment(u, t)?)?;
                    worst = worst.max(prod.max_abs_diff(&direct)?);
                    cases += 1;
                }
            }
        }
    }
    Ok(result("chen", worst, 1e-12, cases, "X_{s,u} ⊗ X_{u,t} against X_{s,t}".into()))
}

fn group_like(d: usize, n: usize, seed: u64, trials: usize, corrupt: bool) -> Result<SuiteResult> {
    let mut rng = rng_for(seed, 2);
    let (mut worst, mut cases, mut failed) = (0.0f64, 0, 0);
    for _ in 0..trials {
        let segs = rng.gen_range(1..=12);
        let p = random_polyline(&mut rng, d, segs, 1.0, 1.0)?;
        let x = lift_path(&p, n, 1.0 / n as f64)?;
        for s in 0..segs {
            for t in s + 1..=segs {
                let mut inc = x.increment(s, t)?;
                if corrupt && n >= 2 {
                    inc.level_mut(2)[0] += 0.5;
                }
                let r = is_group_like(&inc, 1e-10)?;
                worst = worst.max(r.max_deviation / inc.max_abs().max(1.0));
                failed += usize::from(!r.group_like);
                cases += 1;
            }
        }
    }
    let mut out = result(
        "group_like",
        worst,
        1e-10,
        cases,
        format!("{failed} increments not group-like{}", if corrupt { " (level 2 corrupted)" } else { "" }),
    );
    out.pass = failed == 0;
    Ok(out)
}

fn coproduct(d: usize, n: usize) -> Result<SuiteResult> {
    let (mut worst, mut cases) = (0.0f64, 0);
    for len in 0..=n.min(4) {
        for w in Word::all(d, len) {
            let mut xi = TensorSeries::zero(d, n)?;
            xi.level_mut(len)[w.index(d)] = 1.0;
            for k in 1..=n.min(3) {
                worst = worst.max(delta_k(&xi, k)?.max_abs_diff(&delta_k_by_partitions(&xi, k)?)?);
                cases += 1;
            }
        }
    }
    Ok(result("coproduct", worst, 0.0, cases, "δ_k against explicit partitions".into()))
}

fn alg_lemma(d: usize, n: usize, alpha: f64, seed: u64, trials: usize) -> Result<SuiteResult> {
    let mut rng = rng_for(seed, 4);
    let (mut worst, mut cases) = (0.0f64, 0);
    if n >= 2 {
        for _ in 0..trials {
            let p = random_polyline(&mut rng, d, 4, 1.0, 1.0)?;
            let x = lift_path(&p, n, 1.0 / n as f64)?;
            let y = random_controlled(&mut rng, &x, 2, alpha)?;
            let s = rng.gen_range(0..4);
            let t = rng.gen_range(s + 1..=4);
            let inc = x.increment(s, t)?;
            for k in 1..n {
                for r in 1..n {
                    for xi in Word::all(d, r) {
                        worst = worst.max(alg_lemma_check(k, &y, s, &inc, &xi)?);
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(result("alg_lemma", worst, 1e-10, cases, "symmetrized sides of the algebraic lemma".into()))
}

fn removal(d: usize, n: usize, alpha: f64, seed: u64, trials: usize) -> Result<SuiteResult> {
    let mut rng = rng_for(seed, 5);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let segs = rng.gen_range(2..=10);
        let p = random_polyline(&mut rng, d, segs, 1.0, 1.0)?;
        let x = lift_path(&p, n, 1.0 / n as f64)?;
        let z = random_blocks(&mut rng, &x, d, alpha)?;
        let mut idx: Vec<usize> = (1..segs).filter(|_| rng.gen_bool(0.5)).collect();
        if idx.is_empty() {
            idx.push(segs / 2);
        }
        idx.insert(0, 0);
        idx.push(segs);
        let part = Partition::new(idx)?;
        let j = rng.gen_range(1..part.indices().len() - 1);
        worst = worst.max(removal_identity_check(&z, &x, &part, j)?);
    }
    Ok(result("removal", worst, 1e-12, trials, "point-removal identity for compensated sums".into()))
}

fn rates(d: usize, n: usize, alpha: f64, beta: f64, seed: u64) -> Result<SuiteResult> {
    let mut rng = rng_for(seed, 7);
    let p = rough_polyline(&mut rng, d, 10, beta, 1.0, 1.0)?;
    let x = lift_path(&p, n, beta)?;
    let y = ControlledPath::canonical_lift(&x, alpha)?;
    let matrix = (0..d).map(|o| (0..d).map(|c| if o == c { 1.0 } else { 0.3 }).collect()).collect();
    let f = LipFunction::smooth(FieldSpec::Builtin { function: Builtin::Sin, matrix, bias: None }, n)?;
    let z = compose(&f, &y, &x)?;
    let probe = convergence_rate_probe(&z, &x, 0, x.len() - 1, 5)?;
    let floor = (n as f64 + 1.0) * alpha - 1.0 - 0.2;
    let e = probe.exponent.unwrap_or(f64::NEG_INFINITY);
    Ok(SuiteResult {
        name: "rates".into(),
        pass: probe.applicable && e >= floor,
        max_deviation: (floor - e).max(0.0),
        threshold: 0.0,
        cases: probe.depths_used,
        detail: if probe.applicable {
            format!("fitted exponent {e:.3}, floor {floor:.3}")
        } else {
            "not applicable: increments at roundoff".into()
        },
    })
}

/// Run every enabled suite; an all-false selection gives an empty report.
pub fn run_suites(
    d: usize,
    depth: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    t: &VerifyToggles,
) -> Result<VerifyReport> {
    let mut suites = Vec::new();
    if t.chen {
        suites.push(chen(d, depth, seed, t.trials)?);
    }
    if t.group_like {
        suites.push(group_like(d, depth, seed, t.trials, t.corrupt_level2)?);
    }
    if t.coproduct {
        suites.push(coproduct(d, depth)?);
    }
    if t.alg_lemma {
        suites.push(alg_lemma(d, depth, alpha, seed, t.trials)?);
    }
    if t.removal {
        suites.push(removal(d, depth, alpha, seed, t.trials)?);
    }
    if t.rates {
        suites.push(rates(d, depth, alpha, beta, seed)?);
    }
    Ok(VerifyReport {
        seed,
        d,
        depth,
        alpha,
        beta,
        all_pass: suites.iter().all(|s| s.pass),
        suites,
    })
}
