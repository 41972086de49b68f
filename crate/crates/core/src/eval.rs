//! Speedups, geometric means, per-subset restart evaluation, policy
//! head-to-head runs and paired significance tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::cnf::Formula;
use crate::dist::numeric::normal_sf;
use crate::dist::{DistFamily, RestartRecommendation};
use crate::probsat::{ProbSat, SolverConfig};
use crate::restart::{run_with_policy_on, RestartPolicy};
use crate::rng::derive_seed;
use crate::rtd::{empirical_optimal, RtdError, RtdSample, WinnerSelection};

pub const SCHEMA_VERSION: u32 = 1;
/// Largest sample size for which Wilcoxon p-values are computed exactly.
pub const WILCOXON_EXACT_MAX: usize = 20;
pub const WILCOXON_MIN_N: usize = 5;
pub const P_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("runtime means must be positive, got {0}")]
    NonPositive(f64),
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("need at least {needed} pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("all differences are zero")]
    AllZero,
    #[error("instance {0}: missing fit")]
    MissingFit(String),
    #[error("need at least two policies")]
    TooFewPolicies,
    #[error(transparent)]
    Rtd(#[from] RtdError),
}

/// `baseline / candidate`.
pub fn speedup(baseline_mean: f64, candidate_mean: f64) -> Result<f64, EvalError> {
    for m in [baseline_mean, candidate_mean] {
        if !(m > 0.0) {
            return Err(EvalError::NonPositive(m));
        }
    }
    Ok(baseline_mean / candidate_mean)
}

pub fn geometric_mean(xs: &[f64]) -> Result<f64, EvalError> {
    if xs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut acc = 0.0;
    for &x in xs {
        if !(x > 0.0) {
            return Err(EvalError::NonPositive(x));
        }
        acc += x.ln();
    }
    Ok((acc / xs.len() as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRecord {
    pub instance_id: String,
    pub mean_runtime_baseline: f64,
    pub mean_runtime_candidate: f64,
    pub speedup: f64,
}

// ---- subset table

/// Per-instance outcome of restarting at a family's fitted optimal cutoff,
/// evaluated on the observed sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRestartEval {
    pub family: DistFamily,
    pub p_value: f64,
    pub cutoff: Option<f64>,
    pub empirical_runtime: f64,
    pub speedup: f64,
    /// The cutoff lies below every observation and was treated as no restart.
    pub below_observations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRestartEval {
    pub instance_id: String,
    pub mean_runtime: f64,
    pub baseline_cutoff: u64,
    pub baseline_runtime: f64,
    pub baseline_speedup: f64,
    pub families: Vec<FamilyRestartEval>,
}

impl InstanceRestartEval {
    pub fn new(sample: &RtdSample, sel: &WinnerSelection) -> Result<Self, EvalError> {
        let mean = sample.mean_runtime().ok_or(RtdError::NoSuccessfulRuns)?;
        let (x_star, opt) = empirical_optimal(sample)?;
        let mut families = Vec::new();
        for fam in [DistFamily::Lognormal, DistFamily::Weibull, DistFamily::Gp] {
            let fit = sel
                .fit(fam)
                .ok_or_else(|| EvalError::MissingFit(sample.instance_id.clone()))?;
            let cutoff = fit.dist().optimal_restart_time().cutoff();
            let (runtime, below) = match cutoff {
                None => (mean, false),
                Some(t) => match sample.runtime_with_restart(t) {
                    Some(e) => (e, false),
                    None => (mean, true),
                },
            };
            families.push(FamilyRestartEval {
                family: fam,
                p_value: fit.p_value,
                cutoff,
                empirical_runtime: runtime,
                speedup: speedup(mean, runtime)?,
                below_observations: below,
            });
        }
        Ok(InstanceRestartEval {
            instance_id: sample.instance_id.clone(),
            mean_runtime: mean,
            baseline_cutoff: x_star,
            baseline_runtime: opt,
            baseline_speedup: speedup(mean, opt)?,
            families,
        })
    }

    fn family(&self, f: DistFamily) -> &FamilyRestartEval {
        self.families.iter().find(|e| e.family == f).expect("all families evaluated")
    }

    /// Highest KS p-value in the subset; ties by family preference.
    pub fn ks_best(&self, subset: &[DistFamily]) -> &FamilyRestartEval {
        subset
            .iter()
            .map(|&f| self.family(f))
            .min_by(|a, b| {
                b.p_value
                    .total_cmp(&a.p_value)
                    .then(a.family.preference().cmp(&b.family.preference()))
            })
            .expect("non-empty subset")
    }

    pub fn speedup_best(&self, subset: &[DistFamily]) -> &FamilyRestartEval {
        subset
            .iter()
            .map(|&f| self.family(f))
            .min_by(|a, b| {
                b.speedup
                    .total_cmp(&a.speedup)
                    .then(a.family.preference().cmp(&b.family.preference()))
            })
            .expect("non-empty subset")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub subset: Vec<DistFamily>,
    pub label: String,
    pub ks_best: f64,
    pub speedup_best: f64,
    /// Instances whose chosen cutoff (either rule) fell below every observation.
    pub below_observation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetTable {
    pub schema_version: u32,
    pub n_instances: usize,
    pub rows: Vec<SubsetRow>,
    pub instances: Vec<InstanceRestartEval>,
}

/// The 8 subsets of {L, W, GP}, empty set first.
pub fn all_subsets() -> Vec<Vec<DistFamily>> {
    let fams = [DistFamily::Lognormal, DistFamily::Weibull, DistFamily::Gp];
    let mut out: Vec<Vec<DistFamily>> = (0u8..8)
        .map(|m| (0..3).filter(|b| m & (1 << b) != 0).map(|b| fams[b]).collect())
        .collect();
    out.sort_by_key(|s| s.len());
    out
}

pub fn subset_label(s: &[DistFamily]) -> String {
    if s.is_empty() {
        return "baseline".into();
    }
    let names: Vec<&str> = s.iter().map(|f| f.short()).collect();
    format!("{{{}}}", names.join(","))
}

pub fn subset_speedup_table(
    data: &[(RtdSample, WinnerSelection)],
) -> Result<SubsetTable, EvalError> {
    if data.is_empty() {
        return Err(EvalError::Empty);
    }
    let instances = data
        .iter()
        .map(|(s, w)| InstanceRestartEval::new(s, w))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for subset in all_subsets() {
        let row = if subset.is_empty() {
            let gm = geometric_mean(
                &instances.iter().map(|i| i.baseline_speedup).collect::<Vec<_>>(),
            )?;
            SubsetRow {
                subset,
                label: subset_label(&[]),
                ks_best: gm,
                speedup_best: gm,
                below_observation_count: 0,
            }
        } else {
            let ks: Vec<&FamilyRestartEval> = instances.iter().map(|i| i.ks_best(&subset)).collect();
            let sp: Vec<&FamilyRestartEval> =
                instances.iter().map(|i| i.speedup_best(&subset)).collect();
            let below = ks
                .iter()
                .zip(&sp)
                .filter(|(a, b)| a.below_observations || b.below_observations)
                .count();
            SubsetRow {
                label: subset_label(&subset),
                ks_best: geometric_mean(&ks.iter().map(|e| e.speedup).collect::<Vec<_>>())?,
                speedup_best: geometric_mean(&sp.iter().map(|e| e.speedup).collect::<Vec<_>>())?,
                subset,
                below_observation_count: below,
            }
        };
        rows.push(row);
    }
    Ok(SubsetTable {
        schema_version: SCHEMA_VERSION,
        n_instances: instances.len(),
        rows,
        instances,
    })
}

impl SubsetTable {
    pub fn row(&self, subset: &[DistFamily]) -> Option<&SubsetRow> {
        let mut want = subset.to_vec();
        want.sort_by_key(|f| f.short());
        self.rows.iter().find(|r| {
            let mut have = r.subset.clone();
            have.sort_by_key(|f| f.short());
            have == want
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("subset,ks_best,speedup_best,below_observations\n");
        for r in &self.rows {
            s.push_str(&format!(
                "\"{}\",{},{},{}\n",
                r.label, r.ks_best, r.speedup_best, r.below_observation_count
            ));
        }
        s
    }
}

// ---- significance tests

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

fn log_differences(x: &[f64], y: &[f64]) -> Result<Vec<f64>, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::Length(x.len(), y.len()));
    }
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            if !(a > 0.0) {
                Err(EvalError::NonPositive(a))
            } else if !(b > 0.0) {
                Err(EvalError::NonPositive(b))
            } else {
                Ok(a.ln() - b.ln())
            }
        })
        .collect()
}

/// Two-sided paired t-test on `ln x - ln y`.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<TestResult, EvalError> {
    t_test_on_differences(&log_differences(x, y)?)
}

pub fn t_test_on_differences(d: &[f64]) -> Result<TestResult, EvalError> {
    let n = d.len();
    if n < 2 {
        return Err(EvalError::TooFewPairs { needed: 2, got: n });
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TestResult { statistic: 0.0, p_value: 1.0, n }
        } else {
            TestResult {
                statistic: mean.signum() * f64::INFINITY,
                p_value: P_FLOOR,
                n,
            }
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("dof >= 1");
    let p = (2.0 * dist.sf(t.abs())).clamp(P_FLOOR, 1.0);
    Ok(TestResult { statistic: t, p_value: p, n })
}

/// Average ranks of `|d|` (1-based), ties sharing the mean rank.
fn average_ranks(abs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..abs.len()).collect();
    idx.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0.0; abs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && abs[idx[j + 1]] == abs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided p-value of `W+ = w` given the (doubled, integral) ranks:
/// counts sign patterns by dynamic programming over rank sums.
fn wilcoxon_exact_p(ranks2: &[u64], w2: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(ranks2.len() as i32);
    let lower: f64 = counts[..=w2 as usize].iter().sum::<f64>() / all;
    let upper: f64 = counts[w2 as usize..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Signed-rank test on `ln x - ln y`; zero differences are dropped. The
/// statistic is the sum of ranks of positive differences.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult, EvalError> {
    let d: Vec<f64> = log_differences(x, y)?.into_iter().filter(|v| *v != 0.0).collect();
    wilcoxon_on_differences(&d, x.len())
}

pub fn wilcoxon_on_differences(d: &[f64], n_pairs: usize) -> Result<TestResult, EvalError> {
    if d.is_empty() {
        return Err(if n_pairs == 0 { EvalError::Empty } else { EvalError::AllZero });
    }
    let n = d.len();
    if n < WILCOXON_MIN_N {
        return Err(EvalError::TooFewPairs {
            needed: WILCOXON_MIN_N,
            got: n,
        });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let w: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let p = if n <= WILCOXON_EXACT_MAX {
        let ranks2: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        wilcoxon_exact_p(&ranks2, (2.0 * w).round() as u64)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut ties = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            ties += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * normal_sf(z)).clamp(P_FLOOR, 1.0)
    };
    Ok(TestResult { statistic: w, p_value: p, n })
}

// ---- head to head

/// One restart policy per instance, under a common name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyColumn {
    pub name: String,
    pub per_instance: Vec<RestartPolicy>,
}

impl PolicyColumn {
    pub fn uniform(name: impl Into<String>, policy: RestartPolicy, n: usize) -> Self {
        PolicyColumn {
            name: name.into(),
            per_instance: vec![policy; n],
        }
    }

    /// Fixed cutoffs from per-instance recommendations; no recommendation
    /// means no restarts.
    pub fn from_recommendations(name: impl Into<String>, recs: &[RestartRecommendation]) -> Self {
        PolicyColumn {
            name: name.into(),
            per_instance: recs
                .iter()
                .map(|r| match r.cutoff() {
                    Some(t) => RestartPolicy::FixedCutoff {
                        t: (t.round() as u64).max(1),
                    },
                    None => RestartPolicy::NoRestart,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadToHeadConfig {
    pub runs_per_instance: usize,
    /// Total flip budget of one run, across all of its restarts.
    pub budget: u64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub policy: RestartPolicy,
    pub solved: usize,
    /// Mean flips per run; unsolved runs count with the full budget.
    pub mean_runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub instance_id: String,
    pub outcomes: Vec<PolicyOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub candidate: String,
    pub baseline: String,
    pub records: Vec<SpeedupRecord>,
    pub geometric_mean: f64,
    /// GM over instances where the candidate restarts at all.
    pub geometric_mean_restarting: Option<f64>,
    pub t_test: Option<TestResult>,
    pub wilcoxon: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub config: HeadToHeadConfig,
    pub policies: Vec<String>,
    pub instances: Vec<InstanceOutcome>,
    /// Instances on which some policy failed every run.
    pub excluded: Vec<String>,
    pub restart_predicted: usize,
    pub no_restart_predicted: usize,
    pub comparisons: Vec<Comparison>,
}

/// Runs every policy on every instance. Run `r` of instance `i` uses seed
/// `derive_seed(derive_seed(master, i), r)` for all policies, so policies
/// share random streams. The first policy is compared with each other one.
pub fn head_to_head(
    instances: &[Formula],
    policies: &[PolicyColumn],
    solver: &SolverConfig,
    cfg: &HeadToHeadConfig,
) -> Result<EvalReport, EvalError> {
    if instances.is_empty() || cfg.runs_per_instance == 0 {
        return Err(EvalError::Empty);
    }
    if policies.len() < 2 {
        return Err(EvalError::TooFewPolicies);
    }
    for p in policies {
        if p.per_instance.len() != instances.len() {
            return Err(EvalError::Length(p.per_instance.len(), instances.len()));
        }
    }
    let per_instance: Vec<InstanceOutcome> = instances
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let inst_seed = derive_seed(cfg.master_seed, i as u64);
            let runs: Vec<Vec<(bool, u64)>> = (0..cfg.runs_per_instance as u64)
                .into_par_iter()
                .map_init(
                    || ProbSat::new(f),
                    |s, r| {
                        let run_cfg = SolverConfig {
                            seed: derive_seed(inst_seed, r),
                            ..*solver
                        };
                        policies
                            .iter()
                            .map(|p| {
                                let o = run_with_policy_on(s, &run_cfg, p.per_instance[i], cfg.budget);
                                (o.solved, o.total_flips)
                            })
                            .collect()
                    },
                )
                .collect();
            let outcomes = policies
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let solved = runs.iter().filter(|r| r[k].0).count();
                    let sum: u64 = runs
                        .iter()
                        .map(|r| if r[k].0 { r[k].1 } else { cfg.budget })
                        .sum();
                    PolicyOutcome {
                        policy: p.per_instance[i],
                        solved,
                        mean_runtime: sum as f64 / runs.len() as f64,
                    }
                })
                .collect();
            InstanceOutcome {
                instance_id: f.id(),
                outcomes,
            }
        })
        .collect();
    build_report(per_instance, policies, *cfg)
}

fn build_report(
    instances: Vec<InstanceOutcome>,
    policies: &[PolicyColumn],
    config: HeadToHeadConfig,
) -> Result<EvalReport, EvalError> {
    let (kept, dropped): (Vec<&InstanceOutcome>, Vec<&InstanceOutcome>) = instances
        .iter()
        .partition(|i| i.outcomes.iter().all(|o| o.solved > 0 && o.mean_runtime > 0.0));
    let restart_predicted = kept
        .iter()
        .filter(|i| i.outcomes[0].policy != RestartPolicy::NoRestart)
        .count();
    let mut comparisons = Vec::new();
    for k in 1..policies.len() {
        let records: Vec<SpeedupRecord> = kept
            .iter()
            .map(|i| {
                let (b, c) = (i.outcomes[k].mean_runtime, i.outcomes[0].mean_runtime);
                Ok(SpeedupRecord {
                    instance_id: i.instance_id.clone(),
                    mean_runtime_baseline: b,
                    mean_runtime_candidate: c,
                    speedup: speedup(b, c)?,
                })
            })
            .collect::<Result<_, EvalError>>()?;
        if records.is_empty() {
            return Err(EvalError::Empty);
        }
        let sp: Vec<f64> = records.iter().map(|r| r.speedup).collect();
        let restarting: Vec<f64> = kept
            .iter()
            .zip(&sp)
            .filter(|(i, _)| i.outcomes[0].policy != RestartPolicy::NoRestart)
            .map(|(_, &s)| s)
            .collect();
        let base: Vec<f64> = records.iter().map(|r| r.mean_runtime_baseline).collect();
        let cand: Vec<f64> = records.iter().map(|r| r.mean_runtime_candidate).collect();
        comparisons.push(Comparison {
            candidate: policies[0].name.clone(),
            baseline: policies[k].name.clone(),
            geometric_mean: geometric_mean(&sp)?,
            geometric_mean_restarting: geometric_mean(&restarting).ok(),
            t_test: paired_t_test(&base, &cand).ok(),
            wilcoxon: wilcoxon_signed_rank(&base, &cand).ok(),
            records,
        });
    }
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        config,
        policies: policies.iter().map(|p| p.name.clone()).collect(),
        restart_predicted,
        no_restart_predicted: kept.len() - restart_predicted,
        excluded: dropped.iter().map(|i| i.instance_id.clone()).collect(),
        comparisons,
        instances,
    })
}

impl EvalReport {
    /// `instance_id, log_mean_policy_A, log_mean_policy_B` for policies `a`, `b`
    /// over the non-excluded instances.
    pub fn scatter_csv(&self, a: usize, b: usize) -> String {
        let mut s = String::from("instance_id,log_mean_policy_A,log_mean_policy_B\n");
        for i in &self.instances {
            if self.excluded.contains(&i.instance_id) {
                continue;
            }
            s.push_str(&format!(
                "{},{},{}\n",
                i.instance_id,
                i.outcomes[a].mean_runtime.ln(),
                i.outcomes[b].mean_runtime.ln()
            ));
        }
        s
    }
}
