//! Empirical runtime distributions: sampling, family fits with KS winner
//! selection, and the empirical optimal restart estimator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::Formula;
use crate::dist::{fit_with_gof, DistError, DistFamily, FitResult, MIN_FIT_SAMPLES};
use crate::probsat::{ProbSat, SolverConfig};
use crate::rng::derive_seed;

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Largest censored fraction accepted by [`fit_all`].
pub const MAX_CENSORED_FRACTION: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum RtdError {
    #[error("no successful runs")]
    NoSuccessfulRuns,
    #[error("need at least {needed} successful runs, got {got}")]
    TooFewRuns { needed: usize, got: usize },
    #[error("{censored} of {total} runs censored (limit {limit:.0}%)")]
    TooManyCensored {
        censored: usize,
        total: usize,
        limit: f64,
    },
    #[error("fit failed: {0}")]
    Fit(#[from] DistError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtdSample {
    pub instance_id: String,
    pub master_seed: u64,
    pub per_run_timeout: u64,
    pub censored: usize,
    /// Flip counts of the successful runs, ascending.
    pub flips: Vec<u64>,
}

impl RtdSample {
    pub fn new(
        instance_id: impl Into<String>,
        mut flips: Vec<u64>,
        censored: usize,
        per_run_timeout: u64,
        master_seed: u64,
    ) -> Self {
        flips.sort_unstable();
        RtdSample {
            instance_id: instance_id.into(),
            master_seed,
            per_run_timeout,
            censored,
            flips,
        }
    }

    pub fn total_runs(&self) -> usize {
        self.flips.len() + self.censored
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.total_runs().max(1) as f64
    }

    pub fn samples_f64(&self) -> Vec<f64> {
        self.flips.iter().map(|&x| x as f64).collect()
    }

    /// Empirical restart functional `((1-p)/p) x + mean(X_{<=x})` at an observed value `x`.
    pub fn restart_value_at(&self, x: u64) -> Option<f64> {
        let k = self.flips.partition_point(|&v| v <= x);
        if k == 0 {
            return None;
        }
        let sum: u128 = self.flips[..k].iter().map(|&v| v as u128).sum();
        Some(restart_functional(k, self.total_runs(), x, sum))
    }

    /// Expected runtime without restarts. With censoring this is the restart
    /// value at the largest observation, i.e. censored runs are charged a
    /// restart at that point.
    pub fn mean_runtime(&self) -> Option<f64> {
        self.restart_value_at(*self.flips.last()?)
    }

    /// Empirical expected runtime when restarting at an arbitrary cutoff `t`:
    /// the restart functional at the largest observation `<= t`. `None` when `t` is
    /// below every observation.
    pub fn runtime_with_restart(&self, t: f64) -> Option<f64> {
        let k = self.flips.partition_point(|&v| (v as f64) <= t);
        if k == 0 {
            return None;
        }
        self.restart_value_at(self.flips[k - 1])
    }
}

fn restart_functional(k: usize, n: usize, x: u64, sum: u128) -> f64 {
    let p = k as f64 / n as f64;
    (1.0 - p) / p * x as f64 + sum as f64 / k as f64
}

/// Runs `n_runs` independent probSAT tries; run `j` uses seed
/// `derive_seed(master_seed, j)` and a budget of `per_run_timeout` flips.
/// The result does not depend on the rayon pool size.
pub fn sample_rtd(
    f: &Formula,
    cfg: &SolverConfig,
    n_runs: usize,
    master_seed: u64,
    per_run_timeout: u64,
) -> RtdSample {
    let outcomes: Vec<(bool, u64)> = (0..n_runs as u64)
        .into_par_iter()
        .map_init(
            || ProbSat::new(f),
            |solver, j| {
                let run_cfg = SolverConfig {
                    max_flips: per_run_timeout,
                    seed: derive_seed(master_seed, j),
                    ..*cfg
                };
                let out = solver.run(&run_cfg);
                (out.solved, out.flips)
            },
        )
        .collect();
    let censored = outcomes.iter().filter(|o| !o.0).count();
    let flips = outcomes.iter().filter(|o| o.0).map(|o| o.1).collect();
    RtdSample::new(f.id(), flips, censored, per_run_timeout, master_seed)
}

/// Step points `(x, F_n(x))` with `n` counting censored runs; duplicate
/// values collapse to their highest level.
pub fn ecdf(s: &RtdSample) -> Result<Vec<(u64, f64)>, RtdError> {
    if s.flips.is_empty() {
        return Err(RtdError::NoSuccessfulRuns);
    }
    let n = s.total_runs() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for (i, &x) in s.flips.iter().enumerate() {
        let level = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = level,
            _ => out.push((x, level)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerSelection {
    pub winner: Option<DistFamily>,
    pub all_fits: Vec<FitResult>,
    pub alpha: f64,
}

impl WinnerSelection {
    pub fn fit(&self, family: DistFamily) -> Option<&FitResult> {
        self.all_fits.iter().find(|f| f.family == family)
    }

    pub fn passed(&self, family: DistFamily) -> bool {
        self.fit(family).is_some_and(|f| f.p_value >= self.alpha)
    }

    pub fn winner_fit(&self) -> Option<&FitResult> {
        self.winner.and_then(|w| self.fit(w))
    }
}

/// Highest p-value among fits with `p >= alpha`; ties go to Weibull, then
/// lognormal, then GP.
pub fn select_winner(fits: &[FitResult], alpha: f64) -> Option<DistFamily> {
    fits.iter()
        .filter(|f| f.p_value >= alpha)
        .min_by(|a, b| {
            b.p_value
                .total_cmp(&a.p_value)
                .then(a.family.preference().cmp(&b.family.preference()))
        })
        .map(|f| f.family)
}

/// Fits all three families to the successful runs and picks the KS winner.
pub fn fit_all(s: &RtdSample, alpha: f64) -> Result<WinnerSelection, RtdError> {
    if s.flips.len() < MIN_FIT_SAMPLES {
        return Err(RtdError::TooFewRuns {
            needed: MIN_FIT_SAMPLES,
            got: s.flips.len(),
        });
    }
    if s.censored_fraction() > MAX_CENSORED_FRACTION {
        return Err(RtdError::TooManyCensored {
            censored: s.censored,
            total: s.total_runs(),
            limit: MAX_CENSORED_FRACTION * 100.0,
        });
    }
    let xs = s.samples_f64();
    let all_fits = [DistFamily::Weibull, DistFamily::Lognormal, DistFamily::Gp]
        .iter()
        .map(|&fam| fit_with_gof(fam, &xs))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WinnerSelection {
        winner: select_winner(&all_fits, alpha),
        all_fits,
        alpha,
    })
}

/// The minimum over observed `x` of the empirical expected runtime
/// when restarting after `x` flips. Ties resolve to the smallest `x`.
pub fn empirical_optimal(s: &RtdSample) -> Result<(u64, f64), RtdError> {
    if s.flips.is_empty() {
        return Err(RtdError::NoSuccessfulRuns);
    }
    let n = s.total_runs();
    let mut best = (0u64, f64::INFINITY);
    let mut sum: u128 = 0;
    for (i, &x) in s.flips.iter().enumerate() {
        sum += x as u128;
        if s.flips.get(i + 1) == Some(&x) {
            continue;
        }
        let v = restart_functional(i + 1, n, x, sum);
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// ECDF overlay table: `x, ecdf, <family>_cdf...` for each distinct observation.
pub fn ecdf_overlay_csv(s: &RtdSample, fits: &[FitResult]) -> Result<String, RtdError> {
    let mut out = String::from("x,ecdf");
    for f in fits {
        out.push_str(&format!(",{}_cdf", f.family));
    }
    out.push('\n');
    let dists: Vec<_> = fits.iter().map(|f| f.dist()).collect();
    for (x, level) in ecdf(s)? {
        out.push_str(&format!("{x},{level}"));
        for d in &dists {
            out.push_str(&format!(",{}", d.cdf(x as f64)));
        }
        out.push('\n');
    }
    Ok(out)
}
