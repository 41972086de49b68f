//! The 34-feature instance description: sizes, graph degree statistics,
//! Horn proximity, a DPLL probing estimate and local-search probing
//! statistics, plus min-max normalization and variance-based selection.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::index;
use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::cnf::{random_probe_depth, simplify, Clause, Formula};
use crate::probsat::{probe_run, ProbeTrace, SolverConfig};
use crate::rng;

pub const NUM_FEATURES: usize = 34;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "nvarsOrig",
    "nclausesOrig",
    "nvars",
    "nclauses",
    "VCG-CLAUSE-mean",
    "VCG-CLAUSE-min",
    "VCG-CLAUSE-max",
    "VCG-VAR-mean",
    "VCG-VAR-min",
    "VCG-VAR-max",
    "HORNY-VAR-mean",
    "HORNY-VAR-min",
    "VG-mean",
    "VG-min",
    "VG-max",
    "CG-mean",
    "CG-max",
    "CG-featuretime",
    "saps_BestSolution_Mean",
    "saps_BestSolution_CoeffVariance",
    "saps_FirstLocalMinStep_Mean",
    "saps_FirstLocalMinStep_CoeffVariance",
    "saps_FirstLocalMinStep_Median",
    "saps_FirstLocalMinStep_Q.10",
    "saps_FirstLocalMinStep_Q.90",
    "saps_BestAvgImprovement_Mean",
    "gsat_BestSolution_Mean",
    "gsat_FirstLocalMinStep_Mean",
    "gsat_FirstLocalMinStep_CoeffVariance",
    "gsat_FirstLocalMinStep_Median",
    "gsat_FirstLocalMinStep_Q.10",
    "gsat_FirstLocalMinStep_Q.90",
    "gsat_BestAvgImprovement_Mean",
    "lobjois-mean-depth-over-vars",
];

/// Wall-clock feature; never reproducible, so excluded from model inputs.
pub const TIMING_FEATURE: &str = "CG-featuretime";

pub const DEFAULT_HANDPICKED: [&str; 4] = [
    "nvarsOrig",
    "nclausesOrig",
    "nclauses",
    "lobjois-mean-depth-over-vars",
];

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.05;
pub const CG_MAX_CLAUSES: usize = 4000;
/// Break exponent of the greedier second probing profile.
pub const GSAT_PROFILE_CB: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` missing")]
    MissingFeature(String),
    #[error("normalization spec has {got} features, expected {expected}")]
    SpecMismatch { expected: usize, got: usize },
}

pub fn feature_index(name: &str) -> Result<usize, FeatureError> {
    FEATURE_NAMES
        .iter()
        .position(|&n| n == name)
        .ok_or_else(|| FeatureError::UnknownFeature(name.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Result<f64, FeatureError> {
        Ok(self.0[feature_index(name)?])
    }

    pub fn select(&self, names: &[String]) -> Result<Vec<f64>, FeatureError> {
        names.iter().map(|n| self.get(n)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        FEATURE_NAMES.iter().copied().zip(self.0.iter().copied())
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(NUM_FEATURES))?;
        for (k, v) in self.iter() {
            m.serialize_entry(k, &v)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = HashMap::<String, f64>::deserialize(d)?;
        let mut out = [0.0; NUM_FEATURES];
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            out[i] = *map
                .get(*name)
                .ok_or_else(|| D::Error::custom(FeatureError::MissingFeature((*name).into())))?;
        }
        if let Some(k) = map.keys().find(|k| !FEATURE_NAMES.contains(&k.as_str())) {
            return Err(D::Error::custom(FeatureError::UnknownFeature(k.clone())));
        }
        Ok(FeatureVector(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Probe runs per profile.
    pub probe_runs: usize,
    pub lobjois_probes: usize,
    pub gsat_cb: f64,
    pub cg_max_clauses: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            probe_runs: 10,
            lobjois_probes: 50,
            gsat_cb: GSAT_PROFILE_CB,
            cg_max_clauses: CG_MAX_CLAUSES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub probe_seed: u64,
    pub probe_budget: u64,
    pub cg_sample_size: usize,
    pub config: FeatureConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Stats {
    mean: f64,
    min: f64,
    max: f64,
}

fn stats(xs: &[f64]) -> Stats {
    if xs.is_empty() {
        return Stats {
            mean: 0.0,
            min: 0.0,
            max: 0.0,
        };
    }
    Stats {
        mean: xs.iter().sum::<f64>() / xs.len() as f64,
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn coeff_variation(xs: &[f64]) -> f64 {
    let m = stats(xs).mean;
    if m == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    var.sqrt() / m
}

// linear interpolation between order statistics
fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Variable-clause graph degrees: (clause degrees, variable degrees).
fn vcg_degrees(f: &Formula) -> (Vec<f64>, Vec<f64>) {
    let clause_deg = f.clauses().iter().map(|c| c.len() as f64).collect();
    let mut var_deg = vec![0.0; f.num_vars() as usize];
    for c in f.clauses() {
        for v in clause_vars(c) {
            var_deg[v] += 1.0;
        }
    }
    (clause_deg, var_deg)
}

// distinct 0-based variables of a clause (a tautology holds x and -x)
fn clause_vars(c: &Clause) -> Vec<usize> {
    let mut vs: Vec<usize> = c.lits().iter().map(|l| l.var() as usize - 1).collect();
    vs.sort_unstable();
    vs.dedup();
    vs
}

/// Horn clauses containing each variable.
fn horn_occurrences(f: &Formula) -> Vec<f64> {
    let mut h = vec![0.0; f.num_vars() as usize];
    for c in f.clauses().iter().filter(|c| c.is_horn()) {
        for v in clause_vars(c) {
            h[v] += 1.0;
        }
    }
    h
}

/// Variable graph: distinct co-occurring variables per variable.
fn vg_degrees(f: &Formula) -> Vec<f64> {
    let n = f.num_vars() as usize;
    let mut by_var: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ci, c) in f.clauses().iter().enumerate() {
        for l in c.lits() {
            by_var[l.var() as usize - 1].push(ci);
        }
    }
    let mut stamp = vec![usize::MAX; n];
    (0..n)
        .map(|v| {
            let mut d = 0;
            for &ci in &by_var[v] {
                for l in f.clauses()[ci].lits() {
                    let u = l.var() as usize - 1;
                    if u != v && stamp[u] != v {
                        stamp[u] = v;
                        d += 1;
                    }
                }
            }
            d as f64
        })
        .collect()
}

/// Clause graph restricted to `sample`: clauses are adjacent when some
/// variable occurs positively in one and negatively in the other.
fn cg_degrees(f: &Formula, sample: &[usize]) -> Vec<f64> {
    let mut occ: Vec<Vec<usize>> = vec![Vec::new(); 2 * f.num_vars() as usize];
    for (si, &ci) in sample.iter().enumerate() {
        for l in f.clauses()[ci].lits() {
            occ[l.code()].push(si);
        }
    }
    let mut stamp = vec![usize::MAX; sample.len()];
    (0..sample.len())
        .map(|si| {
            let mut d = 0;
            for l in f.clauses()[sample[si]].lits() {
                for &sj in &occ[(!*l).code()] {
                    if sj != si && stamp[sj] != si {
                        stamp[sj] = si;
                        d += 1;
                    }
                }
            }
            d as f64
        })
        .collect()
}

fn cg_sample(f: &Formula, max: usize, seed: u64) -> Vec<usize> {
    let m = f.num_clauses();
    if m <= max {
        return (0..m).collect();
    }
    let mut r = rng::stream(seed, 3);
    let mut idx = index::sample(&mut r, m, max).into_vec();
    idx.sort_unstable();
    idx
}

struct ProbeStats {
    best_mean: f64,
    best_cv: f64,
    flm: Vec<f64>,
    improvement_mean: f64,
}

fn probe_profile(f: &Formula, cfg: &SolverConfig, runs: usize, budget: u64, key: u64) -> ProbeStats {
    let traces: Vec<ProbeTrace> = (0..runs as u64)
        .map(|r| {
            let seed = rng::derive_seed(rng::derive_seed(cfg.seed, key), r);
            probe_run(f, &cfg.with_seed(seed), budget)
        })
        .collect();
    let best: Vec<f64> = traces.iter().map(|t| t.best_solution_unsat as f64).collect();
    let flm: Vec<f64> = traces.iter().map(|t| t.first_local_min_step as f64).collect();
    let imp: Vec<f64> = traces.iter().map(|t| t.best_avg_improvement()).collect();
    ProbeStats {
        best_mean: stats(&best).mean,
        best_cv: coeff_variation(&best),
        flm,
        improvement_mean: stats(&imp).mean,
    }
}

/// Computes the feature vector with default settings.
pub fn extract_features(f: &Formula, probe_cfg: &SolverConfig, probe_budget: u64) -> FeatureVector {
    extract_features_with(f, probe_cfg, probe_budget, &FeatureConfig::default()).0
}

pub fn extract_features_with(
    f: &Formula,
    probe_cfg: &SolverConfig,
    probe_budget: u64,
    cfg: &FeatureConfig,
) -> (FeatureVector, FeatureMeta) {
    let mut v = [0.0; NUM_FEATURES];
    let mut set = |name: &str, x: f64| v[feature_index(name).unwrap()] = x;

    set("nvarsOrig", f.num_vars() as f64);
    set("nclausesOrig", f.num_clauses() as f64);
    let (nv, nc) = simplify(f).size();
    set("nvars", nv as f64);
    set("nclauses", nc as f64);

    let (cdeg, vdeg) = vcg_degrees(f);
    let s = stats(&cdeg);
    set("VCG-CLAUSE-mean", s.mean);
    set("VCG-CLAUSE-min", s.min);
    set("VCG-CLAUSE-max", s.max);
    let s = stats(&vdeg);
    set("VCG-VAR-mean", s.mean);
    set("VCG-VAR-min", s.min);
    set("VCG-VAR-max", s.max);

    let s = stats(&horn_occurrences(f));
    set("HORNY-VAR-mean", s.mean);
    set("HORNY-VAR-min", s.min);

    let s = stats(&vg_degrees(f));
    set("VG-mean", s.mean);
    set("VG-min", s.min);
    set("VG-max", s.max);

    let started = Instant::now();
    let sample = cg_sample(f, cfg.cg_max_clauses, probe_cfg.seed);
    let s = stats(&cg_degrees(f, &sample));
    set("CG-mean", s.mean);
    set("CG-max", s.max);
    set(TIMING_FEATURE, started.elapsed().as_secs_f64());

    let profiles = [
        ("saps", *probe_cfg),
        (
            "gsat",
            SolverConfig {
                cb: cfg.gsat_cb,
                ..*probe_cfg
            },
        ),
    ];
    for (key, (name, pcfg)) in profiles.iter().enumerate() {
        let p = probe_profile(f, pcfg, cfg.probe_runs, probe_budget, key as u64);
        set(&format!("{name}_BestSolution_Mean"), p.best_mean);
        if *name == "saps" {
            set("saps_BestSolution_CoeffVariance", p.best_cv);
        }
        set(&format!("{name}_FirstLocalMinStep_Mean"), stats(&p.flm).mean);
        set(
            &format!("{name}_FirstLocalMinStep_CoeffVariance"),
            coeff_variation(&p.flm),
        );
        set(&format!("{name}_FirstLocalMinStep_Median"), quantile(&p.flm, 0.5));
        set(&format!("{name}_FirstLocalMinStep_Q.10"), quantile(&p.flm, 0.1));
        set(&format!("{name}_FirstLocalMinStep_Q.90"), quantile(&p.flm, 0.9));
        set(&format!("{name}_BestAvgImprovement_Mean"), p.improvement_mean);
    }

    let mut r = rng::stream(probe_cfg.seed, 2);
    let depth: usize = (0..cfg.lobjois_probes)
        .map(|_| random_probe_depth(f, &mut r))
        .sum();
    let mean_depth = depth as f64 / cfg.lobjois_probes.max(1) as f64;
    set(
        "lobjois-mean-depth-over-vars",
        mean_depth / f.num_vars().max(1) as f64,
    );

    let meta = FeatureMeta {
        probe_seed: probe_cfg.seed,
        probe_budget,
        cg_sample_size: sample.len(),
        config: *cfg,
    };
    (FeatureVector(v), meta)
}

/// Per-feature `[min, max]` over a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_normalization(corpus: &[FeatureVector]) -> Result<NormalizationSpec, FeatureError> {
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut min = vec![f64::INFINITY; NUM_FEATURES];
    let mut max = vec![f64::NEG_INFINITY; NUM_FEATURES];
    for v in corpus {
        for i in 0..NUM_FEATURES {
            min[i] = min[i].min(v.0[i]);
            max[i] = max[i].max(v.0[i]);
        }
    }
    Ok(NormalizationSpec { min, max })
}

impl NormalizationSpec {
    pub fn check(&self) -> Result<(), FeatureError> {
        for len in [self.min.len(), self.max.len()] {
            if len != NUM_FEATURES {
                return Err(FeatureError::SpecMismatch {
                    expected: NUM_FEATURES,
                    got: len,
                });
            }
        }
        Ok(())
    }

    /// Affine map onto `[0, 1]`, clamped; constant features map to 0.
    pub fn apply(&self, v: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; NUM_FEATURES];
        for (i, o) in out.iter_mut().enumerate() {
            let span = self.max[i] - self.min[i];
            *o = if span > 0.0 {
                ((v.0[i] - self.min[i]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        FeatureVector(out)
    }
}

pub fn apply_normalization(spec: &NormalizationSpec, v: &FeatureVector) -> FeatureVector {
    spec.apply(v)
}

/// Features whose (population) variance over the normalized corpus exceeds
/// `threshold`, plus `handpicked`, minus `exclude`, in canonical order.
pub fn select_by_variance(
    corpus: &[FeatureVector],
    threshold: f64,
    handpicked: &[&str],
    exclude: &[&str],
) -> Result<Vec<String>, FeatureError> {
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    for name in handpicked.iter().chain(exclude) {
        feature_index(name)?;
    }
    let n = corpus.len() as f64;
    Ok(FEATURE_NAMES
        .iter()
        .enumerate()
        .filter(|(i, name)| {
            if exclude.contains(name) {
                return false;
            }
            let mean = corpus.iter().map(|v| v.0[*i]).sum::<f64>() / n;
            let var = corpus.iter().map(|v| (v.0[*i] - mean).powi(2)).sum::<f64>() / n;
            var > threshold || handpicked.contains(name)
        })
        .map(|(_, name)| (*name).to_string())
        .collect())
}
