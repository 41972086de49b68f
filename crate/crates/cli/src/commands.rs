use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rtdlab::cnf::{dpll_satisfiable, generate_random_3sat, write_dimacs, FormulaMeta};
use rtdlab::dist::{Dist, DistFamily, DistParams, RestartRecommendation};
use rtdlab::eval::{
    geometric_mean, head_to_head, subset_speedup_table, EvalReport, HeadToHeadConfig,
    PolicyColumn, SubsetTable,
};
use rtdlab::features::{extract_features_with, FeatureMeta, FeatureVector};
use rtdlab::ml::{pipeline_predict, train_pipeline, ModelBundle, PipelinePrediction, TrainingExample};
use rtdlab::restart::RestartPolicy;
use rtdlab::rng::derive_seed;
use rtdlab::rtd::{ecdf_overlay_csv, empirical_optimal, fit_all, sample_rtd, RtdSample, WinnerSelection};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Stage};
use crate::store::{
    data_err, read_json, write_atomic, write_json, CliError, InstanceEntry, Layout, Manifest,
    SCHEMA_VERSION,
};

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDoc {
    pub schema_version: u32,
    pub instance_id: String,
    pub provenance: Value,
    pub sample: RtdSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOptimum {
    pub x: u64,
    pub expected_runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDoc {
    pub schema_version: u32,
    pub instance_id: String,
    pub provenance: Value,
    pub mean_runtime: Option<f64>,
    pub selection: Option<WinnerSelection>,
    pub empirical_optimal: Option<EmpiricalOptimum>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartDoc {
    pub schema_version: u32,
    pub instance_id: String,
    pub provenance: Value,
    pub family: DistFamily,
    /// `flag`, `winner` or `best_p` (no family passed the KS test).
    pub source: String,
    pub params: DistParams,
    pub recommendation: RestartRecommendation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDoc {
    pub schema_version: u32,
    pub instance_id: String,
    pub provenance: Value,
    pub meta: FeatureMeta,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub schema_version: u32,
    pub provenance: Value,
    pub instances: Vec<String>,
    pub skipped: Vec<String>,
    pub bundle: ModelBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDoc {
    pub schema_version: u32,
    pub instance_id: String,
    pub provenance: Value,
    pub prediction: PipelinePrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDoc {
    pub schema_version: u32,
    pub provenance: Value,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub family: DistFamily,
    pub fitted: usize,
    pub passed: usize,
    pub won: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub schema_version: u32,
    pub provenance: Value,
    pub instances: usize,
    pub unfit: Vec<String>,
    pub no_winner: usize,
    pub families: Vec<FamilyRow>,
    pub baseline_geometric_mean: Option<f64>,
    pub subsets: Option<SubsetTable>,
}

impl Ctx {
    fn provenance(&self, stage_seed: Option<u64>, instance_seed: Option<u64>) -> Value {
        let mut v = json!({ "master_seed": self.cfg.seed, "config": self.cfg });
        if let Some(s) = stage_seed {
            v["stage_seed"] = json!(s);
        }
        if let Some(s) = instance_seed {
            v["instance_seed"] = json!(s);
        }
        v
    }

    fn manifest(&self, path: Option<&Path>) -> Result<(Manifest, PathBuf), CliError> {
        let p = path.map(Path::to_path_buf).unwrap_or_else(|| self.layout.default_manifest());
        let m: Manifest = read_json(&p)?;
        let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, base))
    }
}

fn family_table(fits: &[FitDoc]) -> (Vec<FamilyRow>, usize) {
    let mut rows: Vec<FamilyRow> = [DistFamily::Weibull, DistFamily::Lognormal, DistFamily::Gp]
        .iter()
        .map(|&family| FamilyRow { family, fitted: 0, passed: 0, won: 0 })
        .collect();
    let mut no_winner = 0;
    for sel in fits.iter().filter_map(|d| d.selection.as_ref()) {
        for r in rows.iter_mut() {
            if sel.fit(r.family).is_some() {
                r.fitted += 1;
            }
            if sel.passed(r.family) {
                r.passed += 1;
            }
            if sel.winner == Some(r.family) {
                r.won += 1;
            }
        }
        if sel.winner.is_none() {
            no_winner += 1;
        }
    }
    (rows, no_winner)
}

pub fn family_table_csv(rows: &[FamilyRow], instances: usize) -> String {
    let pct = |k: usize| if instances == 0 { 0.0 } else { 100.0 * k as f64 / instances as f64 };
    let mut s = String::from("family,fitted,passed,passed_pct,won,won_pct\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.1},{},{:.1}\n",
            r.family,
            r.fitted,
            r.passed,
            pct(r.passed),
            r.won,
            pct(r.won)
        ));
    }
    s
}

pub fn generate(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let seed = cfg.stage_seed(Stage::Generate);
    let mut plan = Vec::new();
    for &n in &cfg.instances.n {
        for &ratio in &cfg.instances.ratio {
            for _ in 0..cfg.instances.count {
                plan.push((plan.len() as u64, n, ratio));
            }
        }
    }
    let entries = plan
        .par_iter()
        .map(|&(index, n, ratio)| {
            let s = derive_seed(seed, index);
            let id = format!("n{n}-r{ratio}-{index:05}");
            let f = generate_random_3sat(n, ratio, s)
                .map_err(|e| CliError::Usage(e.to_string()))?
                .with_meta(FormulaMeta { id: Some(id.clone()), seed: Some(s), ratio: Some(ratio) });
            let path = ctx.layout.instance(&id);
            write_atomic(&ctx.layout.root.join(&path), write_dimacs(&f).as_bytes())?;
            Ok(InstanceEntry {
                id,
                path,
                index,
                num_vars: n,
                num_clauses: f.num_clauses(),
                ratio,
                seed: s,
                verdict: None,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let m = Manifest {
        schema_version: SCHEMA_VERSION,
        stage: "generate".into(),
        provenance: ctx.provenance(Some(seed), None),
        instances: entries,
        rejected: Vec::new(),
    };
    write_json(&ctx.layout.manifest(), &m)?;
    println!("generated {} instances", m.instances.len());
    Ok(())
}

pub fn filter(ctx: &Ctx, manifest: Option<&Path>) -> Result<(), CliError> {
    let (m, base) = ctx.manifest(manifest)?;
    let budget = ctx.cfg.filter.node_budget;
    let judged = m
        .instances
        .par_iter()
        .map(|e| {
            let f = e.load(&base)?;
            let mut e = e.clone();
            e.verdict = Some(dpll_satisfiable(&f, budget).label().to_string());
            // paths stay valid when the filtered manifest lives elsewhere
            e.path = base.join(&e.path).to_string_lossy().into_owned();
            Ok(e)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let out_base = ctx.layout.root.clone();
    let relativize = |mut e: InstanceEntry| {
        if let Ok(rel) = Path::new(&e.path).strip_prefix(&out_base) {
            e.path = rel.to_string_lossy().into_owned();
        }
        e
    };
    let (sat, rejected): (Vec<_>, Vec<_>) =
        judged.into_iter().map(relativize).partition(|e| e.verdict.as_deref() == Some("sat"));
    println!("{} of {} instances satisfiable", sat.len(), sat.len() + rejected.len());
    write_json(
        &ctx.layout.filtered(),
        &Manifest {
            schema_version: SCHEMA_VERSION,
            stage: "filter".into(),
            provenance: ctx.provenance(None, None),
            instances: sat,
            rejected,
        },
    )
}

pub fn sample(ctx: &Ctx, manifest: Option<&Path>, resume: bool) -> Result<(), CliError> {
    let (m, base) = ctx.manifest(manifest)?;
    let seed = ctx.cfg.stage_seed(Stage::Sample);
    let sc = ctx.cfg.sampling;
    let solver = ctx.cfg.solver();
    let done = m
        .instances
        .par_iter()
        .map(|e| {
            let path = ctx.layout.stage_file("samples", &e.id);
            if resume && read_json::<SampleDoc>(&path).is_ok() {
                return Ok(0);
            }
            let f = e.load(&base)?;
            let s = derive_seed(seed, e.index);
            let sample = sample_rtd(&f, &solver, sc.runs, s, sc.timeout);
            write_json(
                &path,
                &SampleDoc {
                    schema_version: SCHEMA_VERSION,
                    instance_id: e.id.clone(),
                    provenance: ctx.provenance(Some(seed), Some(s)),
                    sample,
                },
            )?;
            Ok(1)
        })
        .collect::<Result<Vec<usize>, CliError>>()?;
    println!("sampled {} instances", done.iter().sum::<usize>());
    Ok(())
}

pub fn fit(ctx: &Ctx, manifest: Option<&Path>) -> Result<(), CliError> {
    let (m, _) = ctx.manifest(manifest)?;
    let alpha = ctx.cfg.fit.alpha;
    let docs = m
        .instances
        .par_iter()
        .map(|e| {
            let sd: SampleDoc = read_json(&ctx.layout.stage_file("samples", &e.id))?;
            let s = &sd.sample;
            let (selection, error) = match fit_all(s, alpha) {
                Ok(sel) => (Some(sel), None),
                Err(err) => (None, Some(err.to_string())),
            };
            if let Some(sel) = &selection {
                let csv = ecdf_overlay_csv(s, &sel.all_fits).map_err(data_err)?;
                let p = ctx.layout.root.join("fits").join(format!("{}.ecdf.csv", e.id));
                write_atomic(&p, csv.as_bytes())?;
            }
            let doc = FitDoc {
                schema_version: SCHEMA_VERSION,
                instance_id: e.id.clone(),
                provenance: ctx.provenance(None, None),
                mean_runtime: s.mean_runtime(),
                selection,
                empirical_optimal: empirical_optimal(s)
                    .ok()
                    .map(|(x, v)| EmpiricalOptimum { x, expected_runtime: v }),
                error,
            };
            write_json(&ctx.layout.stage_file("fits", &e.id), &doc)?;
            Ok(doc)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let failed = docs.iter().filter(|d| d.error.is_some()).count();
    println!("fitted {} instances ({failed} without fits)", docs.len() - failed);
    Ok(())
}

pub struct DirectDist {
    pub family: Option<DistFamily>,
    pub shape: Option<f64>,
    pub scale: Option<f64>,
    pub location: f64,
}

pub fn restart_time(ctx: &Ctx, manifest: Option<&Path>, d: DirectDist) -> Result<(), CliError> {
    if let Some(shape) = d.shape {
        let (Some(family), Some(scale)) = (d.family, d.scale) else {
            return Err(CliError::Usage("--shape needs --family and --scale".into()));
        };
        let dist = Dist::new(family, DistParams::new(shape, scale, d.location))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let rec = dist.optimal_restart_time();
        let doc = json!({ "schema_version": SCHEMA_VERSION, "distribution": dist, "recommendation": rec });
        println!("{}", serde_json::to_string_pretty(&doc).map_err(data_err)?);
        return Ok(());
    }
    let (m, _) = ctx.manifest(manifest)?;
    let counts = m
        .instances
        .par_iter()
        .map(|e| {
            let fd: FitDoc = read_json(&ctx.layout.stage_file("fits", &e.id))?;
            let Some(sel) = fd.selection else { return Ok(0) };
            let (fit, source) = match d.family {
                Some(fam) => (sel.fit(fam), "flag"),
                None => match sel.winner_fit() {
                    Some(w) => (Some(w), "winner"),
                    None => (
                        sel.all_fits.iter().max_by(|a, b| a.p_value.total_cmp(&b.p_value)),
                        "best_p",
                    ),
                },
            };
            let fit = fit.ok_or_else(|| data_err(format!("{}: no fit for the family", e.id)))?;
            let doc = RestartDoc {
                schema_version: SCHEMA_VERSION,
                instance_id: e.id.clone(),
                provenance: ctx.provenance(None, None),
                family: fit.family,
                source: source.into(),
                params: fit.params,
                recommendation: fit.dist().optimal_restart_time(),
            };
            write_json(&ctx.layout.stage_file("restart", &e.id), &doc)?;
            Ok(1)
        })
        .collect::<Result<Vec<usize>, CliError>>()?;
    println!("restart times for {} instances", counts.iter().sum::<usize>());
    Ok(())
}

pub fn features(ctx: &Ctx, manifest: Option<&Path>, resume: bool) -> Result<(), CliError> {
    let (m, base) = ctx.manifest(manifest)?;
    let seed = ctx.cfg.stage_seed(Stage::Features);
    let fcfg = ctx.cfg.feature_config();
    let solver = ctx.cfg.solver();
    let done = m
        .instances
        .par_iter()
        .map(|e| {
            let path = ctx.layout.stage_file("features", &e.id);
            if resume && read_json::<FeatureDoc>(&path).is_ok() {
                return Ok(0);
            }
            let f = e.load(&base)?;
            let s = derive_seed(seed, e.index);
            let budget = ctx.cfg.features.probe_flips_per_var * f.num_vars() as u64;
            let (features, meta) = extract_features_with(&f, &solver.with_seed(s), budget, &fcfg);
            write_json(
                &path,
                &FeatureDoc {
                    schema_version: SCHEMA_VERSION,
                    instance_id: e.id.clone(),
                    provenance: ctx.provenance(Some(seed), Some(s)),
                    meta,
                    features,
                },
            )?;
            Ok(1)
        })
        .collect::<Result<Vec<usize>, CliError>>()?;
    println!("features for {} instances", done.iter().sum::<usize>());
    Ok(())
}

pub fn train(ctx: &Ctx, manifest: Option<&Path>) -> Result<(), CliError> {
    let (m, _) = ctx.manifest(manifest)?;
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for e in &m.instances {
        let fd: FitDoc = read_json(&ctx.layout.stage_file("fits", &e.id))?;
        let Some(sel) = fd.selection else {
            skipped.push(e.id.clone());
            continue;
        };
        let sd: SampleDoc = read_json(&ctx.layout.stage_file("samples", &e.id))?;
        let ft: FeatureDoc = read_json(&ctx.layout.stage_file("features", &e.id))?;
        examples.push(TrainingExample::new(ft.features, &sel, &sd.sample).map_err(data_err)?);
    }
    let seed = ctx.cfg.stage_seed(Stage::Train);
    let bundle = train_pipeline(&examples, &ctx.cfg.pipeline(), seed).map_err(data_err)?;
    println!(
        "trained on {} instances, {} features selected",
        examples.len(),
        bundle.selected_features.len()
    );
    write_json(
        &ctx.layout.model(),
        &ModelDoc {
            schema_version: SCHEMA_VERSION,
            provenance: ctx.provenance(Some(seed), None),
            instances: examples.into_iter().map(|x| x.instance_id).collect(),
            skipped,
            bundle,
        },
    )
}

pub fn predict(ctx: &Ctx, manifest: Option<&Path>, model: Option<&Path>) -> Result<(), CliError> {
    let (m, _) = ctx.manifest(manifest)?;
    let mp = model.map(Path::to_path_buf).unwrap_or_else(|| ctx.layout.model());
    let md: ModelDoc = read_json(&mp)?;
    md.bundle.check().map_err(data_err)?;
    let preds = m
        .instances
        .par_iter()
        .map(|e| {
            let ft: FeatureDoc = read_json(&ctx.layout.stage_file("features", &e.id))?;
            let prediction = pipeline_predict(&md.bundle, &ft.features).map_err(data_err)?;
            let restart = prediction.recommendation.cutoff().is_some();
            write_json(
                &ctx.layout.stage_file("predictions", &e.id),
                &PredictionDoc {
                    schema_version: SCHEMA_VERSION,
                    instance_id: e.id.clone(),
                    provenance: json!({ "model": md.provenance }),
                    prediction,
                },
            )?;
            Ok(restart)
        })
        .collect::<Result<Vec<bool>, CliError>>()?;
    let r = preds.iter().filter(|&&b| b).count();
    println!("predicted {} instances ({r} restart, {} no restart)", preds.len(), preds.len() - r);
    Ok(())
}

fn file_tag(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '-' }).collect()
}

pub fn evaluate(ctx: &Ctx, manifest: Option<&Path>) -> Result<(), CliError> {
    let (m, base) = ctx.manifest(manifest)?;
    let ec = &ctx.cfg.evaluate;
    let formulas =
        m.instances.iter().map(|e| e.load(&base)).collect::<Result<Vec<_>, CliError>>()?;
    let mut columns = Vec::new();
    for name in &ec.policies {
        let col = if name == "predicted" {
            let recs = m
                .instances
                .iter()
                .map(|e| {
                    let p: PredictionDoc = read_json(&ctx.layout.stage_file("predictions", &e.id))?;
                    Ok(p.prediction.recommendation)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            PolicyColumn::from_recommendations(name.clone(), &recs)
        } else {
            let per_instance = formulas
                .iter()
                .map(|f| RestartPolicy::parse_with_vars(name, Some(f.num_vars())))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Usage(format!("policy `{name}`: {e}")))?;
            PolicyColumn { name: name.clone(), per_instance }
        };
        columns.push(col);
    }
    if columns.len() < 2 {
        return Err(CliError::Usage("evaluate needs at least two policies".into()));
    }
    let seed = ctx.cfg.stage_seed(Stage::Evaluate);
    let hc = HeadToHeadConfig { runs_per_instance: ec.runs, budget: ec.budget, master_seed: seed };
    let report = head_to_head(&formulas, &columns, &ctx.cfg.solver(), &hc).map_err(data_err)?;
    let dir = ctx.layout.root.join("eval");
    for (b, c) in report.comparisons.iter().enumerate() {
        let p = dir.join(format!("scatter_{}_vs_{}.csv", file_tag(&c.candidate), file_tag(&c.baseline)));
        write_atomic(&p, report.scatter_csv(0, b + 1).as_bytes())?;
        let p_w = c.wilcoxon.map(|t| format!("{:.3e}", t.p_value)).unwrap_or_else(|| "n/a".into());
        println!(
            "{} vs {}: geometric mean speedup {:.4}, wilcoxon p {p_w}",
            c.candidate, c.baseline, c.geometric_mean
        );
    }
    write_json(
        &dir.join("report.json"),
        &EvalDoc {
            schema_version: SCHEMA_VERSION,
            provenance: ctx.provenance(Some(seed), None),
            report,
        },
    )
}

pub fn report(ctx: &Ctx, manifest: Option<&Path>) -> Result<(), CliError> {
    let (m, _) = ctx.manifest(manifest)?;
    let fits = m
        .instances
        .iter()
        .map(|e| read_json::<FitDoc>(&ctx.layout.stage_file("fits", &e.id)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let (families, no_winner) = family_table(&fits);
    let unfit: Vec<String> =
        fits.iter().filter(|d| d.selection.is_none()).map(|d| d.instance_id.clone()).collect();
    let mut data = Vec::new();
    for d in &fits {
        if let Some(sel) = &d.selection {
            let sd: SampleDoc = read_json(&ctx.layout.stage_file("samples", &d.instance_id))?;
            data.push((sd.sample, sel.clone()));
        }
    }
    let subsets = if data.is_empty() {
        None
    } else {
        Some(subset_speedup_table(&data).map_err(data_err)?)
    };
    let baseline_geometric_mean = match &subsets {
        Some(t) => {
            let s: Vec<f64> = t.instances.iter().map(|i| i.baseline_speedup).collect();
            Some(geometric_mean(&s).map_err(data_err)?)
        }
        None => None,
    };
    let dir = ctx.layout.root.join("report");
    let fitted = fits.len() - unfit.len();
    write_atomic(&dir.join("families.csv"), family_table_csv(&families, fitted).as_bytes())?;
    if let Some(t) = &subsets {
        write_atomic(&dir.join("subsets.csv"), t.to_csv().as_bytes())?;
    }
    print!("{}", family_table_csv(&families, fitted));
    if let Some(g) = baseline_geometric_mean {
        println!("empirical optimal restart baseline: geometric mean speedup {g:.4}");
    }
    write_json(
        &dir.join("summary.json"),
        &ReportDoc {
            schema_version: SCHEMA_VERSION,
            provenance: ctx.provenance(None, None),
            instances: fits.len(),
            unfit,
            no_winner,
            families,
            baseline_geometric_mean,
            subsets,
        },
    )
}
