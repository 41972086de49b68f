//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use rtdlab::cnf::{dpll_satisfiable, generate_random_3sat, Assignment, Formula};
use rtdlab::dist::{fit_mle, Dist, DistFamily, DistParams, RestartRecommendation};
use rtdlab::eval::{
    head_to_head, paired_t_test, subset_speedup_table, wilcoxon_signed_rank,
    HeadToHeadConfig, PolicyColumn,
};
use rtdlab::features::{extract_features, FeatureVector, TIMING_FEATURE};
use rtdlab::ml::{
    cross_fit_predictions, cross_validate_forest, anchor_loss_value, train_forest, train_pipeline,
    AnchorLoss, AnchorTarget, Mlp, MlpSpec, ParamScaler, PipelineConfig, Rmse, TrainConfig,
    TrainingExample,
};
use rtdlab::probsat::{solve_once, SolverConfig};
use rtdlab::restart::{luby_term, RestartPolicy};
use rtdlab::rng::{derive_seed, stream};
use rtdlab::rtd::{empirical_optimal, fit_all, sample_rtd, RtdSample, WinnerSelection};

const CORPUS_SEED: u64 = 2024;
const N_VARS: u32 = 150;
const RATIO: f64 = 4.26;
const N_SAT: usize = 100;
const RUNS: usize = 100;
const RUN_TIMEOUT: u64 = 10_000_000;
const PROBE_BUDGET: u64 = 20 * N_VARS as u64;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

// ---------------------------------------------------------------- 1

fn luby_expand(i: u64) -> u64 {
    // t_i = 2^(k-1) if i = 2^k - 1, else t_{i - 2^(k-1) + 1}
    let mut k = 1u32;
    while (1u64 << k) - 1 < i {
        k += 1;
    }
    if i == (1u64 << k) - 1 {
        1 << (k - 1)
    } else {
        luby_expand(i - (1 << (k - 1)) + 1)
    }
}

fn criterion_1() -> Verdict {
    let n = 1u64 << 12;
    let mismatches = (1..=n).filter(|&i| luby_term(i).unwrap() != luby_expand(i)).count();
    let head: Vec<u64> = (1..=15).map(|i| luby_term(i).unwrap()).collect();
    let head_ok = head == [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8];
    verdict(
        mismatches == 0 && head_ok,
        format!("{n} terms, {mismatches} mismatches, first 15 ok={head_ok}"),
    )
}

// ---------------------------------------------------------------- 2

fn brute_optimal(s: &RtdSample) -> (u64, f64) {
    let n = s.total_runs() as f64;
    let mut best = (0u64, f64::INFINITY);
    let mut xs = s.flips.clone();
    xs.dedup();
    for &x in &xs {
        let below: Vec<u64> = s.flips.iter().copied().filter(|&y| y <= x).collect();
        let p = below.len() as f64 / n;
        let v = (1.0 - p) / p * x as f64 + below.iter().sum::<u64>() as f64 / below.len() as f64;
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

fn criterion_2() -> Verdict {
    let mut r = stream(7, 0);
    let mut bad = 0;
    for k in 0..100 {
        let size = r.random_range(1..=50);
        let flips: Vec<u64> = (0..size).map(|_| r.random_range(1..200)).collect();
        let censored = r.random_range(0..5);
        let s = RtdSample::new(format!("s{k}"), flips, censored, 1000, k);
        if empirical_optimal(&s).unwrap() != brute_optimal(&s) {
            bad += 1;
        }
    }
    let toy = empirical_optimal(&RtdSample::new("toy", vec![1, 2, 100], 0, 1000, 0)).unwrap();
    verdict(
        bad == 0 && toy == (2, 2.5),
        format!("{bad}/100 mismatches vs enumeration, {{1,2,100}} -> {toy:?}"),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Verdict {
    let draws = |d: &Dist, seed| -> Vec<f64> {
        let mut r = stream(seed, 0);
        (0..10_000).map(|_| d.sample(&mut r)).collect()
    };
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let ln = fit_mle(DistFamily::Lognormal, &draws(&Dist::lognormal(2.0, 0.5).unwrap(), 1)).unwrap();
    let wb = fit_mle(
        DistFamily::Weibull,
        &draws(&Dist::weibull(0.8, 100.0, 50.0).unwrap(), 2),
    )
    .unwrap();
    let gp = fit_mle(DistFamily::Gp, &draws(&Dist::gp(0.3, 50.0, 10.0).unwrap(), 3)).unwrap();
    let ln_ok = rel(ln.scale, 2.0) <= 0.02 && rel(ln.shape, 0.5) <= 0.03;
    let wb_ok = rel(wb.shape, 0.8) <= 0.05 && rel(wb.scale, 100.0) <= 0.05 && rel(wb.location, 50.0) <= 0.05;
    let gp_ok = rel(gp.shape, 0.3) <= 0.10 && rel(gp.scale, 50.0) <= 0.10 && rel(gp.location, 10.0) <= 0.10;
    verdict(
        ln_ok && wb_ok && gp_ok,
        format!(
            "lognormal mu={:.4} sigma={:.4}; weibull k={:.4} scale={:.2} loc={:.2}; gp xi={:.4} scale={:.2} loc={:.2}",
            ln.scale, ln.shape, wb.shape, wb.scale, wb.location, gp.shape, gp.scale, gp.location
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Verdict {
    let exp = Dist::weibull(1.0, 7.0, 0.0).unwrap();
    let worst_memoryless = [0.01, 0.5, 3.0, 7.0, 40.0, 300.0]
        .iter()
        .map(|&t| (exp.expected_runtime_with_restart(t).unwrap() - 7.0).abs() / 7.0)
        .fold(0.0, f64::max);
    let neutral = exp.optimal_restart_time() == RestartRecommendation::NoRestart;

    let shifted = Dist::weibull(0.5, 1.0, 1.0).unwrap();
    let t = shifted.optimal_restart_time().cutoff().unwrap_or(f64::NAN);
    // grid oracle over (loc, loc + 100]
    let (mut gt, mut ge) = (f64::NAN, f64::INFINITY);
    for i in 1..=100_000 {
        let x = 1.0 + 100.0 * i as f64 / 100_000.0;
        let e = shifted.expected_runtime_with_restart(x).unwrap();
        if e < ge {
            (gt, ge) = (x, e);
        }
    }
    let grid_ok = (t - gt).abs() / gt <= 0.01;
    let unshifted = Dist::weibull(0.5, 1.0, 0.0).unwrap();
    let e1 = unshifted.expected_runtime_with_restart(1.0).unwrap();
    let e = std::f64::consts::E;
    // (∫_0^1 exp(-sqrt x) dx) / F(1) = (2 - 4/e) / (1 - 1/e)
    let closed = (2.0 - 4.0 / e) / (1.0 - 1.0 / e);
    let closed_ok = (e1 - closed).abs() <= 1e-4;
    verdict(
        worst_memoryless <= 1e-6 && neutral && grid_ok && closed_ok,
        format!(
            "memoryless dev {worst_memoryless:.2e}, no-restart={neutral}; shifted t*={t:.5} grid {gt:.5}; E(1)={e1:.6} vs {closed:.6}"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn truth_table_sat(f: &Formula) -> bool {
    let n = f.num_vars();
    (0u32..(1 << n)).any(|m| f.evaluate(&Assignment((0..n).map(|b| m & (1 << b) != 0).collect())))
}

fn criterion_5() -> Verdict {
    let mut formulas = Vec::new();
    let mut disagreements = 0;
    let mut seed = 0u64;
    while formulas.len() < 200 {
        seed += 1;
        let n = 5 + (seed % 16) as u32;
        let f = generate_random_3sat(n, 4.26, derive_seed(55, seed)).unwrap();
        let sat = dpll_satisfiable(&f, 1_000_000).is_sat();
        if n <= 12 && sat != truth_table_sat(&f) {
            disagreements += 1;
        }
        if sat {
            formulas.push(f);
        }
    }
    let results: Vec<(bool, bool)> = formulas
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let out = solve_once(f, &SolverConfig::default().with_seed(i as u64).with_max_flips(1_000_000));
            let verified = out.assignment.as_ref().is_none_or(|a| f.evaluate(a));
            (out.solved, verified)
        })
        .collect();
    let solved = results.iter().filter(|r| r.0).count();
    let verified = results.iter().all(|r| r.1);
    verdict(
        solved * 100 >= 99 * formulas.len() && verified && disagreements == 0,
        format!(
            "solved {solved}/{}, all assignments verify={verified}, dpll/truth-table disagreements {disagreements}",
            formulas.len()
        ),
    )
}

// ---------------------------------------------------------------- corpus

struct Instance {
    formula: Formula,
    sample: RtdSample,
    selection: WinnerSelection,
    features: FeatureVector,
}

struct Corpus {
    instances: Vec<Instance>,
    generated: usize,
    unfit: usize,
}

fn instance_for(f: Formula, i: u64) -> Option<Instance> {
    let sample = sample_rtd(&f, &SolverConfig::default(), RUNS, derive_seed(CORPUS_SEED, 1_000 + i), RUN_TIMEOUT);
    let selection = fit_all(&sample, 0.05).ok()?;
    let features = extract_features(
        &f,
        &SolverConfig::default().with_seed(derive_seed(CORPUS_SEED, 2_000 + i)),
        PROBE_BUDGET,
    );
    Some(Instance {
        formula: f,
        sample,
        selection,
        features,
    })
}

fn build_corpus() -> Corpus {
    let mut sat = Vec::new();
    let mut generated = 0u64;
    while sat.len() < N_SAT {
        let batch: Vec<(u64, Formula, bool)> = (generated..generated + 32)
            .into_par_iter()
            .map(|i| {
                let f = generate_random_3sat(N_VARS, RATIO, derive_seed(CORPUS_SEED, i)).unwrap();
                let s = dpll_satisfiable(&f, 10_000_000).is_sat();
                (i, f, s)
            })
            .collect();
        generated += 32;
        for (i, f, s) in batch {
            if s && sat.len() < N_SAT {
                sat.push((i, f));
            }
        }
    }
    let built: Vec<Option<Instance>> = sat.into_iter().map(|(i, f)| instance_for(f, i)).collect();
    let unfit = built.iter().filter(|b| b.is_none()).count();
    Corpus {
        instances: built.into_iter().flatten().collect(),
        generated: generated as usize,
        unfit,
    }
}

fn examples(c: &Corpus) -> Vec<TrainingExample> {
    c.instances
        .iter()
        .map(|i| TrainingExample::new(i.features.clone(), &i.selection, &i.sample).unwrap())
        .collect()
}

// ---------------------------------------------------------------- 6

fn criterion_6(c: &Corpus) -> Verdict {
    let n = c.instances.len();
    let w_pass = c.instances.iter().filter(|i| i.selection.passed(DistFamily::Weibull)).count();
    let data: Vec<(RtdSample, WinnerSelection)> = c
        .instances
        .iter()
        .map(|i| (i.sample.clone(), i.selection.clone()))
        .collect();
    let table = subset_speedup_table(&data).unwrap();
    let base = table.row(&[]).unwrap().speedup_best;
    let lw = table.row(&[DistFamily::Lognormal, DistFamily::Weibull]).unwrap().speedup_best;
    let recovered = lw.ln() / base.ln();
    let frac = w_pass as f64 / n as f64;
    verdict(
        n >= 50 && frac >= 0.70 && base >= 1.10 && recovered >= 0.5,
        format!(
            "{n} instances ({} generated, {} not fittable); Weibull passes KS on {:.1}%; baseline GM {base:.3}; {{L,W}} best-of GM {lw:.3} recovers {:.1}% of log-speedup",
            c.generated,
            c.unfit,
            100.0 * frac,
            100.0 * recovered
        ),
    )
}

// ---------------------------------------------------------------- 7

fn static_vs_luby(c: &Corpus, ex: &[TrainingExample]) -> rtdlab::eval::EvalReport {
    let preds = cross_fit_predictions(ex, 5, &PipelineConfig::default(), derive_seed(CORPUS_SEED, 7)).unwrap();
    let recs: Vec<RestartRecommendation> = preds.iter().map(|p| p.recommendation).collect();
    let m = c.instances.len();
    let cols = [
        PolicyColumn::from_recommendations("static", &recs),
        PolicyColumn::uniform("luby", RestartPolicy::Luby { a: 20 * N_VARS as u64 }, m),
        PolicyColumn::uniform("none", RestartPolicy::NoRestart, m),
    ];
    let formulas: Vec<Formula> = c.instances.iter().map(|i| i.formula.clone()).collect();
    let cfg = HeadToHeadConfig {
        runs_per_instance: RUNS,
        budget: RUN_TIMEOUT,
        master_seed: derive_seed(CORPUS_SEED, 8),
    };
    head_to_head(&formulas, &cols, &SolverConfig::default(), &cfg).unwrap()
}

fn criterion_7(c: &Corpus, ex: &[TrainingExample]) -> Verdict {
    let rep = static_vs_luby(c, ex);
    let luby = &rep.comparisons[0];
    let none = &rep.comparisons[1];
    let w = luby.wilcoxon.unwrap();
    let n = w.n as f64;
    let favours_static = w.statistic > n * (n + 1.0) / 4.0;
    verdict(
        luby.geometric_mean > 1.0 && w.p_value < 0.05 && favours_static,
        format!(
            "static vs luby(20n): GM {:.3}, Wilcoxon W={} (n={}) p={:.2e}; static vs none GM {:.3}; {} restart-predicted, {} no-restart, {} excluded",
            luby.geometric_mean,
            w.statistic,
            w.n,
            w.p_value,
            none.geometric_mean,
            rep.restart_predicted,
            rep.no_restart_predicted,
            rep.excluded.len()
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8(ex: &[TrainingExample]) -> Verdict {
    let mut r = stream(88, 0);
    let x = ndarray::Array2::from_shape_simple_fn((4, 9), || r.random::<f64>());
    let mut worst: f64 = 0.0;
    let loc = Mlp::new(MlpSpec::location_net(9), 1);
    worst = worst.max(loc.max_gradient_error(&x, &Rmse { targets: vec![0.5, 1.5, 1.0, 2.0] }, 2));
    for fam in [DistFamily::Weibull, DistFamily::Lognormal] {
        let params: Vec<DistParams> = ex.iter().map(|e| e.params(fam)).collect();
        let scaler = ParamScaler::fit(fam, &params).unwrap();
        let targets = ex[..4]
            .iter()
            .map(|e| AnchorTarget {
                anchor_x: e.anchor_x - e.params(fam).location,
                anchor_prob: e.anchor_prob,
                label_shape: e.params(fam).shape,
            })
            .collect();
        let net = Mlp::new(MlpSpec::family_net(9), 3);
        worst = worst.max(net.max_gradient_error(&x, &AnchorLoss { scaler, targets }, 4));
    }

    let separable = |n: usize, seed: u64| {
        let mut r = stream(seed, 0);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..4).map(|_| r.random::<f64>()).collect();
                while (v[0] - 0.5).abs() < 0.05 {
                    v[0] = r.random();
                }
                v
            })
            .collect();
        let ys: Vec<DistFamily> = xs
            .iter()
            .map(|v| if v[0] < 0.5 { DistFamily::Weibull } else { DistFamily::Lognormal })
            .collect();
        (xs, ys)
    };
    let (tx, ty) = separable(200, 1);
    let forest = train_forest(&tx, &ty, 50, 2).unwrap();
    let (hx, hy) = separable(500, 3);
    let acc = hx.iter().zip(&hy).filter(|(x, y)| forest.predict(x) == **y).count() as f64 / 500.0;

    let bal = cross_validate_forest(ex, 5, &PipelineConfig::default(), derive_seed(CORPUS_SEED, 9)).unwrap();
    let w_labels = ex.iter().filter(|e| e.label == DistFamily::Weibull).count();
    let anchor = anchor_loss_value(0.7, 0.6, 1.0, 1.5);
    verdict(
        worst < 1e-4 && acc == 1.0 && bal >= 0.55 && anchor == 0.6,
        format!(
            "max gradient rel err {worst:.2e}; separable held-out acc {acc}; 5-fold balanced acc {bal:.3} ({w_labels} W / {} L labels); anchor loss example {anchor}",
            ex.len() - w_labels
        ),
    )
}

// ---------------------------------------------------------------- 9

fn brute_p(d: &[f64]) -> (f64, f64) {
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    // average ranks
    let ranks: Vec<f64> = abs
        .iter()
        .map(|&a| {
            let less = abs.iter().filter(|&&b| b < a).count() as f64;
            let eq = abs.iter().filter(|&&b| b == a).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect();
    let w: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let (mut lo, mut hi) = (0u32, 0u32);
    for m in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|b| m & (1 << b) != 0).map(|b| ranks[b]).sum();
        lo += (s <= w + 1e-9) as u32;
        hi += (s >= w - 1e-9) as u32;
    }
    (w, (2.0 * lo.min(hi) as f64 / (1u64 << n) as f64).min(1.0))
}

fn criterion_9() -> Verdict {
    let mut r = stream(99, 0);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 5..=12 {
        for _ in 0..25 {
            let y: Vec<f64> = (0..n).map(|_| r.random_range(1.0..100.0)).collect();
            let x: Vec<f64> = y
                .iter()
                .map(|&v| {
                    // quantized ratios produce tied |differences|
                    let k = r.random_range(1..5) as f64;
                    if r.random::<bool>() { v * (1.0 + 0.1 * k) } else { v / (1.0 + 0.1 * k) }
                })
                .collect();
            let res = wilcoxon_signed_rank(&x, &y).unwrap();
            let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a.ln() - b.ln()).collect();
            let (w, p) = brute_p(&d);
            worst = worst.max((res.p_value - p).abs()).max((res.statistic - w).abs());
            cases += 1;
        }
    }
    let same = [3.0, 1.5, 8.0, 2.0];
    let t_p = paired_t_test(&same, &same).unwrap().p_value;
    let five = wilcoxon_signed_rank(&[2.0, 3.0, 5.0, 7.0, 11.0], &[1.0; 5]).unwrap();
    verdict(
        worst < 1e-12 && t_p == 1.0 && five.p_value == 0.0625 && five.statistic == 15.0,
        format!(
            "{cases} datasets n=5..12, max deviation from enumeration {worst:.1e}; identical t-test p={t_p}; n=5 all-positive W={} p={}",
            five.statistic, five.p_value
        ),
    )
}

// ---------------------------------------------------------------- 10

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn strip_timing(v: &FeatureVector) -> String {
    let mut j = serde_json::to_value(v).unwrap();
    j.as_object_mut().unwrap().remove(TIMING_FEATURE);
    j.to_string()
}

fn stage_outputs(c: &Corpus, ex: &[TrainingExample]) -> Vec<(String, String)> {
    let sub = &c.instances[..6];
    let mut out = Vec::new();
    for (k, inst) in sub.iter().enumerate() {
        let s = sample_rtd(&inst.formula, &SolverConfig::default(), RUNS, derive_seed(5, k as u64), RUN_TIMEOUT);
        out.push((format!("sample {k}"), serde_json::to_string(&s).unwrap()));
        let fit = fit_all(&s, 0.05).unwrap();
        out.push((format!("fit {k}"), serde_json::to_string(&fit).unwrap()));
        let fv = extract_features(&inst.formula, &SolverConfig::default().with_seed(k as u64), PROBE_BUDGET);
        out.push((format!("features {k}"), strip_timing(&fv)));
    }
    let cfg = PipelineConfig {
        train: TrainConfig {
            max_epochs: 200,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    };
    let bundle = train_pipeline(ex, &cfg, 3).unwrap();
    out.push(("model".into(), serde_json::to_string(&bundle).unwrap()));
    let formulas: Vec<Formula> = sub.iter().map(|i| i.formula.clone()).collect();
    let cols = [
        PolicyColumn::uniform("fixed", RestartPolicy::FixedCutoff { t: 4000 }, 6),
        PolicyColumn::uniform("luby", RestartPolicy::Luby { a: 20 * N_VARS as u64 }, 6),
    ];
    let cfg = HeadToHeadConfig {
        runs_per_instance: 30,
        budget: RUN_TIMEOUT,
        master_seed: 12,
    };
    let rep = head_to_head(&formulas, &cols, &SolverConfig::default(), &cfg).unwrap();
    out.push(("report".into(), serde_json::to_string(&rep).unwrap()));
    out.push(("scatter".into(), rep.scatter_csv(0, 1)));
    out
}

fn criterion_10(c: &Corpus, ex: &[TrainingExample]) -> Verdict {
    let a = with_pool(1, || stage_outputs(c, ex));
    let b = with_pool(4, || stage_outputs(c, ex));
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        differing.is_empty(),
        format!("{} artifacts compared at 1 vs 4 workers, differing: {:?}", a.len(), differing),
    )
}

// ----------------------------------------------------------------

fn run(id: u32, name: &str, limit_secs: Option<f64>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let secs = start.elapsed().as_secs_f64();
    let in_time = limit_secs.is_none_or(|l| secs < l);
    let pass = v.pass && in_time;
    let limit = limit_secs.map_or(String::new(), |l| format!(", limit {l}s"));
    println!(
        "criterion {id:>2} [{}] {name}: {} ({secs:.2}s{limit})",
        if pass { "PASS" } else { "FAIL" },
        v.detail
    );
    pass
}

fn main() {
    let mut ok = true;
    ok &= run(1, "Luby sequence", Some(1.0), criterion_1);
    ok &= run(2, "empirical optimum oracle", Some(1.0), criterion_2);
    ok &= run(3, "MLE recovery", Some(30.0), criterion_3);
    ok &= run(4, "restart calculus", Some(10.0), criterion_4);
    ok &= run(5, "solver validity", Some(60.0), criterion_5);

    let start = Instant::now();
    let corpus = build_corpus();
    let ex = examples(&corpus);
    println!(
        "corpus: {} instances of n={N_VARS}, ratio {RATIO}, {RUNS} runs each, built in {:.1}s",
        corpus.instances.len(),
        start.elapsed().as_secs_f64()
    );
    ok &= run(6, "desk-scale RTD study", None, || criterion_6(&corpus));
    ok &= run(7, "policy head-to-head", None, || criterion_7(&corpus, &ex));
    ok &= run(8, "ML machinery", None, || criterion_8(&ex));
    ok &= run(9, "statistics", None, criterion_9);
    ok &= run(10, "determinism", None, || criterion_10(&corpus, &ex));
    if !ok {
        std::process::exit(1);
    }
}
