use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rtdlab::cnf::{dpll_satisfiable, parse_dimacs};
use rtdlab::features::TIMING_FEATURE;
use serde_json::Value;

fn rtdlab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtdlab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = rtdlab(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn pipeline(out: &Path, workers: &str) {
    let w = ["--workers", workers, "--seed", "11"];
    let run = |args: &[&str]| ok(out, &[&w[..], args].concat());
    run(&["generate", "--n", "40", "--ratio", "4.26", "--count", "48"]);
    run(&["filter"]);
    run(&["sample", "--runs", "30"]);
    run(&["fit"]);
    run(&["restart-time"]);
    run(&["features"]);
    run(&["train", "--max-epochs", "30", "--trees", "10"]);
    run(&["predict"]);
    run(&["evaluate", "--runs", "10", "--budget", "200000"]);
    run(&["report"]);
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn without_timing(bytes: &[u8]) -> Value {
    let mut v: Value = serde_json::from_slice(bytes).unwrap();
    v["features"].as_object_mut().unwrap().remove(TIMING_FEATURE).unwrap();
    v
}

#[test]
fn pipeline_outputs_identical_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "1");
    pipeline(b.path(), "4");
    let fa = files(a.path());
    let fb = files(b.path());
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, va) in &fa {
        let vb = &fb[k];
        if k.starts_with("features") {
            assert_eq!(without_timing(va), without_timing(vb), "{}", k.display());
        } else {
            assert!(va == vb, "{} differs", k.display());
        }
    }
    for stage in ["samples", "fits", "features", "predictions", "restart"] {
        assert!(fa.keys().any(|k| k.starts_with(stage)), "no {stage} output");
    }
    assert!(fa.contains_key(Path::new("eval/report.json")));
    assert!(fa.contains_key(Path::new("eval/scatter_predicted_vs_luby-20n.csv")));

    // every JSON document carries the schema version
    for (k, v) in &fa {
        if k.extension().is_some_and(|e| e == "json") {
            let doc: Value = serde_json::from_slice(v).unwrap();
            assert_eq!(doc["schema_version"], 1, "{}", k.display());
        }
    }

    // report family table recomputes from the fit documents
    let root = a.path();
    let manifest = read(&root.join("filter.json"));
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut fitted = 0;
    for inst in manifest["instances"].as_array().unwrap() {
        let fit = read(&root.join("fits").join(format!("{}.json", inst["id"].as_str().unwrap())));
        let sel = &fit["selection"];
        if sel.is_null() {
            continue;
        }
        fitted += 1;
        let alpha = sel["alpha"].as_f64().unwrap();
        for f in sel["all_fits"].as_array().unwrap() {
            let fam = f["family"].as_str().unwrap().to_string();
            let e = counts.entry(fam.clone()).or_default();
            if f["p_value"].as_f64().unwrap() >= alpha {
                e.0 += 1;
            }
            if sel["winner"].as_str() == Some(fam.as_str()) {
                e.1 += 1;
            }
        }
    }
    let csv = fs::read_to_string(root.join("report/families.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("family,fitted,passed,passed_pct,won,won_pct"));
    for line in lines {
        let c: Vec<&str> = line.split(',').collect();
        let (passed, won) = counts[c[0]];
        assert_eq!(c[1].parse::<usize>().unwrap(), fitted);
        assert_eq!(c[2].parse::<usize>().unwrap(), passed, "{line}");
        assert_eq!(c[4].parse::<usize>().unwrap(), won, "{line}");
        let pct: f64 = c[3].parse().unwrap();
        assert!((pct - 100.0 * passed as f64 / fitted as f64).abs() < 0.051);
    }
    let summary = read(&root.join("report/summary.json"));
    assert_eq!(summary["instances"], manifest["instances"].as_array().unwrap().len());
}

#[test]
fn filter_manifest_lists_verdicts() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path();
    ok(out, &["--seed", "1", "generate", "--n", "30", "--ratio", "4.26", "--count", "12"]);
    ok(out, &["filter"]);
    let gen = read(&out.join("manifest.json"));
    let filt = read(&out.join("filter.json"));
    let kept = filt["instances"].as_array().unwrap();
    let rejected = filt["rejected"].as_array().map(|r| r.len()).unwrap_or(0);
    assert_eq!(kept.len() + rejected, gen["instances"].as_array().unwrap().len());
    assert!(!kept.is_empty());
    for e in kept {
        assert_eq!(e["verdict"], "sat");
        let text = fs::read_to_string(out.join(e["path"].as_str().unwrap())).unwrap();
        let f = parse_dimacs(&text).unwrap();
        assert_eq!(f.num_vars(), 30);
        assert!(dpll_satisfiable(&f, 1_000_000).is_sat());
    }
    assert_eq!(gen["provenance"]["master_seed"], 1);
    assert!(gen["provenance"]["config"]["instances"].is_object());
}

#[test]
fn fit_document_has_three_fits_winner_and_baseline() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path();
    ok(out, &["--seed", "2", "generate", "--n", "30", "--count", "6"]);
    ok(out, &["filter"]);
    ok(out, &["sample", "--runs", "40"]);
    ok(out, &["fit"]);
    let manifest = read(&out.join("filter.json"));
    let id = manifest["instances"][0]["id"].as_str().unwrap();
    let fit = read(&out.join("fits").join(format!("{id}.json")));
    let fams: Vec<&str> = fit["selection"]["all_fits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["family"].as_str().unwrap())
        .collect();
    assert_eq!(fams, ["weibull", "lognormal", "gp"]);
    assert!(fit["selection"].get("winner").is_some());
    let x = fit["empirical_optimal"]["x"].as_u64().unwrap();
    let e = fit["empirical_optimal"]["expected_runtime"].as_f64().unwrap();
    let sample = read(&out.join("samples").join(format!("{id}.json")));
    let flips: Vec<u64> = serde_json::from_value(sample["sample"]["flips"].clone()).unwrap();
    assert!(flips.contains(&x));
    assert!(e <= fit["mean_runtime"].as_f64().unwrap() + 1e-9);
}

#[test]
fn resume_keeps_existing_outputs() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path();
    ok(out, &["generate", "--n", "20", "--count", "3"]);
    ok(out, &["sample", "--runs", "5"]);
    let first = files(&out.join("samples"));
    let msg = ok(out, &["--seed", "99", "sample", "--runs", "5", "--resume"]);
    assert!(msg.contains("sampled 0"), "{msg}");
    assert_eq!(files(&out.join("samples")), first);
}

#[test]
fn restart_time_for_a_given_distribution() {
    let d = tempfile::tempdir().unwrap();
    let s = ok(
        d.path(),
        &["restart-time", "--family", "weibull", "--shape", "1", "--scale", "50"],
    );
    let v: Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["recommendation"]["kind"], "no_restart");
    let s = ok(
        d.path(),
        &["restart-time", "--family", "weibull", "--shape", "0.5", "--scale", "1", "--location", "1"],
    );
    let v: Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["recommendation"]["kind"], "restart_at");
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path();
    assert_eq!(rtdlab(out, &["--help"]).status.code(), Some(0));
    assert_eq!(rtdlab(out, &["nonsense"]).status.code(), Some(1));
    assert_eq!(rtdlab(out, &["sample", "--runs", "x"]).status.code(), Some(1));
    assert_eq!(rtdlab(out, &["fit", "--alpha", "2"]).status.code(), Some(1));
    // missing inputs
    assert_eq!(rtdlab(out, &["fit"]).status.code(), Some(2));
    ok(out, &["generate", "--n", "20", "--count", "2"]);
    assert_eq!(rtdlab(out, &["evaluate", "--policies", "none,bogus:1"]).status.code(), Some(1));
    assert_eq!(rtdlab(out, &["fit"]).status.code(), Some(2));
    // schema mismatch
    let p = out.join("manifest.json");
    let text = fs::read_to_string(&p).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 7");
    fs::write(&p, text).unwrap();
    let o = rtdlab(out, &["sample", "--runs", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema version 7"));
    // bad config file
    let cfg = out.join("cfg.json");
    fs::write(&cfg, r#"{"sampling": {"runz": 3}}"#).unwrap();
    let o = rtdlab(out, &["--config", cfg.to_str().unwrap(), "generate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_values_and_flag_overrides() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path();
    let cfg = out.join("cfg.json");
    fs::write(&cfg, r#"{"seed": 4, "instances": {"n": [25, 30], "ratio": [4.0], "count": 2}}"#)
        .unwrap();
    ok(out, &["--config", cfg.to_str().unwrap(), "generate", "--count", "3"]);
    let m = read(&out.join("manifest.json"));
    let inst = m["instances"].as_array().unwrap();
    assert_eq!(inst.len(), 6);
    assert_eq!(inst[0]["num_vars"], 25);
    assert_eq!(inst[5]["num_vars"], 30);
    assert_eq!(inst[0]["num_clauses"], 100);
    assert_eq!(m["provenance"]["master_seed"], 4);
}
