use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use uvlc_diffusion::diffusion::Strategy;
use uvlc_diffusion::experiments::*;

fn quick(name: &str) -> ExperimentSpec {
    let mut s = ExperimentSpec::builtin(name).unwrap();
    s.run.ensemble = 8;
    s.run.iterations = 300;
    s.run.window = 100;
    s
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn bundle_layout_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = quick("fig10");
    run_experiment(&spec, &tmp.path().join("a")).unwrap();
    run_experiment(&spec, &tmp.path().join("b")).unwrap();
    let a = read_tree(&tmp.path().join("a"));
    assert_eq!(a, read_tree(&tmp.path().join("b")));
    for f in ["cta/trace.csv", "cta/network_trace.csv", "steady_state.csv", "theory.json", "meta.json", "plot.gp", "topology.txt"] {
        assert!(a.contains_key(f), "missing {f}");
    }
    let trace = String::from_utf8(a["cta/trace.csv"].clone()).unwrap();
    assert!(trace.starts_with("iteration,node,msd\n1,1,"));
    assert_eq!(trace.lines().count(), 1 + 300 * 20);
    let plot = String::from_utf8(a["plot.gp"].clone()).unwrap();
    assert!(plot.contains("cta/network_trace.csv") && plot.contains("1e-8"));
}

#[test]
fn metadata_is_enough_to_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = quick("fig5");
    run_experiment(&spec, &tmp.path().join("first")).unwrap();
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("first/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["nodes"].as_array().unwrap().len(), 20);
    assert!(meta["nodes"][0]["measurement_noise"].as_f64().is_some());
    assert_eq!(meta["seed"], 20_210_226);
    let again: ExperimentSpec = serde_json::from_value(meta["spec"].clone()).unwrap();
    assert_eq!(again, spec);
    run_experiment(&again, &tmp.path().join("second")).unwrap();
    assert_eq!(read_tree(&tmp.path().join("first")), read_tree(&tmp.path().join("second")));
}

#[test]
fn sweep_rows_sorted_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = quick("fig6");
    spec.sweep = Some(Sweep::Water(vec![(28.0, 35.0), (20.0, 36.5), (1.0, 35.0), (20.0, 33.0)]));
    let csv = sweep(&spec, tmp.path()).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let labels: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(labels, ["1C/35PPT", "20C/33PPT", "20C/36.5PPT", "28C/35PPT"]);
    assert_eq!(fs::read_to_string(tmp.path().join("sweep.csv")).unwrap(), csv);
}

#[test]
fn distance_sweep_is_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = quick("fig8");
    spec.run.ensemble = 16;
    spec.run.iterations = 600;
    spec.run.window = 200;
    let result = run_experiment(&spec, tmp.path()).unwrap();
    for s in [Strategy::Atc, Strategy::Cta] {
        let v: Vec<f64> = result.points.iter().map(|p| p.steady_db(s).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0]), "{s}: {v:?}");
    }
}

#[test]
fn single_point_sweep_matches_plain_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut plain = quick("fig5");
    plain.channel = ChannelSetting::Distance { distance_m: 5.0 };
    let mut swept = quick("fig5");
    swept.sweep = Some(Sweep::Distance(vec![5.0]));
    let a = run_experiment(&plain, &tmp.path().join("plain")).unwrap();
    let b = run_experiment(&swept, &tmp.path().join("swept")).unwrap();
    for s in [Strategy::Atc, Strategy::Cta] {
        assert_eq!(a.points[0].steady_db(s), b.points[0].steady_db(s));
    }
    assert_eq!(
        fs::read(tmp.path().join("plain/cta/trace.csv")).unwrap(),
        fs::read(tmp.path().join("swept/point_01/cta/trace.csv")).unwrap()
    );
}

#[test]
fn theory_only_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = quick("fig9");
    spec.theory_only = true;
    let r = run_experiment(&spec, tmp.path()).unwrap();
    assert!(r.points.iter().all(|p| p.theory.is_some() && p.steady_db(Strategy::Cta).is_none()));
    let theory: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("theory.json")).unwrap()).unwrap();
    assert_eq!(theory.as_array().unwrap().len(), 4);
    assert!(theory[0]["prediction"]["spectral_radius"].as_f64().unwrap() < 1.0);
    assert!(!tmp.path().join("point_01/cta").exists());
}

#[test]
fn tables_round_trip_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let t = uvlc_diffusion::channel::VarianceTable::builtin();
    export_tables(&t, &tmp.path().join("one")).unwrap();
    let back = import_tables(&tmp.path().join("one")).unwrap();
    export_tables(&back, &tmp.path().join("two")).unwrap();
    assert_eq!(read_tree(&tmp.path().join("one")), read_tree(&tmp.path().join("two")));
    let listing = list_tables();
    assert!(listing.contains("1, 1.07e-3"));
    assert!(listing.contains("1, 35, 8.04e-5"));
}

#[test]
fn config_errors_carry_context() {
    let mut spec = quick("fig8");
    spec.sweep = Some(Sweep::StepSize(vec![0.05, 40.0]));
    let err = evaluate(&spec).unwrap_err().to_string();
    assert!(err.contains("fig8") && err.contains("40"), "{err}");
    assert!(ExperimentSpec::from_json(r#"{"network":{"nodes":5,"colour":1}}"#).is_err());
}
