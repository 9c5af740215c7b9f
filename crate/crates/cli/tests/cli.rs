use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use meshreg::deform::DisplacementField;
use meshreg::mesh::{read_obj, shapes, write_obj};
use meshreg::synth::{gen_case, gen_reference, layout, write_case, write_manifest, write_reference, Manifest, ManifestCase, WarpLimits, WarpSpec};
use meshreg::{Mesh, Vec3};

fn meshreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshreg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = meshreg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    fs::write(&p, json).unwrap();
    p
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn printed_config_reproduces_itself() {
    let dir = tempfile::tempdir().unwrap();
    let first = ok(&["--seed", "7", "--print-config", "synth", "--out", "x"]).stdout;
    let cfg = dir.path().join("printed.json");
    fs::write(&cfg, &first).unwrap();
    let second = ok(&["--config", s(&cfg), "--print-config", "synth", "--out", "x"]).stdout;
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    for key in ["\"weights\"", "\"fit\"", "\"interp\"", "\"deformer\"", "\"paths\"", "\"seed\": 7"] {
        assert!(text.contains(key), "{key} missing from {text}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(meshreg(&["synth"]).status.code(), Some(1));
    assert_eq!(meshreg(&["frobnicate"]).status.code(), Some(1));
    let bad = write_config(dir.path(), r#"{"fit": {"max_iter": 3}}"#);
    let out = meshreg(&["--config", s(&bad), "synth", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_iter"));

    let missing = dir.path().join("nope.rawvol");
    let out = meshreg(&["extract", "--mask", s(&missing), "--out", s(&dir.path().join("m.obj"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.rawvol"));

    let pts = dir.path().join("pts.csv");
    fs::write(&pts, "x,y\n1,2\n").unwrap();
    let mesh = dir.path().join("ref.obj");
    write_obj(&shapes::icosphere::<f64>(1, 3.0), &mesh).unwrap();
    let disp = dir.path().join("d.csv");
    DisplacementField::<f64>::zeros(42).write_csv(&disp).unwrap();
    let out = meshreg(&["register", "ref2tgt", "--reference", s(&mesh), "--disp", s(&disp), "--points", s(&pts), "--out", "o.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pts.csv"));
    let out = meshreg(&["register", "pair", "--reference", s(&mesh), "--disp", s(&disp), "--points", s(&pts), "--out", "o.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pair_with_the_same_field_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let reference = shapes::icosphere::<f64>(2, 10.0);
    let mesh = dir.path().join("ref.obj");
    write_obj(&reference, &mesh).unwrap();
    let field = DisplacementField::new(
        reference
            .vertices()
            .iter()
            .map(|v| Vec3::new((v.y / 3.0).sin(), 0.5 * v.x.cos(), 0.1 * v.z))
            .collect(),
    )
    .unwrap();
    let disp = dir.path().join("d.csv");
    field.write_csv(&disp).unwrap();
    let pts = dir.path().join("pts.csv");
    fs::write(&pts, "name,x,y,z\na,1,2,3\nb,-4,0.5,2\nc,10,0,0\nd,30,-20,5\n").unwrap();
    let out = dir.path().join("mapped.csv");
    ok(&["register", "pair", "--reference", s(&mesh), "--disp", s(&disp), "--disp", s(&disp), "--points", s(&pts), "--out", s(&out)]);
    let a = read_csv(&pts);
    let b = read_csv(&out);
    assert_eq!(a[0], b[0]);
    for (ra, rb) in a[1..].iter().zip(&b[1..]) {
        assert_eq!(ra[0], rb[0]);
        for k in 1..4 {
            let (x, y): (f64, f64) = (ra[k].parse().unwrap(), rb[k].parse().unwrap());
            assert!((x - y).abs() < 1e-9, "{ra:?} vs {rb:?}");
        }
    }
}

#[test]
fn eval_of_an_identity_case() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let reference = gen_reference(0).unwrap();
    write_reference(&reference, root.join(layout::REF_DIR)).unwrap();
    let case = gen_case(&reference, &WarpSpec::identity()).unwrap();
    write_case(&case, root.join("case_0")).unwrap();
    let manifest = Manifest {
        reference_seed: 0,
        spacing: 0.5,
        limits: WarpLimits::default(),
        cases: vec![ManifestCase { id: "case_0".into(), seed: 0, warp_seed: 0 }],
    };
    write_manifest(&manifest, &root).unwrap();
    let results = dir.path().join("results");
    fs::create_dir_all(results.join("case_0")).unwrap();
    DisplacementField::<f64>::zeros(reference.mesh.vertex_count())
        .write_csv(results.join("case_0").join("displacement.csv"))
        .unwrap();
    ok(&["eval", "--dataset", s(&root), "--results", s(&results)]);
    let rows = read_csv(&results.join("metrics_ref2tgt.csv"));
    assert_eq!(rows[0], ["case", "region", "tre", "hd", "assd", "dice"]);
    let case_rows: Vec<_> = rows[1..].iter().filter(|r| r[0] == "case_0").collect();
    assert_eq!(case_rows.len(), 11);
    for r in &case_rows {
        assert!(r[2].parse::<f64>().unwrap() < 1e-9, "{r:?}");
    }
    let all = case_rows.iter().find(|r| r[1] == "all").unwrap();
    assert!(all[5].parse::<f64>().unwrap() >= 0.99);
    // one case has no pairs
    assert_eq!(read_csv(&results.join("metrics_pairwise.csv")).len(), 1);
}

#[test]
fn single_fit_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let reference = shapes::icosphere::<f64>(3, 8.0);
    let mesh = dir.path().join("ref.obj");
    write_obj(&reference, &mesh).unwrap();
    let target = dir.path().join("target.obj");
    write_obj(&reference.translated(Vec3::new(2.0, -1.0, 0.5)), &target).unwrap();
    let cfg = write_config(dir.path(), r#"{"fit": {"max_iters": 40}}"#);
    let runs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("run{k}"))).collect();
    for r in &runs {
        ok(&["--config", s(&cfg), "fit", "--reference", s(&mesh), "--target", s(&target), "--out", s(r)]);
    }
    for f in ["displacement.csv", "fit_report.json", "predicted.obj"] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    let predicted: Mesh = read_obj(runs[0].join("predicted.obj")).unwrap();
    let shift = predicted.centroid().unwrap() - reference.centroid().unwrap();
    assert!((shift - Vec3::new(2.0, -1.0, 0.5)).norm() < 0.3, "{shift:?}");
}

#[test]
fn dataset_workflow_is_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["--seed", "3", "synth", "--cases", "3", "--out", s(&data)]);
    let again = dir.path().join("again");
    ok(&["--seed", "3", "--jobs", "2", "synth", "--cases", "3", "--out", s(&again)]);
    for f in ["manifest.json", "case_2/warp.json", "case_2/gt_mesh.obj", "case_1/mask.rawvol", "ref/planes.csv"] {
        assert_eq!(fs::read(data.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }

    let mesh = dir.path().join("extracted.obj");
    ok(&["extract", "--mask", s(&data.join("case_0/mask.rawvol")), "--smooth-iters", "2", "--out", s(&mesh)]);
    let m: Mesh = read_obj(&mesh).unwrap();
    assert!(m.vertex_count() > 1000);

    let cfg = write_config(dir.path(), r#"{"pairs": 4, "fit": {"max_iters": 3, "affine_iters": 5}}"#);
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    ok(&["--config", s(&cfg), "fit", "--dataset", s(&data), "--out", s(&r1)]);
    ok(&["--config", s(&cfg), "--jobs", "3", "fit", "--dataset", s(&data), "--out", s(&r2)]);
    for r in [&r1, &r2] {
        ok(&["--config", s(&cfg), "eval", "--dataset", s(&data), "--results", s(r)]);
    }
    for f in ["case_0/displacement.csv", "case_2/fit_report.json", "metrics_ref2tgt.csv", "metrics_pairwise.csv"] {
        assert_eq!(fs::read(r1.join(f)).unwrap(), fs::read(r2.join(f)).unwrap(), "{f}");
    }
    let pair_rows = read_csv(&r1.join("metrics_pairwise.csv"));
    assert_eq!(pair_rows.iter().filter(|r| r[1] == "all" && r[0].contains('>')).count(), 4);

    let ab = dir.path().join("ablate");
    ok(&["--config", s(&cfg), "ablate", "--dataset", s(&data), "--which", "no_disp,alpha0", "--out", s(&ab)]);
    let rows = read_csv(&ab.join("ablation.csv"));
    let names: Vec<_> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["baseline", "no_disp", "alpha0"]);
    // alpha0 does not touch the direct deformer
    assert_eq!(rows[1][1..], rows[3][1..]);
    assert_eq!(meshreg(&["ablate", "--dataset", s(&data), "--which", "bogus", "--out", s(&ab)]).status.code(), Some(1));
}
