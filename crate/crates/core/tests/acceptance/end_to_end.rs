use std::path::Path;
use std::process::Command;

use occgame::recog::{read_curve_csv, TABLE_FARS};
use serde_json::Value;

fn occgame(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_occgame")).args(args).output().expect("spawn occgame");
    assert!(
        out.status.success(),
        "occgame {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn row<'a>(report: &'a Value, condition: &str) -> &'a Value {
    report["rows"].as_array().unwrap().iter().find(|r| r["condition"] == condition).unwrap()
}

pub fn run() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();

    occgame(&["make-toy-faces", "--seed", "7", "--out-dir", &p("data")]);
    occgame(&["render-occlusions", "--seed", "2", "--faces", &p("data/faces"), "--out-dir", &p("occl")]);
    occgame(&["train", "--seed", "3", "--images", &p("data/faces"), "--steps", "60", "--out-dir", &p("train")]);
    occgame(&[
        "inpaint",
        "--checkpoint",
        &p("train/generator.bin"),
        "--images",
        &p("occl/occluded"),
        "--masks",
        &p("occl/masks"),
        "--out-dir",
        &p("inp"),
    ]);
    let conditions = [("clean", "data/faces"), ("occluded", "occl/occluded"), ("completed", "inp/completed")];
    let mut cond_args = Vec::new();
    for (name, images) in conditions {
        occgame(&["toy-embed", "--seed", "11", "--images", &p(images), "--out-dir", &p(&format!("emb_{name}"))]);
        cond_args.push("--embeddings".to_string());
        cond_args.push(format!("{name}={}", p(&format!("emb_{name}/embeddings.bin"))));
        cond_args.push("--flip".to_string());
        cond_args.push(format!("{name}={}", p(&format!("emb_{name}/embeddings_flip.bin"))));
    }
    let cond_args: Vec<&str> = cond_args.iter().map(String::as_str).collect();
    let ver_out = p("ver");
    let os_out = p("os");
    let ver_pairs = p("data/pairs.txt");
    let os_manifest = p("data/openset.txt");
    occgame(&[&["eval-verify", "--pairs", &ver_pairs, "--out-dir", &ver_out][..], &cond_args].concat());
    occgame(&[&["eval-openset", "--manifest", &os_manifest, "--out-dir", &os_out][..], &cond_args].concat());

    let ver = json(&dir.path().join("ver/verification.json"));
    let os = json(&dir.path().join("os/openset.json"));
    for (name, _) in conditions {
        let v = row(&ver, name);
        for key in ["one_minus_eer", "accuracy", "auc"] {
            assert!(v[key]["mean"].is_f64() && v[key]["std"].is_f64(), "{name}: verification {key}");
        }
        let o = row(&os, name);
        let fars: Vec<f64> = o["fars"].as_array().unwrap().iter().map(|f| f.as_f64().unwrap()).collect();
        assert_eq!(fars, TABLE_FARS);
        let curve = read_curve_csv(&dir.path().join(format!("os/curve_{name}.csv"))).unwrap();
        assert!(!curve.is_empty());
    }
    let svg = std::fs::read_to_string(dir.path().join("os/curves.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("</svg>"));

    print_indented(&std::fs::read_to_string(dir.path().join("ver/verification.txt")).unwrap());
    print_indented(&std::fs::read_to_string(dir.path().join("os/openset.txt")).unwrap());
    let rank1 = |name: &str| {
        let splits = row(&os, name)["per_split"].as_array().unwrap();
        splits.iter().map(|s| s[0].as_f64().unwrap()).sum::<f64>() / splits.len() as f64
    };
    let (clean, occluded) = (rank1("clean"), rank1("occluded"));
    assert!(occluded < clean, "occluded rank-1 {occluded} is not below clean {clean}");
}

fn print_indented(text: &str) {
    for line in text.lines() {
        println!("    {line}");
    }
}
