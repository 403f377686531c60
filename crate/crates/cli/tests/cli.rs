use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn veilkit() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_veilkit"));
    cmd.env_remove("VEILKIT_THREADS");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn veilkit")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

const SPEC: &str = r#"{
  "frames": 5, "height": 40, "width": 48, "dim": 6, "patch": 8, "stride": 8,
  "flow": {"kind": "shear", "k": 0.25},
  "saliency": {"kind": "blob", "center": [20.0, 22.0], "radius": 12.0},
  "seed": 8, "templates": ["fixture", "decoy"]
}"#;

fn synth(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.json");
    fs::write(&spec, SPEC).unwrap();
    let clip = dir.join("clip");
    let out = run(veilkit()
        .arg("synth")
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(&clip));
    assert!(out.status.success(), "{}", text(&out.stderr));
    clip
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn run_json(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("run.json")).unwrap()).unwrap()
}

#[test]
fn eval_ranks_each_dataset() {
    let out = run(veilkit()
        .args(["eval", "--lambda", "0.5", "--results"])
        .arg(fixture("table2.csv")));
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let first_row = |dataset: &str| {
        let block = stdout
            .split(&format!("dataset {dataset}, lambda 0.5\n"))
            .nth(1)
            .unwrap();
        block
            .lines()
            .nth(1)
            .unwrap()
            .split_whitespace()
            .collect::<Vec<_>>()
    };
    assert_eq!(first_row("IPN"), ["1", "Ours", "87.11", "51.93", "0.68"]);
    assert_eq!(first_row("KTH"), ["1", "Ours†", "89.44", "4.31", "0.93"]);
    assert_eq!(first_row("SBU"), ["1", "Ours", "86.74", "13.19", "0.87"]);
    assert!(stdout.contains("ALF"));
}

#[test]
fn eval_sweep_and_selection() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(veilkit()
        .args([
            "eval",
            "--dataset",
            "KTH",
            "--sweep",
            "0:1:0.05",
            "--results",
        ])
        .arg(fixture("table2.csv"))
        .arg("--out")
        .arg(dir.path()));
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 13 * 21);
    assert!(csv.contains("Ours,KTH,0,0.886700"));
    assert!(csv.contains("Ours,KTH,1,0.945400"));
    assert_eq!(run_json(dir.path())["command"], "eval");

    let out = run(veilkit()
        .args([
            "eval",
            "--select-k",
            "4",
            "--dataset",
            "IPN",
            "--expect",
            "cheek,eyes,forehead,hair",
            "--templates",
        ])
        .arg(fixture("single_template.csv")));
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("selected templates (k = 4): cheek, hair, forehead, lips"));
    assert!(text(&out.stderr).contains("warning: reference selection is not purely privacy-sorted"));

    let out = run(veilkit()
        .args(["eval", "--select-k", "4", "--templates"])
        .arg(fixture("single_template.csv")));
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("--dataset"));
}

#[test]
fn obfuscate_without_library_is_a_usage_error() {
    let out = run(veilkit().args(["obfuscate", "m.json", "--select", "hair", "--out", "o"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("--library"));
}

#[test]
fn unknown_flags_and_missing_files_have_distinct_codes() {
    let out = run(veilkit().args(["noise", "m.json", "--out", "o", "--frobnicate"]));
    assert_eq!(out.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = run(veilkit()
        .arg("noise")
        .arg(dir.path().join("absent.json"))
        .arg("--out")
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
}

#[test]
fn synth_then_obfuscate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let clip = synth(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(veilkit()
        .arg("-v")
        .arg("obfuscate")
        .arg(clip.join("manifest.json"))
        .arg("--library")
        .arg(clip.join("library"))
        .args([
            "--select",
            "fixture",
            "--seed",
            "3",
            "--emit-saliency",
            "--emit-noise",
            "--out",
        ])
        .arg(&out_dir));
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("frames/s"));
    for sub in ["frames", "saliency", "noise"] {
        assert_eq!(
            fs::read_dir(out_dir.join(sub)).unwrap().count(),
            if sub == "saliency" { 10 } else { 5 }
        );
    }
    let record = run_json(&out_dir);
    assert_eq!(record["seed"], 3);
    assert_eq!(record["config"]["mode"], "warp");
    assert!(record["inputs"]
        .as_object()
        .unwrap()
        .keys()
        .any(|k| k.ends_with("library.json")));
    assert_eq!(record["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let clip = synth(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let out = run(veilkit()
            .env("VEILKIT_THREADS", threads)
            .arg("obfuscate")
            .arg(clip.join("manifest.json"))
            .arg("--library")
            .arg(clip.join("library"))
            .args([
                "--select",
                "fixture,decoy",
                "--mode",
                "composed",
                "--seed",
                "11",
                "--emit-saliency",
                "--emit-noise",
                "--out",
            ])
            .arg(&out_dir));
        assert!(out.status.success(), "{}", text(&out.stderr));
        outputs.push(files(&out_dir));
    }
    assert!(outputs[0].len() > 10);
    assert_eq!(outputs[0], outputs[1]);

    let out = run(veilkit()
        .env("VEILKIT_THREADS", "0")
        .args(["stats", "m.json"]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_fills_in_flags() {
    let dir = tempfile::tempdir().unwrap();
    let clip = synth(dir.path());
    let cfg = dir.path().join("veilkit.conf");
    fs::write(
        &cfg,
        format!(
            "library = {}\nselect = fixture\nseed = 9\nmode = iid\nblock = 4\n",
            clip.join("library").display()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(veilkit()
        .arg("noise")
        .arg(clip.join("manifest.json"))
        .args(["--seed", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert!(out.status.success(), "{}", text(&out.stderr));
    let record = run_json(&out_dir);
    assert_eq!(record["seed"], 2);
    assert_eq!(record["config"]["mode"], "iid");

    let out = run(veilkit()
        .arg("obfuscate")
        .arg(clip.join("manifest.json"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(run_json(&out_dir)["seed"], 9);
}

#[test]
fn template_build_list_and_use() {
    let dir = tempfile::tempdir().unwrap();
    let clip = synth(dir.path());
    let lib = dir.path().join("lib");
    let build = |name: &str, patches: &str| {
        run(veilkit()
            .args([
                "template",
                "build",
                "--name",
                name,
                "--frame",
                "1",
                "--patches",
                patches,
                "--library",
            ])
            .arg(&lib)
            .arg("--manifest")
            .arg(clip.join("manifest.json")))
    };
    let out = build("center", "2,2;2,3");
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(build("center", "1,1").status.code(), Some(1));
    assert_eq!(build("corner", "9,9").status.code(), Some(1));
    assert!(build("corner", "0,0").status.success());

    let out = run(veilkit().args(["template", "list", "--library"]).arg(&lib));
    let listing = text(&out.stdout);
    assert!(listing.contains("center") && listing.contains("corner"));
    assert!(listing.contains("frames/0001.png"));

    let out_dir = dir.path().join("sal");
    let out = run(veilkit()
        .arg("saliency")
        .arg(clip.join("manifest.json"))
        .arg("--library")
        .arg(&lib)
        .args(["--select", "center,corner", "--similarity", "--out"])
        .arg(&out_dir));
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("similarity.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "template,center,corner");
    assert!(out_dir.join("templates/center.tnsr").is_file());
}

#[test]
fn baselines_write_frames() {
    let dir = tempfile::tempdir().unwrap();
    let clip = synth(dir.path());
    let manifest = clip.join("manifest.json");
    for args in [
        vec!["pixelate", "--block", "4"],
        vec!["blur", "--kappa", "5", "--sigma", "2", "--resize", "32"],
        vec!["mask"],
    ] {
        let out_dir = dir.path().join(args[0]);
        let out = run(veilkit()
            .arg("baseline")
            .args(&args)
            .arg(&manifest)
            .arg("--out")
            .arg(&out_dir));
        assert!(out.status.success(), "{args:?}: {}", text(&out.stderr));
        assert_eq!(fs::read_dir(out_dir.join("frames")).unwrap().count(), 5);
        assert_eq!(run_json(&out_dir)["command"], "baseline");
    }
}

#[test]
fn stats_updates_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let clip = synth(dir.path());
    let manifest = clip.join("manifest.json");
    let before = fs::read_to_string(&manifest).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&before).unwrap();
    m["dataset_mean"] = serde_json::json!([0.0, 0.0, 0.0]);
    fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    let out = run(veilkit().arg("stats").arg(&manifest).arg("--update"));
    assert!(out.status.success(), "{}", text(&out.stderr));
    let after: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    let original: serde_json::Value = serde_json::from_str(&before).unwrap();
    assert_eq!(after["dataset_mean"], original["dataset_mean"]);
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["std"], original["dataset_std"]);
}
