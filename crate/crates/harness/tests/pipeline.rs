use std::fs;
use std::path::Path;
use std::process::Command;

use vqadv::loss::srb_loss;
use vqadv::scorers::{ConvScorer, TvScorer};
use vqadv::{whitebox_attack, AnchorScore, Boundary, ScorerOracle, WhiteBoxConfig};
use vqadv_harness::manifest::ManifestEntry;
use vqadv_harness::synth::synth_video;
use vqadv_harness::{
    audit_outputs, gen_synthetic, run_experiment, sweep, AttackChoice, DatasetManifest, ExperimentConfig,
    GenConfig, HarnessError, MosFallback, ScorerChoice, SweepAxis,
};

fn small_gen(count: usize) -> GenConfig {
    GenConfig {
        count,
        frames: 2,
        height: 32,
        width: 32,
        ..GenConfig::default()
    }
}

fn config(manifest: &Path, out: &Path, attack: AttackChoice) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        manifest: manifest.to_path_buf(),
        output_dir: out.to_path_buf(),
        attack,
        ..ExperimentConfig::default()
    };
    cfg.blackbox.patch_h = 8;
    cfg.blackbox.patch_w = 8;
    cfg.whitebox.iterations = 5;
    cfg
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    gen_synthetic(&small_gen(6), &dir.path().join("data")).unwrap();
    let manifest = dir.path().join("data/manifest.json");
    for attack in [AttackChoice::Blackbox, AttackChoice::Whitebox, AttackChoice::PixelBaseline] {
        let a = config(&manifest, &dir.path().join("a"), attack);
        let b = ExperimentConfig {
            output_dir: dir.path().join("b"),
            workers: 3,
            ..a.clone()
        };
        run_experiment(&a).unwrap();
        run_experiment(&b).unwrap();
        let read = |d: &str, f: &str| fs::read(dir.path().join(d).join(f)).unwrap();
        assert_eq!(read("a", "report.json"), read("b", "report.json"), "{attack:?}");
        assert_eq!(read("a", "synth_003.rvid"), read("b", "synth_003.rvid"));
        assert_eq!(read("a", "synth_003.trace.csv"), read("b", "synth_003.trace.csv"));
    }
}

#[test]
fn outputs_and_trace_layout() {
    let dir = tempfile::tempdir().unwrap();
    gen_synthetic(&small_gen(4), &dir.path().join("data")).unwrap();
    let out = dir.path().join("out");
    let cfg = config(&dir.path().join("data/manifest.json"), &out, AttackChoice::Blackbox);
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.videos.len(), 4);
    assert!(report.failures.is_empty() && report.breaches.is_empty());
    for name in ["report.json", "report.txt", "synth_000.rvid", "synth_000.trace.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let csv = fs::read_to_string(out.join("synth_000.trace.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "round,query,op,accepted,loss,score,l2,linf,patches_this_query"
    );
    let json = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(json.contains("\"srcc_pre\"") && json.contains("\"queries_used\""));
    assert!(!json.contains("output_dir"));

    let wb = ExperimentConfig {
        output_dir: dir.path().join("wb"),
        attack: AttackChoice::Whitebox,
        ..cfg
    };
    run_experiment(&wb).unwrap();
    let csv = fs::read_to_string(dir.path().join("wb/synth_001.trace.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "round,iter,loss,score,l2,linf");
}

#[test]
fn unreadable_video_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = gen_synthetic(&small_gen(4), &dir.path().join("data")).unwrap();
    let broken = dir.path().join("data/broken.rvid");
    fs::write(&broken, b"not a video").unwrap();
    manifest.entries.push(ManifestEntry {
        id: "broken".into(),
        video_path: broken,
        mos: Some(0.5),
    });
    let path = dir.path().join("data/manifest.json");
    manifest.save(&path).unwrap();
    let report = run_experiment(&config(&path, &dir.path().join("out"), AttackChoice::Blackbox)).unwrap();
    assert_eq!(report.videos.len(), 4);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].id, "broken");
    assert_eq!(report.failures[0].stage, "load");
    assert!(fs::read_to_string(dir.path().join("out/report.txt")).unwrap().contains("failed broken"));
}

#[test]
fn unreachable_bridge_fails_every_video_without_panicking() {
    let dir = tempfile::tempdir().unwrap();
    gen_synthetic(&small_gen(3), &dir.path().join("data")).unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = ExperimentConfig {
        scorer: ScorerChoice::Bridge {
            address: format!("127.0.0.1:{port}"),
        },
        ..config(&dir.path().join("data/manifest.json"), &dir.path().join("out"), AttackChoice::Blackbox)
    };
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, HarnessError::Core(vqadv::Error::DegenerateBatch(_))), "{err}");
}

#[test]
fn missing_mos_needs_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = gen_synthetic(&small_gen(4), &dir.path().join("data")).unwrap();
    for e in &mut manifest.entries {
        e.mos = None;
    }
    let path = dir.path().join("data/manifest.json");
    manifest.save(&path).unwrap();
    let cfg = config(&path, &dir.path().join("out"), AttackChoice::Blackbox);
    assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 3);
    let cfg = ExperimentConfig {
        mos_fallback: MosFallback::CleanScore,
        ..cfg
    };
    let report = run_experiment(&cfg).unwrap();
    assert!((report.summary.srcc_pre.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn constant_scorer_reports_missing_correlations() {
    let dir = tempfile::tempdir().unwrap();
    gen_synthetic(&small_gen(4), &dir.path().join("data")).unwrap();
    let cfg = ExperimentConfig {
        scorer: ScorerChoice::Const { value: 0.4 },
        ..config(&dir.path().join("data/manifest.json"), &dir.path().join("out"), AttackChoice::Blackbox)
    };
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.summary.srcc_pre, None);
    assert_eq!(report.summary.srcc_post, None);
    assert!(report.videos.iter().all(|v| v.accepted_moves == 0));
    assert!(report.to_text().contains("n/a"));
}

#[test]
fn audit_flags_tampered_output() {
    let dir = tempfile::tempdir().unwrap();
    gen_synthetic(&small_gen(3), &dir.path().join("data")).unwrap();
    let manifest_path = dir.path().join("data/manifest.json");
    let out = dir.path().join("out");
    let cfg = config(&manifest_path, &out, AttackChoice::Blackbox);
    run_experiment(&cfg).unwrap();
    let manifest = DatasetManifest::load(&manifest_path).unwrap();
    let rows = audit_outputs(&manifest, &out, &cfg.audit_budget()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.within_budget));

    let victim = out.join("synth_001.rvid");
    let adv = vqadv::io::read_rvid(&victim).unwrap();
    let data: Vec<f32> = adv.data().iter().map(|v| (v + 0.1).min(1.0)).collect();
    let tampered = vqadv::VideoTensor::new(adv.frames(), adv.height(), adv.width(), data).unwrap();
    vqadv::io::write_rvid(&tampered, &victim).unwrap();
    let rows = audit_outputs(&manifest, &out, &cfg.audit_budget()).unwrap();
    let bad: Vec<&str> = rows.iter().filter(|r| !r.within_budget).map(|r| r.id.as_str()).collect();
    assert_eq!(bad, ["synth_001"]);
}

#[test]
fn ratio_sweep_writes_one_run_per_value() {
    let dir = tempfile::tempdir().unwrap();
    gen_synthetic(&GenConfig { frames: 4, ..small_gen(4) }, &dir.path().join("data")).unwrap();
    let out = dir.path().join("sweep");
    let cfg = config(&dir.path().join("data/manifest.json"), &out, AttackChoice::Blackbox);
    let values: Vec<String> = ["0.25", "1.0"].iter().map(|s| s.to_string()).collect();
    let rows = sweep(&cfg, SweepAxis::Ratio, &values).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(out.join("ratio=0.25/report.json").is_file());
    assert!(out.join("sweep.txt").is_file());
    let q: Vec<u64> = rows
        .iter()
        .map(|r| r.report.videos.iter().map(|v| v.record.queries_used).sum())
        .collect();
    assert!(q[0] < q[1]);
    assert!(sweep(&cfg, SweepAxis::Ratio, &[]).is_err());
}

#[test]
fn clean_video_has_the_highest_tv_mos() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GenConfig {
        scorer: ScorerChoice::Tv,
        ..small_gen(8)
    };
    let manifest = gen_synthetic(&cfg, dir.path()).unwrap();
    let mos: Vec<f64> = manifest.entries.iter().map(|e| e.mos.unwrap()).collect();
    let mut tv = TvScorer::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        let v = vqadv::io::read_rvid(&dir.path().join(&e.video_path)).unwrap();
        assert_eq!(tv.score(&v).unwrap(), mos[i]);
    }
    assert!(mos[1..].iter().all(|&m| m < mos[0]), "{mos:?}");
}

#[test]
fn whitebox_shrinks_loss_on_a_clean_64px_video() {
    let cfg = GenConfig {
        frames: 8,
        height: 64,
        width: 64,
        ..GenConfig::default()
    };
    let video = synth_video(&cfg, 0).unwrap();
    let mut scorer = ConvScorer::new(0);
    let anchor = AnchorScore::unscaled(Boundary::Zero);
    let initial = srb_loss(scorer.score(&video).unwrap(), &anchor);
    let out = whitebox_attack(&video, &mut scorer, &anchor, &WhiteBoxConfig::default()).unwrap();
    let last = out.trace.final_loss().unwrap();
    assert!(last < 0.3 * initial, "{last} vs {initial}");
}

#[test]
fn whitebox_batch_mean_loss_drops() {
    let dir = tempfile::tempdir().unwrap();
    gen_synthetic(&small_gen(20), &dir.path().join("data")).unwrap();
    let cfg = config(&dir.path().join("data/manifest.json"), &dir.path().join("out"), AttackChoice::Whitebox);
    let report = run_experiment(&cfg).unwrap();
    let initial: f64 = report
        .videos
        .iter()
        .map(|v| (v.record.clean_score - v.record.anchor).abs())
        .sum::<f64>()
        / report.videos.len() as f64;
    assert!(report.summary.mean_final_loss < initial);
}

fn vqadv_cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_vqadv")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_string_lossy().into_owned();
    let (code, _) = vqadv_cli(&["gen", "--out", &d("data"), "--count", "3", "--frames", "2", "--height", "24", "--width", "24"]);
    assert_eq!(code, 0);

    let base = ["--manifest", &d("data/manifest.json"), "--patch-h", "8", "--patch-w", "8"];
    let out = d("out");
    let mut args = vec!["attack", "--output-dir", &out];
    args.extend(base);
    let (code, text) = vqadv_cli(&args);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("SRCC"));

    let mut args = vec!["audit", "--output-dir", &out];
    args.extend(base);
    assert_eq!(vqadv_cli(&args).0, 0);
    args.extend(["--gamma", "0.001"]);
    assert_eq!(vqadv_cli(&args).0, 2);

    let (code, text) = vqadv_cli(&["report", &d("out")]);
    assert_eq!(code, 0);
    assert!(text.contains("SRCC"));

    assert_eq!(vqadv_cli(&["attack", "--no-such-flag"]).0, 3);
    let mut args = vec!["attack", "--perturb-ratio", "0"];
    args.extend(base);
    assert_eq!(vqadv_cli(&args).0, 3);
    fs::write(dir.path().join("bad.json"), r#"{"attack": "whitebox", "typo": 1}"#).unwrap();
    assert_eq!(vqadv_cli(&["attack", "--config", &d("bad.json")]).0, 3);

    fs::write(
        dir.path().join("cfg.json"),
        format!(r#"{{"attack": "pixel_baseline", "manifest": {:?}, "blackbox": {{"queries_per_round": 5}}}}"#, d("data/manifest.json")),
    )
    .unwrap();
    let (code, text) = vqadv_cli(&["attack", "--config", &d("cfg.json"), "--output-dir", &d("px"), "--queries-per-round", "7"]);
    assert_eq!(code, 0, "{text}");
    let report = fs::read_to_string(dir.path().join("px/report.json")).unwrap();
    assert!(report.contains("\"queries_per_round\": 7") && report.contains("pixel_baseline"));
}
