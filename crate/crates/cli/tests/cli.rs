use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ovtas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ovtas"))
        .args(args)
        .env("OVTAS_LOG", "error")
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path) -> PathBuf {
    let out = ovtas(&["synth", "--out-dir", dir.to_str().unwrap(), "--videos", "6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("manifest.json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn repeated_runs_are_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("toy"));
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (out, jobs) in [(&a, "1"), (&b, "4")] {
        let res = ovtas(&[
            "eval",
            "--manifest",
            s(&manifest),
            "--bins",
            "duration",
            "--bin-edges",
            "0,5,7",
            "--jobs",
            jobs,
            "--out",
            s(out),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());

    let c = dir.path().join("c.json");
    let res = ovtas(&["eval", "--config", s(&a), "--jobs", "2", "--out", s(&c)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(first, std::fs::read(&c).unwrap());
}

#[test]
fn every_method_and_ablation_flag_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let runs: &[&[&str]] = &[
        &["--method", "random_uniform"],
        &["--method", "es_mean", "--k-bins", "3"],
        &["--method", "es_vote"],
        &["--method", "es_nrp", "--lambda", "0.2"],
        &["--ablate-stage2"],
        &["--ablate-prior", "--ablate-l2"],
        &["--ablate-stage1", "--stage1-mode", "features", "--seed", "9"],
        &[
            "--ignore-background",
            "action_0",
            "--f1-matching",
            "greedy",
            "--split",
            "split1",
        ],
    ];
    for extra in runs {
        let mut args = vec!["eval", "--manifest", s(&manifest)];
        args.extend_from_slice(extra);
        let out = ovtas(&args);
        assert!(
            out.status.success(),
            "{extra:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("\"aggregate\""), "{extra:?}");
    }
}

#[test]
fn incompatible_flags_fail() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    for extra in [
        &["--method", "es_mean", "--ablate-prior"][..],
        &["--method", "es_vote", "--ablate-stage2"][..],
        &["--k-bins", "3"][..],
        &["--epsilon", "0"][..],
    ] {
        let mut args = vec!["eval", "--manifest", s(&manifest)];
        args.extend_from_slice(extra);
        assert!(!ovtas(&args).status.success(), "{extra:?}");
    }
    assert!(!ovtas(&["eval"]).status.success());
}

#[test]
fn exit_status_tracks_report_completeness() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    std::fs::write(dir.path().join("gt/video_2.txt"), "bogus\n").unwrap();

    let aborted = ovtas(&["eval", "--manifest", s(&manifest)]);
    assert!(!aborted.status.success());
    assert!(String::from_utf8_lossy(&aborted.stderr).contains("video_2"));

    let out = dir.path().join("partial.json");
    let skipped = ovtas(&["eval", "--manifest", s(&manifest), "--skip-failures", "--out", s(&out)]);
    assert!(!skipped.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"complete\": false"));
    assert!(text.contains("\"video_2\""));
}

#[test]
fn stats_subcommand_reports_tables() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let out = ovtas(&["stats", "--manifest", s(&manifest)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in [
        "video_duration_seconds",
        "segments_per_video",
        "segment_duration_seconds",
        "split2",
    ] {
        assert!(text.contains(key), "{key}");
    }
    assert!(!ovtas(&["stats", "--manifest", s(&manifest), "--split", "nope"])
        .status
        .success());
}

#[test]
fn labels_are_written_per_video() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let labels = dir.path().join("pred");
    let out = ovtas(&["eval", "--manifest", s(&manifest), "--labels-out", s(&labels)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(labels.join("video_0.txt")).unwrap();
    assert!(text.lines().all(|l| l.starts_with("action_")));
}
