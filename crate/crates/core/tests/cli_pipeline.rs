use std::path::{Path, PathBuf};

use fcmir::cli::{main_with_args, PipelineManifest, Stage, EXIT_CONFIG, EXIT_ENDPOINT, EXIT_OK, EXIT_STAGE};
use fcmir::llm::mock::{MockFixture, MockReply, MockRoute, MockServer, DOUBAO_INTENT};
use fcmir::synth::{trajectory, write_corpus_entry, TrajectorySpec};

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["fcmir"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn corpus(root: &Path, n: usize, spec: &TrajectorySpec) -> Vec<PathBuf> {
    (0..n)
        .map(|i| {
            let dir = root.join(format!("traj_{i:02}"));
            let (frames, truth) = trajectory(spec, 40 + i as u64).unwrap();
            write_corpus_entry(&dir, &frames, &truth).unwrap();
            dir
        })
        .collect()
}

fn config(root: &Path, base_url: Option<&str>) -> PathBuf {
    let mut text = String::from("[sampling]\nfps = 1.0\ninterval_s = 1.0\n\n[pipeline]\nsuggest_count = 2\n");
    if let Some(url) = base_url {
        text.push_str(&format!("\n[endpoint]\nbase_url = \"{url}\"\nmodel = \"mock\"\nretry_base_ms = 1\n"));
    }
    let path = root.join("fcmir.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_against_the_mock() {
    let tmp = tempfile::tempdir().unwrap();
    let server = MockServer::start(MockFixture::standard()).unwrap();
    let srcs = corpus(tmp.path(), 2, &TrajectorySpec::default());
    let cfg = config(tmp.path(), Some(server.base_url()));
    let out = tmp.path().join("runs");
    let code = run(&[
        "--config", s(&cfg), "--jobs", "2", "pipeline", s(&srcs[0]), s(&srcs[1]), "--out", s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    for src in &srcs {
        let dir = out.join(src.file_name().unwrap());
        let m = PipelineManifest::load(&dir.join("manifest.json")).unwrap();
        assert!(m.complete);
        assert_eq!(m.stages, Stage::ALL.to_vec());
        let sample = m.sample.as_ref().unwrap();
        for r in &sample.retained {
            assert!(dir.join(r.path.as_ref().unwrap()).is_file());
        }
        let stitch = m.stitch.as_ref().unwrap();
        assert!(stitch.images.iter().all(|i| dir.join(&i.path).is_file()));
        let summary = m.summary.as_ref().unwrap();
        assert_eq!(summary.summary.intent, DOUBAO_INTENT);
        assert!(dir.join(summary.response.as_ref().unwrap()).is_file());
        let sets = m.suggestions.as_ref().unwrap();
        assert_eq!(sets.len(), 2);
        assert!(sets.iter().all(|s| !s.set.suggestions.is_empty()));
        assert!(!out.join(format!("{}.partial", src.file_name().unwrap().to_str().unwrap())).exists());
    }
    // 3 calls per source.
    assert_eq!(server.requests().len(), 6);
}

#[test]
fn sample_only_records_compression() {
    let tmp = tempfile::tempdir().unwrap();
    let srcs = corpus(tmp.path(), 1, &TrajectorySpec::default());
    let cfg = config(tmp.path(), None);
    let out = tmp.path().join("runs");
    assert_eq!(run(&["--config", s(&cfg), "sample", s(&srcs[0]), "--out", s(&out)]), EXIT_OK);
    let m = PipelineManifest::load(&out.join("traj_00/manifest.json")).unwrap();
    let sample = m.sample.unwrap();
    assert!(sample.frame_compression_pct > 0.0);
    assert!(m.stitch.is_none() && m.summary.is_none() && m.suggestions.is_none());
    assert!(!out.join("traj_00/stitched").exists());
}

#[test]
fn flags_override_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let srcs = corpus(tmp.path(), 1, &TrajectorySpec::default());
    let cfg = config(tmp.path(), None);
    let out = tmp.path().join("runs");
    let code = run(&[
        "--config", s(&cfg), "sample", s(&srcs[0]), "--out", s(&out), "--comparator", "l1", "--l1-threshold", "3.5",
    ]);
    assert_eq!(code, EXIT_OK);
    let m = PipelineManifest::load(&out.join("traj_00/manifest.json")).unwrap();
    assert_eq!(m.config.sampling.comparator, fcmir::ingest::Comparator::L1);
    assert_eq!(m.config.sampling.l1_threshold, 3.5);
}

#[test]
fn model_stage_without_endpoint_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let srcs = corpus(tmp.path(), 1, &TrajectorySpec::default());
    let cfg = config(tmp.path(), None);
    let out = tmp.path().join("runs");
    let code = run(&[
        "--config", s(&cfg), "pipeline", s(&srcs[0]), "--out", s(&out), "--stages", "sample,summarize",
    ]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(!out.exists());
}

#[test]
fn broken_stage_chain_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let srcs = corpus(tmp.path(), 1, &TrajectorySpec::default());
    let out = tmp.path().join("runs");
    assert_eq!(run(&["pipeline", s(&srcs[0]), "--out", s(&out), "--stages", "stitch"]), EXIT_CONFIG);
    assert_eq!(run(&["pipeline", s(&srcs[0]), "--out", s(&out), "--stages", "bogus"]), EXIT_CONFIG);
    let bad_cfg = tmp.path().join("bad.toml");
    std::fs::write(&bad_cfg, "[sampling]\nintervall_s = 1\n").unwrap();
    assert_eq!(run(&["--config", s(&bad_cfg), "sample", s(&srcs[0]), "--out", s(&out)]), EXIT_CONFIG);
}

#[test]
fn manifests_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let server = MockServer::start(MockFixture::standard()).unwrap();
    let srcs = corpus(tmp.path(), 1, &TrajectorySpec::default());
    let cfg = config(tmp.path(), Some(server.base_url()));
    let mut texts = Vec::new();
    for run_name in ["a", "b"] {
        let out = tmp.path().join(run_name);
        assert_eq!(run(&["--config", s(&cfg), "suggest", s(&srcs[0]), "--out", s(&out)]), EXIT_OK);
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("traj_00/manifest.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timing_ms");
        texts.push(serde_json::to_string_pretty(&v).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn parse_failure_leaves_an_incomplete_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = MockFixture::default().route(MockRoute::new(
        Some("chat/completions"),
        None,
        vec![MockReply::content("I think the user wanted concert tickets.")],
    ));
    let server = MockServer::start(fixture).unwrap();
    let srcs = corpus(tmp.path(), 1, &TrajectorySpec::default());
    let cfg = config(tmp.path(), Some(server.base_url()));
    let out = tmp.path().join("runs");
    assert_eq!(run(&["--config", s(&cfg), "summarize", s(&srcs[0]), "--out", s(&out)]), EXIT_STAGE);
    let partial = out.join("traj_00.partial");
    let m = PipelineManifest::load(&partial.join("manifest.json")).unwrap();
    assert!(!m.complete);
    assert!(m.sample.is_some() && m.stitch.is_some() && m.summary.is_none());
    assert!(m.error.unwrap().starts_with("summarize"));
    let raw = std::fs::read_to_string(partial.join("responses/summarize.json")).unwrap();
    assert!(raw.contains("concert tickets"));
    assert!(!out.join("traj_00").exists());
}

#[test]
fn endpoint_outage_exits_with_endpoint_code() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = MockFixture::default().route(MockRoute::new(None, None, vec![MockReply::status(503)]));
    let server = MockServer::start(fixture).unwrap();
    let srcs = corpus(tmp.path(), 1, &TrajectorySpec::default());
    let cfg = config(tmp.path(), Some(server.base_url()));
    let out = tmp.path().join("runs");
    assert_eq!(run(&["--config", s(&cfg), "summarize", s(&srcs[0]), "--out", s(&out)]), EXIT_ENDPOINT);
    assert_eq!(server.requests().len(), 4);
}

#[test]
fn eval_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let pairs = tmp.path().join("pairs.csv");
    std::fs::write(
        &pairs,
        "id,prediction,reference\n\
         1,打开音乐App购买杭州演唱会门票,打开音乐App购买杭州站演唱会门票\n\
         2,\"Searched tea, ordered 2 cups\",\"Searched milk tea, ordered two cups\"\n",
    )
    .unwrap();
    let out = tmp.path().join("reports");
    assert_eq!(run(&["eval", "rouge", "--input", s(&pairs), "--out", s(&out)]), EXIT_OK);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("rouge.json")).unwrap()).unwrap();
    assert_eq!(rep["n"], 2);
    assert!(rep["mean"]["rouge1"].as_f64().unwrap() > 0.5);
    assert!(out.join("rouge.csv").is_file());

    assert_eq!(run(&["eval", "reward", "--input", s(&pairs), "--out", s(&out)]), EXIT_OK);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("reward.json")).unwrap()).unwrap();
    let t = rep["mean_total"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&t));

    let ratings = tmp.path().join("ratings.csv");
    std::fs::write(&ratings, "metric,a,b\nRelevance,2,2\nRelevance,1,1\nRelevance,2,1\nClarity,2,2\nClarity,2,2\n").unwrap();
    assert_eq!(run(&["eval", "agreement", "--input", s(&ratings), "--out", s(&out)]), EXIT_OK);
    let csv = std::fs::read_to_string(out.join("agreement.csv")).unwrap();
    assert!(csv.starts_with("metric,n,accuracy,kappa"));
    // Clarity has a single category on both sides, so kappa is undefined.
    assert!(csv.lines().any(|l| l == "Clarity,2,1.0,"), "{csv}");

    let xy = tmp.path().join("xy.csv");
    let rows: String = (1..=10).map(|x| format!("{x},{}\n", 0.4668 * x as f64 + 3.4225)).collect();
    std::fs::write(&xy, format!("quality,utility\n{rows}")).unwrap();
    let code = run(&["eval", "regress", "--input", s(&xy), "--out", s(&out), "--x", "quality", "--y", "utility"]);
    assert_eq!(code, EXIT_OK);
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("regress.json")).unwrap()).unwrap();
    assert!((fit["slope"].as_f64().unwrap() - 0.4668).abs() < 1e-9);

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "metric,a,b\nX,1,2\nX,one,2\n").unwrap();
    assert_eq!(run(&["eval", "agreement", "--input", s(&bad), "--out", s(&out)]), EXIT_STAGE);
}

#[test]
fn eval_judge_with_the_mock() {
    let tmp = tempfile::tempdir().unwrap();
    let server = MockServer::start(MockFixture::standard()).unwrap();
    let cfg = config(tmp.path(), Some(server.base_url()));
    let pairs = tmp.path().join("pairs.csv");
    std::fs::write(&pairs, "id,prediction,reference\na,x,y\nb,z,w\nc,u,v\n").unwrap();
    let out = tmp.path().join("judge");
    let code = run(&[
        "--config", s(&cfg), "--jobs", "3", "eval", "judge", "--input", s(&pairs), "--out", s(&out), "--rubric", "summary",
    ]);
    assert_eq!(code, EXIT_OK);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("judge.json")).unwrap()).unwrap();
    assert_eq!(rep["aggregate"]["n"], 3);
    assert!(rep["aggregate"]["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .all(|m| m["sum"] == 6 && m["normalized"] == 1.0));
    assert!(out.join("responses/judge-a.json").is_file());
}

#[test]
fn synth_writes_a_loadable_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    assert_eq!(run(&["synth", "--out", s(&corpus), "--count", "2", "--seed", "3"]), EXIT_OK);
    let cfg = corpus.join("fcmir.toml");
    let out = tmp.path().join("abl");
    let code = run(&["--config", s(&cfg), "eval", "ablation", "--corpus", s(&corpus), "--out", s(&out)]);
    assert_eq!(code, EXIT_OK);
    let table = std::fs::read_to_string(out.join("ablation.txt")).unwrap();
    assert_eq!(table.lines().count(), 4);
}
