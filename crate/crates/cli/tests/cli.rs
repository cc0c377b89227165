use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tvl_harness::{read_jsonl, StubMode, StubServer};

fn tvl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvl")).args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Areas and a small synthetic store in a temp dir.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Workspace {
        let ws = Workspace { dir: tempfile::tempdir().unwrap() };
        let areas = tvl(&["areas"]);
        assert!(areas.status.success());
        std::fs::write(ws.path("areas.geojson"), &areas.stdout).unwrap();
        let o = tvl(&["synth", "--seed", "4", "--points", "3000", "--users", "5", "--out", &ws.s("data.csv")]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

#[test]
fn parse_prints_canonical_text() {
    let o = tvl(&["parse", &fixture("miyun.tvl")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim_end(), std::fs::read_to_string(fixture("miyun.tvl")).unwrap().trim_end());

    let o = tvl(&["parse", &fixture("haidian_bar.tvl")]);
    assert_eq!(
        stdout(&o).trim_end(),
        "VISUALIZE bar AREA \"haidian district, Beijing\" SQL SELECT travel_mode, COUNT(*) FROM traj_data GROUP BY travel_mode"
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tvl");
    std::fs::write(&bad, "VISUALIZE map SQL SELECT FROM traj_data").unwrap();
    let o = tvl(&["parse", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 1, column"), "{err}");

    assert_eq!(tvl(&["parse"]).status.code(), Some(2));
    assert_eq!(tvl(&["frobnicate"]).status.code(), Some(2));
    let o = tvl(&["split", "--in", "x.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--train-n"));

    let o = tvl(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), format!("tvl {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn compile_exec_and_render() {
    let ws = Workspace::new();
    let areas = ws.s("areas.geojson");
    let data = ws.s("data.csv");
    let o = tvl(&["compile", &fixture("miyun.tvl"), "--areas", &areas]);
    assert!(o.status.success());
    let sql = stdout(&o);
    assert!(sql.contains("ST_Within(ST_Point(longitude, latitude), ST_GeomFromText('POLYGON(("));
    assert!(sql.trim_end().ends_with("ORDER BY user_id, traj_id, datetime"));

    let bar = fixture("haidian_bar.tvl");
    let o = tvl(&["exec", &bar, "--areas", &areas, "--data", &data]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("travel_mode,COUNT(*)"));
    assert!(lines.count() > 0);

    let o = tvl(&["render-spec", &bar, "--areas", &areas, "--data", &data, "--out", &ws.s("bar.json")]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ws.path("bar.json")).unwrap()).unwrap();
    assert_eq!(doc["mark"]["type"], "bar");

    for (file, png) in [(bar.as_str(), "bar.png"), (&fixture("miyun.tvl"), "map.png")] {
        let o = tvl(&["render-png", file, "--areas", &areas, "--data", &data, "--out", &ws.s(png)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let bytes = std::fs::read(ws.path(png)).unwrap();
        assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    }

    let o = tvl(&["compile", &fixture("miyun.tvl"), "--areas", &fixture("missing.geojson")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generate_split_score_evaluate() {
    let ws = Workspace::new();
    let (areas, data) = (ws.s("areas.geojson"), ws.s("data.csv"));
    let cfg = ws.path("gen.toml");
    std::fs::write(&cfg, "max_tvls = 120\n").unwrap();
    let gen = |out: &str| {
        tvl(&[
            "generate", "--data", &data, "--areas", &areas, "--config", cfg.to_str().unwrap(), "--seed", "7", "--out",
            &ws.s(out), "--questions",
        ])
    };
    assert!(gen("q1.jsonl").status.success());
    assert!(gen("q2.jsonl").status.success());
    let q1 = std::fs::read(ws.path("q1.jsonl")).unwrap();
    assert_eq!(q1, std::fs::read(ws.path("q2.jsonl")).unwrap());
    // --seed is required.
    assert_eq!(tvl(&["generate", "--data", &data, "--areas", &areas, "--out", &ws.s("x")]).status.code(), Some(2));

    let o = tvl(&[
        "split", "--in", &ws.s("q1.jsonl"), "--train-n", "200", "--test-n", "60", "--seed", "1", "--train-out",
        &ws.s("train.jsonl"), "--test-out", &ws.s("test.jsonl"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let test = read_jsonl(std::fs::read(ws.path("test.jsonl")).unwrap().as_slice()).unwrap();
    assert_eq!(test.len(), 60);

    let o = tvl(&["score", "--gold", &ws.s("test.jsonl"), "--pred", &ws.s("test.jsonl"), "--out", &ws.s("score.json")]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ws.path("score.json")).unwrap()).unwrap();
    for k in ["vis_acc", "axis_acc", "area_acc", "time_acc", "sql_acc", "tvl_acc"] {
        assert_eq!(report["all"][k], 1.0, "{k}");
    }

    // Questions can repeat across records; keep the first of each for the
    // stub, which answers by question text.
    let mut seen = std::collections::HashSet::new();
    let unique: Vec<_> = test.into_iter().filter(|r| seen.insert(r.question.clone())).collect();
    let mut f = std::fs::File::create(ws.path("unique.jsonl")).unwrap();
    tvl_harness::write_jsonl(&mut f, &unique).unwrap();

    let stub = StubServer::start(StubMode::Echo, &unique).unwrap();
    let model = ws.path("model.toml");
    std::fs::write(&model, format!("endpoint = \"{}\"\nmodel = \"echo\"\nbackoff_ms = 1\n", stub.url())).unwrap();
    let (test_path, report_path, train_path) = (ws.s("unique.jsonl"), ws.s("report.json"), ws.s("train.jsonl"));
    for extra in [&["--shots", "2"][..], &["--rag", "--k", "2", "--train", &train_path][..]] {
        let mut args = vec![
            "evaluate", "--test", &test_path, "--model", model.to_str().unwrap(), "--jobs", "4", "--out", &report_path,
        ];
        args.extend_from_slice(extra);
        let o = tvl(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("Vis.Acc"));
        let res: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ws.path("report.json")).unwrap()).unwrap();
        assert_eq!(res["overall"]["tvl_acc"], 1.0);
        assert_eq!(res["overall"]["n"], unique.len());
    }
    let o = tvl(&["evaluate", "--test", &ws.s("unique.jsonl"), "--model", model.to_str().unwrap(), "--rag", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn prompt_subcommands() {
    let o = tvl(&["prompts", "gen", &fixture("miyun.tvl")]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.matches("### gen_").count(), 3);
    assert!(text.contains("Miyun District, Beijing"));

    let o = tvl(&["prompts", "correct", &fixture("miyun.tvl"), "--question", "Show Miyun.", "--issue", "missing"]);
    assert!(stdout(&o).contains("cover all the necessary fields in the TVL"));
    assert_eq!(tvl(&["prompts", "correct", &fixture("miyun.tvl"), "--question", "q", "--issue", "typo"]).status.code(), Some(2));

    let o = tvl(&["prompts", "fewshot", "--question", "Map user 3 in Miyun.", "--k", "4", "--json"]);
    assert!(o.status.success());
    let msgs: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(msgs.as_array().unwrap().len(), 1 + 2 * 4 + 1);
    assert_eq!(o.stdout, tvl(&["prompts", "fewshot", "--question", "Map user 3 in Miyun.", "--k", "4", "--json"]).stdout);
}
