use std::collections::{HashMap, HashSet};

use tvl_core::datagen::{fixture_registry, generate_corpus, synthetic_store, GenConfig, Scenario, SynthConfig};
use tvl_core::tvl::{parse_tvl, validate, VisType};
use tvl_harness::client::ClientError;
use tvl_harness::prompts::Demo;
use tvl_harness::retrieve::tokenize;
use tvl_harness::{
    build_fewshot_prompt, default_demos, questions_for, run_experiment, ChatModel, DatasetRecord, HarnessError, HttpModel,
    LexicalRetriever, ModelConfig, Retriever, RunOptions, ShotPolicy, StubMode, StubServer,
};

/// Records with distinct questions, so a stub can map question to gold.
fn records(n: usize) -> Vec<DatasetRecord> {
    let reg = fixture_registry();
    let store = synthetic_store(SynthConfig { seed: 3, points: 3000, users: 6 }, &reg);
    let corpus = generate_corpus(&store, &reg, &GenConfig { rng_seed: 8, max_tvls: 200, ..GenConfig::default() }).unwrap();
    let mut seen = HashSet::new();
    let out: Vec<DatasetRecord> =
        questions_for(&corpus).unwrap().into_iter().filter(|r| seen.insert(r.question.clone())).take(n).collect();
    assert_eq!(out.len(), n);
    out
}

fn model(stub: &StubServer) -> HttpModel {
    let mut cfg = ModelConfig::new(&stub.url(), "stub");
    cfg.backoff_ms = 1;
    HttpModel::new(cfg).unwrap()
}

fn fixed(k: usize) -> ShotPolicy<'static> {
    ShotPolicy::Fixed { demos: default_demos(), k }
}

fn opts() -> RunOptions {
    RunOptions { jobs: 4, ..RunOptions::default() }
}

#[test]
fn bundled_demos_are_valid() {
    let demos = default_demos();
    assert_eq!(demos.len(), 6);
    let mut kinds = HashSet::new();
    for d in &demos {
        let q = parse_tvl(&d.tvl).unwrap();
        assert!(validate(&q).is_empty(), "{}", d.tvl);
        kinds.insert(q.vis);
    }
    assert_eq!(kinds.len(), VisType::ALL.len());
}

#[test]
fn echo_stub_returns_gold_text() {
    let recs = records(3);
    let stub = StubServer::start(StubMode::Echo, &recs).unwrap();
    let m = model(&stub);
    let p = build_fewshot_prompt(&recs[1].question, &default_demos()[..2]);
    assert_eq!(m.complete(&p).unwrap(), recs[1].tvl);
}

#[test]
fn unauthorized_is_auth_error_without_retry() {
    let recs = records(1);
    let stub = StubServer::start(StubMode::Echo, &recs).unwrap().with_key("sk-test-key-0001");
    let m = model(&stub);
    let p = build_fewshot_prompt(&recs[0].question, &default_demos()[..1]);
    assert!(matches!(m.complete(&p), Err(ClientError::Auth(_))));
    assert_eq!(stub.hits(), 1);

    std::env::set_var("TVL_HARNESS_TEST_KEY", "sk-test-key-0001");
    let mut cfg = ModelConfig::new(&stub.url(), "stub");
    cfg.api_key_env = Some("TVL_HARNESS_TEST_KEY".into());
    assert_eq!(HttpModel::new(cfg).unwrap().complete(&p).unwrap(), recs[0].tvl);
}

#[test]
fn rate_limits_are_retried_with_backoff() {
    let recs = records(1);
    let p = build_fewshot_prompt(&recs[0].question, &default_demos()[..1]);

    let stub = StubServer::start(StubMode::Echo, &recs).unwrap().with_script(&[429, 429, 429]);
    let m = model(&stub);
    let t = std::time::Instant::now();
    assert_eq!(m.complete(&p).unwrap(), recs[0].tvl);
    assert_eq!(stub.hits(), 4);
    // Delays of 1, 2 and 4 ms.
    assert!(t.elapsed() >= std::time::Duration::from_millis(7));

    let stub = StubServer::start(StubMode::Echo, &recs).unwrap().with_script(&[429, 429, 429, 429]);
    assert!(matches!(model(&stub).complete(&p), Err(ClientError::RateLimited { attempts: 4 })));

    let stub = StubServer::start(StubMode::Echo, &recs).unwrap().with_script(&[503, 502]);
    assert_eq!(model(&stub).complete(&p).unwrap(), recs[0].tvl);

    let stub = StubServer::start(StubMode::Echo, &recs).unwrap().with_script(&[400]);
    assert!(matches!(model(&stub).complete(&p), Err(ClientError::Protocol(_))));
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let mut cfg = ModelConfig::new(&format!("http://127.0.0.1:{port}/v1"), "m");
    cfg.backoff_ms = 1;
    let p = build_fewshot_prompt("q", &default_demos()[..1]);
    assert!(matches!(HttpModel::new(cfg).unwrap().complete(&p), Err(ClientError::Transport(_))));
}

#[test]
fn echo_run_scores_perfectly() {
    let recs = records(24);
    let stub = StubServer::start(StubMode::Echo, &recs).unwrap();
    let res = run_experiment(&recs, &model(&stub), &fixed(3), &opts()).unwrap();
    let r = &res.overall;
    assert_eq!(r.n, 24);
    for acc in [r.vis_acc, r.axis_acc, r.area_acc, r.time_acc, r.sql_acc, r.tvl_acc] {
        assert_eq!(acc, 1.0);
    }
    assert!(res.by_scenario.contains_key(&Scenario::Normal));
    let table = res.table();
    assert!(table.lines().next().unwrap().contains("Vis.Acc"));
    assert!(table.contains("100.00"));
}

#[test]
fn area_corruption_only_hits_area() {
    let recs = records(20);
    assert!(recs.iter().all(|r| parse_tvl(&r.tvl).unwrap().area.is_some()));
    let stub = StubServer::start(StubMode::AreaCorruptor, &recs).unwrap();
    let r = run_experiment(&recs, &model(&stub), &fixed(2), &opts()).unwrap().overall;
    assert_eq!((r.area_acc, r.tvl_acc), (0.0, 0.0));
    assert_eq!((r.vis_acc, r.time_acc, r.sql_acc), (1.0, 1.0, 1.0));
}

#[test]
fn one_garbage_answer_in_four() {
    let recs = records(4);
    let stub = StubServer::start(StubMode::GarbageEvery(4), &recs).unwrap();
    assert_eq!(stub.garbage_questions().len(), 1);
    let res = run_experiment(&recs, &model(&stub), &fixed(1), &opts()).unwrap();
    let r = &res.overall;
    for acc in [r.vis_acc, r.axis_acc, r.area_acc, r.time_acc, r.sql_acc, r.tvl_acc] {
        assert_eq!(acc, 0.75);
    }
    assert_eq!(res.pairs.iter().filter(|p| p.predicted.is_err()).count(), 1);
}

#[test]
fn resumed_run_matches_uninterrupted() {
    let recs = records(15);
    let stub = StubServer::start(StubMode::GarbageEvery(3), &recs).unwrap();
    let m = model(&stub);
    let full = run_experiment(&recs, &m, &fixed(2), &opts()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("pairs.jsonl");
    let partial = RunOptions { jobs: 2, checkpoint: Some(ck.clone()), limit: Some(6) };
    assert!(matches!(
        run_experiment(&recs, &m, &fixed(2), &partial),
        Err(HarnessError::Incomplete { completed: 6, total: 15 })
    ));
    // Simulate a write torn by a crash.
    let mut text = std::fs::read_to_string(&ck).unwrap();
    text.push_str("{\"id\":\"tvl-0");
    std::fs::write(&ck, text).unwrap();

    let before = stub.hits();
    let resumed =
        run_experiment(&recs, &m, &fixed(2), &RunOptions { jobs: 3, checkpoint: Some(ck.clone()), limit: None }).unwrap();
    assert_eq!(stub.hits() - before, 9);
    assert_eq!(resumed, full);
    // A second resume has nothing left to ask.
    let again = run_experiment(&recs, &m, &fixed(2), &RunOptions { jobs: 1, checkpoint: Some(ck), limit: None }).unwrap();
    assert_eq!(stub.hits() - before, 9);
    assert_eq!(again, full);
}

#[test]
fn transport_failure_leaves_resumable_checkpoint() {
    let recs = records(8);
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("pairs.jsonl");
    let ok = StubServer::start(StubMode::Echo, &recs).unwrap();
    let reference = run_experiment(&recs, &model(&ok), &fixed(1), &opts()).unwrap();

    // Three good answers, then an auth failure.
    let flaky = StubServer::start(StubMode::Echo, &recs).unwrap();
    let o = RunOptions { jobs: 1, checkpoint: Some(ck.clone()), limit: Some(3) };
    let _ = run_experiment(&recs, &model(&flaky), &fixed(1), &o);
    let flaky = flaky.with_key("sk-never-sent-0000");
    let err = run_experiment(&recs, &model(&flaky), &fixed(1), &RunOptions { jobs: 1, checkpoint: Some(ck.clone()), limit: None })
        .unwrap_err();
    assert!(matches!(err, HarnessError::Interrupted { completed: 3, total: 8, .. }), "{err}");

    let resumed = run_experiment(&recs, &model(&ok), &fixed(1), &RunOptions { jobs: 2, checkpoint: Some(ck), limit: None }).unwrap();
    assert_eq!(resumed.overall, reference.overall);
}

#[test]
fn rag_run_uses_retrieved_demos() {
    let recs = records(30);
    let (train, test) = recs.split_at(20);
    let retriever = LexicalRetriever::new(train.to_vec());
    let stub = StubServer::start(StubMode::Echo, test).unwrap();
    let res = run_experiment(test, &model(&stub), &ShotPolicy::Retrieved { retriever: &retriever, k: 3 }, &opts()).unwrap();
    assert_eq!(res.overall.tvl_acc, 1.0);
}

/// Independent TF-IDF cosine, written out directly from the definition.
fn brute_force_scores(corpus: &[DatasetRecord], question: &str) -> Vec<f64> {
    let docs: Vec<Vec<String>> = corpus.iter().map(|r| tokenize(&r.question)).collect();
    let n = docs.len() as f64;
    let idf = |t: &str| {
        let df = docs.iter().filter(|d| d.iter().any(|x| x == t)).count() as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    };
    let vector = |tokens: &[String]| {
        let mut v: HashMap<String, f64> = HashMap::new();
        for t in tokens {
            if docs.iter().any(|d| d.contains(t)) {
                *v.entry(t.clone()).or_default() += 1.0;
            }
        }
        v.into_iter().map(|(t, c)| (t.clone(), c * idf(&t))).collect::<HashMap<String, f64>>()
    };
    let q = vector(&tokenize(question));
    docs.iter()
        .map(|d| {
            let dv = vector(d);
            let dot: f64 = q.iter().map(|(t, w)| w * dv.get(t).copied().unwrap_or(0.0)).sum();
            let norm = |v: &HashMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
            let (a, b) = (norm(&q), norm(&dv));
            if a == 0.0 || b == 0.0 {
                0.0
            } else {
                dot / (a * b)
            }
        })
        .collect()
}

#[test]
fn lexical_ranking_matches_exhaustive_scoring() {
    let corpus = records(20);
    let retriever = LexicalRetriever::new(corpus.clone());
    let queries: Vec<String> = corpus
        .iter()
        .map(|r| r.question.clone())
        .chain(["map of trajectories for user 2".to_string(), "average altitude by day".to_string(), String::new()])
        .collect();
    for q in &queries {
        let expected = brute_force_scores(&corpus, q);
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.sort_by(|&a, &b| {
            // Scores within float noise count as tied.
            if (expected[a] - expected[b]).abs() < 1e-12 {
                corpus[a].id.cmp(&corpus[b].id)
            } else {
                expected[b].total_cmp(&expected[a])
            }
        });
        let got = retriever.top_k(q, corpus.len()).unwrap();
        for (rank, (score, rec)) in got.iter().enumerate() {
            let want = order[rank];
            assert!((score - expected[want]).abs() < 1e-12, "{q}: score at {rank}");
            assert!(rec.id == corpus[want].id || (expected[want] - score).abs() < 1e-12, "{q}: rank {rank}");
        }
        assert!(got.windows(2).all(|w| w[0].0 >= w[1].0));
    }
}

#[test]
fn embedding_retriever_against_stub() {
    let corpus = records(10);
    let stub = StubServer::start(StubMode::Echo, &corpus).unwrap();
    let r = tvl_harness::EmbeddingRetriever::new(corpus.clone(), model(&stub)).unwrap();
    let top = r.top_k(&corpus[4].question, 1).unwrap();
    assert!((top[0].0 - 1.0).abs() < 1e-9);
    assert_eq!(top[0].1.question, corpus[4].question);
    let all = r.top_k("anything", 10).unwrap();
    assert_eq!(all.len(), 10);
}

#[test]
fn prompts_are_byte_identical_across_calls() {
    let demos: Vec<Demo> = default_demos();
    let a = build_fewshot_prompt("Show user 3 in Miyun.", &demos);
    let b = build_fewshot_prompt("Show user 3 in Miyun.", &demos.clone());
    assert_eq!(serde_json::to_string(&a.messages()).unwrap(), serde_json::to_string(&b.messages()).unwrap());
}
