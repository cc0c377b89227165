//! Scored runs of a model over a test set, with a resumable per-pair log.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use tvl_core::datagen::Scenario;
use tvl_core::metrics::{compare_pair, format_table, score_verdicts, EvalReport, FormatFailure, TableRow, Verdicts};
use tvl_core::tvl::{parse_tvl, render_tvl, TvlQuery, VisType};

use crate::client::{ChatModel, ClientError};
use crate::output::parse_model_output;
use crate::prompts::{build_fewshot_prompt, Demo, PromptSpec};
use crate::retrieve::Retriever;
use crate::{DatasetRecord, HarnessError};

/// Where demonstrations come from.
pub enum ShotPolicy<'a> {
    /// The first `k` of a curated list, the same for every question.
    Fixed { demos: Vec<Demo>, k: usize },
    /// The `k` training records most similar to each question.
    Retrieved { retriever: &'a dyn Retriever, k: usize },
}

impl ShotPolicy<'_> {
    fn demos_for(&self, question: &str) -> Result<Vec<Demo>, ClientError> {
        match self {
            ShotPolicy::Fixed { demos, k } => Ok(demos.iter().take(*k).cloned().collect()),
            ShotPolicy::Retrieved { retriever, k } => {
                // Hits come back best first; the closest example is placed
                // right before the question.
                let mut hits: Vec<Demo> = retriever.top_k(question, *k)?.into_iter().map(|(_, r)| Demo::from(r)).collect();
                hits.reverse();
                Ok(hits)
            }
        }
    }

    fn check(&self) -> Result<(), HarnessError> {
        let ok = match self {
            ShotPolicy::Fixed { demos, k } => *k >= 1 && *k <= demos.len(),
            ShotPolicy::Retrieved { retriever, k } => *k >= 1 && *k <= retriever.corpus().len(),
        };
        if ok {
            Ok(())
        } else {
            Err(HarnessError::Config("shot count must be between 1 and the number of available demonstrations".into()))
        }
    }
}

/// One scored question, as written to the checkpoint log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLog {
    pub id: String,
    pub vis_type: VisType,
    pub scenario: Scenario,
    pub question: String,
    pub gold: String,
    pub completion: String,
    pub predicted: Result<String, FormatFailure>,
    pub verdicts: Verdicts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub model: String,
    pub overall: EvalReport,
    pub by_scenario: BTreeMap<Scenario, EvalReport>,
    /// Sorted by id.
    pub pairs: Vec<PairLog>,
}

impl ExperimentResult {
    /// Fixed-width table: one row per scenario present, then `all`.
    pub fn table(&self) -> String {
        let names: Vec<(String, &EvalReport)> = self
            .by_scenario
            .iter()
            .map(|(s, r)| (s.to_string(), r))
            .chain([("all".to_string(), &self.overall)])
            .collect();
        let rows: Vec<TableRow> =
            names.iter().map(|(n, r)| TableRow { test_set: n, model: &self.model, report: r }).collect();
        format_table(&rows)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Concurrent model calls; 0 is treated as 1.
    pub jobs: usize,
    /// Append-only JSONL log of finished pairs. Pairs already in it are
    /// not asked again.
    pub checkpoint: Option<PathBuf>,
    /// Stop after this many new pairs. For tests of resumption.
    pub limit: Option<usize>,
}

fn read_checkpoint(path: &Path) -> Result<Vec<PairLog>, HarnessError> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(p) => out.push(p),
            // A torn final line from an interrupted write; that pair is redone.
            Err(e) => log::warn!("{}: skipping unreadable checkpoint line: {e}", path.display()),
        }
    }
    Ok(out)
}

fn open_log(path: &Path) -> Result<std::fs::File, HarnessError> {
    let mut f = OpenOptions::new().create(true).read(true).append(true).open(path)?;
    let len = f.metadata()?.len();
    if len > 0 {
        f.seek(SeekFrom::Start(len - 1))?;
        let mut last = [0u8];
        f.read_exact(&mut last)?;
        if last[0] != b'\n' {
            f.write_all(b"\n")?;
        }
    }
    Ok(f)
}

fn score_one(rec: &DatasetRecord, gold: &TvlQuery, model: &dyn ChatModel, shots: &ShotPolicy) -> Result<PairLog, ClientError> {
    let demos = shots.demos_for(&rec.question)?;
    let prompt: PromptSpec = build_fewshot_prompt(&rec.question, &demos);
    let completion = model.complete(&prompt)?;
    let prediction = parse_model_output(&completion);
    let verdicts = compare_pair(gold, &prediction).verdicts;
    Ok(PairLog {
        id: rec.id.clone(),
        vis_type: rec.vis_type,
        scenario: rec.scenario,
        question: rec.question.clone(),
        gold: rec.tvl.clone(),
        completion,
        predicted: prediction.map(|q| render_tvl(&q)),
        verdicts,
    })
}

/// Prompts `model` with every test question, parses and scores the
/// answers.
///
/// Finished pairs are appended to the checkpoint as they arrive; a client
/// error stops the run after in-flight calls finish, and a later call with
/// the same checkpoint continues where it stopped. The result depends only
/// on the set of pairs, not on completion order.
pub fn run_experiment(
    test: &[DatasetRecord],
    model: &dyn ChatModel,
    shots: &ShotPolicy,
    opts: &RunOptions,
) -> Result<ExperimentResult, HarnessError> {
    if test.is_empty() {
        return Err(HarnessError::Config("test set is empty".into()));
    }
    shots.check()?;
    let mut seen = HashSet::new();
    let mut golds = Vec::with_capacity(test.len());
    for (i, r) in test.iter().enumerate() {
        if !seen.insert(r.id.as_str()) {
            return Err(HarnessError::BadRecord { line: i + 1, reason: format!("duplicate id {}", r.id) });
        }
        golds.push(parse_tvl(&r.tvl).map_err(|e| HarnessError::BadRecord { line: i + 1, reason: e.to_string() })?);
    }

    let mut done: HashMap<String, PairLog> = HashMap::new();
    if let Some(path) = &opts.checkpoint {
        for p in read_checkpoint(path)? {
            if seen.contains(p.id.as_str()) {
                done.insert(p.id.clone(), p);
            }
        }
    }
    let mut pending: Vec<usize> = (0..test.len()).filter(|&i| !done.contains_key(&test[i].id)).collect();
    if let Some(limit) = opts.limit {
        pending.truncate(limit);
    }
    let mut log_file = opts.checkpoint.as_deref().map(open_log).transpose()?;

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<Result<PairLog, ClientError>>();
    let mut first_err: Option<ClientError> = None;
    std::thread::scope(|s| -> Result<(), HarnessError> {
        for _ in 0..opts.jobs.max(1).min(pending.len().max(1)) {
            let tx = tx.clone();
            let (next, stop, pending, golds) = (&next, &stop, &pending, &golds);
            s.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Some(&i) = pending.get(next.fetch_add(1, Ordering::SeqCst)) else { break };
                let res = score_one(&test[i], &golds[i], model, shots);
                if res.is_err() {
                    stop.store(true, Ordering::SeqCst);
                }
                if tx.send(res).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single writer: only this thread touches the log.
        for res in rx {
            match res {
                Ok(pair) => {
                    if let Some(f) = log_file.as_mut() {
                        serde_json::to_writer(&mut *f, &pair).map_err(std::io::Error::from)?;
                        f.write_all(b"\n")?;
                        f.flush()?;
                    }
                    done.insert(pair.id.clone(), pair);
                }
                Err(e) => {
                    log::error!("model call failed: {e}");
                    first_err.get_or_insert(e);
                }
            }
        }
        Ok(())
    })?;
    if let Some(e) = first_err {
        return Err(HarnessError::Interrupted { completed: done.len(), total: test.len(), source: e });
    }
    if done.len() < test.len() {
        return Err(HarnessError::Incomplete { completed: done.len(), total: test.len() });
    }

    let mut pairs: Vec<PairLog> = done.into_values().collect();
    pairs.sort_by(|a, b| a.id.cmp(&b.id));
    let overall = score_verdicts(pairs.iter().map(|p| p.verdicts)).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut by_scenario = BTreeMap::new();
    for s in Scenario::ALL {
        if let Ok(r) = score_verdicts(pairs.iter().filter(|p| p.scenario == s).map(|p| p.verdicts)) {
            by_scenario.insert(s, r);
        }
    }
    Ok(ExperimentResult { model: model.name().to_string(), overall, by_scenario, pairs })
}
