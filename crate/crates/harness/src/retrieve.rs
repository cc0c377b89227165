//! Demonstration retrieval for few-shot prompts.

use std::collections::HashMap;

use crate::client::{ClientError, HttpModel};
use crate::DatasetRecord;

pub trait Retriever: Send + Sync {
    fn corpus(&self) -> &[DatasetRecord];

    /// Similarity of `question` to every corpus record, in corpus order.
    fn scores(&self, question: &str) -> Result<Vec<f64>, ClientError>;

    /// The `k` best records, best first, ties broken by ascending id.
    fn top_k(&self, question: &str, k: usize) -> Result<Vec<(f64, &DatasetRecord)>, ClientError> {
        let scores = self.scores(question)?;
        Ok(rank(&scores, self.corpus(), k))
    }
}

pub fn rank<'a>(scores: &[f64], corpus: &'a [DatasetRecord], k: usize) -> Vec<(f64, &'a DatasetRecord)> {
    let mut hits: Vec<(f64, &DatasetRecord)> = scores.iter().copied().zip(corpus).collect();
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    hits.truncate(k);
    hits
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

type SparseVec = Vec<(usize, f64)>;

/// TF-IDF cosine over lower-cased alphanumeric tokens, with the smoothed
/// weight `ln((1 + N) / (1 + df)) + 1`. Query tokens unseen in the corpus
/// are dropped.
pub struct LexicalRetriever {
    corpus: Vec<DatasetRecord>,
    vocab: HashMap<String, usize>,
    idf: Vec<f64>,
    docs: Vec<SparseVec>,
}

impl LexicalRetriever {
    pub fn new(corpus: Vec<DatasetRecord>) -> LexicalRetriever {
        let mut vocab = HashMap::new();
        let mut df: Vec<usize> = Vec::new();
        let tokenized: Vec<Vec<usize>> = corpus
            .iter()
            .map(|r| {
                let ids: Vec<usize> = tokenize(&r.question)
                    .into_iter()
                    .map(|t| {
                        let next = vocab.len();
                        *vocab.entry(t).or_insert(next)
                    })
                    .collect();
                df.resize(vocab.len(), 0);
                let mut uniq = ids.clone();
                uniq.sort_unstable();
                uniq.dedup();
                for t in uniq {
                    df[t] += 1;
                }
                ids
            })
            .collect();
        let n = corpus.len() as f64;
        let idf: Vec<f64> = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        let mut out = LexicalRetriever { corpus, vocab, idf, docs: Vec::new() };
        out.docs = tokenized.iter().map(|ids| out.weigh(ids)).collect();
        out
    }

    fn weigh(&self, ids: &[usize]) -> SparseVec {
        let mut tf: HashMap<usize, f64> = HashMap::new();
        for &t in ids {
            *tf.entry(t).or_default() += 1.0;
        }
        let mut v: SparseVec = tf.into_iter().map(|(t, c)| (t, c * self.idf[t])).collect();
        v.sort_unstable_by_key(|e| e.0);
        v
    }

    fn vectorize(&self, text: &str) -> SparseVec {
        let ids: Vec<usize> = tokenize(text).iter().filter_map(|t| self.vocab.get(t).copied()).collect();
        self.weigh(&ids)
    }

    pub fn similarity(&self, question: &str, index: usize) -> f64 {
        sparse_cosine(&self.vectorize(question), &self.docs[index])
    }
}

fn sparse_cosine(a: &SparseVec, b: &SparseVec) -> f64 {
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    let na = a.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
    let nb = b.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl Retriever for LexicalRetriever {
    fn corpus(&self) -> &[DatasetRecord] {
        &self.corpus
    }

    fn scores(&self, question: &str) -> Result<Vec<f64>, ClientError> {
        let q = self.vectorize(question);
        Ok(self.docs.iter().map(|d| sparse_cosine(&q, d)).collect())
    }
}

/// Cosine similarity over vectors from an embeddings endpoint. Corpus
/// vectors are fetched once, in batches, at construction.
pub struct EmbeddingRetriever {
    corpus: Vec<DatasetRecord>,
    vectors: Vec<Vec<f64>>,
    model: HttpModel,
}

const EMBED_BATCH: usize = 64;

impl EmbeddingRetriever {
    pub fn new(corpus: Vec<DatasetRecord>, model: HttpModel) -> Result<EmbeddingRetriever, ClientError> {
        let mut vectors = Vec::with_capacity(corpus.len());
        for chunk in corpus.chunks(EMBED_BATCH) {
            let inputs: Vec<String> = chunk.iter().map(|r| r.question.clone()).collect();
            vectors.extend(model.embed(&inputs)?);
        }
        Ok(EmbeddingRetriever { corpus, vectors, model })
    }
}

impl Retriever for EmbeddingRetriever {
    fn corpus(&self) -> &[DatasetRecord] {
        &self.corpus
    }

    fn scores(&self, question: &str) -> Result<Vec<f64>, ClientError> {
        let q = self.model.embed(&[question.to_string()])?.remove(0);
        Ok(self.vectors.iter().map(|v| cosine(&q, v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tvl_core::datagen::Scenario;
    use tvl_core::tvl::VisType;

    fn rec(id: &str, q: &str) -> DatasetRecord {
        DatasetRecord { id: id.into(), question: q.into(), tvl: String::new(), vis_type: VisType::Bar, scenario: Scenario::Normal }
    }

    fn corpus() -> Vec<DatasetRecord> {
        vec![
            rec("c", "count points by travel mode in Haidian"),
            rec("a", "average altitude per user in Miyun"),
            rec("b", "count points by travel mode in Haidian"),
            rec("d", "show trajectories of user 3 on a map"),
        ]
    }

    #[test]
    fn identical_question_ranks_first() {
        let r = LexicalRetriever::new(corpus());
        let top = r.top_k("average altitude per user in Miyun", 1).unwrap();
        assert_eq!(top[0].1.id, "a");
        assert!((top[0].0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_id() {
        let r = LexicalRetriever::new(corpus());
        let top = r.top_k("count points by travel mode in Haidian", 2).unwrap();
        assert_eq!([top[0].1.id.as_str(), top[1].1.id.as_str()], ["b", "c"]);
    }

    #[test]
    fn whole_corpus_is_sorted() {
        let r = LexicalRetriever::new(corpus());
        let all = r.top_k("map of user 3", 4).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0].1.id, "d");
        assert!(all.windows(2).all(|w| w[0].0 >= w[1].0));
        // No shared tokens: everything scores zero and comes back by id.
        let none = r.top_k("zzz", 4).unwrap();
        assert_eq!(none.iter().map(|h| h.1.id.as_str()).collect::<Vec<_>>(), ["a", "b", "c", "d"]);
    }
}
