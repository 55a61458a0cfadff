//! Externally supplied document embeddings and nearest-publication distance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::http::HttpClient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub doc_id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(doc_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding vector"));
        }
        Ok(Self {
            doc_id: doc_id.into(),
            values,
        })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Minimum Euclidean distance from `query` to any vector in `pool`.
pub fn min_embedding_distance(query: &EmbeddingVector, pool: &[EmbeddingVector]) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::Empty("embedding pool"));
    }
    let d = query.dimension();
    let mut best = f64::INFINITY;
    for v in pool {
        if v.dimension() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.dimension(),
            });
        }
        let sq: f64 = query.values.iter().zip(&v.values).map(|(a, b)| (a - b) * (a - b)).sum();
        best = best.min(sq.sqrt());
    }
    Ok(best)
}

/// Anything that can produce an embedding for a document.
pub trait EmbeddingSource: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, doc: &Document) -> Result<EmbeddingVector>;
}

/// In-memory store keyed by doc_id with a fixed dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct Header {
    dimension: usize,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    doc_id: String,
    vector: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, v: EmbeddingVector) -> Result<()> {
        if v.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: v.dimension(),
            });
        }
        self.vectors.insert(v.doc_id, v.values);
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Option<EmbeddingVector> {
        self.vectors.get(doc_id).map(|v| EmbeddingVector {
            doc_id: doc_id.to_string(),
            values: v.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Reads `{"dimension": d}` followed by `{"doc_id", "vector"}` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|_| Error::MissingPath(path.to_path_buf()))?;
        let label = path.display().to_string();
        let mut store: Option<Self> = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Line {
                path: label.clone(),
                line: i + 1,
                message,
            };
            match store.as_mut() {
                None => {
                    let h: Header =
                        serde_json::from_str(&line).map_err(|e| err(format!("expected dimension header: {e}")))?;
                    store = Some(Self::new(h.dimension));
                }
                Some(s) => {
                    let e: Entry = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
                    let v = EmbeddingVector::new(e.doc_id, e.vector).map_err(|e| err(e.to_string()))?;
                    s.insert(v).map_err(|e| err(e.to_string()))?;
                }
            }
        }
        store.ok_or_else(|| Error::Validation(format!("{label}: missing dimension header")))
    }

    /// Serializes in the on-disk format, ids sorted.
    pub fn to_jsonl(&self) -> String {
        let mut ids: Vec<&String> = self.vectors.keys().collect();
        ids.sort();
        let mut out = format!("{{\"dimension\":{}}}\n", self.dimension);
        for id in ids {
            let e = Entry {
                doc_id: id.clone(),
                vector: self.vectors[id].clone(),
            };
            out.push_str(&serde_json::to_string(&e).unwrap());
            out.push('\n');
        }
        out
    }
}

impl EmbeddingSource for EmbeddingStore {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, doc: &Document) -> Result<EmbeddingVector> {
        self.get(&doc.doc_id)
            .ok_or_else(|| Error::ProviderUnavailable(format!("no embedding for {}", doc.doc_id)))
    }
}

/// `POST {base}/embed {"text"} -> {"vector"}`, cached by doc_id.
pub struct HttpEmbeddingProvider {
    base_url: String,
    dimension: usize,
    client: HttpClient,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl HttpEmbeddingProvider {
    pub fn new(base_url: impl Into<String>, dimension: usize) -> Self {
        Self {
            base_url: base_url.into(),
            dimension,
            client: HttpClient::default(),
            cache: Mutex::new(HashMap::new()),
        }
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

impl EmbeddingSource for HttpEmbeddingProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, doc: &Document) -> Result<EmbeddingVector> {
        if let Some(v) = self.cache.lock().unwrap().get(&doc.doc_id) {
            return EmbeddingVector::new(&doc.doc_id, v.clone());
        }
        let url = format!("{}/embed", self.base_url.trim_end_matches('/'));
        let text = format!("{} {}", doc.title, doc.abstract_text);
        let resp = self
            .client
            .post_json(&url, &serde_json::json!({ "text": text }), None)
            .map_err(Error::ProviderUnavailable)?;
        if resp.status != 200 {
            return Err(Error::ProviderUnavailable(format!("{url}: HTTP {}", resp.status)));
        }
        let parsed: EmbedResponse =
            serde_json::from_str(&resp.body).map_err(|e| Error::MalformedResponse(e.to_string()))?;
        let v = EmbeddingVector::new(&doc.doc_id, parsed.vector)?;
        if v.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: v.dimension(),
            });
        }
        self.cache.lock().unwrap().insert(doc.doc_id.clone(), v.values.clone());
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new("d", x.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let q = v(&[0.0, 0.0]);
        let d = min_embedding_distance(&q, &[v(&[3.0, 4.0]), v(&[1.0, 1.0])]).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            min_embedding_distance(&q, &[v(&[0.0, 0.0]), v(&[1.0, 1.0])]).unwrap(),
            0.0
        );
        assert_eq!(min_embedding_distance(&q, &[v(&[3.0, 4.0])]).unwrap(), 5.0);
        assert!(matches!(min_embedding_distance(&q, &[]), Err(Error::Empty(_))));
        assert!(matches!(
            min_embedding_distance(&q, &[v(&[1.0, 2.0, 3.0])]),
            Err(Error::DimensionMismatch { expected: 2, actual: 3 })
        ));
        assert!(EmbeddingVector::new("x", vec![f64::NAN]).is_err());
    }

    #[test]
    fn store_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let mut s = EmbeddingStore::new(2);
        s.insert(EmbeddingVector::new("a", vec![1.0, 0.5]).unwrap()).unwrap();
        s.insert(EmbeddingVector::new("b", vec![-1.0, 0.1]).unwrap()).unwrap();
        assert!(s.insert(EmbeddingVector::new("c", vec![1.0]).unwrap()).is_err());
        std::fs::write(&path, s.to_jsonl()).unwrap();
        let back = EmbeddingStore::load(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get("b").unwrap().values, vec![-1.0, 0.1]);

        std::fs::write(&path, "{\"dimension\":2}\n{\"doc_id\":\"a\",\"vector\":[1.0]}\n").unwrap();
        assert!(matches!(EmbeddingStore::load(&path), Err(Error::Line { line: 2, .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vecs(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), n)
        }

        proptest! {
            #[test]
            fn member_distance_zero(pool in vecs(0..8), q in prop::collection::vec(-10.0f64..10.0, 3)) {
                let mut p: Vec<_> = pool.into_iter().map(|x| v(&x)).collect();
                p.push(v(&q));
                prop_assert_eq!(min_embedding_distance(&v(&q), &p).unwrap(), 0.0);
            }

            #[test]
            fn nonincreasing_as_pool_grows(pool in vecs(1..10), q in prop::collection::vec(-10.0f64..10.0, 3)) {
                let p: Vec<_> = pool.into_iter().map(|x| v(&x)).collect();
                let mut prev = f64::INFINITY;
                for k in 1..=p.len() {
                    let d = min_embedding_distance(&v(&q), &p[..k]).unwrap();
                    prop_assert!(d <= prev);
                    prev = d;
                }
            }
        }
    }
}
