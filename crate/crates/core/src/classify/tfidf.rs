//! Unigram TF-IDF with smoothed idf and L2-normalized rows.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    /// Term to column; columns follow lexicographic term order.
    pub vocabulary: BTreeMap<String, usize>,
    pub document_frequency: Vec<usize>,
    pub idf: Vec<f64>,
    pub max_features: usize,
    pub n_docs: usize,
}

impl TfidfVectorizer {
    /// Keeps the `max_features` terms with the highest document frequency,
    /// ties broken lexicographically. Terms are expected already normalized.
    pub fn fit<S: AsRef<str>>(documents: &[Vec<S>], max_features: usize) -> Result<Self> {
        let mut df: HashMap<&str, usize> = HashMap::new();
        for doc in documents {
            let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        if df.is_empty() {
            return Err(Error::Degenerate("TF-IDF fit corpus has no terms".into()));
        }
        let mut terms: Vec<(&str, usize)> = df.into_iter().collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        terms.truncate(max_features.max(1));
        terms.sort_by(|a, b| a.0.cmp(b.0));

        let n_docs = documents.len();
        let vocabulary = terms
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.to_string(), i))
            .collect();
        let document_frequency: Vec<usize> = terms.iter().map(|t| t.1).collect();
        let idf = document_frequency
            .iter()
            .map(|&d| ((1.0 + n_docs as f64) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        Ok(TfidfVectorizer {
            vocabulary,
            document_frequency,
            idf,
            max_features,
            n_docs,
        })
    }

    pub fn dimension(&self) -> usize {
        self.idf.len()
    }

    /// Sparse `(column, weight)` pairs sorted by column; empty for documents
    /// without known terms.
    pub fn transform_sparse<S: AsRef<str>>(&self, doc: &[S]) -> Vec<(usize, f64)> {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for t in doc {
            if let Some(&i) = self.vocabulary.get(t.as_ref()) {
                *tf.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut v: Vec<(usize, f64)> = tf.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut v {
                *w /= norm;
            }
        }
        v
    }

    pub fn transform<S: AsRef<str>>(&self, doc: &[S]) -> Vec<f64> {
        let mut dense = vec![0.0; self.dimension()];
        for (i, w) in self.transform_sparse(doc) {
            dense[i] = w;
        }
        dense
    }
}

pub fn tfidf_fit_transform<S: AsRef<str>>(
    documents: &[Vec<S>],
    max_features: usize,
) -> Result<(TfidfVectorizer, Vec<Vec<f64>>)> {
    let v = TfidfVectorizer::fit(documents, max_features)?;
    let rows = documents.iter().map(|d| v.transform(d)).collect();
    Ok((v, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn identical_documents() {
        let (_, rows) = tfidf_fit_transform(&docs(&["a b b", "a b b"]), 10).unwrap();
        assert_eq!(rows[0], rows[1]);
        let norm: f64 = rows[0].iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn idf_monotone() {
        let v = TfidfVectorizer::fit(&docs(&["a b", "a c", "a d"]), 10).unwrap();
        assert!(v.idf[v.vocabulary["a"]] < v.idf[v.vocabulary["b"]]);
        assert_eq!(v.idf[v.vocabulary["a"]], 1.0);
    }

    #[test]
    fn vocabulary_cap_prefers_frequent_then_lexicographic() {
        let v = TfidfVectorizer::fit(&docs(&["z y", "z x", "w"]), 2).unwrap();
        let terms: Vec<&str> = v.vocabulary.keys().map(String::as_str).collect();
        assert_eq!(terms, vec!["w", "z"]);
    }

    #[test]
    fn empty_fit_corpus() {
        assert!(TfidfVectorizer::fit(&docs(&["", ""]), 5).is_err());
    }

    #[test]
    fn unknown_terms_give_zero_vector() {
        let v = TfidfVectorizer::fit(&docs(&["a"]), 5).unwrap();
        assert_eq!(v.transform(&["q"]), vec![0.0]);
    }
}
