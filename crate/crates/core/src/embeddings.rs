//! Pooled utterance embeddings in JSON lines. The first non-blank line is a
//! header `{"dimension": N}`; every following line is
//! `{"dialogue_id": .., "utterance_id": .., "embedding": [..]}` with exactly
//! `N` finite values.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::UtteranceKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingHeader {
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub dialogue_id: String,
    pub utterance_id: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub dimension: usize,
    pub vectors: BTreeMap<UtteranceKey, Vec<f64>>,
}

impl Embeddings {
    pub fn get(&self, dialogue_id: &str, utterance_id: &str) -> Option<&Vec<f64>> {
        self.vectors
            .get(&(dialogue_id.to_string(), utterance_id.to_string()))
    }
}

pub fn import_embeddings<R: Read>(source: R) -> Result<Embeddings> {
    let mut header: Option<EmbeddingHeader> = None;
    let mut vectors = BTreeMap::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(format!("reading line {line_no}"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let Some(h) = header else {
            let h: EmbeddingHeader = serde_json::from_str(&line)
                .map_err(|e| parse_err(format!("expected header {{\"dimension\": N}}: {e}")))?;
            if h.dimension == 0 {
                return Err(parse_err("embedding dimension must be positive".into()));
            }
            header = Some(h);
            continue;
        };
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.embedding.len() != h.dimension {
            return Err(parse_err(format!(
                "embedding has {} values, header declares {}",
                rec.embedding.len(),
                h.dimension
            )));
        }
        if rec.embedding.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite embedding value".into()));
        }
        let key = (rec.dialogue_id, rec.utterance_id);
        if vectors.insert(key.clone(), rec.embedding).is_some() {
            return Err(parse_err(format!(
                "duplicate embedding for {}/{}",
                key.0, key.1
            )));
        }
    }
    let header = header.ok_or_else(|| Error::Parse {
        line: 0,
        msg: "empty embedding file".into(),
    })?;
    Ok(Embeddings {
        dimension: header.dimension,
        vectors,
    })
}
