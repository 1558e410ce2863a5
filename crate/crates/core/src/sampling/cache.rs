use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::provider::{ChatRequest, Completion};

/// One line of the generation cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedGeneration {
    pub cache_key: String,
    pub query_id: String,
    pub model_id: String,
    pub sample_index: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    pub created_at: u64,
}

/// Append-only store of generations, one JSON record per line.
#[derive(Default)]
pub struct GenerationCache {
    index: RwLock<HashMap<String, CachedGeneration>>,
    writer: Option<Mutex<File>>,
}

impl GenerationCache {
    pub fn in_memory() -> Self {
        GenerationCache::default()
    }

    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut index = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if let Ok(rec) = serde_json::from_str::<CachedGeneration>(&line) {
                    index.insert(rec.cache_key.clone(), rec);
                }
            }
        } else if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(GenerationCache {
            index: RwLock::new(index),
            writer: Some(Mutex::new(file)),
        })
    }

    /// `sha256(model_id, prompt, temperature, max_tokens, sample_index)`, hex encoded.
    pub fn key(request: &ChatRequest) -> String {
        let prompt = serde_json::to_string(&request.messages).expect("messages serialize");
        let mut h = Sha256::new();
        let fields: [&[u8]; 5] = [
            request.model.as_bytes(),
            prompt.as_bytes(),
            &request.temperature.to_bits().to_le_bytes(),
            &request.max_tokens.to_le_bytes(),
            &(request.sample_index as u64).to_le_bytes(),
        ];
        for f in fields {
            h.update((f.len() as u64).to_le_bytes());
            h.update(f);
        }
        hex::encode(h.finalize())
    }

    pub fn get(&self, key: &str) -> Option<CachedGeneration> {
        self.index.read().expect("cache lock poisoned").get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.read().expect("cache lock poisoned").contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(
        &self,
        key: &str,
        query_id: &str,
        request: &ChatRequest,
        completion: &Completion,
    ) -> std::io::Result<CachedGeneration> {
        let rec = CachedGeneration {
            cache_key: key.to_string(),
            query_id: query_id.to_string(),
            model_id: request.model.clone(),
            sample_index: request.sample_index,
            text: completion.text.clone(),
            token_logprobs: completion.token_logprobs.clone(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        if let Some(writer) = &self.writer {
            let mut line = serde_json::to_string(&rec)?;
            line.push('\n');
            let mut f = writer.lock().expect("cache writer poisoned");
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.index
            .write()
            .expect("cache lock poisoned")
            .insert(key.to_string(), rec.clone());
        Ok(rec)
    }
}
