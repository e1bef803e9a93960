//! Model checkpoints.
//!
//! A checkpoint is a single JSON document:
//!
//! ```text
//! {
//!   "format": "lowres-checkpoint",
//!   "version": 1,
//!   "kind": "tagger" | "parser",
//!   "config": { ...EncoderConfig... },
//!   "vocab": { ...Vocab... },
//!   "meta": { ...model-specific settings... },
//!   "params": [ { "name": "...", "shape": [rows, cols], "data": [row-major values] }, ... ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading restores
//! parameters bit for bit.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::EncoderConfig;
use super::params::ParamStore;
use super::vocab::Vocab;
use crate::error::{Error, Result};

pub const FORMAT: &str = "lowres-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub meta: M,
    pub params: Vec<StoredParam>,
}

impl<M> Checkpoint<M> {
    pub fn new(kind: &str, config: EncoderConfig, vocab: Vocab, meta: M, params: &ParamStore) -> Result<Self> {
        if !params.all_finite() {
            return Err(Error::Checkpoint("refusing to store non-finite parameters".into()));
        }
        Ok(Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            config,
            vocab,
            meta,
            params: params
                .iter()
                .map(|(name, v)| StoredParam {
                    name: name.to_owned(),
                    shape: [v.nrows(), v.ncols()],
                    data: v.iter().copied().collect(),
                })
                .collect(),
        })
    }

    /// Copy stored arrays into a freshly built store with the same layout.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model expects {}",
                self.params.len(),
                store.len()
            )));
        }
        for p in &self.params {
            let value = Array2::from_shape_vec((p.shape[0], p.shape[1]), p.data.clone())
                .map_err(|e| Error::Checkpoint(format!("parameter `{}`: {}", p.name, e)))?;
            store.set(&p.name, value)?;
        }
        Ok(())
    }
}

impl<M: Serialize> Checkpoint<M> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::file(path, e))
    }
}

impl<M: DeserializeOwned> Checkpoint<M> {
    pub fn load(path: &Path, kind: &str) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let header: Header = serde_json::from_str(&text)?;
        if header.format != FORMAT {
            return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
        }
        if header.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                header.version
            )));
        }
        if header.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {} checkpoint, found {}",
                kind, header.kind
            )));
        }
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{Sentence, Token, Treebank};
    use crate::treebank_ops::seeded_rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = seeded_rng(4);
        let mut store = ParamStore::new();
        store.add_scaled("a", (3, 2), &mut rng).unwrap();
        store.add_uniform("b", (1, 5), 0.1, &mut rng).unwrap();
        let tb = Treebank::new("t", vec![Sentence::new(vec![Token::new(1, "x").with_upos("X").with_head(0, "root")])]);
        let vocab = Vocab::build(&tb, 1).unwrap();
        let ck = Checkpoint::new("tagger", EncoderConfig::tiny(), vocab, 7u32, &store).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        let back: Checkpoint<u32> = Checkpoint::load(&path, "tagger").unwrap();
        assert_eq!(back, ck);
        let mut fresh = store.clone();
        fresh.unflatten(&vec![0.0; fresh.num_scalars()]).unwrap();
        back.restore_into(&mut fresh).unwrap();
        assert_eq!(fresh, store);
        assert!(Checkpoint::<u32>::load(&path, "parser").is_err());
    }
}
