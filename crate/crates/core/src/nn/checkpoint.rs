//! Model checkpoints as JSON documents.
//!
//! ```json
//! {
//!   "format": "qsynth-model/1",
//!   "spec": {
//!     "architecture": { "kind": "multilayer-perceptron" },
//!     "channels": 4, "samples": 16, "classes": 2,
//!     "hidden": [32], "activation": "relu", "seed": 7
//!   },
//!   "parameters": [0.0123, -0.5, ...]
//! }
//! ```
//!
//! `architecture.kind` is one of `linear-softmax`, `multilayer-perceptron` or
//! `temporal-conv-net`; the last also carries `kernel` and `pool`. `parameters` is the
//! flat parameter vector in the layer order documented on the layer stack, written as
//! shortest round-trip decimals so reloading is exact. Optimizer state is not saved.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::Model;
use crate::nn::spec::ModelSpec;

pub const FORMAT: &str = "qsynth-model/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    spec: ModelSpec,
    parameters: Vec<f64>,
}

pub fn to_json(model: &Model) -> String {
    let doc = Checkpoint {
        format: FORMAT.to_string(),
        spec: model.spec().clone(),
        parameters: model.params().to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("checkpoint serializes")
}

pub fn from_json(text: &str) -> Result<Model> {
    let doc: Checkpoint =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
    if doc.format != FORMAT {
        return Err(Error::Parse(format!(
            "checkpoint format {:?}, expected {FORMAT:?}",
            doc.format
        )));
    }
    Model::from_params(doc.spec, doc.parameters)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
