//! JSON reward checkpoint:
//!
//! ```json
//! {"format":"alignlab-reward v1","kind":"siamese","feature_spec":"<hash>",
//!  "tokens":["<BOS>", ...],"prompt_repeats":1,"w":[...]}
//! ```
//!
//! Floats use shortest round-trip formatting, so loading is bit-exact.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::encoder::RewardEncoder;
use super::model::{RewardKind, RewardParameters};
use super::RewardError;
use crate::policy::Vocabulary;

const FORMAT: &str = "alignlab-reward v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardFile {
    format: String,
    kind: RewardKind,
    feature_spec: String,
    tokens: Vec<String>,
    #[serde(default = "one")]
    prompt_repeats: usize,
    w: Vec<f64>,
}

fn one() -> usize {
    1
}

pub fn save_reward(rp: &RewardParameters) -> String {
    let file = RewardFile {
        format: FORMAT.to_string(),
        kind: rp.kind,
        feature_spec: rp.encoder().spec_hash(),
        tokens: rp.encoder().vocab().tokens().to_vec(),
        prompt_repeats: rp.encoder().prompt_repeats(),
        w: rp.w.clone(),
    };
    serde_json::to_string(&file).expect("reward file serializes") + "\n"
}

pub fn load_reward(text: &str) -> Result<RewardParameters, RewardError> {
    let file: RewardFile = serde_json::from_str(text).map_err(|e| RewardError::Checkpoint(e.to_string()))?;
    if file.format != FORMAT {
        return Err(RewardError::Checkpoint(format!("unsupported format {:?}", file.format)));
    }
    let vocab = Vocabulary::new(file.tokens)?;
    let encoder = RewardEncoder::new(Arc::new(vocab)).with_prompt_repeats(file.prompt_repeats);
    if encoder.spec_hash() != file.feature_spec {
        return Err(RewardError::Checkpoint(format!(
            "feature spec mismatch: file {}, encoder {}",
            file.feature_spec,
            encoder.spec_hash()
        )));
    }
    RewardParameters::with_weights(file.kind, encoder, file.w)
}
