//! Toy autoregressive policy: linear logits over a fixed context encoding,
//! exact log-probabilities and gradients, temperature sampling and an
//! optional low-rank adapter on the logit matrix.

mod checkpoint;
mod features;
mod model;
mod params;
mod vocab;

pub use checkpoint::{load_policy, save_policy, CheckpointError};
pub use features::{FeatureMap, SparseFeatures, DEFAULT_CONTEXT};
pub use model::{
    grad_logprob, logprob, logprob_and_grad, merge_adapter, next_token_logprobs, sample,
    sample_with_rng, LogProb, PolicyError, SampleConfig, GREEDY_THRESHOLD, MAX_LEN, MAX_TEMPERATURE,
};
pub use params::{adapter_param_count, LowRankAdapter, PolicyGradient, PolicyParameters};
pub use vocab::{TokenId, VocabError, Vocabulary, BOS, EOS, MAX_VOCAB, NUMS, SEP, SPACE, TGT};
