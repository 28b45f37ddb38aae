use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, OptimizerName, RewardSource, Task};
use super::data::{read_pairs, read_problems};
use super::HarnessError;
use crate::countdown::{generate_problems, verify, CountdownProblem, GeneratorConfig, VerifyOptions};
use crate::objectives::{
    dpo_batch_loss, rloo_gradient, sft_loss, Baseline, Demonstration, DpoConfig, GradientConvention, OptimizerConfig, OptimizerKind,
    OptimizerState, RlooConfig,
};
use crate::policy::{load_policy, PolicyGradient, PolicyParameters, SampleConfig, TokenId, Vocabulary};
use crate::reward::{load_reward, PreferencePair, RewardParameters};
use crate::rng::{derive_seed, seeded};
use crate::tasks::{countdown_demonstrations, countdown_pairs, countdown_prompt, response_text, ToyPreferenceTask};
use crate::trainable::Trainable;

/// Sub-seed labels, mixed into the master seed.
mod stream {
    pub const DATA: u64 = 1;
    pub const EVAL: u64 = 2;
    pub const INIT: u64 = 3;
    pub const PAIRS: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const RLOO: u64 = 6;
}

pub const DEFAULT_EVAL_COUNTDOWN: usize = 1000;
pub const DEFAULT_EVAL_TOY: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub epoch: usize,
    /// Mean batch loss; for RLOO the negated mean reward.
    pub loss: f64,
    pub mean_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub version: String,
    pub vocab_hash: String,
    pub trainable_parameters: usize,
    pub train_examples: usize,
    pub eval_examples: usize,
    pub steps: usize,
    /// Full-training-set objective before the first and after the last
    /// step (SFT and DPO; absent for RLOO).
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub checkpoint: String,
}

/// State captured when training meets a non-finite value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub config_hash: String,
    pub epoch: usize,
    pub step: usize,
    pub loss: Option<f64>,
    pub message: String,
    pub batch: Vec<usize>,
    pub parameter_max_abs: f64,
}

/// Held-out material for evaluating the trained policy.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSplit {
    Problems(Vec<CountdownProblem>),
    Prompts(Vec<Vec<TokenId>>),
}

impl EvalSplit {
    pub fn len(&self) -> usize {
        match self {
            EvalSplit::Problems(p) => p.len(),
            EvalSplit::Prompts(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub initial: PolicyParameters,
    pub params: PolicyParameters,
    pub timeline: Vec<MetricRecord>,
    pub manifest: Manifest,
    pub eval: EvalSplit,
}

impl ExperimentConfig {
    pub fn eval_count(&self) -> usize {
        if self.eval_size > 0 {
            return self.eval_size;
        }
        match self.task {
            Task::Countdown => DEFAULT_EVAL_COUNTDOWN,
            Task::ToyPreference => DEFAULT_EVAL_TOY,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: match self.optimizer {
                OptimizerName::Sgd => OptimizerKind::Sgd,
                OptimizerName::Adam => OptimizerKind::adam(),
            },
            learning_rate: self.learning_rate,
        }
    }
}

fn read_file(path: &str) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Countdown train and held-out problems. Generated data comes from one
/// draw split in order, so the two sets never share a problem.
pub fn countdown_data(cfg: &ExperimentConfig) -> Result<(Vec<crate::countdown::GeneratedProblem>, Vec<CountdownProblem>), HarnessError> {
    let range = cfg.min_value..=cfg.max_value;
    let seed = derive_seed(cfg.seed, &[stream::DATA]);
    match &cfg.train_data {
        None => {
            let all = generate_problems(&GeneratorConfig::new(cfg.train_size + cfg.eval_count(), cfg.operands, range, seed))?;
            let (train, eval) = all.split_at(cfg.train_size);
            Ok((train.to_vec(), eval.iter().map(|g| g.problem.clone()).collect()))
        }
        Some(path) => {
            let records = read_problems(&read_file(path)?)?;
            let train = records
                .into_iter()
                .map(|r| {
                    let solution = r
                        .solution
                        .or_else(|| crate::countdown::solve(&r.problem, crate::countdown::EvalMode::LENIENT))
                        .ok_or_else(|| HarnessError::Config(format!("training problem {:?} has no solution", r.problem)))?;
                    Ok(crate::countdown::GeneratedProblem {
                        problem: r.problem,
                        solution,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            let eval_seed = derive_seed(cfg.seed, &[stream::EVAL]);
            let eval = generate_problems(&GeneratorConfig::new(cfg.eval_count(), cfg.operands, cfg.min_value..=cfg.max_value, eval_seed))?;
            Ok((train, eval.into_iter().map(|g| g.problem).collect()))
        }
    }
}

fn initial_policy(cfg: &ExperimentConfig, vocab: &Arc<Vocabulary>) -> Result<PolicyParameters, HarnessError> {
    match &cfg.init_checkpoint {
        Some(path) => {
            let p = load_policy(&read_file(path)?).map_err(|e| HarnessError::Checkpoint(e.to_string()))?;
            if p.vocab().tokens() != vocab.tokens() {
                return Err(HarnessError::Config("init_checkpoint vocabulary differs from the task vocabulary".into()));
            }
            if p.context() != cfg.context {
                return Err(HarnessError::Config(format!(
                    "init_checkpoint has context {}, config says {}",
                    p.context(),
                    cfg.context
                )));
            }
            Ok(p)
        }
        None => Ok(PolicyParameters::zeros(vocab.clone(), cfg.context)),
    }
}

enum Reward {
    Teacher(ToyPreferenceTask),
    Verifier(Vec<CountdownProblem>),
    Model(RewardParameters),
}

impl Reward {
    fn score(&self, vocab: &Vocabulary, i: usize, x: &[TokenId], y: &[TokenId]) -> Result<f64, String> {
        match self {
            Reward::Teacher(task) => task.teacher_score(x, y).map_err(|e| e.to_string()),
            Reward::Verifier(problems) => {
                let text = response_text(vocab, y).map_err(|e| e.to_string())?;
                Ok(if verify(&problems[i], &text, VerifyOptions::default()).accepted { 1.0 } else { 0.0 })
            }
            Reward::Model(rm) => rm.score(x, y).map_err(|e| e.to_string()),
        }
    }
}

enum Data {
    Demos(Vec<Demonstration>),
    Pairs(Vec<PreferencePair>),
    Prompts(Vec<Vec<TokenId>>, Reward),
}

impl Data {
    fn len(&self) -> usize {
        match self {
            Data::Demos(d) => d.len(),
            Data::Pairs(p) => p.len(),
            Data::Prompts(p, _) => p.len(),
        }
    }
}

fn build_data(cfg: &ExperimentConfig, vocab: &Arc<Vocabulary>, init: &PolicyParameters) -> Result<(Data, EvalSplit), HarnessError> {
    let pair_seed = derive_seed(cfg.seed, &[stream::PAIRS]);
    match cfg.task {
        Task::Countdown => {
            let (train, eval) = countdown_data(cfg)?;
            let data = match cfg.method {
                Method::Sft => Data::Demos(countdown_demonstrations(vocab, &train, pair_seed)),
                Method::Dpo => Data::Pairs(countdown_pairs(vocab, &train, pair_seed)),
                Method::Rloo => {
                    let prompts = train.iter().map(|g| countdown_prompt(vocab, &g.problem)).collect();
                    let problems = train.into_iter().map(|g| g.problem).collect();
                    let reward = match cfg.reward {
                        Some(RewardSource::Verifier) => Reward::Verifier(problems),
                        _ => Reward::Model(load_reward_model(cfg)?),
                    };
                    Data::Prompts(prompts, reward)
                }
            };
            Ok((data, EvalSplit::Problems(eval)))
        }
        Task::ToyPreference => {
            let task = ToyPreferenceTask::new();
            let eval = task.prompts(cfg.eval_count(), derive_seed(cfg.seed, &[stream::EVAL]));
            let prompts = task.prompts(cfg.train_size, derive_seed(cfg.seed, &[stream::DATA]));
            let pairs = |init: &PolicyParameters| -> Result<Vec<PreferencePair>, HarnessError> {
                match &cfg.train_data {
                    Some(path) => Ok(read_pairs(vocab, &read_file(path)?)?),
                    None => Ok(task.preference_pairs(init, &prompts, cfg.temperature, cfg.label_temperature, pair_seed)?),
                }
            };
            let data = match cfg.method {
                Method::Sft => Data::Demos(pairs(init)?.into_iter().map(|p| (p.prompt, p.chosen)).collect()),
                Method::Dpo => Data::Pairs(pairs(init)?),
                Method::Rloo => {
                    let reward = match cfg.reward {
                        Some(RewardSource::Teacher) => Reward::Teacher(task.clone()),
                        _ => Reward::Model(load_reward_model(cfg)?),
                    };
                    Data::Prompts(prompts.clone(), reward)
                }
            };
            Ok((data, EvalSplit::Prompts(eval)))
        }
    }
}

fn load_reward_model(cfg: &ExperimentConfig) -> Result<RewardParameters, HarnessError> {
    let path = cfg.reward_checkpoint.as_deref().expect("validated: reward model needs a checkpoint");
    Ok(load_reward(&read_file(path)?)?)
}

fn max_abs(p: &PolicyParameters) -> f64 {
    p.trainable().iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Runs one experiment in memory. Deterministic given the config.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainingRun, HarnessError> {
    cfg.validate()?;
    let vocab = Arc::new(Vocabulary::countdown());
    let base = initial_policy(cfg, &vocab)?;
    let (data, eval) = build_data(cfg, &vocab, &base)?;
    if data.len() == 0 {
        return Err(HarnessError::Config("training set is empty".into()));
    }
    let mut params = if cfg.adapter {
        base.clone()
            .with_adapter(cfg.adapter_rank, 0.01, cfg.frozen_base, derive_seed(cfg.seed, &[stream::INIT]))
    } else {
        base.clone()
    };
    let initial = params.clone();
    let reference = DpoConfig::new(cfg.beta, Arc::new(base))?;
    let hash = cfg.hash();

    let full_loss = |p: &PolicyParameters| -> Result<Option<f64>, HarnessError> {
        Ok(match &data {
            Data::Demos(d) => Some(sft_loss(p, d)?.0),
            Data::Pairs(pairs) => Some(dpo_batch_loss(p, &reference, pairs)?.0),
            Data::Prompts(..) => None,
        })
    };
    let initial_loss = full_loss(&params)?;

    let mut opt = OptimizerState::new(cfg.optimizer_config(), params.trainable_len());
    let mut shuffle_rng = seeded(derive_seed(cfg.seed, &[stream::SHUFFLE]));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut timeline = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            let diagnostic = |loss: Option<f64>, message: String, p: &PolicyParameters| {
                HarnessError::NonFinite(Box::new(Diagnostic {
                    config_hash: hash.clone(),
                    epoch,
                    step,
                    loss,
                    message,
                    batch: batch.to_vec(),
                    parameter_max_abs: max_abs(p),
                }))
            };
            let (loss, grad, mean_reward) = match &data {
                Data::Demos(d) => {
                    let items: Vec<Demonstration> = batch.iter().map(|&i| d[i].clone()).collect();
                    let (l, g) = sft_loss(&params, &items)?;
                    (l, g, None)
                }
                Data::Pairs(pairs) => {
                    let items: Vec<PreferencePair> = batch.iter().map(|&i| pairs[i].clone()).collect();
                    let (l, g) = dpo_batch_loss(&params, &reference, &items)?;
                    (l, g, None)
                }
                Data::Prompts(prompts, reward) => {
                    let p = &params;
                    let estimates = batch
                        .par_iter()
                        .map(|&i| {
                            let rc = RlooConfig {
                                samples: cfg.rloo_samples,
                                sample: SampleConfig {
                                    temperature: cfg.temperature,
                                    max_len: cfg.max_len,
                                    rng_seed: derive_seed(cfg.seed, &[stream::RLOO, epoch as u64, i as u64]),
                                },
                                convention: GradientConvention::Descent,
                                baseline: Baseline::LeaveOneOut,
                            };
                            rloo_gradient(p, |x, y| reward.score(&vocab, i, x, y), &prompts[i], &rc)
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let mut g = PolicyGradient::zeros_for(&params);
                    let mut r = 0.0;
                    for est in &estimates {
                        g.add_scaled(&est.grad, 1.0 / batch.len() as f64);
                        r += est.rewards.iter().sum::<f64>() / est.rewards.len() as f64;
                    }
                    let r = r / batch.len() as f64;
                    (-r, g, Some(r))
                }
            };
            if !loss.is_finite() {
                return Err(diagnostic(Some(loss), "non-finite loss".into(), &params));
            }
            if let Err(e) = opt.step(&mut params, &grad.flatten()) {
                return Err(diagnostic(Some(loss), e.to_string(), &params));
            }
            if step % cfg.log_every == 0 {
                timeline.push(MetricRecord {
                    step,
                    epoch,
                    loss,
                    mean_reward,
                });
            }
            step += 1;
        }
    }
    let final_loss = full_loss(&params)?;
    if let Some(l) = final_loss.filter(|l| !l.is_finite()) {
        return Err(HarnessError::NonFinite(Box::new(Diagnostic {
            config_hash: hash,
            epoch: cfg.epochs,
            step,
            loss: Some(l),
            message: "non-finite final loss".into(),
            batch: vec![],
            parameter_max_abs: max_abs(&params),
        })));
    }
    let manifest = Manifest {
        config_hash: hash,
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        vocab_hash: vocab.hash(),
        trainable_parameters: params.trainable_len(),
        train_examples: data.len(),
        eval_examples: eval.len(),
        steps: step,
        initial_loss,
        final_loss,
        checkpoint: super::POLICY_FILE.to_string(),
    };
    Ok(TrainingRun {
        initial,
        params,
        timeline,
        manifest,
        eval,
    })
}
