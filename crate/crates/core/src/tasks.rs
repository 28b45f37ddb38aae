//! Prompt and response formats for the two tasks, plus synthetic
//! preference data.
//!
//! Countdown prompts read `<NUMS>2 3 7 2 3 7 2 3 7 2 3 7<TGT>13<SEP>`;
//! responses are the bare expression followed by `<EOS>`. Toy-preference prompts are
//! `<NUMS>` + 3 to 5 digits + `<SEP>`, and a fixed linear teacher over the
//! reward encoder defines response quality.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::countdown::{solve, verify, CountdownProblem, EvalMode, Expression, GeneratedProblem, Op, VerifyOptions};
use crate::numeric::sigmoid;
use crate::policy::{sample_with_rng, PolicyError, PolicyParameters, TokenId, VocabError, Vocabulary, NUMS, SEP, TGT};
use crate::reward::encoder::{BIAS, OVERLAP};
use crate::reward::{LabeledExample, PreferencePair, RewardEncoder, RewardError, RewardKind, RewardParameters};
use crate::rng::{derive_seed, seeded, Rng};

/// How often the number list is written in a Countdown prompt.
///
/// The policy sees the prompt as a token-count bag, which cannot tell the
/// digits of the numbers from the digits of the target. Repeating the list
/// makes number digits outweigh target digits in the bag.
pub const NUMBER_REPEATS: usize = 4;

/// Reward-model features matched to the Countdown prompt layout.
pub fn countdown_reward_encoder(vocab: Arc<Vocabulary>) -> RewardEncoder {
    RewardEncoder::new(vocab).with_prompt_repeats(NUMBER_REPEATS)
}

pub fn countdown_prompt_text(problem: &CountdownProblem) -> String {
    let nums: Vec<String> = problem.numbers().iter().map(u64::to_string).collect();
    let list = vec![nums.join(" "); NUMBER_REPEATS].join(" ");
    format!("{NUMS}{list}{TGT}{}{SEP}", problem.target())
}

pub fn countdown_prompt(vocab: &Vocabulary, problem: &CountdownProblem) -> Vec<TokenId> {
    vocab
        .encode(&countdown_prompt_text(problem))
        .expect("countdown prompts use the countdown alphabet")
}

/// Tokenizes a response and appends `<EOS>`.
pub fn response_tokens(vocab: &Vocabulary, text: &str) -> Result<Vec<TokenId>, VocabError> {
    let mut t = vocab.encode(text)?;
    t.push(vocab.eos());
    Ok(t)
}

/// Renders a sampled response, dropping a trailing `<EOS>`.
pub fn response_text(vocab: &Vocabulary, tokens: &[TokenId]) -> Result<String, VocabError> {
    let body = match tokens.last() {
        Some(&t) if t == vocab.eos() => &tokens[..tokens.len() - 1],
        _ => tokens,
    };
    vocab.decode(body)
}

fn count_ops(e: &Expression) -> usize {
    match e {
        Expression::Num(_) => 0,
        Expression::Binary(_, l, r) => 1 + count_ops(l) + count_ops(r),
    }
}

fn replace_leaf(e: &Expression, target: &mut usize, value: u64) -> Expression {
    match e {
        Expression::Num(n) => {
            let out = if *target == 0 { Expression::Num(value) } else { Expression::Num(*n) };
            *target = target.wrapping_sub(1);
            out
        }
        Expression::Binary(op, l, r) => {
            let l = replace_leaf(l, target, value);
            let r = replace_leaf(r, target, value);
            Expression::binary(*op, l, r)
        }
    }
}

/// Rewrites the `target`-th operator node (pre-order): either swaps its
/// operator or collapses it to one child.
fn rewrite_op(e: &Expression, target: &mut usize, f: &dyn Fn(Op, &Expression, &Expression) -> Expression) -> Expression {
    match e {
        Expression::Num(n) => Expression::Num(*n),
        Expression::Binary(op, l, r) => {
            if *target == 0 {
                *target = usize::MAX;
                return f(*op, l, r);
            }
            *target -= 1;
            let l = rewrite_op(l, target, f);
            let r = rewrite_op(r, target, f);
            Expression::binary(*op, l, r)
        }
    }
}

/// Every expression tree over `leaves` in the given order, left-deep
/// shapes first, operators in [`Op::ALL`] order.
pub fn trees_in_order(leaves: &[u64]) -> Vec<Expression> {
    if let [n] = leaves {
        return vec![Expression::Num(*n)];
    }
    let mut out = Vec::new();
    for split in (1..leaves.len()).rev() {
        let rights = trees_in_order(&leaves[split..]);
        for l in trees_in_order(&leaves[..split]) {
            for r in &rights {
                for op in Op::ALL {
                    out.push(Expression::binary(op, l.clone(), r.clone()));
                }
            }
        }
    }
    out
}

/// Every verifying tree (strict mode) whose numbers appear in descending
/// order. A bag-of-tokens policy cannot see prompt order, so a
/// value-ordered answer style is learnable where an arbitrary one is not.
pub fn styled_solutions(problem: &CountdownProblem) -> Vec<Expression> {
    let mut leaves = problem.sorted_numbers();
    leaves.reverse();
    let strict = VerifyOptions {
        strict: true,
        lenient: false,
    };
    trees_in_order(&leaves)
        .into_iter()
        .filter(|e| verify(problem, &e.to_string(), strict).accepted)
        .collect()
}

/// SFT target: a uniformly drawn styled solution, or the solver's witness
/// when no descending arrangement works. Drawing uniformly keeps the
/// operator distribution of the demonstrations broad.
pub fn demonstration(problem: &CountdownProblem, rng: &mut Rng) -> Option<Expression> {
    styled_solutions(problem)
        .choose(rng)
        .cloned()
        .or_else(|| solve(problem, EvalMode::STRICT))
}

/// Perturbs a correct solution into one the verifier rejects: a changed
/// number, a changed operator, or a dropped sub-expression.
pub fn corrupt_solution(problem: &CountdownProblem, solution: &Expression, rng: &mut Rng) -> Option<Expression> {
    let leaves = solution.operand_count();
    let ops = count_ops(solution);
    let hi = problem.numbers().iter().copied().max().unwrap_or(1) + 5;
    for _ in 0..32 {
        let candidate = match rng.random_range(0..3) {
            0 => {
                let mut idx = rng.random_range(0..leaves);
                let old = solution.leaves()[idx];
                let mut value = rng.random_range(1..=hi);
                if value == old {
                    value = if old > 1 { old - 1 } else { old + 1 };
                }
                replace_leaf(solution, &mut idx, value)
            }
            1 if ops > 0 => {
                let mut idx = rng.random_range(0..ops);
                let shift = rng.random_range(1..4);
                rewrite_op(solution, &mut idx, &|op, l, r| {
                    let pos = Op::ALL.iter().position(|&o| o == op).unwrap_or(0);
                    Expression::binary(Op::ALL[(pos + shift) % 4], l.clone(), r.clone())
                })
            }
            _ if ops > 0 => {
                let mut idx = rng.random_range(0..ops);
                let keep_left = rng.random_bool(0.5);
                rewrite_op(solution, &mut idx, &|_, l, r| if keep_left { l.clone() } else { r.clone() })
            }
            _ => continue,
        };
        if !verify(problem, &candidate.to_string(), VerifyOptions::default()).accepted {
            return Some(candidate);
        }
    }
    None
}

/// SFT pairs: prompt and house-style solution per problem.
pub fn countdown_demonstrations(vocab: &Vocabulary, problems: &[GeneratedProblem], seed: u64) -> Vec<(Vec<TokenId>, Vec<TokenId>)> {
    let mut rng = seeded(seed);
    problems
        .iter()
        .filter_map(|g| {
            let good = demonstration(&g.problem, &mut rng).unwrap_or_else(|| g.solution.clone());
            Some((countdown_prompt(vocab, &g.problem), response_tokens(vocab, &good.to_string()).ok()?))
        })
        .collect()
}

/// House-style solution vs a corruption of it, one pair per problem.
pub fn countdown_pairs(vocab: &Vocabulary, problems: &[GeneratedProblem], seed: u64) -> Vec<PreferencePair> {
    let mut rng = seeded(seed);
    problems
        .iter()
        .filter_map(|g| {
            let good = demonstration(&g.problem, &mut rng).unwrap_or_else(|| g.solution.clone());
            let bad = corrupt_solution(&g.problem, &good, &mut rng)?;
            Some(PreferencePair {
                prompt: countdown_prompt(vocab, &g.problem),
                chosen: response_tokens(vocab, &good.to_string()).ok()?,
                rejected: response_tokens(vocab, &bad.to_string()).ok()?,
            })
        })
        .collect()
}

/// Verifier-labeled responses: each problem contributes its solution
/// (gold 1) and a corruption (gold 0).
pub fn countdown_labeled(vocab: &Vocabulary, problems: &[GeneratedProblem], seed: u64) -> Vec<LabeledExample> {
    countdown_pairs(vocab, problems, seed)
        .into_iter()
        .flat_map(|p| {
            [
                LabeledExample {
                    prompt: p.prompt.clone(),
                    response: p.chosen,
                    gold: 1.0,
                },
                LabeledExample {
                    prompt: p.prompt,
                    response: p.rejected,
                    gold: 0.0,
                },
            ]
        })
        .collect()
}

/// Instruction-following stand-in with a known linear gold reward.
#[derive(Debug, Clone)]
pub struct ToyPreferenceTask {
    pub vocab: Arc<Vocabulary>,
    pub teacher: RewardParameters,
    pub max_len: usize,
}

pub const TOY_MAX_LEN: usize = 8;

impl ToyPreferenceTask {
    /// Teacher: one point per response digit that echoes a prompt digit,
    /// 0.1 per digit emitted, 0.5 base. Always positive.
    pub fn new() -> Self {
        let vocab = Arc::new(Vocabulary::countdown());
        let encoder = RewardEncoder::new(vocab.clone());
        let mut w = vec![0.0; encoder.dim()];
        w[encoder.tail(OVERLAP)] = 1.0;
        w[encoder.tail(BIAS)] = 0.5;
        for t in vocab.ids().filter(|&t| vocab.is_digit(t)) {
            w[encoder.bag(t)] = 0.1;
        }
        let teacher = RewardParameters::with_weights(RewardKind::Teacher, encoder, w).expect("teacher weights sized to encoder");
        ToyPreferenceTask {
            vocab,
            teacher,
            max_len: TOY_MAX_LEN,
        }
    }

    pub fn prompts(&self, count: usize, seed: u64) -> Vec<Vec<TokenId>> {
        let mut rng = seeded(seed);
        let digits: Vec<TokenId> = self.vocab.ids().filter(|&t| self.vocab.is_digit(t)).collect();
        let (nums, sep) = (self.vocab.id(NUMS), self.vocab.id(SEP));
        (0..count)
            .map(|_| {
                let k = rng.random_range(3..=5);
                let mut p: Vec<TokenId> = nums.into_iter().collect();
                p.extend((0..k).map(|_| *digits.choose(&mut rng).expect("digits present")));
                p.extend(sep);
                p
            })
            .collect()
    }

    pub fn teacher_score(&self, x: &[TokenId], y: &[TokenId]) -> Result<f64, RewardError> {
        self.teacher.score(x, y)
    }

    /// Two distinct policy samples per prompt, ordered by a Bradley-Terry
    /// draw on the teacher gap: `P(a ≻ b) = σ((r_a − r_b) / label_temperature)`.
    pub fn preference_pairs(&self, policy: &PolicyParameters, prompts: &[Vec<TokenId>], temperature: f64, label_temperature: f64, seed: u64) -> Result<Vec<PreferencePair>, TaskError> {
        let mut out = Vec::with_capacity(prompts.len());
        for (i, x) in prompts.iter().enumerate() {
            let mut rng = seeded(derive_seed(seed, &[i as u64]));
            let a = sample_with_rng(policy, x, temperature, self.max_len, &mut rng)?;
            let mut b = a.clone();
            for _ in 0..16 {
                b = sample_with_rng(policy, x, temperature, self.max_len, &mut rng)?;
                if b != a {
                    break;
                }
            }
            if b == a {
                continue;
            }
            let gap = self.teacher_score(x, &a)? - self.teacher_score(x, &b)?;
            let a_wins = rng.random::<f64>() < sigmoid(gap / label_temperature);
            let (chosen, rejected) = if a_wins { (a, b) } else { (b, a) };
            out.push(PreferencePair {
                prompt: x.clone(),
                chosen,
                rejected,
            });
        }
        Ok(out)
    }

    /// Policy samples with teacher score plus Gaussian noise as targets.
    pub fn labeled_examples(&self, policy: &PolicyParameters, prompts: &[Vec<TokenId>], temperature: f64, noise: f64, seed: u64) -> Result<Vec<LabeledExample>, TaskError> {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, noise).map_err(|e| TaskError::Config(e.to_string()))?;
        let mut out = Vec::with_capacity(prompts.len());
        for (i, x) in prompts.iter().enumerate() {
            let mut rng = seeded(derive_seed(seed, &[i as u64]));
            let y = sample_with_rng(policy, x, temperature, self.max_len, &mut rng)?;
            let gold = self.teacher_score(x, &y)? + normal.sample(&mut rng);
            out.push(LabeledExample {
                prompt: x.clone(),
                response: y,
                gold,
            });
        }
        Ok(out)
    }
}

impl Default for ToyPreferenceTask {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("{0}")]
    Config(String),
}
