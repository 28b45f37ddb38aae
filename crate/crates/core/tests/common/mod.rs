#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng as _;

use alignlab::policy::{PolicyParameters, TokenId, Vocabulary};
use alignlab::rng::{seeded, Rng};
use alignlab::trainable::Trainable;

/// Every value reachable by some expression that uses each of `numbers`
/// exactly once. Enumerates permutations × tree shapes × operator choices
/// directly, independent of the library solver's pool search.
pub fn brute_force_values(numbers: &[u64], strict: bool) -> BTreeSet<i64> {
    let mut out = BTreeSet::new();
    let mut idx: Vec<usize> = (0..numbers.len()).collect();
    permute(&mut idx, 0, &mut |perm| {
        let leaves: Vec<i128> = perm.iter().map(|&i| numbers[i] as i128).collect();
        for v in trees(&leaves, strict) {
            if let Ok(v) = i64::try_from(v) {
                out.insert(v);
            }
        }
    });
    out
}

fn permute(a: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == a.len() {
        f(a);
        return;
    }
    for i in k..a.len() {
        a.swap(k, i);
        permute(a, k + 1, f);
        a.swap(k, i);
    }
}

/// Values of all binary trees with the given leaf order.
fn trees(leaves: &[i128], strict: bool) -> Vec<i128> {
    if leaves.len() == 1 {
        return vec![leaves[0]];
    }
    let mut out = Vec::new();
    for split in 1..leaves.len() {
        let left = trees(&leaves[..split], strict);
        let right = trees(&leaves[split..], strict);
        for &a in &left {
            for &b in &right {
                let mut push = |v: i128| {
                    if !(strict && v < 0) {
                        out.push(v);
                    }
                };
                push(a + b);
                push(a - b);
                push(a * b);
                if b != 0 && a % b == 0 {
                    push(a / b);
                }
            }
        }
    }
    out
}

/// `|a − n| / max(|a|, |n|, floor)` for every coordinate.
pub fn relative_errors(analytic: &[f64], numeric: &[f64], floor: f64) -> Vec<f64> {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .collect()
}

/// Central differences of `f` at the trainable vector of `p`.
pub fn central_differences<P: Trainable + Clone>(p: &P, h: f64, f: impl Fn(&P) -> f64) -> Vec<f64> {
    let theta = p.trainable();
    let mut q = p.clone();
    (0..theta.len())
        .map(|i| {
            let mut t = theta.clone();
            t[i] = theta[i] + h;
            q.set_trainable(&t).unwrap();
            let up = f(&q);
            t[i] = theta[i] - h;
            q.set_trainable(&t).unwrap();
            let down = f(&q);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Small random policy: vocabulary of 3–7 tokens, context 1–3, weights of
/// standard deviation 0.5.
pub fn small_policy(rng: &mut Rng) -> PolicyParameters {
    let v = Arc::new(Vocabulary::synthetic(rng.random_range(3..=7)).unwrap());
    let context = rng.random_range(1..=3);
    PolicyParameters::random(v, context, 0.5, rng.random())
}

pub fn random_tokens(vocab: &Vocabulary, rng: &mut Rng, len: std::ops::RangeInclusive<usize>) -> Vec<TokenId> {
    let n = rng.random_range(len);
    (0..n).map(|_| TokenId(rng.random_range(0..vocab.len()) as u16)).collect()
}

pub fn rng(seed: u64) -> Rng {
    seeded(seed)
}

pub const FD_STEP: f64 = 1e-5;
/// Magnitude below which a coordinate is compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-4;

fn max_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    relative_errors(analytic, numeric, FD_FLOOR).into_iter().fold(0.0, f64::max)
}

fn prompt_and_response(p: &PolicyParameters, rng: &mut Rng) -> (Vec<TokenId>, Vec<TokenId>) {
    let x = random_tokens(p.vocab(), rng, 1..=5);
    let y = random_tokens(p.vocab(), rng, 1..=4);
    (x, y)
}

/// Worst relative error of `grad_logprob` on one random instance.
pub fn fd_logprob(seed: u64) -> f64 {
    let mut r = rng(seed);
    let p = small_policy(&mut r);
    let (x, y) = prompt_and_response(&p, &mut r);
    let analytic = alignlab::policy::grad_logprob(&p, &x, &y).unwrap().flatten();
    let numeric = central_differences(&p, FD_STEP, |q| alignlab::policy::logprob(q, &x, &y).unwrap().total);
    max_error(&analytic, &numeric)
}

/// As [`fd_logprob`] through a low-rank adapter (base frozen or not).
pub fn fd_adapter(seed: u64, frozen_base: bool) -> f64 {
    let mut r = rng(seed);
    let p = small_policy(&mut r);
    let rank = r.random_range(1..=3);
    let mut p = p.with_adapter(rank, 0.5, frozen_base, r.random());
    let b = p.adapter().unwrap().b.clone();
    p.adapter_mut().unwrap().b = b.mapv(|_| r.random_range(-0.5..0.5));
    let (x, y) = prompt_and_response(&p, &mut r);
    let analytic = alignlab::policy::grad_logprob(&p, &x, &y).unwrap().flatten();
    let numeric = central_differences(&p, FD_STEP, |q| alignlab::policy::logprob(q, &x, &y).unwrap().total);
    max_error(&analytic, &numeric)
}

pub fn fd_sft(seed: u64) -> f64 {
    let mut r = rng(seed);
    let p = small_policy(&mut r);
    let batch: Vec<_> = (0..r.random_range(1..=4)).map(|_| prompt_and_response(&p, &mut r)).collect();
    let (_, g) = alignlab::objectives::sft_loss(&p, &batch).unwrap();
    let numeric = central_differences(&p, FD_STEP, |q| alignlab::objectives::sft_loss(q, &batch).unwrap().0);
    max_error(&g.flatten(), &numeric)
}

pub fn fd_dpo(seed: u64) -> f64 {
    use alignlab::objectives::{dpo_loss, DpoConfig};
    let mut r = rng(seed);
    let p = small_policy(&mut r);
    let reference = PolicyParameters::random(p.vocab().clone(), p.context(), 0.5, r.random());
    let cfg = DpoConfig::new(r.random_range(0.05..2.0), Arc::new(reference)).unwrap();
    let (x, chosen) = prompt_and_response(&p, &mut r);
    let mut rejected = random_tokens(p.vocab(), &mut r, 1..=4);
    while rejected == chosen {
        rejected = random_tokens(p.vocab(), &mut r, 1..=4);
    }
    let pair = alignlab::reward::PreferencePair {
        prompt: x,
        chosen,
        rejected,
    };
    let analytic = dpo_loss(&p, &cfg, &pair).unwrap().grad.flatten();
    let numeric = central_differences(&p, FD_STEP, |q| dpo_loss(q, &cfg, &pair).unwrap().loss);
    max_error(&analytic, &numeric)
}

fn random_reward(r: &mut Rng, kind: alignlab::reward::RewardKind) -> alignlab::reward::RewardParameters {
    let v = Arc::new(Vocabulary::synthetic(r.random_range(3..=7)).unwrap());
    let enc = alignlab::reward::RewardEncoder::new(v);
    let w = (0..enc.dim()).map(|_| r.random_range(-0.5..0.5)).collect();
    alignlab::reward::RewardParameters::with_weights(kind, enc, w).unwrap()
}

pub fn fd_bt(seed: u64) -> f64 {
    use alignlab::reward::{bt_loss, PreferencePair, RewardKind};
    let mut r = rng(seed);
    let rp = random_reward(&mut r, RewardKind::Siamese);
    let v = rp.encoder().vocab().clone();
    let pair = PreferencePair {
        prompt: random_tokens(&v, &mut r, 1..=5),
        chosen: random_tokens(&v, &mut r, 1..=5),
        rejected: random_tokens(&v, &mut r, 1..=5),
    };
    let (_, g) = bt_loss(&rp, &pair).unwrap();
    let numeric = central_differences(&rp, FD_STEP, |q| bt_loss(q, &pair).unwrap().0);
    max_error(&g, &numeric)
}

pub fn fd_pointwise(seed: u64) -> f64 {
    use alignlab::reward::{pointwise_loss, LabeledExample, RewardKind};
    let mut r = rng(seed);
    let rp = random_reward(&mut r, RewardKind::Pointwise);
    let v = rp.encoder().vocab().clone();
    let ex = LabeledExample {
        prompt: random_tokens(&v, &mut r, 1..=5),
        response: random_tokens(&v, &mut r, 1..=5),
        gold: r.random_range(-2.0..2.0),
    };
    let (_, g) = pointwise_loss(&rp, &ex).unwrap();
    let numeric = central_differences(&rp, FD_STEP, |q| pointwise_loss(q, &ex).unwrap().0);
    max_error(&g, &numeric)
}

/// Every response the sampler can emit with `max_len` tokens: stops at
/// `<EOS>` or when the length bound is reached.
pub fn enumerate_responses(vocab: &Vocabulary, max_len: usize) -> Vec<Vec<TokenId>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<TokenId>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in frontier {
            for t in vocab.ids() {
                let mut y = prefix.clone();
                y.push(t);
                if t == vocab.eos() {
                    out.push(y);
                } else {
                    next.push(y);
                }
            }
        }
        frontier = next;
    }
    out.extend(frontier);
    out
}

/// Enumerable RLOO instance: V = 3, responses of length ≤ 2, N = 2.
pub struct RlooToy {
    pub policy: PolicyParameters,
    pub prompt: Vec<TokenId>,
    pub responses: Vec<Vec<TokenId>>,
    pub rewards: Vec<f64>,
}

impl RlooToy {
    pub fn new(seed: u64) -> Self {
        let mut r = rng(seed);
        let v = Arc::new(Vocabulary::synthetic(3).unwrap());
        let policy = PolicyParameters::random(v.clone(), 2, 0.7, r.random());
        let prompt = random_tokens(&v, &mut r, 1..=4);
        let responses = enumerate_responses(&v, 2);
        let rewards = responses.iter().map(|_| r.random_range(-2.0..2.0)).collect();
        RlooToy {
            policy,
            prompt,
            responses,
            rewards,
        }
    }

    pub fn probabilities(&self, p: &PolicyParameters) -> Vec<f64> {
        self.responses
            .iter()
            .map(|y| alignlab::policy::logprob(p, &self.prompt, y).unwrap().total.exp())
            .collect()
    }

    pub fn expected_reward(&self, p: &PolicyParameters) -> f64 {
        self.probabilities(p).iter().zip(&self.rewards).map(|(q, r)| q * r).sum()
    }

    /// `∇E[r]` by Richardson-extrapolated central differences of the exactly
    /// enumerated expectation.
    pub fn true_gradient(&self) -> Vec<f64> {
        let h = 1e-3;
        let d1 = central_differences(&self.policy, h, |q| self.expected_reward(q));
        let d2 = central_differences(&self.policy, h / 2.0, |q| self.expected_reward(q));
        d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect()
    }

    /// Exact expectation of the N = 2 estimator over all outcome pairs.
    pub fn estimator_expectation(&self) -> Vec<f64> {
        use alignlab::objectives::{rloo_from_samples, Baseline, GradientConvention};
        let probs = self.probabilities(&self.policy);
        let mut acc = vec![0.0; self.policy.trainable_len()];
        for i in 0..self.responses.len() {
            for j in 0..self.responses.len() {
                let est = rloo_from_samples(
                    &self.policy,
                    &self.prompt,
                    vec![self.responses[i].clone(), self.responses[j].clone()],
                    vec![self.rewards[i], self.rewards[j]],
                    GradientConvention::Ascent,
                    Baseline::LeaveOneOut,
                )
                .unwrap();
                let w = probs[i] * probs[j];
                for (a, g) in acc.iter_mut().zip(est.grad.flatten()) {
                    *a += w * g;
                }
            }
        }
        acc
    }

    /// Largest absolute gap between the estimator mean and `∇E[r]`.
    pub fn max_gap(&self) -> f64 {
        self.estimator_expectation()
            .iter()
            .zip(self.true_gradient())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
