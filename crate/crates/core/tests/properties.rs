mod common;

use std::sync::Arc;

use proptest::prelude::*;

use alignlab::countdown::{
    generate_problems, parse_expression, solve, verify, CountdownProblem, EvalMode, Expression, GeneratorConfig, Op, OperandCount,
    VerdictReason, VerifyOptions,
};
use alignlab::harness::{recount_winrate, wilson_interval, ExperimentConfig, WinRecord, WILSON_Z};
use alignlab::inference::{select, Candidate};
use alignlab::numeric::{sigmoid, softplus};
use alignlab::objectives::{dpo_loss, dpo_loss_from_margin, rloo_from_samples, Baseline, DpoConfig, GradientConvention};
use alignlab::policy::{load_policy, logprob, next_token_logprobs, save_policy, PolicyParameters, TokenId, Vocabulary};
use alignlab::reward::{load_reward, save_reward, PreferencePair, RewardEncoder, RewardKind, RewardParameters};

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![Just(Op::Add), Just(Op::Sub), Just(Op::Mul), Just(Op::Div)]
}

fn expression(max_leaf: u64) -> impl Strategy<Value = Expression> {
    let leaf = (1..=max_leaf).prop_map(Expression::Num);
    leaf.prop_recursive(4, 16, 2, |inner| (op(), inner.clone(), inner).prop_map(|(o, l, r)| Expression::binary(o, l, r)))
}

/// Reference evaluator: `None` on inexact or zero division, or (strict) a
/// negative intermediate.
fn eval(e: &Expression, strict: bool) -> Option<i128> {
    let v = match e {
        Expression::Num(n) => *n as i128,
        Expression::Binary(o, l, r) => {
            let (a, b) = (eval(l, strict)?, eval(r, strict)?);
            match o {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => {
                    if b == 0 || a % b != 0 {
                        return None;
                    }
                    a / b
                }
            }
        }
    };
    (!(strict && v < 0)).then_some(v)
}

fn leaves(e: &Expression) -> Vec<u64> {
    match e {
        Expression::Num(n) => vec![*n],
        Expression::Binary(_, l, r) => {
            let mut v = leaves(l);
            v.extend(leaves(r));
            v
        }
    }
}

fn problem() -> impl Strategy<Value = CountdownProblem> {
    (prop::collection::vec(1u64..=12, 3..=4), 1u64..=60).prop_map(|(n, t)| CountdownProblem::new(n, t).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_then_parse_is_identity(e in expression(99)) {
        prop_assert_eq!(parse_expression(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn evaluation_matches_reference(e in expression(20), strict in any::<bool>()) {
        let got = e.evaluate(if strict { EvalMode::STRICT } else { EvalMode::LENIENT }).ok().map(i128::from);
        prop_assert_eq!(got, eval(&e, strict));
    }

    #[test]
    fn accepted_answers_use_every_number_once_and_hit_the_target(p in problem(), e in expression(12), strict in any::<bool>()) {
        let v = verify(&p, &e.to_string(), VerifyOptions { strict, lenient: false });
        prop_assert_eq!(v.accepted, v.reason == VerdictReason::Ok);
        let mut used = leaves(&e);
        used.sort_unstable();
        let multiset_ok = used == p.sorted_numbers();
        if v.accepted {
            prop_assert!(multiset_ok);
            prop_assert_eq!(eval(&e, strict), Some(p.target() as i128));
        } else if multiset_ok && eval(&e, strict) == Some(p.target() as i128) {
            prop_assert!(false, "correct answer {} rejected as {:?}", e, v.reason);
        }
    }

    #[test]
    fn solver_agrees_with_brute_force(p in problem(), strict in any::<bool>()) {
        let mode = if strict { EvalMode::STRICT } else { EvalMode::LENIENT };
        let reachable = common::brute_force_values(p.numbers(), strict).contains(&(p.target() as i64));
        let found = solve(&p, mode);
        prop_assert_eq!(found.is_some(), reachable);
        if let Some(w) = found {
            let opts = VerifyOptions { strict, lenient: false };
            prop_assert!(verify(&p, &w.to_string(), opts).accepted);
        }
    }

    #[test]
    fn generated_problems_are_valid_and_solvable(seed in any::<u64>(), operands in prop_oneof![Just(OperandCount::Three), Just(OperandCount::Four), Just(OperandCount::Mixed)]) {
        let gen = generate_problems(&GeneratorConfig::new(8, operands, 1..=9, seed)).unwrap();
        for g in &gen {
            let k = g.problem.numbers().len();
            prop_assert!((3..=4).contains(&k));
            prop_assert!(g.problem.numbers().iter().all(|&n| (1..=9).contains(&n)));
            prop_assert!(g.problem.target() >= 1);
            prop_assert!(verify(&g.problem, &g.solution.to_string(), VerifyOptions::default()).accepted);
        }
    }

    #[test]
    fn sigmoid_and_softplus_identities(x in -700.0f64..700.0) {
        prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() <= 1e-15);
        prop_assert!((softplus(x) - softplus(-x) - x).abs() <= 1e-12 * x.abs().max(1.0));
        prop_assert!(softplus(x) >= 0.0 && softplus(x).is_finite());
    }

    #[test]
    fn dpo_two_term_form_matches_margin_form(beta in 0.01f64..5.0, dp in -20.0f64..20.0, dn in -20.0f64..20.0) {
        let (a, b) = (beta * dp, beta * dn);
        let m = a.max(b);
        let two_term = -(a - m - ((a - m).exp() + (b - m).exp()).ln());
        prop_assert!((two_term - dpo_loss_from_margin(beta, dp - dn)).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn next_token_distributions_are_normalized(seed in any::<u64>(), len in 0usize..5) {
        let mut r = common::rng(seed);
        let p = common::small_policy(&mut r);
        let x = common::random_tokens(p.vocab(), &mut r, 1..=5);
        let prefix = common::random_tokens(p.vocab(), &mut r, len..=len);
        let total: f64 = next_token_logprobs(&p, &x, &prefix).unwrap().iter().map(|l| l.exp()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn policy_checkpoint_roundtrip_is_exact(seed in any::<u64>(), adapter in any::<bool>()) {
        let mut r = common::rng(seed);
        let mut p = common::small_policy(&mut r);
        if adapter {
            p = p.with_adapter(2, 0.3, true, seed);
        }
        prop_assert_eq!(load_policy(&save_policy(&p)).unwrap(), p);
    }

    #[test]
    fn reward_checkpoint_roundtrip_is_exact(w in prop::collection::vec(-1e3f64..1e3, 3 * 22 + 6)) {
        let enc = RewardEncoder::new(Arc::new(Vocabulary::countdown()));
        let rp = RewardParameters::with_weights(RewardKind::Siamese, enc, w).unwrap();
        prop_assert_eq!(load_reward(&save_reward(&rp)).unwrap(), rp);
    }

    #[test]
    fn dpo_is_ln2_at_the_reference(seed in any::<u64>(), beta in 0.01f64..5.0) {
        let mut r = common::rng(seed);
        let p = common::small_policy(&mut r);
        let cfg = DpoConfig::new(beta, Arc::new(p.clone())).unwrap();
        let pair = PreferencePair {
            prompt: vec![TokenId(2)],
            chosen: vec![TokenId(0), TokenId(1)],
            rejected: vec![TokenId(1)],
        };
        prop_assert!((dpo_loss(&p, &cfg, &pair).unwrap().loss - std::f64::consts::LN_2).abs() <= 1e-12);
    }

    #[test]
    fn rloo_shift_invariance_is_bit_exact(seed in any::<u64>(), rewards in prop::collection::vec(-64i32..64, 2..6), shift in -1000i32..1000) {
        let mut r = common::rng(seed);
        let p = common::small_policy(&mut r);
        let x = common::random_tokens(p.vocab(), &mut r, 1..=3);
        let ys: Vec<Vec<TokenId>> = rewards.iter().map(|_| common::random_tokens(p.vocab(), &mut r, 1..=3)).collect();
        // dyadic rewards so that shifted values stay exactly representable
        let base: Vec<f64> = rewards.iter().map(|&v| v as f64 / 8.0).collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + shift as f64).collect();
        let a = rloo_from_samples(&p, &x, ys.clone(), base, GradientConvention::Descent, Baseline::LeaveOneOut).unwrap();
        let b = rloo_from_samples(&p, &x, ys, shifted, GradientConvention::Descent, Baseline::LeaveOneOut).unwrap();
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        prop_assert_eq!(bits(a.grad.flatten()), bits(b.grad.flatten()));
    }

    #[test]
    fn rloo_equal_rewards_give_zero(seed in any::<u64>(), n in 2usize..6, reward in -10.0f64..10.0) {
        let mut r = common::rng(seed);
        let p = common::small_policy(&mut r);
        let x = common::random_tokens(p.vocab(), &mut r, 1..=3);
        let ys: Vec<Vec<TokenId>> = (0..n).map(|_| common::random_tokens(p.vocab(), &mut r, 1..=3)).collect();
        let est = rloo_from_samples(&p, &x, ys, vec![reward; n], GradientConvention::Descent, Baseline::LeaveOneOut).unwrap();
        prop_assert!(est.grad.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn selection_is_first_maximum(scores in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), -2.0f64..2.0], 1..12)) {
        let cands: Vec<Candidate> = scores
            .iter()
            .map(|&s| Candidate { tokens: vec![], score: s, critic_error: None })
            .collect();
        let i = select(&cands, cands.len());
        prop_assert!(scores.iter().all(|&s| s <= scores[i]));
        prop_assert!(scores[..i].iter().all(|&s| s < scores[i]));
    }

    #[test]
    fn winrate_is_antisymmetric(outcomes in prop::collection::vec(prop_oneof![Just(0.0), Just(0.5), Just(1.0)], 1..300)) {
        let rec = |o: f64| WinRecord {
            prompt: 0,
            response_a: vec![],
            response_b: vec![],
            score_a: None,
            score_b: None,
            outcome: o,
        };
        let ab: Vec<WinRecord> = outcomes.iter().map(|&o| rec(o)).collect();
        let ba: Vec<WinRecord> = outcomes.iter().map(|&o| rec(1.0 - o)).collect();
        prop_assert_eq!(recount_winrate(&ab).0 + recount_winrate(&ba).0, 1.0);
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(successes in 0usize..500, extra in 0usize..500) {
        let n = successes + extra;
        prop_assume!(n > 0);
        let p = successes as f64 / n as f64;
        let (lo, hi) = wilson_interval(p, n, WILSON_Z);
        prop_assert!((0.0..=p + 1e-15).contains(&lo));
        prop_assert!(hi >= p - 1e-15 && hi <= 1.0 + 1e-15);
    }

    #[test]
    fn config_toml_roundtrip(seed in any::<u64>(), epochs in 1usize..500, lr in 1e-6f64..1.0, context in 1usize..12) {
        let cfg = ExperimentConfig { seed, epochs, learning_rate: lr, context, ..Default::default() };
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}

#[test]
fn logprob_is_linear_in_tokens_for_the_uniform_policy() {
    let v = Arc::new(Vocabulary::countdown());
    let p = PolicyParameters::zeros(v.clone(), 4);
    let y = v.encode("1+2*3<EOS>").unwrap();
    let lp = logprob(&p, &v.encode("<NUMS>1 2 3<SEP>").unwrap(), &y).unwrap();
    assert!((lp.total + y.len() as f64 * (v.len() as f64).ln()).abs() < 1e-12);
}
