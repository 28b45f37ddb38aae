mod common;

use std::sync::Arc;

use rand::Rng as _;

use alignlab::countdown::{generate_problems, solve, verify, CountdownProblem, EvalMode, GeneratorConfig, OperandCount, VerifyOptions};
use alignlab::harness::{run_training, ExperimentConfig, Method, Task};
use alignlab::objectives::{dpo_loss_from_margin, OptimizerConfig, OptimizerKind};
use alignlab::policy::{logprob, merge_adapter, save_policy, PolicyParameters, TokenId, Vocabulary};
use alignlab::reward::{
    bt_loss, dataset_loss, pairwise_accuracy, train_reward, PreferencePair, RewardDataset, RewardEncoder, RewardKind, RewardParameters,
    RewardTrainConfig,
};
use alignlab::tasks::{countdown_labeled, countdown_pairs, countdown_reward_encoder};

fn softplus_minus_one() -> f64 {
    (1.0 + (-1.0f64).exp()).ln()
}

#[test]
fn solver_matches_exhaustive_enumeration_on_fixed_cases() {
    let p = CountdownProblem::new(vec![2, 3, 7], 13).unwrap();
    assert!(common::brute_force_values(&[2, 3, 7], false).contains(&13));
    let w = solve(&p, EvalMode::LENIENT).expect("witness");
    assert!(verify(&p, &w.to_string(), VerifyOptions::default()).accepted);

    let ones = common::brute_force_values(&[1, 1, 1], false);
    assert_eq!(ones.iter().max(), Some(&3));
    assert!(!ones.contains(&5));
    assert_eq!(solve(&CountdownProblem::new(vec![1, 1, 1], 5).unwrap(), EvalMode::LENIENT), None);

    let fours = CountdownProblem::new(vec![4, 4, 4], 12).unwrap();
    assert!(solve(&fours, EvalMode::LENIENT).is_some());
}

#[test]
fn generated_sample_is_solvable_per_brute_force() {
    let gen = generate_problems(&GeneratorConfig::new(300, OperandCount::Mixed, 1..=9, 11)).unwrap();
    for g in &gen {
        let reachable = common::brute_force_values(g.problem.numbers(), false);
        assert!(reachable.contains(&(g.problem.target() as i64)), "{:?}", g.problem);
        assert!(solve(&g.problem, EvalMode::LENIENT).is_some());
    }
}

#[test]
fn enumerable_toy_distribution_sums_to_one() {
    let v = Arc::new(Vocabulary::synthetic(3).unwrap());
    let p = PolicyParameters::random(v.clone(), 2, 1.0, 4);
    let x = vec![TokenId(2), TokenId(0)];
    let mut fixed_length = 0.0;
    for a in v.ids() {
        for b in v.ids() {
            fixed_length += logprob(&p, &x, &[a, b]).unwrap().total.exp();
        }
    }
    assert!((fixed_length - 1.0).abs() < 1e-12);
    let stopping: f64 = common::enumerate_responses(&v, 2)
        .iter()
        .map(|y| logprob(&p, &x, y).unwrap().total.exp())
        .sum();
    assert!((stopping - 1.0).abs() < 1e-12);
}

#[test]
fn merged_adapter_preserves_logprobs() {
    let mut r = common::rng(21);
    for _ in 0..50 {
        let p = common::small_policy(&mut r);
        let mut p = p.with_adapter(r.random_range(1..=4), 0.5, true, r.random());
        let b = p.adapter().unwrap().b.clone();
        p.adapter_mut().unwrap().b = b.mapv(|_| r.random_range(-1.0..1.0));
        let merged = merge_adapter(&p).unwrap();
        let x = common::random_tokens(p.vocab(), &mut r, 1..=5);
        let y = common::random_tokens(p.vocab(), &mut r, 1..=5);
        let (a, b) = (logprob(&p, &x, &y).unwrap().total, logprob(&merged, &x, &y).unwrap().total);
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn unit_margin_losses_equal_softplus_of_minus_one() {
    let expected = softplus_minus_one();
    assert!((expected - 0.313262).abs() < 1e-6);
    assert!((dpo_loss_from_margin(1.0, 1.0) - expected).abs() < 1e-15);

    let v = Arc::new(Vocabulary::countdown());
    let enc = RewardEncoder::new(v.clone());
    let mut r = common::rng(5);
    let w: Vec<f64> = (0..enc.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
    let pair = PreferencePair {
        prompt: v.encode("<NUMS>1 2 3<SEP>").unwrap(),
        chosen: v.encode("1+2+3<EOS>").unwrap(),
        rejected: v.encode("12-(<EOS>").unwrap(),
    };
    let rp = RewardParameters::with_weights(RewardKind::Siamese, enc.clone(), w.clone()).unwrap();
    let gap = rp.score(&pair.prompt, &pair.chosen).unwrap() - rp.score(&pair.prompt, &pair.rejected).unwrap();
    // scores are linear in w, so rescaling sets the gap to exactly one
    let unit = RewardParameters::with_weights(RewardKind::Siamese, enc, w.iter().map(|x| x / gap).collect()).unwrap();
    assert!((bt_loss(&unit, &pair).unwrap().0 - expected).abs() < 1e-12);
}

#[test]
fn rloo_estimator_is_unbiased_on_enumerable_policy() {
    for seed in 0..5 {
        let toy = common::RlooToy::new(seed);
        let gap = toy.max_gap();
        assert!(gap <= 1e-8, "seed {seed}: gap {gap:e}");
    }
}

fn sgd(epochs: usize, batch_size: usize) -> RewardTrainConfig {
    RewardTrainConfig {
        kind: RewardKind::Siamese,
        optimizer: OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.05,
        },
        epochs,
        batch_size,
        shuffle: false,
        seed: 0,
    }
}

fn countdown_reward_data(count: usize, seed: u64) -> (Vec<alignlab::countdown::GeneratedProblem>, Arc<Vocabulary>) {
    let gen = generate_problems(&GeneratorConfig::new(count, OperandCount::Mixed, 1..=9, seed)).unwrap();
    (gen, Arc::new(Vocabulary::countdown()))
}

#[test]
fn duplicated_dataset_matches_double_epochs_under_sgd() {
    let (gen, v) = countdown_reward_data(64, 3);
    let pairs = countdown_pairs(&v, &gen, 9);
    let doubled: Vec<PreferencePair> = pairs.iter().chain(&pairs).cloned().collect();
    let held = RewardDataset::Pairs(pairs[..8].to_vec());
    let once = train_reward(countdown_reward_encoder(v.clone()), &RewardDataset::Pairs(pairs.clone()), &held, &sgd(4, 16)).unwrap();
    let twice = train_reward(countdown_reward_encoder(v), &RewardDataset::Pairs(doubled), &held, &sgd(2, 16)).unwrap();
    assert_eq!(once.params.w, twice.params.w);
}

#[test]
fn siamese_separates_linearly_separable_pairs() {
    let v = Arc::new(Vocabulary::countdown());
    let enc = RewardEncoder::new(v.clone());
    let mut r = common::rng(17);
    let truth: Vec<f64> = (0..enc.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
    let teacher = RewardParameters::with_weights(RewardKind::Teacher, enc.clone(), truth).unwrap();
    let mut pairs = Vec::new();
    while pairs.len() < 1200 {
        let prompt = common::random_tokens(&v, &mut r, 3..=8);
        let a = common::random_tokens(&v, &mut r, 1..=8);
        let b = common::random_tokens(&v, &mut r, 1..=8);
        let (sa, sb) = (teacher.score(&prompt, &a).unwrap(), teacher.score(&prompt, &b).unwrap());
        if (sa - sb).abs() < 0.5 {
            continue;
        }
        let (chosen, rejected) = if sa > sb { (a, b) } else { (b, a) };
        pairs.push(PreferencePair { prompt, chosen, rejected });
    }
    let held = RewardDataset::Pairs(pairs.split_off(1000));
    let cfg = RewardTrainConfig {
        optimizer: OptimizerConfig {
            kind: OptimizerKind::adam(),
            learning_rate: 0.05,
        },
        shuffle: true,
        ..sgd(30, 32)
    };
    let trained = train_reward(enc, &RewardDataset::Pairs(pairs), &held, &cfg).unwrap();
    let acc = pairwise_accuracy(&trained.params, &held).unwrap();
    assert!(acc >= 0.95, "held-out pairwise accuracy {acc}");
}

#[test]
fn countdown_reward_models_rank_verified_answers_higher() {
    let (gen, v) = countdown_reward_data(600, 5);
    let adam = OptimizerConfig {
        kind: OptimizerKind::adam(),
        learning_rate: 0.01,
    };

    let labeled = countdown_labeled(&v, &gen, 8);
    let split = labeled.len() - 200;
    let (train, held) = (labeled[..split].to_vec(), labeled[split..].to_vec());
    let cfg = RewardTrainConfig {
        kind: RewardKind::Pointwise,
        optimizer: adam,
        shuffle: true,
        ..sgd(100, 32)
    };
    let pointwise = train_reward(countdown_reward_encoder(v.clone()), &RewardDataset::Labeled(train), &RewardDataset::Labeled(held.clone()), &cfg).unwrap();
    let acc = pointwise.report.threshold_accuracy.unwrap();
    assert!(acc >= 0.8, "thresholded accuracy {acc}");

    let mean = |gold: f64| {
        let s: Vec<f64> = held
            .iter()
            .filter(|e| e.gold == gold)
            .map(|e| pointwise.params.score(&e.prompt, &e.response).unwrap())
            .collect();
        s.iter().sum::<f64>() / s.len() as f64
    };
    assert!(mean(1.0) > mean(0.0));

    let pairs = countdown_pairs(&v, &gen, 8);
    let split = pairs.len() - 100;
    let held = RewardDataset::Pairs(pairs[split..].to_vec());
    let train = RewardDataset::Pairs(pairs[..split].to_vec());
    let siamese = train_reward(countdown_reward_encoder(v), &train, &held, &RewardTrainConfig { kind: RewardKind::Siamese, ..cfg }).unwrap();
    assert!(dataset_loss(&siamese.params, &held).unwrap() < std::f64::consts::LN_2);
    assert!(pairwise_accuracy(&siamese.params, &held).unwrap() > 0.5);
}

fn sft_config() -> ExperimentConfig {
    ExperimentConfig {
        epochs: 5,
        eval_size: 100,
        ..Default::default()
    }
}

#[test]
fn sft_lowers_training_nll() {
    let run = run_training(&sft_config()).unwrap();
    assert_eq!(run.manifest.train_examples, 1600);
    let (first, last) = (run.manifest.initial_loss.unwrap(), run.manifest.final_loss.unwrap());
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn dpo_first_batch_is_ln2() {
    let cfg = ExperimentConfig {
        task: Task::ToyPreference,
        method: Method::Dpo,
        context: 4,
        epochs: 1,
        batch_size: 16,
        train_size: 64,
        max_len: 8,
        ..Default::default()
    };
    let run = run_training(&cfg).unwrap();
    assert!((run.timeline[0].loss - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((run.manifest.initial_loss.unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let a = run_training(&sft_config()).unwrap();
    let b = run_training(&sft_config()).unwrap();
    assert_eq!(save_policy(&a.params), save_policy(&b.params));
    let bits = |r: &alignlab::harness::TrainingRun| r.timeline.iter().map(|m| m.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.manifest, b.manifest);
}
