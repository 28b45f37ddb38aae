//! Command-line driver. Every command writes under
//! `<out-root>/<hash of its arguments>/` and prints that directory.
//! Exit codes: 0 ok, 2 config, 3 data or I/O, 4 diverged training,
//! 5 audit mismatch, 6 other runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use alignlab::countdown::{generate_problems, CountdownProblem, GeneratorConfig, OperandCount, VerifyOptions};
use alignlab::harness::{
    audit_accuracy, audit_sweep, audit_winrate, candidate_records, evaluate_accuracy, read_jsonl, read_problems, train_to_dir,
    winrate, write_file, write_jsonl, write_pairs, write_problems, CandidateRecord, DecodeConfig, EvalReport, ExperimentConfig,
    HarnessError, ProblemRecord, VerdictRecord, WinRecord,
};
use alignlab::inference::{sweep, BonConfig, SweepCell, SweepConfig, SweepCritic};
use alignlab::objectives::{OptimizerConfig, OptimizerKind};
use alignlab::policy::{load_policy, PolicyParameters, TokenId, Vocabulary};
use alignlab::reward::{load_reward, save_reward, train_reward, RewardDataset, RewardEncoder, RewardKind, RewardTrainConfig};
use alignlab::rng::derive_seed;
use alignlab::tasks::{countdown_labeled, countdown_reward_encoder, countdown_pairs, countdown_prompt, response_text, ToyPreferenceTask};

#[derive(Parser)]
#[command(name = "alignlab", version, about = "Toy alignment lab: SFT, DPO, RLOO, reward models, best-of-N on Countdown")]
struct Cli {
    /// Root directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
enum TaskArg {
    Countdown,
    ToyPreference,
}

#[derive(Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum DataKind {
    Problems,
    Pairs,
}

#[derive(Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum RmKind {
    Pointwise,
    Siamese,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Generate Countdown problems or preference pairs.
    GenData {
        #[arg(long, value_enum, default_value = "countdown")]
        task: TaskArg,
        #[arg(long, value_enum, default_value = "problems")]
        kind: DataKind,
        #[arg(long, default_value_t = 1600)]
        count: usize,
        #[arg(long, default_value = "mixed")]
        operands: String,
        #[arg(long, default_value_t = 1)]
        min_value: u64,
        #[arg(long, default_value_t = 9)]
        max_value: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a policy from an experiment config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a pointwise or Siamese reward model on synthetic data.
    TrainReward {
        #[arg(long, value_enum, default_value = "countdown")]
        task: TaskArg,
        #[arg(long, value_enum, default_value = "siamese")]
        kind: RmKind,
        #[arg(long, default_value_t = 800)]
        train_size: usize,
        #[arg(long, default_value_t = 200)]
        eval_size: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Countdown solve rate of a checkpoint (greedy unless --n > 1 or --temperature > 0).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        problems: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        #[arg(long, default_value_t = 24)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        strict: bool,
    },
    /// Solve-rate grid over N and temperature with nested pools.
    BonSweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        problems: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "3,5,10")]
        ns: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.7,1.0")]
        temperatures: Vec<f64>,
        #[arg(long, default_value_t = 24)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rank candidates with this reward model instead of the verifier.
        #[arg(long)]
        reward_checkpoint: Option<PathBuf>,
    },
    /// Win rate of policy A over policy B under an exact judge.
    Winrate {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "toy-preference")]
        task: TaskArg,
        /// Countdown problems file (countdown task only).
        #[arg(long)]
        problems: Option<PathBuf>,
        /// Number of toy prompts (toy task only).
        #[arg(long, default_value_t = 200)]
        prompts: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recount a report from its raw logs.
    Audit {
        #[arg(long)]
        run: PathBuf,
    },
}

fn args_hash(cmd: &Command) -> String {
    let json = serde_json::to_string(cmd).expect("arguments serialize");
    Sha256::digest(json.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.into(),
        message: e.to_string(),
    })
}

fn load_checkpoint(path: &Path) -> Result<PolicyParameters, HarnessError> {
    load_policy(&read(path)?).map_err(|e| HarnessError::Checkpoint(format!("{}: {e}", path.display())))
}

fn load_problems(path: &Path) -> Result<Vec<CountdownProblem>, HarnessError> {
    Ok(read_problems(&read(path)?)?.into_iter().map(|r| r.problem).collect())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

fn run(cli: Cli) -> Result<PathBuf, HarnessError> {
    let dir = cli.out_root.join(args_hash(&cli.command));
    let vocab = Arc::new(Vocabulary::countdown());
    match &cli.command {
        Command::GenData {
            task,
            kind,
            count,
            operands,
            min_value,
            max_value,
            seed,
        } => {
            let operands: OperandCount = operands.parse().map_err(HarnessError::Config)?;
            match (task, kind) {
                (TaskArg::Countdown, kind) => {
                    let gen = generate_problems(&GeneratorConfig::new(*count, operands, *min_value..=*max_value, *seed))?;
                    match kind {
                        DataKind::Problems => {
                            let records: Vec<ProblemRecord> = gen.iter().map(ProblemRecord::from).collect();
                            write_file(&dir.join("problems.jsonl"), &write_problems(&records))?;
                        }
                        DataKind::Pairs => {
                            let pairs = countdown_pairs(&vocab, &gen, derive_seed(*seed, &[1]));
                            write_file(&dir.join("pairs.jsonl"), &write_pairs(&vocab, &pairs).map_err(alignlab::policy::PolicyError::from)?)?;
                        }
                    }
                }
                (TaskArg::ToyPreference, DataKind::Pairs) => {
                    let task = ToyPreferenceTask::new();
                    let init = PolicyParameters::zeros(vocab.clone(), alignlab::policy::DEFAULT_CONTEXT);
                    let prompts = task.prompts(*count, *seed);
                    let pairs = task.preference_pairs(&init, &prompts, 1.0, 1.0, derive_seed(*seed, &[1]))?;
                    write_file(&dir.join("pairs.jsonl"), &write_pairs(&vocab, &pairs).map_err(alignlab::policy::PolicyError::from)?)?;
                }
                (TaskArg::ToyPreference, DataKind::Problems) => {
                    return Err(HarnessError::Config("the toy preference task has no problem files; use --kind pairs".into()));
                }
            }
            Ok(dir)
        }
        Command::Train { config } => {
            let cfg = ExperimentConfig::from_toml(&read(config)?)?;
            train_to_dir(&cfg, &cli.out_root)
        }
        Command::TrainReward {
            task,
            kind,
            train_size,
            eval_size,
            epochs,
            batch_size,
            learning_rate,
            seed,
        } => {
            let encoder = match task {
                TaskArg::Countdown => countdown_reward_encoder(vocab.clone()),
                TaskArg::ToyPreference => RewardEncoder::new(vocab.clone()),
            };
            let (train, heldout) = reward_data(*task, *kind, &vocab, *train_size, *eval_size, *seed)?;
            let cfg = RewardTrainConfig {
                kind: match kind {
                    RmKind::Pointwise => RewardKind::Pointwise,
                    RmKind::Siamese => RewardKind::Siamese,
                },
                optimizer: OptimizerConfig {
                    kind: OptimizerKind::adam(),
                    learning_rate: *learning_rate,
                },
                epochs: *epochs,
                batch_size: *batch_size,
                shuffle: true,
                seed: *seed,
            };
            let trained = train_reward(encoder, &train, &heldout, &cfg)?;
            write_file(&dir.join("reward.json"), &save_reward(&trained.params))?;
            write_file(&dir.join("report.json"), &json(&trained.report))?;
            Ok(dir)
        }
        Command::Eval {
            checkpoint,
            problems,
            n,
            temperature,
            max_len,
            seed,
            strict,
        } => {
            let params = load_checkpoint(checkpoint)?;
            let problems = load_problems(problems)?;
            let cfg = BonConfig {
                n: *n,
                temperature: *temperature,
                rng_seed: *seed,
                max_len: *max_len,
            };
            let options = VerifyOptions {
                strict: *strict,
                lenient: false,
            };
            let (report, records) = evaluate_accuracy(&params, &problems, &cfg, options, &args_hash(&cli.command))?;
            write_file(&dir.join("report.json"), &json(&report))?;
            write_file(&dir.join("verdicts.jsonl"), &write_jsonl(&records))?;
            println!("solve_rate {:.4} [{:.4}, {:.4}] over {}", report.value, report.ci_low, report.ci_high, report.count);
            Ok(dir)
        }
        Command::BonSweep {
            checkpoint,
            problems,
            ns,
            temperatures,
            max_len,
            seed,
            reward_checkpoint,
        } => {
            let params = load_checkpoint(checkpoint)?;
            let problems = load_problems(problems)?;
            let rm = reward_checkpoint.as_ref().map(|p| read(p).and_then(|t| Ok(load_reward(&t)?))).transpose()?;
            let critic = rm.as_ref().map_or(SweepCritic::Verifier, SweepCritic::RewardModel);
            let cfg = SweepConfig {
                ns: ns.clone(),
                temperatures: temperatures.clone(),
                seed: *seed,
                max_len: *max_len,
                verify: VerifyOptions::default(),
            };
            let grid = sweep(&params, &problems, &cfg, critic)?;
            write_file(&dir.join("grid.jsonl"), &write_jsonl(&grid.cells))?;
            write_file(&dir.join("candidates.jsonl"), &write_jsonl(&candidate_records(&grid, ns, &vocab)))?;
            for c in &grid.cells {
                println!("N={:<3} T={:<5} solve_rate {:.4} ({}/{})", c.n, c.temperature, c.solve_rate, c.solved, c.total);
            }
            Ok(dir)
        }
        Command::Winrate {
            a,
            b,
            task,
            problems,
            prompts,
            temperature,
            max_len,
            seed,
        } => {
            let (pa, pb) = (load_checkpoint(a)?, load_checkpoint(b)?);
            let decode = DecodeConfig {
                temperature: *temperature,
                max_len: *max_len,
                seed: *seed,
            };
            let hash = args_hash(&cli.command);
            let (report, records) = match task {
                TaskArg::ToyPreference => {
                    let toy = ToyPreferenceTask::new();
                    let xs = toy.prompts(*prompts, derive_seed(*seed, &[1]));
                    let judge = |_: usize, x: &[TokenId], y: &[TokenId]| toy.teacher_score(x, y).map_err(|e| e.to_string());
                    winrate(&pa, &pb, &xs, &judge, &decode, &hash)?
                }
                TaskArg::Countdown => {
                    let path = problems
                        .as_ref()
                        .ok_or_else(|| HarnessError::Config("countdown winrate needs --problems".into()))?;
                    let problems = load_problems(path)?;
                    let xs: Vec<Vec<TokenId>> = problems.iter().map(|p| countdown_prompt(&vocab, p)).collect();
                    let judge = |i: usize, _: &[TokenId], y: &[TokenId]| {
                        let text = response_text(&vocab, y).map_err(|e| e.to_string())?;
                        Ok(if alignlab::countdown::verify(&problems[i], &text, VerifyOptions::default()).accepted { 1.0 } else { 0.0 })
                    };
                    winrate(&pa, &pb, &xs, &judge, &decode, &hash)?
                }
            };
            write_file(&dir.join("report.json"), &json(&report))?;
            write_file(&dir.join("records.jsonl"), &write_jsonl(&records))?;
            println!("winrate {:.4} [{:.4}, {:.4}] over {}", report.value, report.ci_low, report.ci_high, report.count);
            Ok(dir)
        }
        Command::Audit { run } => {
            audit(run)?;
            println!("audit ok: {}", run.display());
            Ok(run.clone())
        }
    }
}

fn reward_data(task: TaskArg, kind: RmKind, vocab: &Vocabulary, train: usize, eval: usize, seed: u64) -> Result<(RewardDataset, RewardDataset), HarnessError> {
    let split = |ds: RewardDataset| match ds {
        RewardDataset::Pairs(mut p) => {
            let held = p.split_off(p.len().min(train));
            (RewardDataset::Pairs(p), RewardDataset::Pairs(held))
        }
        RewardDataset::Labeled(mut l) => {
            let held = l.split_off(l.len().min(train));
            (RewardDataset::Labeled(l), RewardDataset::Labeled(held))
        }
    };
    let all = match task {
        TaskArg::Countdown => {
            // one labeled problem yields two examples
            let per = if matches!(kind, RmKind::Pointwise) { 2 } else { 1 };
            let count = (train + eval).div_ceil(per);
            let gen = generate_problems(&GeneratorConfig::new(count, OperandCount::Mixed, 1..=9, seed))?;
            match kind {
                RmKind::Siamese => RewardDataset::Pairs(countdown_pairs(vocab, &gen, derive_seed(seed, &[1]))),
                RmKind::Pointwise => RewardDataset::Labeled(countdown_labeled(vocab, &gen, derive_seed(seed, &[1]))),
            }
        }
        TaskArg::ToyPreference => {
            let toy = ToyPreferenceTask::new();
            let init = PolicyParameters::zeros(Arc::new(vocab.clone()), alignlab::policy::DEFAULT_CONTEXT);
            let prompts = toy.prompts(train + eval, seed);
            match kind {
                RmKind::Siamese => RewardDataset::Pairs(toy.preference_pairs(&init, &prompts, 1.0, 1.0, derive_seed(seed, &[1]))?),
                RmKind::Pointwise => RewardDataset::Labeled(toy.labeled_examples(&init, &prompts, 1.0, 0.1, derive_seed(seed, &[1]))?),
            }
        }
    };
    Ok(split(all))
}

fn audit(dir: &Path) -> Result<(), HarnessError> {
    let fail = |e: String| HarnessError::Audit(e);
    if dir.join("grid.jsonl").exists() {
        let cells: Vec<SweepCell> = read_jsonl(&read(&dir.join("grid.jsonl"))?)?;
        let records: Vec<CandidateRecord> = read_jsonl(&read(&dir.join("candidates.jsonl"))?)?;
        return audit_sweep(&cells, &records).map_err(fail);
    }
    let report: EvalReport = serde_json::from_str(&read(&dir.join("report.json"))?).map_err(|e| HarnessError::Audit(e.to_string()))?;
    if dir.join("verdicts.jsonl").exists() {
        let records: Vec<VerdictRecord> = read_jsonl(&read(&dir.join("verdicts.jsonl"))?)?;
        return audit_accuracy(&report, &records).map_err(fail);
    }
    if dir.join("records.jsonl").exists() {
        let records: Vec<WinRecord> = read_jsonl(&read(&dir.join("records.jsonl"))?)?;
        return audit_winrate(&report, &records).map_err(fail);
    }
    Err(HarnessError::Audit(format!("{}: no raw logs to audit", dir.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
