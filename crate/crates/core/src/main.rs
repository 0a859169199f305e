use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use prefsqa::backbone::{BackboneRegistry, FeatureStore};
use prefsqa::datamodel::{load_manifest, load_pairs, save_pairs, save_predictions};
use prefsqa::eval::{collect_runs, evaluate_pairs, render_report, save_report, ReportFormat};
use prefsqa::pairgen::{build_pairs, PairGenConfig, PairMode, Scenario};
use prefsqa::pipeline::{prepare_data, run_scenario, DataConfig, ExperimentConfig};
use prefsqa::synth::{generate, write_corpus, SynthConfig};
use prefsqa::training::{Checkpoint, LabelCondition};
use prefsqa::{Error, Result};

#[derive(Parser)]
#[command(name = "prefsqa", version, about = "Pairwise speech quality assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic noisy-tone corpus and a matching experiment file.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Build labelled pairs from a manifest.
    BuildPairs {
        #[arg(long)]
        mode: PairMode,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        min_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        drop_ties: bool,
    },
    /// Train one scenario under one label condition.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        label_condition: LabelCondition,
        /// Train only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a pair file with a trained checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Headline accuracy over non-tied pairs only.
        #[arg(long)]
        exclude_ties: bool,
    },
    /// Summarise a directory of training runs.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
    },
}

fn synth(out: &Path, seed: u64) -> Result<()> {
    let corpus = generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;
    write_corpus(&corpus, out)?;
    let cfg = ExperimentConfig::toy(DataConfig {
        train_manifest: "train.csv".into(),
        dev_manifest: "dev.csv".into(),
        test_manifest: "test.csv".into(),
    });
    let path = out.join("experiment.toml");
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
    println!(
        "wrote {} train / {} dev / {} test utterances and {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        path.display()
    );
    Ok(())
}

fn train(config: &Path, scenario: Scenario, condition: LabelCondition, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    cfg.train.label_condition = condition;
    if let Some(seed) = seed {
        cfg.train.seeds = vec![seed];
    }
    let data = prepare_data(&cfg, &BackboneRegistry::default())?;
    let summary = run_scenario(&cfg, &data, scenario, true)?;
    for s in &summary.seeds {
        match (&s.acc, &s.error) {
            (Some(acc), _) => println!("seed {}: ACC {acc:.4} (best epoch {})", s.seed, s.best_epoch.unwrap_or(0)),
            (None, Some(e)) => println!("seed {}: failed: {e}", s.seed),
            (None, None) => println!("seed {}: no result", s.seed),
        }
    }
    match summary.mean_acc {
        Some(m) => println!("{condition} {scenario}: mean ACC {m:.4}"),
        None => println!("{condition} {scenario}: no seed finished"),
    }
    if summary.complete {
        Ok(())
    } else {
        Err(Error::Empty("one or more seeds failed".into()))
    }
}

fn evaluate(checkpoint: &Path, pairs: &Path, manifest: &Path, out: &Path, exclude_ties: bool) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let utts = load_manifest(manifest, false)?;
    let pairs = load_pairs(pairs, Some(&utts))?;
    let used: BTreeSet<&str> = pairs.iter().flat_map(|p| [p.x_id.as_str(), p.y_id.as_str()]).collect();
    let utts: Vec<_> = utts.into_iter().filter(|u| used.contains(u.utt_id.as_str())).collect();
    let backbones = BackboneRegistry::default().build_pair(&ckpt.meta.backbone)?;
    let mut store = FeatureStore::new();
    store.extend_from_manifest(utts.iter(), manifest.parent().unwrap_or(Path::new(".")), &backbones)?;
    let (mut report, preds) = evaluate_pairs(&ckpt.model, &store, &pairs, &utts)?;
    report.scenario = ckpt.meta.scenario.map(|s| s.to_string());
    report.label_condition = Some(ckpt.meta.train.label_condition);
    report.seed = Some(ckpt.meta.seed);
    save_predictions(&out.join("predictions.csv"), &preds)?;
    save_report(&out.join("report.json"), &report)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    if exclude_ties {
        println!(
            "ACC (ties excluded) {} over {} pairs; ACC (all) {:.4}",
            fmt(report.acc_excluding_ties),
            report.n_pairs - report.n_ties,
            report.acc
        );
    } else {
        println!(
            "ACC {:.4} over {} pairs ({} tied); ACC without ties {}",
            report.acc,
            report.n_pairs,
            report.n_ties,
            fmt(report.acc_excluding_ties)
        );
    }
    println!("SRCC utterance {} system {}", fmt(report.utt_srcc), fmt(report.sys_srcc));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, seed } => synth(&out, seed),
        Command::BuildPairs {
            mode,
            manifest,
            out,
            eps,
            min_samples,
            seed,
            drop_ties,
        } => {
            let cfg = PairGenConfig {
                eps,
                min_samples,
                rng_seed: seed,
                keep_tied_pairs: !drop_ties,
            };
            cfg.validate()?;
            let utts = load_manifest(&manifest, false)?;
            let pairs = build_pairs(mode, &utts, &cfg)?;
            save_pairs(&out, &pairs)?;
            info!("{} pairs from {} utterances", pairs.len(), utts.len());
            println!("{}", pairs.len());
            Ok(())
        }
        Command::Train {
            config,
            scenario,
            label_condition,
            seed,
        } => train(&config, scenario, label_condition, seed),
        Command::Evaluate {
            checkpoint,
            pairs,
            manifest,
            out,
            exclude_ties,
        } => evaluate(&checkpoint, &pairs, &manifest, &out, exclude_ties),
        Command::Report { runs, format } => {
            let rows = collect_runs(&runs)?;
            print!("{}", render_report(&rows, format)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
