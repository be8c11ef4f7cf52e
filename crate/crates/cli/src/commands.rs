use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};

use qbe_core::corpus::{
    load_feature_dir, load_ground_truth, load_lexicon, load_queries, read_scores, validate_split_dir, write_scores,
    CorpusPaths, FeatureMatrix, Lexicon, ScoreTable, Split,
};
use qbe_core::dtw::{dtw_search, DtwCollection, DtwFeatures};
use qbe_core::encoder::{load_checkpoint, save_checkpoint, EmbeddingModel};
use qbe_core::eval::{bench_dtw, bench_embedding, evaluate, same_different_eval, Backend, PairScoring};
use qbe_core::io::write_atomic;
use qbe_core::search::{fuse_scores, search, SegmentIndex};
use qbe_core::synth::generate;
use qbe_core::training::{train_span_stage, train_word_stage, TrainOutcome};

use crate::config::{parse_ratio, RunConfig};
use crate::{Cli, Command, DtwFlags, LatticeFlags, SearchFlags};

struct Ctx {
    config: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        write_atomic(&p, text.as_bytes())?;
        Ok(p)
    }
}

fn apply_band(config: &mut RunConfig, flags: &SearchFlags) -> Result<()> {
    if let Some(r) = &flags.min_ratio {
        config.search.min_ratio = parse_ratio(r)?;
    }
    if let Some(r) = &flags.max_ratio {
        config.search.max_ratio = parse_ratio(r)?;
    }
    Ok(())
}

fn apply_lattice(config: &mut RunConfig, flags: &LatticeFlags) {
    if let Some(s) = flags.shift {
        config.search.shift = s;
    }
    if let Some(s) = &flags.sizes {
        config.search.sizes = s.clone();
    }
}

fn apply_dtw(config: &mut RunConfig, flags: &DtwFlags) {
    if let Some(w) = flags.dtw_window {
        config.dtw.window = w;
    }
    if let Some(s) = flags.dtw_shift {
        config.dtw.shift = s;
    }
    if let Some(f) = flags.dtw_features {
        config.dtw.features = f;
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match &cli.command {
        Command::Index { lattice, .. } => apply_lattice(&mut config, lattice),
        Command::Search { band, .. } => apply_band(&mut config, band)?,
        Command::DtwSearch { dtw, .. } => apply_dtw(&mut config, dtw),
        Command::Bench { band, dtw, .. } => {
            apply_band(&mut config, band)?;
            apply_dtw(&mut config, dtw);
        }
        _ => {}
    }
    Ok(config)
}

fn model(path: &Path) -> Result<EmbeddingModel> {
    load_checkpoint(path).with_context(|| format!("loading model {}", path.display()))
}

fn lexicon(corpus: &Path) -> Result<Lexicon> {
    Ok(load_lexicon(CorpusPaths::new(corpus).lexicon())?)
}

fn split(dir: &Path, lexicon: &Lexicon) -> Result<Split> {
    Split::load(dir, lexicon).with_context(|| format!("loading split {}", dir.display()))
}

fn optional_split(dir: &Path, lexicon: &Lexicon) -> Result<Option<Split>> {
    if dir.is_dir() {
        split(dir, lexicon).map(Some)
    } else {
        Ok(None)
    }
}

fn collection(dir: &Path) -> Result<Vec<FeatureMatrix>> {
    load_feature_dir(dir.join("feats")).with_context(|| format!("loading collection {}", dir.display()))
}

fn query_features(dir: &Path) -> Result<Vec<FeatureMatrix>> {
    Ok(load_queries(dir)
        .with_context(|| format!("loading queries {}", dir.display()))?
        .into_iter()
        .map(|q| q.features)
        .collect())
}

fn finish_training(ctx: &Ctx, outcome: &TrainOutcome, checkpoint: &str) -> Result<()> {
    let path = ctx.path(checkpoint);
    save_checkpoint(&outcome.model, &path)?;
    ctx.write("train_log.tsv", &outcome.log_text())?;
    if let (Some(a), Some(b)) = (outcome.heldout_initial, outcome.heldout_final) {
        log::info!("held-out loss {a:.4} -> {b:.4}");
    }
    println!("{}", path.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let config = effective_config(&cli)?;
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = Ctx {
        config,
        out: cli.out_dir.clone(),
    };
    ctx.write("config.toml", &ctx.config.to_toml())?;
    let cfg = &ctx.config;

    match &cli.command {
        Command::Validate { corpus } => {
            let lex = lexicon(corpus)?;
            let paths = CorpusPaths::new(corpus);
            let mut text = String::new();
            let mut clean = true;
            for (name, dir) in [("train", paths.train()), ("dev", paths.dev()), ("search", paths.search())] {
                if !dir.is_dir() {
                    continue;
                }
                let report = validate_split_dir(&dir, &lex)?;
                clean &= report.is_empty();
                for line in report.to_string().lines() {
                    text.push_str(&format!("{name}\t{line}\n"));
                }
            }
            ctx.write("violations.txt", &text)?;
            print!("{text}");
            if !clean {
                eprintln!("corpus has violations");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::TrainAwe { corpus } => {
            let lex = lexicon(corpus)?;
            let paths = CorpusPaths::new(corpus);
            let train = split(&paths.train(), &lex)?;
            let dev = optional_split(&paths.dev(), &lex)?;
            let outcome = train_word_stage(&train, dev.as_ref(), &lex, &cfg.model_config(), &cfg.train_config())?;
            finish_training(&ctx, &outcome, "awe.ckpt")?;
        }
        Command::TrainAse { corpus, init } => {
            let lex = lexicon(corpus)?;
            let paths = CorpusPaths::new(corpus);
            let word = model(init)?;
            let train = split(&paths.train(), &lex)?;
            let dev = optional_split(&paths.dev(), &lex)?;
            let outcome = train_span_stage(
                &word,
                cfg.model.span_layers,
                &train,
                dev.as_ref(),
                &lex,
                &cfg.train_config(),
            )?;
            finish_training(&ctx, &outcome, "ase.ckpt")?;
        }
        Command::Index {
            model: m,
            collection: dir,
            ..
        } => {
            let m = model(m)?;
            let index = SegmentIndex::build(&collection(dir)?, &m, &cfg.lattice()?)?;
            let path = ctx.path("index.idx");
            index.save(&path)?;
            log::info!("indexed {} segments from {} utterances", index.len(), index.utterances().len());
            println!("{}", path.display());
        }
        Command::Search {
            model: m,
            index,
            queries,
            ..
        } => {
            let m = model(m)?;
            let index = SegmentIndex::load(index).with_context(|| format!("loading index {}", index.display()))?;
            let table = search(&m, &query_features(queries)?, &index, &cfg.search_config()?)?;
            let path = ctx.path("scores.tsv");
            write_scores(&table, &path)?;
            println!("{}", path.display());
        }
        Command::DtwSearch {
            queries,
            collection: dir,
            model: m,
            ..
        } => {
            let m = m.as_deref().map(model).transpose()?;
            let table = dtw_search(
                &query_features(queries)?,
                &collection(dir)?,
                &cfg.dtw_config()?,
                cfg.dtw.features,
                m.as_ref(),
            )?;
            let path = ctx.path("dtw_scores.tsv");
            write_scores(&table, &path)?;
            println!("{}", path.display());
        }
        Command::Fuse { tables } => {
            let tables = tables
                .iter()
                .map(|p| read_scores(p).with_context(|| format!("reading scores {}", p.display())))
                .collect::<Result<Vec<ScoreTable>>>()?;
            let path = ctx.path("fused.tsv");
            write_scores(&fuse_scores(&tables)?, &path)?;
            println!("{}", path.display());
        }
        Command::Evaluate { scores, truth, beta } => {
            let table = read_scores(scores)?;
            let truth = load_ground_truth(truth)?;
            let report = evaluate(&table, &truth, beta.unwrap_or(cfg.eval.beta))?;
            let text = report.to_text();
            ctx.write("report.txt", &text)?;
            print!("{text}");
        }
        Command::Discriminate {
            corpus,
            split: name,
            scoring,
            model: m,
            tokens,
        } => {
            let lex = lexicon(corpus)?;
            let data = split(&corpus.join(name), &lex)?;
            let m = m.as_deref().map(model).transpose()?;
            let scoring = match scoring {
                Backend::Embedding => PairScoring::Embedding,
                Backend::DtwRaw => PairScoring::Dtw(DtwFeatures::Raw),
                Backend::DtwHidden => PairScoring::Dtw(DtwFeatures::Hidden),
            };
            let limit = match tokens.unwrap_or(cfg.train.dev_tokens) {
                0 => None,
                n => Some(n),
            };
            let r = same_different_eval(&data, m.as_ref(), scoring, limit)?;
            let text = format!(
                "ap\tpairs\tpositives\tprior\n{:.6}\t{}\t{}\t{:.6}\n",
                r.ap,
                r.pairs,
                r.positives,
                r.prior()
            );
            ctx.write("discrimination.tsv", &text)?;
            print!("{text}");
        }
        Command::Bench {
            queries,
            backend,
            model: m,
            index,
            collection: dir,
            ..
        } => {
            let q = query_features(queries)?;
            let m = m.as_deref().map(model).transpose()?;
            let result = match backend {
                Backend::Embedding => {
                    let (Some(m), Some(index)) = (&m, index) else {
                        bail!("the embedding backend needs --model and --index");
                    };
                    let index = SegmentIndex::load(index)?;
                    bench_embedding(m, &q, &index, &cfg.search_config()?)?
                }
                Backend::DtwRaw | Backend::DtwHidden => {
                    let Some(dir) = dir else {
                        bail!("DTW backends need --collection");
                    };
                    let features = if *backend == Backend::DtwRaw {
                        DtwFeatures::Raw
                    } else {
                        DtwFeatures::Hidden
                    };
                    let prepared = DtwCollection::build(&collection(dir)?, features, m.as_ref())?;
                    bench_dtw(&q, &prepared, &cfg.dtw_config()?, features, m.as_ref())?
                }
            };
            let line = format!("{}\n", result.to_line());
            ctx.write("bench.tsv", &line)?;
            print!("{line}");
        }
        Command::Synth => {
            let (_, corpus) = generate(&cfg.synth_config())?;
            corpus.write(&ctx.out)?;
            println!("{}", ctx.out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
