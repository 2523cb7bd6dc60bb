use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use debias_mf::data::{
    load_movielens, read_keep_list, read_ratings_csv, split, write_ratings_csv, MovieLensFormat, RatingDataset,
};
use debias_mf::encoder::save_params;
use debias_mf::experiment::{rmse, run_grid_on, DatasetSpec, TextDrivenSpec};
use debias_mf::factorization::{fit_sam, train, FactorModel, Variant};
use debias_mf::sam::write_weights_csv;
use debias_mf::textprep::{align_documents, read_documents};
use debias_mf::{Error, Result};

use crate::config::{clip_range, FileConfig};
use crate::{Cli, Command, EvaluateArgs, ExperimentArgs, FitSamArgs, FormatArg, IngestArgs, SynthArgs, TrainArgs};

pub fn run(cli: &Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::FitSam(a) => fit_sam_cmd(&file, a),
        Command::Train(a) => train_cmd(&file, a),
        Command::Evaluate(a) => evaluate(a),
        Command::Table2(a) => experiment(&file, a, false),
        Command::Sweep(a) => experiment(&file, a, true),
        Command::Synth(a) => synth(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn stats_line(d: &RatingDataset) -> String {
    format!(
        "m={} n={} ratings={} density={:.4}%",
        d.num_users(),
        d.num_items(),
        d.len(),
        100.0 * d.density()
    )
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let path = args
        .path
        .as_ref()
        .or(args.data.dataset.as_ref())
        .ok_or_else(|| Error::InvalidArgument("ingest needs a rating file".into()))?;
    let keep = args.data.keep_list.as_deref().map(read_keep_list).transpose()?;
    let format = args.data.format.unwrap_or(FormatArg::Ml100k);
    let (dataset, extra) = match format {
        FormatArg::Csv => (read_ratings_csv(path, None)?, String::new()),
        FormatArg::Ml100k | FormatArg::Ml1m => {
            let f = if format == FormatArg::Ml1m {
                MovieLensFormat::Ml1m
            } else {
                MovieLensFormat::Ml100k
            };
            let load = load_movielens(path, f, keep.as_ref())?;
            let extra = format!(" duplicates={} filtered={}", load.duplicates, load.filtered);
            (load.dataset, extra)
        }
    };
    println!("{}{extra}", stats_line(&dataset));
    let Some(out) = &args.out else {
        return Ok(());
    };
    create_dir(out)?;
    write_ratings_csv(&dataset, &out.join("ratings.csv"))?;
    for (name, labels) in [("users.csv", dataset.user_labels()), ("items.csv", dataset.item_labels())] {
        let mut body = String::from("index,raw_id\n");
        for (k, id) in labels.iter().enumerate() {
            let _ = writeln!(body, "{k},{id}");
        }
        write_text(&out.join(name), &body)?;
    }
    if let Some(corpus) = &args.data.corpus {
        let docs = read_documents(corpus)?;
        let (aligned, missing) = align_documents(dataset.item_labels(), &docs);
        if missing > 0 {
            log::warn!("{missing} items have no document");
        }
        let mut body = String::new();
        for (k, doc) in aligned.iter().enumerate() {
            let _ = writeln!(body, "{k}\t{}", doc.replace(['\t', '\n'], " "));
        }
        write_text(&out.join("documents.tsv"), &body)?;
    }
    Ok(())
}

fn fit_sam_cmd(file: &FileConfig, args: &FitSamArgs) -> Result<()> {
    let loaded = file.dataset(&args.data)?.load()?;
    let corpus = loaded
        .corpus
        .as_ref()
        .ok_or_else(|| Error::Missing("fit-sam needs item text; pass --corpus".into()))?;
    let config = file.train_config(&args.model, args.seed)?;
    let fitted = fit_sam(&loaded.ratings, corpus, &config)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_weights_csv(fitted.model.weights(), &args.out)?;
    println!(
        "objective {:.6} -> {:.6} after {} iterations ({:?})",
        fitted.trace[0],
        fitted.trace[fitted.trace.len() - 1],
        fitted.iterations,
        fitted.stop
    );
    Ok(())
}

/// What `evaluate` needs to rebuild a trained model.
#[derive(Debug, Serialize, Deserialize)]
struct ModelManifest {
    variant: Variant,
    d: usize,
    lambda_u: f64,
    lambda_v: f64,
    num_users: usize,
    num_items: usize,
    seed: u64,
    sweeps: usize,
    best_sweep: usize,
    clip: Option<(f64, f64)>,
}

fn train_cmd(file: &FileConfig, args: &TrainArgs) -> Result<()> {
    let variant: Variant = args.variant.parse()?;
    let config = file.train_config(&args.model, args.seed)?;
    let spec = file.dataset(&args.data)?;
    if variant.needs_corpus() && args.data.corpus.is_none() && !spec_has_text(&spec) {
        return Err(Error::Missing(format!("variant {variant} needs item text; pass --corpus")));
    }
    let loaded = spec.load()?;
    create_dir(&args.out)?;
    let (train_set, test_set) = match args.train_fraction {
        Some(f) => {
            let pair = split(&loaded.ratings, f, config.seed)?;
            write_ratings_csv(&pair.train, &args.out.join("train.csv"))?;
            write_ratings_csv(&pair.test, &args.out.join("test.csv"))?;
            (pair.train, Some(pair.test))
        }
        None => (loaded.ratings.clone(), None),
    };
    let state = train(&train_set, loaded.corpus.as_ref(), &config, variant)?;

    let out = &args.out;
    state
        .model
        .write_csv(&out.join("user_factors.csv"), &out.join("item_factors.csv"))?;
    state.write_trace_csv(&out.join("trace.csv"))?;
    if let Some(sam) = &state.sam {
        sam.write_weights_csv(&out.join("weights.csv"))?;
        save_params(sam.head(), Some(config.seed), &out.join("sam_head.bin"))?;
    }
    if let Some(enc) = &state.encoder {
        save_params(enc, Some(config.seed), &out.join("item_encoder.bin"))?;
    }
    let manifest = ModelManifest {
        variant,
        d: config.d,
        lambda_u: config.lambda_u,
        lambda_v: config.lambda_v,
        num_users: state.model.num_users(),
        num_items: state.model.num_items(),
        seed: config.seed,
        sweeps: state.sweeps,
        best_sweep: state.best_sweep,
        clip: config.clip,
    };
    write_text(&out.join("model.json"), &serde_json::to_string_pretty(&manifest)?)?;

    let mut line = format!("variant={variant} sweeps={} best_sweep={}", state.sweeps, state.best_sweep);
    if let Some(v) = state.trace[state.best_sweep].validation_rmse {
        let _ = write!(line, " validation_rmse={v:.6}");
    }
    if let Some(test) = &test_set {
        let _ = write!(line, " test_rmse={:.6}", state.rmse(test)?);
    }
    println!("{line}");
    Ok(())
}

fn spec_has_text(spec: &DatasetSpec) -> bool {
    match spec {
        DatasetSpec::Movielens { corpus, .. } | DatasetSpec::Ratings { corpus, .. } => corpus.is_some(),
        DatasetSpec::TextDriven(_) | DatasetSpec::ReadingTime(_) => true,
    }
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let manifest_path = args.model.join("model.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::Io {
        path: manifest_path.clone(),
        source: e,
    })?;
    let manifest: ModelManifest = serde_json::from_str(&text)?;
    let model = FactorModel::read_csv(
        &args.model.join("user_factors.csv"),
        &args.model.join("item_factors.csv"),
        manifest.lambda_u,
        manifest.lambda_v,
    )?;
    let path: &PathBuf = args
        .data
        .dataset
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("evaluate needs --dataset".into()))?;
    let data = read_ratings_csv(path, Some((model.num_users(), model.num_items())))?;
    let clip = match &args.clip_predictions {
        Some(v) => Some(clip_range(v)?),
        None => manifest.clip,
    };
    let preds: Vec<f64> = data
        .triples()
        .iter()
        .map(|t| {
            let p = model.predict(t.user, t.item)?;
            Ok(clip.map_or(p, |(lo, hi)| p.clamp(lo, hi)))
        })
        .collect::<Result<_>>()?;
    println!("rmse={:.6} ratings={}", rmse(&preds, &data)?, data.len());
    Ok(())
}

fn experiment(file: &FileConfig, args: &ExperimentArgs, sweep: bool) -> Result<()> {
    let seeds = args.seeds.clone().or(args.seed.map(|s| vec![s]));
    let config = file.experiment(
        &args.data,
        &args.model,
        args.variant.as_deref(),
        seeds,
        args.train_fraction,
        args.fractions.as_deref(),
    )?;
    let loaded = config.dataset.load()?;
    let fractions = if sweep {
        config.fractions.clone()
    } else {
        vec![config.train_fraction]
    };
    let table = run_grid_on(&config, &loaded, &fractions)?;
    print!("{}", table.render());
    if let Some(dir) = args.out.as_ref().or(config.output_dir.as_ref()) {
        table.write(dir)?;
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = TextDrivenSpec {
        num_users: args.m,
        num_items: args.n,
        rank: args.rank,
        noise_sd: args.noise_sd,
        group_propensities: args.propensities.clone(),
        seed: args.seed,
        ..Default::default()
    };
    let t = spec.generate()?;
    t.synthetic.write(&args.out, "synthetic")?;
    let mut body = String::new();
    for (j, doc) in t.documents.iter().enumerate() {
        let _ = writeln!(body, "{j}\t{doc}");
    }
    write_text(&args.out.join("documents.tsv"), &body)?;
    println!("{}", stats_line(&t.synthetic.dataset));
    Ok(())
}
