use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use serde_json::json;

use tpad::autoenc::{train, TrainConfig};
use tpad::dataio::{load_csv_auto, save_csv, Dataset, Normalizer};
use tpad::detect::{
    detect as run_detect, fit_second_phase, reconstruction_scores, DetectionResult, FirstPhaseDetector,
    SecondPhaseSpec,
};
use tpad::dimsweep::{estimate_dim, sweep as run_sweep, sweep_architecture, SweepConfig};
use tpad::metrics::{confusion, roc_auc};
use tpad::model_file::{Metadata, ModelFile};
use tpad::pca::fit_pca;
use tpad::synth::{
    gen_nonlin_pool, gen_watertank, gen_watertank_anomalies, AnomalyKind, NonlinOp, NonlinPoolParams,
    WaterTankParams,
};
use tpad::{Error, Method, Reducer};

use crate::{DetectArgs, EvalArgs, FitArgs, MethodArg, NonlinArgs, ScoreArg, SweepArgs, WatertankArgs};

/// Optional autoencoder settings read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AeSettings {
    hidden: Option<Vec<usize>>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    validation_fraction: Option<f64>,
}

impl AeSettings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(AeSettings::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            .map_err(Into::into)
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            patience: self.patience.unwrap_or(d.patience),
            validation_fraction: self.validation_fraction.unwrap_or(d.validation_fraction),
            seed,
        }
    }
}

fn method(m: MethodArg) -> Method {
    match m {
        MethodArg::Pca => Method::Pca,
        MethodArg::Ae => Method::Ae,
    }
}

fn load(path: &Path) -> Result<Dataset> {
    load_csv_auto(path).with_context(|| format!("loading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn synth_watertank(args: WatertankArgs) -> Result<()> {
    let params = WaterTankParams {
        a: args.a,
        h_min: args.h_min,
        h_max: args.h_max,
        noise_std: args.noise,
        n: args.n,
        seed: args.seed,
    };
    let data = gen_watertank(&params)?;
    save_csv(&data, &args.out)?;
    if let Some(count) = args.anomalies {
        let kinds = args
            .anomaly_kinds
            .iter()
            .map(|k| k.parse::<AnomalyKind>())
            .collect::<tpad::Result<Vec<_>>>()?;
        let batch = gen_watertank_anomalies(&params, &kinds, count)?;
        let path = args.anomaly_out.unwrap_or_else(|| sibling(&args.out, "_anomalies.csv"));
        save_csv(&batch.data, &path)?;
        if let Some(mixed) = &args.mixed_out {
            save_csv(&data.concat(&batch.data)?, mixed)?;
        }
    }
    Ok(())
}

pub fn synth_nonlin(args: NonlinArgs) -> Result<()> {
    let ops = args
        .ops
        .iter()
        .map(|o| o.parse::<NonlinOp>())
        .collect::<tpad::Result<Vec<_>>>()?;
    let pool = gen_nonlin_pool(&NonlinPoolParams {
        latent_dim: args.latent_dim,
        obs_dim: args.obs_dim,
        ops,
        noise_std: args.noise,
        n: args.n,
        seed: args.seed,
    })?;
    save_csv(&pool.data, &args.out)?;
    let manifest = args.manifest.unwrap_or_else(|| sibling(&args.out, "_manifest.json"));
    write(&manifest, &(pool.manifest.to_json()? + "\n"))
}

pub fn fit(args: FitArgs) -> Result<()> {
    let data = load(&args.data)?;
    let normalizer = Normalizer::fit(data.x())?;
    let x = normalizer.apply(data.x())?;
    let mut summary = json!({
        "kind": method(args.method).to_string(),
        "p": args.p,
        "m": data.m(),
        "n": data.n(),
    });
    let reducer: Reducer = match args.method {
        MethodArg::Pca => {
            if args.config.is_some() {
                bail!(Error::Config("--config only applies to autoencoders".into()));
            }
            let model = fit_pca(&x, args.p)?;
            summary["explained"] = json!(model.explained());
            model.into()
        }
        MethodArg::Ae => {
            let settings = AeSettings::load(args.config.as_deref())?;
            let arch = sweep_architecture(data.m(), args.p, settings.hidden.as_deref())?;
            let model = train(&x, &arch, &settings.train_config(args.seed))?;
            summary["layer_sizes"] = json!(arch.layer_sizes());
            summary["epochs"] = json!(model.train_log().len());
            summary["best_epoch"] = json!(model.best_epoch());
            model.into()
        }
    };
    let scores = reconstruction_scores(&reducer, &x)?;
    summary["train_mse"] = json!(scores.iter().sum::<f64>() / scores.len() as f64);
    let file = ModelFile::new(
        reducer,
        normalizer,
        data.column_names().to_vec(),
        Metadata {
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            seed: args.seed,
            data_fingerprint: data.fingerprint(),
        },
    )?;
    file.save(&args.out)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    if args.pmin == 0 || args.pmax < args.pmin {
        bail!(Error::Parameter(format!("need 1 <= pmin <= pmax, got {}..{}", args.pmin, args.pmax)));
    }
    let data = load(&args.data)?;
    let settings = AeSettings::load(args.config.as_deref())?;
    let cfg = SweepConfig {
        folds: args.folds,
        seed: args.seed,
        hidden: settings.hidden.clone(),
        train: settings.train_config(args.seed),
    };
    let p_values: Vec<usize> = (args.pmin..=args.pmax).collect();
    let mut result = run_sweep(&data, method(args.method), &p_values, &cfg)?;
    result.estimated_dim = estimate_dim(&result, args.fraction).ok();
    write(&args.out, &(serde_json::to_string_pretty(&result)? + "\n"))?;
    write(&args.out.with_extension("csv"), &result.to_csv())?;
    println!("{}", serde_json::to_string(&json!({ "estimated_dim": result.estimated_dim }))?);
    Ok(())
}

fn check_columns(file: &ModelFile, data: &Dataset, what: &str) -> Result<()> {
    if data.column_names() != file.column_names.as_slice() {
        bail!(Error::Config(format!(
            "{what} columns {:?} do not match the model's {:?}",
            data.column_names(),
            file.column_names
        )));
    }
    Ok(())
}

pub fn detect(args: DetectArgs) -> Result<()> {
    let file = ModelFile::load(&args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let train_data = load(&args.train)?;
    let test_data = load(&args.test)?;
    check_columns(&file, &train_data, "training")?;
    check_columns(&file, &test_data, "test")?;
    let train_x = file.normalizer.apply(train_data.x())?;
    let test_x = file.normalizer.apply(test_data.x())?;

    let second = args
        .second_phase
        .as_deref()
        .map(|s| -> Result<_> {
            let spec: SecondPhaseSpec = s.parse()?;
            let latent = file.reducer.encode(&train_x)?;
            Ok(fit_second_phase(spec, &latent, args.quantile)?)
        })
        .transpose()?;
    let first = FirstPhaseDetector::fit(file.reducer, &train_x, args.quantile)?;
    let results = run_detect(&first, second.as_ref(), &test_x)?;

    let mut out = String::new();
    for r in &results {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write(&args.out, &out)?;
    let summary = json!({
        "n": results.len(),
        "anomalies": results.iter().filter(|r| r.anomaly).count(),
        "mse_threshold": first.mse_threshold(),
        "second_threshold": second.as_ref().map(|s| s.score_threshold()),
    });
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let text = fs::read_to_string(&args.results).with_context(|| format!("reading {}", args.results.display()))?;
    let results = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str::<DetectionResult>(l).with_context(|| format!("results line {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let data = load(&args.labels)?;
    let labels: Vec<bool> = data
        .labels()
        .ok_or_else(|| Error::Evaluation(format!("{} has no label column", args.labels.display())))?
        .iter()
        .map(|&l| l == 1)
        .collect();
    if labels.len() != results.len() {
        bail!(Error::Shape(format!("{} results but {} labels", results.len(), labels.len())));
    }
    let (scores, decisions): (Vec<f64>, Vec<bool>) = match args.score {
        ScoreArg::Recon => results.iter().map(|r| (r.recon_error, r.anomaly1)).unzip(),
        ScoreArg::Combined => results.iter().map(|r| (r.combined_score, r.anomaly)).unzip(),
        ScoreArg::Second => results
            .iter()
            .map(|r| match (r.second_score, r.anomaly2) {
                (Some(s), Some(a)) => Ok((s, a)),
                _ => Err(anyhow!(Error::Evaluation(
                    "results carry no second-phase scores".into()
                ))),
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip(),
    };
    let mut report = confusion(&decisions, &labels)?;
    let roc = roc_auc(&scores, &labels)?;
    report.auc = Some(roc.auc);
    if let Some(path) = &args.roc {
        write(path, &roc.to_csv())?;
    }
    write(&args.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}
