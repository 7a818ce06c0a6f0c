use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use relzero::analysis::{
    attack_seed, fit_distance_regression, regression_csv, residual_distribution, robustness_csv,
    robustness_sweep, ssm_residual, uniqueness_study, SweepConfig,
};
use relzero::imaging::{extract_mean_rgb, load_embeddings, load_image, load_image_native, PatchFeatureMap};
use relzero::perturb::{apply_attack, attack_matrix, Attack};
use relzero::predictor::{extract_watermark, train, PredictorModel, TrainConfig};
use relzero::relational::{pair_count, pairwise_distances};
use relzero::watermark::{
    calibrate, decrypt, encrypt, registry_get, registry_list, registry_put, verify, CalibrationResult, RecordMeta,
};

mod config;

use config::{is_embedding, parse_hidden, GlobalArgs, RunConfig};

#[derive(Parser)]
#[command(name = "relzero", version, about = "Relational zero-watermarking for images")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the pair predictor and write a checkpoint.
    Train {
        image_dir: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Hidden layer widths, e.g. "128,128".
        #[arg(long)]
        hidden: Option<String>,
        #[arg(long)]
        pos_weight: Option<f64>,
    },
    /// Extract, encrypt and store the watermark of an image.
    Register {
        image: PathBuf,
        /// Content id; defaults to the file name.
        #[arg(long)]
        id: Option<String>,
    },
    /// Check a suspect image against a registered record.
    Verify {
        image: PathBuf,
        #[arg(long)]
        id: Option<String>,
    },
    /// Apply one attack ("kind:param[:seed]") and write a PNG.
    Attack { image: PathBuf, spec: String, output: PathBuf },
    /// Print the calibrated overlap threshold.
    Calibrate,
    #[command(subcommand)]
    Analyze(Analyze),
}

#[derive(Subcommand)]
enum Analyze {
    /// Distance-distance fit per image; writes regression.csv.
    Regression { inputs: Vec<PathBuf> },
    /// Histogram of distance changes; writes residuals.csv.
    Residuals {
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Self-similarity residuals; writes ssm.csv, ssm_raw.csv, ssm_adjusted.csv.
    Ssm { input: PathBuf },
    /// Pairwise overlaps of registered watermarks; writes uniqueness.csv.
    Uniqueness {
        /// Content ids; all records in the registry when empty.
        ids: Vec<String>,
    },
    /// Per-attack TPR over a directory of images; writes robustness.csv.
    Sweep {
        image_dir: PathBuf,
        /// Comma-separated attack specs; the full evaluation grid by default.
        #[arg(long)]
        attacks: Option<String>,
    },
}

const INPUT_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "emb"];

fn list_inputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| INPUT_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_features(cfg: &RunConfig, path: &Path) -> Result<PatchFeatureMap> {
    let fm = if is_embedding(path) {
        load_embeddings(path)?
    } else {
        extract_mean_rgb(&load_image(path, cfg.image_side)?, cfg.patch_side)?
    };
    Ok(fm)
}

/// Original and edited features for the `index`-th input: the counterpart of
/// the same name in `--edited-dir`, or a seeded surrogate edit.
fn feature_pair(cfg: &RunConfig, path: &Path, index: usize) -> Result<(PatchFeatureMap, PatchFeatureMap)> {
    if let Some(dir) = &cfg.edited_dir {
        let counterpart = dir.join(file_name(path));
        if !counterpart.is_file() {
            bail!("no edited counterpart for {} in {}", file_name(path), dir.display());
        }
        return Ok((load_features(cfg, path)?, load_features(cfg, &counterpart)?));
    }
    if is_embedding(path) {
        bail!("{}: embeddings need --edited-dir counterparts", path.display());
    }
    let img = load_image(path, cfg.image_side)?;
    let edited = apply_attack(&img, &Attack::SurrogateEdit { seed: attack_seed(cfg.seed, index) })?;
    Ok((extract_mean_rgb(&img, cfg.patch_side)?, extract_mean_rgb(&edited, cfg.patch_side)?))
}

fn calibration(cfg: &RunConfig, p: usize) -> Result<CalibrationResult> {
    Ok(calibrate(cfg.k, cfg.fpr, cfg.calib, pair_count(p))?)
}

fn load_model(cfg: &RunConfig) -> Result<PredictorModel> {
    PredictorModel::load(&cfg.checkpoint).with_context(|| format!("loading checkpoint {}", cfg.checkpoint.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(
    cfg: &RunConfig,
    dir: &Path,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    hidden: Option<String>,
    pos_weight: Option<f64>,
) -> Result<ExitCode> {
    let inputs = list_inputs(dir)?;
    if inputs.is_empty() {
        bail!("no images in {}", dir.display());
    }
    let pairs = inputs
        .iter()
        .enumerate()
        .map(|(i, p)| feature_pair(cfg, p, i))
        .collect::<Result<Vec<_>>>()?;
    let train_cfg = TrainConfig {
        learning_rate: learning_rate.unwrap_or(cfg.learning_rate),
        epochs: epochs.unwrap_or(cfg.epochs),
        batch_size: batch_size.unwrap_or(cfg.batch_size),
        seed: cfg.seed,
        k: cfg.k,
        pos_weight: pos_weight.or(cfg.pos_weight),
        hidden_sizes: match hidden {
            Some(h) => parse_hidden(&h)?,
            None => cfg.hidden.clone(),
        },
        ..TrainConfig::default()
    };
    let report = train(&pairs, &train_cfg)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "epoch,loss")?;
    for (e, loss) in report.losses.iter().enumerate() {
        writeln!(out, "{e},{loss}")?;
    }
    report.model.save(&cfg.checkpoint)?;
    eprintln!(
        "final loss {} (best epoch {}), {} images, checkpoint {}",
        report.losses[report.best_epoch],
        report.best_epoch,
        pairs.len(),
        cfg.checkpoint.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn content_id(id: Option<String>, image: &Path) -> String {
    id.unwrap_or_else(|| file_name(image))
}

fn cmd_register(cfg: &RunConfig, image: &Path, id: Option<String>) -> Result<ExitCode> {
    let model = load_model(cfg)?;
    let fm = load_features(cfg, image)?;
    let key = cfg.arnold_key(fm.len())?;
    let pairs = extract_watermark(&model, &fm, cfg.k)?;
    let meta = RecordMeta {
        content_id: content_id(id, image),
        patch_side: cfg.patch_side,
        image_side: cfg.image_side,
        feature_source: fm.source(),
        created: cfg.created(),
    };
    let record = encrypt(&pairs, &key, &meta)?;
    let path = registry_put(&cfg.registry, &record, cfg.force)?;
    println!("record {}", path.display());
    println!("K={}", pairs.len());
    let listed: Vec<String> = pairs.iter().map(|(i, j)| format!("{i}-{j}")).collect();
    println!("pairs {}", listed.join(" "));
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(cfg: &RunConfig, image: &Path, id: Option<String>) -> Result<ExitCode> {
    let id = content_id(id, image);
    let record = registry_get(&cfg.registry, &id)?;
    let model = load_model(cfg)?;
    let fm = load_features(cfg, image)?;
    if fm.len() != record.p {
        bail!("suspect has {} patches, record {id:?} has {}", fm.len(), record.p);
    }
    let key = cfg.arnold_key(record.p)?;
    let calib = calibrate(record.k, cfg.fpr, cfg.calib, record.m)?;
    let suspect = extract_watermark(&model, &fm, record.k)?;
    let decision = verify(&record, &key, &suspect, &calib).with_context(|| format!("verifying {id:?}"))?;
    let verdict = if decision.authenticated { "AUTH" } else { "REJECT" };
    println!("{verdict} η={} m={} thr={}", decision.eta, decision.overlap, decision.threshold);
    Ok(if decision.authenticated {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_attack(cfg: &RunConfig, image: &Path, spec: &str, output: &Path) -> Result<ExitCode> {
    let attack = Attack::parse_with_seed(spec, cfg.seed)?;
    let img = load_image_native(image)?;
    apply_attack(&img, &attack)?.save_png(output)?;
    println!("{attack} -> {}", output.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_calibrate(cfg: &RunConfig) -> Result<ExitCode> {
    let c = calibration(cfg, cfg.patch_count())?;
    println!("m={} tau={}", c.threshold, c.tau());
    let null = match c.m {
        Some(m) => format!("{} (M={m})", c.mode),
        None => c.mode.to_string(),
    };
    println!("K={} target={} achieved={:e} null={null}", c.k, c.target_fpr, c.achieved_fpr);
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(cfg: &RunConfig, which: Analyze) -> Result<ExitCode> {
    match which {
        Analyze::Regression { inputs } => {
            if inputs.is_empty() {
                bail!("no inputs");
            }
            let mut reports = Vec::new();
            for (i, path) in inputs.iter().enumerate() {
                let (a, b) = feature_pair(cfg, path, i)?;
                reports.push(fit_distance_regression(&pairwise_distances(&a), &pairwise_distances(&b))?);
            }
            write_file(&cfg.out_file("regression.csv")?, &regression_csv(&reports))?;
        }
        Analyze::Residuals { input, bins } => {
            let (a, b) = feature_pair(cfg, &input, 0)?;
            let h = residual_distribution(&pairwise_distances(&a), &pairwise_distances(&b), bins)?;
            println!("mean {} std {} n {}", h.mean, h.std_dev, h.n);
            write_file(&cfg.out_file("residuals.csv")?, &h.to_csv())?;
        }
        Analyze::Ssm { input } => {
            let (a, b) = feature_pair(cfg, &input, 0)?;
            let r = ssm_residual(&pairwise_distances(&a), &pairwise_distances(&b))?;
            let matrix = |m: &[f64]| {
                m.chunks(r.p)
                    .map(|row| row.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
                    .collect::<Vec<_>>()
                    .join("\n")
                    + "\n"
            };
            write_file(&cfg.out_file("ssm.csv")?, &r.to_csv())?;
            write_file(&cfg.out_file("ssm_raw.csv")?, &matrix(&r.raw))?;
            write_file(&cfg.out_file("ssm_adjusted.csv")?, &matrix(&r.adjusted))?;
        }
        Analyze::Uniqueness { ids } => {
            let records = if ids.is_empty() {
                registry_list(&cfg.registry)?
            } else {
                ids.iter()
                    .map(|id| registry_get(&cfg.registry, id))
                    .collect::<relzero::Result<Vec<_>>>()?
            };
            let Some(first) = records.first() else {
                bail!("registry {} is empty", cfg.registry.display());
            };
            let key = cfg.arnold_key(first.p)?;
            let sets = records
                .iter()
                .map(|r| decrypt(r, &key).with_context(|| format!("decrypting {:?}", r.content_id)))
                .collect::<Result<Vec<_>>>()?;
            let names: Vec<String> = records.iter().map(|r| r.content_id.clone()).collect();
            let report = uniqueness_study(&sets, first.k)?;
            println!(
                "pairs {} mean {} max {} expected {}",
                report.etas.len(),
                report.mean,
                report.max,
                report.expected_eta()
            );
            write_file(&cfg.out_file("uniqueness.csv")?, &report.to_csv(&names))?;
        }
        Analyze::Sweep { image_dir, attacks } => {
            let attacks = match attacks {
                Some(list) => list
                    .split(',')
                    .map(|s| Attack::parse_with_seed(s.trim(), cfg.seed))
                    .collect::<relzero::Result<Vec<_>>>()?,
                None => attack_matrix(),
            };
            let mut images = Vec::new();
            for path in list_inputs(&image_dir)? {
                if is_embedding(&path) {
                    bail!("{}: sweeps need images", path.display());
                }
                images.push((file_name(&path), load_image(&path, cfg.image_side)?));
            }
            let model = load_model(cfg)?;
            let key = cfg.arnold_key(cfg.patch_count())?;
            let calib = calibration(cfg, cfg.patch_count())?;
            let sweep = SweepConfig {
                model: &model,
                key: &key,
                calib: &calib,
                patch_side: cfg.patch_side,
                seed: cfg.seed,
            };
            let rows = robustness_sweep(&sweep, &images, &attacks)?;
            for r in &rows {
                println!("{} {}/{}", r.attack, r.authenticated, r.n);
            }
            write_file(&cfg.out_file("robustness.csv")?, &robustness_csv(&rows))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = RunConfig::resolve(&cli.global)?;
    match cli.command {
        Command::Train {
            image_dir,
            epochs,
            learning_rate,
            batch_size,
            hidden,
            pos_weight,
        } => cmd_train(&cfg, &image_dir, epochs, learning_rate, batch_size, hidden, pos_weight),
        Command::Register { image, id } => cmd_register(&cfg, &image, id),
        Command::Verify { image, id } => cmd_verify(&cfg, &image, id),
        Command::Attack { image, spec, output } => cmd_attack(&cfg, &image, &spec, &output),
        Command::Calibrate => cmd_calibrate(&cfg),
        Command::Analyze(which) => cmd_analyze(&cfg, which),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
