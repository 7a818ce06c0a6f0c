//! Run configuration: built-in defaults, overridden by an optional
//! `key=value` file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use relzero::imaging::{DEFAULT_IMAGE_SIDE, DEFAULT_PATCH_SIDE};
use relzero::watermark::{grid_side, ArnoldKey, CalibrationMode, DEFAULT_ITERATIONS};

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Optional key=value config file; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Arnold key as "p,q,T" (T defaults to 10).
    #[arg(long, global = true, env = "RELZERO_KEY", hide_env_values = true)]
    pub key: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    pub registry: Option<PathBuf>,
    /// binom or hyper.
    #[arg(long, global = true)]
    pub calib: Option<String>,
    #[arg(long, global = true)]
    pub fpr: Option<f64>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub patch_side: Option<usize>,
    #[arg(long, global = true)]
    pub image_side: Option<usize>,
    #[arg(long, global = true, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Overwrite existing records.
    #[arg(long, global = true)]
    pub force: bool,
    /// Directory of externally edited counterparts, matched by file name.
    #[arg(long, global = true, value_name = "DIR")]
    pub edited_dir: Option<PathBuf>,
    /// Output directory for CSV reports.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Record timestamp (seconds since the epoch).
    #[arg(long, global = true, env = "SOURCE_DATE_EPOCH")]
    pub created: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub key: Option<String>,
    pub registry: PathBuf,
    pub calib: CalibrationMode,
    pub fpr: f64,
    pub k: usize,
    pub patch_side: usize,
    pub image_side: usize,
    pub checkpoint: PathBuf,
    pub force: bool,
    pub edited_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub created: Option<u64>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub pos_weight: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            key: None,
            registry: PathBuf::from("registry"),
            calib: CalibrationMode::Binomial,
            fpr: 1e-3,
            k: 50,
            patch_side: DEFAULT_PATCH_SIDE,
            image_side: DEFAULT_IMAGE_SIDE,
            checkpoint: PathBuf::from("relzero.ckpt"),
            force: false,
            edited_dir: None,
            out: PathBuf::from("."),
            created: None,
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 1024,
            hidden: vec![128, 128],
            pos_weight: None,
        }
    }
}

pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key=value", n + 1))?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| anyhow!("config {key}={v}: {e}"))
}

pub fn parse_hidden(v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|s| s.trim().parse().map_err(|e| anyhow!("hidden sizes {v:?}: {e}")))
        .collect()
}

impl RunConfig {
    pub fn apply_file(&mut self, entries: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in entries {
            match k.as_str() {
                "seed" => self.seed = num(k, v)?,
                "key" => self.key = Some(v.clone()),
                "registry" => self.registry = PathBuf::from(v),
                "calib" => self.calib = CalibrationMode::parse(v)?,
                "fpr" => self.fpr = num(k, v)?,
                "k" => self.k = num(k, v)?,
                "patch_side" => self.patch_side = num(k, v)?,
                "image_side" => self.image_side = num(k, v)?,
                "checkpoint" => self.checkpoint = PathBuf::from(v),
                "edited_dir" => self.edited_dir = Some(PathBuf::from(v)),
                "out" => self.out = PathBuf::from(v),
                "created" => self.created = Some(num(k, v)?),
                "epochs" => self.epochs = num(k, v)?,
                "learning_rate" | "lr" => self.learning_rate = num(k, v)?,
                "batch_size" => self.batch_size = num(k, v)?,
                "hidden" => self.hidden = parse_hidden(v)?,
                "pos_weight" => self.pos_weight = Some(num(k, v)?),
                "feature_source" => {
                    relzero::imaging::FeatureSource::parse(v)?;
                }
                _ => bail!("unknown config key {k:?}"),
            }
        }
        Ok(())
    }

    pub fn resolve(args: &GlobalArgs) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_file(&parse_config_file(&text)?)?;
        }
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        if let Some(v) = &args.key {
            cfg.key = Some(v.clone());
        }
        if let Some(v) = &args.registry {
            cfg.registry = v.clone();
        }
        if let Some(v) = &args.calib {
            cfg.calib = CalibrationMode::parse(v)?;
        }
        if let Some(v) = args.fpr {
            cfg.fpr = v;
        }
        if let Some(v) = args.k {
            cfg.k = v;
        }
        if let Some(v) = args.patch_side {
            cfg.patch_side = v;
        }
        if let Some(v) = args.image_side {
            cfg.image_side = v;
        }
        if let Some(v) = &args.checkpoint {
            cfg.checkpoint = v.clone();
        }
        cfg.force |= args.force;
        if let Some(v) = &args.edited_dir {
            cfg.edited_dir = Some(v.clone());
        }
        if let Some(v) = &args.out {
            cfg.out = v.clone();
        }
        if let Some(v) = args.created {
            cfg.created = Some(v);
        }
        if cfg.patch_side == 0 || cfg.image_side % cfg.patch_side != 0 {
            bail!("image side {} is not a multiple of patch side {}", cfg.image_side, cfg.patch_side);
        }
        Ok(cfg)
    }

    /// Patch count of a resized input image.
    pub fn patch_count(&self) -> usize {
        let per_side = self.image_side / self.patch_side;
        per_side * per_side
    }

    /// The Arnold key sized for `p` patches.
    pub fn arnold_key(&self, p: usize) -> Result<ArnoldKey> {
        let spec = self
            .key
            .as_deref()
            .ok_or_else(|| anyhow!("no key given; pass --key p,q,T or set RELZERO_KEY"))?;
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        let (p_, q, t) = match parts.as_slice() {
            [p_, q] => (*p_, *q, None),
            [p_, q, t] => (*p_, *q, Some(*t)),
            _ => bail!("key must be \"p,q\" or \"p,q,T\""),
        };
        let parse = |s: &str| s.parse::<i64>().map_err(|e| anyhow!("key component {s:?}: {e}"));
        let iterations = match t {
            Some(t) => t.parse::<u32>().map_err(|e| anyhow!("key iterations {t:?}: {e}"))?,
            None => DEFAULT_ITERATIONS,
        };
        Ok(ArnoldKey::new(parse(p_)?, parse(q)?, iterations, grid_side(p))?)
    }

    pub fn created(&self) -> u64 {
        self.created.unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
    }

    pub fn out_file(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }
}

pub fn is_embedding(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("emb")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let entries = parse_config_file("# comment\nk = 20\npatch-side=8\nfpr=0.01\n\nhidden=16,16\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&entries).unwrap();
        assert_eq!((cfg.k, cfg.patch_side, cfg.hidden.clone()), (20, 8, vec![16, 16]));
        assert!(parse_config_file("novalue").is_err());
        assert!(cfg.apply_file(&parse_config_file("bogus=1").unwrap()).is_err());
    }

    #[test]
    fn key_parsing() {
        let mut cfg = RunConfig {
            key: Some("3,5,7".into()),
            ..RunConfig::default()
        };
        let key = cfg.arnold_key(196).unwrap();
        assert_eq!((key.p(), key.q(), key.iterations(), key.side()), (3, 5, 7, 139));
        cfg.key = Some("3,5".into());
        assert_eq!(cfg.arnold_key(196).unwrap().iterations(), DEFAULT_ITERATIONS);
        cfg.key = Some("3".into());
        assert!(cfg.arnold_key(196).is_err());
        cfg.key = None;
        assert!(cfg.arnold_key(196).is_err());
    }
}
