//! Flat `key=value` configuration. Precedence: built-in defaults, then the
//! config file, then command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use neurofacs::expression::TreeConfig;
use neurofacs::image::Rect;
use neurofacs::pipeline::PipelineConfig;
use neurofacs::synth;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub tree: TreeConfig,
    /// Crops set explicitly; otherwise they follow the frame size.
    pub upper_crop: Option<Rect>,
    pub lower_crop: Option<Rect>,
    /// Threshold given in a config file or on the command line, as opposed
    /// to the default.
    pub explicit_threshold: Option<f64>,
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub cuts: Option<usize>,
    pub reduced_dim: Option<usize>,
}

fn bad(key: &str, value: &str) -> CliError {
    CliError::Usage(format!("config: bad value `{value}` for `{key}`"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| bad(key, value))
}

fn flag(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

/// `0-47,60,62-64`
fn index_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (num(key, a)?, num(key, b)?);
                if a > b {
                    return Err(bad(key, value));
                }
                out.extend(a..=b);
            }
            None => out.push(num(key, part)?),
        }
    }
    if out.is_empty() {
        return Err(bad(key, value));
    }
    Ok(out)
}

fn rect(key: &str, value: &str) -> Result<Rect, CliError> {
    let v = value.split(',').map(|p| num::<usize>(key, p)).collect::<Result<Vec<_>, _>>()?;
    match v.as_slice() {
        &[x, y, width, height] if width > 0 && height > 0 => Ok(Rect { x, y, width, height }),
        _ => Err(bad(key, value)),
    }
}

fn format_list(v: &[usize]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

fn format_rect(r: &Rect) -> String {
    format!("{},{},{},{}", r.x, r.y, r.width, r.height)
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if key == "threshold" {
            let t = num(key, value)?;
            self.pipeline.threshold = t;
            self.explicit_threshold = Some(t);
            return Ok(());
        }
        let p = &mut self.pipeline;
        match key {
            "seed" => p.seed = num(key, value)?,
            "cuts" => p.cuts = num(key, value)?,
            "reduced_dim" => p.chain.out_dim = num(key, value)?,
            "pca_rows" => p.chain.pca_rows = num(key, value)?,
            "pca_cols" => p.chain.pca_cols = num(key, value)?,
            "bda_rows" => p.chain.bda_rows = num(key, value)?,
            "bda_cols" => p.chain.bda_cols = num(key, value)?,
            "pca_dim" => p.chain.pca_dim = num(key, value)?,
            "time_cols" => p.time_cols = num(key, value)?,
            "appearance_relative" => p.appearance_relative = flag(key, value)?,
            "gabor_scales" => p.gabor_scales = num(key, value)?,
            "gabor_orientations" => p.gabor_orientations = num(key, value)?,
            "kernel_size" => p.kernel_size = num(key, value)?,
            "base_wavelength" => p.gabor.base_wavelength = num(key, value)?,
            "wavelength_ratio" => p.gabor.wavelength_ratio = num(key, value)?,
            "sigma_ratio" => p.gabor.sigma_ratio = num(key, value)?,
            "grid_step" => p.grid_step = num(key, value)?,
            "lk_levels" => p.lk.levels = num(key, value)?,
            "lk_window" => p.lk.window = num(key, value)?,
            "lk_iters" => p.lk.max_iters = num(key, value)?,
            "lk_eps" => p.lk.eps = num(key, value)?,
            "lk_min_eig_ratio" => p.lk.min_eig_ratio = num(key, value)?,
            "epochs" => p.structure.epochs = num(key, value)?,
            "lr" => p.structure.hybrid.lr = num(key, value)?,
            "ridge" => p.structure.hybrid.ridge = num(key, value)?,
            "rule_cap" => p.structure.rule_cap = num(key, value)?,
            "jitter" => p.structure.jitter = num(key, value)?,
            "polish_epochs" => p.polish_epochs = num(key, value)?,
            "val_fraction" => p.val_fraction = num(key, value)?,
            "upper_points" => p.regions.upper = index_list(key, value)?,
            "lower_points" => p.regions.lower = index_list(key, value)?,
            "upper_crop" => self.upper_crop = Some(rect(key, value)?),
            "lower_crop" => self.lower_crop = Some(rect(key, value)?),
            "min_leaf" => self.tree.min_leaf = num(key, value)?,
            "prune" => {
                self.tree.confidence = if flag(key, value)? {
                    Some(self.tree.confidence.unwrap_or(0.25))
                } else {
                    None
                }
            }
            "confidence" => self.tree.confidence = Some(num(key, value)?),
            _ => return Err(CliError::Usage(format!("config: unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Settings, CliError> {
        let mut s = Settings::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", n + 1)))?;
            s.set(k.trim(), v.trim())?;
        }
        Ok(s)
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Settings, CliError> {
        let mut s = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Settings::parse(&text)?
            }
            None => Settings::default(),
        };
        if let Some(v) = overrides.seed {
            s.pipeline.seed = v;
        }
        if let Some(v) = overrides.threshold {
            s.pipeline.threshold = v;
            s.explicit_threshold = Some(v);
        }
        if let Some(v) = overrides.cuts {
            s.pipeline.cuts = v;
        }
        if let Some(v) = overrides.reduced_dim {
            s.pipeline.chain.out_dim = v;
        }
        if s.pipeline.cuts == 0 || s.pipeline.chain.out_dim == 0 {
            return Err(CliError::Usage("--cuts and --reduced-dim must be positive".into()));
        }
        Ok(s)
    }

    /// Pipeline configuration for frames of the given size.
    pub fn for_frames(&self, width: usize, height: usize) -> PipelineConfig {
        let (u, l) = synth::default_crops(width.min(height));
        let mut p = self.pipeline.clone();
        p.upper_crop = self.upper_crop.unwrap_or(u);
        p.lower_crop = self.lower_crop.unwrap_or(l);
        p
    }

    /// Effective settings as sorted `key=value` pairs, stored in containers.
    pub fn snapshot(&self, cfg: &PipelineConfig) -> Vec<(String, String)> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("seed", cfg.seed.to_string());
        put("threshold", cfg.threshold.to_string());
        put("cuts", cfg.cuts.to_string());
        put("reduced_dim", cfg.chain.out_dim.to_string());
        put("pca_rows", cfg.chain.pca_rows.to_string());
        put("pca_cols", cfg.chain.pca_cols.to_string());
        put("bda_rows", cfg.chain.bda_rows.to_string());
        put("bda_cols", cfg.chain.bda_cols.to_string());
        put("pca_dim", cfg.chain.pca_dim.to_string());
        put("time_cols", cfg.time_cols.to_string());
        put("appearance_relative", cfg.appearance_relative.to_string());
        put("gabor_scales", cfg.gabor_scales.to_string());
        put("gabor_orientations", cfg.gabor_orientations.to_string());
        put("kernel_size", cfg.kernel_size.to_string());
        put("base_wavelength", cfg.gabor.base_wavelength.to_string());
        put("wavelength_ratio", cfg.gabor.wavelength_ratio.to_string());
        put("sigma_ratio", cfg.gabor.sigma_ratio.to_string());
        put("grid_step", cfg.grid_step.to_string());
        put("lk_levels", cfg.lk.levels.to_string());
        put("lk_window", cfg.lk.window.to_string());
        put("lk_iters", cfg.lk.max_iters.to_string());
        put("lk_eps", cfg.lk.eps.to_string());
        put("lk_min_eig_ratio", cfg.lk.min_eig_ratio.to_string());
        put("epochs", cfg.structure.epochs.to_string());
        put("lr", cfg.structure.hybrid.lr.to_string());
        put("ridge", cfg.structure.hybrid.ridge.to_string());
        put("rule_cap", cfg.structure.rule_cap.to_string());
        put("jitter", cfg.structure.jitter.to_string());
        put("polish_epochs", cfg.polish_epochs.to_string());
        put("val_fraction", cfg.val_fraction.to_string());
        put("upper_points", format_list(&cfg.regions.upper));
        put("lower_points", format_list(&cfg.regions.lower));
        put("upper_crop", format_rect(&cfg.upper_crop));
        put("lower_crop", format_rect(&cfg.lower_crop));
        put("min_leaf", self.tree.min_leaf.to_string());
        put("prune", self.tree.confidence.is_some().to_string());
        if let Some(c) = self.tree.confidence {
            put("confidence", c.to_string());
        }
        m.into_iter().collect()
    }

    pub fn tree_snapshot(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("min_leaf".to_string(), self.tree.min_leaf.to_string()),
            ("prune".to_string(), self.tree.confidence.is_some().to_string()),
        ];
        if let Some(c) = self.tree.confidence {
            v.push(("confidence".to_string(), c.to_string()));
        }
        v
    }

    /// Everything that influences extracted features, for cache keys.
    pub fn extraction_key(cfg: &PipelineConfig) -> String {
        format!(
            "regions={:?};upper_crop={:?};lower_crop={:?};bank={}x{}x{}:{:?};grid={};lk={:?}",
            cfg.regions,
            cfg.upper_crop,
            cfg.lower_crop,
            cfg.gabor_scales,
            cfg.gabor_orientations,
            cfg.kernel_size,
            cfg.gabor,
            cfg.grid_step,
            cfg.lk
        )
    }
}
