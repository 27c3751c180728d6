//! Run configuration: plain `key = value` files with `#` comments, dotted
//! key names, hard defaults for every field, and strict validation —
//! unknown keys and out-of-range values are errors that name the key and
//! line.

use std::fmt::Write as _;
use std::path::Path;

use crate::enhance::{AdjustMode, EnhanceConfig};
use crate::error::{CoreError, Result};
use crate::hog::HogConfig;
use crate::metrics::LossWeights;
use crate::ops::BilateralParams;
use crate::priors::{MaeConfig, PriorModel, TrainConfig};
use crate::unfold::{ProxL, ProxN, ProxR, UnfoldConfig};

/// Illumination proximal operator named in a config file; the learned
/// variant is resolved against a model supplied separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxLChoice {
    Identity,
    Bilateral,
    Learned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub input: Option<String>,
    pub output: Option<String>,

    pub unfold_stages: usize,
    pub unfold_mu0: f64,
    pub unfold_mu_growth: f64,
    pub unfold_step_safety: f64,
    pub unfold_prox_l: ProxLChoice,
    pub unfold_prox_r: ProxR,
    pub unfold_prox_n: ProxN,
    pub unfold_record_history: bool,

    pub bilateral_sigma_spatial: f64,
    pub bilateral_sigma_range: f64,
    pub bilateral_radius: usize,

    pub hog_cell_size: usize,
    pub hog_bins: usize,
    pub hog_block_size: usize,
    pub hog_block_stride: usize,
    pub hog_norm_epsilon: f64,

    pub mae_patch_size: usize,
    pub mae_hidden: usize,
    pub mae_mask_ratio: f64,
    pub mae_split_heads: bool,

    pub train_epochs: usize,
    pub train_batch: usize,
    pub train_lr: f64,
    pub train_beta1: f64,
    pub train_beta2: f64,
    pub train_lr_halving_interval: usize,

    pub enhance_ratio: Option<f64>,
    pub enhance_adjust_mode: AdjustMode,
    pub enhance_noise_gain: f64,
    pub enhance_noise_norm: f64,
    pub enhance_dark_threshold: f64,
    pub enhance_sigma_spatial: f64,
    pub enhance_sigma_range: f64,
    pub enhance_radius: usize,

    pub loss_w_rs: f64,
    pub loss_w_mc: f64,
    pub loss_w_is: f64,
    pub loss_smooth_eps: f64,
    pub loss_mutual_c: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bilateral = BilateralParams::default();
        let hog = HogConfig::default();
        let mae = MaeConfig::default();
        let train = TrainConfig::default();
        let enhance = EnhanceConfig::default();
        let loss = LossWeights::default();
        RunConfig {
            seed: 0,
            input: None,
            output: None,
            unfold_stages: 3,
            unfold_mu0: 1.0,
            unfold_mu_growth: 1.5,
            unfold_step_safety: 0.9,
            unfold_prox_l: ProxLChoice::Bilateral,
            unfold_prox_r: ProxR::BoxClamp,
            unfold_prox_n: ProxN::Identity,
            unfold_record_history: false,
            bilateral_sigma_spatial: bilateral.sigma_spatial,
            bilateral_sigma_range: bilateral.sigma_range,
            bilateral_radius: bilateral.radius,
            hog_cell_size: hog.cell_size,
            hog_bins: hog.bins,
            hog_block_size: hog.block_size,
            hog_block_stride: hog.block_stride,
            hog_norm_epsilon: hog.norm_epsilon,
            mae_patch_size: mae.patch_size,
            mae_hidden: mae.hidden,
            mae_mask_ratio: mae.mask_ratio,
            mae_split_heads: mae.split_heads,
            train_epochs: train.epochs,
            train_batch: train.batch,
            train_lr: train.lr,
            train_beta1: train.beta1,
            train_beta2: train.beta2,
            train_lr_halving_interval: train.lr_halving_interval,
            enhance_ratio: None,
            enhance_adjust_mode: enhance.adjust_mode,
            enhance_noise_gain: enhance.noise_gain,
            enhance_noise_norm: enhance.noise_norm,
            enhance_dark_threshold: enhance.dark_threshold,
            enhance_sigma_spatial: enhance.restore.sigma_spatial,
            enhance_sigma_range: enhance.restore.sigma_range,
            enhance_radius: enhance.restore.radius,
            loss_w_rs: loss.w_rs,
            loss_w_mc: loss.w_mc,
            loss_w_is: loss.w_is,
            loss_smooth_eps: loss.smooth_eps,
            loss_mutual_c: loss.mutual_c,
        }
    }
}

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64> {
    value
        .parse()
        .map_err(|_| CoreError::config(line, format!("invalid number for `{key}`: {value}")))
}

fn parse_usize(key: &str, value: &str, line: usize) -> Result<usize> {
    value
        .parse()
        .map_err(|_| CoreError::config(line, format!("invalid count for `{key}`: {value}")))
}

fn parse_u64(key: &str, value: &str, line: usize) -> Result<u64> {
    value
        .parse()
        .map_err(|_| CoreError::config(line, format!("invalid integer for `{key}`: {value}")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CoreError::config(
            line,
            format!("invalid boolean for `{key}`: {value} (use true/false)"),
        )),
    }
}

fn range_err(key: &str, line: usize, requirement: &str) -> CoreError {
    CoreError::config(line, format!("`{key}` must be {requirement}"))
}

impl RunConfig {
    /// Applies one `key = value` pair; `line` is reported in errors (0 for
    /// command-line overrides).
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "seed" => self.seed = parse_u64(key, value, line)?,
            "input" => self.input = Some(value.to_string()),
            "output" => self.output = Some(value.to_string()),

            "unfold.stages" => self.unfold_stages = parse_usize(key, value, line)?,
            "unfold.mu0" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0) {
                    return Err(range_err(key, line, "positive"));
                }
                self.unfold_mu0 = v;
            }
            "unfold.mu_growth" => {
                let v = parse_f64(key, value, line)?;
                if !(v >= 1.0) {
                    return Err(range_err(key, line, "at least 1"));
                }
                self.unfold_mu_growth = v;
            }
            "unfold.step_safety" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(range_err(key, line, "in (0, 1]"));
                }
                self.unfold_step_safety = v;
            }
            "unfold.prox_l" => {
                self.unfold_prox_l = match value {
                    "identity" => ProxLChoice::Identity,
                    "bilateral" => ProxLChoice::Bilateral,
                    "learned" => ProxLChoice::Learned,
                    _ => {
                        return Err(CoreError::config(
                            line,
                            format!("`{key}` must be identity, bilateral, or learned; got {value}"),
                        ))
                    }
                }
            }
            "unfold.prox_r" => {
                self.unfold_prox_r = match value {
                    "box_clamp" => ProxR::BoxClamp,
                    "identity" => ProxR::Identity,
                    _ => {
                        return Err(CoreError::config(
                            line,
                            format!("`{key}` must be box_clamp or identity; got {value}"),
                        ))
                    }
                }
            }
            "unfold.prox_n" => {
                self.unfold_prox_n = match value {
                    "identity" => ProxN::Identity,
                    _ => {
                        return Err(CoreError::config(
                            line,
                            format!("`{key}` must be identity; got {value}"),
                        ))
                    }
                }
            }
            "unfold.record_history" => self.unfold_record_history = parse_bool(key, value, line)?,

            "bilateral.sigma_spatial" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0) {
                    return Err(range_err(key, line, "positive"));
                }
                self.bilateral_sigma_spatial = v;
            }
            "bilateral.sigma_range" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0) {
                    return Err(range_err(key, line, "positive"));
                }
                self.bilateral_sigma_range = v;
            }
            "bilateral.radius" => {
                let v = parse_usize(key, value, line)?;
                if v < 1 {
                    return Err(range_err(key, line, "at least 1"));
                }
                self.bilateral_radius = v;
            }

            "hog.cell_size" => {
                let v = parse_usize(key, value, line)?;
                if v < 1 {
                    return Err(range_err(key, line, "at least 1"));
                }
                self.hog_cell_size = v;
            }
            "hog.bins" => {
                let v = parse_usize(key, value, line)?;
                if v < 2 {
                    return Err(range_err(key, line, "at least 2"));
                }
                self.hog_bins = v;
            }
            "hog.block_size" => {
                let v = parse_usize(key, value, line)?;
                if v < 1 {
                    return Err(range_err(key, line, "at least 1"));
                }
                self.hog_block_size = v;
            }
            "hog.block_stride" => {
                let v = parse_usize(key, value, line)?;
                if v < 1 {
                    return Err(range_err(key, line, "at least 1"));
                }
                self.hog_block_stride = v;
            }
            "hog.norm_epsilon" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0) {
                    return Err(range_err(key, line, "positive"));
                }
                self.hog_norm_epsilon = v;
            }

            "mae.patch_size" => {
                let v = parse_usize(key, value, line)?;
                if v < 1 {
                    return Err(range_err(key, line, "at least 1"));
                }
                self.mae_patch_size = v;
            }
            "mae.hidden" => {
                let v = parse_usize(key, value, line)?;
                if v < 1 {
                    return Err(range_err(key, line, "at least 1"));
                }
                self.mae_hidden = v;
            }
            "mae.mask_ratio" => {
                let v = parse_f64(key, value, line)?;
                if !(0.0..1.0).contains(&v) {
                    return Err(range_err(key, line, "in [0, 1)"));
                }
                self.mae_mask_ratio = v;
            }
            "mae.split_heads" => self.mae_split_heads = parse_bool(key, value, line)?,

            "train.epochs" => self.train_epochs = parse_usize(key, value, line)?,
            "train.batch" => {
                let v = parse_usize(key, value, line)?;
                if v < 1 {
                    return Err(range_err(key, line, "at least 1"));
                }
                self.train_batch = v;
            }
            "train.lr" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0) {
                    return Err(range_err(key, line, "positive"));
                }
                self.train_lr = v;
            }
            "train.beta1" => {
                let v = parse_f64(key, value, line)?;
                if !(0.0..1.0).contains(&v) {
                    return Err(range_err(key, line, "in [0, 1)"));
                }
                self.train_beta1 = v;
            }
            "train.beta2" => {
                let v = parse_f64(key, value, line)?;
                if !(0.0..1.0).contains(&v) {
                    return Err(range_err(key, line, "in [0, 1)"));
                }
                self.train_beta2 = v;
            }
            "train.lr_halving_interval" => {
                self.train_lr_halving_interval = parse_usize(key, value, line)?
            }

            "enhance.ratio" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0) {
                    return Err(range_err(key, line, "positive"));
                }
                self.enhance_ratio = Some(v);
            }
            "enhance.adjust_mode" => {
                self.enhance_adjust_mode = match value {
                    "linear_ratio" => AdjustMode::LinearRatio,
                    "gamma_ratio" => AdjustMode::GammaRatio,
                    _ => {
                        return Err(CoreError::config(
                            line,
                            format!("`{key}` must be linear_ratio or gamma_ratio; got {value}"),
                        ))
                    }
                }
            }
            "enhance.noise_gain" => {
                let v = parse_f64(key, value, line)?;
                if !(v >= 0.0) {
                    return Err(range_err(key, line, "nonnegative"));
                }
                self.enhance_noise_gain = v;
            }
            "enhance.noise_norm" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0) {
                    return Err(range_err(key, line, "positive"));
                }
                self.enhance_noise_norm = v;
            }
            "enhance.dark_threshold" => {
                let v = parse_f64(key, value, line)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(range_err(key, line, "in [0, 1]"));
                }
                self.enhance_dark_threshold = v;
            }
            "enhance.sigma_spatial" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0) {
                    return Err(range_err(key, line, "positive"));
                }
                self.enhance_sigma_spatial = v;
            }
            "enhance.sigma_range" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0) {
                    return Err(range_err(key, line, "positive"));
                }
                self.enhance_sigma_range = v;
            }
            "enhance.radius" => {
                let v = parse_usize(key, value, line)?;
                if v < 1 {
                    return Err(range_err(key, line, "at least 1"));
                }
                self.enhance_radius = v;
            }

            "loss.w_rs" | "loss.w_mc" | "loss.w_is" => {
                let v = parse_f64(key, value, line)?;
                if !(v >= 0.0) {
                    return Err(range_err(key, line, "nonnegative"));
                }
                match key {
                    "loss.w_rs" => self.loss_w_rs = v,
                    "loss.w_mc" => self.loss_w_mc = v,
                    _ => self.loss_w_is = v,
                }
            }
            "loss.smooth_eps" => {
                let v = parse_f64(key, value, line)?;
                if !(v > 0.0) {
                    return Err(range_err(key, line, "positive"));
                }
                self.loss_smooth_eps = v;
            }
            "loss.mutual_c" => {
                let v = parse_f64(key, value, line)?;
                if !(v >= 0.0) {
                    return Err(range_err(key, line, "nonnegative"));
                }
                self.loss_mutual_c = v;
            }

            _ => {
                return Err(CoreError::config(line, format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }

    /// Parses config text, starting from the defaults. Lines are
    /// `key = value`; `#` starts a comment anywhere.
    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CoreError::config(line_no, format!("expected `key = value`, got `{line}`"))
            })?;
            cfg.set(key.trim(), value.trim(), line_no)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path.as_ref())?;
        RunConfig::parse_str(&text)
    }

    /// Serializes every field as `key = value` lines; parsing the result
    /// reproduces this config exactly.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        if let Some(input) = &self.input {
            kv("input", input.clone());
        }
        if let Some(output) = &self.output {
            kv("output", output.clone());
        }
        kv("unfold.stages", self.unfold_stages.to_string());
        kv("unfold.mu0", self.unfold_mu0.to_string());
        kv("unfold.mu_growth", self.unfold_mu_growth.to_string());
        kv("unfold.step_safety", self.unfold_step_safety.to_string());
        kv(
            "unfold.prox_l",
            match self.unfold_prox_l {
                ProxLChoice::Identity => "identity",
                ProxLChoice::Bilateral => "bilateral",
                ProxLChoice::Learned => "learned",
            }
            .to_string(),
        );
        kv(
            "unfold.prox_r",
            match self.unfold_prox_r {
                ProxR::BoxClamp => "box_clamp",
                ProxR::Identity => "identity",
            }
            .to_string(),
        );
        kv("unfold.prox_n", "identity".to_string());
        kv(
            "unfold.record_history",
            self.unfold_record_history.to_string(),
        );
        kv(
            "bilateral.sigma_spatial",
            self.bilateral_sigma_spatial.to_string(),
        );
        kv(
            "bilateral.sigma_range",
            self.bilateral_sigma_range.to_string(),
        );
        kv("bilateral.radius", self.bilateral_radius.to_string());
        kv("hog.cell_size", self.hog_cell_size.to_string());
        kv("hog.bins", self.hog_bins.to_string());
        kv("hog.block_size", self.hog_block_size.to_string());
        kv("hog.block_stride", self.hog_block_stride.to_string());
        kv("hog.norm_epsilon", self.hog_norm_epsilon.to_string());
        kv("mae.patch_size", self.mae_patch_size.to_string());
        kv("mae.hidden", self.mae_hidden.to_string());
        kv("mae.mask_ratio", self.mae_mask_ratio.to_string());
        kv("mae.split_heads", self.mae_split_heads.to_string());
        kv("train.epochs", self.train_epochs.to_string());
        kv("train.batch", self.train_batch.to_string());
        kv("train.lr", self.train_lr.to_string());
        kv("train.beta1", self.train_beta1.to_string());
        kv("train.beta2", self.train_beta2.to_string());
        kv(
            "train.lr_halving_interval",
            self.train_lr_halving_interval.to_string(),
        );
        if let Some(ratio) = self.enhance_ratio {
            kv("enhance.ratio", ratio.to_string());
        }
        kv(
            "enhance.adjust_mode",
            match self.enhance_adjust_mode {
                AdjustMode::LinearRatio => "linear_ratio",
                AdjustMode::GammaRatio => "gamma_ratio",
            }
            .to_string(),
        );
        kv("enhance.noise_gain", self.enhance_noise_gain.to_string());
        kv("enhance.noise_norm", self.enhance_noise_norm.to_string());
        kv(
            "enhance.dark_threshold",
            self.enhance_dark_threshold.to_string(),
        );
        kv(
            "enhance.sigma_spatial",
            self.enhance_sigma_spatial.to_string(),
        );
        kv("enhance.sigma_range", self.enhance_sigma_range.to_string());
        kv("enhance.radius", self.enhance_radius.to_string());
        kv("loss.w_rs", self.loss_w_rs.to_string());
        kv("loss.w_mc", self.loss_w_mc.to_string());
        kv("loss.w_is", self.loss_w_is.to_string());
        kv("loss.smooth_eps", self.loss_smooth_eps.to_string());
        kv("loss.mutual_c", self.loss_mutual_c.to_string());
        s
    }

    pub fn bilateral_params(&self) -> BilateralParams {
        BilateralParams {
            sigma_spatial: self.bilateral_sigma_spatial,
            sigma_range: self.bilateral_sigma_range,
            radius: self.bilateral_radius,
        }
    }

    /// Builds the solver configuration; a learned illumination prior must
    /// be supplied when the config names one.
    pub fn unfold_config(&self, prior: Option<PriorModel>) -> Result<UnfoldConfig> {
        let prox_l = match (self.unfold_prox_l, prior) {
            (ProxLChoice::Identity, _) => ProxL::Identity,
            (ProxLChoice::Bilateral, _) => ProxL::Bilateral(self.bilateral_params()),
            (ProxLChoice::Learned, Some(model)) => ProxL::Learned(model),
            (ProxLChoice::Learned, None) => {
                return Err(CoreError::config(
                    0,
                    "unfold.prox_l = learned requires a prior model (--prior)",
                ))
            }
        };
        Ok(UnfoldConfig {
            stages: self.unfold_stages,
            mu0: self.unfold_mu0,
            mu_growth: self.unfold_mu_growth,
            step_safety: self.unfold_step_safety,
            prox_l,
            prox_r: self.unfold_prox_r,
            prox_n: self.unfold_prox_n,
            record_history: self.unfold_record_history,
        })
    }

    pub fn enhance_config(&self) -> EnhanceConfig {
        EnhanceConfig {
            ratio: self.enhance_ratio,
            adjust_mode: self.enhance_adjust_mode,
            restore: BilateralParams {
                sigma_spatial: self.enhance_sigma_spatial,
                sigma_range: self.enhance_sigma_range,
                radius: self.enhance_radius,
            },
            noise_gain: self.enhance_noise_gain,
            noise_norm: self.enhance_noise_norm,
            dark_threshold: self.enhance_dark_threshold,
        }
    }

    pub fn hog_config(&self) -> HogConfig {
        HogConfig {
            cell_size: self.hog_cell_size,
            bins: self.hog_bins,
            block_size: self.hog_block_size,
            block_stride: self.hog_block_stride,
            norm_epsilon: self.hog_norm_epsilon,
        }
    }

    pub fn mae_config(&self) -> MaeConfig {
        MaeConfig {
            patch_size: self.mae_patch_size,
            hidden: self.mae_hidden,
            mask_ratio: self.mae_mask_ratio,
            split_heads: self.mae_split_heads,
            bilateral: self.bilateral_params(),
            hog: self.hog_config(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train_epochs,
            batch: self.train_batch,
            lr: self.train_lr,
            beta1: self.train_beta1,
            beta2: self.train_beta2,
            seed: self.seed,
            lr_halving_interval: self.train_lr_halving_interval,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            w_rs: self.loss_w_rs,
            w_mc: self.loss_w_mc,
            w_is: self.loss_w_is,
            smooth_eps: self.loss_smooth_eps,
            mutual_c: self.loss_mutual_c,
        }
    }
}
