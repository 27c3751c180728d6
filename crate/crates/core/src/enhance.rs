//! Enhancement step: ratio-driven illumination adjustment, noise- and
//! darkness-conditioned reflectance restoration, and final composition.

use crate::error::{CoreError, Result};
use crate::image::{Decomposition, Image, Map, DELTA_L};
use crate::ops::{bilateral_filter, BilateralParams};
use crate::unfold::{decompose, UnfoldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustMode {
    /// `clamp(ratio * L)`; exact on pairs that differ by a pure
    /// illumination scale.
    LinearRatio,
    /// `L^(1/ratio)`; a tone-curve alternative.
    GammaRatio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceConfig {
    /// Brightening ratio; `None` means derive it from a reference image.
    pub ratio: Option<f64>,
    pub adjust_mode: AdjustMode,
    /// Bilateral parameters of the restoration filter.
    pub restore: BilateralParams,
    /// How strongly the recorded noise magnitude widens the range sigma.
    pub noise_gain: f64,
    /// Noise normalization constant: `mean|N| / noise_norm` scales the
    /// range sigma.
    pub noise_norm: f64,
    /// Mean illumination below this triggers a second filtering pass.
    pub dark_threshold: f64,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        EnhanceConfig {
            ratio: None,
            adjust_mode: AdjustMode::LinearRatio,
            restore: BilateralParams::default(),
            noise_gain: 1.0,
            noise_norm: 0.05,
            dark_threshold: 0.3,
        }
    }
}

/// Mean over pixels of `L_ref / L_low`: the brightness indicator a paired
/// reference implies. `l_low` must respect the illumination floor.
pub fn compute_ratio(l_low: &Map, l_ref: &Map) -> Result<f64> {
    if !l_low.same_shape(l_ref) {
        return Err(CoreError::argument("illumination map shapes differ"));
    }
    if l_low.data().iter().any(|&v| v < DELTA_L) {
        return Err(CoreError::argument(
            "low-light illumination violates the positive floor",
        ));
    }
    let total: f64 = l_low
        .data()
        .iter()
        .zip(l_ref.data())
        .map(|(lo, re)| re / lo)
        .sum();
    Ok(total / l_low.data().len() as f64)
}

/// Brightens the illumination map by the ratio under the selected curve;
/// output is clamped to `[DELTA_L, 1]`.
pub fn adjust_illumination(l: &Map, ratio: f64, mode: AdjustMode) -> Result<Map> {
    if !(ratio > 0.0) {
        return Err(CoreError::argument(format!(
            "ratio must be positive, got {ratio}"
        )));
    }
    Ok(match mode {
        AdjustMode::LinearRatio => l.map_values(|v| (ratio * v).clamp(DELTA_L, 1.0)),
        AdjustMode::GammaRatio => {
            l.map_values(|v| v.max(0.0).powf(1.0 / ratio).clamp(DELTA_L, 1.0))
        }
    })
}

/// Bilateral restoration of the reflectance, conditioned on the recorded
/// noise and the darkness of the scene: the range sigma widens with
/// `mean|N|`, and a second pass runs when `mean(L) < dark_threshold`.
pub fn restore_reflectance(r: &Image, l: &Map, n: &Image, cfg: &EnhanceConfig) -> Result<Image> {
    if !r.same_shape(n) {
        return Err(CoreError::argument("reflectance/noise shapes differ"));
    }
    if l.height() != r.height() || l.width() != r.width() {
        return Err(CoreError::argument("illumination dimensions differ"));
    }
    let mean_abs_noise = n.data().iter().map(|v| v.abs()).sum::<f64>() / n.data().len() as f64;
    let sigma_range =
        cfg.restore.sigma_range * (1.0 + cfg.noise_gain * mean_abs_noise / cfg.noise_norm);
    let params = BilateralParams {
        sigma_range,
        ..cfg.restore
    };
    let passes = if l.mean() < cfg.dark_threshold { 2 } else { 1 };

    let mut channels: Vec<Map> = (0..r.channels()).map(|c| r.channel(c)).collect();
    for _ in 0..passes {
        for ch in channels.iter_mut() {
            *ch = bilateral_filter(ch, &params);
        }
    }
    let filtered = Image::from_channels(&channels)?;
    Ok(filtered.map_values(|v| v.clamp(0.0, 1.0)))
}

/// `I_en = L_en ∘ R_re` per channel, clamped to `[0, 1]`.
pub fn compose(l_en: &Map, r_re: &Image) -> Result<Image> {
    if l_en.height() != r_re.height() || l_en.width() != r_re.width() {
        return Err(CoreError::argument("shape mismatch in composition"));
    }
    let ch = r_re.channels();
    let mut out = Image::zeros(r_re.height(), r_re.width(), ch);
    for px in 0..r_re.height() * r_re.width() {
        let lv = l_en.data()[px];
        for c in 0..ch {
            let idx = px * ch + c;
            out.data_mut()[idx] = (lv * r_re.data()[idx]).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Where the brightening ratio comes from.
#[derive(Debug, Clone, Copy)]
pub enum RatioSource<'a> {
    Value(f64),
    /// Decompose this reference with the same solver configuration and use
    /// the mean illumination ratio.
    Reference(&'a Image),
}

/// Full pipeline: decompose, adjust the illumination, restore the
/// reflectance, compose. Returns the enhanced image together with the
/// low-light decomposition.
pub fn enhance_pipeline(
    i_low: &Image,
    ratio: RatioSource,
    unfold_cfg: &UnfoldConfig,
    enhance_cfg: &EnhanceConfig,
) -> Result<(Image, Decomposition)> {
    let low = decompose(i_low, unfold_cfg)?;
    let ratio_value = match ratio {
        RatioSource::Value(v) => v,
        RatioSource::Reference(i_ref) => {
            let reference = decompose(i_ref, unfold_cfg)?;
            compute_ratio(&low.illumination, &reference.illumination)?
        }
    };
    let l_en = adjust_illumination(&low.illumination, ratio_value, enhance_cfg.adjust_mode)?;
    let r_re = restore_reflectance(&low.reflectance, &low.illumination, &low.noise, enhance_cfg)?;
    let enhanced = compose(&l_en, &r_re)?;
    Ok((enhanced, low))
}
