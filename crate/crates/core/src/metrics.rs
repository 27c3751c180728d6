//! PSNR, SSIM, and the training-loss suite for decomposition and
//! enhancement.
//!
//! Every L1-style loss here is a mean rather than a sum so the weights are
//! resolution independent.

use crate::error::{CoreError, Result};
use crate::image::{extract_illumination, Image, Map};
use crate::ops::forward_gradients;

/// Coefficients of the decomposition loss plus the two stabilizers used by
/// the smoothness and mutual-consistency terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_rs: f64,
    pub w_mc: f64,
    pub w_is: f64,
    /// Denominator floor of the illumination smoothness term.
    pub smooth_eps: f64,
    /// Decay constant of the mutual-consistency integrand.
    pub mutual_c: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_rs: 0.009,
            w_mc: 0.15,
            w_is: 0.2,
            smooth_eps: 0.01,
            mutual_c: 10.0,
        }
    }
}

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(CoreError::argument(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

fn check_map_shapes(a: &Map, b: &Map) -> Result<()> {
    if !a.same_shape(b) {
        return Err(CoreError::argument(format!(
            "map shapes differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Peak signal-to-noise ratio with peak 1.0; identical inputs report
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

// Valid-mode separable Gaussian filtering: horizontal pass then vertical
// pass, output size (h - 10) x (w - 10).
fn gauss_valid(m: &Map) -> Map {
    let k = gaussian_kernel();
    let (h, w) = (m.height(), m.width());
    let wo = w - (SSIM_WINDOW - 1);
    let ho = h - (SSIM_WINDOW - 1);
    let mut tmp = Map::zeros(h, wo);
    for y in 0..h {
        for x in 0..wo {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * m.get(x + i, y);
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = Map::zeros(ho, wo);
    for y in 0..ho {
        for x in 0..wo {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * tmp.get(x, y + i);
            }
            out.set(x, y, acc);
        }
    }
    out
}

fn ssim_map(a: &Map, b: &Map) -> f64 {
    let mu_a = gauss_valid(a);
    let mu_b = gauss_valid(b);
    let aa = gauss_valid(&a.map_values(|v| v * v));
    let bb = gauss_valid(&b.map_values(|v| v * v));
    let mut ab_raw = a.clone();
    for (v, w) in ab_raw.data_mut().iter_mut().zip(b.data()) {
        *v *= w;
    }
    let ab = gauss_valid(&ab_raw);

    let n = mu_a.data().len();
    let mut total = 0.0;
    for i in 0..n {
        let ma = mu_a.data()[i];
        let mb = mu_b.data()[i];
        let va = aa.data()[i] - ma * ma;
        let vb = bb.data()[i] - mb * mb;
        let cov = ab.data()[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
        total += num / den;
    }
    total / n as f64
}

/// Mean structural similarity over 11x11 Gaussian windows (sigma 1.5,
/// C1 = 0.01², C2 = 0.03²), computed per channel and averaged. Requires
/// both dimensions to be at least 11.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(CoreError::argument(format!(
            "ssim needs images at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let mut total = 0.0;
    for c in 0..a.channels() {
        total += ssim_map(&a.channel(c), &b.channel(c));
    }
    Ok(total / a.channels() as f64)
}

/// Reflectance similarity: mean absolute difference of the two reflectance
/// images.
pub fn loss_rs(r_low: &Image, r_norm: &Image) -> Result<f64> {
    check_shapes(r_low, r_norm)?;
    Ok(mean_abs_diff(r_low.data(), r_norm.data()))
}

// One directional smoothness term: mean over pixels of
// |grad L| / max(|grad I_lum|, eps), averaged over x and y.
fn smoothness_term(l: &Map, i: &Image, eps: f64) -> f64 {
    let lum = extract_illumination(i);
    let (lgx, lgy) = forward_gradients(l);
    let (igx, igy) = forward_gradients(&lum);
    let dir = |lg: &Map, ig: &Map| -> f64 {
        lg.data()
            .iter()
            .zip(ig.data())
            .map(|(&g, &d)| g.abs() / d.abs().max(eps))
            .sum::<f64>()
            / lg.data().len() as f64
    };
    0.5 * (dir(&lgx, &igx) + dir(&lgy, &igy))
}

/// Illumination smoothness for the low/normal pair: illumination gradients
/// divided by the (floored) luminance gradients of the matching image.
pub fn loss_is(l_low: &Map, l_norm: &Map, i_low: &Image, i_norm: &Image, eps: f64) -> Result<f64> {
    check_map_shapes(l_low, l_norm)?;
    check_shapes(i_low, i_norm)?;
    if l_low.height() != i_low.height() || l_low.width() != i_low.width() {
        return Err(CoreError::argument("illumination/image dimensions differ"));
    }
    if !(eps > 0.0) {
        return Err(CoreError::argument("smoothness epsilon must be positive"));
    }
    Ok(smoothness_term(l_low, i_low, eps) + smoothness_term(l_norm, i_norm, eps))
}

/// Mutual gradient consistency `mean(M * exp(-c*M))` with
/// `M = |grad L_low| + |grad L_norm|`, averaged over the two directions.
/// Strong shared edges survive, weak ones are damped.
pub fn loss_mc(l_low: &Map, l_norm: &Map, c: f64) -> Result<f64> {
    check_map_shapes(l_low, l_norm)?;
    let (lgx, lgy) = forward_gradients(l_low);
    let (ngx, ngy) = forward_gradients(l_norm);
    let dir = |a: &Map, b: &Map| -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| {
                let m = x.abs() + y.abs();
                m * (-c * m).exp()
            })
            .sum::<f64>()
            / a.data().len() as f64
    };
    Ok(0.5 * (dir(&lgx, &ngx) + dir(&lgy, &ngy)))
}

/// Reconstruction error of both decompositions; the normal-light branch
/// carries no noise term.
pub fn loss_re(
    i_low: &Image,
    r_low: &Image,
    l_low: &Map,
    n_low: &Image,
    i_norm: &Image,
    r_norm: &Image,
    l_norm: &Map,
) -> Result<f64> {
    check_shapes(i_low, r_low)?;
    check_shapes(i_low, n_low)?;
    check_shapes(i_norm, r_norm)?;
    let recon = |i: &Image, r: &Image, l: &Map, n: Option<&Image>| -> f64 {
        let ch = i.channels();
        let mut total = 0.0;
        for px in 0..i.height() * i.width() {
            for c in 0..ch {
                let idx = px * ch + c;
                let rebuilt = r.data()[idx] * l.data()[px] + n.map_or(0.0, |n| n.data()[idx]);
                total += (i.data()[idx] - rebuilt).abs();
            }
        }
        total / i.data().len() as f64
    };
    Ok(recon(i_low, r_low, l_low, Some(n_low)) + recon(i_norm, r_norm, l_norm, None))
}

/// Breakdown of the decomposition loss.
#[derive(Debug, Clone, Copy)]
pub struct DecompositionLoss {
    pub re: f64,
    pub rs: f64,
    pub mc: f64,
    pub is: f64,
    pub total: f64,
}

impl LossWeights {
    /// `total = re + w_rs*rs + w_mc*mc + w_is*is`.
    pub fn combine(&self, re: f64, rs: f64, mc: f64, is: f64) -> f64 {
        re + self.w_rs * rs + self.w_mc * mc + self.w_is * is
    }
}

/// Weighted decomposition loss over a paired low/normal decomposition.
#[allow(clippy::too_many_arguments)]
pub fn loss_decomposition(
    i_low: &Image,
    r_low: &Image,
    l_low: &Map,
    n_low: &Image,
    i_norm: &Image,
    r_norm: &Image,
    l_norm: &Map,
    weights: &LossWeights,
) -> Result<DecompositionLoss> {
    let re = loss_re(i_low, r_low, l_low, n_low, i_norm, r_norm, l_norm)?;
    let rs = loss_rs(r_low, r_norm)?;
    let mc = loss_mc(l_low, l_norm, weights.mutual_c)?;
    let is = loss_is(l_low, l_norm, i_low, i_norm, weights.smooth_eps)?;
    Ok(DecompositionLoss {
        re,
        rs,
        mc,
        is,
        total: weights.combine(re, rs, mc, is),
    })
}

/// Enhancement loss: reflectance L1 + (1 - SSIM) + illumination L1 +
/// illumination gradient L1.
pub fn loss_enhancement(r_re: &Image, r_norm: &Image, l_en: &Map, l_norm: &Map) -> Result<f64> {
    check_shapes(r_re, r_norm)?;
    check_map_shapes(l_en, l_norm)?;
    let refl_l1 = mean_abs_diff(r_re.data(), r_norm.data());
    let refl_ssim = 1.0 - ssim(r_re, r_norm)?;
    let illum_l1 = mean_abs_diff(l_en.data(), l_norm.data());
    let (egx, egy) = forward_gradients(l_en);
    let (ngx, ngy) = forward_gradients(l_norm);
    let grad_l1 =
        0.5 * (mean_abs_diff(egx.data(), ngx.data()) + mean_abs_diff(egy.data(), ngy.data()));
    Ok(refl_l1 + refl_ssim + illum_l1 + grad_l1)
}
