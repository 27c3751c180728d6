//! Trainable patch priors: a one-hidden-layer autoencoder over square
//! patches, trained by masked image modeling against either bilateral-
//! filtered illumination maps or per-patch HOG descriptors.
//!
//! The illumination model doubles as a proximal operator for the solver's
//! L update ([`learned_prox_l`]); either model's encoder (or the raw HOG
//! descriptor) can serve as a gradient-representation distance
//! ([`gradient_rep_loss`]). Gradients are hand-derived and checked against
//! finite differences in the test suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::hog::{self, HogConfig};
use crate::image::{extract_illumination, gamma_transform, Image, Map, DELTA_L};
use crate::ops::{bilateral_filter, BilateralParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    /// Reconstructs bilateral-filtered illumination maps.
    Illumination,
    /// Predicts per-patch HOG descriptors.
    Noise,
}

/// Linear head mapping a hidden vector to one scalar (pre-sigmoid).
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ModulationHead {
    fn apply(&self, hidden: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(hidden)
            .map(|(w, h)| w * h)
            .sum::<f64>()
            + self.bias
    }
}

/// One-hidden-layer patch autoencoder with a rectifier after the encoder.
///
/// `w_enc` is `d_hidden x d_in` row-major, `w_dec` is `d_out x d_hidden`.
/// Illumination models carry one modulation head (and optionally a second
/// one when the multiply/add maps of the proximal step are split).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    pub kind: PriorKind,
    pub patch_size: usize,
    pub mask_ratio: f64,
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub w_enc: Vec<f64>,
    pub b_enc: Vec<f64>,
    pub w_dec: Vec<f64>,
    pub b_dec: Vec<f64>,
    pub mod_head: Option<ModulationHead>,
    pub mod_head_add: Option<ModulationHead>,
}

/// Architecture and target configuration for building/training a prior.
#[derive(Debug, Clone, PartialEq)]
pub struct MaeConfig {
    pub patch_size: usize,
    pub hidden: usize,
    pub mask_ratio: f64,
    /// Use a second, independently-initialized head for the additive part
    /// of the learned proximal step.
    pub split_heads: bool,
    /// Bilateral parameters used to build illumination targets.
    pub bilateral: BilateralParams,
    /// HOG layout used to build noise targets.
    pub hog: HogConfig,
}

impl Default for MaeConfig {
    fn default() -> Self {
        MaeConfig {
            patch_size: 16,
            hidden: 32,
            mask_ratio: 0.75,
            split_heads: false,
            bilateral: BilateralParams::default(),
            hog: HogConfig::default(),
        }
    }
}

/// Optimizer settings. `lr_halving_interval` is in optimizer steps; 0
/// disables the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub lr_halving_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch: 16,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            seed: 0,
            lr_halving_interval: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(CoreError::argument("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(CoreError::argument("beta1 and beta2 must lie in [0, 1)"));
        }
        if self.batch == 0 {
            return Err(CoreError::argument("batch size must be positive"));
        }
        Ok(())
    }
}

impl PriorModel {
    /// Output length for one patch under this configuration.
    fn output_len(kind: PriorKind, cfg: &MaeConfig) -> Result<usize> {
        match kind {
            PriorKind::Illumination => Ok(cfg.patch_size * cfg.patch_size),
            PriorKind::Noise => hog::feature_len(cfg.patch_size, cfg.patch_size, &cfg.hog),
        }
    }

    /// Seeded uniform initialization in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`
    /// per layer. The same seed always yields the same model.
    pub fn seeded(kind: PriorKind, cfg: &MaeConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(kind, cfg, &mut rng)
    }

    fn init_with(kind: PriorKind, cfg: &MaeConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if cfg.patch_size == 0 || cfg.hidden == 0 {
            return Err(CoreError::argument(
                "patch_size and hidden must be positive",
            ));
        }
        if !(0.0..1.0).contains(&cfg.mask_ratio) {
            return Err(CoreError::argument("mask_ratio must lie in [0, 1)"));
        }
        let d_in = cfg.patch_size * cfg.patch_size;
        let d_hidden = cfg.hidden;
        let d_out = Self::output_len(kind, cfg)?;

        let bound_in = 1.0 / (d_in as f64).sqrt();
        let bound_hid = 1.0 / (d_hidden as f64).sqrt();
        let mut draw = |n: usize, bound: f64| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
        };

        let w_enc = draw(d_hidden * d_in, bound_in);
        let b_enc = draw(d_hidden, bound_in);
        let w_dec = draw(d_out * d_hidden, bound_hid);
        let b_dec = draw(d_out, bound_hid);
        let (mod_head, mod_head_add) = match kind {
            PriorKind::Illumination => {
                let head = ModulationHead {
                    weights: draw(d_hidden, bound_hid),
                    bias: draw(1, bound_hid)[0],
                };
                let second = if cfg.split_heads {
                    Some(ModulationHead {
                        weights: draw(d_hidden, bound_hid),
                        bias: draw(1, bound_hid)[0],
                    })
                } else {
                    None
                };
                (Some(head), second)
            }
            PriorKind::Noise => (None, None),
        };

        Ok(PriorModel {
            kind,
            patch_size: cfg.patch_size,
            mask_ratio: cfg.mask_ratio,
            d_in,
            d_hidden,
            d_out,
            w_enc,
            b_enc,
            w_dec,
            b_dec,
            mod_head,
            mod_head_add,
        })
    }
}

/// Boolean pixel mask; `true` marks masked (zeroed) pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }
}

/// Zeroes a seeded selection of `floor(ratio * tiles)` region×region tiles.
/// Visible pixels are kept bit-exact; the output stays full size so the
/// overall structure of the map survives.
pub fn mask_regions(m: &Map, mask_ratio: f64, region: usize, seed: u64) -> Result<(Map, Mask)> {
    if region == 0 || m.height() % region != 0 || m.width() % region != 0 {
        return Err(CoreError::argument(format!(
            "map {}x{} is not a multiple of region {region}",
            m.height(),
            m.width()
        )));
    }
    if !(0.0..1.0).contains(&mask_ratio) {
        return Err(CoreError::argument("mask_ratio must lie in [0, 1)"));
    }
    let tiles_x = m.width() / region;
    let tiles_y = m.height() / region;
    let total = tiles_x * tiles_y;
    let n_masked = (mask_ratio * total as f64).floor() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, total, n_masked);
    let mut tile_masked = vec![false; total];
    for idx in chosen.iter() {
        tile_masked[idx] = true;
    }

    let mut masked = m.clone();
    let mut mask = Mask {
        height: m.height(),
        width: m.width(),
        data: vec![false; m.height() * m.width()],
    };
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            if !tile_masked[ty * tiles_x + tx] {
                continue;
            }
            for y in ty * region..(ty + 1) * region {
                for x in tx * region..(tx + 1) * region {
                    masked.set(x, y, 0.0);
                    mask.data[y * m.width() + x] = true;
                }
            }
        }
    }
    Ok((masked, mask))
}

/// Forward pass: `hidden = relu(W_e x + b_e)`, `prediction = W_d hidden + b_d`.
pub fn mae_forward(model: &PriorModel, patch_in: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if patch_in.len() != model.d_in {
        return Err(CoreError::argument(format!(
            "input length {} does not match d_in {}",
            patch_in.len(),
            model.d_in
        )));
    }
    let mut hidden = vec![0.0; model.d_hidden];
    for j in 0..model.d_hidden {
        let row = &model.w_enc[j * model.d_in..(j + 1) * model.d_in];
        let pre: f64 = row.iter().zip(patch_in).map(|(w, x)| w * x).sum::<f64>() + model.b_enc[j];
        hidden[j] = pre.max(0.0);
    }
    let mut pred = vec![0.0; model.d_out];
    for (o, p) in pred.iter_mut().enumerate() {
        let row = &model.w_dec[o * model.d_hidden..(o + 1) * model.d_hidden];
        *p = row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + model.b_dec[o];
    }
    Ok((hidden, pred))
}

/// One training sample: an input patch, its target vector, and per-entry
/// supervision flags.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub supervised: Vec<bool>,
}

/// Gradients with the same shapes as the trainable weights.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub w_enc: Vec<f64>,
    pub b_enc: Vec<f64>,
    pub w_dec: Vec<f64>,
    pub b_dec: Vec<f64>,
}

/// Mean squared error over the supervised target entries of the batch and
/// its reverse-mode gradients through decoder, rectifier, and encoder.
pub fn mae_loss_and_grads(model: &PriorModel, batch: &[TrainSample]) -> Result<(f64, ModelGrads)> {
    let mut supervised_total = 0usize;
    for s in batch {
        if s.input.len() != model.d_in
            || s.target.len() != model.d_out
            || s.supervised.len() != model.d_out
        {
            return Err(CoreError::argument("sample shape mismatch"));
        }
        supervised_total += s.supervised.iter().filter(|&&f| f).count();
    }
    if supervised_total == 0 {
        return Err(CoreError::argument("batch has no supervised entries"));
    }

    let mut grads = ModelGrads {
        w_enc: vec![0.0; model.w_enc.len()],
        b_enc: vec![0.0; model.b_enc.len()],
        w_dec: vec![0.0; model.w_dec.len()],
        b_dec: vec![0.0; model.b_dec.len()],
    };
    let mut loss = 0.0;
    let scale = 1.0 / supervised_total as f64;

    for s in batch {
        let (hidden, pred) = mae_forward(model, &s.input)?;
        let mut d_pred = vec![0.0; model.d_out];
        for o in 0..model.d_out {
            if s.supervised[o] {
                let e = pred[o] - s.target[o];
                loss += e * e * scale;
                d_pred[o] = 2.0 * e * scale;
            }
        }
        let mut d_hidden = vec![0.0; model.d_hidden];
        for o in 0..model.d_out {
            let dp = d_pred[o];
            if dp == 0.0 {
                continue;
            }
            let row = o * model.d_hidden;
            for j in 0..model.d_hidden {
                grads.w_dec[row + j] += dp * hidden[j];
                d_hidden[j] += model.w_dec[row + j] * dp;
            }
            grads.b_dec[o] += dp;
        }
        for j in 0..model.d_hidden {
            if hidden[j] <= 0.0 {
                continue; // rectifier gate
            }
            let dj = d_hidden[j];
            let row = j * model.d_in;
            for (i, &x) in s.input.iter().enumerate() {
                grads.w_enc[row + i] += dj * x;
            }
            grads.b_enc[j] += dj;
        }
    }
    Ok((loss, grads))
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    beta1: f64,
    beta2: f64,
}

const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(shapes: &[usize], beta1: f64, beta2: f64) -> Self {
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1,
            beta2,
        }
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            for i in 0..p.len() {
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g[i];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Trained model plus the per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PriorModel,
    pub epoch_losses: Vec<f64>,
}

fn patch_values(m: &Map, px: usize, py: usize, patch: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(patch * patch);
    for y in py * patch..(py + 1) * patch {
        for x in px * patch..(px + 1) * patch {
            out.push(m.get(x, y));
        }
    }
    out
}

fn patch_map(m: &Map, px: usize, py: usize, patch: usize) -> Map {
    Map::new(patch, patch, patch_values(m, px, py, patch)).expect("patch dims")
}

// Builds the epoch's sample list, consuming seeded draws (gamma choice and
// mask layout) from the shared training stream.
fn build_samples(
    kind: PriorKind,
    images: &[Image],
    cfg: &MaeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrainSample>> {
    let patch = cfg.patch_size;
    let mut samples = Vec::new();
    for img in images {
        if img.height() % patch != 0 || img.width() % patch != 0 {
            return Err(CoreError::argument(format!(
                "image {}x{} is not a multiple of patch_size {patch}",
                img.height(),
                img.width()
            )));
        }
        let tiles_x = img.width() / patch;
        let tiles_y = img.height() / patch;
        match kind {
            PriorKind::Illumination => {
                let gamma = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
                let augmented = gamma_transform(img, gamma)?;
                let lum = extract_illumination(&augmented);
                let target = bilateral_filter(&lum, &cfg.bilateral);
                let mask_seed: u64 = rng.gen();
                let (masked, _) = mask_regions(&lum, cfg.mask_ratio, patch, mask_seed)?;
                for ty in 0..tiles_y {
                    for tx in 0..tiles_x {
                        let d_out = patch * patch;
                        samples.push(TrainSample {
                            input: patch_values(&masked, tx, ty, patch),
                            target: patch_values(&target, tx, ty, patch),
                            supervised: vec![true; d_out],
                        });
                    }
                }
            }
            PriorKind::Noise => {
                let lum = extract_illumination(img);
                let mask_seed: u64 = rng.gen();
                let (masked, mask) = mask_regions(&lum, cfg.mask_ratio, patch, mask_seed)?;
                for ty in 0..tiles_y {
                    for tx in 0..tiles_x {
                        // Masked tiles only: predict the original patch's
                        // descriptor from the zeroed input.
                        if !mask.get(tx * patch, ty * patch) {
                            continue;
                        }
                        let feature = hog::compute_hog(&patch_map(&lum, tx, ty, patch), &cfg.hog)?;
                        let d_out = feature.values.len();
                        samples.push(TrainSample {
                            input: patch_values(&masked, tx, ty, patch),
                            target: feature.values,
                            supervised: vec![true; d_out],
                        });
                    }
                }
            }
        }
    }
    Ok(samples)
}

/// Masked-image-modeling training loop with Adam. Identical seeds produce
/// identical models and loss traces; `epochs = 0` returns the seeded
/// initialization untouched.
pub fn train_prior(
    kind: PriorKind,
    images: &[Image],
    tc: &TrainConfig,
    cfg: &MaeConfig,
) -> Result<TrainOutcome> {
    if images.is_empty() {
        return Err(CoreError::argument("training image list is empty"));
    }
    tc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut model = PriorModel::init_with(kind, cfg, &mut rng)?;
    let mut adam = Adam::new(
        &[
            model.w_enc.len(),
            model.b_enc.len(),
            model.w_dec.len(),
            model.b_dec.len(),
        ],
        tc.beta1,
        tc.beta2,
    );
    let mut epoch_losses = Vec::with_capacity(tc.epochs);
    let mut steps = 0usize;

    for _ in 0..tc.epochs {
        let samples = build_samples(kind, images, cfg, &mut rng)?;
        if samples.is_empty() {
            return Err(CoreError::argument(
                "no training samples (mask ratio too low for any tile?)",
            ));
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in samples.chunks(tc.batch) {
            let (loss, grads) = mae_loss_and_grads(&model, chunk)?;
            let lr = if tc.lr_halving_interval > 0 {
                tc.lr * 0.5_f64.powi((steps / tc.lr_halving_interval) as i32)
            } else {
                tc.lr
            };
            adam.step(
                &mut [
                    &mut model.w_enc,
                    &mut model.b_enc,
                    &mut model.w_dec,
                    &mut model.b_dec,
                ],
                &[&grads.w_enc, &grads.b_enc, &grads.w_dec, &grads.b_dec],
                lr,
            );
            steps += 1;
            epoch_loss += loss;
            batches += 1;
        }
        epoch_losses.push(epoch_loss / batches as f64);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}

/// Grid of per-patch hidden vectors produced by [`encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub patches_x: usize,
    pub patches_y: usize,
    pub hidden: usize,
    /// Row-major patches, then hidden components.
    pub data: Vec<f64>,
}

impl FeatureGrid {
    pub fn patch(&self, px: usize, py: usize) -> &[f64] {
        let start = (py * self.patches_x + px) * self.hidden;
        &self.data[start..start + self.hidden]
    }
}

/// Applies the encoder to every non-overlapping patch of the map.
pub fn encode(model: &PriorModel, m: &Map) -> Result<FeatureGrid> {
    let patch = model.patch_size;
    if m.height() % patch != 0 || m.width() % patch != 0 {
        return Err(CoreError::argument(format!(
            "map {}x{} is not a multiple of patch_size {patch}",
            m.height(),
            m.width()
        )));
    }
    let patches_x = m.width() / patch;
    let patches_y = m.height() / patch;
    let mut data = Vec::with_capacity(patches_x * patches_y * model.d_hidden);
    for py in 0..patches_y {
        for px in 0..patches_x {
            let (hidden, _) = mae_forward(model, &patch_values(m, px, py, patch))?;
            data.extend_from_slice(&hidden);
        }
    }
    Ok(FeatureGrid {
        patches_x,
        patches_y,
        hidden: model.d_hidden,
        data,
    })
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Learned proximal step for the illumination update: per patch a scalar
/// modulation `m = sigmoid(head(encoder(patch)))` is upsampled
/// nearest-neighbor to pixel resolution, and the result is
/// `Lmid ∘ m + m` clamped to `[DELTA_L, 1]`. Without a second head the same
/// map both multiplies and adds.
pub fn learned_prox_l(model: &PriorModel, lmid: &Map) -> Result<Map> {
    if model.kind != PriorKind::Illumination {
        return Err(CoreError::argument(
            "learned proximal step requires an illumination-kind model",
        ));
    }
    let head = model
        .mod_head
        .as_ref()
        .ok_or_else(|| CoreError::argument("illumination model is missing its modulation head"))?;
    let grid = encode(model, lmid)?;
    let patch = model.patch_size;
    let mut out = Map::zeros(lmid.height(), lmid.width());
    for py in 0..grid.patches_y {
        for px in 0..grid.patches_x {
            let hidden = grid.patch(px, py);
            let mult = logistic(head.apply(hidden));
            let add = match &model.mod_head_add {
                Some(h) => logistic(h.apply(hidden)),
                None => mult,
            };
            for y in py * patch..(py + 1) * patch {
                for x in px * patch..(px + 1) * patch {
                    let v = lmid.get(x, y) * mult + add;
                    out.set(x, y, v.clamp(DELTA_L, 1.0));
                }
            }
        }
    }
    Ok(out)
}

/// Which representation backs the gradient-consistency distance.
#[derive(Debug, Clone)]
pub enum GradientRep<'a> {
    /// Encoder features of a trained prior.
    Learned(&'a PriorModel),
    /// The raw block-normalized descriptor; needs no trained model.
    Hog(&'a HogConfig),
}

/// Mean absolute difference between the gradient representations of two
/// images' luminance maps.
pub fn gradient_rep_loss(rep: &GradientRep, a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(CoreError::argument("image shapes differ"));
    }
    let lum_a = extract_illumination(a);
    let lum_b = extract_illumination(b);
    match rep {
        GradientRep::Learned(model) => {
            let fa = encode(model, &lum_a)?;
            let fb = encode(model, &lum_b)?;
            let n = fa.data.len();
            let total: f64 = fa
                .data
                .iter()
                .zip(&fb.data)
                .map(|(x, y)| (x - y).abs())
                .sum();
            Ok(total / n as f64)
        }
        GradientRep::Hog(cfg) => {
            let ha = hog::compute_hog(&lum_a, cfg)?;
            let hb = hog::compute_hog(&lum_b, cfg)?;
            hog::hog_distance(&ha, &hb)
        }
    }
}
