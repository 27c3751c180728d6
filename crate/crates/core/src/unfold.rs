//! K-stage unfolded alternating proximal-gradient solver for the penalized
//! decomposition objective.
//!
//! Each stage performs one gradient step on the quadratic data-fidelity
//! term for L, applies the selected illumination proximal operator, repeats
//! the gradient/projection pattern for R, and closes with the shrinkage
//! update for N. The penalty weight grows geometrically across stages, and
//! step sizes come from a per-pixel Lipschitz bound with a safety factor,
//! so each descent step cannot increase its own quadratic.

use crate::error::{CoreError, Result};
use crate::image::{init_decomposition, Decomposition, Image, Map, StageSnapshot, DELTA_L};
use crate::ops::{bilateral_filter, shrink_image, BilateralParams};
use crate::priors::{learned_prox_l, PriorModel};

/// Floor added to the squared sup-norm in the step-size denominators.
pub const DELTA_ALPHA: f64 = 1e-6;

/// Proximal operator choice for the illumination update.
#[derive(Debug, Clone)]
pub enum ProxL {
    Identity,
    Bilateral(BilateralParams),
    Learned(PriorModel),
}

/// Proximal operator choice for the reflectance update. Projection onto
/// `[0, 1]` is the exact proximal operator of the box indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxR {
    BoxClamp,
    Identity,
}

/// Proximal operator applied after the shrinkage in the noise update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxN {
    Identity,
}

#[derive(Debug, Clone)]
pub struct UnfoldConfig {
    /// Number of unfolded stages K.
    pub stages: usize,
    /// Initial penalty weight.
    pub mu0: f64,
    /// Per-stage penalty multiplier.
    pub mu_growth: f64,
    /// Fraction of the Lipschitz step actually taken, in (0, 1].
    pub step_safety: f64,
    pub prox_l: ProxL,
    pub prox_r: ProxR,
    pub prox_n: ProxN,
    pub record_history: bool,
}

impl Default for UnfoldConfig {
    fn default() -> Self {
        UnfoldConfig {
            stages: 3,
            mu0: 1.0,
            mu_growth: 1.5,
            step_safety: 0.9,
            prox_l: ProxL::Bilateral(BilateralParams::default()),
            prox_r: ProxR::BoxClamp,
            prox_n: ProxN::Identity,
            record_history: false,
        }
    }
}

impl UnfoldConfig {
    fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) {
            return Err(CoreError::argument("mu0 must be positive"));
        }
        if !(self.mu_growth >= 1.0) {
            return Err(CoreError::argument("mu_growth must be at least 1"));
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return Err(CoreError::argument("step_safety must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Solver state between stages: the current triple, the stage index, and
/// the stage's penalty weight.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub illumination: Map,
    pub reflectance: Image,
    pub noise: Image,
    pub stage: usize,
    pub mu: f64,
}

fn check_triple(l: &Map, r: &Image, n: &Image, i: &Image) -> Result<()> {
    if !r.same_shape(i) || !n.same_shape(i) {
        return Err(CoreError::argument(
            "R/N shape differs from the observation",
        ));
    }
    if l.height() != i.height() || l.width() != i.width() {
        return Err(CoreError::argument(
            "illumination dimensions differ from the observation",
        ));
    }
    Ok(())
}

/// Gradient of the data-fidelity quadratic with respect to the shared
/// illumination: `mu * sum_c R_c (R_c L + N_c - I_c)` per pixel.
pub fn grad_illumination(l: &Map, r: &Image, n: &Image, i: &Image, mu: f64) -> Result<Map> {
    check_triple(l, r, n, i)?;
    let ch = i.channels();
    let mut out = Map::zeros(l.height(), l.width());
    for px in 0..l.height() * l.width() {
        let lv = l.data()[px];
        let mut acc = 0.0;
        for c in 0..ch {
            let idx = px * ch + c;
            let rv = r.data()[idx];
            acc += rv * (rv * lv + n.data()[idx] - i.data()[idx]);
        }
        out.data_mut()[px] = mu * acc;
    }
    Ok(out)
}

/// Gradient of the data-fidelity quadratic with respect to the reflectance:
/// `mu * L (L R_c + N_c - I_c)` per channel.
pub fn grad_reflectance(r: &Image, l_hat: &Map, n: &Image, i: &Image, mu: f64) -> Result<Image> {
    check_triple(l_hat, r, n, i)?;
    let ch = i.channels();
    let mut out = Image::zeros(i.height(), i.width(), ch);
    for px in 0..l_hat.height() * l_hat.width() {
        let lv = l_hat.data()[px];
        for c in 0..ch {
            let idx = px * ch + c;
            out.data_mut()[idx] = mu * lv * (lv * r.data()[idx] + n.data()[idx] - i.data()[idx]);
        }
    }
    Ok(out)
}

fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Lipschitz-bounded step size for the illumination update.
pub fn illumination_step_size(r: &Image, mu: f64, step_safety: f64) -> f64 {
    let r_max = sup_norm(r.data());
    step_safety / (mu * (r_max * r_max * r.channels() as f64 + DELTA_ALPHA))
}

/// Lipschitz-bounded step size for the reflectance update.
pub fn reflectance_step_size(l_hat: &Map, mu: f64, step_safety: f64) -> f64 {
    let l_max = sup_norm(l_hat.data());
    step_safety / (mu * (l_max * l_max + DELTA_ALPHA))
}

/// Gradient-descent point of the L update, before any proximal operator.
pub fn l_descent_step(state: &SolverState, i: &Image, cfg: &UnfoldConfig) -> Result<Map> {
    let grad = grad_illumination(
        &state.illumination,
        &state.reflectance,
        &state.noise,
        i,
        state.mu,
    )?;
    let alpha = illumination_step_size(&state.reflectance, state.mu, cfg.step_safety);
    let mut out = state.illumination.clone();
    for (v, g) in out.data_mut().iter_mut().zip(grad.data()) {
        *v -= alpha * g;
    }
    Ok(out)
}

/// Full L update: descent step, selected proximal operator, clamp to
/// `[DELTA_L, 1]`.
pub fn l_step(state: &SolverState, i: &Image, cfg: &UnfoldConfig) -> Result<Map> {
    let mid = l_descent_step(state, i, cfg)?;
    let proxed = match &cfg.prox_l {
        ProxL::Identity => mid,
        ProxL::Bilateral(params) => bilateral_filter(&mid, params),
        ProxL::Learned(model) => learned_prox_l(model, &mid)?,
    };
    Ok(proxed.map_values(|v| v.clamp(DELTA_L, 1.0)))
}

/// Gradient-descent point of the R update, before the projection.
pub fn r_descent_step(
    state: &SolverState,
    l_hat: &Map,
    i: &Image,
    cfg: &UnfoldConfig,
) -> Result<Image> {
    let grad = grad_reflectance(&state.reflectance, l_hat, &state.noise, i, state.mu)?;
    let alpha = reflectance_step_size(l_hat, state.mu, cfg.step_safety);
    let mut out = state.reflectance.clone();
    for (v, g) in out.data_mut().iter_mut().zip(grad.data()) {
        *v -= alpha * g;
    }
    Ok(out)
}

/// Full R update for the already-updated illumination `l_hat`.
pub fn r_step(state: &SolverState, l_hat: &Map, i: &Image, cfg: &UnfoldConfig) -> Result<Image> {
    let mid = r_descent_step(state, l_hat, i, cfg)?;
    Ok(match cfg.prox_r {
        ProxR::BoxClamp => mid.map_values(|v| v.clamp(0.0, 1.0)),
        ProxR::Identity => mid,
    })
}

/// N update: soft shrinkage of the reconstruction residual at threshold
/// `1/mu`, followed by the (identity) noise proximal operator.
pub fn n_step(
    l_hat: &Map,
    r_next: &Image,
    i: &Image,
    mu: f64,
    cfg: &UnfoldConfig,
) -> Result<Image> {
    let ch = i.channels();
    let mut residual = Image::zeros(i.height(), i.width(), ch);
    for px in 0..i.height() * i.width() {
        let lv = l_hat.data()[px];
        for c in 0..ch {
            let idx = px * ch + c;
            residual.data_mut()[idx] = i.data()[idx] - r_next.data()[idx] * lv;
        }
    }
    let shrunk = shrink_image(&residual, 1.0 / mu)?;
    Ok(match cfg.prox_n {
        ProxN::Identity => shrunk,
    })
}

/// Frobenius norm of `I - R∘L - N`.
pub fn reconstruction_residual(i: &Image, l: &Map, r: &Image, n: &Image) -> f64 {
    let ch = i.channels();
    let mut acc = 0.0;
    for px in 0..i.height() * i.width() {
        let lv = l.data()[px];
        for c in 0..ch {
            let idx = px * ch + c;
            let e = i.data()[idx] - r.data()[idx] * lv - n.data()[idx];
            acc += e * e;
        }
    }
    acc.sqrt()
}

/// Monitoring objective: `|N|_1 + (mu/2) |I - R∘L - N|_F²`. The prior
/// terms live inside the proximal operators and are not evaluated.
pub fn eval_objective(state: &SolverState, i: &Image) -> f64 {
    let l1: f64 = state.noise.data().iter().map(|v| v.abs()).sum();
    let res = reconstruction_residual(i, &state.illumination, &state.reflectance, &state.noise);
    l1 + 0.5 * state.mu * res * res
}

fn snapshot(state: &SolverState, i: &Image) -> StageSnapshot {
    StageSnapshot {
        stage: state.stage,
        illumination: state.illumination.clone(),
        reflectance: state.reflectance.clone(),
        noise: state.noise.clone(),
        residual_norm: reconstruction_residual(
            i,
            &state.illumination,
            &state.reflectance,
            &state.noise,
        ),
    }
}

/// Runs K stages starting from the given triple.
pub fn decompose_from(init: Decomposition, i: &Image, cfg: &UnfoldConfig) -> Result<Decomposition> {
    cfg.validate()?;
    check_triple(&init.illumination, &init.reflectance, &init.noise, i)?;
    let mut state = SolverState {
        illumination: init.illumination,
        reflectance: init.reflectance,
        noise: init.noise,
        stage: 0,
        mu: cfg.mu0,
    };
    let mut history = cfg.record_history.then(|| vec![snapshot(&state, i)]);

    for _ in 0..cfg.stages {
        let l_hat = l_step(&state, i, cfg)?;
        let r_next = r_step(&state, &l_hat, i, cfg)?;
        let n_next = n_step(&l_hat, &r_next, i, state.mu, cfg)?;
        state = SolverState {
            illumination: l_hat,
            reflectance: r_next,
            noise: n_next,
            stage: state.stage + 1,
            mu: state.mu * cfg.mu_growth,
        };
        if let Some(h) = history.as_mut() {
            h.push(snapshot(&state, i));
        }
    }
    Ok(Decomposition {
        illumination: state.illumination,
        reflectance: state.reflectance,
        noise: state.noise,
        stage_history: history,
    })
}

/// Runs K stages from the standard max-channel initialization.
pub fn decompose(i: &Image, cfg: &UnfoldConfig) -> Result<Decomposition> {
    decompose_from(init_decomposition(i), i, cfg)
}
