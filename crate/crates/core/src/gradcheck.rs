//! Finite-difference gradient suite for the warp, the embedding network and
//! the full adversary → warp → embed → loss chain.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adversary::{regularizer_sum, AdversaryConfig, AdversaryNet};
use crate::error::{Error, Result};
use crate::fewshot::{episode_pass, EmbeddingConfig, EmbeddingNet, Head};
use crate::geometry::{identity_reg_grad, AffineMatrix};
use crate::nn::{Mode, Sequential};
use crate::sampler::{affine_grid, bilinear_sample, warp_backward, Image};

pub const THRESHOLD: f64 = 1e-3;
pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-6;
/// One-sided differences disagreeing by more than this (relative) mark a
/// kink; the coordinate is redrawn.
const KINK_TOL: f64 = 1e-3;
/// Allowed change of the central difference when the step is quartered.
const SMOOTH_TOL: f64 = 1e-4;
const MAX_REDRAWS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub trials: usize,
    pub coords_per_trial: usize,
    /// Flip the sign of every analytic gradient (self-test of the checker).
    pub sign_flip: bool,
}

impl Preset {
    pub fn named(name: &str) -> Result<Self> {
        let p = |trials, coords_per_trial, sign_flip| Preset {
            trials,
            coords_per_trial,
            sign_flip,
        };
        match name {
            "default" | "tiny" => Ok(p(100, 6, false)),
            "quick" => Ok(p(10, 3, false)),
            "bug" => Ok(p(10, 3, true)),
            "" => Err(Error::config("preset", "empty preset")),
            other => Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (default, tiny, quick, bug)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub name: String,
    pub trials: usize,
    pub checked: usize,
    pub redrawn: usize,
    pub max_rel_err: f64,
}

impl ComponentReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= THRESHOLD
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub components: Vec<ComponentReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(ComponentReport::passed)
    }

    pub fn worst(&self) -> &ComponentReport {
        self.components
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
            .expect("at least one component")
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>7} {:>8} {:>8} {:>12}  status",
            "component", "trials", "checked", "redrawn", "max_rel_err"
        )?;
        for c in &self.components {
            writeln!(
                f,
                "{:<12} {:>7} {:>8} {:>8} {:>12.3e}  {}",
                c.name,
                c.trials,
                c.checked,
                c.redrawn,
                c.max_rel_err,
                if c.passed() { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference at one coordinate, or `None` at a kink: the one-sided
/// differences disagree, or the central difference moves when the step is
/// quartered (kinks on both sides can fool the one-sided test).
fn central_difference(mut f: impl FnMut(f64) -> f64, x0: f64) -> Option<f64> {
    let (fp, f0, fm) = (f(x0 + STEP), f(x0), f(x0 - STEP));
    let fwd = (fp - f0) / STEP;
    let bwd = (f0 - fm) / STEP;
    let disagree = |a: f64, b: f64, tol: f64| (a - b).abs() > tol * a.abs().max(b.abs()).max(REL_FLOOR);
    if disagree(fwd, bwd, KINK_TOL) {
        return None;
    }
    let central = (fp - fm) / (2.0 * STEP);
    let q = STEP / 4.0;
    let fine = (f(x0 + q) - f(x0 - q)) / (2.0 * q);
    if disagree(central, fine, SMOOTH_TOL) {
        return None;
    }
    Some(central)
}

struct Tally {
    report: ComponentReport,
}

impl Tally {
    fn new(name: &str, trials: usize) -> Self {
        Self {
            report: ComponentReport {
                name: name.into(),
                trials,
                checked: 0,
                redrawn: 0,
                max_rel_err: 0.0,
            },
        }
    }

    /// Checks `coords` randomly drawn coordinates, redrawing at kinks.
    fn check(
        &mut self,
        rng: &mut ChaCha8Rng,
        coords: usize,
        n: usize,
        analytic: &[f64],
        mut f: impl FnMut(usize, f64) -> f64,
        value: impl Fn(usize) -> f64,
    ) {
        let mut done = 0;
        let mut redraws = 0;
        while done < coords.min(n) && redraws < MAX_REDRAWS {
            let k = rng.gen_range(0..n);
            match central_difference(|x| f(k, x), value(k)) {
                Some(num) => {
                    let e = rel_err(analytic[k], num);
                    self.report.max_rel_err = self.report.max_rel_err.max(e);
                    self.report.checked += 1;
                    done += 1;
                }
                None => {
                    redraws += 1;
                    self.report.redrawn += 1;
                }
            }
        }
    }
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    Image::from_fn(h, w, |_, _| rng.gen_range(0.0..1.0))
}

fn near_identity(rng: &mut ChaCha8Rng, spread: f64) -> AffineMatrix {
    let id = AffineMatrix::IDENTITY.entries();
    AffineMatrix::from_entries(std::array::from_fn(|k| id[k] + rng.gen_range(-spread..spread)))
}

fn flip(sign_flip: bool, g: &mut [f64]) {
    if sign_flip {
        g.iter_mut().for_each(|v| *v = -*v);
    }
}

/// `Σ upstream · warp(img, A)` against its gradient in the image and in `A`.
pub fn check_sampler(preset: &Preset, seed: u64) -> ComponentReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("sampler", preset.trials);
    for _ in 0..preset.trials {
        let img = random_image(&mut rng, 8, 8);
        let up = Image::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let a = near_identity(&mut rng, 0.2);
        let f = |img: &Image, a: &AffineMatrix| -> f64 {
            let out = bilinear_sample(img, &affine_grid(a, 8, 8));
            out.data.iter().zip(&up.data).map(|(x, y)| x * y).sum()
        };
        let grads = warp_backward(&img, &affine_grid(&a, 8, 8), &up).expect("shapes match");
        let mut g_aff = grads.affine.to_vec();
        let mut g_img = grads.image.data.clone();
        flip(preset.sign_flip, &mut g_aff);
        flip(preset.sign_flip, &mut g_img);
        let entries = a.entries();
        tally.check(
            &mut rng,
            6,
            6,
            &g_aff,
            |k, x| {
                let mut e = entries;
                e[k] = x;
                f(&img, &AffineMatrix::from_entries(e))
            },
            |k| entries[k],
        );
        tally.check(
            &mut rng,
            preset.coords_per_trial,
            64,
            &g_img,
            |k, x| {
                let mut im = img.clone();
                im.data[k] = x;
                f(&im, &a)
            },
            |k| img.data[k],
        );
    }
    tally.report
}

/// Flat view of every parameter value in `net`.
fn param_index(net: &Sequential) -> Vec<(usize, usize)> {
    net.params()
        .iter()
        .enumerate()
        .flat_map(|(p, param)| (0..param.len()).map(move |k| (p, k)))
        .collect()
}

fn flat_grads(net: &Sequential) -> Vec<f64> {
    net.params().iter().flat_map(|p| p.grad.iter().copied()).collect()
}

fn set_param(net: &mut Sequential, (p, k): (usize, usize), x: f64) -> f64 {
    let mut params = net.params_mut();
    std::mem::replace(&mut params[p].value[k], x)
}

/// Gives batch-norm running statistics non-trivial values so the frozen
/// normalization is exercised.
fn randomize_running_stats(net: &mut Sequential, rng: &mut ChaCha8Rng) {
    for b in net.buffers_mut() {
        let var = b.name.contains("var");
        for v in &mut b.value {
            *v = if var {
                rng.gen_range(0.5..1.5)
            } else {
                rng.gen_range(-0.1..0.1)
            };
        }
    }
}

fn tiny_embedding(rng: &mut ChaCha8Rng) -> EmbeddingNet {
    let cfg = EmbeddingConfig {
        in_channels: 1,
        height: 16,
        width: 16,
        blocks: 2,
        filters: 8,
        h_dim: 32,
    };
    let mut net = EmbeddingNet::new(cfg, rng).expect("valid config");
    randomize_running_stats(&mut net.net, rng);
    for p in net.net.params_mut() {
        if p.name == "gamma" || p.name == "beta" {
            let base = if p.name == "gamma" { 1.0 } else { 0.0 };
            p.value.iter_mut().for_each(|v| *v = base + rng.gen_range(-0.2..0.2));
        }
    }
    net
}

/// `‖embed(x)‖²` summed over a small batch, with frozen normalization.
pub fn check_embedding(preset: &Preset, seed: u64) -> ComponentReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("embedding", preset.trials);
    for _ in 0..preset.trials {
        let mut net = tiny_embedding(&mut rng);
        let imgs: Vec<Image> = (0..2).map(|_| random_image(&mut rng, 16, 16)).collect();
        let refs: Vec<&Image> = imgs.iter().collect();
        let emb = net.forward(&refs, Mode::Eval).expect("shape");
        net.zero_grad();
        let mut up = emb.clone();
        up.data.iter_mut().for_each(|v| *v *= 2.0);
        net.backward(up);
        let mut g = flat_grads(&net.net);
        flip(preset.sign_flip, &mut g);
        let index = param_index(&net.net);
        let values: Vec<f64> = net.net.params().iter().flat_map(|p| p.value.iter().copied()).collect();
        tally.check(
            &mut rng,
            preset.coords_per_trial,
            index.len(),
            &g,
            |k, x| {
                let old = set_param(&mut net.net, index[k], x);
                let e = net.forward(&refs, Mode::Eval).expect("shape");
                set_param(&mut net.net, index[k], old);
                e.data.iter().map(|v| v * v).sum()
            },
            |k| values[k],
        );
    }
    tally.report
}

/// The adversary's objective `L − λΣ‖A − I‖²` on a 2-way 1-shot episode,
/// optionally accumulating its gradient into the adversary parameters.
fn pipeline_objective(
    adv: &mut AdversaryNet,
    cls: &mut EmbeddingNet,
    support: &[Image],
    query: &[Image],
    lambda: f64,
    backward: bool,
) -> f64 {
    let s_refs: Vec<&Image> = support.iter().collect();
    let preds = adv.predict(&s_refs);
    let matrices: Vec<AffineMatrix> = preds.iter().map(|p| p.affine).collect();
    let grids: Vec<_> = matrices.iter().map(|a| affine_grid(a, 16, 16)).collect();
    let warped: Vec<Image> = support
        .iter()
        .zip(&grids)
        .map(|(img, g)| bilinear_sample(img, g))
        .collect();
    let w_refs: Vec<&Image> = warped.iter().collect();
    let q_refs: Vec<&Image> = query.iter().collect();
    let pass = episode_pass(
        cls,
        Head::Euclidean,
        &w_refs,
        &[0, 1],
        &q_refs,
        &[0, 0, 1, 1],
        2,
        Mode::Eval,
        backward,
    )
    .expect("valid episode");
    let objective = pass.output.loss - lambda * regularizer_sum(&matrices);
    if backward {
        let grads: Vec<[f64; 6]> = (0..support.len())
            .map(|j| {
                let wg = warp_backward(&support[j], &grids[j], &pass.image_grads.image(j)).expect("shapes");
                let rg = identity_reg_grad(&matrices[j]);
                std::array::from_fn(|k| wg.affine[k] - lambda * rg[k])
            })
            .collect();
        adv.zero_grad();
        adv.backward(&preds, &grads);
    }
    objective
}

/// Gradient of the adversary objective with respect to every adversary
/// parameter, through the warp, the embedding network and the loss.
pub fn check_pipeline(preset: &Preset, seed: u64) -> ComponentReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("pipeline", preset.trials);
    for _ in 0..preset.trials {
        let mut cls = tiny_embedding(&mut rng);
        let mut adv_cfg = AdversaryConfig::new(16, 16);
        adv_cfg.filters = 4;
        let mut adv = AdversaryNet::with_random_head(adv_cfg, &mut rng).expect("valid config");
        let support: Vec<Image> = (0..2).map(|_| random_image(&mut rng, 16, 16)).collect();
        let query: Vec<Image> = (0..4).map(|_| random_image(&mut rng, 16, 16)).collect();
        let lambda = rng.gen_range(0.0..1.0);
        pipeline_objective(&mut adv, &mut cls, &support, &query, lambda, true);
        let mut g = flat_grads(&adv.net);
        flip(preset.sign_flip, &mut g);
        let index = param_index(&adv.net);
        let values: Vec<f64> = adv.net.params().iter().flat_map(|p| p.value.iter().copied()).collect();
        tally.check(
            &mut rng,
            preset.coords_per_trial,
            index.len(),
            &g,
            |k, x| {
                let old = set_param(&mut adv.net, index[k], x);
                let j = pipeline_objective(&mut adv, &mut cls, &support, &query, lambda, false);
                set_param(&mut adv.net, index[k], old);
                j
            },
            |k| values[k],
        );
    }
    tally.report
}

pub fn run_gradcheck(preset: &Preset, seed: u64) -> GradcheckReport {
    GradcheckReport {
        components: vec![
            check_sampler(preset, seed),
            check_embedding(preset, seed.wrapping_add(1)),
            check_pipeline(preset, seed.wrapping_add(2)),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(Preset::named("default").unwrap().trials, 100);
        assert!(Preset::named("bug").unwrap().sign_flip);
        assert!(matches!(Preset::named(""), Err(Error::Config { .. })));
        assert!(Preset::named("huge").is_err());
    }

    #[test]
    fn quick_suite_passes() {
        let r = run_gradcheck(&Preset::named("quick").unwrap(), 0);
        assert!(r.passed(), "{r}");
        assert!(r.components.iter().all(|c| c.checked > 0));
    }

    #[test]
    fn sign_flip_is_caught() {
        let r = run_gradcheck(&Preset::named("bug").unwrap(), 0);
        assert!(!r.passed());
        assert!(r.worst().max_rel_err > 1.0);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(rel_err(0.0, 0.0), 0.0);
        assert!((rel_err(1.0, 1.001) - 0.001 / 1.001).abs() < 1e-12);
        assert_eq!(rel_err(1e-9, 0.0), 1e-9 / REL_FLOOR);
    }
}
