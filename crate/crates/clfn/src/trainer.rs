//! The dual-loss training loop.
//!
//! Every step draws one ray batch and one random low LOD, then minimizes the
//! sum of two squared-L2 terms: predictions at the maximum LOD against raw
//! pixel colors, and predictions at the low LOD against box-filtered colors
//! at that LOD's scale. One Adam step per batch; the learning rate decays
//! exponentially per epoch.
//!
//! Randomness is derived per `(seed, epoch, batch)` so batches are
//! reproducible in isolation and training can resume from any epoch
//! checkpoint with a bit-identical trajectory.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::lod::{scale_for_lod, ArchConfig};
use crate::mlp::{adam_step, ray_batch, AdamParams, AdamState, Gradients, VariableWidthMlp};
use crate::sampler::{build_ray_pdf, sample_batch, RayPdf, TrainingView, DEFAULT_FG_THRESHOLD};

/// How the per-batch low LOD is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LodSampling {
    /// Uniform over the continuous range, exercising every blend factor.
    ContinuousUniform,
    /// Uniform over integer LODs (discrete widths only).
    IntegerUniform,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f64,
    /// Per-epoch exponential decay factor.
    pub lr_decay: f64,
    pub lambda_f: f64,
    pub lambda_s: f64,
    pub fg_threshold: f32,
    pub seed: u64,
    /// Low-LOD sampling range; `None` means the full `[1, max_lod)`.
    pub lod_range: Option<(f64, f64)>,
    pub lod_sampling: LodSampling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8192,
            lr: 1e-3,
            lr_decay: 0.98,
            lambda_f: 0.4,
            lambda_s: 0.6,
            fg_threshold: DEFAULT_FG_THRESHOLD,
            seed: 0,
            lod_range: None,
            lod_sampling: LodSampling::ContinuousUniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, arch: &ArchConfig) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr decay must lie in (0, 1]"));
        }
        if let Some((lo, hi)) = self.lod_range {
            if !(1.0 <= lo && lo < hi && hi <= arch.max_lod()) {
                return Err(Error::invalid(format!(
                    "lod range [{lo}, {hi}) outside [1, {}]",
                    arch.max_lod()
                )));
            }
        }
        Ok(())
    }
}

/// One logged optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub epoch: u32,
    pub step: u64,
    pub lr: f64,
    pub loss_max: f64,
    pub loss_low: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,step,lr,loss_max,loss_low,total\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.epoch, s.step, s.lr, s.loss_max, s.loss_low, s.total
            ));
        }
        fs::File::create(path)?.write_all(out.as_bytes())?;
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic RNG stream for one batch of one epoch.
pub fn batch_rng(seed: u64, epoch: u32, batch: u64) -> ChaCha8Rng {
    let mixed = splitmix64(seed ^ splitmix64(((epoch as u64) << 32) ^ batch));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Draws the per-batch low LOD uniformly from `[1, max_lod)` and pairs it
/// with its scale.
pub fn sample_lod(arch: &ArchConfig, rng: &mut impl Rng) -> (f64, f64) {
    sample_lod_in(
        arch,
        (1.0, arch.max_lod()),
        LodSampling::ContinuousUniform,
        rng,
    )
}

/// Range- and mode-aware variant used by the training loop.
pub fn sample_lod_in(
    arch: &ArchConfig,
    range: (f64, f64),
    mode: LodSampling,
    rng: &mut impl Rng,
) -> (f64, f64) {
    let lod = match mode {
        LodSampling::ContinuousUniform => rng.random_range(range.0..range.1),
        LodSampling::IntegerUniform => {
            let lo = range.0.ceil() as u64;
            let hi = (range.1.ceil() as u64).max(lo + 1);
            rng.random_range(lo..hi) as f64
        }
    };
    let scale = scale_for_lod(arch, lod).expect("sampled lod stays in range");
    (lod, scale)
}

fn mse_and_grad(pred: &Array2<f32>, target: &Array2<f32>) -> (f64, Array2<f32>) {
    let n = pred.len() as f64;
    let mut loss = 0.0f64;
    let mut grad = Array2::<f32>::zeros(pred.dim());
    for ((g, p), t) in grad.iter_mut().zip(pred.iter()).zip(target.iter()) {
        let d = (*p - *t) as f64;
        loss += d * d;
        *g = (2.0 * d / n) as f32;
    }
    (loss / n, grad)
}

/// One optimizer step over a prepared batch. Returns `(loss_max, loss_low)`;
/// their sum is the training objective.
pub fn train_step(
    model: &mut VariableWidthMlp<f32>,
    state: &mut AdamState<f32>,
    rays: &Array2<f32>,
    low_lod: f64,
    targets_full: &Array2<f32>,
    targets_low: &Array2<f32>,
    lr: f64,
) -> Result<(f64, f64)> {
    let max_lod = model.arch().max_lod();
    let mut grads = Gradients::zeros(model.arch(), model.available_width());

    let (pred_max, trace_max) = model.forward_traced(rays, max_lod)?;
    if pred_max.dim() != targets_full.dim() || pred_max.dim() != targets_low.dim() {
        return Err(Error::invalid("target shapes do not match the batch"));
    }
    let (loss_max, grad_max) = mse_and_grad(&pred_max, targets_full);
    model.backward_into(&trace_max, &grad_max, &mut grads)?;
    drop(trace_max);

    let (pred_low, trace_low) = model.forward_traced(rays, low_lod)?;
    let (loss_low, grad_low) = mse_and_grad(&pred_low, targets_low);
    model.backward_into(&trace_low, &grad_low, &mut grads)?;
    drop(trace_low);

    if !(loss_max + loss_low).is_finite() {
        return Err(Error::NonFinite(format!(
            "training loss (max term {loss_max}, low term {loss_low})"
        )));
    }
    adam_step(model, state, &grads, lr)?;
    Ok((loss_max, loss_low))
}

fn gather_targets(
    views: &[TrainingView],
    batch: &crate::sampler::SampledBatch,
    scale: f64,
) -> Result<Array2<f32>> {
    let mut out = Array2::<f32>::zeros((batch.rays.len(), 4));
    let mut buf = [0.0f64; 4];
    for (i, (&vid, &(x, y))) in batch.view_ids.iter().zip(batch.pixels.iter()).enumerate() {
        let view = &views[vid as usize];
        if scale == 1.0 {
            let px = view.image.pixel(x as usize, y as usize);
            for c in 0..4 {
                out[[i, c]] = px[c];
            }
        } else {
            view.sat
                .filtered_sample_into((x as f64 + 0.5, y as f64 + 0.5), scale, &mut buf)?;
            for c in 0..4 {
                out[[i, c]] = buf[c] as f32;
            }
        }
    }
    Ok(out)
}

/// Batches per epoch: every pixel across the views gets one expected visit.
pub fn batches_per_epoch(views: &[TrainingView], batch_size: usize) -> u64 {
    let total: usize = views.iter().map(|v| v.image.width * v.image.height).sum();
    (total as u64).div_ceil(batch_size as u64)
}

/// Runs the training loop over `epochs`, assuming `state` already reflects
/// everything before `epochs.start`. Appends step records to `log`.
pub fn train_epochs(
    views: &[TrainingView],
    pdfs: &[RayPdf],
    model: &mut VariableWidthMlp<f32>,
    state: &mut AdamState<f32>,
    cfg: &TrainConfig,
    epochs: Range<u32>,
    log: &mut TrainLog,
) -> Result<()> {
    let arch = *model.arch();
    cfg.validate(&arch)?;
    if views.is_empty() {
        return Err(Error::invalid("training needs at least one view"));
    }
    let lod_range = cfg.lod_range.unwrap_or((1.0, arch.max_lod()));
    let n_batches = batches_per_epoch(views, cfg.batch_size);
    for epoch in epochs {
        let lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        for b in 0..n_batches {
            let mut rng = batch_rng(cfg.seed, epoch, b);
            let batch = sample_batch(views, pdfs, cfg.batch_size, &mut rng)?;
            let (low_lod, low_scale) = sample_lod_in(&arch, lod_range, cfg.lod_sampling, &mut rng);
            let rays = ray_batch::<f32>(&batch.rays);
            let targets_full = gather_targets(views, &batch, 1.0)?;
            let targets_low = gather_targets(views, &batch, low_scale)?;
            let (loss_max, loss_low) = train_step(
                model,
                state,
                &rays,
                low_lod,
                &targets_full,
                &targets_low,
                lr,
            )
            .map_err(|e| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("{msg} at epoch {epoch} batch {b}"))
                }
                other => other,
            })?;
            log.steps.push(StepRecord {
                epoch,
                step: epoch as u64 * n_batches + b,
                lr,
                loss_max,
                loss_low,
                total: loss_max + loss_low,
            });
        }
    }
    Ok(())
}

/// Full training run: builds the per-view densities once, trains for
/// `cfg.epochs`, optionally writing per-epoch checkpoints (model stream plus
/// optimizer sidecar) and the loss log under `out_dir`.
pub fn train(
    views: &[TrainingView],
    model: &mut VariableWidthMlp<f32>,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainLog> {
    let arch = *model.arch();
    cfg.validate(&arch)?;
    if views.is_empty() {
        return Err(Error::invalid("training needs at least one view"));
    }
    let pdfs: Vec<RayPdf> = views
        .iter()
        .map(|v| build_ray_pdf(v, cfg.lambda_f, cfg.lambda_s, cfg.fg_threshold))
        .collect::<Result<_>>()?;
    let mut state = AdamState::new(model, AdamParams::default());
    let mut log = TrainLog::default();
    let ckpt_dir = out_dir.map(|d| d.join("checkpoints"));
    if let Some(dir) = &ckpt_dir {
        fs::create_dir_all(dir)?;
    }
    for epoch in 0..cfg.epochs {
        train_epochs(
            views,
            &pdfs,
            model,
            &mut state,
            cfg,
            epoch..epoch + 1,
            &mut log,
        )?;
        if let Some(dir) = &ckpt_dir {
            let stream = codec::encode(model);
            fs::write(
                dir.join(format!("epoch_{epoch:04}.clfn")),
                stream.to_bytes(),
            )?;
            fs::write(
                dir.join(format!("epoch_{epoch:04}.adam")),
                codec::encode_adam(&state, &arch, model.available_width()),
            )?;
        }
    }
    if let Some(dir) = out_dir {
        log.write_csv(&dir.join("loss_log.csv"))?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Image;
    use crate::synth;
    use nalgebra::Vector3;

    fn small_arch() -> ArchConfig {
        ArchConfig {
            input_dim: 6,
            output_dim: 4,
            layers: 3,
            min_width: 4,
            max_width: 8,
        }
    }

    fn tiny_views(n_cams: usize, res: u32) -> Vec<TrainingView> {
        let scene = synth::SceneSpec::demo();
        let rig = synth::generate_rig(n_cams, 1, 3.0, Vector3::zeros(), (res, res), 45.0).unwrap();
        rig.into_iter()
            .map(|cam| {
                let (img, sal) = synth::render_ground_truth(&scene, &cam, (res, res)).unwrap();
                TrainingView::new(img, sal, cam).unwrap()
            })
            .collect()
    }

    #[test]
    fn sampled_scale_always_matches_the_sampled_lod() {
        let arch = small_arch();
        let mut rng = batch_rng(1, 0, 0);
        for _ in 0..1000 {
            let (lod, scale) = sample_lod(&arch, &mut rng);
            assert_eq!(scale, scale_for_lod(&arch, lod).unwrap());
            assert!((1.0..arch.max_lod()).contains(&lod));
        }
    }

    #[test]
    fn lod_draws_are_uniform_by_ks_test() {
        let arch = small_arch();
        let mut rng = batch_rng(2, 0, 0);
        let n = 100_000usize;
        let mut draws: Vec<f64> = (0..n).map(|_| sample_lod(&arch, &mut rng).0).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let span = arch.max_lod() - 1.0;
        let mut d = 0.0f64;
        for (i, x) in draws.iter().enumerate() {
            let cdf = (x - 1.0) / span;
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        // Asymptotic Kolmogorov-Smirnov critical value at significance
        // 0.001: sqrt(-ln(alpha/2)/2) / sqrt(n).
        let critical = (-(0.0005f64).ln() / 2.0).sqrt() / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} exceeds {critical}");
        assert!(*draws.first().unwrap() >= 1.0);
        assert!(*draws.last().unwrap() < arch.max_lod());
    }

    #[test]
    fn integer_mode_draws_integer_lods() {
        let arch = small_arch();
        let mut rng = batch_rng(3, 0, 0);
        for _ in 0..200 {
            let (lod, _) = sample_lod_in(
                &arch,
                (1.0, arch.max_lod()),
                LodSampling::IntegerUniform,
                &mut rng,
            );
            assert_eq!(lod, lod.trunc());
        }
    }

    #[test]
    fn matching_targets_give_zero_loss_and_frozen_parameters() {
        let arch = small_arch();
        let mut model = VariableWidthMlp::<f32>::init(&arch, 4).unwrap();
        let mut state = AdamState::new(&model, AdamParams::default());
        let mut rng = batch_rng(4, 0, 0);
        let mut rays = Array2::<f32>::zeros((9, 6));
        for v in rays.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let low_lod = 2.5;
        let targets_full = model.forward(&rays, arch.max_lod()).unwrap();
        let targets_low = model.forward(&rays, low_lod).unwrap();
        let before = model.clone();
        let (l_max, l_low) = train_step(
            &mut model,
            &mut state,
            &rays,
            low_lod,
            &targets_full,
            &targets_low,
            0.01,
        )
        .unwrap();
        assert_eq!(l_max, 0.0);
        assert_eq!(l_low, 0.0);
        assert_eq!(model, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn one_step_decreases_loss_on_a_toy_problem() {
        // Smallest trainable shape: one hidden layer of fixed width 2.
        let arch = ArchConfig {
            input_dim: 6,
            output_dim: 4,
            layers: 2,
            min_width: 2,
            max_width: 2,
        };
        let mut model = VariableWidthMlp::<f32>::init(&arch, 5).unwrap();
        let mut state = AdamState::new(&model, AdamParams::default());
        let rays = Array2::<f32>::from_shape_fn((1, 6), |(_, j)| 0.2 * (j as f32 + 1.0));
        let target = Array2::<f32>::from_elem((1, 4), 0.75);
        let loss_of = |m: &VariableWidthMlp<f32>| {
            let p = m.forward(&rays, 1.0).unwrap();
            p.iter()
                .zip(target.iter())
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                / 4.0
        };
        let before = loss_of(&model);
        let (l_max, _) =
            train_step(&mut model, &mut state, &rays, 1.0, &target, &target, 0.01).unwrap();
        assert!((l_max - before).abs() < 1e-9);
        assert!(loss_of(&model) < before);
    }

    #[test]
    fn reported_loss_matches_direct_recomputation() {
        let arch = small_arch();
        let mut model = VariableWidthMlp::<f32>::init(&arch, 6).unwrap();
        let reference = model.clone();
        let mut state = AdamState::new(&model, AdamParams::default());
        let mut rng = batch_rng(7, 0, 0);
        let mut rays = Array2::<f32>::zeros((17, 6));
        for v in rays.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let mut targets_full = Array2::<f32>::zeros((17, 4));
        let mut targets_low = Array2::<f32>::zeros((17, 4));
        for v in targets_full.iter_mut().chain(targets_low.iter_mut()) {
            *v = rng.random_range(0.0..1.0);
        }
        let low_lod = 3.3;
        let (l_max, l_low) = train_step(
            &mut model,
            &mut state,
            &rays,
            low_lod,
            &targets_full,
            &targets_low,
            0.001,
        )
        .unwrap();
        // Recompute both sums against the pre-step parameters.
        let naive = |pred: &Array2<f32>, t: &Array2<f32>| {
            pred.iter()
                .zip(t.iter())
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                / pred.len() as f64
        };
        let p_max = reference.forward(&rays, arch.max_lod()).unwrap();
        let p_low = reference.forward(&rays, low_lod).unwrap();
        assert!((l_max - naive(&p_max, &targets_full)).abs() < 1e-6);
        assert!((l_low - naive(&p_low, &targets_low)).abs() < 1e-6);
    }

    #[test]
    fn forcing_low_lod_to_max_doubles_the_single_term() {
        let arch = small_arch();
        let mut model = VariableWidthMlp::<f32>::init(&arch, 8).unwrap();
        let mut state = AdamState::new(&model, AdamParams::default());
        let rays = Array2::<f32>::from_shape_fn((5, 6), |(i, j)| (i as f32 - j as f32) * 0.1);
        let targets = Array2::<f32>::from_elem((5, 4), 0.25);
        let (l_max, l_low) = train_step(
            &mut model,
            &mut state,
            &rays,
            arch.max_lod(),
            &targets,
            &targets,
            0.001,
        )
        .unwrap();
        assert!((l_max - l_low).abs() < 1e-12);
        let total = l_max + l_low;
        assert!((total - 2.0 * l_max).abs() < 1e-6 * total.max(1.0));
    }

    #[test]
    fn lr_decays_geometrically_per_epoch() {
        let arch = small_arch();
        let views = tiny_views(2, 16);
        let mut model = VariableWidthMlp::<f32>::init(&arch, 9).unwrap();
        let cfg = TrainConfig {
            epochs: 11,
            batch_size: 256,
            ..TrainConfig::default()
        };
        let log = train(&views, &mut model, &cfg, None).unwrap();
        let at_epoch = |e: u32| {
            log.steps
                .iter()
                .find(|s| s.epoch == e)
                .map(|s| s.lr)
                .unwrap()
        };
        assert_eq!(at_epoch(0), 1e-3);
        let expected = 1e-3 * 0.98f64.powi(10);
        assert!((at_epoch(10) - expected).abs() < 1e-12);
        assert!((expected - 8.1707e-4).abs() < 1e-7);
    }

    #[test]
    fn zero_epochs_is_rejected() {
        let arch = small_arch();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate(&arch).is_err());
    }

    #[test]
    fn same_seed_gives_identical_loss_logs() {
        let arch = small_arch();
        let views = tiny_views(2, 16);
        let run = || {
            let mut model = VariableWidthMlp::<f32>::init(&arch, 10).unwrap();
            let cfg = TrainConfig {
                epochs: 2,
                batch_size: 128,
                seed: 33,
                ..TrainConfig::default()
            };
            train(&views, &mut model, &cfg, None).unwrap().steps
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_resume_reproduces_the_trajectory() {
        let arch = small_arch();
        let views = tiny_views(2, 16);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 128,
            seed: 44,
            ..TrainConfig::default()
        };
        let pdfs: Vec<RayPdf> = views
            .iter()
            .map(|v| build_ray_pdf(v, cfg.lambda_f, cfg.lambda_s, cfg.fg_threshold).unwrap())
            .collect();

        // Uninterrupted run.
        let mut model_a = VariableWidthMlp::<f32>::init(&arch, 11).unwrap();
        let mut state_a = AdamState::new(&model_a, AdamParams::default());
        let mut log_a = TrainLog::default();
        train_epochs(&views, &pdfs, &mut model_a, &mut state_a, &cfg, 0..3, &mut log_a).unwrap();

        // Train one epoch, round-trip through the checkpoint formats, resume.
        let mut model_b = VariableWidthMlp::<f32>::init(&arch, 11).unwrap();
        let mut state_b = AdamState::new(&model_b, AdamParams::default());
        let mut log_b = TrainLog::default();
        train_epochs(&views, &pdfs, &mut model_b, &mut state_b, &cfg, 0..1, &mut log_b).unwrap();
        let model_bytes = codec::encode(&model_b).to_bytes();
        let adam_bytes = codec::encode_adam(&state_b, &arch, model_b.available_width());
        let mut model_c = codec::decode(&model_bytes).unwrap();
        let mut state_c = codec::decode_adam(&adam_bytes, &model_c).unwrap();
        train_epochs(&views, &pdfs, &mut model_c, &mut state_c, &cfg, 1..3, &mut log_b).unwrap();

        assert_eq!(log_a.steps, log_b.steps);
        assert_eq!(model_a, model_c);
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostics() {
        let arch = small_arch();
        let mut model = VariableWidthMlp::<f32>::init(&arch, 12).unwrap();
        model.params.output.bias[0] = f32::INFINITY;
        let mut state = AdamState::new(&model, AdamParams::default());
        let rays = Array2::<f32>::zeros((3, 6));
        let targets = Array2::<f32>::zeros((3, 4));
        let err =
            train_step(&mut model, &mut state, &rays, 2.0, &targets, &targets, 0.001).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn empty_view_set_is_rejected() {
        let arch = small_arch();
        let mut model = VariableWidthMlp::<f32>::init(&arch, 13).unwrap();
        assert!(train(&[], &mut model, &TrainConfig::default(), None).is_err());
    }

    #[test]
    fn batch_count_covers_every_pixel_once() {
        let views = {
            let mut v = tiny_views(1, 16);
            let empty_img = Image::new(16, 16, 4);
            let cam = v[0].camera.clone();
            v.push(TrainingView::new(empty_img, Image::new(16, 16, 1), cam).unwrap());
            v
        };
        assert_eq!(batches_per_epoch(&views, 100), 6); // ceil(512 / 100)
    }
}
