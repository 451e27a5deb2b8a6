//! Episodic min-max training: the adversary warps support images, the
//! classifier learns on the warped support and clean queries, evaluation runs
//! with no warping at all.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    apply_dropout, regularizer_sum, AdversaryBounds, AdversaryConfig, AdversaryNet, AdversaryOutput, AugmentParams,
    Prediction,
};
use crate::data::{sample_episode, ClassDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::fewshot::{
    compute_prototypes, episode_accuracy, episode_pass, Embedder, EmbeddingConfig, EmbeddingNet, Episode, Head,
};
use crate::geometry::{identity_reg_grad, AffineMatrix};
use crate::nn::Mode;
use crate::optim::Adam;
use crate::sampler::{affine_grid, bilinear_sample, warp_backward, Image, SampleGrid};

/// The four training protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    /// No augmentation.
    Baseline,
    /// Uniformly random warps inside the adversary's bounds.
    StandardAug,
    /// Adversarial warps regularized toward the identity.
    Ma3,
    /// Adversarial warps with `λ = 0`.
    Ma3Lambda0,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] = [
        TrainMode::Baseline,
        TrainMode::StandardAug,
        TrainMode::Ma3,
        TrainMode::Ma3Lambda0,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Baseline => "baseline",
            TrainMode::StandardAug => "standard-aug",
            TrainMode::Ma3 => "ma3",
            TrainMode::Ma3Lambda0 => "ma3-lambda0",
        }
    }

    pub fn is_adversarial(&self) -> bool {
        matches!(self, TrainMode::Ma3 | TrainMode::Ma3Lambda0)
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainMode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::config(
                "mode",
                format!("unknown mode `{s}` (baseline, standard-aug, ma3, ma3-lambda0)"),
            )
        })
    }
}

/// Storage type for checkpoint tensors. Arithmetic is always 64-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F64,
    F32,
}

/// Where the images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetSpec {
    /// Seeded glyphs; class counts per split.
    Synthetic {
        train_classes: usize,
        val_classes: usize,
        test_classes: usize,
        per_class: usize,
        seed: u64,
    },
    /// PNG tree for training (validation classes held out from it) and an
    /// optional separate tree for testing.
    Directory {
        train_dir: String,
        test_dir: Option<String>,
        val_classes: usize,
        invert: bool,
    },
}

/// Every scalar that defines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lambda: f64,
    pub dropout_rate: f64,
    pub theta0: f64,
    pub eps_s: f64,
    /// Pixels; `None` means `0.1 · max(H, W)`.
    pub translate: Option<f64>,
    pub lr_cls: f64,
    pub lr_adv: f64,
    /// Halve the classifier learning rate every this many episodes (0 = never).
    pub lr_halve_every: usize,
    pub episodes: usize,
    pub eval_every: usize,
    pub val_episodes: usize,
    pub test_episodes: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub seed: u64,
    pub precision: Precision,
    pub head: Head,
    pub blocks: usize,
    pub filters: usize,
    pub h_dim: usize,
    pub adv_filters: usize,
    pub adv_output: AdversaryOutput,
    pub freeze_classifier: bool,
    pub freeze_adversary: bool,
    pub image_size: usize,
    pub dataset: DatasetSpec,
    pub rotate_classes: bool,
    pub log_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Ma3,
            lambda: 0.1,
            dropout_rate: 0.5,
            theta0: std::f64::consts::PI,
            eps_s: 0.1,
            translate: None,
            lr_cls: 1e-3,
            lr_adv: 1e-3,
            lr_halve_every: 2000,
            episodes: 5000,
            eval_every: 500,
            val_episodes: 200,
            test_episodes: 600,
            n_way: 5,
            k_shot: 1,
            q_query: 5,
            seed: 0,
            precision: Precision::F64,
            head: Head::Euclidean,
            blocks: 2,
            filters: 16,
            h_dim: 64,
            adv_filters: 8,
            adv_output: AdversaryOutput::Similarity,
            freeze_classifier: false,
            freeze_adversary: false,
            image_size: 16,
            dataset: DatasetSpec::Synthetic {
                train_classes: 50,
                val_classes: 20,
                test_classes: 20,
                per_class: 20,
                seed: 0,
            },
            rotate_classes: false,
            log_wall_clock: false,
        }
    }
}

impl TrainConfig {
    /// Regularization weight actually used by the adversary.
    pub fn effective_lambda(&self) -> f64 {
        match self.mode {
            TrainMode::Ma3Lambda0 => 0.0,
            _ => self.lambda,
        }
    }

    pub fn bounds(&self, height: usize, width: usize) -> AdversaryBounds {
        AdversaryBounds {
            theta0: self.theta0,
            eps_s: self.eps_s,
            translate: self
                .translate
                .unwrap_or_else(|| AdversaryBounds::for_image(height, width).translate),
        }
    }

    pub fn embedding_config(&self, height: usize, width: usize) -> EmbeddingConfig {
        EmbeddingConfig {
            in_channels: 1,
            height,
            width,
            blocks: self.blocks,
            filters: self.filters,
            h_dim: self.h_dim,
        }
    }

    pub fn adversary_config(&self, height: usize, width: usize) -> AdversaryConfig {
        AdversaryConfig {
            in_channels: 1,
            height,
            width,
            filters: self.adv_filters,
            output: self.adv_output,
            bounds: self.bounds(height, width),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episodes", self.episodes),
            ("eval_every", self.eval_every),
            ("n_way", self.n_way),
            ("k_shot", self.k_shot),
            ("q_query", self.q_query),
            ("blocks", self.blocks),
            ("filters", self.filters),
            ("h_dim", self.h_dim),
            ("adv_filters", self.adv_filters),
            ("val_episodes", self.val_episodes),
            ("test_episodes", self.test_episodes),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(
                "lambda",
                format!("must be finite and >= 0, got {}", self.lambda),
            ));
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return Err(Error::config(
                "dropout_rate",
                format!("must lie in [0, 1], got {}", self.dropout_rate),
            ));
        }
        for (key, v) in [("lr_cls", self.lr_cls), ("lr_adv", self.lr_adv)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        if let Head::Cosine { temperature } = self.head {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::config("temperature", "must be positive"));
            }
        }
        if self.image_size < 4 {
            return Err(Error::config("image_size", "must be at least 4"));
        }
        self.bounds(self.image_size, self.image_size).validate()?;
        self.embedding_config(self.image_size, self.image_size)
            .flattened_dim()?;
        Ok(())
    }
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: usize,
    pub loss: f64,
    pub reg: f64,
    pub objective: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub val_ci: Option<f64>,
    pub lambda: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

impl MetricsRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

/// Mean accuracy with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean: f64,
    pub half_width: f64,
    pub episodes: usize,
}

impl EvalResult {
    pub fn from_accuracies(accs: &[f64]) -> Result<Self> {
        let n = accs.len();
        if n == 0 {
            return Err(Error::Contract("evaluation needs at least one episode".into()));
        }
        let mean = accs.iter().sum::<f64>() / n as f64;
        let half_width = if n > 1 {
            let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            mean,
            half_width,
            episodes: n,
        })
    }
}

/// Accuracy of one episode with no warping and eval-mode normalization.
pub fn episode_eval_accuracy(embedder: &mut impl Embedder, head: Head, ep: &Episode) -> Result<f64> {
    let batch: Vec<&Image> = ep.support.iter().chain(&ep.query).map(|(img, _)| img).collect();
    let rows = embedder.embed_batch(&batch, Mode::Eval)?;
    let (s, q) = rows.split_at(ep.support.len());
    let protos = compute_prototypes(s, &ep.support_labels(), ep.n_way)?;
    let out = head.loss(q, &ep.query_labels(), &protos)?;
    Ok(episode_accuracy(&out.probs, &ep.query_labels()))
}

pub fn evaluate(embedder: &mut impl Embedder, head: Head, episodes: &[Episode]) -> Result<EvalResult> {
    let accs = episodes
        .iter()
        .map(|ep| episode_eval_accuracy(embedder, head, ep))
        .collect::<Result<Vec<_>>>()?;
    EvalResult::from_accuracies(&accs)
}

/// RNG stream ids derived from the master seed.
pub mod streams {
    pub const CLASSIFIER_INIT: u64 = 0;
    pub const ADVERSARY_INIT: u64 = 1;
    pub const EPISODES: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const STANDARD_AUG: u64 = 4;
    pub const VAL_EPISODES: u64 = 5;
    pub const TEST_EPISODES: u64 = 6;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples `count` episodes lazily from a fixed stream and evaluates them.
pub fn evaluate_sampled(
    embedder: &mut impl Embedder,
    head: Head,
    ds: &ClassDataset,
    classes: &[usize],
    shape: (usize, usize, usize),
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EvalResult> {
    let (n, k, q) = shape;
    let mut accs = Vec::with_capacity(count);
    for _ in 0..count {
        let ep = sample_episode(ds, classes, n, k, q, rng)?;
        accs.push(episode_eval_accuracy(embedder, head, &ep)?);
    }
    EvalResult::from_accuracies(&accs)
}

/// A dataset with its class partition.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub dataset: ClassDataset,
    pub split: SplitSpec,
}

impl TaskData {
    pub fn new(dataset: ClassDataset, split: SplitSpec) -> Result<Self> {
        split.validate(dataset.num_classes())?;
        Ok(Self { dataset, split })
    }

    /// Builds the dataset named by `config`.
    pub fn from_config(config: &TrainConfig) -> Result<Self> {
        let size = config.image_size;
        let (dataset, split) = match &config.dataset {
            DatasetSpec::Synthetic {
                train_classes,
                val_classes,
                test_classes,
                per_class,
                seed,
            } => {
                let total = train_classes + val_classes + test_classes;
                let ds = crate::data::make_synthetic(total, *per_class, size, *seed)?;
                (ds, SplitSpec::sequential(*train_classes, *val_classes, *test_classes))
            }
            DatasetSpec::Directory {
                train_dir,
                test_dir,
                val_classes,
                invert,
            } => {
                let min = config.k_shot + config.q_query;
                let mut ds = crate::data::load_image_directory(train_dir.as_ref(), size, size, *invert, min)?;
                let n_train_pool = ds.num_classes();
                if *val_classes >= n_train_pool {
                    return Err(Error::config(
                        "val_classes",
                        format!("{val_classes} of {n_train_pool} classes"),
                    ));
                }
                let mut n_test = 0;
                if let Some(dir) = test_dir {
                    let test = crate::data::load_image_directory(dir.as_ref(), size, size, *invert, min)?;
                    n_test = test.num_classes();
                    ds.classes.extend(test.classes);
                    ds.source = format!("{} + {}", ds.source, test.source);
                }
                let mut held =
                    SplitSpec::random(n_train_pool, n_train_pool - val_classes, *val_classes, 0, config.seed)?;
                held.test = (n_train_pool..n_train_pool + n_test).collect();
                (ds, held)
            }
        };
        if config.rotate_classes {
            return TaskData::new(dataset.with_rotated_classes()?, split.with_rotated_classes());
        }
        TaskData::new(dataset, split)
    }
}

/// Classifier, adversary, their optimizers and the run's RNG streams.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub classifier: EmbeddingNet,
    pub adversary: AdversaryNet,
    opt_cls: Adam,
    opt_adv: Adam,
    rng_episodes: ChaCha8Rng,
    rng_dropout: ChaCha8Rng,
    rng_aug: ChaCha8Rng,
    episode: usize,
}

/// Per-step intermediate values, exposed for tests.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub record: MetricsRecord,
    /// Support images as seen by the classifier.
    pub support: Vec<Image>,
    pub matrices: Vec<AffineMatrix>,
    pub dropped: Vec<bool>,
}

impl Trainer {
    pub fn new(config: TrainConfig, height: usize, width: usize) -> Result<Self> {
        config.validate()?;
        let classifier = EmbeddingNet::new(
            config.embedding_config(height, width),
            &mut stream_rng(config.seed, streams::CLASSIFIER_INIT),
        )?;
        let adversary = AdversaryNet::new(
            config.adversary_config(height, width),
            &mut stream_rng(config.seed, streams::ADVERSARY_INIT),
        )?;
        Ok(Self {
            opt_cls: Adam::new(config.lr_cls),
            opt_adv: Adam::new(config.lr_adv),
            rng_episodes: stream_rng(config.seed, streams::EPISODES),
            rng_dropout: stream_rng(config.seed, streams::DROPOUT),
            rng_aug: stream_rng(config.seed, streams::STANDARD_AUG),
            episode: 0,
            classifier,
            adversary,
            config,
        })
    }

    pub fn for_task(config: TrainConfig, data: &TaskData) -> Result<Self> {
        Self::new(config, data.dataset.height, data.dataset.width)
    }

    /// Episodes trained so far.
    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn bounds(&self) -> AdversaryBounds {
        self.adversary.config.bounds
    }

    /// Classifier learning rate for the current episode.
    pub fn current_lr_cls(&self) -> f64 {
        match self.config.lr_halve_every {
            0 => self.config.lr_cls,
            every => self.config.lr_cls * 0.5f64.powi((self.episode / every) as i32),
        }
    }

    /// Digest of every parameter and normalization statistic.
    pub fn state_checksum(&self) -> (u64, u64) {
        (
            self.classifier.net.state_checksum(),
            self.adversary.net.state_checksum(),
        )
    }

    pub fn sample_train_episode(&mut self, data: &TaskData) -> Result<Episode> {
        let c = &self.config;
        sample_episode(
            &data.dataset,
            &data.split.train,
            c.n_way,
            c.k_shot,
            c.q_query,
            &mut self.rng_episodes,
        )
    }

    pub fn train_step(&mut self, ep: &Episode) -> Result<MetricsRecord> {
        Ok(self.train_step_traced(ep)?.record)
    }

    /// One min-max update: warp the support, score the clean queries, then
    /// step the classifier on `L` and the adversary on `−(L − λΣreg)`.
    pub fn train_step_traced(&mut self, ep: &Episode) -> Result<StepTrace> {
        let start = Instant::now();
        let n_support = ep.support.len();
        let lambda = self.config.effective_lambda();
        let (h, w) = (self.classifier.config.height, self.classifier.config.width);

        // 1-2. matrices, then dropout: one uniform per support image in order
        let mut predictions: Vec<Option<Prediction>> = vec![None; n_support];
        let proposed: Vec<AffineMatrix> = match self.config.mode {
            TrainMode::Baseline => vec![AffineMatrix::IDENTITY; n_support],
            TrainMode::StandardAug => {
                let b = self.bounds();
                (0..n_support)
                    .map(|_| {
                        crate::adversary::params_to_affine(&AugmentParams::sample_uniform(&b, &mut self.rng_aug), h, w)
                    })
                    .collect()
            }
            TrainMode::Ma3 | TrainMode::Ma3Lambda0 => vec![AffineMatrix::IDENTITY; n_support],
        };
        let (mut matrices, dropped) = if self.config.mode == TrainMode::Baseline {
            (proposed, vec![true; n_support])
        } else {
            let draws: Vec<f64> = (0..n_support).map(|_| rand::Rng::gen(&mut self.rng_dropout)).collect();
            apply_dropout(&proposed, self.config.dropout_rate, &draws)
        };
        let active: Vec<usize> = (0..n_support).filter(|&j| !dropped[j]).collect();
        if self.config.mode.is_adversarial() && !active.is_empty() {
            let imgs: Vec<&Image> = active.iter().map(|&j| &ep.support[j].0).collect();
            for (&j, pred) in active.iter().zip(self.adversary.predict(&imgs)) {
                matrices[j] = pred.affine;
                predictions[j] = Some(pred);
            }
        }

        // 3. warp the support only
        let mut grids: Vec<Option<SampleGrid>> = vec![None; n_support];
        let support: Vec<Image> = ep
            .support
            .iter()
            .zip(&matrices)
            .enumerate()
            .map(|(j, ((img, _), a))| {
                // adversarial predictions are warped even at the identity so
                // the adversary still receives a gradient there
                if dropped[j] || (predictions[j].is_none() && a.is_identity()) {
                    img.clone()
                } else {
                    let grid = affine_grid(a, img.height, img.width);
                    let out = bilinear_sample(img, &grid);
                    grids[j] = Some(grid);
                    out
                }
            })
            .collect();

        // 4. loss on the queries, gradients into the classifier and images
        self.classifier.zero_grad();
        let s_refs: Vec<&Image> = support.iter().collect();
        let q_refs: Vec<&Image> = ep.query.iter().map(|(img, _)| img).collect();
        let pass = episode_pass(
            &mut self.classifier,
            self.config.head,
            &s_refs,
            &ep.support_labels(),
            &q_refs,
            &ep.query_labels(),
            ep.n_way,
            Mode::Train,
            true,
        )?;
        let loss = pass.output.loss;
        let reg = regularizer_sum(&matrices);
        let record = MetricsRecord {
            episode: self.episode + 1,
            loss,
            reg,
            objective: loss - lambda * reg,
            train_acc: episode_accuracy(&pass.output.probs, &ep.query_labels()),
            val_acc: None,
            val_ci: None,
            lambda,
            seed: self.config.seed,
            wall_ms: None,
        };
        if !loss.is_finite() || !record.objective.is_finite() {
            return Err(Error::NonFinite {
                episode: record.episode,
                detail: record.to_json_line(),
            });
        }

        // adversary gradient of −(L − λΣreg) with respect to each matrix
        let adv_step = self.config.mode.is_adversarial() && !self.config.freeze_adversary && !active.is_empty();
        let mut used: Vec<Prediction> = Vec::new();
        let mut affine_grads: Vec<[f64; 6]> = Vec::new();
        if adv_step {
            for &j in &active {
                let (Some(pred), a) = (predictions[j], &matrices[j]) else {
                    continue;
                };
                let mut g = [0.0; 6];
                if let Some(grid) = &grids[j] {
                    let upstream = pass.image_grads.image(j);
                    let wg = warp_backward(&ep.support[j].0, grid, &upstream)?;
                    g = wg.affine;
                }
                let rg = identity_reg_grad(a);
                for k in 0..6 {
                    g[k] = -g[k] + lambda * rg[k];
                }
                used.push(pred);
                affine_grads.push(g);
            }
        }

        // 5-6. classifier first, then adversary
        if !self.config.freeze_classifier {
            self.opt_cls.lr = self.current_lr_cls();
            self.opt_cls.step(self.classifier.net.params_mut());
        }
        if adv_step {
            // layer caches still hold the forward pass over `active`
            self.adversary.zero_grad();
            self.adversary.backward(&used, &affine_grads);
            self.opt_adv.step(self.adversary.net.params_mut());
        }

        self.episode += 1;
        let mut record = record;
        if self.config.log_wall_clock {
            record.wall_ms = Some(start.elapsed().as_millis() as u64);
        }
        Ok(StepTrace {
            record,
            support,
            matrices,
            dropped,
        })
    }

    /// Validation accuracy on a fixed set of episodes (same every call).
    pub fn evaluate_split(
        &mut self,
        data: &TaskData,
        classes: &[usize],
        count: usize,
        stream: u64,
    ) -> Result<EvalResult> {
        let c = &self.config;
        let shape = (c.n_way, c.k_shot, c.q_query);
        let head = c.head;
        let mut rng = stream_rng(c.seed, stream);
        evaluate_sampled(
            &mut self.classifier,
            head,
            &data.dataset,
            classes,
            shape,
            count,
            &mut rng,
        )
    }

    pub fn validate(&mut self, data: &TaskData) -> Result<EvalResult> {
        let split = data.split.val.clone();
        let count = self.config.val_episodes;
        self.evaluate_split(data, &split, count, streams::VAL_EPISODES)
    }

    pub fn test(&mut self, data: &TaskData) -> Result<EvalResult> {
        let split = data.split.test.clone();
        let count = self.config.test_episodes;
        self.evaluate_split(data, &split, count, streams::TEST_EPISODES)
    }

    /// Trains for the configured number of episodes, validating every
    /// `eval_every` episodes and after the last one. `observer` sees each
    /// record after it is complete.
    pub fn run(
        &mut self,
        data: &TaskData,
        mut observer: impl FnMut(&Trainer, &MetricsRecord) -> Result<()>,
    ) -> Result<Vec<MetricsRecord>> {
        let mut records = Vec::with_capacity(self.config.episodes);
        while self.episode < self.config.episodes {
            let ep = self.sample_train_episode(data)?;
            let mut rec = self.train_step(&ep)?;
            if rec.episode % self.config.eval_every == 0 || rec.episode == self.config.episodes {
                let v = self.validate(data)?;
                rec.val_acc = Some(v.mean);
                rec.val_ci = Some(v.half_width);
            }
            observer(self, &rec)?;
            records.push(rec);
        }
        Ok(records)
    }
}

/// One evaluated λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub stage: u8,
    pub lambda: f64,
    pub val_acc: f64,
    pub val_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub best: f64,
    pub rows: Vec<LambdaRow>,
}

pub const COARSE_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Five evenly spaced values covering the neighbours of `best` in `coarse`.
pub fn fine_grid(coarse: &[f64], best: f64) -> Vec<f64> {
    let mut sorted = coarse.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let i = sorted.iter().position(|&v| v == best).unwrap_or(0);
    let lo = sorted[i.saturating_sub(1)];
    let hi = sorted[(i + 1).min(sorted.len() - 1)];
    if lo == hi {
        return vec![lo];
    }
    (0..5).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect()
}

/// Highest accuracy, ties to the smaller λ.
pub fn select_lambda(rows: &[LambdaRow]) -> Option<f64> {
    rows.iter()
        .fold(None::<&LambdaRow>, |best, r| match best {
            Some(b) if b.val_acc > r.val_acc || (b.val_acc == r.val_acc && b.lambda <= r.lambda) => Some(b),
            _ => Some(r),
        })
        .map(|r| r.lambda)
}

/// Two-stage search: the coarse grid, then five linear points spanning the
/// best coarse value's neighbours. `score(λ)` trains and validates one
/// candidate; values already scored are not rescored. A single-value grid
/// skips the fine stage.
pub fn lambda_search_with(
    coarse: &[f64],
    mut score: impl FnMut(f64) -> Result<(f64, f64)>,
    mut on_row: impl FnMut(&LambdaRow),
) -> Result<LambdaSearch> {
    if coarse.is_empty() {
        return Err(Error::config("lambda_grid", "empty grid"));
    }
    let mut rows: Vec<LambdaRow> = Vec::new();
    let mut eval = |stage: u8, lambda: f64, rows: &mut Vec<LambdaRow>| -> Result<()> {
        if rows.iter().any(|r| r.lambda == lambda) {
            return Ok(());
        }
        let (val_acc, val_ci) = score(lambda)?;
        let row = LambdaRow {
            stage,
            lambda,
            val_acc,
            val_ci,
        };
        on_row(&row);
        rows.push(row);
        Ok(())
    };
    for &l in coarse {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::config("lambda_grid", format!("invalid λ {l}")));
        }
        eval(1, l, &mut rows)?;
    }
    if rows.len() > 1 {
        let best = select_lambda(&rows).expect("nonempty");
        for l in fine_grid(coarse, best) {
            eval(2, l, &mut rows)?;
        }
    }
    let best = select_lambda(&rows).expect("nonempty");
    Ok(LambdaSearch { best, rows })
}

/// λ search that trains a fresh `ma3` run per candidate and scores it on
/// the validation split.
pub fn lambda_search(
    base: &TrainConfig,
    data: &TaskData,
    coarse: &[f64],
    on_row: impl FnMut(&LambdaRow),
) -> Result<LambdaSearch> {
    lambda_search_with(
        coarse,
        |lambda| {
            let mut cfg = base.clone();
            cfg.mode = TrainMode::Ma3;
            cfg.lambda = lambda;
            cfg.eval_every = cfg.episodes;
            let mut t = Trainer::for_task(cfg, data)?;
            let recs = t.run(data, |_, _| Ok(()))?;
            let last = recs.last().expect("episodes > 0");
            Ok((last.val_acc.unwrap_or(0.0), last.val_ci.unwrap_or(0.0)))
        },
        on_row,
    )
}
