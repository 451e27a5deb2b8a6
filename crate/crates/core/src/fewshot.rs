//! Episodic few-shot learners: a convolutional embedding network with a
//! squared-Euclidean prototype head and a cosine-similarity prototype head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, Flatten, Layer, Linear, MaxPool2d, Mode, Relu, Sequential};
use crate::sampler::Image;
use crate::tensor::Tensor;

/// Where an episode image came from in its dataset: `(class, instance)`.
pub type ImageRef = (usize, usize);

/// One N-way K-shot task.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub support: Vec<(Image, usize)>,
    pub query: Vec<(Image, usize)>,
    pub support_refs: Vec<ImageRef>,
    pub query_refs: Vec<ImageRef>,
}

impl Episode {
    pub fn support_labels(&self) -> Vec<usize> {
        self.support.iter().map(|(_, l)| *l).collect()
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query.iter().map(|(_, l)| *l).collect()
    }

    /// Checks set sizes, per-class counts and support/query disjointness.
    pub fn validate(&self) -> Result<()> {
        let (n, k, q) = (self.n_way, self.k_shot, self.q_query);
        if self.support.len() != n * k || self.query.len() != n * q {
            return Err(Error::Contract(format!(
                "{} support / {} query items for a {n}-way {k}-shot {q}-query episode",
                self.support.len(),
                self.query.len()
            )));
        }
        let mut counts = vec![(0usize, 0usize); n];
        for (_, l) in &self.support {
            counts
                .get_mut(*l)
                .ok_or_else(|| Error::Contract(format!("label {l} out of range")))?
                .0 += 1;
        }
        for (_, l) in &self.query {
            counts
                .get_mut(*l)
                .ok_or_else(|| Error::Contract(format!("label {l} out of range")))?
                .1 += 1;
        }
        if counts.iter().any(|&(s, qq)| s != k || qq != q) {
            return Err(Error::Contract("unbalanced class counts".into()));
        }
        if self.support_refs.iter().any(|r| self.query_refs.contains(r)) {
            return Err(Error::Contract("an image appears in both support and query".into()));
        }
        Ok(())
    }
}

/// Conv-block embedding architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub blocks: usize,
    pub filters: usize,
    pub h_dim: usize,
}

impl EmbeddingConfig {
    /// Four 64-filter blocks on 28×28 inputs projected to 128 dimensions.
    pub fn omniglot() -> Self {
        Self {
            in_channels: 1,
            height: 28,
            width: 28,
            blocks: 4,
            filters: 64,
            h_dim: 128,
        }
    }

    /// Spatial size after all pooling stages.
    pub fn final_spatial(&self) -> Result<(usize, usize)> {
        let (mut h, mut w) = (self.height, self.width);
        for _ in 0..self.blocks {
            h /= 2;
            w /= 2;
        }
        if h == 0 || w == 0 || self.blocks == 0 || self.filters == 0 || self.h_dim == 0 {
            return Err(Error::config(
                "blocks",
                format!(
                    "{} pooling stages do not fit a {}x{} input",
                    self.blocks, self.height, self.width
                ),
            ));
        }
        Ok((h, w))
    }

    pub fn flattened_dim(&self) -> Result<usize> {
        let (h, w) = self.final_spatial()?;
        Ok(h * w * self.filters)
    }
}

/// `blocks × [conv3×3 → batch-norm → ReLU → maxpool2×2] → flatten`, plus a
/// linear projection when the flattened size differs from `h_dim`.
#[derive(Debug, Clone)]
pub struct EmbeddingNet {
    pub config: EmbeddingConfig,
    pub net: Sequential,
}

impl EmbeddingNet {
    pub fn new(config: EmbeddingConfig, rng: &mut impl Rng) -> Result<Self> {
        let flat = config.flattened_dim()?;
        let mut layers = Vec::new();
        let mut channels = config.in_channels;
        for _ in 0..config.blocks {
            layers.push(Layer::Conv(Conv2d::new(channels, config.filters, rng)));
            layers.push(Layer::BatchNorm(BatchNorm2d::new(config.filters)));
            layers.push(Layer::Relu(Relu::default()));
            layers.push(Layer::MaxPool(MaxPool2d::default()));
            channels = config.filters;
        }
        layers.push(Layer::Flatten(Flatten::default()));
        if flat != config.h_dim {
            layers.push(Layer::Linear(Linear::new(flat, config.h_dim, rng)));
        }
        Ok(Self {
            config,
            net: Sequential::new(layers),
        })
    }

    fn check_input(&self, img: &Image) -> Result<()> {
        let c = &self.config;
        if img.height != c.height || img.width != c.width || img.channels != c.in_channels {
            return Err(Error::config(
                "image_size",
                format!(
                    "network expects {}x{}x{}, got {}x{}x{}",
                    c.height, c.width, c.in_channels, img.height, img.width, img.channels
                ),
            ));
        }
        Ok(())
    }

    /// Embeds a batch; returns `[n, h_dim, 1, 1]`.
    pub fn forward(&mut self, images: &[&Image], mode: Mode) -> Result<Tensor> {
        for img in images {
            self.check_input(img)?;
        }
        Ok(self.net.forward(Tensor::from_images(images.iter().copied()), mode))
    }

    /// Backpropagates `d loss / d embeddings`; returns the image gradients.
    pub fn backward(&mut self, grad: Tensor) -> Tensor {
        self.net.backward(grad)
    }

    /// Eval-mode embedding of one image.
    pub fn embed(&mut self, img: &Image) -> Result<Vec<f64>> {
        Ok(self.forward(&[img], Mode::Eval)?.data)
    }

    pub fn zero_grad(&mut self) {
        self.net.zero_grad();
    }
}

/// Anything that maps a batch of images to embeddings.
pub trait Embedder {
    fn embed_batch(&mut self, images: &[&Image], mode: Mode) -> Result<Vec<Vec<f64>>>;
}

impl Embedder for EmbeddingNet {
    fn embed_batch(&mut self, images: &[&Image], mode: Mode) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward(images, mode)?.rows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub class: usize,
    pub mean: Vec<f64>,
}

/// Class means of the support embeddings, one per class `0..n_way`.
pub fn compute_prototypes(embeddings: &[Vec<f64>], labels: &[usize], n_way: usize) -> Result<Vec<Prototype>> {
    if embeddings.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} embeddings for {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    let dim = embeddings.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; n_way];
    let mut counts = vec![0usize; n_way];
    for (e, &l) in embeddings.iter().zip(labels) {
        if l >= n_way {
            return Err(Error::Contract(format!("label {l} outside 0..{n_way}")));
        }
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(e) {
            *s += v;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Contract(format!("class {missing} has no support example")));
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(class, (s, c))| Prototype {
            class,
            mean: s.into_iter().map(|v| v / c as f64).collect(),
        })
        .collect())
}

/// Routes prototype gradients back to the support embeddings.
pub fn prototype_backward(grad_prototypes: &[Vec<f64>], labels: &[usize]) -> Vec<Vec<f64>> {
    let mut counts = vec![0usize; grad_prototypes.len()];
    for &l in labels {
        counts[l] += 1;
    }
    labels
        .iter()
        .map(|&l| grad_prototypes[l].iter().map(|g| g / counts[l] as f64).collect())
        .collect()
}

/// Loss, probabilities and gradients for one query set.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub probs: Vec<Vec<f64>>,
    pub grad_queries: Vec<Vec<f64>>,
    pub grad_prototypes: Vec<Vec<f64>>,
}

/// Classification head over prototypes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Head {
    /// Negative squared Euclidean distance logits.
    Euclidean,
    /// Temperature-scaled cosine similarity logits.
    Cosine { temperature: f64 },
}

impl Head {
    pub fn loss(&self, queries: &[Vec<f64>], labels: &[usize], prototypes: &[Prototype]) -> Result<LossOutput> {
        match *self {
            Head::Euclidean => protonet_loss(queries, labels, prototypes),
            Head::Cosine { temperature } => cosine_loss(queries, labels, prototypes, temperature),
        }
    }
}

/// Softmax cross-entropy given per-query logits and their Jacobians.
///
/// `logit_grads(q, k, dlogit)` must accumulate `dlogit · ∂logit_qk` into the
/// query/prototype gradient buffers.
fn softmax_cross_entropy(
    logits: Vec<Vec<f64>>,
    labels: &[usize],
    dim: usize,
    n_protos: usize,
    mut logit_grads: impl FnMut(usize, usize, f64, &mut [f64], &mut [f64]),
) -> Result<LossOutput> {
    let m = logits.len();
    if m == 0 {
        return Err(Error::Contract("empty query set".into()));
    }
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(m);
    let mut grad_queries = vec![vec![0.0; dim]; m];
    let mut grad_prototypes = vec![vec![0.0; dim]; n_protos];
    for (q, (row, &label)) in logits.iter().zip(labels).enumerate() {
        if label >= row.len() {
            return Err(Error::Contract(format!("query label {label} has no prototype")));
        }
        let (top, max) = row.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
        );
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != top)
            .map(|(_, &v)| (v - max).exp())
            .sum();
        let lse = max + rest.ln_1p();
        loss += lse - row[label];
        let p: Vec<f64> = row.iter().map(|&v| (v - lse).exp()).collect();
        for (k, &pk) in p.iter().enumerate() {
            let target = if k == label { 1.0 } else { 0.0 };
            let dlogit = (pk - target) / m as f64;
            logit_grads(q, k, dlogit, &mut grad_queries[q], &mut grad_prototypes[k]);
        }
        probs.push(p);
    }
    Ok(LossOutput {
        loss: loss / m as f64,
        probs,
        grad_queries,
        grad_prototypes,
    })
}

/// Prototypical-network loss: `logit_k = −‖e − c_k‖²`.
pub fn protonet_loss(queries: &[Vec<f64>], labels: &[usize], prototypes: &[Prototype]) -> Result<LossOutput> {
    if prototypes.is_empty() {
        return Err(Error::Contract("no prototypes".into()));
    }
    let dim = prototypes[0].mean.len();
    let logits = queries
        .iter()
        .map(|e| {
            prototypes
                .iter()
                .map(|c| -e.iter().zip(&c.mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .collect()
        })
        .collect();
    softmax_cross_entropy(logits, labels, dim, prototypes.len(), |q, k, dl, gq, gc| {
        let e = &queries[q];
        let c = &prototypes[k].mean;
        for d in 0..dim {
            let diff = e[d] - c[d];
            gq[d] += -2.0 * diff * dl;
            gc[d] += 2.0 * diff * dl;
        }
    })
}

const NORM_FLOOR: f64 = 1e-8;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine head: `logit_k = τ · cos(e, c_k)`, norms floored at 1e-8.
pub fn cosine_loss(
    queries: &[Vec<f64>],
    labels: &[usize],
    prototypes: &[Prototype],
    temperature: f64,
) -> Result<LossOutput> {
    if prototypes.is_empty() {
        return Err(Error::Contract("no prototypes".into()));
    }
    let dim = prototypes[0].mean.len();
    let qn: Vec<(f64, bool)> = queries.iter().map(|e| floored(norm(e))).collect();
    let cn: Vec<(f64, bool)> = prototypes.iter().map(|c| floored(norm(&c.mean))).collect();
    let cos: Vec<Vec<f64>> = queries
        .iter()
        .zip(&qn)
        .map(|(e, &(ne, _))| {
            prototypes
                .iter()
                .zip(&cn)
                .map(|(c, &(nc, _))| e.iter().zip(&c.mean).map(|(a, b)| a * b).sum::<f64>() / (ne * nc))
                .collect()
        })
        .collect();
    let logits = cos
        .iter()
        .map(|row| row.iter().map(|c| temperature * c).collect())
        .collect();
    softmax_cross_entropy(logits, labels, dim, prototypes.len(), |q, k, dl, gq, gc| {
        let e = &queries[q];
        let c = &prototypes[k].mean;
        let (ne, e_live) = qn[q];
        let (nc, c_live) = cn[k];
        let s = cos[q][k];
        let g = temperature * dl;
        for d in 0..dim {
            let mut de = c[d] / (ne * nc);
            let mut dc = e[d] / (ne * nc);
            if e_live {
                de -= s * e[d] / (ne * ne);
            }
            if c_live {
                dc -= s * c[d] / (nc * nc);
            }
            gq[d] += g * de;
            gc[d] += g * dc;
        }
    })
}

/// Floored norm and whether the floor was inactive.
fn floored(n: f64) -> (f64, bool) {
    if n > NORM_FLOOR {
        (n, true)
    } else {
        (NORM_FLOOR, false)
    }
}

/// Fraction of queries whose argmax (lowest index on ties) is the label.
pub fn episode_accuracy(probs: &[Vec<f64>], labels: &[usize]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let correct = probs.iter().zip(labels).filter(|(p, &l)| argmax(p) == l).count();
    correct as f64 / probs.len() as f64
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Forward + backward of one episode through an embedding net and head.
/// Returns the loss output and the image gradients for `[support, query]`.
pub struct EpisodePass {
    pub output: LossOutput,
    pub image_grads: Tensor,
}

/// Embeds `support` and `query` as one batch, scores the queries against the
/// support prototypes, and backpropagates into `net` (parameter gradients
/// accumulate) when `backward` is set.
pub fn episode_pass(
    net: &mut EmbeddingNet,
    head: Head,
    support: &[&Image],
    support_labels: &[usize],
    query: &[&Image],
    query_labels: &[usize],
    n_way: usize,
    mode: Mode,
    backward: bool,
) -> Result<EpisodePass> {
    let batch: Vec<&Image> = support.iter().chain(query).copied().collect();
    let emb = net.forward(&batch, mode)?;
    let rows = emb.rows();
    let (s_emb, q_emb) = rows.split_at(support.len());
    let protos = compute_prototypes(s_emb, support_labels, n_way)?;
    let output = head.loss(q_emb, query_labels, &protos)?;
    let image_grads = if backward {
        let mut grads = prototype_backward(&output.grad_prototypes, support_labels);
        grads.extend(output.grad_queries.iter().cloned());
        net.backward(Tensor::from_rows(&grads).reshape(emb.shape))
    } else {
        Tensor::zeros([0, 0, 0, 0])
    };
    Ok(EpisodePass { output, image_grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn protos(rows: &[&[f64]]) -> Vec<Prototype> {
        rows.iter()
            .enumerate()
            .map(|(class, r)| Prototype {
                class,
                mean: r.to_vec(),
            })
            .collect()
    }

    #[test]
    fn prototypes_are_class_means() {
        let p = compute_prototypes(&[vec![0.0, 0.0], vec![2.0, 2.0]], &[0, 0], 1).unwrap();
        assert_eq!(p[0].mean, vec![1.0, 1.0]);
        let p = compute_prototypes(&[vec![3.0, -1.0], vec![5.0, 4.0]], &[1, 0], 2).unwrap();
        assert_eq!(p[0].mean, vec![5.0, 4.0]);
        assert_eq!(p[1].mean, vec![3.0, -1.0]);
        let p2 = compute_prototypes(&[vec![5.0, 4.0], vec![3.0, -1.0]], &[0, 1], 2).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn missing_class_is_rejected() {
        let err = compute_prototypes(&[vec![1.0]], &[0], 2).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn equidistant_query_is_a_coin_flip() {
        let out = protonet_loss(&[vec![1.0, 0.0]], &[0], &protos(&[&[0.0, 0.0], &[2.0, 0.0]])).unwrap();
        assert!((out.probs[0][0] - 0.5).abs() < 1e-12);
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn protonet_hand_computed_example() {
        let out = protonet_loss(&[vec![0.0, 0.5]], &[0], &protos(&[&[0.0, 0.0], &[0.0, 2.0]])).unwrap();
        let p0 = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((out.probs[0][0] - p0).abs() < 1e-12);
        assert!((out.probs[0][0] - 0.8808).abs() < 1e-4);
        assert!((out.loss - 0.1269).abs() < 1e-4);
    }

    #[test]
    fn dominant_logit_gives_vanishing_loss() {
        let out = protonet_loss(
            &[vec![1.0, 1.0]],
            &[0],
            &protos(&[&[1.0, 1.0], &[11.0, 1.0], &[1.0, -9.0]]),
        )
        .unwrap();
        assert!(out.loss <= 1e-40);
    }

    #[test]
    fn cosine_parallel_and_orthogonal() {
        let out = cosine_loss(&[vec![2.0, 0.0]], &[0], &protos(&[&[1.0, 0.0], &[0.0, 3.0]]), 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((out.probs[0][0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((out.probs[0][0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn cosine_identical_prototypes_are_uniform() {
        let out = cosine_loss(&[vec![0.3, -0.7, 1.0]], &[2], &protos(&[&[1.0, 2.0, 3.0][..]; 4]), 10.0).unwrap();
        for p in &out.probs[0] {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_and_ties() {
        assert_eq!(episode_accuracy(&[vec![0.9, 0.1], vec![0.2, 0.8]], &[0, 1]), 1.0);
        assert_eq!(episode_accuracy(&[vec![0.2; 5]], &[0]), 1.0);
        assert_eq!(episode_accuracy(&[vec![0.2; 5]], &[3]), 0.0);
        assert_eq!(episode_accuracy(&[vec![0.9, 0.1], vec![0.9, 0.1]], &[0, 1]), 0.5);
    }

    fn fd_check_head(head: Head, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 5;
        let rand_vec = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let queries: Vec<Vec<f64>> = (0..6).map(|_| rand_vec(&mut rng)).collect();
        let labels = vec![0, 1, 2, 0, 1, 2];
        let ps: Vec<Prototype> = (0..3)
            .map(|class| Prototype {
                class,
                mean: rand_vec(&mut rng),
            })
            .collect();
        let out = head.loss(&queries, &labels, &ps).unwrap();
        let h = 1e-6;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
        for q in 0..queries.len() {
            for d in 0..dim {
                let mut plus = queries.clone();
                let mut minus = queries.clone();
                plus[q][d] += h;
                minus[q][d] -= h;
                let fd = (head.loss(&plus, &labels, &ps).unwrap().loss - head.loss(&minus, &labels, &ps).unwrap().loss)
                    / (2.0 * h);
                assert!(
                    rel(fd, out.grad_queries[q][d]) < 1e-6,
                    "query {q},{d}: {fd} vs {}",
                    out.grad_queries[q][d]
                );
            }
        }
        for k in 0..ps.len() {
            for d in 0..dim {
                let mut plus = ps.clone();
                let mut minus = ps.clone();
                plus[k].mean[d] += h;
                minus[k].mean[d] -= h;
                let fd = (head.loss(&queries, &labels, &plus).unwrap().loss
                    - head.loss(&queries, &labels, &minus).unwrap().loss)
                    / (2.0 * h);
                assert!(rel(fd, out.grad_prototypes[k][d]) < 1e-6, "proto {k},{d}");
            }
        }
    }

    #[test]
    fn head_gradients_match_finite_differences() {
        for seed in 0..10 {
            fd_check_head(Head::Euclidean, seed);
            fd_check_head(Head::Cosine { temperature: 3.0 }, seed);
        }
    }

    #[test]
    fn incompatible_input_size_is_a_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = EmbeddingConfig {
            in_channels: 1,
            height: 8,
            width: 8,
            blocks: 4,
            filters: 4,
            h_dim: 4,
        };
        assert!(matches!(EmbeddingNet::new(cfg, &mut rng), Err(Error::Config { .. })));
        let cfg = EmbeddingConfig { blocks: 2, ..cfg };
        let mut net = EmbeddingNet::new(cfg, &mut rng).unwrap();
        assert!(net.embed(&Image::zeros(9, 8, 1)).is_err());
        assert_eq!(net.embed(&Image::zeros(8, 8, 1)).unwrap().len(), 4);
    }

    #[test]
    fn zero_weights_embed_zero_image_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = EmbeddingConfig {
            in_channels: 1,
            height: 16,
            width: 16,
            blocks: 2,
            filters: 8,
            h_dim: 32,
        };
        let mut net = EmbeddingNet::new(cfg, &mut rng).unwrap();
        for p in net.net.params_mut() {
            if p.name == "weight" || p.name == "bias" {
                p.value.fill(0.0);
            }
        }
        let out = net
            .forward(&[&Image::zeros(16, 16, 1), &Image::zeros(16, 16, 1)], Mode::Train)
            .unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
        assert!(net.embed(&Image::zeros(16, 16, 1)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_is_deterministic_for_a_seed() {
        let cfg = EmbeddingConfig {
            in_channels: 1,
            height: 16,
            width: 16,
            blocks: 2,
            filters: 8,
            h_dim: 32,
        };
        let img = Image::from_fn(16, 16, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        let a = EmbeddingNet::new(cfg, &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap()
            .embed(&img)
            .unwrap();
        let b = EmbeddingNet::new(cfg, &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap()
            .embed(&img)
            .unwrap();
        assert_eq!(a, b);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vecs(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
            proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, dim), n)
        }

        proptest! {
            #[test]
            fn softmax_rows_sum_to_one(q in vecs(4, 3), c in vecs(3, 3), tau in 0.1f64..20.0) {
                let ps: Vec<Prototype> = c.into_iter().enumerate().map(|(class, mean)| Prototype { class, mean }).collect();
                let labels = vec![0, 1, 2, 0];
                for out in [protonet_loss(&q, &labels, &ps).unwrap(), cosine_loss(&q, &labels, &ps, tau).unwrap()] {
                    prop_assert!(out.loss.is_finite());
                    for p in &out.probs {
                        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
                    }
                }
            }

            #[test]
            fn protonet_is_permutation_equivariant(q in vecs(5, 4), c in vecs(3, 4), perm_idx in 0usize..6) {
                let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
                let perm = perms[perm_idx];
                let labels = vec![0, 1, 2, 1, 0];
                let ps: Vec<Prototype> = c.iter().cloned().enumerate().map(|(class, mean)| Prototype { class, mean }).collect();
                // class k is renamed perm[k]
                let mut permuted = ps.clone();
                for (k, p) in ps.iter().enumerate() {
                    permuted[perm[k]] = Prototype { class: perm[k], mean: p.mean.clone() };
                }
                let new_labels: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
                let a = protonet_loss(&q, &labels, &ps).unwrap();
                let b = protonet_loss(&q, &new_labels, &permuted).unwrap();
                prop_assert!((a.loss - b.loss).abs() <= 1e-12);
                for (pa, pb) in a.probs.iter().zip(&b.probs) {
                    for k in 0..3 {
                        prop_assert!((pa[k] - pb[perm[k]]).abs() <= 1e-12);
                    }
                }
            }

            #[test]
            fn cosine_is_scale_invariant(q in proptest::collection::vec(0.1f64..3.0, 3), c in vecs(2, 3), s in 0.01f64..100.0) {
                let ps: Vec<Prototype> = c.into_iter().enumerate().map(|(class, mean)| Prototype { class, mean }).collect();
                let scaled: Vec<f64> = q.iter().map(|v| v * s).collect();
                let a = cosine_loss(&[q], &[0], &ps, 5.0).unwrap();
                let b = cosine_loss(&[scaled], &[0], &ps, 5.0).unwrap();
                for k in 0..2 {
                    prop_assert!((a.probs[0][k] - b.probs[0][k]).abs() <= 1e-9);
                }
            }
        }
    }

    use rand::Rng;
}
