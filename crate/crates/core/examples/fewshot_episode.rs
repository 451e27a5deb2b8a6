//! One 5-way 1-shot episode through the embedding network and both heads.
//!
//! cargo run --release --example fewshot_episode

use ma3::data::{make_synthetic, sample_episode};
use ma3::fewshot::{episode_accuracy, episode_pass, EmbeddingConfig, EmbeddingNet, Head};
use ma3::nn::Mode;
use ma3::sampler::Image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ma3::Result<()> {
    let ds = make_synthetic(20, 10, 16, 0)?;
    let classes: Vec<usize> = (0..20).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ep = sample_episode(&ds, &classes, 5, 1, 5, &mut rng)?;
    println!("support {} images, query {} images", ep.support.len(), ep.query.len());

    let config = EmbeddingConfig {
        in_channels: 1,
        height: 16,
        width: 16,
        blocks: 2,
        filters: 16,
        h_dim: 64,
    };
    let mut net = EmbeddingNet::new(config, &mut rng)?;
    let support: Vec<&Image> = ep.support.iter().map(|(img, _)| img).collect();
    let query: Vec<&Image> = ep.query.iter().map(|(img, _)| img).collect();
    for head in [Head::Euclidean, Head::Cosine { temperature: 10.0 }] {
        let pass = episode_pass(
            &mut net,
            head,
            &support,
            &ep.support_labels(),
            &query,
            &ep.query_labels(),
            ep.n_way,
            Mode::Eval,
            false,
        )?;
        let acc = episode_accuracy(&pass.output.probs, &ep.query_labels());
        println!("{head:?}: loss {:.4}, accuracy {acc:.2} (untrained)", pass.output.loss);
    }
    Ok(())
}
