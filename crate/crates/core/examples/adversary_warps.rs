//! What the adversary emits: bounded parameters, affine matrices, STN
//! dropout and the regularized objective.
//!
//! cargo run --release --example adversary_warps

use ma3::adversary::{adversary_objective, bound_params, stn_dropout, AdversaryBounds, AdversaryConfig, AdversaryNet};
use ma3::data::make_synthetic;
use ma3::sampler::Image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ma3::Result<()> {
    let bounds = AdversaryBounds::for_image(16, 16);
    for raw in [[0.0; 4], [0.5, -0.5, 1.0, -1.0], [1e5, -1e5, 1e5, -1e5]] {
        println!("raw {raw:?} -> {:?}", bound_params(raw, &bounds));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ds = make_synthetic(5, 1, 16, 0)?;
    let imgs: Vec<&Image> = (0..5).map(|c| ds.image(c, 0)).collect();
    let fresh = AdversaryNet::new(AdversaryConfig::new(16, 16), &mut rng)?;
    let random = AdversaryNet::with_random_head(AdversaryConfig::new(16, 16), &mut rng)?;
    for (name, mut net) in [("zero head", fresh), ("random head", random)] {
        let preds = net.predict(&imgs);
        let matrices: Vec<_> = preds.iter().map(|p| p.affine).collect();
        let (kept, dropped) = stn_dropout(&matrices, 0.5, &mut rng);
        println!("\n{name}:");
        for (p, d) in preds.iter().zip(&dropped) {
            println!("  {:?} dropped={d}", p.params.unwrap());
        }
        println!(
            "  objective with L = 1.2, λ = 0.1: {:.4}",
            adversary_objective(1.2, &kept, 0.1)
        );
    }
    Ok(())
}
