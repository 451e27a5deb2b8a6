//! Trains briefly, saves a checkpoint, restores it and evaluates the restored
//! classifier on the fixed test episodes.
//!
//! cargo run --release --example checkpoint_eval

use ma3::checkpoint::{checkpoint_to_snapshot, snapshot_to_checkpoint, Checkpoint};
use ma3::trainer::{evaluate_sampled, stream_rng, streams, TaskData, TrainConfig, Trainer};

fn main() -> ma3::Result<()> {
    let config = TrainConfig {
        episodes: 200,
        eval_every: 200,
        ..TrainConfig::default()
    };
    let data = TaskData::from_config(&config)?;
    let mut trainer = Trainer::for_task(config.clone(), &data)?;
    trainer.run(&data, |_, _| Ok(()))?;
    let before = trainer.test(&data)?;

    let path = std::env::temp_dir().join("ma3-example.ckpt");
    snapshot_to_checkpoint(
        &config,
        trainer.episodes_done(),
        &trainer.classifier,
        &trainer.adversary,
    )
    .save(&path)?;
    let snap = checkpoint_to_snapshot(&Checkpoint::load(&path)?)?;
    let mut classifier = snap.classifier;
    let mut rng = stream_rng(config.seed, streams::TEST_EPISODES);
    let shape = (config.n_way, config.k_shot, config.q_query);
    let after = evaluate_sampled(
        &mut classifier,
        config.head,
        &data.dataset,
        &data.split.test,
        shape,
        config.test_episodes,
        &mut rng,
    )?;
    println!(
        "episode {}: in memory {:.4}±{:.4}, restored {:.4}±{:.4}",
        snap.episode, before.mean, before.half_width, after.mean, after.half_width
    );
    Ok(())
}
