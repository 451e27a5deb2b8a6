//! Trains the four modes on the synthetic glyph task and reports test
//! accuracy. The episode budget is the first argument (default 1000).
//!
//! cargo run --release --example train_synthetic -- 2000

use ma3::trainer::{TaskData, TrainConfig, TrainMode, Trainer};

fn main() -> ma3::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let base = TrainConfig {
        episodes,
        eval_every: episodes,
        test_episodes: 300,
        ..TrainConfig::default()
    };
    let data = TaskData::from_config(&base)?;
    println!("{} ({} episodes per run)", data.dataset.source, episodes);
    for mode in TrainMode::ALL {
        let config = TrainConfig { mode, ..base.clone() };
        let mut trainer = Trainer::for_task(config, &data)?;
        let records = trainer.run(&data, |_, _| Ok(()))?;
        let last = records.last().expect("episodes > 0");
        let test = trainer.test(&data)?;
        println!(
            "{:<13} val {:.4}  test {:.4}±{:.4}  final ΣL_reg {:.3}",
            mode.as_str(),
            last.val_acc.unwrap_or(f64::NAN),
            test.mean,
            test.half_width,
            last.reg
        );
    }
    Ok(())
}
