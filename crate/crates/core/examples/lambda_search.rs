//! Two-stage λ search (log grid, then a linear refinement) at a small
//! episode budget.
//!
//! cargo run --release --example lambda_search

use ma3::trainer::{lambda_search, TaskData, TrainConfig, COARSE_GRID};

fn main() -> ma3::Result<()> {
    let base = TrainConfig {
        episodes: 300,
        val_episodes: 100,
        ..TrainConfig::default()
    };
    let data = TaskData::from_config(&base)?;
    let search = lambda_search(&base, &data, &COARSE_GRID, |row| {
        println!(
            "stage {} λ {:<8} val {:.4}±{:.4}",
            row.stage, row.lambda, row.val_acc, row.val_ci
        );
    })?;
    println!("best λ {}", search.best);
    Ok(())
}
