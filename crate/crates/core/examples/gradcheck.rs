//! Finite-difference check of the warp, the embedding network and the full
//! adversary → warp → embedding → loss chain.
//!
//! cargo run --release --example gradcheck

use ma3::gradcheck::{run_gradcheck, Preset};

fn main() -> ma3::Result<()> {
    let report = run_gradcheck(&Preset::named("default")?, 0);
    print!("{report}");
    let flipped = run_gradcheck(&Preset::named("bug")?, 0);
    println!(
        "with a sign-flipped gradient the worst error is {:.2}",
        flipped.worst().max_rel_err
    );
    Ok(())
}
