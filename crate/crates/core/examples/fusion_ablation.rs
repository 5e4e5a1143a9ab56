//! Small fusion ablation on synthetic misaligned pairs: full fusion against
//! rearranging-only and plain concatenation. One seed and three epochs is
//! too short to rank the variants; `wcc ablation` runs the full protocol.

use wcc_core::harness::experiments::{run_ablation, AblationConfig};

fn main() -> wcc_core::Result<()> {
    let mut cfg = AblationConfig {
        seeds: vec![0],
        train_count: 512,
        test_count: 256,
        ..AblationConfig::default()
    };
    cfg.train.epochs = 3;
    let report = run_ablation(&cfg, |r| {
        println!("{} seed {}: {:.3}", r.variant, r.seed, r.test_acc())
    })?;
    print!("{report}");
    Ok(())
}
