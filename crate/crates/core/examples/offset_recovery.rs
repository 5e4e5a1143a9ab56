//! Trains the spatial alignment step alone on feature maps that are
//! translated by known integer shifts and reports how much it recovers.

use wcc_core::harness::experiments::{offset_recovery, OffsetRecoveryConfig};

fn main() -> wcc_core::Result<()> {
    let report = offset_recovery(&OffsetRecoveryConfig::default())?;
    println!("{report}");
    let t = &report.trials[0];
    let every = (t.curve.len() / 8).max(1);
    let curve: Vec<String> = t
        .curve
        .iter()
        .step_by(every)
        .map(|l| format!("{l:.4}"))
        .collect();
    println!("trial 0 loss curve: {}", curve.join(" "));
    Ok(())
}
