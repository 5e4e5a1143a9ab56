//! Analytic cost of the classifier as stages are swapped for ADWT stages,
//! cross-checked against MACs counted while actually running each model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wcc_core::backbone::{build_cls_variant, BackboneConfig, StageKind, NUM_STAGES};
use wcc_core::complexity::{counted_params, measured_model_macs, model_cost};
use wcc_core::tensor::ParamStore;

fn main() -> wcc_core::Result<()> {
    let cfg = BackboneConfig::classification();
    println!(
        "{:>5} {:>10} {:>12} {:>12} {:>12}",
        "depth", "params", "fwd MACs", "measured", "bwd MACs"
    );
    for depth in 0..=NUM_STAGES {
        let kinds = StageKind::prefix(depth)?;
        let cost = model_cost(&cfg, &kinds, 10)?.total();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f32>::new();
        let model = build_cls_variant(&mut store, &cfg, &kinds, 10, &mut rng)?;
        let measured = measured_model_macs(&mut store, &model)?;
        assert_eq!(counted_params(&store), cost.params);
        println!(
            "{depth:>5} {:>10} {:>12} {:>12} {:>12}",
            cost.params, cost.flops_forward, measured, cost.flops_backward
        );
    }
    println!();
    println!(
        "{}",
        model_cost(&cfg, &StageKind::prefix(2)?, 10)?.to_table()
    );
    Ok(())
}
