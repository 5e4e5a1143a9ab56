//! Saves a classifier's parameters, reloads them into a fresh model and
//! confirms both produce the same logits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wcc_core::backbone::checkpoint::{load_params, save_params};
use wcc_core::backbone::{build_cls_variant, BackboneConfig, Classifier, StageKind};
use wcc_core::tensor::{Graph, Mode, ParamStore, Shape, Tensor};

fn build(store: &mut ParamStore<f32>, seed: u64) -> wcc_core::Result<Classifier> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_cls_variant(
        store,
        &BackboneConfig::classification(),
        &StageKind::prefix(2)?,
        10,
        &mut rng,
    )
}

fn logits(
    model: &Classifier,
    store: &mut ParamStore<f32>,
    x: &Tensor<f32>,
) -> wcc_core::Result<Tensor<f32>> {
    let mut g = Graph::new(store, Mode::Eval);
    let xi = g.input(x.clone());
    let y = model.forward(&mut g, xi)?;
    Ok(g.value(y).clone())
}

fn main() -> wcc_core::Result<()> {
    let x = Tensor::randn(
        Shape::new(4, 1, 32, 32),
        1.0,
        &mut ChaCha8Rng::seed_from_u64(9),
    );
    let mut a = ParamStore::new();
    let model_a = build(&mut a, 1)?;
    let ya = logits(&model_a, &mut a, &x)?;
    let path = std::env::temp_dir().join("wcc-example.wcck");
    save_params(&path, &a, &[])?;
    println!(
        "wrote {} ({} bytes)",
        path.display(),
        std::fs::metadata(&path)?.len()
    );

    let mut b = ParamStore::new();
    let model_b = build(&mut b, 2)?;
    let before = logits(&model_b, &mut b, &x)?;
    load_params(&path, &mut b)?;
    let after = logits(&model_b, &mut b, &x)?;
    println!(
        "different init: max logit gap {:.3e}",
        before.max_abs_diff(&ya)
    );
    println!(
        "after reload:   max logit gap {:.3e}",
        after.max_abs_diff(&ya)
    );
    Ok(())
}
