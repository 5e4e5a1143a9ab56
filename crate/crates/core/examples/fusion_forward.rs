//! One pass through the crossmodal fusion module on random stage features,
//! showing the intermediate tensors and how far the predicted offsets move
//! once the offset predictor is perturbed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wcc_core::cmrf::Cmrf;
use wcc_core::tensor::{Graph, Mode, ParamStore, Shape, Tensor};

fn main() -> wcc_core::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (c_r, c_t, c_e) = (16, 8, 8);
    let mut store = ParamStore::<f32>::new();
    let cmrf = Cmrf::new(&mut store, "cmrf", c_r, c_t, c_e, &mut rng);
    let off = Tensor::randn(store.value(cmrf.csa.offset).shape(), 0.05, &mut rng);
    store.set_value(cmrf.csa.offset, off)?;

    let ir_t = Tensor::<f32>::randn(Shape::new(2, c_r, 16, 16), 1.0, &mut rng);
    let it_t = Tensor::<f32>::randn(Shape::new(2, c_t, 16, 16), 1.0, &mut rng);
    let mut g = Graph::new(&mut store, Mode::Train);
    let ir = g.input(ir_t);
    let it = g.input(it_t);
    let ft = cmrf.ce.forward(&mut g, it)?;
    let (_, offsets) = cmrf.csa.predict_offsets(&mut g, ir, ft)?;
    let fat = cmrf.csa.align(&mut g, ft, offsets)?;
    let weights = cmrf.srf.weights(&mut g, ir)?;
    let gt = cmrf.srf.aggregate(&mut g, fat, weights)?;
    let fused = g.concat(ir, gt)?;

    println!("embedded infrared  {}", g.shape(ft));
    println!(
        "offsets            {}  max |offset| {:.3} px",
        g.shape(offsets),
        g.value(offsets).max_abs()
    );
    println!("rearranging kernels {}", g.shape(weights));
    let w = g.value(weights);
    let sums: Vec<f32> = (0..w.shape().plane())
        .take(4)
        .map(|p| (0..9).map(|k| w.plane(0, k)[p]).sum())
        .collect();
    println!("kernel sums at first pixels {sums:?}");
    println!("fused output       {}", g.shape(fused));
    println!("MACs executed      {:?}", g.macs());
    Ok(())
}
