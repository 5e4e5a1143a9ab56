//! Builds the dual-stream backbone at a few widths and prints the feature
//! shapes of every stage plus the trainable parameter count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wcc_core::backbone::{build_dual_backbone, BackboneConfig};
use wcc_core::tensor::{Graph, Mode, ParamStore, Shape, Tensor};

fn main() -> wcc_core::Result<()> {
    for tau in [0.125, 0.25, 0.5] {
        let cfg = BackboneConfig::dual(tau, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f32>::new();
        let model = build_dual_backbone(&mut store, &cfg, &mut rng)?;
        let params = store.count_trainable();
        let rgb = Tensor::randn(Shape::new(2, 3, 64, 64), 1.0, &mut rng);
        let ir = Tensor::randn(Shape::new(2, 1, 64, 64), 1.0, &mut rng);
        let mut g = Graph::new(&mut store, Mode::Eval);
        let (r, i) = (g.input(rgb), g.input(ir));
        let f = model.forward(&mut g, r, i)?;
        println!("tau = {tau}: {params} trainable values");
        for (j, ((fused, wav), approx)) in f.fused.iter().zip(&f.wavelet).zip(&f.approx).enumerate()
        {
            println!(
                "  stage {}: fused {}  wavelet {}  approx {}",
                j + 1,
                g.shape(*fused),
                g.shape(*wav),
                g.shape(*approx)
            );
        }
        println!(
            "  stage 4: {}\n  stage 5: {}",
            g.shape(f.stage4),
            g.shape(f.stage5)
        );
    }
    Ok(())
}
