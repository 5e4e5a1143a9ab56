//! Haar analysis and synthesis on a random batch: reconstruction error,
//! energy split across subbands and the adaptive layer's output contract.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wcc_core::tensor::{Shape, Tensor};
use wcc_core::wavelet::{adwt_forward, dwt2d, idwt2d, WaveletKernel};

fn main() -> wcc_core::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::<f32>::randn(Shape::new(2, 4, 32, 32), 1.0, &mut rng);
    let haar = WaveletKernel::haar();

    let bands = dwt2d(&x, &haar)?;
    let back = idwt2d(&bands, &haar)?;
    println!("input {}  subbands {}", x.shape(), bands.shape());
    println!("max reconstruction error {:.3e}", back.max_abs_diff(&x));

    let total = x.sq_norm() as f64;
    for (name, b) in [
        ("LL", &bands.ll),
        ("LH", &bands.lh),
        ("HL", &bands.hl),
        ("HH", &bands.hh),
    ] {
        println!("{name} energy share {:.4}", b.sq_norm() as f64 / total);
    }
    println!("energy ratio {:.8}", bands.energy() as f64 / total);

    let (it, approx) = adwt_forward(&x, &haar, 0.5, 2.0)?;
    println!(
        "ADWT output {} (scaled HH then LL), approximation {}",
        it.shape(),
        approx.shape()
    );

    // odd sizes go through symmetric padding
    let odd = Tensor::<f32>::randn(Shape::new(1, 1, 7, 9), 1.0, &mut rng);
    println!("7x9 input -> {} subbands", dwt2d(&odd, &haar)?.shape());
    Ok(())
}
