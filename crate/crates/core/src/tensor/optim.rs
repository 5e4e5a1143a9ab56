use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Scalar};

/// Plain SGD with L2 weight decay: `p <- p - lr * (grad + weight_decay * p)`
/// for trainable parameters. All gradients are cleared afterwards.
pub fn sgd_step<T: Scalar>(store: &mut ParamStore<T>, lr: T, weight_decay: T) -> Result<()> {
    if let Some(p) = store
        .iter()
        .map(|(_, p)| p)
        .find(|p| p.trainable && p.value.grad().is_none())
    {
        return Err(Error::MissingGradient(p.name.clone()));
    }
    for p in store.iter_mut() {
        if p.trainable {
            let grad = p.value.grad().expect("checked above").to_vec();
            for (v, g) in p.value.data_mut().iter_mut().zip(grad) {
                *v -= lr * (g + weight_decay * *v);
            }
        }
        p.value.clear_grad();
    }
    Ok(())
}
