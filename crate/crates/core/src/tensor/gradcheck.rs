use crate::error::{Error, Result};
use crate::tensor::{Graph, Mode, NodeId, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    /// `max |analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_err: f64,
    /// Coordinate where the maximum was reached, e.g. `input0[17]`.
    pub worst: String,
    pub checked: usize,
}

fn evaluate<F>(store: &mut ParamStore<f64>, inputs: &[Tensor<f64>], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new(store, Mode::Train);
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    let value = g.value(out).sum();
    if !value.is_finite() {
        return Err(Error::NonFinite(
            g.first_non_finite().unwrap_or_else(|| "output".into()),
        ));
    }
    Ok(value)
}

/// Compares reverse-mode gradients of `sum(f(inputs))` against central
/// differences with step `eps`, for every input entry and every entry of
/// every trainable parameter in `store`.
pub fn gradcheck<F>(
    store: &mut ParamStore<f64>,
    inputs: &[Tensor<f64>],
    eps: f64,
    f: F,
) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    store.zero_grad();
    let input_grads: Vec<Tensor<f64>> = {
        let mut g = Graph::new(store, Mode::Train);
        let ids: Vec<NodeId> = inputs
            .iter()
            .map(|t| g.input_with_grad(t.clone()))
            .collect();
        let out = f(&mut g, &ids)?;
        if !g.value(out).all_finite() {
            return Err(Error::NonFinite(
                g.first_non_finite().unwrap_or_else(|| "output".into()),
            ));
        }
        let total = g.sum(out);
        g.backward(total)?;
        ids.iter()
            .map(|&id| {
                g.grad(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(g.shape(id)))
            })
            .collect()
    };

    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let record = |report: &mut GradcheckReport, analytic: f64, numeric: f64, what: String| {
        let err = (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs());
        if !err.is_finite() || err > report.max_rel_err || report.checked == 0 {
            report.max_rel_err = if err.is_finite() { err } else { f64::INFINITY };
            report.worst = what;
        }
        report.checked += 1;
    };

    let mut perturbed = inputs.to_vec();
    for (k, analytic) in input_grads.iter().enumerate() {
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            perturbed[k].data_mut()[i] = orig + eps;
            let plus = evaluate(store, &perturbed, &f)?;
            perturbed[k].data_mut()[i] = orig - eps;
            let minus = evaluate(store, &perturbed, &f)?;
            perturbed[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            record(
                &mut report,
                analytic.data()[i],
                numeric,
                format!("input{k}[{i}]"),
            );
        }
    }

    let params: Vec<_> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(id, p)| {
            let grad = p
                .value
                .grad()
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; p.numel()]);
            (id, p.name.clone(), grad)
        })
        .collect();
    for (id, name, grad) in params {
        for (i, &analytic) in grad.iter().enumerate() {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + eps;
            let plus = evaluate(store, inputs, &f)?;
            store.value_mut(id).data_mut()[i] = orig - eps;
            let minus = evaluate(store, inputs, &f)?;
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            record(&mut report, analytic, numeric, format!("{name}[{i}]"));
        }
    }
    store.zero_grad();
    Ok(report)
}
