use rayon::prelude::*;

use super::ObjectiveError;
use crate::policy::{logprob_and_grad, PolicyGradient, PolicyParameters, TokenId};

/// Prompt/response demonstration.
pub type Demonstration = (Vec<TokenId>, Vec<TokenId>);

/// Mean negative log-likelihood of the batch and its gradient.
///
/// Per-example terms are computed in parallel and reduced in index order.
pub fn sft_loss(params: &PolicyParameters, batch: &[Demonstration]) -> Result<(f64, PolicyGradient), ObjectiveError> {
    if batch.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let terms = batch
        .par_iter()
        .map(|(x, y)| logprob_and_grad(params, x, y))
        .collect::<Result<Vec<_>, _>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = PolicyGradient::zeros_for(params);
    let mut total = 0.0;
    for (lp, g) in &terms {
        total += lp.total;
        grad.add_scaled(g, -scale);
    }
    Ok((-total * scale, grad))
}
