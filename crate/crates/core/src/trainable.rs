use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("shape mismatch: expected {expected} values, got {got}")]
pub struct ShapeError {
    pub expected: usize,
    pub got: usize,
}

/// A model whose trainable parameters can be viewed as one flat vector.
///
/// The flat layout is fixed per model configuration and is shared by the
/// gradients the model produces, so optimizers and finite-difference checks
/// can work on plain slices.
pub trait Trainable {
    fn trainable_len(&self) -> usize;
    fn trainable(&self) -> Vec<f64>;
    fn set_trainable(&mut self, values: &[f64]) -> Result<(), ShapeError>;
}
