use std::borrow::Cow;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use rand_distr::{Distribution, Normal};

use super::features::FeatureMap;
use super::vocab::Vocabulary;
use crate::rng::seeded;
use crate::trainable::{ShapeError, Trainable};

/// Low-rank additive update `B·A` to the logit matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankAdapter {
    /// r × D
    pub a: Array2<f64>,
    /// V × r
    pub b: Array2<f64>,
}

impl LowRankAdapter {
    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn delta(&self) -> Array2<f64> {
        self.b.dot(&self.a)
    }
}

/// Parameter count of a rank-`rank` adapter on a `vocab × dim` matrix.
pub fn adapter_param_count(vocab: usize, dim: usize, rank: usize) -> usize {
    rank * (vocab + dim)
}

/// Weights of the linear-softmax policy. Effective logit matrix is
/// `W0 + B·A` when an adapter is attached, `W0` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    vocab: Arc<Vocabulary>,
    features: FeatureMap,
    w0: Array2<f64>,
    adapter: Option<LowRankAdapter>,
    frozen_base: bool,
}

impl PolicyParameters {
    /// All-zero weights: the uniform policy.
    pub fn zeros(vocab: Arc<Vocabulary>, context: usize) -> Self {
        let features = FeatureMap {
            vocab_size: vocab.len(),
            context,
            bos: vocab.bos(),
        };
        let w0 = Array2::zeros((vocab.len(), features.dim()));
        PolicyParameters {
            vocab,
            features,
            w0,
            adapter: None,
            frozen_base: false,
        }
    }

    /// Gaussian weights with standard deviation `scale`.
    pub fn random(vocab: Arc<Vocabulary>, context: usize, scale: f64, seed: u64) -> Self {
        let mut p = Self::zeros(vocab, context);
        let mut rng = seeded(seed);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        p.w0.mapv_inplace(|_| normal.sample(&mut rng));
        p
    }

    /// Attaches a rank-`rank` adapter: `A` Gaussian with std `scale`, `B`
    /// zero, so the effective weights are unchanged.
    pub fn with_adapter(mut self, rank: usize, scale: f64, frozen_base: bool, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let a = Array2::from_shape_simple_fn((rank, self.dim()), || normal.sample(&mut rng));
        let b = Array2::zeros((self.vocab.len(), rank));
        self.adapter = Some(LowRankAdapter { a, b });
        self.frozen_base = frozen_base;
        self
    }

    pub(crate) fn from_parts(
        vocab: Arc<Vocabulary>,
        context: usize,
        w0: Array2<f64>,
        adapter: Option<LowRankAdapter>,
        frozen_base: bool,
    ) -> Self {
        let mut p = Self::zeros(vocab, context);
        p.w0 = w0;
        p.adapter = adapter;
        p.frozen_base = frozen_base;
        p
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn context(&self) -> usize {
        self.features.context
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn w0(&self) -> &Array2<f64> {
        &self.w0
    }

    pub fn w0_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w0
    }

    pub fn adapter(&self) -> Option<&LowRankAdapter> {
        self.adapter.as_ref()
    }

    pub fn adapter_mut(&mut self) -> Option<&mut LowRankAdapter> {
        self.adapter.as_mut()
    }

    pub fn frozen_base(&self) -> bool {
        self.frozen_base
    }

    pub fn set_frozen_base(&mut self, frozen: bool) {
        self.frozen_base = frozen;
    }

    pub fn rank(&self) -> usize {
        self.adapter.as_ref().map_or(0, LowRankAdapter::rank)
    }

    fn base_trainable(&self) -> bool {
        !(self.frozen_base && self.adapter.is_some())
    }

    pub fn effective_weights(&self) -> Cow<'_, Array2<f64>> {
        match &self.adapter {
            None => Cow::Borrowed(&self.w0),
            Some(ad) => Cow::Owned(&self.w0 + &ad.delta()),
        }
    }
}

/// Gradient with respect to every parameter block. The `w0` block is
/// identically zero when the base is frozen under an adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub w0: Array2<f64>,
    pub a: Option<Array2<f64>>,
    pub b: Option<Array2<f64>>,
    w0_trainable: bool,
}

impl PolicyGradient {
    pub fn zeros_for(params: &PolicyParameters) -> Self {
        let (a, b) = match &params.adapter {
            Some(ad) => (Some(Array2::zeros(ad.a.dim())), Some(Array2::zeros(ad.b.dim()))),
            None => (None, None),
        };
        PolicyGradient {
            w0: Array2::zeros(params.w0.dim()),
            a,
            b,
            w0_trainable: params.base_trainable(),
        }
    }

    /// Builds the gradient from `dL/dW` of the effective logit matrix.
    pub(crate) fn from_effective(params: &PolicyParameters, g: Array2<f64>) -> Self {
        let (a, b) = match &params.adapter {
            Some(ad) => (Some(ad.b.t().dot(&g)), Some(g.dot(&ad.a.t()))),
            None => (None, None),
        };
        let w0_trainable = params.base_trainable();
        let w0 = if w0_trainable { g } else { Array2::zeros(params.w0.dim()) };
        PolicyGradient { w0, a, b, w0_trainable }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &PolicyGradient, scale: f64) {
        Zip::from(&mut self.w0).and(&other.w0).for_each(|x, &y| *x += scale * y);
        for (mine, theirs) in [(&mut self.a, &other.a), (&mut self.b, &other.b)] {
            if let (Some(m), Some(t)) = (mine.as_mut(), theirs.as_ref()) {
                Zip::from(m).and(t).for_each(|x, &y| *x += scale * y);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.w0.mapv_inplace(|x| x * s);
        for m in [self.a.as_mut(), self.b.as_mut()].into_iter().flatten() {
            m.mapv_inplace(|x| x * s);
        }
    }

    /// Gradient in the owning parameters' [`Trainable`] layout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if self.w0_trainable {
            out.extend(self.w0.iter().copied());
        }
        for m in [self.a.as_ref(), self.b.as_ref()].into_iter().flatten() {
            out.extend(m.iter().copied());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Trainable for PolicyParameters {
    fn trainable_len(&self) -> usize {
        let base = if self.base_trainable() { self.w0.len() } else { 0 };
        base + self.adapter.as_ref().map_or(0, |ad| ad.a.len() + ad.b.len())
    }

    fn trainable(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_len());
        if self.base_trainable() {
            out.extend(self.w0.iter().copied());
        }
        if let Some(ad) = &self.adapter {
            out.extend(ad.a.iter().copied());
            out.extend(ad.b.iter().copied());
        }
        out
    }

    fn set_trainable(&mut self, values: &[f64]) -> Result<(), ShapeError> {
        let expected = self.trainable_len();
        if values.len() != expected {
            return Err(ShapeError {
                expected,
                got: values.len(),
            });
        }
        let mut rest = values;
        let mut fill = |m: &mut Array2<f64>| {
            let (head, tail) = rest.split_at(m.len());
            m.iter_mut().zip(head).for_each(|(x, &v)| *x = v);
            rest = tail;
        };
        if self.base_trainable() {
            fill(&mut self.w0);
        }
        if let Some(ad) = &mut self.adapter {
            fill(&mut ad.a);
            fill(&mut ad.b);
        }
        Ok(())
    }
}
