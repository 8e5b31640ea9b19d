//! Dense row-major tensors over f32 or f64.

use ndarray::{ArrayView2, ArrayViewMut2};

/// Scalar type the engine runs on: `f32` in training mode, `f64` in test /
/// gradient-check mode.
pub trait Scalar:
    num_traits::Float
    + ndarray::LinalgScalar
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const BITS: u32;

    fn from_f64(v: f64) -> Self {
        num_traits::NumCast::from(v).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        num_traits::NumCast::from(self).expect("scalar converts to f64")
    }
}

impl Scalar for f32 {
    const BITS: u32 = 32;
}

impl Scalar for f64 {
    const BITS: u32 = 64;
}

/// Row-major tensor; the element count always equals the shape product.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![S::zero(); len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} values",
            data.len()
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Self {
        Tensor::from_vec(shape, values.iter().map(|&v| S::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn as_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Reinterpret the flat storage as a `[rows x cols]` matrix view.
    pub fn view2(&self, rows: usize, cols: usize) -> ArrayView2<'_, S> {
        assert_eq!(rows * cols, self.data.len(), "view2({rows}, {cols}) on {:?}", self.shape);
        ArrayView2::from_shape((rows, cols), &self.data).expect("contiguous")
    }

    pub fn view2_mut(&mut self, rows: usize, cols: usize) -> ArrayViewMut2<'_, S> {
        assert_eq!(rows * cols, self.data.len());
        ArrayViewMut2::from_shape((rows, cols), &mut self.data).expect("contiguous")
    }

    /// Shape with a new batch-free interpretation; length must match.
    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape.to_vec();
        self
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
