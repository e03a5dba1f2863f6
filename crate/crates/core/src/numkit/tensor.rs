use crate::num::Real;

use super::NumError;

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    /// Checked constructor: length must match the shape and every value be finite.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, NumError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumError::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumError::NonFinite(format!("tensor entry {i}")));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, NumError> {
        Self::from_vec(&[rows, cols], data)
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Trailing dimension; 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols() + c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `self[n×k] · other[k×m]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Tensor<T> {
        let (n, k, m) = (self.rows(), self.cols(), other.cols());
        assert_eq!(k, other.rows(), "matmul inner dimensions");
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let a = self.row(i);
            let o = &mut out[i * m..(i + 1) * m];
            for (p, &av) in a.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                for (ov, &bv) in o.iter_mut().zip(other.row(p)) {
                    *ov += av * bv;
                }
            }
        }
        Tensor { shape: vec![n, m], data: out }
    }

    /// `selfᵀ[k×n] · other[n×m]`, the weight-gradient product.
    pub fn t_matmul(&self, other: &Tensor<T>) -> Tensor<T> {
        let (n, k, m) = (self.rows(), self.cols(), other.cols());
        assert_eq!(n, other.rows(), "t_matmul outer dimensions");
        let mut out = vec![T::zero(); k * m];
        for i in 0..n {
            let a = self.row(i);
            let b = other.row(i);
            for (p, &av) in a.iter().enumerate() {
                let o = &mut out[p * m..(p + 1) * m];
                for (ov, &bv) in o.iter_mut().zip(b) {
                    *ov += av * bv;
                }
            }
        }
        Tensor { shape: vec![k, m], data: out }
    }

    /// `self[n×k] · otherᵀ` where `other` is `[m×k]`, the input-gradient product.
    pub fn matmul_t(&self, other: &Tensor<T>) -> Tensor<T> {
        let (n, k, m) = (self.rows(), self.cols(), other.rows());
        assert_eq!(k, other.cols(), "matmul_t inner dimensions");
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let a = self.row(i);
            for j in 0..m {
                let mut acc = T::zero();
                for (&av, &bv) in a.iter().zip(other.row(j)) {
                    acc += av * bv;
                }
                out[i * m + j] = acc;
            }
        }
        Tensor { shape: vec![n, m], data: out }
    }

    /// Adds `bias[m]` to each row.
    pub fn add_row(&mut self, bias: &[T]) {
        let c = self.cols();
        assert_eq!(c, bias.len(), "bias width");
        for row in self.data.chunks_mut(c) {
            for (v, &b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
    }

    /// Column sums, the bias-gradient reduction.
    pub fn sum_rows(&self) -> Vec<T> {
        let c = self.cols();
        let mut out = vec![T::zero(); c];
        for row in self.data.chunks(c) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}
