use crate::error::{Error, Result};

/// Dense row-major array with up to three axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub const MAX_RANK: usize = 3;

    /// Checks the element count against `shape` and rejects NaN/Inf.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.len() > Self::MAX_RANK {
            return Err(Error::Shape(format!("rank {} exceeds {}", shape.len(), Self::MAX_RANK)));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {len} values, got {}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor element {i} is {}", data[i])));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        assert!(shape.len() <= Self::MAX_RANK);
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Overwrites the values, keeping the shape; rejects NaN/Inf.
    pub fn assign(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot assign {} values to shape {:?}",
                values.len(),
                self.shape
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("non-finite value assigned to tensor".into()));
        }
        self.data.copy_from_slice(values);
        Ok(())
    }

    /// Mutable view for in-place updates; callers keep values finite.
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `(rows, cols)` view: vectors are one row, rank-3 folds leading axes.
    pub fn as_matrix_dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            [a, b, c] => (a * b, *c),
            _ => unreachable!("rank checked at construction"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(Tensor::new(vec![2, 2], vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::new(vec![1, 1, 1, 1], vec![0.0]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::vector(vec![1.0, f64::NAN]), Err(Error::NonFinite(_))));
        let mut t = Tensor::zeros(vec![2]);
        assert!(t.assign(&[f64::INFINITY, 0.0]).is_err());
        assert!(t.assign(&[1.0]).is_err());
        t.assign(&[1.0, 2.0]).unwrap();
        assert_eq!(t.data(), &[1.0, 2.0]);
    }

    #[test]
    fn matrix_dims() {
        assert_eq!(Tensor::zeros(vec![5]).as_matrix_dims(), (1, 5));
        assert_eq!(Tensor::zeros(vec![2, 3, 4]).as_matrix_dims(), (6, 4));
        assert_eq!(Tensor::zeros(vec![]).as_matrix_dims(), (1, 1));
    }
}
