use super::NnError;
use crate::scalar::Real;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self, NnError> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![T::zero(); n],
        }
    }

    /// `frames x channels` matrix.
    pub fn matrix(frames: usize, channels: usize, data: Vec<T>) -> Result<Self, NnError> {
        Self::new(vec![frames, channels], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
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

    /// `(frames, channels)` view of a 2-D tensor.
    pub fn shape2(&self) -> (usize, usize) {
        match self.dims.as_slice() {
            [f, c] => (*f, *c),
            [n] => (1, *n),
            _ => (1, self.data.len()),
        }
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self, NnError> {
        Self::new(dims, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_dims_must_match() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.shape2(), (2, 3));
        assert_eq!(t.reshape(vec![6]).unwrap().shape2(), (1, 6));
    }
}
