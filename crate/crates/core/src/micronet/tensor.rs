use super::NetError;

/// Dense row-major tensor; 3D activations are `(h, w, c)` with `c` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NetError> {
        let len: usize = shape.iter().product();
        if len != values.len() {
            return Err(NetError::ShapeMismatch(format!(
                "shape {shape:?} needs {len} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite);
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, values: vec![0.0; len] }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { shape, values }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(h, w, c)` of a rank-3 tensor.
    pub fn hwc(&self) -> Result<(usize, usize, usize), NetError> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(NetError::ShapeMismatch(format!("expected (h, w, c), got {:?}", self.shape))),
        }
    }
}
