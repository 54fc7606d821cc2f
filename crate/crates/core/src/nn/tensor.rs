use serde::{Deserialize, Serialize};

use crate::decoder::Shape;

/// Dense NHWC batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Tensor4 {
            n,
            h,
            w,
            c,
            data: vec![0.0; n * h * w * c],
        }
    }

    pub fn from_vec(n: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * h * w * c, "payload length must match dims");
        Tensor4 { n, h, w, c, data }
    }

    pub fn with_shape(n: usize, shape: Shape) -> Self {
        Self::zeros(n, shape.h, shape.w, shape.c)
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.h, self.w, self.c)
    }

    /// Elements per instance.
    pub fn stride(&self) -> usize {
        self.h * self.w * self.c
    }

    #[inline]
    pub fn index(&self, b: usize, y: usize, x: usize, ch: usize) -> usize {
        ((b * self.h + y) * self.w + x) * self.c + ch
    }

    pub fn at(&self, b: usize, y: usize, x: usize, ch: usize) -> f64 {
        self.data[self.index(b, y, x, ch)]
    }

    pub fn instance(&self, b: usize) -> &[f64] {
        let s = self.stride();
        &self.data[b * s..(b + 1) * s]
    }

    pub fn instance_mut(&mut self, b: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.data[b * s..(b + 1) * s]
    }

    /// Gathers the listed instances into a new batch.
    pub fn gather(&self, indices: &[usize]) -> Tensor4 {
        let mut data = Vec::with_capacity(indices.len() * self.stride());
        for &i in indices {
            data.extend_from_slice(self.instance(i));
        }
        Tensor4::from_vec(indices.len(), self.h, self.w, self.c, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
