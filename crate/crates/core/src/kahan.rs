//! Compensated (Kahan) summation for long accumulations.

/// Scalar Kahan accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Elementwise Kahan accumulator for a fixed-length buffer.
#[derive(Debug, Clone)]
pub(crate) struct KahanVec {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl KahanVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            comp: vec![0.0; len],
        }
    }

    #[inline]
    pub fn add_slice(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.sum.len());
        for (k, &v) in values.iter().enumerate() {
            let y = v - self.comp[k];
            let t = self.sum[k] + y;
            self.comp[k] = (t - self.sum[k]) - y;
            self.sum[k] = t;
        }
    }

    pub fn into_value(self) -> Vec<f64> {
        self.sum
    }
}
