use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    SpatialFrequency,
    AngularDelay,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::SpatialFrequency => "spatial-frequency",
            Domain::AngularDelay => "angular-delay",
        }
    }
}

/// One CSI matrix stored as two real planes (real, imaginary), each
/// `n_t x n_c` in antenna-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    pub values: Vec<f64>,
    pub n_t: usize,
    pub n_c: usize,
    pub domain: Domain,
    pub normalized: bool,
}

impl CsiSample {
    pub fn zeros(n_t: usize, n_c: usize, domain: Domain) -> Self {
        Self {
            values: vec![0.0; 2 * n_t * n_c],
            n_t,
            n_c,
            domain,
            normalized: false,
        }
    }

    pub fn from_complex(h: &[Complex64], n_t: usize, n_c: usize, domain: Domain) -> Self {
        assert_eq!(h.len(), n_t * n_c);
        let plane = n_t * n_c;
        let mut values = vec![0.0; 2 * plane];
        for (i, z) in h.iter().enumerate() {
            values[i] = z.re;
            values[plane + i] = z.im;
        }
        Self {
            values,
            n_t,
            n_c,
            domain,
            normalized: false,
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        let plane = self.n_t * self.n_c;
        (0..plane)
            .map(|i| Complex64::new(self.values[i], self.values[plane + i]))
            .collect()
    }

    pub fn get(&self, antenna: usize, subcarrier: usize) -> Complex64 {
        let i = antenna * self.n_c + subcarrier;
        Complex64::new(self.values[i], self.values[self.n_t * self.n_c + i])
    }

    pub fn shape(&self) -> [usize; 3] {
        [2, self.n_t, self.n_c]
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.energy().sqrt()
    }
}
