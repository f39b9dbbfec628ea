//! Seeded families of random smooth fields (truncated Fourier series)
//! used by the measurement-style operations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random trigonometric polynomial field `R^n → R^m` with frequency
/// cap 4 and seeded coefficients; derivatives are analytic.
#[derive(Debug, Clone)]
pub struct SmoothField {
    n: usize,
    m: usize,
    /// (component, amplitude, frequency vector, phase per axis)
    terms: Vec<(usize, f64, Vec<f64>, Vec<f64>)>,
}

impl SmoothField {
    pub fn new(n: usize, components: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        let terms_per_component = 6;
        for c in 0..components {
            for _ in 0..terms_per_component {
                let amp = rng.gen_range(-1.0..1.0);
                let freq: Vec<f64> = (0..n).map(|_| rng.gen_range(-4..=4) as f64).collect();
                let phase: Vec<f64> = (0..n)
                    .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                    .collect();
                terms.push((c, amp, freq, phase));
            }
        }
        SmoothField {
            n,
            m: components,
            terms,
        }
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (c, amp, freq, phase) in &self.terms {
            let mut v = *amp;
            for d in 0..self.n {
                v *= (freq[d] * x[d] + phase[d]).sin();
            }
            out[*c] += v;
        }
        out
    }

    /// Analytic partial derivative `∂u/∂x_axis`.
    pub fn derivative(&self, x: &[f64], axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (c, amp, freq, phase) in &self.terms {
            // product rule over the single factor depending on x_axis
            let mut v = *amp * freq[axis];
            for d in 0..self.n {
                let arg = freq[d] * x[d] + phase[d];
                v *= if d == axis { arg.cos() } else { arg.sin() };
            }
            out[*c] += v;
        }
        out
    }

    /// Full Jacobian, row-major `m × n`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m * self.n];
        for axis in 0..self.n {
            let col = self.derivative(x, axis);
            for c in 0..self.m {
                out[c * self.n + axis] = col[c];
            }
        }
        out
    }
}
