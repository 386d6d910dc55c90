use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

/// Planned forward/inverse real FFT pair of a fixed size.
///
/// Forward is unnormalized, inverse carries the `1/n` factor, so
/// `inverse(forward(x)) == x`.
#[derive(Clone)]
pub struct RealFft {
    n: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for RealFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft").field("n", &self.n).finish()
    }
}

/// Two plans are equal when they have the same size.
impl PartialEq for RealFft {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        assert!(n > 0 && n.is_multiple_of(2), "real FFT size must be even and positive");
        let mut planner = RealFftPlanner::<f64>::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// Forward transform; `input` is used as scratch and left unspecified.
    pub fn forward(&self, input: &mut [f64], spectrum: &mut [Complex64]) {
        self.forward
            .process(input, spectrum)
            .expect("buffer sizes are fixed by construction");
    }

    pub fn forward_vec(&self, input: &[f64]) -> Vec<Complex64> {
        let mut buf = input.to_vec();
        buf.resize(self.n, 0.0);
        let mut out = vec![Complex64::new(0.0, 0.0); self.bins()];
        self.forward(&mut buf, &mut out);
        out
    }

    /// Inverse transform including the `1/n` normalization. The imaginary
    /// parts of the DC and Nyquist bins are ignored, as for any real signal.
    pub fn inverse(&self, spectrum: &mut [Complex64], output: &mut [f64]) {
        spectrum[0].im = 0.0;
        spectrum[self.n / 2].im = 0.0;
        self.inverse
            .process(spectrum, output)
            .expect("buffer sizes are fixed by construction");
        let scale = 1.0 / self.n as f64;
        output.iter_mut().for_each(|x| *x *= scale);
    }

    pub fn inverse_vec(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        let mut out = vec![0.0; self.n];
        self.inverse(&mut buf, &mut out);
        out
    }
}
