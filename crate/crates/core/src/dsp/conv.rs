use num_complex::Complex64;

use super::fft::RealFft;
use super::{DspError, TimeSignal};

/// Full linear convolution, `len(signal) + len(kernel) - 1` samples.
///
/// Short inputs use the direct sum, longer ones a single zero-padded FFT.
pub fn convolve(signal: &TimeSignal, kernel: &TimeSignal) -> Result<TimeSignal, DspError> {
    if signal.sample_rate() != kernel.sample_rate() {
        return Err(DspError::SampleRateMismatch {
            left: signal.sample_rate(),
            right: kernel.sample_rate(),
        });
    }
    let out = if signal.len().min(kernel.len()) <= 32 {
        convolve_direct(signal.samples(), kernel.samples())
    } else {
        convolve_fft(signal.samples(), kernel.samples())
    };
    TimeSignal::new(out, signal.sample_rate())
}

pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &a) in x.iter().enumerate() {
        for (j, &b) in h.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two().max(2);
    let fft = RealFft::new(n);
    let xs = fft.forward_vec(x);
    let hs = fft.forward_vec(h);
    let prod: Vec<Complex64> = xs.iter().zip(&hs).map(|(a, b)| a * b).collect();
    let mut y = fft.inverse_vec(&prod);
    y.truncate(out_len);
    y
}

/// Streaming FIR filter: uniformly partitioned overlap-save convolution with
/// a partition size equal to the processing block.
///
/// Feeding the blocks of `x` one at a time yields the first
/// `blocks * block_len` samples of `x * kernel`.
#[derive(Debug, Clone)]
pub struct PartitionedConvolver {
    block: usize,
    fft: RealFft,
    partitions: Vec<Vec<Complex64>>,
    // frequency-domain delay line, most recent input spectrum first
    history: Vec<Vec<Complex64>>,
    head: usize,
    prev_block: Vec<f64>,
    scratch: Vec<f64>,
    acc: Vec<Complex64>,
    out_time: Vec<f64>,
}

impl PartitionedConvolver {
    pub fn new(kernel: &[f64], block: usize) -> Self {
        assert!(block > 0, "block length must be positive");
        let fft = RealFft::new(2 * block);
        let parts = kernel.len().div_ceil(block).max(1);
        let partitions: Vec<Vec<Complex64>> = (0..parts)
            .map(|p| {
                let lo = p * block;
                let hi = ((p + 1) * block).min(kernel.len());
                let seg = if lo < hi { &kernel[lo..hi] } else { &[][..] };
                fft.forward_vec(seg)
            })
            .collect();
        let bins = fft.bins();
        Self {
            block,
            partitions,
            history: vec![vec![Complex64::new(0.0, 0.0); bins]; parts],
            head: 0,
            prev_block: vec![0.0; block],
            scratch: vec![0.0; 2 * block],
            acc: vec![Complex64::new(0.0, 0.0); bins],
            out_time: vec![0.0; 2 * block],
            fft,
        }
    }

    pub fn block_len(&self) -> usize {
        self.block
    }

    pub fn reset(&mut self) {
        for h in &mut self.history {
            h.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        }
        self.prev_block.iter_mut().for_each(|x| *x = 0.0);
        self.head = 0;
    }

    /// Consumes one input block and writes the matching output block.
    pub fn process(&mut self, input: &[f64], output: &mut [f64]) {
        assert_eq!(input.len(), self.block);
        assert_eq!(output.len(), self.block);
        let b = self.block;
        let parts = self.partitions.len();

        self.scratch[..b].copy_from_slice(&self.prev_block);
        self.scratch[b..].copy_from_slice(input);
        self.prev_block.copy_from_slice(input);
        self.head = (self.head + parts - 1) % parts;
        let slot = &mut self.history[self.head];
        self.fft.forward(&mut self.scratch, slot);

        self.acc.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (p, part) in self.partitions.iter().enumerate() {
            let x = &self.history[(self.head + p) % parts];
            for ((a, xv), hv) in self.acc.iter_mut().zip(x).zip(part) {
                *a += xv * hv;
            }
        }
        self.fft.inverse(&mut self.acc, &mut self.out_time);
        output.copy_from_slice(&self.out_time[b..]);
    }
}
