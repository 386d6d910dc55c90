use std::collections::VecDeque;

use super::{check_block, StreamContext, Suppressor, SuppressorError};
use crate::fdkf::{BlockTrace, KalmanCanceller, KalmanConfig};

/// FDKF in the hybrid wiring: the reference is the final loop output,
/// delayed by the loop's feedback delay, and the output is the error
/// signal.
#[derive(Debug, Clone)]
pub struct KalmanSuppressor {
    config: Option<KalmanConfig>,
    canceller: Option<KalmanCanceller>,
    /// Loop outputs waiting to become the reference; front is next.
    references: VecDeque<Vec<f64>>,
    delay: usize,
    trace: Vec<BlockTrace>,
}

impl KalmanSuppressor {
    /// `None` derives the configuration from the stream's STFT profile.
    pub fn new(config: Option<KalmanConfig>) -> Self {
        Self {
            config,
            canceller: None,
            references: VecDeque::new(),
            delay: 0,
            trace: Vec::new(),
        }
    }

    pub fn trace(&self) -> &[BlockTrace] {
        &self.trace
    }

    pub fn canceller(&self) -> Option<&KalmanCanceller> {
        self.canceller.as_ref()
    }
}

impl Suppressor for KalmanSuppressor {
    fn name(&self) -> String {
        "kalman".into()
    }

    fn init(&mut self, ctx: &StreamContext) -> Result<(), SuppressorError> {
        let config = self.config.unwrap_or_else(|| KalmanConfig::from_stft(&ctx.stft));
        if config.block != ctx.hop() {
            return Err(SuppressorError::Config(format!(
                "Kalman block {} differs from the stream hop {}",
                config.block,
                ctx.hop()
            )));
        }
        if ctx.feedback_delay_blocks == 0 {
            return Err(SuppressorError::Config("feedback delay must be at least one block".into()));
        }
        self.canceller = Some(KalmanCanceller::new(config)?);
        self.delay = ctx.feedback_delay_blocks;
        self.reset()
    }

    fn is_canceller(&self) -> bool {
        true
    }

    fn process(&mut self, inputs: &[&[f32]], output: &mut [f32]) -> Result<(), SuppressorError> {
        check_block(inputs, 1, output)?;
        let canceller = self
            .canceller
            .as_mut()
            .ok_or_else(|| SuppressorError::Config("Kalman suppressor used before init".into()))?;
        let mic: Vec<f64> = inputs[0].iter().map(|&v| f64::from(v)).collect();
        // without loop feedback (offline use) the reference stays silent
        let reference = self
            .references
            .pop_front()
            .unwrap_or_else(|| vec![0.0; mic.len()]);
        let mut e = vec![0.0; mic.len()];
        self.trace.push(canceller.process_block(&mic, &reference, &mut e)?);
        for (o, v) in output.iter_mut().zip(e) {
            *o = v as f32;
        }
        Ok(())
    }

    fn feedback(&mut self, loop_output: &[f32]) {
        self.references
            .push_back(loop_output.iter().map(|&v| f64::from(v)).collect());
    }

    fn reset(&mut self) -> Result<(), SuppressorError> {
        if let Some(c) = &mut self.canceller {
            c.reset();
            let b = c.config().block;
            self.references = (0..self.delay).map(|_| vec![0.0; b]).collect();
        }
        self.trace.clear();
        Ok(())
    }
}
