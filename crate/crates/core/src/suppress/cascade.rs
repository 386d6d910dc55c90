use std::collections::VecDeque;

use super::{check_block, StreamContext, Suppressor, SuppressorError};

/// Two suppressors in series. A two-channel `back` receives the
/// microphone (delayed by `front`'s latency) and `front`'s output; a
/// one-channel `back` receives only `front`'s output. Loop feedback goes to
/// both stages.
pub struct Cascade<F, B> {
    pub front: F,
    pub back: B,
    mic_delay: VecDeque<Vec<f32>>,
    scratch: Vec<f32>,
}

impl<F: Suppressor, B: Suppressor> Cascade<F, B> {
    pub fn new(front: F, back: B) -> Result<Self, SuppressorError> {
        if front.input_channels() != 1 {
            return Err(SuppressorError::Config("cascade front must take one channel".into()));
        }
        if !(1..=2).contains(&back.input_channels()) {
            return Err(SuppressorError::Config(format!(
                "cascade back takes {} channels; 1 or 2 supported",
                back.input_channels()
            )));
        }
        Ok(Self {
            front,
            back,
            mic_delay: VecDeque::new(),
            scratch: Vec::new(),
        })
    }
}

impl<F: Suppressor, B: Suppressor> Suppressor for Cascade<F, B> {
    fn name(&self) -> String {
        format!("cascade({}, {})", self.front.name(), self.back.name())
    }

    fn init(&mut self, ctx: &StreamContext) -> Result<(), SuppressorError> {
        self.front.init(ctx)?;
        // the back stage sees the loop output after its own latency only
        let back_ctx = StreamContext {
            feedback_delay_blocks: ctx.feedback_delay_blocks + self.front.latency_blocks(),
            ..*ctx
        };
        self.back.init(&back_ctx)?;
        self.scratch = vec![0.0; ctx.hop()];
        self.reset_line(ctx.hop());
        Ok(())
    }

    fn latency_blocks(&self) -> usize {
        self.front.latency_blocks() + self.back.latency_blocks()
    }

    fn is_canceller(&self) -> bool {
        self.front.is_canceller() || self.back.is_canceller()
    }

    fn process(&mut self, inputs: &[&[f32]], output: &mut [f32]) -> Result<(), SuppressorError> {
        check_block(inputs, 1, output)?;
        if self.scratch.len() != output.len() {
            self.scratch = vec![0.0; output.len()];
            self.reset_line(output.len());
        }
        self.front.process(&inputs[..1], &mut self.scratch)?;
        self.mic_delay.push_back(inputs[0].to_vec());
        let mic = self.mic_delay.pop_front().expect("delay line primed");
        if self.back.input_channels() == 2 {
            self.back.process(&[&mic, &self.scratch], output)
        } else {
            self.back.process(&[&self.scratch], output)
        }
    }

    fn feedback(&mut self, loop_output: &[f32]) {
        self.front.feedback(loop_output);
        self.back.feedback(loop_output);
    }

    fn reset(&mut self) -> Result<(), SuppressorError> {
        self.front.reset()?;
        self.back.reset()?;
        self.reset_line(self.scratch.len());
        Ok(())
    }
}

impl<F: Suppressor, B: Suppressor> Cascade<F, B> {
    fn reset_line(&mut self, hop: usize) {
        self.mic_delay = (0..self.front.latency_blocks())
            .map(|_| vec![0.0; hop])
            .collect();
    }
}
