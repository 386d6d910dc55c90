use serde::{Deserialize, Serialize};

use super::RoomError;
use crate::dsp::TimeSignal;

/// Memoryless loudspeaker/amplifier distortion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityModel {
    #[default]
    Identity,
    /// Symmetric clipping at `±threshold`.
    HardClip { threshold: f64 },
    /// Asymmetric sigmoidal saturation
    /// `gamma * (2 / (1 + exp(-a * b(x))) - 1)`, `b(x) = 1.5 x - 0.3 x^2`,
    /// with `a = positive_slope` when `b(x) > 0` and `negative_slope`
    /// otherwise. The input is limited to the vertex of `b` (x = 2.5) so the
    /// curve stays monotone and saturates near `+gamma` for large inputs.
    Sigmoid {
        gamma: f64,
        positive_slope: f64,
        negative_slope: f64,
    },
}

const SIGMOID_VERTEX: f64 = 2.5;

impl NonlinearityModel {
    pub const DEFAULT_CLIP_THRESHOLD: f64 = 0.8;

    pub fn hard_clip() -> Self {
        NonlinearityModel::HardClip {
            threshold: Self::DEFAULT_CLIP_THRESHOLD,
        }
    }

    pub fn sigmoid() -> Self {
        NonlinearityModel::Sigmoid {
            gamma: 1.0,
            positive_slope: 4.0,
            negative_slope: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), RoomError> {
        match *self {
            NonlinearityModel::Identity => Ok(()),
            NonlinearityModel::HardClip { threshold } if threshold > 0.0 && threshold.is_finite() => {
                Ok(())
            }
            NonlinearityModel::Sigmoid {
                gamma,
                positive_slope,
                negative_slope,
            } if gamma > 0.0 && positive_slope > 0.0 && negative_slope > 0.0 => Ok(()),
            other => Err(RoomError::Model(format!("invalid nonlinearity {other:?}"))),
        }
    }

    #[inline]
    pub fn apply_sample(&self, x: f64) -> f64 {
        match *self {
            NonlinearityModel::Identity => x,
            NonlinearityModel::HardClip { threshold } => x.clamp(-threshold, threshold),
            NonlinearityModel::Sigmoid {
                gamma,
                positive_slope,
                negative_slope,
            } => {
                let v = x.min(SIGMOID_VERTEX);
                let b = 1.5 * v - 0.3 * v * v;
                let a = if b > 0.0 { positive_slope } else { negative_slope };
                gamma * (2.0 / (1.0 + (-a * b).exp()) - 1.0)
            }
        }
    }

    /// Largest output magnitude the model can produce.
    pub fn saturation_level(&self) -> f64 {
        match *self {
            NonlinearityModel::Identity => f64::INFINITY,
            NonlinearityModel::HardClip { threshold } => threshold,
            NonlinearityModel::Sigmoid { gamma, .. } => gamma,
        }
    }
}

pub fn apply_nonlinearity(x: &TimeSignal, model: &NonlinearityModel) -> TimeSignal {
    if let NonlinearityModel::Identity = model {
        return x.clone();
    }
    let samples = x.samples().iter().map(|&v| model.apply_sample(v)).collect();
    TimeSignal::new(samples, x.sample_rate()).expect("bounded map of finite samples")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: &[f64]) -> TimeSignal {
        TimeSignal::new(v.to_vec(), 16_000).unwrap()
    }

    #[test]
    fn hard_clip_examples() {
        let y = apply_nonlinearity(&sig(&[0.5, 1.2, -1.2]), &NonlinearityModel::hard_clip());
        assert_eq!(y.samples(), &[0.5, 0.8, -0.8]);
    }

    #[test]
    fn sigmoid_passes_through_origin_and_saturates() {
        let m = NonlinearityModel::sigmoid();
        assert_eq!(m.apply_sample(0.0), 0.0);
        // closed form at x = 10 evaluated independently: the input is held
        // at the vertex 2.5, b = 3.75 - 1.875 = 1.875, a = 4
        let expected = 2.0 / (1.0 + (-4.0_f64 * 1.875).exp()) - 1.0;
        let got = m.apply_sample(10.0);
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 1.0).abs() < 0.01);
        assert!((m.apply_sample(-10.0) + 1.0).abs() < 0.01);
    }

    #[test]
    fn identity_is_exact() {
        let x = sig(&[0.1, -7.0, 3.25]);
        assert_eq!(apply_nonlinearity(&x, &NonlinearityModel::Identity), x);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(NonlinearityModel::HardClip { threshold: 0.0 }.validate().is_err());
        assert!(NonlinearityModel::Sigmoid {
            gamma: -1.0,
            positive_slope: 4.0,
            negative_slope: 0.5
        }
        .validate()
        .is_err());
        assert!(NonlinearityModel::sigmoid().validate().is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn zero_maps_to_zero_and_bounded(x in -100.0f64..100.0) {
                for m in [NonlinearityModel::hard_clip(), NonlinearityModel::sigmoid()] {
                    prop_assert_eq!(m.apply_sample(0.0), 0.0);
                    prop_assert!(m.apply_sample(x).abs() <= m.saturation_level());
                }
            }

            #[test]
            fn hard_clip_odd_and_idempotent(x in -5.0f64..5.0, t in 0.01f64..2.0) {
                let m = NonlinearityModel::HardClip { threshold: t };
                prop_assert_eq!(m.apply_sample(-x), -m.apply_sample(x));
                prop_assert_eq!(m.apply_sample(m.apply_sample(x)), m.apply_sample(x));
            }

            #[test]
            fn sigmoid_monotone(x in -20.0f64..20.0, dx in 0.0f64..5.0) {
                let m = NonlinearityModel::sigmoid();
                prop_assert!(m.apply_sample(x + dx) >= m.apply_sample(x));
            }
        }
    }
}
