//! SI-SDR, spectral MAE and the combined loss on a noisy estimate.

use howlsim::dsp::{stft, StftConfig, TimeSignal};
use howlsim::metrics::{combined_loss, si_sdr, spectral_mae};
use howlsim::sim::source::{synthetic_noise, synthetic_speech};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 16_000;
    let s = synthetic_speech(2, 3.0, fs);
    let n = synthetic_noise(9, 3.0, fs);
    let cfg = StftConfig::default();
    for snr in [20.0, 10.0, 0.0] {
        let scale = s.rms() / n.rms() * 10f64.powf(-snr / 20.0);
        let est: TimeSignal = s.add(&n.scaled(scale))?;
        println!(
            "SNR {snr:4.0} dB: SI-SDR {:6.2} dB (x0.3: {:6.2} dB), MAE {:.4}, loss {:.3}",
            si_sdr(&est, &s)?.value,
            si_sdr(&est.scaled(0.3), &s)?.value,
            spectral_mae(&stft(&est, &cfg)?, &stft(&s, &cfg)?)?,
            combined_loss(&est, &s, &cfg, 100.0)?.value,
        );
    }
    Ok(())
}
