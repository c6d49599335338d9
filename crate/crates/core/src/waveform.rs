//! Transmit waveforms (chirp and its continuous-wave special case) and the
//! TDMA pulse/sampling schedule over the coherent processing interval.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A linear FM pulse `exp(j a t^2) exp(j w t)` supported on
/// `[-duration/2, duration/2]`. Continuous-wave tones are exactly the
/// `chirp_rate = 0` case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waveform {
    /// Carrier, rad/s.
    pub carrier: f64,
    /// Chirp rate, rad/s^2.
    pub chirp_rate: f64,
    /// Pulse duration, seconds.
    pub duration: f64,
}

impl Waveform {
    /// Swept bandwidth in Hz: `chirp_rate * duration / pi` (zero for CW).
    pub fn bandwidth_hz(&self) -> f64 {
        self.chirp_rate * self.duration / std::f64::consts::PI
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier / std::f64::consts::TAU
    }
}

/// How per-transmitter carriers are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyMode {
    /// Every transmitter sends the same tone at `f0`.
    SingleToneCommon,
    /// Each transmitter sends a distinct tone drawn uniformly from
    /// `[f0 - B/2, f0 + B/2]`.
    RandomTones,
    /// Every transmitter sends a chirp centered at `f0` sweeping `B`.
    Chirp,
}

/// Build one waveform per transmitter.
///
/// `tau_c` is the pulse duration; for chirps the rate is chosen so the swept
/// bandwidth equals `bandwidth_hz`. Tone draws consume one uniform variate
/// per transmitter from the seeded stream.
pub fn assign_frequencies(
    n_tx: usize,
    f0_hz: f64,
    bandwidth_hz: f64,
    mode: FrequencyMode,
    tau_c: f64,
    rng_seed: u64,
) -> Result<Vec<Waveform>> {
    if bandwidth_hz < 0.0 {
        return Err(Error::config(format!(
            "bandwidth must be nonnegative, got {bandwidth_hz} Hz"
        )));
    }
    if !(f0_hz > 0.0) {
        return Err(Error::config("center frequency must be positive"));
    }
    if !(tau_c > 0.0) {
        return Err(Error::config("pulse duration must be positive"));
    }
    let w0 = std::f64::consts::TAU * f0_hz;
    let out = match mode {
        FrequencyMode::SingleToneCommon => (0..n_tx)
            .map(|_| Waveform {
                carrier: w0,
                chirp_rate: 0.0,
                duration: tau_c,
            })
            .collect(),
        FrequencyMode::RandomTones => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            (0..n_tx)
                .map(|_| {
                    let f = rng.random_range(f0_hz - bandwidth_hz / 2.0..=f0_hz + bandwidth_hz / 2.0);
                    Waveform {
                        carrier: std::f64::consts::TAU * f,
                        chirp_rate: 0.0,
                        duration: tau_c,
                    }
                })
                .collect()
        }
        FrequencyMode::Chirp => {
            let rate = std::f64::consts::PI * bandwidth_hz / tau_c;
            (0..n_tx)
                .map(|_| Waveform {
                    carrier: w0,
                    chirp_rate: rate,
                    duration: tau_c,
                })
                .collect()
        }
    };
    Ok(out)
}

/// Reference-time policy for the imaged instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeRefPolicy {
    /// Reference the image to the start of the CPI (t = 0). The stationary
    /// special case then carries no motion phase at the first pulse.
    Start,
    /// Center of the CPI.
    Center,
    Explicit(f64),
}

/// Pulse firing times, per-pulse transmitter assignment and the intra-pulse
/// sampling instants shared by every transmit/receive pair.
///
/// Pulses fire TDMA at `t_k = k * pri`. Intra-pulse sample offsets span the
/// demodulated receive window `[-tau_c/2, tau_c/2]` uniformly with both
/// endpoints included (a single sample sits at the window center), so for a
/// chirp the sampled instantaneous-frequency span equals the swept bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    pub pulse_times: Vec<f64>,
    /// Transmitter firing each pulse (identity when one pulse per element,
    /// round-robin when the CPI holds more pulses than transmitters).
    pub pulse_tx: Vec<usize>,
    pub reference_time: f64,
    pub pri: f64,
    pub samples_per_pulse: usize,
    /// Intra-pulse sample offsets, seconds relative to the pulse center.
    pub sample_offsets: Vec<f64>,
    /// Pulse duration used for the sample window.
    pub tau_c: f64,
}

impl PulseSchedule {
    pub fn n_pulses(&self) -> usize {
        self.pulse_times.len()
    }

    /// Coherent processing interval: `(n_pulses - 1) * pri + tau_c`. The
    /// velocity-grid anti-wrap check keys off this.
    pub fn cpi(&self) -> f64 {
        (self.n_pulses() as f64 - 1.0) * self.pri + self.tau_c
    }
}

/// Lay out `n_pulses` TDMA pulses with repetition interval `pri`, each
/// sampled `n_f` times across the `tau_c`-long receive window.
///
/// `n_tx` fixes the pulse-to-transmitter map: pulse `j` is fired by element
/// `j % n_tx` (identity when `n_pulses == n_tx`).
pub fn build_schedule(
    n_pulses: usize,
    pri: f64,
    n_f: usize,
    tau_c: f64,
    n_tx: usize,
    t_ref_policy: TimeRefPolicy,
) -> Result<PulseSchedule> {
    if n_pulses == 0 {
        return Err(Error::config("need at least one pulse"));
    }
    if n_f == 0 {
        return Err(Error::config("need at least one sample per pulse"));
    }
    if !(pri > 0.0) {
        return Err(Error::config("pulse repetition interval must be positive"));
    }
    if !(tau_c > 0.0) {
        return Err(Error::config("pulse duration must be positive"));
    }
    if tau_c > pri {
        return Err(Error::config(format!(
            "pulse duration {tau_c} s exceeds the repetition interval {pri} s; TDMA pulses would overlap"
        )));
    }
    if n_tx == 0 {
        return Err(Error::config("need at least one transmitter"));
    }
    let pulse_times: Vec<f64> = (0..n_pulses).map(|k| k as f64 * pri).collect();
    let pulse_tx: Vec<usize> = (0..n_pulses).map(|k| k % n_tx).collect();
    let sample_offsets: Vec<f64> = if n_f == 1 {
        vec![0.0]
    } else {
        (0..n_f)
            .map(|i| -tau_c / 2.0 + tau_c * i as f64 / (n_f as f64 - 1.0))
            .collect()
    };
    let reference_time = match t_ref_policy {
        TimeRefPolicy::Start => 0.0,
        TimeRefPolicy::Center => (n_pulses as f64 - 1.0) * pri / 2.0,
        TimeRefPolicy::Explicit(t) => t,
    };
    Ok(PulseSchedule {
        pulse_times,
        pulse_tx,
        reference_time,
        pri,
        samples_per_pulse: n_f,
        sample_offsets,
        tau_c,
    })
}
