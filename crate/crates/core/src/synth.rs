//! Seeded synthetic data: band-limited pink noise with alpha bursts as the
//! clean signal, a jittered train of multiphasic pulses as the artifact, and
//! unpaired training sets plus a paired evaluation set built from them.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{segment, Recording, WindowedDataset, MODEL_RATE_HZ};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub heart_rate_bpm: f64,
    /// Standard deviation of each beat's offset from its nominal time.
    pub beat_jitter_ms: f64,
    /// Beat amplitudes are uniform in `1 ± amplitude_jitter`.
    pub amplitude_jitter: f64,
    /// Median pulse peak over the clean signal's robust peak.
    pub amplitude_ratio: f64,
    /// Alpha-burst variance relative to the unit-variance background.
    pub alpha_power: f64,
    pub pink_noise_exponent: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            heart_rate_bpm: 72.0,
            beat_jitter_ms: 30.0,
            amplitude_jitter: 0.2,
            amplitude_ratio: 30.0,
            alpha_power: 0.5,
            pink_noise_exponent: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.duration_s.is_finite() && self.duration_s >= 2.0) {
            return bad(format!("duration_s must be >= 2, got {}", self.duration_s));
        }
        if !(self.heart_rate_bpm.is_finite() && self.heart_rate_bpm >= 60.0) {
            return bad(format!(
                "heart_rate_bpm must be >= 60 so the beat period stays under one window, got {}",
                self.heart_rate_bpm
            ));
        }
        if !(self.beat_jitter_ms.is_finite() && self.beat_jitter_ms >= 0.0) {
            return bad("beat_jitter_ms must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) {
            return bad("amplitude_jitter must be in [0, 1)".into());
        }
        if !(self.amplitude_ratio.is_finite() && self.amplitude_ratio > 0.0) {
            return bad(format!("amplitude_ratio must be > 0, got {}", self.amplitude_ratio));
        }
        if !(self.alpha_power.is_finite() && self.alpha_power >= 0.0) {
            return bad("alpha_power must be >= 0".into());
        }
        if !self.pink_noise_exponent.is_finite() {
            return bad("pink_noise_exponent must be finite".into());
        }
        Ok(())
    }

    pub fn beat_period_s(&self) -> f64 {
        60.0 / self.heart_rate_bpm
    }

    fn n_samples(&self) -> usize {
        (self.duration_s * MODEL_RATE_HZ).round() as usize
    }
}

/// SplitMix64 finalizer, used to derive independent seeds from one seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const CLEAN_STREAM: u64 = 1;
const BEAT_STREAM: u64 = 2;

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
}

/// Gaussian noise with power spectrum ∝ 1/f^exponent inside
/// `[lo_hz, hi_hz]` and nothing outside, scaled to unit variance.
pub fn pink_noise(rng: &mut impl Rng, n: usize, fs: f64, exponent: f64, lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 1..=n / 2 {
        let f = k as f64 * fs / n as f64;
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        if f < lo_hz || f > hi_hz {
            continue;
        }
        let amp = f.powf(-exponent / 2.0);
        spec[k] = Complex::new(re * amp, im * amp);
        if k != n - k {
            spec[n - k] = spec[k].conj();
        } else {
            spec[k].im = 0.0;
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let x: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let s = std_dev(&x);
    if s > 0.0 {
        x.iter().map(|v| v / s).collect()
    } else {
        x
    }
}

/// Clean background: unit-variance band-limited pink noise plus 10 Hz alpha
/// bursts with a slow raised-sine envelope.
pub fn gen_clean(cfg: &SynthConfig) -> Result<Recording> {
    cfg.validate()?;
    let fs = MODEL_RATE_HZ;
    let n = cfg.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, CLEAN_STREAM));
    let mut x = pink_noise(&mut rng, n, fs, cfg.pink_noise_exponent, 0.1, 70.0);
    let env_hz = rng.random_range(0.1..0.25);
    let env_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    if cfg.alpha_power > 0.0 {
        let alpha: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                let e = 0.5 + 0.5 * (std::f64::consts::TAU * env_hz * t + env_phase).sin();
                e * e * (std::f64::consts::TAU * 10.0 * t + phase).sin()
            })
            .collect();
        let k = cfg.alpha_power.sqrt() / std_dev(&alpha).max(f64::MIN_POSITIVE);
        x.iter_mut().zip(&alpha).for_each(|(v, a)| *v += k * a);
    }
    Recording::single(fs, x)
}

/// One Gabor component of the pulse: `amp · exp(−(t−c)²/2w²) · cos(2πf(t−c))`.
#[derive(Clone, Copy, Debug)]
struct Gabor {
    amp: f64,
    centre_s: f64,
    width_s: f64,
    freq_hz: f64,
}

const ATOM: [Gabor; 3] = [
    Gabor {
        amp: 1.0,
        centre_s: 0.06,
        width_s: 0.018,
        freq_hz: 7.0,
    },
    Gabor {
        amp: -0.7,
        centre_s: 0.12,
        width_s: 0.022,
        freq_hz: 5.0,
    },
    Gabor {
        amp: 0.45,
        centre_s: 0.19,
        width_s: 0.025,
        freq_hz: 4.0,
    },
];

/// Support of the pulse atom in seconds.
pub const ATOM_SUPPORT_S: f64 = 0.26;
/// Frequency band holding at least 95% of the pulse atom's energy.
pub const BCG_BAND_HZ: [f64; 2] = [0.5, 15.0];

const ATOM_DC_WIDTH_S: f64 = 0.05;

fn gabor_sum(t: f64) -> f64 {
    ATOM.iter()
        .map(|g| {
            let d = t - g.centre_s;
            g.amp * (-(d * d) / (2.0 * g.width_s * g.width_s)).exp()
                * (std::f64::consts::TAU * g.freq_hz * d).cos()
        })
        .sum()
}

fn gauss(t: f64, c: f64, w: f64) -> f64 {
    let d = t - c;
    (-(d * d) / (2.0 * w * w)).exp()
}

/// Weight of the broad Gaussian that removes the atom's mean over its support.
fn atom_dc() -> f64 {
    static DC: OnceLock<f64> = OnceLock::new();
    *DC.get_or_init(|| {
        let n = 20_000;
        let dt = ATOM_SUPPORT_S / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let t = (i as f64 + 0.5) * dt;
            num += gabor_sum(t);
            den += gauss(t, 0.12, ATOM_DC_WIDTH_S);
        }
        num / den
    })
}

/// The zero-mean pulse atom at time `t` seconds after beat onset.
pub fn atom(t: f64) -> f64 {
    if !(0.0..=ATOM_SUPPORT_S).contains(&t) {
        return 0.0;
    }
    gabor_sum(t) - atom_dc() * gauss(t, 0.12, ATOM_DC_WIDTH_S)
}

/// Largest `|atom(t)|`, located on a 0.1 ms grid.
pub fn atom_peak() -> f64 {
    (0..=(ATOM_SUPPORT_S * 1e4) as usize)
        .map(|i| atom(i as f64 * 1e-4).abs())
        .fold(0.0, f64::max)
}

/// 99th percentile of `|x|`.
pub fn robust_peak(x: &[f64]) -> f64 {
    let mut a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    if a.is_empty() {
        return 0.0;
    }
    let k = ((a.len() - 1) as f64 * 0.99).round() as usize;
    *a.select_nth_unstable_by(k, |p, q| p.total_cmp(q)).1
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeatTrain {
    /// Onset times in seconds (may start slightly before 0).
    pub times_s: Vec<f64>,
    /// Relative amplitudes before global scaling.
    pub amplitudes: Vec<f64>,
    /// Global factor mapping relative amplitude to signal units.
    pub scale: f64,
}

/// Beat onsets `t₀ + iT + jitter` and amplitudes for `cfg`.
pub fn beat_train(cfg: &SynthConfig) -> Result<BeatTrain> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, BEAT_STREAM));
    let period = cfg.beat_period_s();
    let jitter = Normal::new(0.0, cfg.beat_jitter_ms / 1000.0).map_err(|e| Error::Config(e.to_string()))?;
    let t0 = rng.random_range(0.0..period);
    let mut times = Vec::new();
    let mut amps = Vec::new();
    let mut i = -1i64;
    loop {
        let nominal = t0 + i as f64 * period;
        if nominal >= cfg.duration_s + ATOM_SUPPORT_S {
            break;
        }
        let t = nominal + jitter.sample(&mut rng);
        let a = 1.0 + cfg.amplitude_jitter * rng.random_range(-1.0..=1.0);
        if t + ATOM_SUPPORT_S > 0.0 && t < cfg.duration_s {
            times.push(t);
            amps.push(a);
        }
        i += 1;
    }
    let clean = gen_clean(cfg)?;
    let mut sorted = amps.clone();
    sorted.sort_by(f64::total_cmp);
    let med = if sorted.is_empty() {
        1.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let scale = cfg.amplitude_ratio * robust_peak(&clean.channels[0]) / (med * atom_peak());
    Ok(BeatTrain {
        times_s: times,
        amplitudes: amps,
        scale,
    })
}

/// Renders a beat train at the model rate, evaluating the atom at the exact
/// (sub-sample) offset of every sample from each onset.
pub fn render_beats(train: &BeatTrain, n: usize) -> Vec<f64> {
    let fs = MODEL_RATE_HZ;
    let mut x = vec![0.0; n];
    for (&t, &a) in train.times_s.iter().zip(&train.amplitudes) {
        let first = (t * fs).ceil().max(0.0) as usize;
        let last = (((t + ATOM_SUPPORT_S) * fs).floor() as usize).min(n.saturating_sub(1));
        for (i, v) in x.iter_mut().enumerate().take(last + 1).skip(first) {
            *v += train.scale * a * atom(i as f64 / fs - t);
        }
    }
    x
}

/// Artifact only: the pulse train scaled against `gen_clean(cfg)`.
pub fn gen_bcg(cfg: &SynthConfig) -> Result<Recording> {
    let train = beat_train(cfg)?;
    Recording::single(MODEL_RATE_HZ, render_beats(&train, cfg.n_samples()))
}

/// `gen_clean(cfg) + gen_bcg(cfg)` together with both components.
#[derive(Clone, Debug, PartialEq)]
pub struct Contaminated {
    pub contaminated: Recording,
    pub clean: Recording,
    pub artifact: Recording,
}

pub fn gen_contaminated(cfg: &SynthConfig) -> Result<Contaminated> {
    let clean = gen_clean(cfg)?;
    let artifact = gen_bcg(cfg)?;
    let sum: Vec<f64> = clean.channels[0]
        .iter()
        .zip(&artifact.channels[0])
        .map(|(c, a)| c + a)
        .collect();
    Ok(Contaminated {
        contaminated: Recording::single(MODEL_RATE_HZ, sum)?,
        clean,
        artifact,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub role: String,
    pub seed: u64,
    pub windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: SynthConfig,
    pub scale: f64,
    pub datasets: Vec<ManifestEntry>,
}

/// Unpaired training windows and a paired evaluation set.
#[derive(Clone, Debug)]
pub struct SynthDatasets {
    /// Contaminated training windows.
    pub a: WindowedDataset,
    /// Clean training windows.
    pub b: WindowedDataset,
    /// Evaluation recordings sharing one clean component.
    pub eval: Contaminated,
    pub eval_contaminated: WindowedDataset,
    pub eval_clean: WindowedDataset,
    pub manifest: DatasetManifest,
}

/// Builds `n_train_a` contaminated windows, `n_train_b` clean windows and
/// `n_eval` paired evaluation windows from three disjoint seed streams. The
/// robust scale of the contaminated training windows normalizes all three.
pub fn make_datasets(cfg: &SynthConfig, n_train_a: usize, n_train_b: usize, n_eval: usize) -> Result<SynthDatasets> {
    cfg.validate()?;
    if n_train_a == 0 || n_train_b == 0 || n_eval == 0 {
        return Err(Error::Config("dataset window counts must be >= 1".into()));
    }
    let sub = |tag: u64, windows: usize| SynthConfig {
        seed: derive_seed(cfg.seed, tag),
        duration_s: (windows as f64).max(2.0),
        ..cfg.clone()
    };
    let (cfg_a, cfg_b, cfg_e) = (sub(0xA, n_train_a), sub(0xB, n_train_b), sub(0xE, n_eval));

    let rec_a = gen_contaminated(&cfg_a)?.contaminated;
    let rec_b = gen_clean(&cfg_b)?;
    let eval = gen_contaminated(&cfg_e)?;

    let mut a = segment(&rec_a, 1.0, None)?;
    let scale = a.scale;
    let mut b = segment(&rec_b, 1.0, Some(scale))?;
    let mut eval_contaminated = segment(&eval.contaminated, 1.0, Some(scale))?;
    let mut eval_clean = segment(&eval.clean, 1.0, Some(scale))?;
    truncate(&mut a, n_train_a)?;
    truncate(&mut b, n_train_b)?;
    truncate(&mut eval_contaminated, n_eval)?;
    truncate(&mut eval_clean, n_eval)?;

    let manifest = DatasetManifest {
        config: cfg.clone(),
        scale,
        datasets: vec![
            ManifestEntry {
                role: "A".into(),
                seed: cfg_a.seed,
                windows: n_train_a,
            },
            ManifestEntry {
                role: "B".into(),
                seed: cfg_b.seed,
                windows: n_train_b,
            },
            ManifestEntry {
                role: "eval".into(),
                seed: cfg_e.seed,
                windows: n_eval,
            },
        ],
    };
    Ok(SynthDatasets {
        a,
        b,
        eval,
        eval_contaminated,
        eval_clean,
        manifest,
    })
}

fn truncate(ds: &mut WindowedDataset, n: usize) -> Result<()> {
    if ds.len() > n {
        let rows: Vec<usize> = (0..n).collect();
        ds.windows = ds.windows.gather(&rows)?;
        ds.means.truncate(n);
        ds.provenance.truncate(n);
    }
    Ok(())
}
