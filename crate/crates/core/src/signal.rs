//! Recordings, zero-phase FIR filtering, integer decimation, 1-s windowing
//! with robust normalization, and the two on-disk recording formats.

use std::fs;
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sample rate the model operates at.
pub const MODEL_RATE_HZ: f64 = 250.0;

/// Consistency factor turning a median absolute deviation into a standard
/// deviation estimate for Gaussian data.
pub const MAD_TO_STD: f64 = 1.4826;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub sample_rate_hz: f64,
    pub channels: Vec<Vec<f64>>,
}

impl Recording {
    pub fn new(sample_rate_hz: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        let rec = Self {
            sample_rate_hz,
            channels,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn single(sample_rate_hz: f64, samples: Vec<f64>) -> Result<Self> {
        Self::new(sample_rate_hz, vec![samples])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample_rate_hz must be > 0, got {}",
                self.sample_rate_hz
            )));
        }
        if self.channels.is_empty() {
            return Err(Error::invalid("recording has no channels"));
        }
        let n = self.channels[0].len();
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.len() != n {
                return Err(Error::invalid(format!(
                    "channel {i} has {} samples, channel 0 has {n}",
                    ch.len()
                )));
            }
            if let Some(t) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("channel {i} sample {t} is not finite")));
            }
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn map_channels(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Self> {
        let channels = self
            .channels
            .iter()
            .map(|c| f(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.sample_rate_hz, channels)
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Recording) -> Result<Self> {
        self.check_same_layout(other)?;
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Self::new(self.sample_rate_hz, channels)
    }

    pub fn check_same_layout(&self, other: &Recording) -> Result<()> {
        if self.n_channels() != other.n_channels() || self.len() != other.len() {
            return Err(Error::invalid(format!(
                "recordings differ in shape: {}x{} vs {}x{}",
                self.n_channels(),
                self.len(),
                other.n_channels(),
                other.len()
            )));
        }
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::invalid(format!(
                "recordings differ in sample rate: {} vs {}",
                self.sample_rate_hz, other.sample_rate_hz
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Filtering

fn fft_size(n: usize) -> usize {
    n.next_power_of_two()
}

/// Full linear convolution of `x` and `h` via FFT.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = fft_size(out_len);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut xa: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    xa.resize(n, Complex::default());
    let mut ha: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    ha.resize(n, Complex::default());
    fwd.process(&mut xa);
    fwd.process(&mut ha);
    for (a, b) in xa.iter_mut().zip(&ha) {
        *a *= b;
    }
    inv.process(&mut xa);
    let k = 1.0 / n as f64;
    xa[..out_len].iter().map(|c| c.re * k).collect()
}

fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Hamming-windowed sinc low-pass with `n` (odd) taps and unit DC gain.
pub fn lowpass_taps(cutoff_hz: f64, fs: f64, n: usize) -> Vec<f64> {
    let fc = cutoff_hz / fs;
    let mid = (n / 2) as f64;
    let w = hamming(n);
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 - mid;
            let s = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * t)
            };
            s * w[i]
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Odd tap count giving a Hamming design with the given transition width.
fn taps_for_transition(fs: f64, transition_hz: f64) -> usize {
    let n = (3.3 * fs / transition_hz).ceil() as usize;
    (n | 1).max(3)
}

/// Applies a symmetric FIR forward and backward (zero phase). The signal is
/// extended at both ends by point reflection about its end samples.
pub fn filtfilt(h: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let g = fft_convolve(h, &h.iter().rev().copied().collect::<Vec<_>>());
    let half = g.len() / 2;
    let pad = half;
    let (x0, xn) = (x[0], x[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x0 - x[i.min(n - 1)]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * xn - x[(n - 1).saturating_sub(i)]);
    }
    let y = fft_convolve(&ext, &g);
    y[pad + half..pad + half + n].to_vec()
}

/// Zero-phase band-pass between `lo_hz` and `hi_hz`. The kernel is the
/// difference of two unit-gain windowed-sinc low-passes; `lo_hz = 0` gives a
/// plain low-pass.
pub fn bandpass(rec: &Recording, lo_hz: f64, hi_hz: f64) -> Result<Recording> {
    let nyq = rec.sample_rate_hz / 2.0;
    if !(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz < nyq) {
        return Err(Error::invalid(format!(
            "band {lo_hz}..{hi_hz} Hz must satisfy 0 <= lo < hi < Nyquist ({nyq} Hz)"
        )));
    }
    let fs = rec.sample_rate_hz;
    let mut tw = (nyq - hi_hz).min(0.25 * (hi_hz - lo_hz));
    if lo_hz > 0.0 {
        tw = tw.min(lo_hz);
    }
    let n = taps_for_transition(fs, tw);
    let mut h = lowpass_taps(hi_hz, fs, n);
    if lo_hz > 0.0 {
        let low = lowpass_taps(lo_hz, fs, n);
        h.iter_mut().zip(&low).for_each(|(a, b)| *a -= b);
    }
    rec.map_channels(|c| Ok(filtfilt(&h, c)))
}

/// Integer-factor decimation to `target_hz` after a zero-phase anti-alias
/// low-pass at 80 % of the target Nyquist frequency.
pub fn resample(rec: &Recording, target_hz: f64) -> Result<Recording> {
    let fs = rec.sample_rate_hz;
    if !(target_hz > 0.0 && target_hz <= fs) {
        return Err(Error::invalid(format!(
            "target rate {target_hz} Hz must be in (0, {fs}]"
        )));
    }
    let ratio = fs / target_hz;
    let q = ratio.round();
    if (ratio - q).abs() > 1e-9 * ratio {
        return Err(Error::Unsupported(format!(
            "non-integer resampling ratio {fs}/{target_hz}"
        )));
    }
    let q = q as usize;
    if q == 1 {
        return Ok(rec.clone());
    }
    let cutoff = 0.4 * target_hz;
    let n = taps_for_transition(fs, 0.2 * target_hz / 2.0);
    let h = lowpass_taps(cutoff, fs, n);
    let channels = rec
        .channels
        .iter()
        .map(|c| filtfilt(&h, c).into_iter().step_by(q).collect())
        .collect();
    Recording::new(target_hz, channels)
}

// ---------------------------------------------------------------------------
// Windowing

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub channel: usize,
    /// First sample of the window in its channel.
    pub offset: usize,
}

/// Zero-mean, globally scaled windows of one recording.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    /// `(n, 1, window_len)`.
    pub windows: Tensor<f64>,
    pub means: Vec<f64>,
    pub scale: f64,
    pub provenance: Vec<WindowOrigin>,
    pub sample_rate_hz: f64,
    pub n_channels: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window_len(&self) -> usize {
        self.windows.length()
    }

    /// Same metadata with new window contents of identical shape.
    pub fn with_windows(&self, windows: Tensor<f64>) -> Result<Self> {
        if windows.shape() != self.windows.shape() {
            return Err(Error::invalid(format!(
                "replacement windows have shape {:?}, expected {:?}",
                windows.shape(),
                self.windows.shape()
            )));
        }
        Ok(Self {
            windows,
            ..self.clone()
        })
    }
}

fn median(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let m = *m;
    if n % 2 == 1 {
        m
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + m)
    }
}

/// `1.4826 · median|x − median(x)|`, or 1 when that is zero.
pub fn robust_scale(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let mut v = samples.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = samples.iter().map(|x| (x - med).abs()).collect();
    let s = MAD_TO_STD * median(&mut dev);
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Cuts every channel into non-overlapping windows of `window_seconds`,
/// dropping the remainder. Each window's mean is removed and stored; all
/// windows are divided by `scale`, or by the robust scale of the
/// mean-removed samples when `scale` is `None`.
pub fn segment(rec: &Recording, window_seconds: f64, scale: Option<f64>) -> Result<WindowedDataset> {
    rec.validate()?;
    if rec.sample_rate_hz != MODEL_RATE_HZ {
        return Err(Error::invalid(format!(
            "segment expects {MODEL_RATE_HZ} Hz input, got {} Hz",
            rec.sample_rate_hz
        )));
    }
    let wl = (window_seconds * rec.sample_rate_hz).round() as usize;
    if wl == 0 {
        return Err(Error::invalid("window length rounds to zero samples"));
    }
    let per_channel = rec.len() / wl;
    if per_channel == 0 {
        return Err(Error::invalid(format!(
            "recording has {} samples, shorter than one {wl}-sample window",
            rec.len()
        )));
    }
    if let Some(s) = scale {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!("scale must be > 0, got {s}")));
        }
    }
    let mut centred = Vec::with_capacity(per_channel * rec.n_channels() * wl);
    let mut means = Vec::new();
    let mut provenance = Vec::new();
    for (c, ch) in rec.channels.iter().enumerate() {
        for w in 0..per_channel {
            let seg = &ch[w * wl..(w + 1) * wl];
            let mean = seg.iter().sum::<f64>() / wl as f64;
            centred.extend(seg.iter().map(|v| v - mean));
            means.push(mean);
            provenance.push(WindowOrigin {
                channel: c,
                offset: w * wl,
            });
        }
    }
    let scale = scale.unwrap_or_else(|| robust_scale(&centred));
    centred.iter_mut().for_each(|v| *v /= scale);
    Ok(WindowedDataset {
        windows: Tensor::new([means.len(), 1, wl], centred)?,
        means,
        scale,
        provenance,
        sample_rate_hz: rec.sample_rate_hz,
        n_channels: rec.n_channels(),
    })
}

/// Undoes the normalization and places every window back at its origin.
pub fn stitch(ds: &WindowedDataset) -> Result<Recording> {
    let n = ds.len();
    let wl = ds.window_len();
    if ds.provenance.len() != n || ds.means.len() != n {
        return Err(Error::Contract(format!(
            "{n} windows but {} provenance entries and {} means",
            ds.provenance.len(),
            ds.means.len()
        )));
    }
    let per_channel = ds
        .provenance
        .iter()
        .map(|o| o.offset / wl + 1)
        .max()
        .unwrap_or(0);
    let mut filled = vec![vec![false; per_channel]; ds.n_channels];
    let mut channels = vec![vec![0.0; per_channel * wl]; ds.n_channels];
    for (i, origin) in ds.provenance.iter().enumerate() {
        if origin.channel >= ds.n_channels || origin.offset % wl != 0 {
            return Err(Error::Contract(format!("window {i} has an invalid origin")));
        }
        let slot = origin.offset / wl;
        if std::mem::replace(&mut filled[origin.channel][slot], true) {
            return Err(Error::Contract(format!("window {i} duplicates an origin")));
        }
        let src = &ds.windows.data()[i * wl..(i + 1) * wl];
        let dst = &mut channels[origin.channel][origin.offset..origin.offset + wl];
        for (d, s) in dst.iter_mut().zip(src) {
            *d = s * ds.scale + ds.means[i];
        }
    }
    if filled.iter().flatten().any(|f| !f) {
        return Err(Error::Contract("provenance does not cover every window slot".into()));
    }
    Recording::new(ds.sample_rate_hz, channels)
}

// ---------------------------------------------------------------------------
// File formats

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordingFormat {
    /// One column per channel after a `# sample_rate_hz=<v>` line.
    Csv,
    /// Channel-major little-endian `f32` with a JSON sidecar.
    Raw,
}

impl RecordingFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => RecordingFormat::Csv,
            _ => RecordingFormat::Raw,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSidecar {
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub samples_per_channel: usize,
}

/// Sidecar path of a raw recording: the data path with `.json` appended.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_recording(path: impl AsRef<Path>) -> Result<Recording> {
    let path = path.as_ref();
    match RecordingFormat::from_path(path) {
        RecordingFormat::Csv => read_csv(path),
        RecordingFormat::Raw => read_raw(path),
    }
}

pub fn write_recording(rec: &Recording, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match RecordingFormat::from_path(path) {
        RecordingFormat::Csv => write_csv(rec, path),
        RecordingFormat::Raw => write_raw(rec, path),
    }
}

fn write_csv(rec: &Recording, path: &Path) -> Result<()> {
    rec.validate()?;
    let mut out = format!("# sample_rate_hz={}\n", rec.sample_rate_hz);
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for t in 0..rec.len() {
        w.write_record(rec.channels.iter().map(|c| c[t].to_string()))
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    out.push_str(&String::from_utf8(body).expect("numbers are ASCII"));
    fs::write(path, out)?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<Recording> {
    let text = fs::read_to_string(path)?;
    let (first, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let rate: f64 = first
        .trim()
        .strip_prefix("# sample_rate_hz=")
        .ok_or_else(|| Error::Format("line 1: expected \"# sample_rate_hz=<v>\"".into()))?
        .trim()
        .parse()
        .map_err(|e| Error::Format(format!("line 1: bad sample_rate_hz: {e}")))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let mut channels: Vec<Vec<f64>> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Format(format!("line {line}: {e}")))?;
        if channels.is_empty() {
            channels = vec![Vec::new(); row.len()];
        }
        if row.len() != channels.len() {
            return Err(Error::Format(format!(
                "line {line}: expected {} columns, found {}",
                channels.len(),
                row.len()
            )));
        }
        for (c, field) in row.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!("line {line}, column {}: bad number {field:?}", c + 1))
            })?;
            channels[c].push(v);
        }
    }
    if channels.is_empty() {
        return Err(Error::Format("no sample rows".into()));
    }
    Recording::new(rate, channels).map_err(|e| Error::Format(e.to_string()))
}

fn write_raw(rec: &Recording, path: &Path) -> Result<()> {
    rec.validate()?;
    let mut bytes = Vec::with_capacity(4 * rec.n_channels() * rec.len());
    for c in &rec.channels {
        for &v in c {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    let side = RawSidecar {
        channels: rec.n_channels(),
        sample_rate_hz: rec.sample_rate_hz,
        samples_per_channel: rec.len(),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&side)?)?;
    Ok(())
}

fn read_raw(path: &Path) -> Result<Recording> {
    let side_path = sidecar_path(path);
    let side: RawSidecar = serde_json::from_slice(&fs::read(&side_path)?)
        .map_err(|e| Error::Format(format!("sidecar {}: {e}", side_path.display())))?;
    let bytes = fs::read(path)?;
    let expected = 4 * side.channels * side.samples_per_channel;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "samples_per_channel: sidecar implies {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    let channels = if side.samples_per_channel == 0 {
        vec![Vec::new(); side.channels]
    } else {
        vals.chunks(side.samples_per_channel).map(<[f64]>::to_vec).collect()
    };
    Recording::new(side.sample_rate_hz, channels).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, fs: f64, secs: f64) -> Vec<f64> {
        let n = (fs * secs) as usize;
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn fft_convolve_matches_direct() {
        let x = [1.0, 2.0, 3.0, -1.0];
        let h = [0.5, -1.0, 2.0];
        let mut want = vec![0.0; 6];
        for (i, a) in x.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                want[i + j] += a * b;
            }
        }
        for (g, w) in fft_convolve(&x, &h).iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn bandpass_sine_probes() {
        let fs = 250.0;
        let mid = |y: &[f64]| rms(&y[y.len() / 4..3 * y.len() / 4]);
        let x10 = sine(10.0, fs, 60.0);
        let y10 = bandpass(&Recording::single(fs, x10.clone()).unwrap(), 0.1, 70.0).unwrap();
        let gain_db = 20.0 * (mid(&y10.channels[0]) / mid(&x10)).log10();
        assert!(gain_db.abs() < 1.0, "10 Hz gain {gain_db} dB");

        let x100 = sine(100.0, fs, 60.0);
        let y100 = bandpass(&Recording::single(fs, x100.clone()).unwrap(), 0.1, 70.0).unwrap();
        let att = 20.0 * (mid(&y100.channels[0]) / mid(&x100)).log10();
        assert!(att < -20.0, "100 Hz gain {att} dB");

        let dc = vec![3.0; 15000];
        let y = bandpass(&Recording::single(fs, dc).unwrap(), 0.1, 70.0).unwrap();
        let att = 20.0 * (mid(&y.channels[0]) / 3.0).log10();
        assert!(att < -20.0, "DC gain {att} dB");
    }

    #[test]
    fn bandpass_rejects_bad_band() {
        let r = Recording::single(250.0, vec![0.0; 100]).unwrap();
        assert!(matches!(bandpass(&r, 0.1, 130.0), Err(Error::InvalidArgument(_))));
        assert!(bandpass(&r, 5.0, 1.0).is_err());
    }

    #[test]
    fn resample_cases() {
        let fs = 5000.0;
        let x = sine(5.0, fs, 4.0);
        let r = resample(&Recording::single(fs, x).unwrap(), 250.0).unwrap();
        assert_eq!(r.len(), 1000);
        assert_eq!(r.sample_rate_hz, 250.0);
        let y = &r.channels[0];
        let probe = 2.0 * PI * 5.0 / 250.0;
        let amp = 2.0
            * y.iter()
                .enumerate()
                .map(|(i, v)| v * (probe * i as f64).sin())
                .sum::<f64>()
            / y.len() as f64;
        assert!((amp - 1.0).abs() < 0.01, "amplitude {amp}");

        let c = resample(&Recording::single(1000.0, vec![2.5; 999]).unwrap(), 250.0).unwrap();
        assert_eq!(c.len(), 250);
        assert!(c.channels[0].iter().all(|v| (v - 2.5).abs() < 1e-9));

        let same = Recording::single(250.0, vec![1.0, 2.0]).unwrap();
        assert_eq!(resample(&same, 250.0).unwrap(), same);
        assert!(matches!(
            resample(&Recording::single(1000.0, vec![0.0; 10]).unwrap(), 300.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn segment_counts_and_errors() {
        let r = Recording::single(250.0, (0..2500).map(|i| i as f64).collect()).unwrap();
        assert_eq!(segment(&r, 1.0, None).unwrap().len(), 10);
        let r = Recording::single(250.0, vec![1.0; 2625]).unwrap();
        assert_eq!(segment(&r, 1.0, None).unwrap().len(), 10);
        let short = Recording::single(250.0, vec![1.0; 249]).unwrap();
        assert!(matches!(segment(&short, 1.0, None), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn stitch_zero_windows_gives_means() {
        let r = Recording::new(250.0, vec![vec![1.0; 500], vec![-2.0; 500]]).unwrap();
        let ds = segment(&r, 1.0, None).unwrap();
        let z = ds.with_windows(Tensor::zeros(ds.windows.shape())).unwrap();
        let back = stitch(&z).unwrap();
        assert_eq!(back, r);
        let mut broken = ds.clone();
        broken.provenance.clear();
        assert!(matches!(stitch(&broken), Err(Error::Contract(_))));
    }

    #[test]
    fn robust_scale_of_constant_falls_back() {
        assert_eq!(robust_scale(&[3.0; 10]), 1.0);
        let s = robust_scale(&[-1.0, 1.0, -1.0, 1.0]);
        assert!((s - MAD_TO_STD).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let r = Recording::new(250.0, vec![vec![0.1, -2.5, 3.0], vec![1e-7, 2.0, 0.0]]).unwrap();
        write_recording(&r, &p).unwrap();
        assert_eq!(read_recording(&p).unwrap(), r);

        fs::write(&p, "# sample_rate_hz=250\n1,2\n3,4\n5\n").unwrap();
        let err = read_recording(&p).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        fs::write(&p, "rate=250\n1\n").unwrap();
        assert!(matches!(read_recording(&p), Err(Error::Format(_))));
    }

    #[test]
    fn raw_round_trip_and_sidecar_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.f32");
        let r = Recording::new(250.0, vec![vec![0.5, -1.25], vec![3.0, 4.0]]).unwrap();
        write_recording(&r, &p).unwrap();
        assert_eq!(read_recording(&p).unwrap(), r);
        let side = RawSidecar {
            channels: 2,
            sample_rate_hz: 250.0,
            samples_per_channel: 3,
        };
        fs::write(sidecar_path(&p), serde_json::to_vec(&side).unwrap()).unwrap();
        let err = read_recording(&p).unwrap_err().to_string();
        assert!(err.contains("samples_per_channel"), "{err}");
    }
}
