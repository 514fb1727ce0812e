//! Welch power spectra, the INPS and PTPR artifact-removal scores, ground
//! truth correlation, and an average-artifact-subtraction baseline.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{fft_convolve, Recording};

/// Sum in ascending order of magnitude, so reordering the inputs cannot
/// change the result.
fn stable_sum(vals: &[f64]) -> f64 {
    let mut v = vals.to_vec();
    v.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    v.iter().sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freq_hz: Vec<f64>,
    /// One density curve per channel.
    pub power: Vec<Vec<f64>>,
}

impl Psd {
    pub fn df(&self) -> f64 {
        if self.freq_hz.len() > 1 {
            self.freq_hz[1] - self.freq_hz[0]
        } else {
            0.0
        }
    }
}

/// Welch estimate: periodic-Hann segments of `segment_s` with fractional
/// `overlap`, mean removed per segment, one-sided density in units²/Hz.
pub fn psd_welch(rec: &Recording, segment_s: f64, overlap: f64) -> Result<Psd> {
    rec.validate()?;
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid(format!("overlap must be in [0, 1), got {overlap}")));
    }
    let fs = rec.sample_rate_hz;
    let nseg = (segment_s * fs).round() as usize;
    if nseg < 2 {
        return Err(Error::invalid("Welch segment must span at least 2 samples"));
    }
    if rec.len() < nseg {
        return Err(Error::invalid(format!(
            "recording has {} samples, shorter than one {nseg}-sample Welch segment",
            rec.len()
        )));
    }
    let step = (nseg - (overlap * nseg as f64).round() as usize).max(1);
    let window: Vec<f64> = (0..nseg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / nseg as f64).cos())
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(nseg);
    let nbins = nseg / 2 + 1;
    let freq_hz = (0..nbins).map(|k| k as f64 * fs / nseg as f64).collect();

    let mut power = Vec::with_capacity(rec.n_channels());
    for ch in &rec.channels {
        let mut acc = vec![0.0; nbins];
        let mut count = 0usize;
        let mut start = 0;
        let mut buf = vec![Complex::new(0.0, 0.0); nseg];
        while start + nseg <= ch.len() {
            let seg = &ch[start..start + nseg];
            let mean = seg.iter().sum::<f64>() / nseg as f64;
            for (b, (x, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
                *b = Complex::new((x - mean) * w, 0.0);
            }
            fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                *a += buf[k].norm_sqr();
            }
            count += 1;
            start += step;
        }
        let norm = 1.0 / (fs * wss * count as f64);
        for (k, a) in acc.iter_mut().enumerate() {
            let one_sided = if k == 0 || (nseg.is_multiple_of(2) && k == nseg / 2) {
                1.0
            } else {
                2.0
            };
            *a *= norm * one_sided;
        }
        power.push(acc);
    }
    Ok(Psd { freq_hz, power })
}

fn band_power(psd: &Psd) -> Vec<f64> {
    psd.power.iter().map(|p| stable_sum(p)).collect()
}

fn inps_from_powers(before: &[f64], after: &[f64]) -> Result<Vec<f64>> {
    before
        .iter()
        .zip(after)
        .enumerate()
        .map(|(c, (&b, &a))| {
            if a <= 0.0 || b <= 0.0 {
                return Err(Error::numerical(
                    "inps",
                    format!("channel {c} has zero power (before {b}, after {a})"),
                ));
            }
            Ok(10.0 * (b.log10() - a.log10()))
        })
        .collect()
}

/// Mean over channels of `10·log10(ΣPSD_before / ΣPSD_after)`, in dB.
pub fn inps(before: &Recording, after: &Recording) -> Result<f64> {
    before.check_same_layout(after)?;
    let pb = band_power(&psd_welch(before, 1.0, 0.5)?);
    let pa = band_power(&psd_welch(after, 1.0, 0.5)?);
    let per = inps_from_powers(&pb, &pa)?;
    Ok(stable_sum(&per) / per.len() as f64)
}

/// Mean peak-to-peak amplitude over consecutive 1-s windows (the whole
/// signal when it is shorter than one window).
pub fn mean_peak_to_peak(x: &[f64], sample_rate_hz: f64) -> f64 {
    let wl = (sample_rate_hz.round() as usize).max(1);
    let ptp = |s: &[f64]| {
        let (lo, hi) = s
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    };
    if x.len() < wl {
        return if x.is_empty() { 0.0 } else { ptp(x) };
    }
    let vals: Vec<f64> = x.chunks_exact(wl).map(ptp).collect();
    stable_sum(&vals) / vals.len() as f64
}

fn peak_values(rec: &Recording) -> Vec<f64> {
    rec.channels
        .iter()
        .map(|c| mean_peak_to_peak(c, rec.sample_rate_hz))
        .collect()
}

/// `Σ V_before / Σ V_after` with V the mean per-window peak-to-peak value.
pub fn ptpr(before: &Recording, after: &Recording) -> Result<f64> {
    before.check_same_layout(after)?;
    let vb = stable_sum(&peak_values(before));
    let va = stable_sum(&peak_values(after));
    if va <= 0.0 {
        return Err(Error::numerical("ptpr", "after-signal has zero peak-to-peak amplitude"));
    }
    Ok(vb / va)
}

/// Reduction of artifact power inside `[lo_hz, hi_hz]`, in dB, given the
/// known clean component: `10·log10(P(before − clean) / P(after − clean))`
/// summed over channels.
pub fn artifact_reduction_db(
    before: &Recording,
    after: &Recording,
    clean: &Recording,
    lo_hz: f64,
    hi_hz: f64,
) -> Result<f64> {
    before.check_same_layout(after)?;
    before.check_same_layout(clean)?;
    let in_band = |r: &Recording| -> Result<f64> {
        let psd = psd_welch(r, 1.0, 0.5)?;
        let vals: Vec<f64> = psd
            .power
            .iter()
            .flat_map(|p| {
                psd.freq_hz
                    .iter()
                    .zip(p)
                    .filter(|(f, _)| (lo_hz..=hi_hz).contains(*f))
                    .map(|(_, &v)| v)
            })
            .collect();
        Ok(stable_sum(&vals))
    };
    let pb = in_band(&before.sub(clean)?)?;
    let pa = in_band(&after.sub(clean)?)?;
    if pa <= 0.0 || pb <= 0.0 {
        return Err(Error::numerical("artifact_reduction", format!("band power before {pb}, after {pa}")));
    }
    Ok(10.0 * (pb / pa).log10())
}

/// Pearson correlation of two equal-length sequences.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid(format!(
            "correlation needs two sequences of equal length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::numerical("correlation", "constant input"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Correlation over all channels concatenated.
pub fn recording_correlation(a: &Recording, b: &Recording) -> Result<f64> {
    a.check_same_layout(b)?;
    let x: Vec<f64> = a.channels.concat();
    let y: Vec<f64> = b.channels.concat();
    pearson(&x, &y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub inps_db: f64,
    pub power_before: f64,
    pub power_after: f64,
    pub peak_before: f64,
    pub peak_after: f64,
    pub clean_correlation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Number of channels averaged over.
    pub n: usize,
    pub inps_db: f64,
    pub ptpr: f64,
    pub clean_correlation: Option<f64>,
    pub per_channel: Vec<ChannelMetrics>,
    pub freq_hz: Vec<f64>,
    pub psd_before: Vec<Vec<f64>>,
    pub psd_after: Vec<Vec<f64>>,
}

impl MetricsReport {
    /// Scores `after` against `before`, and against `clean` when the ground
    /// truth is known.
    pub fn compute(before: &Recording, after: &Recording, clean: Option<&Recording>) -> Result<Self> {
        before.check_same_layout(after)?;
        if let Some(c) = clean {
            after.check_same_layout(c)?;
        }
        let psd_b = psd_welch(before, 1.0, 0.5)?;
        let psd_a = psd_welch(after, 1.0, 0.5)?;
        let pb = band_power(&psd_b);
        let pa = band_power(&psd_a);
        let per_inps = inps_from_powers(&pb, &pa)?;
        let vb = peak_values(before);
        let va = peak_values(after);
        let va_sum = stable_sum(&va);
        if va_sum <= 0.0 {
            return Err(Error::numerical("ptpr", "after-signal has zero peak-to-peak amplitude"));
        }
        let mut per_channel = Vec::with_capacity(before.n_channels());
        for c in 0..before.n_channels() {
            let corr = match clean {
                Some(cl) => Some(pearson(&after.channels[c], &cl.channels[c])?),
                None => None,
            };
            per_channel.push(ChannelMetrics {
                inps_db: per_inps[c],
                power_before: pb[c],
                power_after: pa[c],
                peak_before: vb[c],
                peak_after: va[c],
                clean_correlation: corr,
            });
        }
        Ok(Self {
            n: before.n_channels(),
            inps_db: stable_sum(&per_inps) / per_inps.len() as f64,
            ptpr: stable_sum(&vb) / va_sum,
            clean_correlation: clean.map(|c| recording_correlation(after, c)).transpose()?,
            per_channel,
            freq_hz: psd_b.freq_hz,
            psd_before: psd_b.power,
            psd_after: psd_a.power,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `freq_hz,power_before,power_after` rows for one channel.
    pub fn psd_csv(&self, channel: usize) -> Result<String> {
        if channel >= self.n {
            return Err(Error::invalid(format!(
                "channel {channel} out of range for {} channels",
                self.n
            )));
        }
        let mut out = String::from("freq_hz,power_before,power_after\n");
        for (k, f) in self.freq_hz.iter().enumerate() {
            writeln!(
                out,
                "{f},{},{}",
                self.psd_before[channel][k], self.psd_after[channel][k]
            )
            .expect("writing to a String");
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Average artifact subtraction

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AasConfig {
    pub min_period_s: f64,
    pub max_period_s: f64,
    /// Epochs averaged into each beat's template.
    pub n_epochs: usize,
    /// Below this median epoch/template correlation the channel is left
    /// untouched.
    pub min_template_correlation: f64,
}

impl Default for AasConfig {
    fn default() -> Self {
        Self {
            min_period_s: 0.4,
            max_period_s: 1.5,
            n_epochs: 21,
            min_template_correlation: 0.75,
        }
    }
}

/// Autocorrelation of the mean-removed signal for lags `0..=max_lag`.
fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let rev: Vec<f64> = c.iter().rev().copied().collect();
    let full = fft_convolve(&c, &rev);
    let zero = c.len() - 1;
    (0..=max_lag.min(zero)).map(|l| full[zero + l]).collect()
}

/// Artifact period in samples: the highest interior local maximum of the
/// autocorrelation within the configured lag range.
pub fn estimate_period(x: &[f64], sample_rate_hz: f64, cfg: &AasConfig) -> Result<usize> {
    let lo = (cfg.min_period_s * sample_rate_hz).round() as usize;
    let hi = (cfg.max_period_s * sample_rate_hz).round() as usize;
    if lo < 1 || hi <= lo + 1 || x.len() <= hi + 1 {
        return Err(Error::PeriodDetection(format!(
            "signal of {} samples cannot resolve lags {lo}..{hi}",
            x.len()
        )));
    }
    let r = autocorrelation(x, hi + 1);
    let mut best: Option<(usize, f64)> = None;
    for l in lo.max(1)..=hi {
        if r[l] > r[l - 1] && r[l] >= r[l + 1] && r[l] > 0.0 && best.is_none_or(|(_, v)| r[l] > v) {
            best = Some((l, r[l]));
        }
    }
    best.map(|(l, _)| l).ok_or_else(|| {
        Error::PeriodDetection(format!(
            "no autocorrelation peak between {} and {} s",
            cfg.min_period_s, cfg.max_period_s
        ))
    })
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi)
        .max_by(|&a, &b| x[a].total_cmp(&x[b]))
        .expect("non-empty range")
}

/// Beat positions: greedy peak picking one period apart on the polarity of
/// the largest excursion, then alignment to the mean beat shape by
/// cross-correlation.
pub fn detect_beats(x: &[f64], period: usize) -> Vec<usize> {
    let n = x.len();
    if n < period || period < 4 {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let (imax, imin) = (0..n).fold((0, 0), |(a, b), i| {
        (
            if x[i] > x[a] { i } else { a },
            if x[i] < x[b] { i } else { b },
        )
    });
    let sign = if x[imax] - mean >= mean - x[imin] { 1.0 } else { -1.0 };
    let y: Vec<f64> = x.iter().map(|v| sign * (v - mean)).collect();

    let tol = period * 3 / 10;
    let mut beats = Vec::new();
    let anchor = argmax(&y, 0, period.min(n));
    // Walk backwards then forwards from the first peak.
    let mut pos = anchor;
    beats.push(pos);
    loop {
        let centre = pos + period;
        if centre >= n {
            break;
        }
        let lo = centre.saturating_sub(tol).max(pos + 1);
        let hi = (centre + tol + 1).min(n);
        if lo >= hi {
            break;
        }
        pos = argmax(&y, lo, hi);
        beats.push(pos);
    }

    // Refine against the mean beat shape.
    let half = period / 2;
    let len = 2 * half + 1;
    let mut template = vec![0.0; len];
    let mut count = vec![0usize; len];
    for &b in &beats {
        for (k, t) in template.iter_mut().enumerate() {
            let i = b as isize + k as isize - half as isize;
            if (0..n as isize).contains(&i) {
                *t += y[i as usize];
                count[k] += 1;
            }
        }
    }
    template
        .iter_mut()
        .zip(&count)
        .for_each(|(t, &c)| *t /= c.max(1) as f64);
    let shift = (period / 10).max(1) as isize;
    let mut refined: Vec<usize> = beats
        .iter()
        .map(|&b| {
            let score = |s: isize| -> f64 {
                let c = b as isize + s;
                template
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        let i = c + k as isize - half as isize;
                        if (0..n as isize).contains(&i) {
                            t * y[i as usize]
                        } else {
                            0.0
                        }
                    })
                    .sum()
            };
            let best = (-shift..=shift)
                .filter(|s| (0..n as isize).contains(&(b as isize + s)))
                .max_by(|&a, &c| score(a).total_cmp(&score(c)))
                .unwrap_or(0);
            (b as isize + best) as usize
        })
        .collect();
    refined.dedup();
    refined
}

/// Subtracts, around every beat, the mean of the `n_epochs` surrounding
/// epochs (the beat's own epoch excluded) aligned on their beats. Each beat
/// owns the samples closer to it than to its neighbours. When the median
/// correlation between an epoch and its template falls below
/// `min_template_correlation` there is no consistent artifact and the
/// channel is returned unchanged.
pub fn aas_channel(x: &[f64], sample_rate_hz: f64, cfg: &AasConfig) -> Result<Vec<f64>> {
    if cfg.n_epochs == 0 {
        return Err(Error::Config("n_epochs must be >= 1".into()));
    }
    let period = estimate_period(x, sample_rate_hz, cfg)?;
    let beats = detect_beats(x, period);
    if beats.len() < 2 {
        return Err(Error::PeriodDetection(format!("{} beats detected", beats.len())));
    }
    let n = x.len();
    let nb = beats.len();
    let k = cfg.n_epochs.min(nb - 1);
    let mut out = x.to_vec();
    let mut fits = Vec::with_capacity(nb);
    for (i, &b) in beats.iter().enumerate() {
        let start = if i == 0 { 0 } else { (beats[i - 1] + b).div_ceil(2) };
        let end = if i + 1 == nb { n } else { (b + beats[i + 1]).div_ceil(2) };
        // k nearest other beats: a window of k + 1 around i, minus i
        let first = i.saturating_sub(k.div_ceil(2)).min(nb - k - 1);
        let group: Vec<usize> = (first..=first + k).filter(|&j| j != i).map(|j| beats[j]).collect();
        let mut own = Vec::with_capacity(end - start);
        let mut template = Vec::with_capacity(end - start);
        for t in start..end {
            let off = t as isize - b as isize;
            let (mut sum, mut cnt) = (0.0, 0usize);
            for &g in &group {
                let j = g as isize + off;
                if (0..n as isize).contains(&j) {
                    sum += x[j as usize];
                    cnt += 1;
                }
            }
            let tv = if cnt > 0 { sum / cnt as f64 } else { 0.0 };
            own.push(x[t]);
            template.push(tv);
            out[t] -= tv;
        }
        if let Ok(r) = pearson(&own, &template) {
            fits.push(r);
        }
    }
    fits.sort_by(f64::total_cmp);
    let median_fit = fits.get(fits.len() / 2).copied().unwrap_or(0.0);
    if median_fit < cfg.min_template_correlation {
        return Ok(x.to_vec());
    }
    Ok(out)
}

/// Channel-wise average artifact subtraction.
pub fn aas_baseline(rec: &Recording, cfg: &AasConfig) -> Result<Recording> {
    rec.map_channels(|c| aas_channel(c, rec.sample_rate_hz, cfg))
}
