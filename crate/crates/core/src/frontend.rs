//! Spectrogram frontend: 16 kHz mono audio in, a two-plane log-mel input
//! tensor out (the features and their frame-to-frame differences).
//!
//! The short-time transform uses a periodic Hann window with the signal
//! reflect-padded by half a window on each side, so frame t is centered on
//! sample `t * hop` and a clip of T samples yields `floor(T / hop) + 1`
//! frames. Power spectra are unnormalized (plain `|X[k]|^2` of the windowed
//! frame). Mel filters are triangles on 231 equally spaced points of the
//! HTK mel scale, each divided by its bandwidth in hertz.
//!
//! Spectrogram file layout (little-endian): magic `AMTS`, version u32,
//! sample rate u32, hop u32, rows u32, cols u32, then the feature plane and
//! the difference plane as f32 row-major.

use std::io::{self, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::binio;
use crate::matrix::Matrix;

const SPECTRO_MAGIC: &[u8; 4] = b"AMTS";
const SPECTRO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("bad frontend config: {0}")]
    Config(String),
    #[error("bad wav data: {0}")]
    Wav(String),
    #[error("bad spectrogram file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Analysis parameters. The two named presets differ only in hop length:
/// `ov-2023` hops 384 samples (24 ms frames), `of-2017` hops 512 (32 ms).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub mel_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self::ov2023()
    }
}

impl FrontendConfig {
    pub fn ov2023() -> Self {
        Self {
            sample_rate: 16_000,
            window: 2048,
            hop: 384,
            mel_bins: 229,
            fmin: 50.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }

    pub fn of2017() -> Self {
        Self { hop: 512, ..Self::ov2023() }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ov-2023" => Some(Self::ov2023()),
            "of-2017" => Some(Self::of2017()),
            _ => None,
        }
    }

    /// Frame period in seconds.
    pub fn delta_t(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    pub fn frames_for(&self, num_samples: usize) -> usize {
        num_samples / self.hop + 1
    }

    fn check(&self) -> Result<(), FrontendError> {
        if self.window == 0 || self.hop == 0 || self.hop > self.window {
            return Err(FrontendError::Config(format!(
                "hop {} and window {} must satisfy 0 < hop <= window",
                self.hop, self.window
            )));
        }
        if self.mel_bins == 0 {
            return Err(FrontendError::Config("zero mel bins".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(0.0 < self.fmin && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(FrontendError::Config(format!(
                "band {}..{} Hz must lie inside (0, {nyquist}]",
                self.fmin, self.fmax
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(FrontendError::Config("log floor must be positive".into()));
        }
        Ok(())
    }
}

/// The network input: feature plane and its temporal difference, both
/// `mel_bins x frames`, plus the frame period they were cut on.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectroInput {
    pub mel: Matrix,
    pub delta: Matrix,
    pub delta_t: f64,
}

/// Periodic Hann window (denominator `len`, not `len - 1`).
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()))
        .collect()
}

pub(crate) fn reflect_index(mut s: i64, len: i64) -> usize {
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    // Reflect without repeating the edge sample until s lands in range.
    loop {
        if s < 0 {
            s = -s;
        } else if s >= len {
            s = 2 * (len - 1) - s;
        } else {
            return s as usize;
        }
    }
}

/// One-sided power spectrogram, `(window/2 + 1) x frames`.
pub fn stft_power(samples: &[f32], cfg: &FrontendConfig) -> Result<Matrix, FrontendError> {
    cfg.check()?;
    if samples.is_empty() {
        return Err(FrontendError::Config("empty signal".into()));
    }
    let n = cfg.window;
    let bins = n / 2 + 1;
    let frames = cfg.frames_for(samples.len());
    let window = hann_window(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let len = samples.len() as i64;
    let half = (n / 2) as i64;

    let columns: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map(|t| {
            let center = (t * cfg.hop) as i64;
            let mut buf: Vec<Complex<f64>> = (0..n as i64)
                .map(|j| {
                    let s = samples[reflect_index(center - half + j, len)] as f64;
                    Complex::new(s * window[j as usize], 0.0)
                })
                .collect();
            let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf[..bins].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect();

    let mut out = Matrix::zeros(bins, frames);
    for (t, col) in columns.iter().enumerate() {
        for (k, &v) in col.iter().enumerate() {
            out.set(k, t, v);
        }
    }
    Ok(out)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters as `(first_bin, weights)` rows over the one-sided
/// spectrum. Each triangle spans three consecutive edge frequencies and is
/// scaled by `1 / (right - left)`.
fn mel_filterbank(cfg: &FrontendConfig) -> Vec<(usize, Vec<f64>)> {
    let bins = cfg.window / 2 + 1;
    let hz_per_bin = cfg.sample_rate as f64 / cfg.window as f64;
    let mel_lo = hz_to_mel(cfg.fmin);
    let mel_hi = hz_to_mel(cfg.fmax);
    let edges: Vec<f64> = (0..cfg.mel_bins + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.mel_bins + 1) as f64))
        .collect();
    (0..cfg.mel_bins)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 1.0 / (right - left);
            let k_lo = (left / hz_per_bin).ceil() as usize;
            let k_hi = ((right / hz_per_bin).floor() as usize).min(bins - 1);
            let weights: Vec<f64> = (k_lo..=k_hi)
                .map(|k| {
                    let f = k as f64 * hz_per_bin;
                    let tri = if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    };
                    tri.max(0.0) * norm
                })
                .collect();
            (k_lo, weights)
        })
        .collect()
}

/// Full frontend: power spectrogram, mel projection, floored natural log,
/// and the temporal difference plane (first column zero).
pub fn compute(samples: &[f32], cfg: &FrontendConfig) -> Result<SpectroInput, FrontendError> {
    let power = stft_power(samples, cfg)?;
    let filters = mel_filterbank(cfg);
    let frames = power.cols();
    let mut mel = Matrix::zeros(cfg.mel_bins, frames);
    let rows: Vec<Vec<f64>> = filters
        .par_iter()
        .map(|(k_lo, weights)| {
            (0..frames)
                .map(|t| {
                    let mut acc = 0.0;
                    for (i, &w) in weights.iter().enumerate() {
                        acc += w * power.get(k_lo + i, t);
                    }
                    acc.max(cfg.log_floor).ln()
                })
                .collect()
        })
        .collect();
    for (m, row) in rows.iter().enumerate() {
        mel.row_mut(m).copy_from_slice(row);
    }
    let delta = delta_plane(&mel);
    Ok(SpectroInput { mel, delta, delta_t: cfg.delta_t() })
}

/// Columnwise backward difference with a zero first column.
pub fn delta_plane(mel: &Matrix) -> Matrix {
    let mut delta = Matrix::zeros(mel.rows(), mel.cols());
    for r in 0..mel.rows() {
        for t in 1..mel.cols() {
            delta.set(r, t, mel.get(r, t) - mel.get(r, t - 1));
        }
    }
    delta
}

// ---------------------------------------------------------------------------
// Resampling

/// Interpolates `out_len` samples at positions `n * step` on the source
/// grid with a Hann-windowed sinc kernel (cut off at the narrower of the
/// two Nyquist bands when `step > 1`).
pub fn sinc_resample(samples: &[f32], step: f64, out_len: usize) -> Vec<f32> {
    assert!(step > 0.0 && step.is_finite());
    let cutoff = (1.0 / step).min(1.0);
    let half_width = (32.0 / cutoff).ceil();
    let sinc = |x: f64| {
        if x.abs() < 1e-12 {
            1.0
        } else {
            let px = std::f64::consts::PI * x;
            px.sin() / px
        }
    };
    (0..out_len)
        .map(|n| {
            let center = n as f64 * step;
            let lo = ((center - half_width).ceil() as i64).max(0);
            let hi = ((center + half_width).floor() as i64).min(samples.len() as i64 - 1);
            let mut acc = 0.0f64;
            for i in lo..=hi {
                let d = i as f64 - center;
                let w = 0.5 * (1.0 + (std::f64::consts::PI * d / half_width).cos());
                acc += samples[i as usize] as f64 * cutoff * sinc(cutoff * d) * w;
            }
            acc as f32
        })
        .collect()
}

/// Rate conversion via [`sinc_resample`]; output length rounds
/// `len * to / from` to nearest.
pub fn resample(samples: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    assert!(from_rate > 0 && to_rate > 0);
    if from_rate == to_rate {
        return samples.to_vec();
    }
    let out_len = ((samples.len() as u64 * to_rate as u64 + from_rate as u64 / 2)
        / from_rate as u64) as usize;
    sinc_resample(samples, from_rate as f64 / to_rate as f64, out_len)
}

// ---------------------------------------------------------------------------
// WAV I/O

/// Mono audio with its native rate.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl WavData {
    /// Mono samples at the given rate, converting if needed.
    pub fn at_rate(&self, rate: u32) -> Vec<f32> {
        resample(&self.samples, self.sample_rate, rate)
    }
}

/// Reads a RIFF/WAVE file: integer PCM at 16, 24, or 32 bits or IEEE float
/// at 32 or 64 bits, any channel count (channels are averaged to mono).
pub fn read_wav(bytes: &[u8]) -> Result<WavData, FrontendError> {
    let bad = |s: &str| FrontendError::Wav(s.into());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = bytes
            .get(pos + 8..pos + 8 + size)
            .ok_or_else(|| bad("chunk runs past end of file"))?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let u16at = |o: usize| u16::from_le_bytes(body[o..o + 2].try_into().unwrap());
                let mut format = u16at(0);
                if format == 0xFFFE {
                    // Extensible: the real format leads the GUID at offset 24.
                    if size < 26 {
                        return Err(bad("extensible fmt chunk too short"));
                    }
                    format = u16at(24);
                }
                let channels = u16at(2);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16at(14);
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + size + (size & 1); // chunks are word-aligned
    }
    let (format, channels, rate, bits) = fmt.ok_or_else(|| bad("missing fmt chunk"))?;
    let data = data.ok_or_else(|| bad("missing data chunk"))?;
    if channels == 0 || rate == 0 {
        return Err(bad("zero channels or sample rate"));
    }
    let decode: fn(&[u8]) -> f64 = match (format, bits) {
        (1, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (1, 24) => |b| {
            let v = ((b[2] as i32) << 24 | (b[1] as i32) << 16 | (b[0] as i32) << 8) >> 8;
            v as f64 / 8_388_608.0
        },
        (1, 32) => |b| i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0,
        (3, 32) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        (3, 64) => |b| f64::from_le_bytes(b[0..8].try_into().unwrap()),
        _ => {
            return Err(FrontendError::Wav(format!(
                "unsupported format {format} at {bits} bits"
            )))
        }
    };
    let bytes_per = bits as usize / 8;
    let stride = bytes_per * channels as usize;
    let n_frames = data.len() / stride;
    let samples = (0..n_frames)
        .map(|i| {
            let frame = &data[i * stride..(i + 1) * stride];
            let sum: f64 = (0..channels as usize)
                .map(|c| decode(&frame[c * bytes_per..(c + 1) * bytes_per]))
                .sum();
            (sum / channels as f64) as f32
        })
        .collect();
    Ok(WavData { samples, sample_rate: rate })
}

/// Writes mono 32-bit float WAVE, which keeps samples bit-exact.
pub fn write_wav(samples: &[f32], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 4;
    let mut out = Vec::with_capacity(data_len + 44);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&3u16.to_le_bytes()); // IEEE float
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<WavData, FrontendError> {
    read_wav(&std::fs::read(path)?)
}

pub fn save_wav(samples: &[f32], sample_rate: u32, path: impl AsRef<Path>) -> Result<(), FrontendError> {
    std::fs::write(path, write_wav(samples, sample_rate))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Spectrogram files

pub fn write_spectro<W: Write>(
    input: &SpectroInput,
    cfg: &FrontendConfig,
    w: &mut W,
) -> io::Result<()> {
    w.write_all(SPECTRO_MAGIC)?;
    binio::write_u32(w, SPECTRO_VERSION)?;
    binio::write_u32(w, cfg.sample_rate)?;
    binio::write_u32(w, cfg.hop as u32)?;
    binio::write_u32(w, input.mel.rows() as u32)?;
    binio::write_u32(w, input.mel.cols() as u32)?;
    for plane in [&input.mel, &input.delta] {
        for &v in plane.data() {
            binio::write_f32(w, v as f32)?;
        }
    }
    Ok(())
}

pub fn read_spectro<R: Read>(r: &mut R) -> Result<SpectroInput, FrontendError> {
    let magic = binio::read_magic(r)?;
    if &magic != SPECTRO_MAGIC {
        return Err(FrontendError::Format(format!(
            "magic {magic:?} is not {SPECTRO_MAGIC:?}"
        )));
    }
    let version = binio::read_u32(r)?;
    if version != SPECTRO_VERSION {
        return Err(FrontendError::Format(format!("unsupported version {version}")));
    }
    let sample_rate = binio::read_u32(r)?;
    let hop = binio::read_u32(r)?;
    if sample_rate == 0 || hop == 0 {
        return Err(FrontendError::Format("zero sample rate or hop".into()));
    }
    let rows = binio::read_u32(r)? as usize;
    let cols = binio::read_u32(r)? as usize;
    let mut read_plane = || -> Result<Matrix, FrontendError> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(binio::read_f32(r)? as f64);
        }
        Ok(Matrix::from_vec(rows, cols, data))
    };
    let mel = read_plane()?;
    let delta = read_plane()?;
    Ok(SpectroInput { mel, delta, delta_t: hop as f64 / sample_rate as f64 })
}

pub fn save_spectro(
    input: &SpectroInput,
    cfg: &FrontendConfig,
    path: impl AsRef<Path>,
) -> Result<(), FrontendError> {
    let mut buf = Vec::new();
    write_spectro(input, cfg, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_spectro(path: impl AsRef<Path>) -> Result<SpectroInput, FrontendError> {
    read_spectro(&mut std::fs::read(path)?.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, seconds: f64, rate: u32) -> Vec<f32> {
        let n = (seconds * rate as f64).round() as usize;
        (0..n)
            .map(|i| {
                (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin()) as f32
            })
            .collect()
    }

    #[test]
    fn frame_counts_for_one_second() {
        let cfg = FrontendConfig::ov2023();
        assert_eq!(cfg.frames_for(16000), 42);
        let cfg = FrontendConfig::of2017();
        assert_eq!(cfg.frames_for(16000), 32);
    }

    /// Frames whose analysis window lies fully inside the signal, away from
    /// the reflect-padded edges (which window a kinked mirror image).
    fn interior_frames(cfg: &FrontendConfig, num_samples: usize) -> std::ops::Range<usize> {
        let first = cfg.window.div_ceil(2 * cfg.hop);
        let last = (num_samples - cfg.window / 2) / cfg.hop;
        first..last + 1
    }

    #[test]
    fn sine_peaks_in_the_expected_fft_bin() {
        // 440 Hz on a 7.8125 Hz bin grid peaks at bin 56.
        let cfg = FrontendConfig::ov2023();
        let samples = sine(440.0, 0.5, 1.0, 16000);
        let power = stft_power(&samples, &cfg).unwrap();
        let frames = interior_frames(&cfg, samples.len());
        assert!(frames.len() > 30);
        for t in frames {
            let argmax = (0..power.rows())
                .max_by(|&a, &b| power.get(a, t).total_cmp(&power.get(b, t)))
                .unwrap();
            assert_eq!(argmax, 56, "frame {t}");
        }
    }

    #[test]
    fn sine_peaks_in_the_mel_filter_containing_it() {
        let cfg = FrontendConfig::ov2023();
        let samples = sine(440.0, 0.5, 1.0, 16000);
        let input = compute(&samples, &cfg).unwrap();
        // Filters whose triangle support spans 440 Hz.
        let mel_lo = hz_to_mel(cfg.fmin);
        let step = (hz_to_mel(cfg.fmax) - mel_lo) / (cfg.mel_bins + 1) as f64;
        let edge = |i: usize| mel_to_hz(mel_lo + step * i as f64);
        let containing: Vec<usize> = (0..cfg.mel_bins)
            .filter(|&m| edge(m) < 440.0 && 440.0 < edge(m + 2))
            .collect();
        assert!(!containing.is_empty());
        for t in interior_frames(&cfg, samples.len()) {
            let argmax = (0..input.mel.rows())
                .max_by(|&a, &b| input.mel.get(a, t).total_cmp(&input.mel.get(b, t)))
                .unwrap();
            assert!(containing.contains(&argmax), "frame {t}: row {argmax}");
        }
    }

    #[test]
    fn zero_input_gives_zero_power_and_floored_log() {
        let cfg = FrontendConfig::ov2023();
        let silence = vec![0.0f32; 8000];
        let power = stft_power(&silence, &cfg).unwrap();
        assert!(power.data().iter().all(|&v| v == 0.0));
        let input = compute(&silence, &cfg).unwrap();
        let floor_log = cfg.log_floor.ln();
        assert!(input.mel.data().iter().all(|&v| v == floor_log));
        assert!(input.delta.data().iter().all(|&v| v == 0.0));
    }

    /// Energy oracle: the full-spectrum power sum (one-sided bins with the
    /// interior doubled) must equal the window length times the windowed
    /// frame's energy. The frame is rebuilt here from scratch.
    #[test]
    fn stft_satisfies_parseval() {
        let cfg = FrontendConfig::ov2023();
        let samples = sine(523.25, 0.4, 0.3, 16000);
        let power = stft_power(&samples, &cfg).unwrap();
        let window = hann_window(cfg.window);
        let n = cfg.window;
        for t in [0usize, 3, 7] {
            let mut spectral = power.get(0, t) + power.get(n / 2, t);
            for k in 1..n / 2 {
                spectral += 2.0 * power.get(k, t);
            }
            let center = (t * cfg.hop) as i64;
            let mut time = 0.0;
            for j in 0..n as i64 {
                let mut s = center - (n / 2) as i64 + j;
                // Independent reflection: mirror around 0 and len-1.
                let len = samples.len() as i64;
                while s < 0 || s >= len {
                    if s < 0 {
                        s = -s;
                    } else {
                        s = 2 * (len - 1) - s;
                    }
                }
                let v = samples[s as usize] as f64 * window[j as usize];
                time += v * v;
            }
            let rel = (spectral - n as f64 * time).abs() / (n as f64 * time);
            assert!(rel < 1e-10, "frame {t}: relative error {rel}");
        }
    }

    #[test]
    fn doubling_amplitude_shifts_log_mel_by_ln4() {
        let cfg = FrontendConfig::ov2023();
        let quiet = compute(&sine(440.0, 0.25, 0.5, 16000), &cfg).unwrap();
        let loud = compute(&sine(440.0, 0.5, 0.5, 16000), &cfg).unwrap();
        let ln4 = 4.0f64.ln();
        let floor_log = cfg.log_floor.ln();
        let mut checked = 0;
        for r in 0..quiet.mel.rows() {
            for t in 0..quiet.mel.cols() {
                let a = quiet.mel.get(r, t);
                if a > floor_log {
                    assert!(
                        (loud.mel.get(r, t) - a - ln4).abs() < 1e-3,
                        "bin {r} frame {t}"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 100, "only {checked} cells above the floor");
    }

    #[test]
    fn delta_is_the_exact_backward_difference() {
        let cfg = FrontendConfig::ov2023();
        let input = compute(&sine(330.0, 0.4, 0.6, 16000), &cfg).unwrap();
        for r in 0..input.mel.rows() {
            assert_eq!(input.delta.get(r, 0), 0.0);
            for t in 1..input.mel.cols() {
                assert_eq!(
                    input.delta.get(r, t),
                    input.mel.get(r, t) - input.mel.get(r, t - 1),
                    "row {r} frame {t}"
                );
            }
        }
    }

    #[test]
    fn cumulative_delta_reconstructs_periodic_signal_exactly() {
        // A signal whose period equals the hop shows every interior frame the
        // same samples, so interior differences are exactly zero and the
        // running sum rebuilds those columns bit for bit.
        let cfg = FrontendConfig::ov2023();
        let mut tile = vec![0.0f32; cfg.hop];
        let mut state = 0x2F6E2B1u32;
        for s in &mut tile {
            state = state.wrapping_mul(1664525).wrapping_add(1013904223);
            *s = (state >> 8) as f32 / (1 << 24) as f32 - 0.5;
        }
        let samples: Vec<f32> = tile.iter().copied().cycle().take(16000).collect();
        let input = compute(&samples, &cfg).unwrap();
        let frames = interior_frames(&cfg, samples.len());
        let base = frames.start;
        for r in 0..input.mel.rows() {
            let mut acc = input.mel.get(r, base);
            for t in base + 1..frames.end {
                acc += input.delta.get(r, t);
                assert_eq!(acc, input.mel.get(r, t), "row {r} frame {t}");
            }
        }
    }

    #[test]
    fn cumulative_delta_reconstructs_tone_to_rounding() {
        let cfg = FrontendConfig::ov2023();
        let input = compute(&sine(330.0, 0.4, 0.6, 16000), &cfg).unwrap();
        for r in 0..input.mel.rows() {
            let mut acc = input.mel.get(r, 0);
            for t in 1..input.mel.cols() {
                acc += input.delta.get(r, t);
                assert!(
                    (acc - input.mel.get(r, t)).abs() < 1e-12,
                    "row {r} frame {t}: {acc} vs {}",
                    input.mel.get(r, t)
                );
            }
        }
    }

    #[test]
    fn delta_of_linear_ramp_is_one() {
        let mut x = Matrix::zeros(3, 5);
        for r in 0..3 {
            for t in 0..5 {
                x.set(r, t, t as f64);
            }
        }
        let d = delta_plane(&x);
        for r in 0..3 {
            assert_eq!(d.get(r, 0), 0.0);
            for t in 1..5 {
                assert_eq!(d.get(r, t), 1.0);
            }
        }
    }

    #[test]
    fn shifting_by_whole_hops_shifts_columns() {
        let cfg = FrontendConfig::ov2023();
        let mut signal = vec![0.0f32; 16000];
        // A noise burst away from the edges.
        let mut state = 0x12345678u32;
        for s in &mut signal[4000..6000] {
            state = state.wrapping_mul(1664525).wrapping_add(1013904223);
            *s = (state >> 8) as f32 / (1 << 24) as f32 - 0.5;
        }
        let mut delayed = vec![0.0f32; 2 * cfg.hop];
        delayed.extend_from_slice(&signal);
        let a = stft_power(&signal, &cfg).unwrap();
        let b = stft_power(&delayed, &cfg).unwrap();
        // Interior frames see exactly the same samples.
        for t in 4..40 {
            for k in 0..a.rows() {
                assert_eq!(a.get(k, t), b.get(k, t + 2), "bin {k} frame {t}");
            }
        }
    }

    #[test]
    fn mel_filters_cover_the_band_without_gaps() {
        let cfg = FrontendConfig::ov2023();
        let filters = mel_filterbank(&cfg);
        assert_eq!(filters.len(), 229);
        // Every FFT bin strictly inside the band gets nonzero total weight.
        let hz_per_bin = cfg.sample_rate as f64 / cfg.window as f64;
        let bins = cfg.window / 2 + 1;
        let mut total = vec![0.0f64; bins];
        for (k_lo, weights) in &filters {
            for (i, &w) in weights.iter().enumerate() {
                total[k_lo + i] += w;
            }
        }
        let first_center = hz_to_mel(cfg.fmin)
            + (hz_to_mel(cfg.fmax) - hz_to_mel(cfg.fmin)) / 230.0;
        let lo = (mel_to_hz(first_center) / hz_per_bin).ceil() as usize;
        let hi = (cfg.fmax / hz_per_bin).floor() as usize;
        for (k, &w) in total.iter().enumerate().take(hi).skip(lo) {
            assert!(w > 0.0, "bin {k} ({} Hz) uncovered", k as f64 * hz_per_bin);
        }
    }

    #[test]
    fn wav_float_round_trip_is_bit_exact() {
        let samples = sine(440.0, 0.3, 0.05, 16000);
        let bytes = write_wav(&samples, 16000);
        let back = read_wav(&bytes).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.samples, samples);
    }

    #[test]
    fn wav_pcm16_stereo_averages_to_mono() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 8).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&44100u32.to_le_bytes());
        bytes.extend_from_slice(&(44100u32 * 4).to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&8u32.to_le_bytes());
        for v in [16384i16, -16384, 8192, 8192] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let wav = read_wav(&bytes).unwrap();
        assert_eq!(wav.sample_rate, 44100);
        assert_eq!(wav.samples.len(), 2);
        assert!(wav.samples[0].abs() < 1e-7);
        assert!((wav.samples[1] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn truncated_wav_rejected() {
        let bytes = write_wav(&[0.1, 0.2, 0.3], 16000);
        assert!(read_wav(&bytes[..20]).is_err());
    }

    #[test]
    fn resample_preserves_tone_frequency() {
        let src = sine(440.0, 0.5, 0.5, 48000);
        let out = resample(&src, 48000, 16000);
        let expect = (0.5 * 16000.0) as usize;
        assert!((out.len() as i64 - expect as i64).abs() <= 1);
        let cfg = FrontendConfig::ov2023();
        let power = stft_power(&out, &cfg).unwrap();
        let mid = power.cols() / 2;
        let argmax = (0..power.rows())
            .max_by(|&a, &b| power.get(a, mid).total_cmp(&power.get(b, mid)))
            .unwrap();
        assert_eq!(argmax, 56);
    }

    #[test]
    fn identity_resample_is_a_copy() {
        let src = sine(440.0, 0.5, 0.1, 16000);
        assert_eq!(resample(&src, 16000, 16000), src);
    }

    #[test]
    fn spectro_file_round_trips_at_f32_precision() {
        let cfg = FrontendConfig::ov2023();
        let input = compute(&sine(440.0, 0.5, 0.2, 16000), &cfg).unwrap();
        let mut buf = Vec::new();
        write_spectro(&input, &cfg, &mut buf).unwrap();
        let back = read_spectro(&mut buf.as_slice()).unwrap();
        assert_eq!(back.mel.rows(), input.mel.rows());
        assert_eq!(back.mel.cols(), input.mel.cols());
        assert_eq!(back.delta_t, input.delta_t);
        for (a, b) in back.mel.data().iter().zip(input.mel.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        buf[2] = b'X';
        assert!(matches!(
            read_spectro(&mut buf.as_slice()),
            Err(FrontendError::Format(_))
        ));
    }
}
