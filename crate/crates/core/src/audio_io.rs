//! Audio file I/O, framing/overlap-add and binaural scene simulation.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 22050;
pub const DEFAULT_FRAME_LEN: usize = 256;
pub const DEFAULT_HOP: usize = 128;
pub const DEFAULT_HEAD_RADIUS_M: f64 = 0.0875;
pub const SPEED_OF_SOUND_M_S: f64 = 343.0;
pub const MAX_AZIMUTH_DEG: f64 = 80.0;

/// Multichannel audio normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::invalid(format!(
                "expected 1 or 2 channels, got {}",
                channels.len()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if channels.iter().any(|c| c.len() != channels[0].len()) {
            return Err(Error::dim("channels have different lengths"));
        }
        if channels.iter().flatten().any(|s| !s.is_finite()) {
            return Err(Error::invalid("non-finite sample"));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn stereo(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![left, right], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, idx: usize) -> &[f64] {
        &self.channels[idx]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }
}

/// Reads a 16-bit PCM RIFF/WAVE file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Wav(format!(
            "{}: unsupported encoding ({:?}, {} bits); only 16-bit PCM is accepted",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::Wav(format!(
            "{}: {} channels; only mono or stereo is accepted",
            path.display(),
            spec.channels
        )));
    }
    let n_ch = spec.channels as usize;
    let mut channels = vec![Vec::with_capacity(reader.len() as usize / n_ch); n_ch];
    for (idx, sample) in reader.into_samples::<i16>().enumerate() {
        let sample = sample.map_err(|e| wav_error(path, e))?;
        channels[idx % n_ch].push(f64::from(sample) / 32768.0);
    }
    if channels[0].is_empty() {
        return Err(Error::Wav(format!("{}: zero-length audio", path.display())));
    }
    if channels.iter().any(|c| c.len() != channels[0].len()) {
        return Err(Error::Wav(format!("{}: truncated sample frame", path.display())));
    }
    AudioBuffer::new(channels, spec.sample_rate)
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Wav(format!("{}: {other}", path.display())),
    }
}

/// Saturating conversion to a 16-bit sample.
pub fn quantize_sample(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes 16-bit PCM; the file appears atomically.
pub fn write_wav(path: impl AsRef<Path>, buffer: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    if buffer.channels.iter().flatten().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN sample in output buffer"));
    }
    let spec = hound::WavSpec {
        channels: buffer.num_channels() as u16,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut bytes = Cursor::new(Vec::new());
    {
        let mut writer =
            hound::WavWriter::new(&mut bytes, spec).map_err(|e| wav_error(path, e))?;
        for n in 0..buffer.len() {
            for ch in &buffer.channels {
                writer
                    .write_sample(quantize_sample(ch[n]))
                    .map_err(|e| wav_error(path, e))?;
            }
        }
        writer.finalize().map_err(|e| wav_error(path, e))?;
    }
    write_atomic(path, &bytes.into_inner())
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, contents: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Analysis window shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Periodic Hann.
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rect",
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "rect" | "rectangular" => Ok(Window::Rectangular),
            other => Err(Error::invalid(format!("unknown window '{other}'"))),
        }
    }
}

/// Returns the constant window overlap sum at this hop, or an error if the
/// window/hop pair is not constant-overlap-add.
pub fn cola_gain(window: &[f64], hop: usize) -> Result<f64> {
    if hop == 0 || hop > window.len() {
        return Err(Error::invalid(format!(
            "hop {hop} invalid for frame length {}",
            window.len()
        )));
    }
    let sums: Vec<f64> = (0..hop)
        .map(|n| window.iter().skip(n).step_by(hop).sum())
        .collect();
    let first = sums[0];
    let tol = 1e-9 * first.abs().max(1e-12);
    if first <= 0.0 || sums.iter().any(|s| (s - first).abs() > tol) {
        return Err(Error::Config(format!(
            "window of length {} is not constant-overlap-add at hop {hop}",
            window.len()
        )));
    }
    Ok(first)
}

/// Splits `samples` into frames starting every `hop` samples; the tail frame
/// is zero padded.
pub fn frame_stream(samples: &[f64], frame_len: usize, hop: usize) -> Result<Vec<Vec<f64>>> {
    if hop == 0 || frame_len < hop {
        return Err(Error::invalid(format!(
            "need frame_len >= hop >= 1 (frame_len {frame_len}, hop {hop})"
        )));
    }
    if samples.is_empty() {
        return Err(Error::invalid("cannot frame an empty buffer"));
    }
    let count = samples.len().div_ceil(hop);
    Ok((0..count)
        .map(|k| {
            let start = k * hop;
            let end = (start + frame_len).min(samples.len());
            let mut frame = samples[start..end].to_vec();
            frame.resize(frame_len, 0.0);
            frame
        })
        .collect())
}

/// Overlap-adds analysis-windowed frames and removes the window overlap gain.
pub fn overlap_add(frames: &[Vec<f64>], hop: usize, window: &[f64]) -> Result<Vec<f64>> {
    let gain = cola_gain(window, hop)?;
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let frame_len = first.len();
    if frame_len != window.len() || frames.iter().any(|f| f.len() != frame_len) {
        return Err(Error::dim("frames and window must share one length"));
    }
    let mut out = vec![0.0; (frames.len() - 1) * hop + frame_len];
    for (k, frame) in frames.iter().enumerate() {
        for (o, s) in out[k * hop..].iter_mut().zip(frame) {
            *o += s;
        }
    }
    let inv = 1.0 / gain;
    out.iter_mut().for_each(|s| *s *= inv);
    Ok(out)
}

/// Left/right head-related impulse responses for one azimuth.
#[derive(Debug, Clone, PartialEq)]
pub struct HrirPair {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub azimuth_deg: f64,
    pub sample_rate: u32,
}

impl HrirPair {
    pub fn validate(&self) -> Result<()> {
        if self.left.is_empty() || self.right.is_empty() {
            return Err(Error::invalid("HRIR responses must be non-empty"));
        }
        if self.left.iter().chain(&self.right).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite HRIR tap"));
        }
        Ok(())
    }

    /// Identity pair (unit impulse to both ears).
    pub fn identity(sample_rate: u32) -> Self {
        Self {
            left: vec![1.0],
            right: vec![1.0],
            azimuth_deg: 0.0,
            sample_rate,
        }
    }
}

/// Full linear convolution.
pub fn convolve(signal: &[f64], filter: &[f64]) -> Vec<f64> {
    if signal.is_empty() || filter.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; signal.len() + filter.len() - 1];
    for (k, &h) in filter.iter().enumerate() {
        if h == 0.0 {
            continue;
        }
        for (o, &x) in out[k..].iter_mut().zip(signal) {
            *o += h * x;
        }
    }
    out
}

/// Renders a mono source through an HRIR pair into a stereo scene.
pub fn convolve_hrir(mono: &AudioBuffer, hrir: &HrirPair) -> Result<AudioBuffer> {
    if mono.num_channels() != 1 {
        return Err(Error::invalid("convolve_hrir expects a mono source"));
    }
    if mono.sample_rate() != hrir.sample_rate {
        return Err(Error::invalid(format!(
            "sample rate mismatch: source {} Hz, HRIR {} Hz",
            mono.sample_rate(),
            hrir.sample_rate
        )));
    }
    hrir.validate()?;
    let (left, right) = render_pair(mono.channel(0), hrir);
    AudioBuffer::stereo(left, right, mono.sample_rate())
}

/// Convolves through both ears, padding to a common length.
pub(crate) fn render_pair(mono: &[f64], hrir: &HrirPair) -> (Vec<f64>, Vec<f64>) {
    let taps = hrir.left.len().max(hrir.right.len());
    let len = mono.len() + taps - 1;
    let mut left = convolve(mono, &hrir.left);
    let mut right = convolve(mono, &hrir.right);
    left.resize(len, 0.0);
    right.resize(len, 0.0);
    (left, right)
}

/// Interaural delay of a rigid spherical head, in seconds.
pub fn woodworth_itd(azimuth_deg: f64, head_radius_m: f64) -> f64 {
    let theta = azimuth_deg.abs().to_radians();
    head_radius_m / SPEED_OF_SOUND_M_S * (theta + theta.sin())
}

/// Deterministic spherical-head HRIR pair.
///
/// Negative azimuths place the source on the left. The ipsilateral ear gets
/// a unit impulse; the contralateral ear a delayed, attenuated and one-pole
/// low-passed impulse whose pole moves toward one as the source moves
/// sideways.
pub fn synth_hrir(azimuth_deg: f64, sample_rate: u32, head_radius_m: f64) -> Result<HrirPair> {
    if !(-MAX_AZIMUTH_DEG..=MAX_AZIMUTH_DEG).contains(&azimuth_deg) {
        return Err(Error::invalid(format!(
            "azimuth {azimuth_deg} outside [-{MAX_AZIMUTH_DEG}, {MAX_AZIMUTH_DEG}] degrees"
        )));
    }
    if sample_rate == 0 || !(head_radius_m > 0.0) {
        return Err(Error::invalid("sample rate and head radius must be positive"));
    }
    let delay = (woodworth_itd(azimuth_deg, head_radius_m) * f64::from(sample_rate)).round() as usize;
    let lateral = azimuth_deg.abs().to_radians().sin();
    let len = (delay + 48).max(64);

    let mut ipsi = vec![0.0; len];
    ipsi[0] = 1.0;

    let attenuation = 10f64.powf(-10.0 * lateral / 20.0);
    let pole = 0.35 * lateral;
    let mut contra = vec![0.0; len];
    let mut state = 0.0;
    for (n, tap) in contra.iter_mut().enumerate().skip(delay) {
        let x = if n == delay { attenuation } else { 0.0 };
        state = (1.0 - pole) * x + pole * state;
        *tap = state;
    }

    let (left, right) = if azimuth_deg < 0.0 {
        (ipsi, contra)
    } else if azimuth_deg > 0.0 {
        (contra, ipsi)
    } else {
        (ipsi.clone(), ipsi)
    };
    Ok(HrirPair {
        left,
        right,
        azimuth_deg,
        sample_rate,
    })
}

const HRIR_MAGIC: &str = "hrir v1";

fn hrir_channel_text(taps: &[f64], sample_rate: u32, azimuth_deg: f64) -> String {
    let mut s = format!("{HRIR_MAGIC} {sample_rate} {azimuth_deg}\n");
    for t in taps {
        s.push_str(&format!("{t:.17e}\n"));
    }
    s
}

/// Writes the two text files (`hrir v1 <rate> <azimuth>` header, one tap per line).
pub fn write_hrir_text(pair: &HrirPair, left: impl AsRef<Path>, right: impl AsRef<Path>) -> Result<()> {
    pair.validate()?;
    write_atomic(
        left,
        hrir_channel_text(&pair.left, pair.sample_rate, pair.azimuth_deg).as_bytes(),
    )?;
    write_atomic(
        right,
        hrir_channel_text(&pair.right, pair.sample_rate, pair.azimuth_deg).as_bytes(),
    )
}

fn read_hrir_channel(path: &Path) -> Result<(u32, f64, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty HRIR file"))?;
    let rest = header
        .strip_prefix(HRIR_MAGIC)
        .ok_or_else(|| Error::format(path, "missing 'hrir v1' header"))?;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(Error::format(path, "header must carry sample rate and azimuth"));
    }
    let rate: u32 = fields[0]
        .parse()
        .map_err(|_| Error::format(path, "bad sample rate"))?;
    let az: f64 = fields[1]
        .parse()
        .map_err(|_| Error::format(path, "bad azimuth"))?;
    let mut taps = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::format(path, format!("bad tap on line {}", n + 2)))?;
        if !v.is_finite() {
            return Err(Error::format(path, format!("non-finite tap on line {}", n + 2)));
        }
        taps.push(v);
    }
    if taps.is_empty() {
        return Err(Error::format(path, "no taps"));
    }
    Ok((rate, az, taps))
}

pub fn read_hrir_text(left: impl AsRef<Path>, right: impl AsRef<Path>) -> Result<HrirPair> {
    let (left, right) = (left.as_ref(), right.as_ref());
    let (rate_l, az_l, taps_l) = read_hrir_channel(left)?;
    let (rate_r, az_r, taps_r) = read_hrir_channel(right)?;
    if rate_l != rate_r || az_l != az_r {
        return Err(Error::format(
            right,
            "left and right headers disagree on sample rate or azimuth",
        ));
    }
    Ok(HrirPair {
        left: taps_l,
        right: taps_r,
        azimuth_deg: az_l,
        sample_rate: rate_l,
    })
}
