//! Subband-power-difference VAD with an added quiet class.

use std::collections::VecDeque;

use super::VadDecision;
use crate::error::Result;
use crate::spectral::subband_split;

pub const DEFAULT_BUFFER: usize = 32;
pub const DEFAULT_ALPHA_V: f64 = 0.975;
pub const DEFAULT_KQ: f64 = 0.01;
pub const JUMP_THRESHOLD: f64 = 0.008;
const JUMP_SPAN: usize = 4;
const SMOOTHING: f64 = 0.9;

/// |Σ low² − Σ high²|.
pub fn spd(low: &[f64], high: &[f64]) -> f64 {
    let el: f64 = low.iter().map(|v| v * v).sum();
    let eh: f64 = high.iter().map(|v| v * v).sum();
    (el - eh).abs()
}

/// Power-weighted SPD.
pub fn weighted_spd(spd: f64, frame_power: f64) -> f64 {
    spd * (0.5 + (16.0 / std::f64::consts::LN_2) * (1.0 + 2.0 * frame_power).ln())
}

/// Compressed statistic tanh(Dw) (before temporal smoothing).
pub fn weight_compress(spd: f64, frame_power: f64) -> f64 {
    weighted_spd(spd, frame_power).tanh()
}

/// First qualifying sorted value: smallest b ≥ 4 with Dcs(b) − Dcs(b−4) above the jump threshold.
pub fn threshold_candidate(buffer: &[f64]) -> Option<f64> {
    let mut sorted = buffer.to_vec();
    sorted.sort_by(f64::total_cmp);
    (JUMP_SPAN..sorted.len())
        .find(|&b| sorted[b] - sorted[b - JUMP_SPAN] > JUMP_THRESHOLD)
        .map(|b| sorted[b])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadConfig {
    pub buffer: usize,
    pub alpha_v: f64,
    pub k_q: f64,
    /// Consecutive raw-Quiet frames before Quiet is emitted.
    pub quiet_entry: usize,
    /// Consecutive non-voice frames before leaving Voice.
    pub noise_entry: usize,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            buffer: DEFAULT_BUFFER,
            alpha_v: DEFAULT_ALPHA_V,
            k_q: DEFAULT_KQ,
            quiet_entry: 10,
            noise_entry: 3,
        }
    }
}

/// Per-frame VAD output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadFrame {
    pub raw: VadDecision,
    pub decision: VadDecision,
    pub dc: f64,
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadState {
    pub config: VadConfig,
    tv: f64,
    dc_prev: f64,
    buffer: VecDeque<f64>,
    frames: usize,
    current: VadDecision,
    quiet_run: usize,
    nonvoice_run: usize,
}

impl Default for VadState {
    fn default() -> Self {
        Self::new(VadConfig::default())
    }
}

impl VadState {
    pub fn new(config: VadConfig) -> Self {
        Self {
            config,
            tv: 0.0,
            dc_prev: 0.0,
            buffer: VecDeque::with_capacity(config.buffer),
            frames: 0,
            current: VadDecision::Noise,
            quiet_run: 0,
            nonvoice_run: 0,
        }
    }

    pub fn with_kq(k_q: f64) -> Self {
        Self::new(VadConfig {
            k_q: k_q.clamp(0.0, 1.0),
            ..VadConfig::default()
        })
    }

    pub fn threshold(&self) -> f64 {
        self.tv
    }

    pub fn warmed_up(&self) -> bool {
        self.frames >= self.config.buffer
    }

    /// Pushes a smoothed Dc value and adapts Tv. At the end of warm-up the
    /// threshold starts at the first candidate, or just above the buffer
    /// maximum when the buffer shows no jump.
    pub fn update_threshold(&mut self, dc: f64) -> f64 {
        if self.buffer.len() == self.config.buffer {
            self.buffer.pop_front();
        }
        self.buffer.push_back(dc);
        self.frames += 1;
        let buf = self.buffer.make_contiguous();
        let candidate = threshold_candidate(buf);
        if self.frames == self.config.buffer {
            self.tv = candidate.unwrap_or_else(|| {
                buf.iter().copied().fold(0.0, f64::max) + JUMP_THRESHOLD
            });
        } else if self.frames > self.config.buffer {
            if let Some(c) = candidate {
                self.tv = self.config.alpha_v * self.tv + (1.0 - self.config.alpha_v) * c;
            }
        }
        self.tv
    }

    /// Three-way threshold rule on a smoothed Dc.
    pub fn raw_decision(&self, dc: f64) -> VadDecision {
        if dc >= self.tv {
            VadDecision::Voice
        } else if dc >= self.config.k_q * self.tv {
            VadDecision::Noise
        } else {
            VadDecision::Quiet
        }
    }

    /// Applies the hangover rules to a raw label.
    pub fn hangover(&mut self, raw: VadDecision) -> VadDecision {
        match raw {
            VadDecision::Voice => {
                self.quiet_run = 0;
                self.nonvoice_run = 0;
                self.current = VadDecision::Voice;
            }
            VadDecision::Quiet | VadDecision::Noise => {
                if raw == VadDecision::Quiet {
                    self.quiet_run += 1;
                } else {
                    self.quiet_run = 0;
                }
                self.nonvoice_run += 1;
                self.current = if self.quiet_run >= self.config.quiet_entry {
                    VadDecision::Quiet
                } else if self.current == VadDecision::Voice
                    && self.nonvoice_run < self.config.noise_entry
                {
                    VadDecision::Voice
                } else {
                    VadDecision::Noise
                };
            }
        }
        self.current
    }

    /// Runs one time-domain frame through the detector.
    pub fn process(&mut self, frame: &[f64]) -> Result<VadFrame> {
        let (low, high) = subband_split(frame)?;
        let power: f64 = frame.iter().map(|v| v * v).sum();
        let dc_raw = weight_compress(spd(&low, &high), power);
        let dc = if self.frames == 0 {
            dc_raw
        } else {
            SMOOTHING * self.dc_prev + (1.0 - SMOOTHING) * dc_raw
        };
        self.dc_prev = dc;
        let tv = self.update_threshold(dc);
        if self.frames <= self.config.buffer {
            return Ok(VadFrame {
                raw: VadDecision::Noise,
                decision: VadDecision::Noise,
                dc,
                tv,
            });
        }
        let raw = self.raw_decision(dc);
        let decision = self.hangover(raw);
        Ok(VadFrame {
            raw,
            decision,
            dc,
            tv,
        })
    }
}
