//! The detection path: VAD with quiet detection, MFCC features, GMM noise
//! and music classification, and the hierarchical background decision.

pub mod detector;
pub mod gmm;
pub mod mfcc;
pub mod vad;

pub use detector::{BackgroundDetector, ClassifierBundle};
pub use gmm::{classify, gmm_train, majority_vote, GmmModel, MajorityVoter};
pub use mfcc::{delta_mfcc, fuse_features, mfcc, FeatureExtractor, MfccFilterbank};
pub use vad::{spd, weight_compress, VadConfig, VadState};

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VadDecision {
    Voice,
    Noise,
    Quiet,
}

impl VadDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            VadDecision::Voice => "voice",
            VadDecision::Noise => "noise",
            VadDecision::Quiet => "quiet",
        }
    }
}

impl fmt::Display for VadDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Voice wins over everything; Quiet only when both ears agree.
pub fn combine_vad(left: VadDecision, right: VadDecision) -> VadDecision {
    use VadDecision::*;
    match (left, right) {
        (Voice, _) | (_, Voice) => Voice,
        (Quiet, Quiet) => Quiet,
        _ => Noise,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BackgroundDecision {
    Voice,
    Quiet,
    Music,
    Noise(String),
}

impl BackgroundDecision {
    pub fn kind(&self) -> &'static str {
        match self {
            BackgroundDecision::Voice => "voice",
            BackgroundDecision::Quiet => "quiet",
            BackgroundDecision::Music => "music",
            BackgroundDecision::Noise(_) => "noise",
        }
    }

    /// Quiet and music frames skip suppression.
    pub fn bypasses_suppression(&self) -> bool {
        matches!(self, BackgroundDecision::Quiet | BackgroundDecision::Music)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use VadDecision::*;

    #[test]
    fn combination_table() {
        assert_eq!(combine_vad(Voice, Noise), Voice);
        assert_eq!(combine_vad(Quiet, Voice), Voice);
        assert_eq!(combine_vad(Quiet, Quiet), Quiet);
        assert_eq!(combine_vad(Quiet, Noise), Noise);
        assert_eq!(combine_vad(Noise, Noise), Noise);
    }
}
