//! Classifier bundles and the hierarchical background decision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gmm::{classify, GmmModel, MajorityVoter};
use super::{BackgroundDecision, VadDecision};
use crate::audio_io::write_atomic;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const DEFAULT_VOTE_WINDOW: usize = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassEntry {
    label: String,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MusicEntry {
    music: String,
    noise: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    dim: usize,
    classes: Vec<ClassEntry>,
    #[serde(default)]
    music: Option<MusicEntry>,
}

/// Per-class noise GMMs plus an optional music/noise pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierBundle {
    pub dim: usize,
    pub noise_models: Vec<GmmModel>,
    /// (music, non-music) models.
    pub music: Option<(GmmModel, GmmModel)>,
}

fn safe_file_name(label: &str) -> String {
    let cleaned: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{cleaned}.json")
}

impl ClassifierBundle {
    pub fn new(noise_models: Vec<GmmModel>, music: Option<(GmmModel, GmmModel)>) -> Result<Self> {
        let Some(first) = noise_models.first() else {
            return Err(Error::Config("a bundle needs at least one noise class".into()));
        };
        let dim = first.dim;
        let all = noise_models
            .iter()
            .chain(music.iter().flat_map(|(a, b)| [a, b]));
        for m in all {
            m.validate()?;
            if m.dim != dim {
                return Err(Error::Config(format!(
                    "model '{}' has dimension {}, bundle uses {dim}",
                    m.label, m.dim
                )));
            }
        }
        Ok(Self {
            dim,
            noise_models,
            music,
        })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.noise_models.iter().map(|m| m.label.as_str()).collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut classes = Vec::new();
        for (idx, m) in self.noise_models.iter().enumerate() {
            let file = format!("class{idx}_{}", safe_file_name(&m.label));
            m.save(dir.join(&file))?;
            classes.push(ClassEntry {
                label: m.label.clone(),
                file,
            });
        }
        let music = match &self.music {
            Some((mu, no)) => {
                mu.save(dir.join("music.json"))?;
                no.save(dir.join("nonmusic.json"))?;
                Some(MusicEntry {
                    music: "music.json".into(),
                    noise: "nonmusic.json".into(),
                })
            }
            None => None,
        };
        let manifest = Manifest {
            version: 1,
            dim: self.dim,
            classes,
            music,
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::invalid(format!("cannot serialize manifest: {e}")))?;
        write_atomic(dir.join(MANIFEST), json.as_bytes())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        if manifest.version != 1 {
            return Err(Error::format(&path, format!("unsupported version {}", manifest.version)));
        }
        let noise_models = manifest
            .classes
            .iter()
            .map(|c| {
                let m = GmmModel::load(dir.join(&c.file))?;
                if m.label != c.label {
                    return Err(Error::format(
                        dir.join(&c.file),
                        format!("label '{}' does not match manifest '{}'", m.label, c.label),
                    ));
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        let music = match &manifest.music {
            Some(e) => Some((
                GmmModel::load(dir.join(&e.music))?,
                GmmModel::load(dir.join(&e.noise))?,
            )),
            None => None,
        };
        let bundle = Self::new(noise_models, music)?;
        if bundle.dim != manifest.dim {
            return Err(Error::format(&path, "manifest dimension disagrees with models"));
        }
        Ok(bundle)
    }
}

/// Stateful Voice/Quiet/Music/Noise(class) decision with majority voting.
#[derive(Debug, Clone)]
pub struct BackgroundDetector {
    bundle: ClassifierBundle,
    music_votes: MajorityVoter,
    class_votes: MajorityVoter,
}

impl BackgroundDetector {
    pub fn new(bundle: ClassifierBundle, vote_window: usize) -> Self {
        Self {
            bundle,
            music_votes: MajorityVoter::new(vote_window),
            class_votes: MajorityVoter::new(vote_window),
        }
    }

    pub fn bundle(&self) -> &ClassifierBundle {
        &self.bundle
    }

    /// Current voted noise class, if any noise frame has been seen.
    pub fn active_class(&self) -> Option<&str> {
        self.class_votes
            .last()
            .map(|i| self.bundle.noise_models[i].label.as_str())
    }

    pub fn decide(&mut self, vad: VadDecision, features: Option<&[f64]>) -> Result<BackgroundDecision> {
        match vad {
            VadDecision::Voice => return Ok(BackgroundDecision::Voice),
            VadDecision::Quiet => return Ok(BackgroundDecision::Quiet),
            VadDecision::Noise => {}
        }
        let x = features.ok_or_else(|| Error::invalid("noise frame without features"))?;
        if let Some((music, nonmusic)) = &self.bundle.music {
            let raw = classify(&[music.clone(), nonmusic.clone()], x)?;
            if self.music_votes.push(raw) == 0 {
                return Ok(BackgroundDecision::Music);
            }
        }
        let raw = classify(&self.bundle.noise_models, x)?;
        let voted = self.class_votes.push(raw);
        Ok(BackgroundDecision::Noise(
            self.bundle.noise_models[voted].label.clone(),
        ))
    }
}
