//! Building quartet corpora from single-singer stems: mixture enumeration, augmentation,
//! manifests and splits, plus a synthetic quartet renderer.

mod forge;
mod mix;
mod shift;
mod split;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::write_text;
use crate::error::{Error, Result};

pub use forge::{discover_stems, forge, render_recipe, ForgeConfig, ReverbSource};
pub use mix::{apply_reverb, mix_stems, synthetic_ir, Mixed};
pub use shift::{pitch_shift_audio, pitch_shift_stem, MAX_SHIFT_SEMITONES};
pub use split::{split_dataset, SplitRatios};
pub use synth::{
    random_quartet_spec, synth_quartet, write_quartet, write_stem_dataset, Note, QuartetSpec, VoiceSpec, SATB_RANGES,
};

/// Part names used when none are configured.
pub const DEFAULT_PARTS: [&str; 4] = ["S", "A", "T", "B"];

/// One recorded singer: audio and its F0 track.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Stem {
    pub audio: PathBuf,
    pub annotation: PathBuf,
    pub singer: String,
}

/// All stems available for one song, grouped by part.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StemSet {
    pub song_id: String,
    pub parts: BTreeMap<String, Vec<Stem>>,
    pub take_id: Option<String>,
    /// Part names every mixture must cover, in mixing order.
    pub required_parts: Vec<String>,
}

impl StemSet {
    pub fn new(song_id: impl Into<String>) -> Self {
        Self {
            song_id: song_id.into(),
            required_parts: DEFAULT_PARTS.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn add(&mut self, part: &str, stem: Stem) {
        self.parts.entry(part.to_string()).or_default().push(stem);
    }
}

/// Reverb tag of a mixture.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reverb {
    None,
    Ir(String),
}

impl Reverb {
    pub fn is_none(&self) -> bool {
        matches!(self, Reverb::None)
    }

    pub fn tag(&self) -> &str {
        match self {
            Reverb::None => "none",
            Reverb::Ir(id) => id,
        }
    }

    pub fn from_tag(tag: &str) -> Self {
        if tag == "none" {
            Reverb::None
        } else {
            Reverb::Ir(tag.to_string())
        }
    }
}

/// One quartet to render: one stem per part plus augmentation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureRecipe {
    pub song_id: String,
    pub stems: Vec<(String, Stem)>,
    pub pitch_shift: i32,
    pub reverb: Reverb,
}

impl MixtureRecipe {
    /// File stem for the rendered mixture, unique within a song.
    pub fn name(&self) -> String {
        let singers: Vec<String> = self
            .stems
            .iter()
            .map(|(p, s)| format!("{p}{}", s.singer))
            .collect();
        let mut name = format!("{}_{}_shift{:+}", self.song_id, singers.join("-"), self.pitch_shift);
        if let Reverb::Ir(id) = &self.reverb {
            name.push_str("_rev-");
            name.push_str(id);
        }
        name
    }
}

/// Every combination of one singer per required part, without augmentation.
pub fn enumerate_mixtures(stems: &StemSet) -> Result<Vec<MixtureRecipe>> {
    let mut choices: Vec<(&str, &[Stem])> = Vec::new();
    for part in &stems.required_parts {
        match stems.parts.get(part) {
            Some(list) if !list.is_empty() => choices.push((part, list)),
            _ => {
                return Err(Error::MissingPart {
                    song: stems.song_id.clone(),
                    part: part.clone(),
                })
            }
        }
    }
    let mut combos: Vec<Vec<(String, Stem)>> = vec![Vec::new()];
    for (part, list) in choices {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                list.iter().map(move |stem| {
                    let mut next = prefix.clone();
                    next.push((part.to_string(), stem.clone()));
                    next
                })
            })
            .collect();
    }
    Ok(combos
        .into_iter()
        .map(|stems_for_parts| MixtureRecipe {
            song_id: stems.song_id.clone(),
            stems: stems_for_parts,
            pitch_shift: 0,
            reverb: Reverb::None,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

/// One manifest line. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio_path: PathBuf,
    pub annotation_path: PathBuf,
    pub song_id: String,
    pub shift: i32,
    pub reverb: String,
    pub split: Split,
    #[serde(default)]
    pub corpus: String,
    /// Normalization factor applied when the mixture was rendered.
    #[serde(default = "unit_gain")]
    pub gain: f32,
}

fn unit_gain() -> f32 {
    1.0
}

impl ManifestEntry {
    pub fn has_reverb(&self) -> bool {
        self.reverb != "none"
    }
}

/// Line-delimited JSON list of rendered mixtures.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Relative paths are resolved against the manifest's directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut e: ManifestEntry = serde_json::from_str(line).map_err(|err| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: err.to_string(),
            })?;
            if e.audio_path.is_relative() {
                e.audio_path = base.join(&e.audio_path);
            }
            if e.annotation_path.is_relative() {
                e.annotation_path = base.join(&e.annotation_path);
            }
            entries.push(e);
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_jsonl()?)
    }

    /// Songs per split; used to verify that no song crosses splits.
    pub fn songs_by_split(&self) -> BTreeMap<Split, std::collections::BTreeSet<String>> {
        let mut map: BTreeMap<Split, std::collections::BTreeSet<String>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.split).or_default().insert(e.song_id.clone());
        }
        map
    }
}
