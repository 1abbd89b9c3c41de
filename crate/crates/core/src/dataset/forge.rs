use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    apply_reverb, enumerate_mixtures, mix_stems, pitch_shift_stem, split_dataset, DatasetManifest, ManifestEntry,
    Mixed, MixtureRecipe, Reverb, SplitRatios, Stem, StemSet, Split, DEFAULT_PARTS,
};
use crate::annotation::{merge_tracks, F0Track, MultiF0Annotation};
use crate::audio::{load_audio, write_wav, Audio};
use crate::error::{Error, Result};
use crate::grid::HcqtParams;

/// An impulse response and the tag recorded for mixtures convolved with it.
#[derive(Debug, Clone)]
pub struct ReverbSource {
    pub id: String,
    pub ir: Audio,
}

#[derive(Debug, Clone)]
pub struct ForgeConfig {
    pub params: HcqtParams,
    pub parts: Vec<String>,
    /// Semitone shifts to render; 0 is the unshifted original.
    pub shifts: Vec<i32>,
    /// Each source adds one reverberant copy of every dry mixture.
    pub reverbs: Vec<ReverbSource>,
    /// Caps the singer combinations per song; a seeded subset is kept when exceeded.
    pub max_mixtures_per_song: Option<usize>,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            params: HcqtParams::default(),
            parts: DEFAULT_PARTS.iter().map(|s| s.to_string()).collect(),
            shifts: vec![0],
            reverbs: Vec::new(),
            max_mixtures_per_song: None,
            ratios: SplitRatios::default(),
            seed: 0,
        }
    }
}

/// Scans `<dataset>/<song_id>/<part>_<singer>.wav`, pairing each WAV with the sibling `.csv`.
/// Files whose part is not in `parts` are ignored.
pub fn discover_stems(dataset: &Path, parts: &[String]) -> Result<Vec<StemSet>> {
    let mut songs = Vec::new();
    let mut dirs: Vec<PathBuf> = fs::read_dir(dataset)
        .map_err(|e| Error::io(dataset, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let song_id = dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut set = StemSet::new(song_id.clone());
        set.required_parts = parts.to_vec();
        let mut wavs: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        wavs.sort();
        for wav in wavs {
            let stem_name = wav.file_stem().unwrap().to_string_lossy().into_owned();
            let Some((part, singer)) = stem_name.split_once('_') else {
                log::warn!("{}: expected <part>_<singer>.wav, skipping", wav.display());
                continue;
            };
            if !parts.iter().any(|p| p == part) {
                log::warn!("{}: part '{part}' is not configured, skipping", wav.display());
                continue;
            }
            let annotation = wav.with_extension("csv");
            if !annotation.exists() {
                return Err(Error::Dataset(format!("stem {} has no annotation {}", wav.display(), annotation.display())));
            }
            set.add(
                part,
                Stem {
                    audio: wav.clone(),
                    annotation,
                    singer: singer.to_string(),
                },
            );
        }
        songs.push(set);
    }
    Ok(songs)
}

type StemCache = HashMap<(PathBuf, i32), (Audio, F0Track)>;

fn shifted_stem(cache: &mut StemCache, stem: &Stem, shift: i32, params: &HcqtParams) -> Result<(Audio, F0Track)> {
    let key = (stem.audio.clone(), shift);
    if let Some(hit) = cache.get(&key) {
        return Ok(hit.clone());
    }
    let audio = load_audio(&stem.audio, params.sample_rate)?;
    let track = F0Track::read(&stem.annotation)?;
    let out = pitch_shift_stem(&audio, &track, shift)?;
    cache.insert(key, out.clone());
    Ok(out)
}

fn render_with_cache(recipe: &MixtureRecipe, params: &HcqtParams, cache: &mut StemCache) -> Result<(Mixed, MultiF0Annotation)> {
    let mut audios = Vec::with_capacity(recipe.stems.len());
    let mut tracks = Vec::with_capacity(recipe.stems.len());
    for (_, stem) in &recipe.stems {
        let (a, t) = shifted_stem(cache, stem, recipe.pitch_shift, params)?;
        audios.push(a);
        tracks.push(t);
    }
    let mixed = mix_stems(&audios, None)?;
    let times = params.frame_times(params.n_frames(mixed.audio.samples.len()));
    let ann = merge_tracks(&tracks, &times);
    Ok((mixed, ann))
}

/// Loads, shifts and mixes the stems of a dry recipe; the annotation is on the frame grid of
/// the mixture.
pub fn render_recipe(recipe: &MixtureRecipe, params: &HcqtParams) -> Result<(Mixed, MultiF0Annotation)> {
    render_with_cache(recipe, params, &mut HashMap::new())
}

/// Renders every mixture of every song under each dataset directory into `out_dir` and writes
/// `out_dir/manifest.jsonl`. The corpus name of an entry is its dataset directory name.
pub fn forge(datasets: &[PathBuf], out_dir: &Path, cfg: &ForgeConfig) -> Result<DatasetManifest> {
    let params = &cfg.params;
    params.validate()?;
    let mut entries = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for dataset in datasets {
        let corpus = dataset
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into());
        for set in discover_stems(dataset, &cfg.parts)? {
            let mut recipes = enumerate_mixtures(&set)?;
            if let Some(max) = cfg.max_mixtures_per_song {
                if recipes.len() > max {
                    recipes.shuffle(&mut rng);
                    recipes.truncate(max);
                }
            }
            let mut cache = StemCache::new();
            for base in &recipes {
                for &shift in &cfg.shifts {
                    let recipe = MixtureRecipe {
                        pitch_shift: shift,
                        ..base.clone()
                    };
                    let (mixed, ann) = render_with_cache(&recipe, params, &mut cache)?;
                    let name = recipe.name();
                    let audio_rel = PathBuf::from("audio").join(&corpus).join(format!("{name}.wav"));
                    let ann_rel = PathBuf::from("annotations").join(&corpus).join(format!("{name}.txt"));
                    write_wav(out_dir.join(&audio_rel), &mixed.audio)?;
                    ann.write(out_dir.join(&ann_rel))?;
                    let entry = ManifestEntry {
                        audio_path: audio_rel,
                        annotation_path: ann_rel.clone(),
                        song_id: set.song_id.clone(),
                        shift,
                        reverb: Reverb::None.tag().to_string(),
                        split: Split::Train,
                        corpus: corpus.clone(),
                        gain: mixed.gain,
                    };
                    for rev in &cfg.reverbs {
                        let wet = apply_reverb(&mixed.audio, &rev.ir)?;
                        let wet_recipe = MixtureRecipe {
                            reverb: Reverb::Ir(rev.id.clone()),
                            ..recipe.clone()
                        };
                        let wet_rel = PathBuf::from("audio").join(&corpus).join(format!("{}.wav", wet_recipe.name()));
                        write_wav(out_dir.join(&wet_rel), &wet.audio)?;
                        entries.push(ManifestEntry {
                            audio_path: wet_rel,
                            reverb: rev.id.clone(),
                            gain: mixed.gain * wet.gain,
                            ..entry.clone()
                        });
                    }
                    entries.push(entry);
                }
            }
            log::info!("{corpus}/{}: {} mixtures", set.song_id, recipes.len() * cfg.shifts.len() * (1 + cfg.reverbs.len()));
        }
    }
    if entries.is_empty() {
        return Err(Error::Dataset("no mixtures were rendered".into()));
    }
    let manifest = split_dataset(entries, cfg.ratios, cfg.seed)?;
    manifest.write(out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
