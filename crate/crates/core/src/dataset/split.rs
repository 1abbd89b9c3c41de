use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};

/// Target fractions of files per split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.75,
            validation: 0.10,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    fn validate(&self) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|&x| !(x >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::Dataset(format!("split ratios {r:?} must be non-negative and sum to 1")));
        }
        Ok(())
    }
}

/// Assigns whole songs to splits so that file counts approach the target ratios.
///
/// Songs are visited largest first (ties in seeded random order) and each goes to the split
/// furthest below its target count. A split with a non-zero ratio always receives at least one
/// song.
pub fn split_dataset(mut entries: Vec<ManifestEntry>, ratios: SplitRatios, seed: u64) -> Result<DatasetManifest> {
    ratios.validate()?;
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        *sizes.entry(e.song_id.as_str()).or_default() += 1;
    }
    let r = ratios.as_array();
    let active: Vec<usize> = (0..3).filter(|&i| r[i] > 0.0).collect();
    if sizes.len() < active.len() {
        return Err(Error::Dataset(format!(
            "{} distinct songs cannot fill {} splits",
            sizes.len(),
            active.len()
        )));
    }
    let mut songs: Vec<(&str, usize)> = sizes.into_iter().collect();
    songs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    songs.sort_by(|a, b| b.1.cmp(&a.1));

    let total = entries.len() as f64;
    let mut filled = [0usize; 3];
    let mut song_count = [0usize; 3];
    let mut assignment: BTreeMap<String, Split> = BTreeMap::new();
    for (k, &(song, n)) in songs.iter().enumerate() {
        let remaining = songs.len() - k;
        let empty: Vec<usize> = active.iter().copied().filter(|&i| song_count[i] == 0).collect();
        let candidates = if remaining <= empty.len() { empty } else { active.clone() };
        let best = candidates
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let da = r[a] * total - filled[a] as f64;
                let db = r[b] * total - filled[b] as f64;
                da.partial_cmp(&db).unwrap().then(b.cmp(&a))
            })
            .expect("at least one active split");
        filled[best] += n;
        song_count[best] += 1;
        assignment.insert(song.to_string(), Split::ALL[best]);
    }
    for e in &mut entries {
        e.split = assignment[&e.song_id];
    }
    Ok(DatasetManifest::new(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entries(songs: usize, per_song: usize) -> Vec<ManifestEntry> {
        (0..songs * per_song)
            .map(|i| ManifestEntry {
                audio_path: format!("{i}.wav").into(),
                annotation_path: format!("{i}.txt").into(),
                song_id: format!("song{}", i / per_song),
                shift: 0,
                reverb: "none".into(),
                split: Split::Train,
                corpus: "x".into(),
                gain: 1.0,
            })
            .collect()
    }

    fn counts(m: &DatasetManifest) -> [usize; 3] {
        let mut c = [0; 3];
        for e in &m.entries {
            c[e.split.index()] += 1;
        }
        c
    }

    #[test]
    fn deterministic_for_seed() {
        let a = split_dataset(entries(20, 5), SplitRatios::default(), 7).unwrap();
        let b = split_dataset(entries(20, 5), SplitRatios::default(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(counts(&a), [75, 10, 15]);
    }

    #[test]
    fn everything_to_train() {
        let r = SplitRatios {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
        };
        let m = split_dataset(entries(3, 4), r, 1).unwrap();
        assert_eq!(counts(&m), [12, 0, 0]);
    }

    #[test]
    fn large_corpus_file_counts() {
        let m = split_dataset(entries(22910, 1), SplitRatios::default(), 0).unwrap();
        let c = counts(&m);
        assert_eq!(c.iter().sum::<usize>(), 22910);
        for (got, want) in c.iter().zip([17184.0, 2291.0, 3435.0]) {
            assert!((*got as f64 - want).abs() <= 2.0, "{c:?}");
        }
    }

    #[test]
    fn too_few_songs() {
        assert!(split_dataset(entries(2, 10), SplitRatios::default(), 0).is_err());
        let bad = SplitRatios {
            train: 0.5,
            validation: 0.1,
            test: 0.1,
        };
        assert!(split_dataset(entries(10, 1), bad, 0).is_err());
    }

    proptest! {
        #[test]
        fn songs_never_cross_splits(songs in 3usize..40, per in 1usize..12, seed in any::<u64>()) {
            let m = split_dataset(entries(songs, per), SplitRatios::default(), seed).unwrap();
            let by = m.songs_by_split();
            let sets: Vec<_> = by.values().collect();
            for i in 0..sets.len() {
                for j in i + 1..sets.len() {
                    prop_assert!(sets[i].is_disjoint(sets[j]));
                }
            }
            prop_assert_eq!(by.len(), 3);
        }

        #[test]
        fn fractions_within_five_percent(songs in 20usize..60, seed in any::<u64>()) {
            let m = split_dataset(entries(songs, 8), SplitRatios::default(), seed).unwrap();
            let c = counts(&m);
            let n = m.len() as f64;
            for (got, want) in c.iter().zip(SplitRatios::default().as_array()) {
                prop_assert!((*got as f64 / n - want).abs() <= 0.05, "{:?}", c);
            }
        }
    }
}
