use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BenchError, Scale};
use crate::gridmap::{generate_dungeon, GroundTruthMap, Tier};
use crate::sac_trainer::{TrainConfig, TRAIN_SEED_LIMIT};

pub const MANIFEST_FORMAT: &str = "explore-testsets v1";
/// Default lowest test seed; everything below belongs to training.
pub const TEST_SEED_BASE: u64 = 1 << 40;

pub const SET_NAMES: [&str; 4] = ["easy", "medium", "complex", "random"];

/// What to generate.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSetSpec {
    pub master_seed: u64,
    pub scale: Scale,
    pub scenarios: usize,
    pub seed_base: u64,
}

impl TestSetSpec {
    pub fn new(master_seed: u64, scale: Scale) -> Self {
        Self {
            master_seed,
            scale,
            scenarios: 100,
            seed_base: TEST_SEED_BASE,
        }
    }

    /// Map seed of scenario `index` of set `set`.
    pub fn scenario_seed(&self, set: usize, index: usize) -> u64 {
        let mut h = Sha256::new();
        h.update(b"test-scenario");
        h.update(self.master_seed.to_le_bytes());
        h.update((set as u64).to_le_bytes());
        h.update((index as u64).to_le_bytes());
        let d = h.finalize();
        let v = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        self.seed_base.saturating_add(v % (1 << 40))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub id: usize,
    pub seed: u64,
    /// Map file relative to the manifest directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetEntry {
    pub name: String,
    pub tier: Tier,
    pub scenarios: Vec<ScenarioEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub scale: Scale,
    pub master_seed: u64,
    pub width: usize,
    pub height: usize,
    pub sets: Vec<SetEntry>,
}

impl Manifest {
    /// sha256 of the canonical manifest JSON (it pins every map file hash).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("manifest serializes"),
        ))
    }

    pub fn set(&self, name: &str) -> Result<&SetEntry, BenchError> {
        self.sets
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| BenchError::Validation(format!("no test set named {name:?}")))
    }
}

fn tier_of(name: &str) -> Tier {
    Tier::parse(name).expect("set names are tier names")
}

/// Generates the four test sets under `dir` (maps plus `manifest.json` and
/// `manifest.sha256`) and returns the manifest. Refuses seeds that fall in
/// the training range or coincide with `train`'s episode seeds.
pub fn gen_test_sets(
    spec: &TestSetSpec,
    dir: &Path,
    train: Option<&TrainConfig>,
) -> Result<Manifest, BenchError> {
    if spec.scenarios == 0 {
        return Err(BenchError::Validation(
            "a test set needs at least one scenario".into(),
        ));
    }
    let env = spec.scale.env_config();
    let mut seeds = Vec::new();
    for s in 0..SET_NAMES.len() {
        for i in 0..spec.scenarios {
            seeds.push((s, i, spec.scenario_seed(s, i)));
        }
    }
    check_seeds(seeds.iter().map(|s| s.2), train)?;

    let maps: Vec<Result<(usize, usize, u64, String), BenchError>> = seeds
        .par_iter()
        .map(|&(s, i, seed)| {
            let map = generate_dungeon(&crate::gridmap::MapGenConfig::new(
                seed,
                tier_of(SET_NAMES[s]),
                env.width,
                env.height,
            ))?;
            Ok((s, i, seed, map.to_grid_string()))
        })
        .collect();
    let mut sets: Vec<SetEntry> = SET_NAMES
        .iter()
        .map(|&name| SetEntry {
            name: name.into(),
            tier: tier_of(name),
            scenarios: Vec::new(),
        })
        .collect();
    for m in maps {
        let (s, i, seed, text) = m?;
        let file = format!("{}/{i:03}.grid", SET_NAMES[s]);
        let path = dir.join(&file);
        fs::create_dir_all(path.parent().expect("set directory"))?;
        fs::write(&path, &text)?;
        sets[s].scenarios.push(ScenarioEntry {
            id: i,
            seed,
            file,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        scale: spec.scale,
        master_seed: spec.master_seed,
        width: env.width,
        height: env.height,
        sets,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    fs::write(
        dir.join("manifest.sha256"),
        format!("{}\n", manifest.hash()),
    )?;
    Ok(manifest)
}

/// Refuses repeated seeds, seeds in the training range and seeds that some
/// episode of `train` would use.
fn check_seeds(
    seeds: impl Iterator<Item = u64>,
    train: Option<&TrainConfig>,
) -> Result<(), BenchError> {
    let mut unique = HashSet::new();
    for seed in seeds {
        if seed < TRAIN_SEED_LIMIT {
            return Err(BenchError::Validation(format!(
                "test seed {seed} lies in the training seed range [0, {TRAIN_SEED_LIMIT})"
            )));
        }
        if !unique.insert(seed) {
            return Err(BenchError::Validation(format!(
                "repeated scenario seed {seed}"
            )));
        }
    }
    if let Some(t) = train {
        if let Some(hit) = (0..t.episodes as u64)
            .map(|e| t.episode_seed(e))
            .find(|s| unique.contains(s))
        {
            return Err(BenchError::Validation(format!(
                "test seed {hit} is also a training seed"
            )));
        }
    }
    Ok(())
}

/// A manifest read back from disk with its directory.
#[derive(Clone, Debug)]
pub struct TestSets {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl TestSets {
    pub fn open(dir: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| BenchError::Validation(format!("manifest: {e}")))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(BenchError::Validation(format!(
                "unsupported manifest format {:?}",
                manifest.format
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    /// Loads a scenario map, verifying its hash against the manifest.
    pub fn load_map(&self, entry: &ScenarioEntry) -> Result<Arc<GroundTruthMap>, BenchError> {
        let text = fs::read_to_string(self.dir.join(&entry.file))?;
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        if digest != entry.sha256 {
            return Err(BenchError::Validation(format!(
                "{} does not match its manifest hash",
                entry.file
            )));
        }
        Ok(Arc::new(GroundTruthMap::from_grid_str(&text)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::{count_rooms, MapGenConfig};

    fn tiny(seed: u64) -> TestSetSpec {
        TestSetSpec {
            scenarios: 3,
            ..TestSetSpec::new(seed, Scale::Desk)
        }
    }

    #[test]
    fn same_master_seed_gives_same_manifest_hash() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = gen_test_sets(&tiny(5), a.path(), None).unwrap();
        let mb = gen_test_sets(&tiny(5), b.path(), None).unwrap();
        assert_eq!(ma.hash(), mb.hash());
        assert_eq!(
            fs::read(a.path().join("manifest.json")).unwrap(),
            fs::read(b.path().join("manifest.json")).unwrap()
        );
        let c = tempfile::tempdir().unwrap();
        assert_ne!(
            gen_test_sets(&tiny(6), c.path(), None).unwrap().hash(),
            ma.hash()
        );

        let opened = TestSets::open(a.path()).unwrap();
        assert_eq!(opened.manifest, ma);
        let e = &opened.manifest.set("medium").unwrap().scenarios[1];
        assert!(opened.load_map(e).is_ok());
        fs::write(a.path().join(&e.file), "ARIADNE-GRID v1 1 1 0 0\n.\n").unwrap();
        assert!(matches!(opened.load_map(e), Err(BenchError::Validation(_))));
    }

    #[test]
    fn seeds_are_disjoint_from_training() {
        let spec = TestSetSpec::new(1, Scale::Desk);
        let mut all = HashSet::new();
        for s in 0..4 {
            for i in 0..100 {
                let seed = spec.scenario_seed(s, i);
                assert!(seed >= TRAIN_SEED_LIMIT);
                assert!(all.insert(seed));
            }
        }
        let big = TRAIN_SEED_LIMIT;
        assert!(check_seeds([big, big + 1].into_iter(), None).is_ok());
        assert!(matches!(
            check_seeds([big, 7].into_iter(), None),
            Err(BenchError::Validation(_))
        ));
        assert!(check_seeds([big, big].into_iter(), None).is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(gen_test_sets(&tiny(1), dir.path(), Some(&TrainConfig::desk())).is_ok());
    }

    #[test]
    fn easy_set_is_single_room_and_sets_have_all_scenarios() {
        let spec = TestSetSpec::new(2, Scale::Desk);
        let env = Scale::Desk.env_config();
        for i in 0..spec.scenarios {
            let seed = spec.scenario_seed(0, i);
            let map = generate_dungeon(&MapGenConfig::new(seed, Tier::Easy, env.width, env.height))
                .unwrap();
            assert_eq!(count_rooms(&map), Some(1), "scenario {i}");
        }
        let dir = tempfile::tempdir().unwrap();
        let m = gen_test_sets(&tiny(2), dir.path(), None).unwrap();
        assert_eq!(
            m.sets.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(),
            SET_NAMES
        );
        assert!(m.sets.iter().all(|s| s.scenarios.len() == 3));
        assert_eq!(TestSetSpec::new(0, Scale::Desk).scenarios, 100);
    }
}
