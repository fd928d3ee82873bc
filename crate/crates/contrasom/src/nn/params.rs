//! Named parameter storage, seeded initialization, checkpoint IO and
//! checksumming for frozen-backbone assertions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::tape::{Tape, TensorId};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported checkpoint version {found}; supported {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("parameter blob {path} has {found} bytes, expected {expected}")]
    BlobSize {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
}

/// Ordered name -> tensor map. The ordering makes parameter iteration (and
/// therefore optimizer updates and checksums) deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: BTreeMap<String, ArrayD<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<f64>) {
        self.params.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.params.values().map(|v| v.len()).sum()
    }

    /// Merges another store under a name prefix.
    pub fn absorb(&mut self, prefix: &str, other: ParamStore) {
        for (name, value) in other.params {
            self.params.insert(format!("{prefix}.{name}"), value);
        }
    }

    /// Fan-in scaled uniform init, the usual choice for small relu/tanh nets.
    pub fn init_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut impl Rng) {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let value = ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-bound..bound));
        self.insert(name, value);
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, ArrayD::zeros(IxDyn(shape)));
    }

    /// SHA-256 over names and little-endian f64 bytes, in name order.
    pub fn checksum(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for (name, value) in &self.params {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            for v in value.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().into()
    }

    pub fn checksum_hex(&self) -> String {
        self.checksum().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Tape leaves for every parameter, so gradients can be pulled out by name.
pub struct TapeVars {
    ids: BTreeMap<String, TensorId>,
}

impl TapeVars {
    pub fn watch(tape: &mut Tape, store: &ParamStore) -> Self {
        let mut ids = BTreeMap::new();
        for (name, value) in store.iter() {
            ids.insert(name.clone(), tape.leaf(value.clone()));
        }
        Self { ids }
    }

    pub fn id(&self, name: &str) -> TensorId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn grads(
        &self,
        grads: &super::tape::Gradients,
        store: &ParamStore,
    ) -> BTreeMap<String, ArrayD<f64>> {
        let mut out = BTreeMap::new();
        for (name, id) in &self.ids {
            let g = grads
                .wrt(*id)
                .cloned()
                .unwrap_or_else(|| ArrayD::zeros(store.get(name).raw_dim()));
            out.insert(name.clone(), g);
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    format_version: u32,
    step: u64,
    config_hash: String,
    params: Vec<ParamEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `manifest.json` plus one raw little-endian float32 blob per named
/// parameter into `dir`.
pub fn save_checkpoint(
    store: &ParamStore,
    dir: &Path,
    step: u64,
    config_hash: &str,
) -> Result<(), CheckpointError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        step,
        config_hash: config_hash.to_string(),
        params: store
            .iter()
            .map(|(name, value)| ParamEntry {
                name: name.clone(),
                shape: value.shape().to_vec(),
            })
            .collect(),
    };
    let manifest_path = dir.join("manifest.json");
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(|source| CheckpointError::Json {
        path: manifest_path.clone(),
        source,
    })?;
    std::fs::write(&manifest_path, bytes).map_err(io_err(&manifest_path))?;
    for (name, value) in store.iter() {
        let mut blob = Vec::with_capacity(value.len() * 4);
        for v in value.iter() {
            blob.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let path = dir.join(format!("{name}.f32"));
        std::fs::write(&path, blob).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Loads a checkpoint directory. Returns the store, the training step and
/// the recorded config hash.
pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore, u64, String), CheckpointError> {
    let manifest_path = dir.join("manifest.json");
    let bytes = std::fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: CheckpointManifest =
        serde_json::from_slice(&bytes).map_err(|source| CheckpointError::Json {
            path: manifest_path.clone(),
            source,
        })?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: manifest.format_version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let mut store = ParamStore::new();
    for entry in &manifest.params {
        let path = dir.join(format!("{}.f32", entry.name));
        let blob = std::fs::read(&path).map_err(io_err(&path))?;
        let expected: usize = entry.shape.iter().product::<usize>() * 4;
        if blob.len() != expected {
            return Err(CheckpointError::BlobSize {
                path,
                expected,
                found: blob.len(),
            });
        }
        let values: Vec<f64> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), values).expect("shape matches blob");
        store.insert(&entry.name, arr);
    }
    Ok((store, manifest.step, manifest.config_hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        store.init_uniform("enc.w1", &[4, 3], 3, &mut rng);
        store.init_zeros("enc.b1", &[4]);
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&store, dir.path(), 17, "abc").unwrap();
        let (back, step, hash) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(step, 17);
        assert_eq!(hash, "abc");
        assert_eq!(back.len(), store.len());
        // f32 round trip: loaded values equal the f32-truncated originals.
        for (name, value) in store.iter() {
            let b = back.get(name);
            for (x, y) in value.iter().zip(b.iter()) {
                assert_eq!(*x as f32, *y as f32);
                assert_eq!(*y, *y as f32 as f64);
            }
        }
    }

    #[test]
    fn checksum_detects_mutation() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        store.init_uniform("w", &[3, 3], 3, &mut rng);
        let before = store.checksum_hex();
        assert_eq!(before, store.checksum_hex());
        store.get_mut("w")[[0, 0]] += 1e-12;
        assert_ne!(before, store.checksum_hex());
    }

    #[test]
    fn version_mismatch_detected() {
        let store = ParamStore::new();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&store, dir.path(), 0, "h").unwrap();
        let p = dir.path().join("manifest.json");
        let text = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, text.replace("\"format_version\": 1", "\"format_version\": 9")).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(CheckpointError::VersionMismatch { .. })
        ));
    }
}
