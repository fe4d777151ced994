//! Labelled dataset generation for the association surrogate.
//!
//! Features are channel-only: the direct gain under a direct-pointed beam,
//! and for every (tile, user) pair the reflected amplitude the pair would
//! achieve if that tile alone served that user, with phases aligned and the
//! beam matched to the pair's composite channel (the two are alternated to
//! a fixed point). Labels are the converged solver association, encoded as
//! per-tile integer codes.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alternating::alternate;
use crate::channel::{draw_channels, subseed, ChannelSet};
use crate::error::{Error, Result};
use crate::rates::{exclusive_pair_gains, LinkGains};
use crate::scenario::ValidatedScenario;
use crate::surrogate::encoding::encode_association;

const TAG_DATASET: u64 = 0xDA7A;
const TAG_SPLIT: u64 = 0x5711;
const MAX_REDRAWS: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `beta_d[0..K]` then `beta_r[i][k]` in row-major (i, k) order.
    pub features: Vec<f64>,
    /// Per-tile one-hot codes, length I.
    pub target: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub split: SplitIndices,
    pub seed: u64,
    pub fingerprint: String,
    pub num_users: usize,
    pub num_tiles: usize,
    /// Samples that had to be redrawn because the solver failed.
    pub redraws: usize,
}

impl Dataset {
    pub fn feature_dim(&self) -> usize {
        self.num_users + self.num_tiles * self.num_users
    }

    /// Feature matrix (columns = samples) for a list of sample indices.
    pub fn features_of(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.feature_dim(), indices.len(), |d, s| {
            self.samples[indices[s]].features[d]
        })
    }

    /// Code matrix (columns = samples) for a list of sample indices.
    pub fn codes_of(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_tiles, indices.len(), |d, s| {
            self.samples[indices[s]].target[d] as f64
        })
    }
}

/// Feature table for one realization: the exclusive-pair gain table shared
/// with the association solver.
pub fn pair_features(ch: &ChannelSet, scn: &ValidatedScenario) -> LinkGains {
    exclusive_pair_gains(ch, scn)
}

/// Generate `num_samples` labelled samples. Deterministic in (scenario,
/// seed); solver failures redraw the channel (bounded retries) and are
/// counted in [`Dataset::redraws`].
pub fn generate_dataset(
    scn: &ValidatedScenario,
    num_samples: usize,
    seed: u64,
) -> Result<Dataset> {
    if num_samples < 10 {
        return Err(Error::InvalidParameter {
            field: "samples",
            reason: format!("need at least 10 samples, got {num_samples}"),
        });
    }
    let results: Vec<(Sample, usize)> = (0..num_samples)
        .into_par_iter()
        .map(|idx| -> Result<(Sample, usize)> {
            let mut redraws = 0usize;
            for attempt in 0..MAX_REDRAWS {
                let ch_seed = subseed(seed, TAG_DATASET ^ (idx as u64 * MAX_REDRAWS + attempt));
                let ch = draw_channels(scn, ch_seed);
                let gains = pair_features(&ch, scn);
                match alternate(&ch, scn).and_then(|sol| encode_association(&sol.association)) {
                    Ok(target) => {
                        let mut features =
                            Vec::with_capacity(scn.num_users() * (1 + scn.num_tiles()));
                        features.extend_from_slice(&gains.beta_direct);
                        for i in 0..scn.num_tiles() {
                            features.extend_from_slice(&gains.beta_reflect[i]);
                        }
                        return Ok((Sample { features, target }, redraws));
                    }
                    Err(_) => redraws += 1,
                }
            }
            Err(Error::TrainingFailed(format!(
                "sample {idx}: solver failed on {MAX_REDRAWS} consecutive channel draws"
            )))
        })
        .collect::<Result<Vec<_>>>()?;

    let redraws = results.iter().map(|(_, r)| r).sum();
    let samples: Vec<Sample> = results.into_iter().map(|(s, _)| s).collect();

    // 70/20/10 split by shuffled index.
    let split = make_split(num_samples, subseed(seed, TAG_SPLIT));

    Ok(Dataset {
        samples,
        split,
        seed,
        fingerprint: scn.fingerprint(),
        num_users: scn.num_users(),
        num_tiles: scn.num_tiles(),
        redraws,
    })
}

fn make_split(n: usize, seed: u64) -> SplitIndices {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (0.7 * n as f64).floor() as usize;
    let n_val = (0.2 * n as f64).floor() as usize;
    SplitIndices {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    }
}

// ---------------------------------------------------------------------------
// CSV + sidecar persistence
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    seed: u64,
    fingerprint: String,
    num_users: usize,
    num_tiles: usize,
    redraws: usize,
    split: SplitIndices,
}

/// Write `<path>` as CSV plus `<path>.meta.json` with seed, fingerprint and
/// split assignment.
pub fn save_dataset(ds: &Dataset, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<String> = (1..=ds.num_users).map(|k| format!("bd_{k}")).collect();
    for i in 1..=ds.num_tiles {
        for k in 1..=ds.num_users {
            header.push(format!("br_{i}_{k}"));
        }
    }
    header.extend((1..=ds.num_tiles).map(|i| format!("code_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for s in &ds.samples {
        let mut fields: Vec<String> = s.features.iter().map(|f| format!("{f:.16e}")).collect();
        fields.extend(s.target.iter().map(|t| t.to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    drop(out);
    let meta = DatasetMeta {
        seed: ds.seed,
        fingerprint: ds.fingerprint.clone(),
        num_users: ds.num_users,
        num_tiles: ds.num_tiles,
        redraws: ds.redraws,
        split: ds.split.clone(),
    };
    let meta_path = sidecar_path(path);
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn sidecar_path(path: &std::path::Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn load_dataset(path: &std::path::Path) -> Result<Dataset> {
    let meta: DatasetMeta =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::MalformedFile {
        what: "dataset",
        reason: "empty file".into(),
    })?;
    let feature_dim = meta.num_users + meta.num_tiles * meta.num_users;
    let expected_cols = feature_dim + meta.num_tiles;
    if header.split(',').count() != expected_cols {
        return Err(Error::MalformedFile {
            what: "dataset",
            reason: format!(
                "expected {expected_cols} columns, header has {}",
                header.split(',').count()
            ),
        });
    }
    let mut samples = Vec::new();
    for line in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(Error::MalformedFile {
                what: "dataset",
                reason: format!("row with {} fields", fields.len()),
            });
        }
        let features = fields[..feature_dim]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MalformedFile {
                what: "dataset",
                reason: e.to_string(),
            })?;
        let target = fields[feature_dim..]
            .iter()
            .map(|f| f.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MalformedFile {
                what: "dataset",
                reason: e.to_string(),
            })?;
        samples.push(Sample { features, target });
    }
    Ok(Dataset {
        samples,
        split: meta.split,
        seed: meta.seed,
        fingerprint: meta.fingerprint,
        num_users: meta.num_users,
        num_tiles: meta.num_tiles,
        redraws: meta.redraws,
    })
}
