//! Scenario configuration, validation, geometry, and derived scalars.
//!
//! All quantities inside the library are linear: powers in watts, gains as
//! linear ratios, angles in radians. Decibel fields exist only in the
//! on-disk [`ScenarioFile`] and are converted exactly once at load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 3-D point in meters.
pub type Position = [f64; 3];

pub fn distance(a: &Position, b: &Position) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Convert a dB value to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convert dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Solver tolerances and iteration caps.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Tolerances {
    /// Relative sum-rate change that stops the alternating loop.
    pub eps_altern: f64,
    /// Absolute tolerance on the per-user fixed point.
    pub eps_fixedpoint: f64,
    pub max_iters_altern: usize,
    pub max_iters_fixedpoint: usize,
    pub max_iters_dual: usize,
    /// Base step `a` of the diminishing dual schedule `a / (1 + t)`.
    pub dual_step_a: f64,
    /// Refuse exhaustive enumeration when `K^I` exceeds this.
    pub exhaustive_cap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_altern: 1e-4,
            eps_fixedpoint: 1e-6,
            max_iters_altern: 50,
            max_iters_fixedpoint: 100,
            max_iters_dual: 200,
            dual_step_a: 0.1,
            exhaustive_cap: 1e6,
        }
    }
}

/// Full physical and algorithmic parameter set, in linear units.
///
/// Field names follow the usual system-model symbols: `K` users, `M` BS
/// antennas, `I` tiles, `N = N_x * N_y` reflection units per tile.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub num_antennas: usize,
    pub num_tiles: usize,
    pub units_x: usize,
    pub units_y: usize,
    /// Tile side lengths in meters.
    pub tile_len_x: f64,
    pub tile_len_y: f64,
    /// Reflection-unit spacing in meters.
    pub unit_spacing_x: f64,
    pub unit_spacing_y: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Per-user maximum transmit power, watts.
    pub power_w: f64,
    /// Per-user bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Noise power spectral density, watts/Hz (linear).
    pub noise_psd_w_hz: f64,
    /// Noise figure, linear ratio.
    pub noise_figure: f64,
    pub bs_position: Position,
    pub tile_positions: Vec<Position>,
    pub user_positions: Vec<Position>,
    /// Extra attenuation on each direct link, stored as a linear power gain
    /// in (0, 1] (e.g. 25 dB of blockage stores 10^-2.5).
    pub direct_blockage: Vec<f64>,
    pub rng_seed: u64,
    pub tolerances: Tolerances,
}

impl ScenarioConfig {
    /// Reference scenario: the standard parameter table (4 tiles, 8 antennas,
    /// 4 users, 10λ x 10λ tiles at λ/2 spacing, -174 dBm/Hz, NF 6 dB,
    /// 20 MHz, 40 dBm) with a small-cell layout: BS at the origin, the tile
    /// row ~50 m out, users ~5 m behind the tiles, 25 dB direct blockage.
    pub fn table_default() -> Self {
        Self::with_size(4, 4)
    }

    /// Reference scenario resized to `num_users` users and `num_tiles` tiles;
    /// tiles and users stay pairwise aligned 20 m apart so every quota is 1.
    pub fn with_size(num_users: usize, num_tiles: usize) -> Self {
        let wavelength = 0.1;
        let tile_len = 10.0 * wavelength;
        let spacing = wavelength / 2.0;
        let tile_positions = (0..num_tiles)
            .map(|i| [50.0, 20.0 * (i as f64 - (num_tiles as f64 - 1.0) / 2.0), 10.0])
            .collect();
        let user_positions = (0..num_users)
            .map(|k| [55.0, 20.0 * (k as f64 - (num_users as f64 - 1.0) / 2.0), 1.5])
            .collect();
        Self {
            num_users,
            num_antennas: 8,
            num_tiles,
            units_x: 20,
            units_y: 20,
            tile_len_x: tile_len,
            tile_len_y: tile_len,
            unit_spacing_x: spacing,
            unit_spacing_y: spacing,
            wavelength,
            power_w: dbm_to_watts(40.0),
            bandwidth_hz: 20e6,
            noise_psd_w_hz: dbm_to_watts(-174.0),
            noise_figure: db_to_linear(6.0),
            bs_position: [0.0, 0.0, 10.0],
            tile_positions,
            user_positions,
            direct_blockage: vec![db_to_linear(-25.0); num_users],
            rng_seed: 1,
            tolerances: Tolerances::default(),
        }
    }

    /// Units per tile, `N = N_x * N_y`.
    pub fn units_per_tile(&self) -> usize {
        self.units_x * self.units_y
    }
}

/// Number of tiles each user must receive. `sum == I` always holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotaVector(pub Vec<usize>);

impl QuotaVector {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn get(&self, user: usize) -> usize {
        self.0[user]
    }
}

/// Minimum tile count for a link geometry: the smallest number of tiles
/// whose combined aperture matches the unobstructed direct path, i.e.
/// `ceil(λ d_t d_r / (L_x L_y d_d))`, never less than 1.
///
/// Ratios within 1e-9 (relative) of an integer snap to it before the
/// ceiling, so constructed inputs that should land exactly on an integer
/// are not bumped up by float noise.
pub fn required_tiles(
    wavelength: f64,
    d_tile: f64,
    d_reflect: f64,
    d_direct: f64,
    tile_len_x: f64,
    tile_len_y: f64,
) -> Result<usize> {
    for (name, v) in [
        ("wavelength", wavelength),
        ("d_tile", d_tile),
        ("d_reflect", d_reflect),
        ("d_direct", d_direct),
        ("tile_len_x", tile_len_x),
        ("tile_len_y", tile_len_y),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter {
                field: name,
                reason: format!("must be positive and finite, got {v}"),
            });
        }
    }
    let ratio = wavelength * d_tile * d_reflect / (tile_len_x * tile_len_y * d_direct);
    let snapped = ratio.round();
    let n = if (ratio - snapped).abs() <= 1e-9 * ratio.max(1.0) {
        snapped
    } else {
        ratio.ceil()
    };
    Ok((n as usize).max(1))
}

/// Receiver noise power `σ² = B · N_0 · N_F` in watts (all inputs linear).
pub fn noise_power(bandwidth_hz: f64, noise_psd_w_hz: f64, noise_figure: f64) -> Result<f64> {
    for (name, v) in [
        ("bandwidth_hz", bandwidth_hz),
        ("noise_psd_w_hz", noise_psd_w_hz),
        ("noise_figure", noise_figure),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter {
                field: name,
                reason: format!("must be positive and finite, got {v}"),
            });
        }
    }
    Ok(bandwidth_hz * noise_psd_w_hz * noise_figure)
}

/// Per-user quotas: the per-link minimum from the aperture rule (computed
/// against each user's nearest tile), then any surplus tiles are handed out
/// round-robin in user-index order. Errors if the minima already exceed `I`.
pub fn derive_quotas(cfg: &ScenarioConfig) -> Result<QuotaVector> {
    let mut quotas = Vec::with_capacity(cfg.num_users);
    for user in &cfg.user_positions {
        let d_d = distance(&cfg.bs_position, user);
        // Nearest tile defines the representative reflected geometry.
        let (d_t, d_r) = cfg
            .tile_positions
            .iter()
            .map(|tile| (distance(&cfg.bs_position, tile), distance(tile, user)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one tile");
        quotas.push(required_tiles(
            cfg.wavelength,
            d_t,
            d_r,
            d_d,
            cfg.tile_len_x,
            cfg.tile_len_y,
        )?);
    }
    let required: usize = quotas.iter().sum();
    if required > cfg.num_tiles {
        return Err(Error::InfeasibleQuota {
            required,
            available: cfg.num_tiles,
        });
    }
    let mut surplus = cfg.num_tiles - required;
    let mut k = 0;
    while surplus > 0 {
        quotas[k % cfg.num_users] += 1;
        surplus -= 1;
        k += 1;
    }
    Ok(QuotaVector(quotas))
}

/// A checked, immutable scenario with precomputed link distances, quotas and
/// per-user noise power. Safe to share across concurrent workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScenario {
    pub cfg: ScenarioConfig,
    pub quotas: QuotaVector,
    /// BS-user distance per user.
    pub d_direct: Vec<f64>,
    /// BS-tile distance per tile.
    pub d_tile: Vec<f64>,
    /// Tile-user distance, `[tile][user]`.
    pub d_reflect: Vec<Vec<f64>>,
    /// `σ_k²` in watts per user.
    pub noise_w: Vec<f64>,
}

impl ValidatedScenario {
    /// Check every invariant and precompute derived quantities.
    ///
    /// Idempotent: `new(validated.cfg.clone())` reproduces the same scenario.
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
            Ok(())
        }
        if cfg.num_users < 1 {
            return Err(Error::InvalidParameter {
                field: "K",
                reason: "at least one user required".into(),
            });
        }
        if cfg.num_antennas < 1 {
            return Err(Error::InvalidParameter {
                field: "M",
                reason: "at least one BS antenna required".into(),
            });
        }
        if cfg.num_tiles < 1 {
            return Err(Error::InvalidParameter {
                field: "I",
                reason: "at least one tile required".into(),
            });
        }
        if cfg.units_x < 1 || cfg.units_y < 1 {
            return Err(Error::InvalidParameter {
                field: "Nx/Ny",
                reason: "at least one reflection unit per axis".into(),
            });
        }
        positive("Lx", cfg.tile_len_x)?;
        positive("Ly", cfg.tile_len_y)?;
        positive("dx", cfg.unit_spacing_x)?;
        positive("dy", cfg.unit_spacing_y)?;
        positive("lambda", cfg.wavelength)?;
        positive("Pt", cfg.power_w)?;
        positive("Bk", cfg.bandwidth_hz)?;
        positive("N0", cfg.noise_psd_w_hz)?;
        positive("NF", cfg.noise_figure)?;
        // N_x = L_x / d_x within integer rounding (same along y).
        for (field, len, sp, n) in [
            ("geometry", cfg.tile_len_x, cfg.unit_spacing_x, cfg.units_x),
            ("geometry", cfg.tile_len_y, cfg.unit_spacing_y, cfg.units_y),
        ] {
            let implied = len / sp;
            if (implied - n as f64).abs() > 0.5 + 1e-9 {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!(
                        "unit count {n} inconsistent with side/spacing {len}/{sp} = {implied:.3}"
                    ),
                });
            }
        }
        if cfg.tile_positions.len() != cfg.num_tiles {
            return Err(Error::DimensionMismatch {
                context: "tile_positions",
                expected: cfg.num_tiles,
                actual: cfg.tile_positions.len(),
            });
        }
        if cfg.user_positions.len() != cfg.num_users {
            return Err(Error::DimensionMismatch {
                context: "user_positions",
                expected: cfg.num_users,
                actual: cfg.user_positions.len(),
            });
        }
        if cfg.direct_blockage.len() != cfg.num_users {
            return Err(Error::DimensionMismatch {
                context: "direct_blockage",
                expected: cfg.num_users,
                actual: cfg.direct_blockage.len(),
            });
        }
        for (k, &b) in cfg.direct_blockage.iter().enumerate() {
            if !(b > 0.0) || b > 1.0 + 1e-12 {
                return Err(Error::InvalidParameter {
                    field: "direct_blockage",
                    reason: format!("user {k}: linear blockage gain must lie in (0, 1], got {b}"),
                });
            }
        }
        let quotas = derive_quotas(&cfg)?;
        debug_assert_eq!(quotas.total(), cfg.num_tiles);

        let d_direct: Vec<f64> = cfg
            .user_positions
            .iter()
            .map(|u| distance(&cfg.bs_position, u))
            .collect();
        let d_tile: Vec<f64> = cfg
            .tile_positions
            .iter()
            .map(|t| distance(&cfg.bs_position, t))
            .collect();
        let d_reflect: Vec<Vec<f64>> = cfg
            .tile_positions
            .iter()
            .map(|t| cfg.user_positions.iter().map(|u| distance(t, u)).collect())
            .collect();
        let sigma = noise_power(cfg.bandwidth_hz, cfg.noise_psd_w_hz, cfg.noise_figure)?;
        let noise_w = vec![sigma; cfg.num_users];

        Ok(Self {
            cfg,
            quotas,
            d_direct,
            d_tile,
            d_reflect,
            noise_w,
        })
    }

    pub fn num_users(&self) -> usize {
        self.cfg.num_users
    }

    pub fn num_tiles(&self) -> usize {
        self.cfg.num_tiles
    }

    pub fn num_antennas(&self) -> usize {
        self.cfg.num_antennas
    }

    pub fn units_per_tile(&self) -> usize {
        self.cfg.units_per_tile()
    }

    /// Short stable fingerprint of the physical setup, used to tie datasets
    /// and models back to the scenario that produced them.
    pub fn fingerprint(&self) -> String {
        let c = &self.cfg;
        format!(
            "K{}M{}I{}N{}L{:.4}P{:.4e}B{:.3e}",
            c.num_users,
            c.num_antennas,
            c.num_tiles,
            c.units_per_tile(),
            c.tile_len_x,
            c.power_w,
            c.bandwidth_hz,
        )
    }
}

// ---------------------------------------------------------------------------
// On-disk representation
// ---------------------------------------------------------------------------

/// JSON scenario file. Symbols carry their customary names and decibel
/// units; [`ScenarioFile::into_config`] performs the one conversion to
/// linear units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub system: SystemSection,
    #[serde(default)]
    pub geometry: Option<GeometrySection>,
    #[serde(default)]
    pub solver: Option<Tolerances>,
    #[serde(default)]
    pub ml: Option<MlSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSection {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Ny")]
    pub ny: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
    pub lambda_m: f64,
    #[serde(rename = "N0_dbm_hz")]
    pub n0_dbm_hz: f64,
    #[serde(rename = "NF_db")]
    pub nf_db: f64,
    #[serde(rename = "Bk_hz")]
    pub bk_hz: f64,
    #[serde(rename = "Pt_dbm")]
    pub pt_dbm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometrySection {
    pub bs_position: Position,
    pub tile_positions: Vec<Position>,
    pub user_positions: Vec<Position>,
    /// Per-user direct-link blockage in dB (positive = attenuation).
    pub direct_blockage_db: Vec<f64>,
}

/// Machine-learning knobs kept with the scenario so one file drives the
/// whole pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Train/validation/test fractions.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default)]
    pub repair_quotas: bool,
    #[serde(default = "default_train_seed")]
    pub train_seed: u64,
}

fn default_samples() -> usize {
    10_000
}
fn default_hidden() -> Vec<usize> {
    vec![10, 10, 10]
}
fn default_split() -> [f64; 3] {
    [0.7, 0.2, 0.1]
}
fn default_epochs() -> usize {
    120
}
fn default_train_seed() -> u64 {
    7
}

impl Default for MlSection {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            hidden: default_hidden(),
            split: default_split(),
            max_epochs: default_epochs(),
            repair_quotas: false,
            train_seed: default_train_seed(),
        }
    }
}

impl ScenarioFile {
    /// Snapshot of a linear-unit config in file form.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            system: SystemSection {
                k: cfg.num_users,
                m: cfg.num_antennas,
                i: cfg.num_tiles,
                nx: cfg.units_x,
                ny: cfg.units_y,
                lx: cfg.tile_len_x,
                ly: cfg.tile_len_y,
                dx: cfg.unit_spacing_x,
                dy: cfg.unit_spacing_y,
                lambda_m: cfg.wavelength,
                n0_dbm_hz: watts_to_dbm(cfg.noise_psd_w_hz),
                nf_db: 10.0 * cfg.noise_figure.log10(),
                bk_hz: cfg.bandwidth_hz,
                pt_dbm: watts_to_dbm(cfg.power_w),
            },
            geometry: Some(GeometrySection {
                bs_position: cfg.bs_position,
                tile_positions: cfg.tile_positions.clone(),
                user_positions: cfg.user_positions.clone(),
                direct_blockage_db: cfg
                    .direct_blockage
                    .iter()
                    .map(|g| -10.0 * g.log10())
                    .collect(),
            }),
            solver: Some(cfg.tolerances.clone()),
            ml: None,
        }
    }

    /// Convert to linear units. Missing geometry falls back to the default
    /// layout for the declared (K, I).
    pub fn into_config(self, rng_seed: u64) -> ScenarioConfig {
        let s = &self.system;
        let base = ScenarioConfig::with_size(s.k, s.i);
        let (bs, tiles, users, blockage) = match self.geometry {
            Some(g) => (
                g.bs_position,
                g.tile_positions,
                g.user_positions,
                g.direct_blockage_db
                    .iter()
                    .map(|db| db_to_linear(-db))
                    .collect(),
            ),
            None => (
                base.bs_position,
                base.tile_positions,
                base.user_positions,
                base.direct_blockage,
            ),
        };
        ScenarioConfig {
            num_users: s.k,
            num_antennas: s.m,
            num_tiles: s.i,
            units_x: s.nx,
            units_y: s.ny,
            tile_len_x: s.lx,
            tile_len_y: s.ly,
            unit_spacing_x: s.dx,
            unit_spacing_y: s.dy,
            wavelength: s.lambda_m,
            power_w: dbm_to_watts(s.pt_dbm),
            bandwidth_hz: s.bk_hz,
            noise_psd_w_hz: dbm_to_watts(s.n0_dbm_hz),
            noise_figure: db_to_linear(s.nf_db),
            bs_position: bs,
            tile_positions: tiles,
            user_positions: users,
            direct_blockage: blockage,
            rng_seed,
            tolerances: self.solver.unwrap_or_default(),
        }
    }
}
