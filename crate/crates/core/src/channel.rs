//! Random channel realizations and composite-channel assembly.
//!
//! Every scalar coefficient is `sqrt(h_pl * h_ls) * g` with `g ~ CN(0, 1)`:
//! free-space path loss, a deterministic large-scale blockage term (unity on
//! reflected links, the configured attenuation on direct links), and i.i.d.
//! Rayleigh fading. Each link (role, tile, user) owns its own ChaCha
//! substream keyed by the realization seed, so a given link's draw does not
//! move when the scenario gains tiles or users.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::association::AssociationMatrix;
use crate::error::{Error, Result};
use crate::phasing::ReflectionSet;
use crate::scenario::ValidatedScenario;

/// One realization of all links for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS -> user k, length M, `[user]`.
    pub h_direct: Vec<DVector<Complex64>>,
    /// BS -> tile i, N x M, `[tile]`.
    pub g_tile: Vec<DMatrix<Complex64>>,
    /// Tile i -> user k, length N, `[tile][user]`.
    pub h_reflect: Vec<Vec<DVector<Complex64>>>,
    pub seed: u64,
}

/// Free-space path loss `(λ / 4πd)²` as a linear power gain.
pub fn path_loss(wavelength: f64, dist: f64) -> Result<f64> {
    if !(wavelength > 0.0) || !(dist > 0.0) {
        return Err(Error::InvalidParameter {
            field: "path_loss",
            reason: format!("wavelength and distance must be positive, got ({wavelength}, {dist})"),
        });
    }
    let ratio = wavelength / (4.0 * PI * dist);
    Ok(ratio * ratio)
}

#[derive(Clone, Copy)]
enum LinkRole {
    Direct = 0,
    BsTile = 1,
    TileUser = 2,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a base seed and a purpose tag.
pub fn subseed(seed: u64, tag: u64) -> u64 {
    splitmix(splitmix(seed) ^ tag.wrapping_mul(0xD1B54A32D192ED03))
}

/// Dedicated counter-mode stream for one (seed, role, tile, user) tuple.
fn link_rng(seed: u64, role: LinkRole, tile: usize, user: usize) -> ChaCha8Rng {
    let mut state = splitmix(seed);
    for part in [role as u64, tile as u64, user as u64] {
        state = splitmix(state ^ part.wrapping_mul(0xD1B54A32D192ED03));
    }
    let mut key = [0u8; 32];
    let mut s = state;
    for chunk in key.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw one full channel realization. Pure in (scenario, seed).
pub fn draw_channels(scn: &ValidatedScenario, seed: u64) -> ChannelSet {
    let m = scn.num_antennas();
    let n = scn.units_per_tile();
    let lambda = scn.cfg.wavelength;

    let h_direct = (0..scn.num_users())
        .map(|k| {
            let amp = (path_loss(lambda, scn.d_direct[k]).expect("validated distances")
                * scn.cfg.direct_blockage[k])
                .sqrt();
            let mut rng = link_rng(seed, LinkRole::Direct, 0, k);
            DVector::from_fn(m, |_, _| complex_normal(&mut rng) * amp)
        })
        .collect();

    let g_tile = (0..scn.num_tiles())
        .map(|i| {
            let amp = path_loss(lambda, scn.d_tile[i])
                .expect("validated distances")
                .sqrt();
            let mut rng = link_rng(seed, LinkRole::BsTile, i, 0);
            // Row-major draw order: unit n, then antenna m.
            let mut mat = DMatrix::zeros(n, m);
            for r in 0..n {
                for c in 0..m {
                    mat[(r, c)] = complex_normal(&mut rng) * amp;
                }
            }
            mat
        })
        .collect();

    let h_reflect = (0..scn.num_tiles())
        .map(|i| {
            (0..scn.num_users())
                .map(|k| {
                    let amp = path_loss(lambda, scn.d_reflect[i][k])
                        .expect("validated distances")
                        .sqrt();
                    let mut rng = link_rng(seed, LinkRole::TileUser, i, k);
                    DVector::from_fn(n, |_, _| complex_normal(&mut rng) * amp)
                })
                .collect()
        })
        .collect();

    ChannelSet {
        h_direct,
        g_tile,
        h_reflect,
        seed,
    }
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.h_direct.len()
    }

    pub fn num_tiles(&self) -> usize {
        self.g_tile.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.h_direct.first().map_or(0, |h| h.len())
    }

    pub fn units_per_tile(&self) -> usize {
        self.g_tile.first().map_or(0, |g| g.nrows())
    }

    fn check_shapes(&self, a: &AssociationMatrix, phases: &ReflectionSet) -> Result<()> {
        if a.num_tiles() != self.num_tiles() {
            return Err(Error::DimensionMismatch {
                context: "association tiles",
                expected: self.num_tiles(),
                actual: a.num_tiles(),
            });
        }
        if phases.num_tiles() != self.num_tiles() {
            return Err(Error::DimensionMismatch {
                context: "reflection tiles",
                expected: self.num_tiles(),
                actual: phases.num_tiles(),
            });
        }
        if phases.units_per_tile() != self.units_per_tile() {
            return Err(Error::DimensionMismatch {
                context: "reflection units",
                expected: self.units_per_tile(),
                actual: phases.units_per_tile(),
            });
        }
        Ok(())
    }
}

/// The composite downlink vector for user `k`:
/// `Σ_i α_{i,k} G_i† Θ_i† h_{i,k}^r + h_k^d` (length M). This is the vector
/// the maximum-ratio beam points along.
pub fn composite_channel(
    ch: &ChannelSet,
    a: &AssociationMatrix,
    phases: &ReflectionSet,
    user: usize,
) -> Result<DVector<Complex64>> {
    if user >= ch.num_users() {
        return Err(Error::IndexOutOfRange {
            kind: "user",
            index: user,
            bound: ch.num_users(),
        });
    }
    ch.check_shapes(a, phases)?;
    let mut v = ch.h_direct[user].clone();
    for tile in 0..ch.num_tiles() {
        if a.user_of(tile) != Some(user) {
            continue;
        }
        let h_r = &ch.h_reflect[tile][user];
        let g = &ch.g_tile[tile];
        // t[n] = e^{-jθ_{i,n}} h_r[n]; v += G† t
        let t = DVector::from_fn(h_r.len(), |n, _| {
            phases.coefficient(tile, n).conj() * h_r[n]
        });
        v += g.adjoint() * t;
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Dump / load
// ---------------------------------------------------------------------------

fn fmt_f64(v: f64) -> String {
    // 17 significant digits round-trip any f64 exactly.
    format!("{v:.16e}")
}

/// Write a realization as CSV with a dimension header. Floats are printed
/// with enough digits to round-trip at full f64 precision.
pub fn dump_channels<W: Write>(ch: &ChannelSet, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# channels K={} M={} I={} N={} seed={}",
        ch.num_users(),
        ch.num_antennas(),
        ch.num_tiles(),
        ch.units_per_tile(),
        ch.seed
    )?;
    writeln!(out, "kind,i,k,n,m,re,im")?;
    for (k, h) in ch.h_direct.iter().enumerate() {
        for (m, c) in h.iter().enumerate() {
            writeln!(out, "hd,0,{k},0,{m},{},{}", fmt_f64(c.re), fmt_f64(c.im))?;
        }
    }
    for (i, g) in ch.g_tile.iter().enumerate() {
        for n in 0..g.nrows() {
            for m in 0..g.ncols() {
                let c = g[(n, m)];
                writeln!(out, "g,{i},0,{n},{m},{},{}", fmt_f64(c.re), fmt_f64(c.im))?;
            }
        }
    }
    for (i, per_user) in ch.h_reflect.iter().enumerate() {
        for (k, h) in per_user.iter().enumerate() {
            for (n, c) in h.iter().enumerate() {
                writeln!(out, "hr,{i},{k},{n},0,{},{}", fmt_f64(c.re), fmt_f64(c.im))?;
            }
        }
    }
    Ok(())
}

pub fn dump_channels_to_path(ch: &ChannelSet, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    dump_channels(ch, std::io::BufWriter::new(file))
}

/// Read a realization previously written by [`dump_channels`].
pub fn load_channels<R: std::io::Read>(reader: R) -> Result<ChannelSet> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| malformed("empty file"))??;
    let dims = parse_header(&header)?;
    let (nk, nm, ni, nn, seed) = dims;

    let mut h_direct = vec![DVector::zeros(nm); nk];
    let mut g_tile = vec![DMatrix::zeros(nn, nm); ni];
    let mut h_reflect = vec![vec![DVector::zeros(nn); nk]; ni];

    for line in lines {
        let line = line?;
        if line.starts_with('#') || line.starts_with("kind") || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(malformed(&format!("expected 7 fields, got {}", fields.len())));
        }
        let idx = |f: &str| -> Result<usize> {
            f.parse().map_err(|_| malformed(&format!("bad index `{f}`")))
        };
        let num = |f: &str| -> Result<f64> {
            f.parse().map_err(|_| malformed(&format!("bad float `{f}`")))
        };
        let (i, k, n, m) = (idx(fields[1])?, idx(fields[2])?, idx(fields[3])?, idx(fields[4])?);
        let c = Complex64::new(num(fields[5])?, num(fields[6])?);
        match fields[0] {
            "hd" => h_direct[k][m] = c,
            "g" => g_tile[i][(n, m)] = c,
            "hr" => h_reflect[i][k][n] = c,
            other => return Err(malformed(&format!("unknown kind `{other}`"))),
        }
    }
    Ok(ChannelSet {
        h_direct,
        g_tile,
        h_reflect,
        seed,
    })
}

pub fn load_channels_from_path(path: &Path) -> Result<ChannelSet> {
    load_channels(std::fs::File::open(path)?)
}

fn malformed(reason: &str) -> Error {
    Error::MalformedFile {
        what: "channel dump",
        reason: reason.to_string(),
    }
}

fn parse_header(header: &str) -> Result<(usize, usize, usize, usize, u64)> {
    let mut k = None;
    let mut m = None;
    let mut i = None;
    let mut n = None;
    let mut seed = None;
    for token in header.trim_start_matches('#').split_whitespace() {
        if let Some((key, value)) = token.split_once('=') {
            match key {
                "K" => k = value.parse().ok(),
                "M" => m = value.parse().ok(),
                "I" => i = value.parse().ok(),
                "N" => n = value.parse().ok(),
                "seed" => seed = value.parse().ok(),
                _ => {}
            }
        }
    }
    match (k, m, i, n, seed) {
        (Some(k), Some(m), Some(i), Some(n), Some(seed)) => Ok((k, m, i, n, seed)),
        _ => Err(malformed("header must carry K= M= I= N= seed=")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{db_to_linear, ScenarioConfig, ValidatedScenario};
    use approx::assert_relative_eq;

    fn small_scenario() -> ValidatedScenario {
        let mut cfg = ScenarioConfig::with_size(2, 2);
        cfg.units_x = 4;
        cfg.units_y = 4;
        cfg.unit_spacing_x = cfg.tile_len_x / 4.0;
        cfg.unit_spacing_y = cfg.tile_len_y / 4.0;
        ValidatedScenario::new(cfg).unwrap()
    }

    #[test]
    fn path_loss_hand_values() {
        assert_relative_eq!(path_loss(0.1, 10.0).unwrap(), 6.333e-7, max_relative = 1e-3);
        let lambda = 0.23;
        assert_relative_eq!(
            path_loss(lambda, lambda / (4.0 * PI)).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        // Inverse-square: halving distance quadruples gain.
        assert_relative_eq!(
            path_loss(0.1, 5.0).unwrap(),
            4.0 * path_loss(0.1, 10.0).unwrap(),
            max_relative = 1e-12
        );
        assert!(path_loss(0.1, 0.0).is_err());
    }

    #[test]
    fn same_seed_reproduces_bit_identical() {
        let scn = small_scenario();
        let a = draw_channels(&scn, 42);
        let b = draw_channels(&scn, 42);
        assert_eq!(a, b);
        let c = draw_channels(&scn, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn substreams_stable_under_growth() {
        // Adding tiles/users must not disturb existing links.
        let small = small_scenario();
        let mut big_cfg = ScenarioConfig::with_size(3, 3);
        big_cfg.units_x = 4;
        big_cfg.units_y = 4;
        big_cfg.unit_spacing_x = big_cfg.tile_len_x / 4.0;
        big_cfg.unit_spacing_y = big_cfg.tile_len_y / 4.0;
        // Keep the first two tiles/users in the same spots.
        big_cfg.tile_positions[0] = small.cfg.tile_positions[0];
        big_cfg.tile_positions[1] = small.cfg.tile_positions[1];
        big_cfg.user_positions[0] = small.cfg.user_positions[0];
        big_cfg.user_positions[1] = small.cfg.user_positions[1];
        let big = ValidatedScenario::new(big_cfg).unwrap();

        let ch_small = draw_channels(&small, 7);
        let ch_big = draw_channels(&big, 7);
        assert_eq!(ch_small.h_direct[0], ch_big.h_direct[0]);
        assert_eq!(ch_small.g_tile[1], ch_big.g_tile[1]);
        assert_eq!(ch_small.h_reflect[1][0], ch_big.h_reflect[1][0]);
    }

    #[test]
    fn heavy_blockage_kills_direct() {
        let mut cfg = ScenarioConfig::with_size(2, 2);
        cfg.direct_blockage = vec![db_to_linear(-300.0); 2];
        let scn = ValidatedScenario::new(cfg).unwrap();
        let ch = draw_channels(&scn, 1);
        for h in &ch.h_direct {
            assert!(h.iter().all(|c| c.norm() < 1e-18));
        }
    }

    #[test]
    fn second_moment_matches_mean_path_gain() {
        // E|g|^2 = 1 for CN(0,1); pooled over 1e5 coefficients the empirical
        // second moment of coefficient/sqrt(pl*ls) must sit within 2%.
        let scn = ValidatedScenario::new(ScenarioConfig::table_default()).unwrap();
        let mut sum = 0.0f64;
        let mut count = 0usize;
        let lambda = scn.cfg.wavelength;
        for seed in 0..6 {
            let ch = draw_channels(&scn, seed);
            for (i, g) in ch.g_tile.iter().enumerate() {
                let pl = path_loss(lambda, scn.d_tile[i]).unwrap();
                for c in g.iter() {
                    sum += c.norm_sqr() / pl;
                    count += 1;
                }
            }
            for (k, h) in ch.h_direct.iter().enumerate() {
                let pl = path_loss(lambda, scn.d_direct[k]).unwrap() * scn.cfg.direct_blockage[k];
                for c in h.iter() {
                    sum += c.norm_sqr() / pl;
                    count += 1;
                }
            }
            for (i, per_user) in ch.h_reflect.iter().enumerate() {
                for (k, h) in per_user.iter().enumerate() {
                    let pl = path_loss(lambda, scn.d_reflect[i][k]).unwrap();
                    for c in h.iter() {
                        sum += c.norm_sqr() / pl;
                        count += 1;
                    }
                }
            }
        }
        assert!(count >= 100_000, "need at least 1e5 samples, got {count}");
        let mean = sum / count as f64;
        assert!(
            (mean - 1.0).abs() < 0.02,
            "normalized second moment {mean} deviates more than 2%"
        );
    }

    #[test]
    fn dump_load_round_trip_exact() {
        let scn = small_scenario();
        let ch = draw_channels(&scn, 99);
        let mut buf = Vec::new();
        dump_channels(&ch, &mut buf).unwrap();
        let back = load_channels(buf.as_slice()).unwrap();
        assert_eq!(ch, back);
    }
}
