//! Rate and link-gain evaluation.
//!
//! Three rates per user: the achievable rate from the coherent composite
//! channel, its triangle-inequality upper bound built from per-tile gain
//! amplitudes, and the interference-aware variant that keeps the scattering
//! of non-associated tiles in the denominator.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::alternating::Solution;
use crate::association::AssociationMatrix;
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::phasing::{BeamformingSet, ReflectionSet};
use crate::scenario::ValidatedScenario;

/// log2 via the natural-log ratio, reproducible across platforms to ~1 ulp.
#[inline]
pub fn log2(x: f64) -> f64 {
    x.ln() / std::f64::consts::LN_2
}

/// Amplitude table: `beta_reflect[i][k] = |h_r† Θ_i G_i w_k|` for every
/// (tile, user) pair and `beta_direct[k] = |h_d† w_k|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    pub beta_reflect: Vec<Vec<f64>>,
    pub beta_direct: Vec<f64>,
}

impl LinkGains {
    pub fn num_tiles(&self) -> usize {
        self.beta_reflect.len()
    }

    pub fn num_users(&self) -> usize {
        self.beta_direct.len()
    }

    /// Copy with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            beta_reflect: self
                .beta_reflect
                .iter()
                .map(|row| row.iter().map(|b| b * factor).collect())
                .collect(),
            beta_direct: self.beta_direct.iter().map(|b| b * factor).collect(),
        }
    }
}

/// Reflected-path scalar `h_{i,k}^r† Θ_i G_i w_k` for one (tile, user) pair.
pub fn reflected_term(
    ch: &ChannelSet,
    phases: &ReflectionSet,
    tile: usize,
    user: usize,
    w: &DVector<Complex64>,
) -> Complex64 {
    let gw = &ch.g_tile[tile] * w;
    let h_r = &ch.h_reflect[tile][user];
    (0..h_r.len())
        .map(|n| h_r[n].conj() * phases.coefficient(tile, n) * gw[n])
        .sum()
}

/// Direct-path scalar `h_k^d† w_k`.
pub fn direct_term(ch: &ChannelSet, user: usize, w: &DVector<Complex64>) -> Complex64 {
    ch.h_direct[user].dotc(w)
}

/// Gain amplitudes for all (tile, user) pairs regardless of association.
/// The association ranks and selects downstream; the full table is what both
/// the assignment solver and the surrogate features consume.
pub fn link_gains(
    ch: &ChannelSet,
    _a: &AssociationMatrix,
    phases: &ReflectionSet,
    beams: &BeamformingSet,
) -> Result<LinkGains> {
    if beams.w.len() != ch.num_users() {
        return Err(Error::DimensionMismatch {
            context: "beams",
            expected: ch.num_users(),
            actual: beams.w.len(),
        });
    }
    let beta_reflect = (0..ch.num_tiles())
        .map(|i| {
            (0..ch.num_users())
                .map(|k| reflected_term(ch, phases, i, k, &beams.w[k]).norm())
                .collect()
        })
        .collect();
    let beta_direct = (0..ch.num_users())
        .map(|k| direct_term(ch, k, &beams.w[k]).norm())
        .collect();
    Ok(LinkGains {
        beta_reflect,
        beta_direct,
    })
}

/// Post-alignment amplitude table: for every pair, the reflected gain the
/// tile would deliver under the current beam once its phases are rotated
/// onto the user, `Σ_n |h_r(n)† (G w)(n)|`. Independent of the current
/// reflection state; for a pair that is already phase-aligned it coincides
/// with [`link_gains`]. This is the table the association step ranks on,
/// since the phase step re-aligns whatever gets selected.
pub fn aligned_potential_gains(ch: &ChannelSet, beams: &BeamformingSet) -> Result<LinkGains> {
    if beams.w.len() != ch.num_users() {
        return Err(Error::DimensionMismatch {
            context: "beams",
            expected: ch.num_users(),
            actual: beams.w.len(),
        });
    }
    let beta_reflect = (0..ch.num_tiles())
        .map(|i| {
            (0..ch.num_users())
                .map(|k| {
                    let gw = &ch.g_tile[i] * &beams.w[k];
                    let h_r = &ch.h_reflect[i][k];
                    (0..h_r.len()).map(|n| (h_r[n].conj() * gw[n]).norm()).sum()
                })
                .collect()
        })
        .collect();
    let beta_direct = (0..ch.num_users())
        .map(|k| direct_term(ch, k, &beams.w[k]).norm())
        .collect();
    Ok(LinkGains {
        beta_reflect,
        beta_direct,
    })
}

/// Channel-only gain table: the amplitude each (tile, user) pair reaches
/// when that tile alone serves that user, phases aligned and the beam
/// matched to the pair's exclusive composite channel (alternated to a fixed
/// point). `beta_direct` is the direct gain under a direct-pointed beam.
///
/// This is the table the association step ranks on and the table the
/// surrogate consumes as features: it depends only on the channels, so the
/// assignment it induces is reproducible from the features alone.
pub fn exclusive_pair_gains(ch: &ChannelSet, scn: &ValidatedScenario) -> LinkGains {
    let power = scn.cfg.power_w;
    let sqrt_p = power.sqrt();
    let beta_direct: Vec<f64> = (0..ch.num_users())
        .map(|k| sqrt_p * ch.h_direct[k].norm())
        .collect();
    let beta_reflect = (0..ch.num_tiles())
        .map(|i| {
            (0..ch.num_users())
                .map(|k| exclusive_pair_amplitude(ch, scn, i, k))
                .collect()
        })
        .collect();
    LinkGains {
        beta_reflect,
        beta_direct,
    }
}

/// Reflected amplitude of one exclusive (tile, user) pair at the fixed point
/// of align-then-beamform on the single-pair subsystem.
fn exclusive_pair_amplitude(
    ch: &ChannelSet,
    scn: &ValidatedScenario,
    tile: usize,
    user: usize,
) -> f64 {
    use crate::phasing::align_tile;
    let power = scn.cfg.power_w;
    let mut phases = ReflectionSet::zeros(scn);
    let mut assignment = vec![None; ch.num_tiles()];
    assignment[tile] = Some(user);
    let a = AssociationMatrix::from_assignment(assignment, ch.num_users()).expect("single pair");

    // Direct-pointed start; first antenna if the direct path is fully dead.
    let h_d = &ch.h_direct[user];
    let mut w = if h_d.norm() > 0.0 {
        h_d * Complex64::new(power.sqrt() / h_d.norm(), 0.0)
    } else {
        let mut e = DVector::zeros(ch.num_antennas());
        e[0] = Complex64::new(power.sqrt(), 0.0);
        e
    };

    let mut amp = 0.0f64;
    for _ in 0..8 {
        align_tile(ch, tile, user, &w, &mut phases);
        let v = crate::channel::composite_channel(ch, &a, &phases, user).expect("shapes agree");
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        w = v * Complex64::new(power.sqrt() / norm, 0.0);
        let next = reflected_term(ch, &phases, tile, user, &w).norm();
        if (next - amp).abs() <= 1e-6 * next.max(1e-300) {
            return next;
        }
        amp = next;
    }
    amp
}

/// Achievable rate `B log2(1 + |(Σ_i α_{i,k} h_r†Θ G + h_d†) w|² / σ²)`.
pub fn user_rate(
    ch: &ChannelSet,
    a: &AssociationMatrix,
    phases: &ReflectionSet,
    w: &DVector<Complex64>,
    noise_w: f64,
    bandwidth_hz: f64,
    user: usize,
) -> Result<f64> {
    if !(noise_w > 0.0) {
        return Err(Error::InvalidParameter {
            field: "noise_w",
            reason: format!("must be positive, got {noise_w}"),
        });
    }
    let mut signal = direct_term(ch, user, w);
    for tile in 0..ch.num_tiles() {
        if a.user_of(tile) == Some(user) {
            signal += reflected_term(ch, phases, tile, user, w);
        }
    }
    Ok(bandwidth_hz * log2(1.0 + signal.norm_sqr() / noise_w))
}

/// Triangle-inequality upper bound from the amplitude table:
/// `B log2(1 + (Σ_i α_{i,k} β_r[i][k] + β_d[k])² / σ²)`.
pub fn upper_bound_rate(
    gains: &LinkGains,
    a: &AssociationMatrix,
    noise_w: f64,
    bandwidth_hz: f64,
    user: usize,
) -> Result<f64> {
    if !(noise_w > 0.0) {
        return Err(Error::InvalidParameter {
            field: "noise_w",
            reason: format!("must be positive, got {noise_w}"),
        });
    }
    let amplitude: f64 = (0..gains.num_tiles())
        .filter(|&i| a.user_of(i) == Some(user))
        .map(|i| gains.beta_reflect[i][user])
        .sum::<f64>()
        + gains.beta_direct[user];
    Ok(bandwidth_hz * log2(1.0 + amplitude * amplitude / noise_w))
}

/// Interference-aware rate: the coherent scattering of the non-associated
/// tiles joins the noise in the denominator.
pub fn interference_rate(
    ch: &ChannelSet,
    a: &AssociationMatrix,
    phases: &ReflectionSet,
    w: &DVector<Complex64>,
    noise_w: f64,
    bandwidth_hz: f64,
    user: usize,
) -> Result<f64> {
    if !(noise_w > 0.0) {
        return Err(Error::InvalidParameter {
            field: "noise_w",
            reason: format!("must be positive, got {noise_w}"),
        });
    }
    let mut signal = direct_term(ch, user, w);
    let mut interference = Complex64::new(0.0, 0.0);
    for tile in 0..ch.num_tiles() {
        let term = reflected_term(ch, phases, tile, user, w);
        if a.user_of(tile) == Some(user) {
            signal += term;
        } else {
            interference += term;
        }
    }
    Ok(bandwidth_hz * log2(1.0 + signal.norm_sqr() / (interference.norm_sqr() + noise_w)))
}

/// All three rates for every user plus their sums.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rate: Vec<f64>,
    pub rate_upper: Vec<f64>,
    pub rate_interference: Vec<f64>,
    pub sum_rate: f64,
    pub sum_upper: f64,
    pub sum_interference: f64,
}

impl RateReport {
    /// CSV rows `(realization, case, k, r, r_upper, r_intf)`.
    pub fn csv_rows(&self, realization: usize, case: &str) -> Vec<String> {
        (0..self.rate.len())
            .map(|k| {
                format!(
                    "{realization},{case},{k},{:.10e},{:.10e},{:.10e}",
                    self.rate[k], self.rate_upper[k], self.rate_interference[k]
                )
            })
            .collect()
    }
}

/// Assemble the full report for a solution under one channel realization.
pub fn rate_report(
    ch: &ChannelSet,
    solution: &Solution,
    scn: &ValidatedScenario,
) -> Result<RateReport> {
    let gains = link_gains(ch, &solution.association, &solution.phases, &solution.beams)?;
    let bandwidth = scn.cfg.bandwidth_hz;
    let mut rate = Vec::with_capacity(scn.num_users());
    let mut rate_upper = Vec::with_capacity(scn.num_users());
    let mut rate_interference = Vec::with_capacity(scn.num_users());
    for k in 0..scn.num_users() {
        let w = &solution.beams.w[k];
        rate.push(user_rate(
            ch,
            &solution.association,
            &solution.phases,
            w,
            scn.noise_w[k],
            bandwidth,
            k,
        )?);
        rate_upper.push(upper_bound_rate(
            &gains,
            &solution.association,
            scn.noise_w[k],
            bandwidth,
            k,
        )?);
        rate_interference.push(interference_rate(
            ch,
            &solution.association,
            &solution.phases,
            w,
            scn.noise_w[k],
            bandwidth,
            k,
        )?);
    }
    Ok(RateReport {
        sum_rate: rate.iter().sum(),
        sum_upper: rate_upper.iter().sum(),
        sum_interference: rate_interference.iter().sum(),
        rate,
        rate_upper,
        rate_interference,
    })
}
