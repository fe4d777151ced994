//! Beamforming and reflection-phase optimization (sub-problems 2 and 3).
//!
//! Beamforming is maximum-ratio transmission along the composite channel at
//! full per-user power. Phases are closed-form: each associated unit rotates
//! its reflected path onto the direct path's phase reference, which makes
//! the triangle-inequality bound tight.

use std::f64::consts::TAU;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::association::AssociationMatrix;
use crate::channel::{composite_channel, ChannelSet};
use crate::error::{Error, Result};
use crate::scenario::ValidatedScenario;

/// Per-user transmit beams, `w[k]` of length M with `‖w‖² = P_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSet {
    pub w: Vec<DVector<Complex64>>,
}

impl BeamformingSet {
    /// True if any user's composite channel was the zero vector (its beam is
    /// zero instead of carrying power).
    pub fn has_zero_beam(&self) -> bool {
        self.w.iter().any(|w| w.iter().all(|c| c.norm_sqr() == 0.0))
    }
}

/// Unit-modulus reflection coefficients per tile, stored as angles in
/// `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionSet {
    theta: Vec<Vec<f64>>,
}

impl ReflectionSet {
    pub fn from_angles(theta: Vec<Vec<f64>>) -> Self {
        let theta = theta
            .into_iter()
            .map(|row| row.into_iter().map(|t| t.rem_euclid(TAU)).collect())
            .collect();
        Self { theta }
    }

    pub fn zeros(scn: &ValidatedScenario) -> Self {
        Self {
            theta: vec![vec![0.0; scn.units_per_tile()]; scn.num_tiles()],
        }
    }

    /// Uniform random angles, seeded.
    pub fn random(scn: &ValidatedScenario, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = (0..scn.num_tiles())
            .map(|_| {
                (0..scn.units_per_tile())
                    .map(|_| rng.gen_range(0.0..TAU))
                    .collect()
            })
            .collect();
        Self { theta }
    }

    pub fn num_tiles(&self) -> usize {
        self.theta.len()
    }

    pub fn units_per_tile(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    pub fn angle(&self, tile: usize, unit: usize) -> f64 {
        self.theta[tile][unit]
    }

    /// `e^{jθ_{i,n}}`; the amplitude is exactly 1 by construction.
    pub fn coefficient(&self, tile: usize, unit: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.theta[tile][unit])
    }

    pub fn angles(&self) -> &[Vec<f64>] {
        &self.theta
    }

    fn set_angle(&mut self, tile: usize, unit: usize, value: f64) {
        self.theta[tile][unit] = value.rem_euclid(TAU);
    }
}

/// Maximum-ratio transmission toward each user's composite channel:
/// `w_k = √P_t · v / ‖v‖`. A zero composite channel produces a zero beam.
pub fn mrt_beamform(
    ch: &ChannelSet,
    a: &AssociationMatrix,
    phases: &ReflectionSet,
    power_w: f64,
) -> Result<BeamformingSet> {
    if !(power_w > 0.0) {
        return Err(Error::InvalidParameter {
            field: "Pt",
            reason: format!("must be positive, got {power_w}"),
        });
    }
    let w = (0..ch.num_users())
        .map(|k| {
            let v = composite_channel(ch, a, phases, k)?;
            let norm = v.norm();
            if norm == 0.0 {
                Ok(DVector::zeros(ch.num_antennas()))
            } else {
                Ok(v * Complex64::new(power_w.sqrt() / norm, 0.0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BeamformingSet { w })
}

/// Phase reference of user `k`: the angle of the direct term `h_d† w_k`,
/// zero when the direct term vanishes (only relative alignment matters).
pub fn phase_reference(ch: &ChannelSet, user: usize, w: &DVector<Complex64>) -> f64 {
    let d = crate::rates::direct_term(ch, user, w);
    if d.norm_sqr() == 0.0 {
        0.0
    } else {
        d.arg()
    }
}

/// Rotate every unit of one tile so its reflected path lands on user
/// `user`'s phase reference under beam `w`.
pub fn align_tile(
    ch: &ChannelSet,
    tile: usize,
    user: usize,
    w: &DVector<Complex64>,
    phases: &mut ReflectionSet,
) {
    let psi = phase_reference(ch, user, w);
    let gw = &ch.g_tile[tile] * w;
    let h_r = &ch.h_reflect[tile][user];
    for n in 0..h_r.len() {
        let path = h_r[n].conj() * gw[n];
        let phi = if path.norm_sqr() == 0.0 { 0.0 } else { path.arg() };
        phases.set_angle(tile, n, psi - phi);
    }
}

/// Closed-form optimal phases: for every associated tile and unit,
/// `θ_{i,n} = mod(Ψ_k − Φ_{i,k,n}; 2π)` with `Φ` the phase of
/// `h_r(n)† · (row_n(G) w_k)`. Non-associated tiles keep their previous
/// angles so the alternating loop stays deterministic.
///
/// Errors if any tile has no user: the closed form is defined only under a
/// full association.
pub fn optimal_phases(
    ch: &ChannelSet,
    a: &AssociationMatrix,
    beams: &BeamformingSet,
    phases: &mut ReflectionSet,
) -> Result<()> {
    if a.num_tiles() != ch.num_tiles() {
        return Err(Error::DimensionMismatch {
            context: "association tiles",
            expected: ch.num_tiles(),
            actual: a.num_tiles(),
        });
    }
    for tile in 0..ch.num_tiles() {
        let user = a
            .user_of(tile)
            .ok_or(Error::UnassociatedTile { tile })?;
        align_tile(ch, tile, user, &beams.w[user], phases);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::rates::{link_gains, reflected_term, user_rate};
    use crate::scenario::{ScenarioConfig, ValidatedScenario};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn small_scn() -> ValidatedScenario {
        let mut cfg = ScenarioConfig::with_size(2, 2);
        cfg.units_x = 4;
        cfg.units_y = 4;
        cfg.unit_spacing_x = cfg.tile_len_x / 4.0;
        cfg.unit_spacing_y = cfg.tile_len_y / 4.0;
        ValidatedScenario::new(cfg).unwrap()
    }

    #[test]
    fn mrt_reduces_to_direct_when_unassociated() {
        // h_d = [1, j], P_t = 2: w = h_d exactly.
        let ch = ChannelSet {
            h_direct: vec![DVector::from_vec(vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
            ])],
            g_tile: vec![DMatrix::zeros(1, 2)],
            h_reflect: vec![vec![DVector::zeros(1)]],
            seed: 0,
        };
        let a = AssociationMatrix::empty(1, 1);
        let phases = ReflectionSet::from_angles(vec![vec![0.0]]);
        let beams = mrt_beamform(&ch, &a, &phases, 2.0).unwrap();
        assert_relative_eq!((beams.w[0][0] - Complex64::new(1.0, 0.0)).norm(), 0.0);
        assert_relative_eq!((beams.w[0][1] - Complex64::new(0.0, 1.0)).norm(), 0.0);
        // And the direct gain equals √P_t ‖h_d‖.
        let g = link_gains(&ch, &a, &phases, &beams).unwrap();
        assert_relative_eq!(g.beta_direct[0], 2.0f64.sqrt() * 2.0f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn mrt_power_is_exact() {
        let scn = small_scn();
        for seed in 0..30u64 {
            let ch = draw_channels(&scn, seed);
            let a = AssociationMatrix::from_assignment(vec![Some(0), Some(1)], 2).unwrap();
            let phases = ReflectionSet::random(&scn, seed);
            let beams = mrt_beamform(&ch, &a, &phases, scn.cfg.power_w).unwrap();
            for w in &beams.w {
                assert_relative_eq!(w.norm() * w.norm(), scn.cfg.power_w, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn mrt_zero_channel_gives_zero_beam() {
        let ch = ChannelSet {
            h_direct: vec![DVector::zeros(2)],
            g_tile: vec![DMatrix::zeros(1, 2)],
            h_reflect: vec![vec![DVector::zeros(1)]],
            seed: 0,
        };
        let a = AssociationMatrix::empty(1, 1);
        let phases = ReflectionSet::from_angles(vec![vec![0.0]]);
        let beams = mrt_beamform(&ch, &a, &phases, 1.0).unwrap();
        assert!(beams.has_zero_beam());
    }

    #[test]
    fn optimal_phase_scalar_hand_value() {
        // h_r = e^{-jπ/4}, h_t w = 1, h_d† w = 1: θ = 7π/4 and the reflected
        // path lands on phase Ψ = 0.
        let ch = ChannelSet {
            h_direct: vec![DVector::from_element(1, Complex64::new(1.0, 0.0))],
            g_tile: vec![DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))],
            h_reflect: vec![vec![DVector::from_element(
                1,
                Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_4),
            )]],
            seed: 0,
        };
        let a = AssociationMatrix::from_assignment(vec![Some(0)], 1).unwrap();
        let beams = BeamformingSet {
            w: vec![DVector::from_element(1, Complex64::new(1.0, 0.0))],
        };
        let mut phases = ReflectionSet::from_angles(vec![vec![1.0]]);
        optimal_phases(&ch, &a, &beams, &mut phases).unwrap();
        assert_relative_eq!(
            phases.angle(0, 0),
            7.0 * std::f64::consts::FRAC_PI_4,
            max_relative = 1e-12
        );
        let term = reflected_term(&ch, &phases, 0, 0, &beams.w[0]);
        assert_relative_eq!(term.arg(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn already_aligned_scalars_get_zero_phase() {
        let ch = ChannelSet {
            h_direct: vec![DVector::from_element(1, Complex64::new(2.0, 0.0))],
            g_tile: vec![DMatrix::from_element(1, 1, Complex64::new(0.7, 0.0))],
            h_reflect: vec![vec![DVector::from_element(1, Complex64::new(0.4, 0.0))]],
            seed: 0,
        };
        let a = AssociationMatrix::from_assignment(vec![Some(0)], 1).unwrap();
        let beams = BeamformingSet {
            w: vec![DVector::from_element(1, Complex64::new(1.0, 0.0))],
        };
        let mut phases = ReflectionSet::from_angles(vec![vec![2.5]]);
        optimal_phases(&ch, &a, &beams, &mut phases).unwrap();
        assert_relative_eq!(phases.angle(0, 0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn unassociated_tile_is_an_error() {
        let scn = small_scn();
        let ch = draw_channels(&scn, 5);
        let a = AssociationMatrix::from_assignment(vec![Some(0), None], 2).unwrap();
        let phases0 = ReflectionSet::random(&scn, 5);
        let beams = mrt_beamform(&ch, &a, &phases0, scn.cfg.power_w).unwrap();
        let mut phases = phases0.clone();
        assert!(matches!(
            optimal_phases(&ch, &a, &beams, &mut phases),
            Err(Error::UnassociatedTile { tile: 1 })
        ));
    }

    #[test]
    fn alignment_identity_every_unit() {
        // After the closed form, each unit's path phase equals Ψ_k.
        let scn = small_scn();
        for seed in 0..10u64 {
            let ch = draw_channels(&scn, seed);
            let a = AssociationMatrix::from_assignment(vec![Some(1), Some(0)], 2).unwrap();
            let mut phases = ReflectionSet::random(&scn, seed + 40);
            let beams = mrt_beamform(&ch, &a, &phases, scn.cfg.power_w).unwrap();
            optimal_phases(&ch, &a, &beams, &mut phases).unwrap();
            for tile in 0..2 {
                let user = a.user_of(tile).unwrap();
                let w = &beams.w[user];
                let psi = phase_reference(&ch, user, w);
                let gw = &ch.g_tile[tile] * w;
                for n in 0..scn.units_per_tile() {
                    let unit_path =
                        ch.h_reflect[tile][user][n].conj() * phases.coefficient(tile, n) * gw[n];
                    let mut delta = (unit_path.arg() - psi).rem_euclid(TAU);
                    if delta > std::f64::consts::PI {
                        delta -= TAU;
                    }
                    assert!(delta.abs() < 1e-9, "unit {n} off by {delta}");
                }
            }
        }
    }

    #[test]
    fn random_phases_never_beat_optimal_in_expectation() {
        let scn = small_scn();
        let a = AssociationMatrix::from_assignment(vec![Some(0), Some(1)], 2).unwrap();
        let mut optimal_mean = 0.0;
        let mut random_mean = 0.0;
        let draws = 1200;
        for seed in 0..draws {
            let ch = draw_channels(&scn, seed);
            let mut phases = ReflectionSet::random(&scn, seed + 10_000);
            let beams = mrt_beamform(&ch, &a, &phases, scn.cfg.power_w).unwrap();
            random_mean += user_rate(
                &ch,
                &a,
                &phases,
                &beams.w[0],
                scn.noise_w[0],
                scn.cfg.bandwidth_hz,
                0,
            )
            .unwrap();
            optimal_phases(&ch, &a, &beams, &mut phases).unwrap();
            optimal_mean += user_rate(
                &ch,
                &a,
                &phases,
                &beams.w[0],
                scn.noise_w[0],
                scn.cfg.bandwidth_hz,
                0,
            )
            .unwrap();
        }
        assert!(
            optimal_mean > random_mean,
            "optimal {optimal_mean} vs random {random_mean} over {draws} draws"
        );
    }

    #[test]
    fn reflection_angles_stay_in_range_and_unit_modulus() {
        let set = ReflectionSet::from_angles(vec![vec![-1.0, 7.0, 100.0, -0.0]]);
        for n in 0..4 {
            let t = set.angle(0, n);
            assert!((0.0..TAU).contains(&t), "angle {t} out of range");
            assert_relative_eq!(set.coefficient(0, n).norm(), 1.0, max_relative = 1e-15);
        }
    }
}
