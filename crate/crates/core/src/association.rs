//! Tile-to-user association: the dual-method solver for sub-problem 1.
//!
//! The relaxed assignment problem decouples per user once a price `λ_i` is
//! attached to each tile. For a user `k`, the optimum marks the `N_k` tiles
//! with the largest score `β_{i,k}/c_k + λ_i`, where `c_k` couples the rate
//! curvature into the score and solves a scalar fixed point. Prices follow a
//! diminishing subgradient schedule on the tile-occupancy constraint, and a
//! greedy repair turns the per-user selections into a feasible matrix.

use crate::error::{Error, Result};
use crate::rates::LinkGains;
use crate::scenario::{QuotaVector, ValidatedScenario};

/// Binary I x K assignment. A tile holds at most one user by construction;
/// feasibility additionally requires every tile assigned and quotas met.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssociationMatrix {
    assignment: Vec<Option<usize>>,
    num_users: usize,
}

impl AssociationMatrix {
    /// All-unassigned matrix (used for "no reflection" baselines).
    pub fn empty(num_tiles: usize, num_users: usize) -> Self {
        Self {
            assignment: vec![None; num_tiles],
            num_users,
        }
    }

    pub fn from_assignment(assignment: Vec<Option<usize>>, num_users: usize) -> Result<Self> {
        for (tile, user) in assignment.iter().enumerate() {
            if let Some(k) = user {
                if *k >= num_users {
                    return Err(Error::IndexOutOfRange {
                        kind: "user",
                        index: *k,
                        bound: num_users,
                    });
                }
                let _ = tile;
            }
        }
        Ok(Self {
            assignment,
            num_users,
        })
    }

    /// Parse I rows of K 0/1 entries.
    pub fn from_entries(rows: &[Vec<u8>]) -> Result<Self> {
        let num_users = rows.first().map_or(0, |r| r.len());
        let mut assignment = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != num_users {
                return Err(Error::DimensionMismatch {
                    context: "association row",
                    expected: num_users,
                    actual: row.len(),
                });
            }
            let mut user = None;
            for (k, &e) in row.iter().enumerate() {
                match e {
                    0 => {}
                    1 => {
                        if user.is_some() {
                            return Err(Error::InvalidParameter {
                                field: "association",
                                reason: format!("tile {i} assigned to more than one user"),
                            });
                        }
                        user = Some(k);
                    }
                    other => {
                        return Err(Error::InvalidParameter {
                            field: "association",
                            reason: format!("entry must be 0/1, got {other}"),
                        })
                    }
                }
            }
            assignment.push(user);
        }
        Ok(Self {
            assignment,
            num_users,
        })
    }

    pub fn num_tiles(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn user_of(&self, tile: usize) -> Option<usize> {
        self.assignment[tile]
    }

    pub fn is_associated(&self, tile: usize, user: usize) -> bool {
        self.assignment[tile] == Some(user)
    }

    pub fn tiles_of(&self, user: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, u)| (*u == Some(user)).then_some(i))
            .collect()
    }

    /// Tiles held per user.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_users];
        for user in self.assignment.iter().flatten() {
            counts[*user] += 1;
        }
        counts
    }

    /// Every tile assigned and every quota met exactly.
    pub fn is_feasible(&self, quotas: &QuotaVector) -> bool {
        self.assignment.iter().all(Option::is_some) && self.counts() == quotas.0
    }

    /// Dense 0/1 entries, I rows by K columns.
    pub fn entries(&self) -> Vec<Vec<u8>> {
        self.assignment
            .iter()
            .map(|user| {
                let mut row = vec![0u8; self.num_users];
                if let Some(k) = user {
                    row[*k] = 1;
                }
                row
            })
            .collect()
    }
}

/// Raw per-user tile selections from the relaxed problem; may claim a tile
/// for several users or leave tiles unclaimed. This is what the dual
/// subgradient reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Chosen tiles per user, ascending.
    pub tiles: Vec<Vec<usize>>,
    num_tiles: usize,
}

impl Selection {
    /// Number of users claiming each tile.
    pub fn claims(&self) -> Vec<usize> {
        let mut claims = vec![0usize; self.num_tiles];
        for per_user in &self.tiles {
            for &i in per_user {
                claims[i] += 1;
            }
        }
        claims
    }
}

/// Per-tile dual prices plus the per-user curvature scalars.
#[derive(Debug, Clone)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub c: Vec<f64>,
    pub dual_iters: usize,
    pub fixedpoint_converged: bool,
}

/// Amplitude sum `Σ_{i in sel} β_{i,k} + β_k^d` for one user.
fn amplitude(gains: &LinkGains, selection: &[usize], user: usize) -> f64 {
    selection
        .iter()
        .map(|&i| gains.beta_reflect[i][user])
        .sum::<f64>()
        + gains.beta_direct[user]
}

/// Curvature scalar for a pinned selection:
/// `c_k = (ln2 / 2B) (σ² + s²) / s` with `s` the summed amplitude.
pub fn curvature_for_selection(
    gains: &LinkGains,
    selection: &[usize],
    noise_w: f64,
    bandwidth_hz: f64,
    user: usize,
) -> f64 {
    let s = amplitude(gains, selection, user);
    (std::f64::consts::LN_2 / (2.0 * bandwidth_hz)) * ((noise_w + s * s) / s)
}

/// Indices of the `quota` largest scores, ties broken toward lower index.
fn top_tiles(scores: &[f64], quota: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(quota).collect();
    chosen.sort_unstable();
    chosen
}

fn user_scores(gains: &LinkGains, lambda: &[f64], c_k: f64, user: usize) -> Vec<f64> {
    (0..gains.num_tiles())
        .map(|i| gains.beta_reflect[i][user] / c_k + lambda[i])
        .collect()
}

/// Damped fixed-point iteration for `c_k`. The map substitutes the score
/// selection at the current `c` back into the curvature formula; iteration
/// uses a 0.5 damping factor. Returns the final iterate and whether the
/// residual dropped below `eps` within `max_iter` steps.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_c(
    gains: &LinkGains,
    lambda: &[f64],
    quotas: &QuotaVector,
    noise_w: f64,
    bandwidth_hz: f64,
    user: usize,
    eps: f64,
    max_iter: usize,
    c_init: f64,
) -> Result<(f64, bool)> {
    let best_gain = (0..gains.num_tiles())
        .map(|i| gains.beta_reflect[i][user])
        .fold(gains.beta_direct[user], f64::max);
    if !(best_gain > 0.0) {
        return Err(Error::ZeroGain { user });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter {
            field: "eps_fixedpoint",
            reason: format!("must be positive, got {eps}"),
        });
    }
    let map = |c: f64| {
        let scores = user_scores(gains, lambda, c, user);
        let sel = top_tiles(&scores, quotas.get(user));
        curvature_for_selection(gains, &sel, noise_w, bandwidth_hz, user)
    };
    let mut c = if c_init > 0.0 { c_init } else { map(1.0) };
    for _ in 0..max_iter {
        let next = map(c);
        if (c - next).abs() < eps {
            return Ok((next, true));
        }
        c = 0.5 * c + 0.5 * next;
    }
    Ok((c, false))
}

/// Raw per-user selection followed by greedy conflict repair.
///
/// Repair walks all (tile, user) scores in descending order, hands each tile
/// to the first taker whose quota is open, then fills any user still short
/// with its best remaining free tiles. With `Σ N_k = I` the result is always
/// feasible.
pub fn select_association(
    gains: &LinkGains,
    c: &[f64],
    lambda: &[f64],
    quotas: &QuotaVector,
) -> Result<(Selection, AssociationMatrix)> {
    let num_tiles = gains.num_tiles();
    let num_users = gains.num_users();
    if quotas.total() != num_tiles {
        return Err(Error::InfeasibleQuota {
            required: quotas.total(),
            available: num_tiles,
        });
    }
    for (k, &ck) in c.iter().enumerate() {
        if !(ck > 0.0) {
            return Err(Error::InvalidParameter {
                field: "c",
                reason: format!("user {k}: curvature must be positive, got {ck}"),
            });
        }
    }

    let scores: Vec<Vec<f64>> = (0..num_users)
        .map(|k| user_scores(gains, lambda, c[k], k))
        .collect();

    let selection = Selection {
        tiles: (0..num_users)
            .map(|k| top_tiles(&scores[k], quotas.get(k)))
            .collect(),
        num_tiles,
    };

    // Greedy repair over all pairs, descending score; ties toward the lower
    // tile index, then the lower user index.
    let mut pairs: Vec<(usize, usize)> = (0..num_tiles)
        .flat_map(|i| (0..num_users).map(move |k| (i, k)))
        .collect();
    pairs.sort_by(|&(i1, k1), &(i2, k2)| {
        scores[k2][i2]
            .total_cmp(&scores[k1][i1])
            .then(i1.cmp(&i2))
            .then(k1.cmp(&k2))
    });
    let mut assignment: Vec<Option<usize>> = vec![None; num_tiles];
    let mut remaining: Vec<usize> = quotas.0.clone();
    for (i, k) in pairs {
        if assignment[i].is_none() && remaining[k] > 0 {
            assignment[i] = Some(k);
            remaining[k] -= 1;
        }
    }
    // With Σ N_k = I the first pass cannot leave holes, but keep the
    // fill-by-best-free pass for robustness against future quota modes.
    for k in 0..num_users {
        while remaining[k] > 0 {
            let free = (0..num_tiles)
                .filter(|&i| assignment[i].is_none())
                .max_by(|&a, &b| scores[k][a].total_cmp(&scores[k][b]).then(b.cmp(&a)));
            match free {
                Some(i) => {
                    assignment[i] = Some(k);
                    remaining[k] -= 1;
                }
                None => break,
            }
        }
    }
    let matrix = AssociationMatrix::from_assignment(assignment, num_users)?;
    debug_assert!(matrix.is_feasible(quotas));
    Ok((selection, matrix))
}

/// One diminishing-step subgradient update on the tile prices:
/// `λ_i ← λ_i − a/(1+t) · (claims_i − 1)`.
pub fn dual_update(lambda: &mut [f64], selection: &Selection, iteration: usize, step_a: f64) {
    let step = step_a / (1.0 + iteration as f64);
    for (l, claims) in lambda.iter_mut().zip(selection.claims()) {
        *l -= step * (claims as f64 - 1.0);
    }
}

/// Upper-bound sum rate of an association under the given gain table.
pub fn selection_objective(
    gains: &LinkGains,
    a: &AssociationMatrix,
    noise_w: &[f64],
    bandwidth_hz: f64,
) -> f64 {
    (0..gains.num_users())
        .map(|k| {
            let s = amplitude(gains, &a.tiles_of(k), k);
            bandwidth_hz * (1.0 + s * s / noise_w[k]).ln() / std::f64::consts::LN_2
        })
        .sum()
}

/// Full dual-method association solve.
///
/// Gains are normalized by their mean so the default price step is
/// scale-free across power levels. The loop stops once the repaired
/// association is unchanged for 5 consecutive price iterations (or the
/// iteration cap is hit) and returns the best feasible candidate seen,
/// judged by the upper-bound objective; `warm` seeds the curvature scalars
/// and the incumbent.
pub fn solve_association(
    gains: &LinkGains,
    scn: &ValidatedScenario,
    warm: Option<&AssociationMatrix>,
) -> Result<AssociationMatrix> {
    let tol = &scn.cfg.tolerances;
    let num_users = gains.num_users();
    let quotas = &scn.quotas;

    // Scale-free normalization.
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..num_users {
        total += gains.beta_direct[k];
        count += 1;
        for i in 0..gains.num_tiles() {
            total += gains.beta_reflect[i][k];
            count += 1;
        }
    }
    let scale = total / count as f64;
    if !(scale > 0.0) {
        return Err(Error::ZeroGain { user: 0 });
    }
    let g = gains.scaled(1.0 / scale);
    let noise: Vec<f64> = scn.noise_w.iter().map(|s| s / (scale * scale)).collect();
    // Prices live in per-hertz rate units: with unit bandwidth the scores
    // β/c stay O(1) next to the 0.1 price step. Per-user argmaxes are
    // invariant to this common rescaling.
    let bandwidth = 1.0;

    let mut lambda = vec![0.0; gains.num_tiles()];
    let mut c = vec![0.0; num_users];
    for k in 0..num_users {
        let init_sel = warm.map(|a| a.tiles_of(k)).unwrap_or_default();
        let s = amplitude(&g, &init_sel, k);
        c[k] = if s > 0.0 {
            curvature_for_selection(&g, &init_sel, noise[k], bandwidth, k)
        } else {
            // Zero warm amplitude: seed from the best single gain instead.
            let best = top_tiles(&user_scores(&g, &lambda, 1.0, k), 1.max(quotas.get(k)));
            curvature_for_selection(&g, &best, noise[k], bandwidth, k)
        };
    }

    let mut best: Option<(AssociationMatrix, f64)> = warm
        .filter(|a| a.is_feasible(quotas))
        .map(|a| (a.clone(), selection_objective(&g, a, &noise, bandwidth)));
    let mut last: Option<AssociationMatrix> = None;
    let mut stable = 0usize;

    for t in 0..tol.max_iters_dual {
        for k in 0..num_users {
            let (ck, _converged) = fixed_point_c(
                &g,
                &lambda,
                quotas,
                noise[k],
                bandwidth,
                k,
                tol.eps_fixedpoint,
                tol.max_iters_fixedpoint,
                c[k],
            )?;
            c[k] = ck;
        }
        let (selection, candidate) = select_association(&g, &c, &lambda, quotas)?;
        let objective = selection_objective(&g, &candidate, &noise, bandwidth);
        match &best {
            Some((_, obj)) if *obj >= objective => {}
            _ => best = Some((candidate.clone(), objective)),
        }
        if last.as_ref() == Some(&candidate) {
            stable += 1;
            if stable >= 5 {
                break;
            }
        } else {
            stable = 1;
            last = Some(candidate);
        }
        dual_update(&mut lambda, &selection, t, tol.dual_step_a);
    }

    Ok(best.expect("at least one candidate").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::LinkGains;
    use crate::scenario::ScenarioConfig;
    use approx::assert_relative_eq;

    fn gains_from(beta_reflect: Vec<Vec<f64>>, beta_direct: Vec<f64>) -> LinkGains {
        LinkGains {
            beta_reflect,
            beta_direct,
        }
    }

    #[test]
    fn association_matrix_entries_round_trip() {
        let a = AssociationMatrix::from_assignment(vec![Some(1), Some(0), None], 2).unwrap();
        let rows = a.entries();
        assert_eq!(rows, vec![vec![0, 1], vec![1, 0], vec![0, 0]]);
        let b = AssociationMatrix::from_entries(&rows).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn from_entries_rejects_double_assignment() {
        assert!(AssociationMatrix::from_entries(&[vec![1, 1]]).is_err());
        assert!(AssociationMatrix::from_entries(&[vec![2, 0]]).is_err());
    }

    #[test]
    fn curvature_pinned_selection_hand_value() {
        // σ²=1, β_d=1, no reflected contribution, B=1: c = ln2 * 2 / 2 = ln 2.
        let g = gains_from(vec![vec![0.0]], vec![1.0]);
        let c = curvature_for_selection(&g, &[], 1.0, 1.0, 0);
        assert_relative_eq!(c, std::f64::consts::LN_2, max_relative = 1e-12);
    }

    #[test]
    fn curvature_homogeneity() {
        let g = gains_from(vec![vec![0.4], vec![0.9]], vec![0.7]);
        let base = curvature_for_selection(&g, &[0, 1], 0.3, 5.0, 0);
        for s in [2.0, 17.5, 0.03] {
            let scaled = gains_from(vec![vec![0.4 * s], vec![0.9 * s]], vec![0.7 * s]);
            let c = curvature_for_selection(&scaled, &[0, 1], 0.3 * s * s, 5.0, 0);
            assert_relative_eq!(c, base * s, max_relative = 1e-12);
        }
    }

    #[test]
    fn fixed_point_pinned_matches_formula() {
        // One tile, quota 1: selection has no freedom.
        let g = gains_from(vec![vec![2.0]], vec![1.0]);
        let quotas = QuotaVector(vec![1]);
        let (c, converged) =
            fixed_point_c(&g, &[0.0], &quotas, 1.0, 1.0, 0, 1e-10, 200, 0.0).unwrap();
        assert!(converged);
        let expect = curvature_for_selection(&g, &[0], 1.0, 1.0, 0);
        assert_relative_eq!(c, expect, epsilon = 1e-8);
    }

    #[test]
    fn fixed_point_matches_bisection_oracle() {
        // K=1, I=1: c = F(c) is scalar and monotone; bisection is the oracle.
        let g = gains_from(vec![vec![3.7]], vec![0.2]);
        let quotas = QuotaVector(vec![1]);
        let (noise, bandwidth) = (2.5, 4.0);
        let f = |_c: f64| curvature_for_selection(&g, &[0], noise, bandwidth, 0);
        // F is constant here (selection pinned), so the root is F itself;
        // bisection on g(c) = c - F(c).
        let (mut lo, mut hi) = (1e-12, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let (c, converged) =
            fixed_point_c(&g, &[0.0], &quotas, noise, bandwidth, 0, 1e-9, 300, 0.0).unwrap();
        assert!(converged);
        assert_relative_eq!(c, oracle, epsilon = 1e-6);
    }

    #[test]
    fn fixed_point_zero_gain_errors() {
        let g = gains_from(vec![vec![0.0]], vec![0.0]);
        let quotas = QuotaVector(vec![1]);
        assert!(matches!(
            fixed_point_c(&g, &[0.0], &quotas, 1.0, 1.0, 0, 1e-9, 10, 0.0),
            Err(Error::ZeroGain { user: 0 })
        ));
    }

    #[test]
    fn selection_resolves_conflict_like_brute_force() {
        // Scores: user0 (5, 1), user1 (4, 3). Both want tile 0; the total
        // 5 + 3 beats 4 + 1, so tile0->user0, tile1->user1.
        let g = gains_from(vec![vec![5.0, 4.0], vec![1.0, 3.0]], vec![0.0, 0.0]);
        let quotas = QuotaVector(vec![1, 1]);
        let (sel, a) = select_association(&g, &[1.0, 1.0], &[0.0, 0.0], &quotas).unwrap();
        assert_eq!(sel.tiles, vec![vec![0], vec![0]]);
        assert_eq!(a.user_of(0), Some(0));
        assert_eq!(a.user_of(1), Some(1));
    }

    #[test]
    fn selection_forced_single_user() {
        let g = gains_from(vec![vec![0.3], vec![0.1], vec![0.9]], vec![0.5]);
        let quotas = QuotaVector(vec![3]);
        let (_, a) = select_association(&g, &[1.0], &[0.0; 3], &quotas).unwrap();
        assert_eq!(a.tiles_of(0), vec![0, 1, 2]);
    }

    #[test]
    fn selection_tie_rule_is_lowest_index_and_deterministic() {
        let g = gains_from(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![0.0, 0.0]);
        let quotas = QuotaVector(vec![1, 1]);
        let first = select_association(&g, &[1.0, 1.0], &[0.0, 0.0], &quotas).unwrap();
        assert_eq!(first.1.user_of(0), Some(0));
        assert_eq!(first.1.user_of(1), Some(1));
        for _ in 0..5 {
            let again = select_association(&g, &[1.0, 1.0], &[0.0, 0.0], &quotas).unwrap();
            assert_eq!(again, first);
        }
    }

    #[test]
    fn selection_invariant_under_constant_lambda_shift() {
        let g = gains_from(
            vec![vec![0.9, 0.2], vec![0.4, 0.8], vec![0.3, 0.35]],
            vec![0.1, 0.2],
        );
        let quotas = QuotaVector(vec![2, 1]);
        let lambda = [0.3, -0.2, 0.05];
        let (sel_a, m_a) = select_association(&g, &[0.7, 1.3], &lambda, &quotas).unwrap();
        let shifted: Vec<f64> = lambda.iter().map(|l| l + 123.456).collect();
        let (sel_b, m_b) = select_association(&g, &[0.7, 1.3], &shifted, &quotas).unwrap();
        assert_eq!(sel_a, sel_b);
        assert_eq!(m_a, m_b);
    }

    #[test]
    fn dual_update_signs_and_schedule() {
        let sel = Selection {
            tiles: vec![vec![0], vec![0]],
            num_tiles: 2,
        };
        // Tile 0 claimed twice -> price drops by a/(1+t); tile 1 unclaimed
        // -> price rises by the same step.
        let mut lambda = vec![0.0, 0.0];
        dual_update(&mut lambda, &sel, 0, 0.1);
        assert_relative_eq!(lambda[0], -0.1, max_relative = 1e-12);
        assert_relative_eq!(lambda[1], 0.1, max_relative = 1e-12);

        // Satisfied constraint leaves prices unchanged.
        let ok = Selection {
            tiles: vec![vec![0], vec![1]],
            num_tiles: 2,
        };
        let mut lambda = vec![0.4, -0.4];
        dual_update(&mut lambda, &ok, 3, 0.1);
        assert_relative_eq!(lambda[0], 0.4, max_relative = 1e-12);

        // Step halves from t=1 to t=3.
        let mut l1 = vec![0.0, 0.0];
        let mut l3 = vec![0.0, 0.0];
        dual_update(&mut l1, &sel, 1, 0.1);
        dual_update(&mut l3, &sel, 3, 0.1);
        assert_relative_eq!(l3[0], l1[0] / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn solve_association_forced_and_feasible() {
        let scn = ValidatedScenario::new(ScenarioConfig::with_size(1, 1)).unwrap();
        let g = gains_from(vec![vec![0.5]], vec![0.2]);
        let a = solve_association(&g, &scn, None).unwrap();
        assert_eq!(a.user_of(0), Some(0));
        assert!(a.is_feasible(&scn.quotas));
    }

    #[test]
    fn solve_association_conflict_free_tops_returned_exactly() {
        // Disjoint per-user maxima covering all tiles: the returned matrix
        // must equal the raw selections.
        let scn = ValidatedScenario::new(ScenarioConfig::with_size(2, 2)).unwrap();
        let g = gains_from(vec![vec![0.9, 0.1], vec![0.2, 0.8]], vec![0.3, 0.3]);
        let a = solve_association(&g, &scn, None).unwrap();
        assert_eq!(a.user_of(0), Some(0));
        assert_eq!(a.user_of(1), Some(1));
    }

    #[test]
    fn solve_association_greedy_trap_resolved_by_prices() {
        // Greedy alone would give user0 tile0 (0.50 vs 0.49) and leave user1
        // with 0.0; prices must steer user0 to tile1 instead.
        let scn = ValidatedScenario::new(ScenarioConfig::with_size(2, 2)).unwrap();
        let g = gains_from(vec![vec![5.0e-7, 4.9e-7], vec![4.9e-7, 1.0e-9]], vec![1e-9, 1e-9]);
        let a = solve_association(&g, &scn, None).unwrap();
        assert_eq!(a.user_of(0), Some(1), "user0 should yield tile0");
        assert_eq!(a.user_of(1), Some(0));
    }
}
