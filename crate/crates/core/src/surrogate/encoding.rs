//! Integer encoding of association matrices and the rounding decoder.
//!
//! Each tile's one-hot user column maps to the integer `Σ_k a[i][k] 2^(k-1)`,
//! so a feasible matrix becomes a length-I vector of powers of two in
//! `[1, 2^(K-1)]`. The decoder rounds a real-valued prediction to the nearest
//! integer, then projects onto the nearest representable code (ties toward
//! the smaller exponent).

use crate::association::AssociationMatrix;
use crate::error::{Error, Result};
use crate::scenario::QuotaVector;

/// Encode a fully assigned matrix as per-tile integer codes.
pub fn encode_association(a: &AssociationMatrix) -> Result<Vec<u32>> {
    (0..a.num_tiles())
        .map(|tile| match a.user_of(tile) {
            Some(user) => Ok(1u32 << user),
            None => Err(Error::UnassociatedTile { tile }),
        })
        .collect()
}

/// Exact decode of integer codes (all entries must be powers of two).
pub fn decode_codes(codes: &[u32], num_users: usize) -> Result<AssociationMatrix> {
    let assignment = codes
        .iter()
        .map(|&c| {
            if c.is_power_of_two() && (c.trailing_zeros() as usize) < num_users {
                Ok(Some(c.trailing_zeros() as usize))
            } else {
                Err(Error::MalformedFile {
                    what: "association code",
                    reason: format!("{c} is not a valid one-hot code for K={num_users}"),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    AssociationMatrix::from_assignment(assignment, num_users)
}

/// Round one real-valued output to a user index: nearest integer first, then
/// nearest power of two in `[1, 2^(K-1)]`, ties toward the lower exponent.
fn round_to_user(value: f64, num_users: usize) -> usize {
    let rounded = value.round();
    let mut best_user = 0usize;
    let mut best_dist = f64::INFINITY;
    for user in 0..num_users {
        let code = (1u64 << user) as f64;
        let dist = (rounded - code).abs();
        if dist < best_dist {
            best_dist = dist;
            best_user = user;
        }
    }
    best_user
}

/// Decode raw model outputs (integer-code space). Always yields a per-tile
/// valid matrix; quota feasibility is guaranteed only with `repair` on,
/// which reassigns the least-confident tiles of over-quota users.
pub fn decode_output(
    outputs: &[f64],
    quotas: &QuotaVector,
    num_users: usize,
    repair: bool,
) -> AssociationMatrix {
    let mut assignment: Vec<Option<usize>> = outputs
        .iter()
        .map(|&y| Some(round_to_user(y, num_users)))
        .collect();

    if repair {
        let mut counts = vec![0usize; num_users];
        for user in assignment.iter().flatten() {
            counts[*user] += 1;
        }
        loop {
            let Some(over) = (0..num_users).find(|&u| counts[u] > quotas.get(u)) else {
                break;
            };
            // Least confident tile of the over-quota user: largest gap
            // between the raw output and the user's code.
            let code = (1u64 << over) as f64;
            let tile = (0..assignment.len())
                .filter(|&i| assignment[i] == Some(over))
                .max_by(|&a, &b| {
                    (outputs[a] - code)
                        .abs()
                        .total_cmp(&(outputs[b] - code).abs())
                        .then(b.cmp(&a))
                })
                .expect("over-quota user owns a tile");
            let recipient = (0..num_users)
                .filter(|&u| counts[u] < quotas.get(u))
                .min_by(|&a, &b| {
                    let da = (outputs[tile] - (1u64 << a) as f64).abs();
                    let db = (outputs[tile] - (1u64 << b) as f64).abs();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("quota sums match tile count");
            assignment[tile] = Some(recipient);
            counts[over] -= 1;
            counts[recipient] += 1;
        }
    }

    AssociationMatrix::from_assignment(assignment, num_users).expect("indices validated")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alternating::enumerate_feasible_associations;

    #[test]
    fn encode_hand_values() {
        let a = AssociationMatrix::from_assignment(vec![Some(0), Some(1)], 2).unwrap();
        assert_eq!(encode_association(&a).unwrap(), vec![1, 2]);
        let b = AssociationMatrix::from_assignment(vec![Some(2)], 4).unwrap();
        assert_eq!(encode_association(&b).unwrap(), vec![4]);
        let partial = AssociationMatrix::from_assignment(vec![Some(0), None], 2).unwrap();
        assert!(encode_association(&partial).is_err());
    }

    #[test]
    fn round_trip_identity_over_all_feasible_small_matrices() {
        for k in 1..=4usize {
            for i in k..=4usize {
                // Quotas: 1 each plus round-robin surplus, mirroring the
                // scenario derivation.
                let mut q = vec![1usize; k];
                let mut surplus = i - k;
                let mut idx = 0;
                while surplus > 0 {
                    q[idx % k] += 1;
                    surplus -= 1;
                    idx += 1;
                }
                let quotas = QuotaVector(q);
                for a in enumerate_feasible_associations(&quotas, k) {
                    let codes = encode_association(&a).unwrap();
                    assert!(codes.iter().all(|c| c.is_power_of_two()));
                    assert!(codes.iter().all(|&c| c >= 1 && c <= 1 << (k - 1)));
                    let back = decode_codes(&codes, k).unwrap();
                    assert_eq!(a, back, "round trip failed at K={k} I={i}");
                }
            }
        }
    }

    #[test]
    fn decode_rounds_then_projects() {
        let quotas = QuotaVector(vec![1, 1]);
        let a = decode_output(&[1.1, 1.9], &quotas, 2, false);
        assert_eq!(a.user_of(0), Some(0));
        assert_eq!(a.user_of(1), Some(1));

        // 3.0 with K=2: candidates {1, 2}, distances {2, 1} -> code 2.
        let b = decode_output(&[3.0], &QuotaVector(vec![1]), 2, false);
        assert_eq!(b.user_of(0), Some(1));

        // Tie between codes 2 and 4 at rounded 3 -> lower exponent wins.
        let c = decode_output(&[3.2], &QuotaVector(vec![1]), 3, false);
        assert_eq!(c.user_of(0), Some(1));
    }

    #[test]
    fn decode_exact_codes_is_identity() {
        let quotas = QuotaVector(vec![2, 2]);
        let y = [2.0, 1.0, 2.0, 1.0];
        let a = decode_output(&y, &quotas, 2, false);
        assert_eq!(encode_association(&a).unwrap(), vec![2, 1, 2, 1]);
    }

    #[test]
    fn repair_enforces_quotas_moving_least_confident() {
        let quotas = QuotaVector(vec![1, 1]);
        // Both tiles decode to user 0, but tile 1 is further from code 1.
        let a = decode_output(&[1.0, 1.4], &quotas, 2, true);
        assert_eq!(a.user_of(0), Some(0));
        assert_eq!(a.user_of(1), Some(1));
        assert!(a.is_feasible(&quotas));
    }
}
