//! The three-step alternating driver, the exhaustive oracle, and the seven
//! benchmark cases.
//!
//! Each outer iteration solves association (P1) at the current beams and
//! phases, re-points the beams (P2), then re-aligns the phases (P3). The
//! beams/phases pair alone is provably non-decreasing; an association swap
//! is accepted only if the end-of-iteration sum rate does not drop, so the
//! recorded trace is monotone and the returned state is always the best
//! iterate.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::association::{solve_association, AssociationMatrix};
use crate::channel::{draw_channels, subseed, ChannelSet};
use crate::error::{Error, Result};
use crate::phasing::{mrt_beamform, optimal_phases, BeamformingSet, ReflectionSet};
use crate::rates::{exclusive_pair_gains, link_gains, rate_report, upper_bound_rate, RateReport};
use crate::scenario::{QuotaVector, ValidatedScenario};

const TAG_INIT_PHASES: u64 = 0xA1;
const TAG_RANDOM_ASSOC: u64 = 0xB2;
const TAG_RANDOM_BEAM: u64 = 0xC3;
const TAG_RANDOM_PHASES: u64 = 0xD4;

/// Converged joint state plus the per-iteration sum-rate trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub association: AssociationMatrix,
    pub beams: BeamformingSet,
    pub phases: ReflectionSet,
    /// Upper-bound sum rate after each full iteration; non-decreasing.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sum_upper(
    gains: &crate::rates::LinkGains,
    a: &AssociationMatrix,
    scn: &ValidatedScenario,
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..scn.num_users() {
        total += upper_bound_rate(gains, a, scn.noise_w[k], scn.cfg.bandwidth_hz, k)?;
    }
    Ok(total)
}

/// Full alternating solve: random initial phases (seeded from the channel
/// realization), direct-path beams, then (P1, P2, P3) until the relative
/// sum-rate change falls below `eps_altern`. P2 and P3 are closed forms
/// coupled through the composite channel, so each outer iteration runs them
/// to their joint fixed point; the outer count then tracks association
/// updates.
pub fn alternate(ch: &ChannelSet, scn: &ValidatedScenario) -> Result<Solution> {
    let tol = &scn.cfg.tolerances;
    let empty = AssociationMatrix::empty(scn.num_tiles(), scn.num_users());

    let mut phases = ReflectionSet::random(scn, subseed(ch.seed, TAG_INIT_PHASES));
    let mut beams = mrt_beamform(ch, &empty, &phases, scn.cfg.power_w)?;
    let mut assoc = empty;

    // The assignment ranks on the channel-only exclusive-pair table (what
    // each tile delivers once re-aligned and re-beamformed for a user), so
    // scores never understate tiles currently serving someone else. The
    // table is constant per realization; compute it once.
    let pair_table = exclusive_pair_gains(ch, scn);

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;

    for _ in 0..tol.max_iters_altern {
        let warm = assoc.is_feasible(&scn.quotas).then_some(&assoc);
        let cand_assoc = solve_association(&pair_table, scn, warm)?;
        let (cand_beams, cand_phases, _) =
            optimize_beams_phases(ch, scn, &cand_assoc, &beams, &phases)?;
        let cand_gains = link_gains(ch, &cand_assoc, &cand_phases, &cand_beams)?;
        let sum = sum_upper(&cand_gains, &cand_assoc, scn)?;

        if let Some(&prev) = trace.last() {
            if sum < prev * (1.0 - 1e-12) {
                // New association scored worse end-to-end; keep the incumbent.
                converged = true;
                break;
            }
        }
        let improved = trace.last().map_or(true, |&prev| {
            (sum - prev).abs() > tol.eps_altern * sum.abs()
        });
        assoc = cand_assoc;
        beams = cand_beams;
        phases = cand_phases;
        trace.push(sum);
        if !improved {
            converged = true;
            break;
        }
    }

    Ok(Solution {
        association: assoc,
        beams,
        phases,
        iterations: trace.len(),
        converged,
        trace,
    })
}

/// Beams/phases alternation for a fixed association, starting from the given
/// beams: align phases, record the (tight) sum rate, then re-point the
/// beams. Each half-step only raises the rate, so the trace is monotone and
/// the returned state is exactly phase-aligned.
pub fn optimize_beams_phases(
    ch: &ChannelSet,
    scn: &ValidatedScenario,
    a: &AssociationMatrix,
    init_beams: &BeamformingSet,
    init_phases: &ReflectionSet,
) -> Result<(BeamformingSet, ReflectionSet, Vec<f64>)> {
    let tol = &scn.cfg.tolerances;
    let mut phases = init_phases.clone();
    let mut beams = init_beams.clone();
    let mut trace: Vec<f64> = Vec::new();
    loop {
        optimal_phases(ch, a, &beams, &mut phases)?;
        let gains = link_gains(ch, a, &phases, &beams)?;
        let sum = sum_upper(&gains, a, scn)?;
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| (sum - prev).abs() <= tol.eps_altern * sum.abs());
        trace.push(sum);
        if done || trace.len() >= tol.max_iters_altern {
            break;
        }
        beams = mrt_beamform(ch, a, &phases, scn.cfg.power_w)?;
    }
    Ok((beams, phases, trace))
}

/// Every association satisfying the occupancy and quota constraints, in
/// lexicographic tile order.
pub fn enumerate_feasible_associations(
    quotas: &QuotaVector,
    num_users: usize,
) -> Vec<AssociationMatrix> {
    let num_tiles = quotas.total();
    let mut out = Vec::new();
    let mut remaining = quotas.0.clone();
    let mut assignment = vec![None; num_tiles];
    fn recurse(
        tile: usize,
        num_tiles: usize,
        num_users: usize,
        remaining: &mut [usize],
        assignment: &mut [Option<usize>],
        out: &mut Vec<AssociationMatrix>,
    ) {
        if tile == num_tiles {
            out.push(
                AssociationMatrix::from_assignment(assignment.to_vec(), num_users)
                    .expect("valid by construction"),
            );
            return;
        }
        for user in 0..num_users {
            if remaining[user] > 0 {
                remaining[user] -= 1;
                assignment[tile] = Some(user);
                recurse(tile + 1, num_tiles, num_users, remaining, assignment, out);
                assignment[tile] = None;
                remaining[user] += 1;
            }
        }
    }
    recurse(0, num_tiles, num_users, &mut remaining, &mut assignment, &mut out);
    out
}

/// Brute-force oracle: beams/phases optimized to convergence for every
/// feasible association, best final sum rate wins. Refuses when `K^I`
/// exceeds the configured cap.
pub fn exhaustive_search(ch: &ChannelSet, scn: &ValidatedScenario) -> Result<Solution> {
    let combos = (scn.num_users() as f64).powi(scn.num_tiles() as i32);
    let cap = scn.cfg.tolerances.exhaustive_cap;
    if combos > cap {
        return Err(Error::ExhaustiveCapExceeded {
            combinations: combos,
            cap,
        });
    }
    let init_phases = ReflectionSet::random(scn, subseed(ch.seed, TAG_INIT_PHASES));
    let mut best: Option<Solution> = None;
    for a in enumerate_feasible_associations(&scn.quotas, scn.num_users()) {
        let init_beams = mrt_beamform(ch, &a, &init_phases, scn.cfg.power_w)?;
        let (beams, phases, trace) = optimize_beams_phases(ch, scn, &a, &init_beams, &init_phases)?;
        let sum = *trace.last().expect("non-empty trace");
        if best.as_ref().is_none_or(|b| sum > *b.trace.last().unwrap()) {
            best = Some(Solution {
                association: a,
                beams,
                phases,
                iterations: trace.len(),
                converged: true,
                trace,
            });
        }
    }
    best.ok_or(Error::InfeasibleQuota {
        required: scn.quotas.total(),
        available: scn.num_tiles(),
    })
}

/// Benchmark cases from the experiment section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseId {
    /// I: exhaustive association search.
    Exhaustive,
    /// II: the alternating algorithm.
    Alternating,
    /// III: random association, optimized beams and phases.
    RandomAssociation,
    /// IV: random association and beams, optimal phases.
    OptimalReflectionOnly,
    /// V: random association and phases, matched beams.
    RandomReflection,
    /// VI: no reflecting surface at all.
    NoSurface,
    /// VII: the alternating solution scored with scattering interference.
    WithInterference,
}

impl CaseId {
    pub const ALL: [CaseId; 7] = [
        CaseId::Exhaustive,
        CaseId::Alternating,
        CaseId::RandomAssociation,
        CaseId::OptimalReflectionOnly,
        CaseId::RandomReflection,
        CaseId::NoSurface,
        CaseId::WithInterference,
    ];

    pub fn roman(&self) -> &'static str {
        match self {
            CaseId::Exhaustive => "I",
            CaseId::Alternating => "II",
            CaseId::RandomAssociation => "III",
            CaseId::OptimalReflectionOnly => "IV",
            CaseId::RandomReflection => "V",
            CaseId::NoSurface => "VI",
            CaseId::WithInterference => "VII",
        }
    }

    /// The headline metric: the interference-aware sum for case VII, the
    /// plain achievable sum otherwise.
    pub fn headline(&self, report: &RateReport) -> f64 {
        match self {
            CaseId::WithInterference => report.sum_interference,
            _ => report.sum_rate,
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.roman())
    }
}

impl FromStr for CaseId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_uppercase().as_str() {
            "I" | "1" => Ok(CaseId::Exhaustive),
            "II" | "2" => Ok(CaseId::Alternating),
            "III" | "3" => Ok(CaseId::RandomAssociation),
            "IV" | "4" => Ok(CaseId::OptimalReflectionOnly),
            "V" | "5" => Ok(CaseId::RandomReflection),
            "VI" | "6" => Ok(CaseId::NoSurface),
            "VII" | "7" => Ok(CaseId::WithInterference),
            other => Err(format!("unknown case `{other}` (expected I..VII)")),
        }
    }
}

/// Uniformly random feasible association via a seeded tile shuffle.
pub fn random_feasible_association(
    quotas: &QuotaVector,
    num_users: usize,
    rng: &mut ChaCha8Rng,
) -> AssociationMatrix {
    let num_tiles = quotas.total();
    let mut tiles: Vec<usize> = (0..num_tiles).collect();
    tiles.shuffle(rng);
    let mut assignment = vec![None; num_tiles];
    let mut cursor = 0;
    for (user, &quota) in quotas.0.iter().enumerate() {
        for _ in 0..quota {
            assignment[tiles[cursor]] = Some(user);
            cursor += 1;
        }
    }
    AssociationMatrix::from_assignment(assignment, num_users).expect("valid by construction")
}

/// Isotropic random beams scaled to `√P_t`.
fn random_beams(ch: &ChannelSet, power_w: f64, rng: &mut ChaCha8Rng) -> BeamformingSet {
    use rand::Rng;
    let m = ch.num_antennas();
    let w = (0..ch.num_users())
        .map(|_| {
            let v = DVector::from_fn(m, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let norm = v.norm();
            if norm == 0.0 {
                DVector::zeros(m)
            } else {
                v * Complex64::new(power_w.sqrt() / norm, 0.0)
            }
        })
        .collect();
    BeamformingSet { w }
}

/// Outcome of one benchmark case on one realization.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub report: RateReport,
    pub iterations: usize,
}

/// Run one benchmark case on a shared channel realization. Randomized cases
/// derive their draws from the channel seed and the case, so repeated runs
/// are identical.
pub fn run_case(ch: &ChannelSet, scn: &ValidatedScenario, case: CaseId) -> Result<CaseOutcome> {
    let power = scn.cfg.power_w;
    match case {
        CaseId::Exhaustive => {
            let sol = exhaustive_search(ch, scn)?;
            Ok(CaseOutcome {
                iterations: sol.iterations,
                report: rate_report(ch, &sol, scn)?,
            })
        }
        CaseId::Alternating | CaseId::WithInterference => {
            let sol = alternate(ch, scn)?;
            Ok(CaseOutcome {
                iterations: sol.iterations,
                report: rate_report(ch, &sol, scn)?,
            })
        }
        CaseId::RandomAssociation => {
            let mut rng = ChaCha8Rng::seed_from_u64(subseed(ch.seed, TAG_RANDOM_ASSOC));
            let a = random_feasible_association(&scn.quotas, scn.num_users(), &mut rng);
            let init = ReflectionSet::random(scn, subseed(ch.seed, TAG_INIT_PHASES));
            let init_beams = mrt_beamform(ch, &a, &init, power)?;
            let (beams, phases, trace) = optimize_beams_phases(ch, scn, &a, &init_beams, &init)?;
            let sol = Solution {
                association: a,
                beams,
                phases,
                iterations: trace.len(),
                converged: true,
                trace,
            };
            Ok(CaseOutcome {
                iterations: sol.iterations,
                report: rate_report(ch, &sol, scn)?,
            })
        }
        CaseId::OptimalReflectionOnly => {
            let mut rng = ChaCha8Rng::seed_from_u64(subseed(ch.seed, TAG_RANDOM_BEAM));
            let a = random_feasible_association(&scn.quotas, scn.num_users(), &mut rng);
            let beams = random_beams(ch, power, &mut rng);
            let mut phases = ReflectionSet::random(scn, subseed(ch.seed, TAG_INIT_PHASES));
            optimal_phases(ch, &a, &beams, &mut phases)?;
            let sol = Solution {
                association: a,
                beams,
                phases,
                iterations: 1,
                converged: true,
                trace: Vec::new(),
            };
            Ok(CaseOutcome {
                iterations: 1,
                report: rate_report(ch, &sol, scn)?,
            })
        }
        CaseId::RandomReflection => {
            let mut rng = ChaCha8Rng::seed_from_u64(subseed(ch.seed, TAG_RANDOM_PHASES));
            let a = random_feasible_association(&scn.quotas, scn.num_users(), &mut rng);
            let phases = ReflectionSet::random(scn, subseed(ch.seed, TAG_RANDOM_PHASES ^ 0xF0));
            let beams = mrt_beamform(ch, &a, &phases, power)?;
            let sol = Solution {
                association: a,
                beams,
                phases,
                iterations: 1,
                converged: true,
                trace: Vec::new(),
            };
            Ok(CaseOutcome {
                iterations: 1,
                report: rate_report(ch, &sol, scn)?,
            })
        }
        CaseId::NoSurface => {
            let a = AssociationMatrix::empty(scn.num_tiles(), scn.num_users());
            let phases = ReflectionSet::zeros(scn);
            let beams = mrt_beamform(ch, &a, &phases, power)?;
            let sol = Solution {
                association: a,
                beams,
                phases,
                iterations: 1,
                converged: true,
                trace: Vec::new(),
            };
            Ok(CaseOutcome {
                iterations: 1,
                report: rate_report(ch, &sol, scn)?,
            })
        }
    }
}

/// One case on one realization, flattened for CSV.
#[derive(Debug, Clone)]
pub struct CaseRecord {
    pub case: CaseId,
    pub realization: usize,
    pub seed: u64,
    pub sum_rate: f64,
    pub sum_upper: f64,
    pub sum_interference: f64,
    pub iterations: usize,
}

/// Headline mean and its standard error for one case.
#[derive(Debug, Clone)]
pub struct CaseSummary {
    pub case: CaseId,
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct MonteCarlo {
    pub records: Vec<CaseRecord>,
    pub summaries: Vec<CaseSummary>,
}

impl MonteCarlo {
    pub fn summary(&self, case: CaseId) -> Option<&CaseSummary> {
        self.summaries.iter().find(|s| s.case == case)
    }
}

pub fn seed_list(base: u64, n: usize) -> Vec<u64> {
    (0..n).map(|r| subseed(base, 0x5EED ^ r as u64)).collect()
}

/// Monte-Carlo sweep: every case sees the same channel per realization.
/// Realizations run in parallel; records and reductions keep realization
/// order, so results are deterministic for a given seed list.
pub fn monte_carlo(
    scn: &ValidatedScenario,
    cases: &[CaseId],
    seeds: &[u64],
) -> Result<MonteCarlo> {
    let per_realization: Vec<Vec<CaseRecord>> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| {
            let ch = draw_channels(scn, seed);
            cases
                .iter()
                .map(|&case| {
                    let outcome = run_case(&ch, scn, case)?;
                    Ok(CaseRecord {
                        case,
                        realization: r,
                        seed,
                        sum_rate: outcome.report.sum_rate,
                        sum_upper: outcome.report.sum_upper,
                        sum_interference: outcome.report.sum_interference,
                        iterations: outcome.iterations,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let records: Vec<CaseRecord> = per_realization.into_iter().flatten().collect();
    let summaries = cases
        .iter()
        .map(|&case| {
            let values: Vec<f64> = records
                .iter()
                .filter(|rec| rec.case == case)
                .map(|rec| match case {
                    CaseId::WithInterference => rec.sum_interference,
                    _ => rec.sum_rate,
                })
                .collect();
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n.max(1) as f64;
            let std_error = if n > 1 {
                let var =
                    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            CaseSummary {
                case,
                mean,
                std_error,
                n,
            }
        })
        .collect();

    Ok(MonteCarlo { records, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn scn(users: usize, tiles: usize) -> ValidatedScenario {
        let mut cfg = ScenarioConfig::with_size(users, tiles);
        cfg.units_x = 4;
        cfg.units_y = 4;
        cfg.unit_spacing_x = cfg.tile_len_x / 4.0;
        cfg.unit_spacing_y = cfg.tile_len_y / 4.0;
        ValidatedScenario::new(cfg).unwrap()
    }

    #[test]
    fn forced_single_pair_converges() {
        let scn = scn(1, 1);
        let ch = draw_channels(&scn, 11);
        let sol = alternate(&ch, &scn).unwrap();
        assert_eq!(sol.association.user_of(0), Some(0));
        assert!(sol.converged);
        for w in sol.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn trace_monotone_and_final_not_below_first() {
        let scn = scn(2, 2);
        for seed in 0..25u64 {
            let ch = draw_channels(&scn, seed);
            let sol = alternate(&ch, &scn).unwrap();
            assert!(sol.association.is_feasible(&scn.quotas), "seed {seed}");
            for w in sol.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 * w[0].abs(), "seed {seed}: dip in trace");
            }
            assert!(sol.trace.last().unwrap() >= sol.trace.first().unwrap());
        }
    }

    #[test]
    fn deterministic_given_scenario_and_seed() {
        let scn = scn(2, 2);
        let ch = draw_channels(&scn, 77);
        let a = alternate(&ch, &scn).unwrap();
        let b = alternate(&ch, &scn).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(
            enumerate_feasible_associations(&QuotaVector(vec![1, 1]), 2).len(),
            2
        );
        assert_eq!(
            enumerate_feasible_associations(&QuotaVector(vec![1, 1, 1]), 3).len(),
            6
        );
        // Quotas [2, 1]: choose which 2 of 3 tiles go to user 0 -> 3 ways.
        assert_eq!(
            enumerate_feasible_associations(&QuotaVector(vec![2, 1]), 2).len(),
            3
        );
    }

    #[test]
    fn exhaustive_matches_alternate_for_single_user() {
        let scn = scn(1, 1);
        let ch = draw_channels(&scn, 3);
        let ex = exhaustive_search(&ch, &scn).unwrap();
        let alt = alternate(&ch, &scn).unwrap();
        let rel = (ex.trace.last().unwrap() - alt.trace.last().unwrap()).abs()
            / ex.trace.last().unwrap();
        assert!(rel < 1e-9, "single-user oracle differs: rel {rel}");
    }

    #[test]
    fn exhaustive_dominates_alternate() {
        let scn = scn(2, 2);
        for seed in 30..45u64 {
            let ch = draw_channels(&scn, seed);
            let ex = exhaustive_search(&ch, &scn).unwrap();
            let alt = alternate(&ch, &scn).unwrap();
            assert!(
                ex.trace.last().unwrap() >= &(alt.trace.last().unwrap() * (1.0 - 1e-9)),
                "seed {seed}: oracle below alternate"
            );
        }
    }

    #[test]
    fn exhaustive_cap_refuses() {
        let mut cfg = ScenarioConfig::with_size(2, 2);
        cfg.units_x = 4;
        cfg.units_y = 4;
        cfg.unit_spacing_x = cfg.tile_len_x / 4.0;
        cfg.unit_spacing_y = cfg.tile_len_y / 4.0;
        cfg.tolerances.exhaustive_cap = 3.0;
        let scn = ValidatedScenario::new(cfg).unwrap();
        let ch = draw_channels(&scn, 0);
        assert!(matches!(
            exhaustive_search(&ch, &scn),
            Err(Error::ExhaustiveCapExceeded { .. })
        ));
    }

    #[test]
    fn case_six_ignores_surface_state() {
        let scn = scn(2, 2);
        let ch = draw_channels(&scn, 5);
        let out = run_case(&ch, &scn, CaseId::NoSurface).unwrap();
        // Direct-only: upper equals rate (single coherent term).
        for k in 0..2 {
            let d = (out.report.rate[k] - out.report.rate_upper[k]).abs();
            assert!(d <= 1e-9 * out.report.rate[k].max(1.0));
        }
    }

    #[test]
    fn case_seven_never_exceeds_case_two() {
        let scn = scn(2, 2);
        for seed in 100..110u64 {
            let ch = draw_channels(&scn, seed);
            let ii = run_case(&ch, &scn, CaseId::Alternating).unwrap();
            let vii = run_case(&ch, &scn, CaseId::WithInterference).unwrap();
            assert!(vii.report.sum_interference <= ii.report.sum_rate * (1.0 + 1e-12));
        }
    }

    #[test]
    fn case_parsing_round_trip() {
        for case in CaseId::ALL {
            assert_eq!(case.roman().parse::<CaseId>().unwrap(), case);
        }
        assert!("VIII".parse::<CaseId>().is_err());
    }

    #[test]
    fn monte_carlo_single_realization_matches_run_case() {
        let scn = scn(2, 2);
        let seeds = [123u64];
        let mc = monte_carlo(&scn, &[CaseId::Alternating, CaseId::NoSurface], &seeds).unwrap();
        let ch = draw_channels(&scn, 123);
        let direct = run_case(&ch, &scn, CaseId::Alternating).unwrap();
        assert_eq!(mc.records[0].sum_rate, direct.report.sum_rate);
        assert_eq!(mc.summary(CaseId::Alternating).unwrap().n, 1);
        assert_eq!(
            mc.summary(CaseId::Alternating).unwrap().mean,
            direct.report.sum_rate
        );
    }

    #[test]
    fn monte_carlo_deterministic_and_self_consistent() {
        let scn = scn(2, 2);
        let seeds = seed_list(9, 24);
        let a = monte_carlo(&scn, &[CaseId::Alternating], &seeds).unwrap();
        let b = monte_carlo(&scn, &[CaseId::Alternating], &seeds).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.sum_rate, y.sum_rate);
        }
        // Doubling n keeps the mean within 3 standard errors.
        let wide = monte_carlo(&scn, &[CaseId::Alternating], &seed_list(9, 48)).unwrap();
        let (m1, se1) = {
            let s = a.summary(CaseId::Alternating).unwrap();
            (s.mean, s.std_error)
        };
        let m2 = wide.summary(CaseId::Alternating).unwrap().mean;
        assert!(
            (m1 - m2).abs() <= 3.0 * se1.max(1e-9),
            "means diverged: {m1} vs {m2} (se {se1})"
        );
    }
}
