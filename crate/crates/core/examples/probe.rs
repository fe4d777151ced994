//! Scratch probe for tuning acceptance scenarios. Not part of the deliverable.

use std::time::Instant;

use irsim_core::*;

fn case_means(scn: &ValidatedScenario, cases: &[CaseId], n: usize, base: u64) -> Vec<(CaseId, f64)> {
    let seeds = seed_list(base, n);
    let mc = monte_carlo(scn, cases, &seeds).unwrap();
    cases
        .iter()
        .map(|&c| (c, mc.summary(c).unwrap().mean))
        .collect()
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();

    if which.is_empty() || which == "speed" {
        // Speed of alternate at Table-1 defaults.
        let scn = ValidatedScenario::new(ScenarioConfig::table_default()).unwrap();
        let t0 = Instant::now();
        let mut iters = 0;
        for seed in 0..50u64 {
            let ch = draw_channels(&scn, seed);
            let sol = alternate(&ch, &scn).unwrap();
            iters += sol.iterations;
            assert!(sol.converged);
        }
        println!(
            "alternate: 50 runs in {:.2}s, mean iters {:.2}",
            t0.elapsed().as_secs_f64(),
            iters as f64 / 50.0
        );
        let mut hist = std::collections::BTreeMap::new();
        for seed in 0..300u64 {
            let ch = draw_channels(&scn, seed);
            let sol = alternate(&ch, &scn).unwrap();
            *hist.entry(sol.iterations).or_insert(0usize) += 1;
            if sol.iterations > 8 {
                let t: Vec<String> = sol.trace.iter().map(|v| format!("{:.6e}", v)).collect();
                if seed < 60 { println!("seed {seed}: trace {t:?}"); }
            }
        }
        println!("iteration histogram over 300 seeds: {hist:?}");
        let t0 = Instant::now();
        for seed in 0..10u64 {
            let ch = draw_channels(&scn, seed);
            exhaustive_search(&ch, &scn).unwrap();
        }
        println!("exhaustive K=4 I=4: 10 runs in {:.2}s", t0.elapsed().as_secs_f64());
    }

    if which.is_empty() || which == "ordering" {
        // Criterion-4 candidate: spread tiles/users for association contrast.
        for lam_dd in [(0.05f64, 565.0f64), (0.05, 800.0), (0.1, 1131.0)] {
            let (lambda, dd) = lam_dd;
            let scn = ordering_scenario(lambda, dd, 40.0);
            let cases = [
                CaseId::Exhaustive,
                CaseId::Alternating,
                CaseId::RandomAssociation,
                CaseId::OptimalReflectionOnly,
                CaseId::RandomReflection,
                CaseId::NoSurface,
            ];
            let t0 = Instant::now();
            let means = case_means(&scn, &cases, 60, 11);
            print!("lambda={lambda} dd={dd}: ");
            for (c, m) in &means {
                print!("{c}={:.3e} ", m / 1e6);
            }
            let get = |id: CaseId| means.iter().find(|(c, _)| *c == id).unwrap().1;
            println!(
                "\n  II/III={:.3} III/IV={:.3} IV/V={:.3} IV/VI={:.3} I/II={:.4}  ({:.1}s)",
                get(CaseId::Alternating) / get(CaseId::RandomAssociation),
                get(CaseId::RandomAssociation) / get(CaseId::OptimalReflectionOnly),
                get(CaseId::OptimalReflectionOnly) / get(CaseId::RandomReflection),
                get(CaseId::OptimalReflectionOnly) / get(CaseId::NoSurface),
                get(CaseId::Exhaustive) / get(CaseId::Alternating),
                t0.elapsed().as_secs_f64()
            );
        }
    }

    if which.is_empty() || which == "interference" {
        for pt in [42.0, 50.0] {
            let scn = interference_scenario(pt);
            let means = case_means(
                &scn,
                &[CaseId::Alternating, CaseId::WithInterference],
                60,
                13,
            );
            let ii = means[0].1;
            let vii = means[1].1;
            println!(
                "pt={pt}: II={:.4e} VII={:.4e} gap={:.3}%",
                ii,
                vii,
                100.0 * (ii - vii) / ii
            );
        }
    }

    if which.is_empty() || which == "gain" {
        // Criterion-5: one tile, one user, heavy blockage.
        for blockage in [25.0, 40.0, 50.0] {
            for pt in [30.0, 40.0] {
                let scn = single_tile_scenario(blockage, pt);
                let means = case_means(&scn, &[CaseId::Alternating, CaseId::NoSurface], 40, 17);
                println!(
                    "blockage={blockage} pt={pt}: II={:.4e} VI={:.4e} ratio={:.2}",
                    means[0].1,
                    means[1].1,
                    means[0].1 / means[1].1
                );
            }
        }
    }

    if which == "mlspeed" {
        // LM epoch cost at K=4-like sizes.
        use nalgebra::DMatrix;
        let sizes = [20usize, 20, 20, 20, 4];
        let model = FnnModel::new(&sizes, 1).unwrap();
        println!("params: {}", model.num_params());
        let p = model.num_params();
        let rows = 1024;
        let jac = DMatrix::<f64>::from_fn(rows, p, |r, c| ((r * 31 + c * 17) % 97) as f64 / 97.0 - 0.5);
        let t0 = Instant::now();
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "gemm {rows}x{p}: {:.3}s -> {:.2} Gflop/s; est epoch (28k rows): {:.1}s",
            dt,
            2.0 * rows as f64 * p as f64 * p as f64 / dt / 1e9,
            dt * 28000.0 / rows as f64
        );
        std::hint::black_box(&jtj);
    }

    if which == "mloracle" {
        let scn = ml_scenario(2, 2);
        let ds = generate_dataset(&scn, 4000, 7).unwrap();
        let sigma = scn.noise_w[0];
        let mut hits = 0usize;
        for s in &ds.samples {
            let bd = &s.features[..2];
            let br = |i: usize, k: usize| s.features[2 + i * 2 + k];
            let score = |a: &[usize; 2]| -> f64 {
                (0..2)
                    .map(|k| {
                        let amp = br(a[k], k) + bd[k];
                        (1.0 + amp * amp / sigma).ln()
                    })
                    .sum()
            };
            // assignment [tile of user0, tile of user1]
            let pred = if score(&[0, 1]) >= score(&[1, 0]) {
                vec![1u32, 2u32]
            } else {
                vec![2u32, 1u32]
            };
            if pred == s.target {
                hits += 1;
            }
        }
        println!(
            "feature-argmax oracle accuracy: {:.2}%",
            100.0 * hits as f64 / ds.samples.len() as f64
        );
    }

    if which == "mlgeom" {
        for delta in [0.0f64, 0.2, 0.35, 0.5] {
            let mut cfg = ScenarioConfig::with_size(2, 2);
            cfg.units_x = 4;
            cfg.units_y = 4;
            cfg.unit_spacing_x = cfg.tile_len_x / 4.0;
            cfg.unit_spacing_y = cfg.tile_len_y / 4.0;
            cfg.tile_positions = vec![[50.0, -0.55, 10.0], [50.0, 0.55, 10.0]];
            cfg.user_positions = vec![[53.0, -delta, 10.0], [54.5, delta, 10.0]];
            let scn = ValidatedScenario::new(cfg).unwrap();
            let ds = generate_dataset(&scn, 10_000, 7).unwrap();
            let mut counts = std::collections::HashMap::new();
            for s in &ds.samples {
                *counts.entry(s.target.clone()).or_insert(0usize) += 1;
            }
            let mut model =
                FnnModel::new(&[ds.feature_dim(), 10, 10, 10, ds.num_tiles], 7).unwrap();
            let out = fit_surrogate(
                &mut model,
                &ds,
                &scn,
                &TrainOptions { max_epochs: 200, ..TrainOptions::default() },
            )
            .unwrap();
            let report = evaluate_surrogate(&model, &ds, &ds.split.test, &scn, false).unwrap();
            println!(
                "delta={delta}: labels={counts:?} epochs={} acc={:.2}% gap={:.4}%",
                out.history.len(),
                report.accuracy_pct,
                report.mean_rate_gap_pct
            );
        }
    }

    if which == "mltrain" {
        // Small end-to-end pipeline at K=2 I=2 to gauge attainable accuracy.
        let scn = ml_scenario(2, 2);
        let t0 = Instant::now();
        let ds = generate_dataset(&scn, 10000, 7).unwrap();
        println!("dataset 10000 samples: {:.1}s redraws={}", t0.elapsed().as_secs_f64(), ds.redraws);
        // Label balance.
        let mut counts = std::collections::HashMap::new();
        for s in &ds.samples {
            *counts.entry(s.target.clone()).or_insert(0usize) += 1;
        }
        println!("label histogram: {counts:?}");
        let mut model = FnnModel::new(&[ds.feature_dim(), 10, 10, 10, ds.num_tiles], 7).unwrap();
        let t0 = Instant::now();
        let out = fit_surrogate(
            &mut model,
            &ds,
            &scn,
            &TrainOptions {
                max_epochs: 200,
                ..TrainOptions::default()
            },
        )
        .unwrap();
        println!(
            "train: {:.1}s epochs={} stop={:?} best_val={:.3e}",
            t0.elapsed().as_secs_f64(),
            out.history.len(),
            out.stop,
            out.best_val_mse
        );
        for rec in out.history.iter().step_by(5).chain(out.history.last()) {
            println!(
                "  epoch {:3} mu {:9.2e} train {:.4e} val {:.4e}",
                rec.epoch, rec.mu, rec.train_mse, rec.val_mse
            );
        }
        let report = evaluate_surrogate(&model, &ds, &ds.split.test, &scn, false).unwrap();
        println!(
            "test accuracy {:.2}% gap {:.3}% inference {:.4}s",
            report.accuracy_pct, report.mean_rate_gap_pct, report.inference_seconds
        );
    }

    if which == "mltrain4" {
        let scn = ml_scenario(4, 4);
        let t0 = Instant::now();
        let ds = generate_dataset(&scn, 10000, 7).unwrap();
        println!("dataset 10000 samples: {:.1}s redraws={}", t0.elapsed().as_secs_f64(), ds.redraws);
        let mut counts = std::collections::HashMap::new();
        for s in &ds.samples {
            *counts.entry(s.target.clone()).or_insert(0usize) += 1;
        }
        println!("distinct labels: {}", counts.len());
        let mut model = FnnModel::new(&[ds.feature_dim(), 10, 10, 10, ds.num_tiles], 7).unwrap();
        let t0 = Instant::now();
        let out = fit_surrogate(
            &mut model,
            &ds,
            &scn,
            &TrainOptions {
                max_epochs: 200,
                ..TrainOptions::default()
            },
        )
        .unwrap();
        println!(
            "train: {:.1}s epochs={} stop={:?} best_val={:.3e}",
            t0.elapsed().as_secs_f64(),
            out.history.len(),
            out.stop,
            out.best_val_mse
        );
        let report = evaluate_surrogate(&model, &ds, &ds.split.test, &scn, false).unwrap();
        println!(
            "test accuracy {:.2}% gap {:.3}% inference {:.4}s",
            report.accuracy_pct, report.mean_rate_gap_pct, report.inference_seconds
        );
        let t_solver = irsim_core::surrogate::bench_solver(&ds, &ds.split.test, &scn).unwrap();
        println!(
            "solver on test: {:.4}s -> speedup {:.0}x",
            t_solver,
            t_solver / report.inference_seconds.max(1e-12)
        );
    }
}

fn ordering_scenario(lambda: f64, dd: f64, pt_dbm: f64) -> ValidatedScenario {
    let mut cfg = ScenarioConfig::with_size(4, 4);
    cfg.wavelength = lambda;
    cfg.tile_len_x = 10.0 * lambda;
    cfg.tile_len_y = 10.0 * lambda;
    cfg.unit_spacing_x = lambda / 2.0;
    cfg.unit_spacing_y = lambda / 2.0;
    cfg.power_w = dbm_to_watts(pt_dbm);
    cfg.bs_position = [0.0, 0.0, 10.0];
    let x_irs = dd - 2.0;
    cfg.tile_positions = (0..4).map(|i| [x_irs, 4.0 * i as f64, 2.5]).collect();
    cfg.user_positions = (0..4).map(|k| [dd, 4.0 * k as f64, 1.5]).collect();
    cfg.direct_blockage = vec![db_to_linear(-25.0); 4];
    ValidatedScenario::new(cfg).unwrap()
}

fn interference_scenario(pt_dbm: f64) -> ValidatedScenario {
    let mut cfg = ScenarioConfig::with_size(4, 4);
    cfg.power_w = dbm_to_watts(pt_dbm);
    cfg.bs_position = [0.0, 0.0, 10.0];
    cfg.tile_positions = (0..4).map(|i| [6000.0, 2.0 * i as f64, 10.0]).collect();
    cfg.user_positions = (0..4).map(|k| [6010.0, 2.0 * k as f64, 10.0]).collect();
    cfg.direct_blockage = vec![1.0; 4];
    ValidatedScenario::new(cfg).unwrap()
}

fn single_tile_scenario(blockage_db: f64, pt_dbm: f64) -> ValidatedScenario {
    let mut cfg = ScenarioConfig::with_size(1, 1);
    cfg.power_w = dbm_to_watts(pt_dbm);
    cfg.direct_blockage = vec![db_to_linear(-blockage_db)];
    ValidatedScenario::new(cfg).unwrap()
}

fn ml_scenario(users: usize, tiles: usize) -> ValidatedScenario {
    let mut cfg = ScenarioConfig::with_size(users, tiles);
    cfg.units_x = 4;
    cfg.units_y = 4;
    cfg.unit_spacing_x = cfg.tile_len_x / 4.0;
    cfg.unit_spacing_y = cfg.tile_len_y / 4.0;
    // Compact tile panel, users along the boresight: every tile sits at the
    // same distance from a given user, so labels are fading-driven.
    cfg.tile_positions = (0..tiles)
        .map(|i| {
            let dy = if i % 2 == 0 { -0.55 } else { 0.55 };
            let dz = if i / 2 % 2 == 0 { -0.55 } else { 0.55 };
            [50.0, dy, 10.0 + dz]
        })
        .collect();
    cfg.user_positions = (0..users)
        .map(|k| [52.5 + 1.5 * k as f64, 0.0, 10.0])
        .collect();
    ValidatedScenario::new(cfg).unwrap()
}

// probe helpers appended during tuning
