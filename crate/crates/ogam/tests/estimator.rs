#![allow(clippy::needless_range_loop)]
#![allow(clippy::field_reassign_with_default)]

//! End-to-end checks of the streaming estimator: dimensions beyond the
//! simulation design, determinism, and the command-line binary.

use std::fs;
use std::process::Command;

use ogam::cli::{read_estimate_csv, run_fit, write_estimate_csv};
use ogam::config::RunConfig;
use ogam::report::component_discrepancy;
use ogam::solver::batch_fit;
use ogam::{
    AdditiveEstimate, DataBlock, Family, GridSpec, KernelSpec, OnlineFit, SolverConfig,
    StatContext,
};

fn xorshift(state: &mut u64) -> f64 {
    *state ^= *state << 13;
    *state ^= *state >> 7;
    *state ^= *state << 17;
    (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn three_dimensional_gaussian_exactness() {
    let ctx = StatContext {
        grid: GridSpec::new(3, 9).unwrap(),
        kernel: KernelSpec::Epanechnikov,
        family: Family::GaussianIdentity,
        degree: 1,
    };
    let h = [0.25, 0.25, 0.25];
    let solver = SolverConfig {
        eps_outer: 1e-10,
        eps_inner: 1e-12,
        ..SolverConfig::default()
    };
    let mut s = 44u64;
    let mut blocks = Vec::new();
    for k in 1..=4 {
        let n = 40;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let (a, b, c) = (xorshift(&mut s), xorshift(&mut s), xorshift(&mut s));
            x.extend([a, b, c]);
            y.push(0.2 + (3.0 * a).sin() + 0.5 * b * b - 0.7 * c + 0.2 * (xorshift(&mut s) - 0.5));
        }
        blocks.push(DataBlock::new(k, 3, x, y).unwrap());
    }
    let mut online = OnlineFit::new(ctx, 3, solver);
    for b in &blocks {
        online.process_block(b, &h).unwrap();
    }
    let pooled = DataBlock::pooled(&blocks).unwrap();
    let (batch, diag) = batch_fit(&ctx, &pooled, &h, &solver).unwrap();
    assert!(diag.converged);
    let dist = online.estimate().sup_distance(&batch);
    assert!(dist < 1e-6, "d=3 online vs batch distance {dist}");
}

#[test]
fn identical_config_and_seed_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let mut cfg = RunConfig::default();
        cfg.blocks = 5;
        cfg.grid_m = 11;
        cfg.l = 3;
        cfg.l_pilot = 3;
        cfg.seed = 5150;
        cfg.block_size_mean = 50.0;
        cfg.output_dir = dir
            .path()
            .join(format!("run{run}"))
            .to_string_lossy()
            .into_owned();
        let summary = run_fit(&cfg).unwrap();
        outputs.push((
            fs::read(&summary.final_estimate_path).unwrap(),
            fs::read_to_string(&summary.diagnostics_path).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "estimate files differ");
    // diagnostics match apart from wall-clock fields
    let strip = |text: &str| -> Vec<serde_json::Value> {
        text.lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_seconds");
                v
            })
            .collect()
    };
    assert_eq!(strip(&outputs[0].1), strip(&outputs[1].1));
}

#[test]
fn estimate_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = GridSpec::new(2, 11).unwrap();
    let mut est = AdditiveEstimate::zero(&grid, 1, vec![0.2, 0.25]);
    let mut s = 3u64;
    est.intercept = 1.7;
    for j in 0..2 {
        for i in 0..grid.m {
            est.values[j][i] = xorshift(&mut s) - 0.5;
            est.coeffs[j][0][i] = 2.0 * xorshift(&mut s) - 1.0;
        }
    }
    let path = dir.path().join("est.csv");
    write_estimate_csv(&path, &grid, &est).unwrap();
    let back = read_estimate_csv(&path, &grid).unwrap();
    assert!((back.intercept - est.intercept).abs() < 1e-12);
    for j in 0..2 {
        assert!((back.bandwidth[j] - est.bandwidth[j]).abs() < 1e-12);
        for i in 0..grid.m {
            assert!((back.values[j][i] - est.values[j][i]).abs() < 1e-12);
            assert!((back.coeffs[j][0][i] - est.coeffs[j][0][i]).abs() < 1e-9);
        }
    }
    assert!(component_discrepancy(&grid, &est, &back, 0) < 1e-20);
}

#[test]
fn batch_error_shrinks_with_sample_size() {
    // consistency trend of the batch fit on the simulation design: the
    // (mean-centered) sup error of the first component falls as data grow
    use ogam::sim::{self, SimConfig, SimStream, SimTruth};
    let ctx = StatContext {
        grid: GridSpec::new(2, 41).unwrap(),
        kernel: KernelSpec::Epanechnikov,
        family: Family::PoissonLog,
        degree: 1,
    };
    let truth = SimTruth::compute(401);
    let solver = SolverConfig::default();
    let mut errs = Vec::new();
    for &blocks in &[5usize, 50] {
        let data: Vec<DataBlock> = SimStream::new(SimConfig {
            seed: 9001,
            blocks,
            ..SimConfig::default()
        })
        .unwrap()
        .collect();
        let pooled = DataBlock::pooled(&data).unwrap();
        let h = truth.optimal_bandwidth(pooled.len(), ctx.kernel);
        let (fit, diag) = batch_fit(&ctx, &pooled, &h, &solver).unwrap();
        assert!(diag.converged);
        // compare shapes: remove each side's own quadrature mean
        let grid = ctx.grid;
        let est_mean: f64 = (0..grid.m)
            .map(|i| grid.quad_weight(i) * fit.values[0][i])
            .sum();
        let ref_vals: Vec<f64> = (0..grid.m).map(|i| sim::beta1_star(grid.node(i))).collect();
        let ref_mean: f64 = (0..grid.m)
            .map(|i| grid.quad_weight(i) * ref_vals[i])
            .sum();
        let sup = (0..grid.m)
            .filter(|&i| grid.node(i) >= 0.1 && grid.node(i) <= 0.9)
            .map(|i| ((fit.values[0][i] - est_mean) - (ref_vals[i] - ref_mean)).abs())
            .fold(0.0f64, f64::max);
        errs.push(sup);
    }
    assert!(
        errs[1] < errs[0],
        "sup error did not shrink: N~500 gives {}, N~5000 gives {}",
        errs[0],
        errs[1]
    );
}

#[test]
fn bernoulli_stream_runs_with_pilots() {
    let mut cfg = RunConfig::default();
    cfg.family = "bernoulli-logit".into();
    cfg.grid_m = 15;
    cfg.l = 3;
    cfg.l_pilot = 3;
    cfg.blocks = 0; // unused: blocks fed directly
    let mut gam = cfg.build_gam().unwrap();
    let mut s = 616u64;
    for k in 1..=6 {
        let n = 120;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let (a, b) = (xorshift(&mut s), xorshift(&mut s));
            x.extend([a, b]);
            let eta: f64 = -0.4 + 1.6 * a - 0.9 * b;
            let p = 1.0 / (1.0 + (-eta).exp());
            y.push((xorshift(&mut s) < p) as u8 as f64);
        }
        let block = DataBlock::new(k, 2, x, y).unwrap();
        let rec = gam.process_block(&block).unwrap();
        assert!(rec.converged, "block {k} did not converge");
        assert!(rec.constraint_sup < 1e-8);
        assert!(rec.h.iter().all(|&h| h > 0.0 && h <= 0.5));
    }
    assert_eq!(gam.main.state.sets.len(), 3);
    // the fitted slope direction matches the generating signs
    let est = gam.main.estimate();
    let m = cfg.grid_m;
    assert!(est.values[0][m - 2] > est.values[0][1]);
    assert!(est.values[1][m - 2] < est.values[1][1]);
}

#[test]
fn gaussian_exact_configuration_has_unit_efficiency() {
    // online and batch coincide for gaussian at a fixed common bandwidth,
    // so the relative efficiency against any reference truth is 1
    let ctx = StatContext {
        grid: GridSpec::new(2, 21).unwrap(),
        kernel: KernelSpec::Epanechnikov,
        family: Family::GaussianIdentity,
        degree: 1,
    };
    let h = [0.2, 0.2];
    let solver = SolverConfig {
        eps_outer: 1e-10,
        eps_inner: 1e-12,
        ..SolverConfig::default()
    };
    let mut s = 246u64;
    let mut blocks = Vec::new();
    for k in 1..=6 {
        let n = 60;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let (a, b) = (xorshift(&mut s), xorshift(&mut s));
            x.extend([a, b]);
            y.push((2.4 * a).sin() + 0.8 * b * b + 0.3 * (xorshift(&mut s) - 0.5));
        }
        blocks.push(DataBlock::new(k, 2, x, y).unwrap());
    }
    let mut online = OnlineFit::new(ctx, 4, solver);
    for b in &blocks {
        online.process_block(b, &h).unwrap();
    }
    let pooled = DataBlock::pooled(&blocks).unwrap();
    let (batch, _) = batch_fit(&ctx, &pooled, &h, &solver).unwrap();
    let truth: [Box<dyn Fn(f64) -> f64>; 2] =
        [Box::new(|x| (2.4 * x).sin()), Box::new(|x| 0.8 * x * x)];
    for j in 0..2 {
        let io = ogam::report::component_imse(&ctx.grid, online.estimate(), j, &truth[j]);
        let ib = ogam::report::component_imse(&ctx.grid, &batch, j, &truth[j]);
        let eff = ib / io;
        assert!((eff - 1.0).abs() <= 1e-6, "component {}: eff {eff}", j + 1);
    }
}

#[test]
fn cli_binary_simulate_fit_batch_resume() {
    let exe = env!("CARGO_BIN_EXE_ogam");
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let out = dir.path().join("out");
    let snap = dir.path().join("snap.json");
    let base = [
        "--set",
        "blocks=3",
        "--set",
        "grid_m=11",
        "--set",
        "l=3",
        "--set",
        "l_pilot=3",
        "--set",
        "seed=42",
        "--set",
        "block_size_mean=40",
    ];

    let status = Command::new(exe)
        .arg("simulate")
        .args(base)
        .args(["--out", data.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());

    let status = Command::new(exe)
        .arg("fit")
        .args(base)
        .args([
            "--set",
            &format!("snapshot_out={:?}", snap.to_str().unwrap()),
            "--input",
            data.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("estimate_final.csv").exists());
    assert!(snap.exists());

    // batch on the same data, comparing against the online estimate
    let output = Command::new(exe)
        .arg("batch")
        .args(base)
        .args([
            "--set",
            "bandwidth_mode=\"fixed\"",
            "--set",
            "fixed_bandwidth=0.2",
            "--input",
            data.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
            "--compare",
            out.join("estimate_final.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("discrepancy"), "{text}");

    // resume on one more simulated block
    let more = dir.path().join("out2");
    let status = Command::new(exe)
        .arg("resume")
        .args([
            "--set",
            "blocks=1",
            "--set",
            "grid_m=11",
            "--set",
            "seed=77",
            "--set",
            "block_size_mean=40",
            "--snapshot",
            snap.to_str().unwrap(),
            "--output-dir",
            more.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(more.join("estimate_final.csv").exists());

    // malformed input is rejected with a line number
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "block,y,x1,x2\n1,2.0,0.5,1.4\n").unwrap();
    let output = Command::new(exe)
        .arg("fit")
        .args(base)
        .args(["--input", bad.to_str().unwrap()])
        .args(["--output-dir", dir.path().join("bad_out").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("x2"), "{err}");
}
