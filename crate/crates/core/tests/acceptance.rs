//! End-to-end acceptance checks: each test verifies one observable
//! guarantee of the toolkit against an independent oracle computed inside
//! the test itself, and prints a single pass line on success.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use moran_dim::estimators::{
    empirical_assouad, greedy_packing, packing_exponent_test, psi, EstimatorBudget,
};
use moran_dim::examples::{
    ArbitraryValuesParams, KSequence, ScalingFunction, UnboundedExampleParams,
};
use moran_dim::geometry::{
    bnc_verdict, check_osc, geometric_schedule, BncClause, BncStatus, OscStatus,
};
use moran_dim::ifs_core::{
    cantor_spec, validate_spec, AmbientSet, GeneratorMeta, IFSSpec, LevelSystem, Similarity,
    Tail, ValidatedSpec,
};
use moran_dim::pressure::{assouad_symbolic, pressure_derivative_at_zero, theta};

const CANTOR_DIM: f64 = 0.630929753571457; // log 2 / log 3

fn cantor() -> ValidatedSpec {
    validate_spec(&cantor_spec()).unwrap()
}

/// Left-to-right equal-gap interval level: invariant and OSC whenever the
/// ratios sum below 1.
fn equal_gap_level(ratios: &[f64]) -> LevelSystem {
    let total: f64 = ratios.iter().sum();
    let gap = if ratios.len() > 1 {
        (1.0 - total) / (ratios.len() - 1) as f64
    } else {
        0.0
    };
    let mut maps = Vec::new();
    let mut left = 0.0;
    for &r in ratios {
        maps.push(Similarity::interval(r, left, false));
        left += r + gap;
    }
    LevelSystem::new(maps)
}

fn periodic_spec(levels: Vec<Vec<f64>>) -> ValidatedSpec {
    validate_spec(&IFSSpec {
        dimension: 1,
        ambient: AmbientSet::unit_interval(),
        prefix: vec![],
        tail: Tail::Periodic(levels.into_iter().map(|r| equal_gap_level(&r)).collect()),
    })
    .unwrap()
}

/// Draw ratios in [0.1, 0.45] that leave room for positive gaps.
fn seeded_ratios(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let r: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..0.45)).collect();
        if r.iter().sum::<f64>() <= 0.90 {
            return r;
        }
    }
}

/// Independent oracle: the root of sum_i r_i^s = 1 by plain bisection.
fn similarity_dimension(ratios: &[f64]) -> f64 {
    let f = |s: f64| ratios.iter().map(|r| r.powf(s)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn closed_form_pressure_zeros_on_cantor() {
    let start = Instant::now();
    let spec = cantor();
    for n in 1..=20 {
        for m in 1..=20 {
            let e = theta(&spec, n, m, 1e-12).unwrap();
            assert!(
                (e.theta - CANTOR_DIM).abs() <= 1e-10,
                "theta({n},{m}) = {} is off the closed form",
                e.theta
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("PASS: all 400 pressure zeros match log2/log3 within 1e-10 in {elapsed:?}");
}

#[test]
fn autonomous_systems_match_similarity_dimension() {
    let start = Instant::now();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 2 + (seed % 2) as usize;
        let ratios = seeded_ratios(&mut rng, k);
        let spec = periodic_spec(vec![ratios.clone()]);
        let osc = check_osc(&spec, None).unwrap();
        assert!(
            matches!(osc.status, OscStatus::Pass),
            "seed {seed}: equal-gap construction must satisfy the OSC"
        );
        let oracle = similarity_dimension(&ratios);
        let rep = assouad_symbolic(&spec, 3, None, BncStatus::Verified).unwrap();
        assert!(
            (rep.estimate - oracle).abs() <= 1e-8,
            "seed {seed}: symbolic {} vs oracle {oracle}",
            rep.estimate
        );
        let budget = EstimatorBudget {
            slice_cap: 1_000_000,
            center_cap: 8,
        };
        let deltas = [2.0f64.powi(-6), 2.0f64.powi(-12), 2.0f64.powi(-18)];
        let est = empirical_assouad(&spec, &[1.0, 0.5], &deltas, &budget).unwrap();
        assert!(
            est.lo - 0.05 <= oracle && oracle <= est.hi + 0.05,
            "seed {seed}: oracle {oracle} outside [{} - 0.05, {} + 0.05]",
            est.lo,
            est.hi
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}, budget 2 min");
    println!(
        "PASS: 10 seeded autonomous OSC systems agree with the similarity \
         dimension (symbolic 1e-8, empirical +-0.05) in {elapsed:?}"
    );
}

fn sweep_specs() -> Vec<ValidatedSpec> {
    (0..10u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let period = 1 + (seed % 3) as usize;
            let levels = (0..period)
                .map(|_| {
                    let k = 2 + (rng.gen_range(0u8..2)) as usize;
                    seeded_ratios(&mut rng, k)
                })
                .collect();
            periodic_spec(levels)
        })
        .collect()
}

#[test]
fn submaximality_sweep_has_no_violations() {
    let mut checked = 0usize;
    for (i, spec) in sweep_specs().iter().enumerate() {
        let mut memo: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut th = |n: usize, m: usize, spec: &ValidatedSpec| {
            *memo
                .entry((n, m))
                .or_insert_with(|| theta(spec, n, m, 1e-12).unwrap().theta)
        };
        for n in 1..=23 {
            for m in 1..=(24 - n) {
                for k in 1..=(25 - n - m) {
                    let whole = th(n, m + k, spec);
                    let first = th(n, m, spec);
                    let second = th(n + m, k, spec);
                    assert!(
                        whole <= first.max(second) + 1e-9,
                        "spec {i}: theta({n},{}) = {whole} > max({first},{second})",
                        m + k
                    );
                    checked += 1;
                }
            }
        }
    }
    println!("PASS: {checked} submaximality triples with n+m+k <= 25, zero violations");
}

#[test]
fn pressure_derivative_is_negative_at_the_zero() {
    for (i, spec) in sweep_specs().iter().enumerate() {
        for n in 1..=24 {
            for m in 1..=(25 - n) {
                let d = pressure_derivative_at_zero(spec, n, m).unwrap();
                assert!(d < 0.0, "spec {i}: derivative at theta({n},{m}) is {d}");
            }
        }
    }
    // homogeneous specs: the derivative equals log r exactly
    for &(r, k) in &[(0.2f64, 2usize), (1.0 / 3.0, 2), (0.45, 2), (0.25, 3)] {
        let spec = periodic_spec(vec![vec![r; k]]);
        for m in 1..=5 {
            let d = pressure_derivative_at_zero(&spec, 1, m).unwrap();
            assert!(
                (d - r.ln()).abs() <= 1e-10,
                "homogeneous r={r}: derivative {d} vs log r = {}",
                r.ln()
            );
        }
    }
    println!(
        "PASS: pressure derivative negative on the full sweep; equals log r \
         within 1e-10 on homogeneous systems"
    );
}

#[test]
fn disc_packing_dichotomy_on_cantor() {
    let start = Instant::now();
    let spec = cantor();
    let packs: Vec<_> = (1..=8)
        .map(|d| greedy_packing(&spec, &[0.5, 0.0], 0.5, d, 0.01, 400_000).unwrap())
        .collect();
    for p in &packs {
        assert!(p.verified, "packing failed its disjointness check");
    }
    let above = packing_exponent_test(CANTOR_DIM + 0.01, &packs);
    assert!(above < 10.0, "above the dimension the statistic blew up: {above}");
    let below_1 = packing_exponent_test(CANTOR_DIM - 0.05, &packs[..1]);
    let below_8 = packing_exponent_test(CANTOR_DIM - 0.05, &packs);
    assert!(
        below_8 >= 2.0 * below_1,
        "below the dimension expected 2x growth: depth 1 -> {below_1}, depth 8 -> {below_8}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!(
        "PASS: packing statistic bounded ({above:.3} < 10) above the dimension, \
         grows {:.2}x >= 2x below it, in {elapsed:?}",
        below_8 / below_1
    );
}

#[test]
fn localized_covering_exponent_oracle() {
    let spec = cantor();
    let budget = EstimatorBudget::default();
    // psi(1, 3^-k) = 2^k exactly, so the exponent is log2/log3 exactly
    for k in 1..=6u32 {
        let delta = 3.0f64.powi(-(k as i32));
        let s = psi(&spec, 1.0, delta, &budget).unwrap();
        assert_eq!(s.psi_lo, 1usize << k, "lower count at k={k}");
        assert_eq!(s.psi_hi, 1usize << k, "upper count at k={k}");
        assert!((s.big_psi_lo - CANTOR_DIM).abs() <= 1e-12);
        assert!((s.big_psi_hi - CANTOR_DIM).abs() <= 1e-12);
    }
    // submultiplicativity of the upper bound on a 5x5x5 grid
    let rs = [1.0, 1.0 / 3.0, 1.0 / 9.0, 1.0 / 27.0, 1.0 / 81.0];
    let ds = [
        1.0 / 3.0,
        1.0 / 9.0,
        1.0 / 27.0,
        1.0 / 81.0,
        1.0 / 243.0,
    ];
    for &r in &rs {
        for &d1 in &ds {
            for &d2 in &ds {
                let lhs = psi(&spec, r, d1 * d2, &budget).unwrap().psi_hi;
                let a = psi(&spec, r, d1, &budget).unwrap().psi_hi;
                let b = psi(&spec, r * d1, d2, &budget).unwrap().psi_hi;
                assert!(
                    lhs <= a * b,
                    "submultiplicativity failed at r={r}, d1={d1}, d2={d2}: {lhs} > {a}*{b}"
                );
            }
        }
    }
    println!(
        "PASS: psi(1, 3^-k) = 2^k exactly for k = 1..6 and the upper bound is \
         submultiplicative on the 5x5x5 grid"
    );
}

#[test]
fn neighbourhood_condition_checkers() {
    let schedule = geometric_schedule(8);
    // uniformly bounded ratios: verified via the ratio clause
    let c = bnc_verdict(&cantor(), &schedule, 400_000).unwrap();
    assert!(matches!(c.flag, BncStatus::Verified));
    assert!(
        c.clauses.contains(&BncClause::RatioLowerBound),
        "the ratio lower-bound clause must certify the Cantor system"
    );
    // homogeneous levels with bounded map counts: the homogeneity clause
    let homog = periodic_spec(vec![vec![0.125; 4]]);
    let h = bnc_verdict(&homog, &schedule, 400_000).unwrap();
    assert!(matches!(h.flag, BncStatus::Verified));
    assert!(
        h.clauses.contains(&BncClause::HomogeneousBranching),
        "the homogeneity clause must certify the 4-map 1/8 system"
    );
    // linearly growing map counts: branching certified unbounded
    let raw = moran_dim::examples::arbitrary_values_spec(ArbitraryValuesParams {
        s: 0.5,
        t: 1.0,
        k: KSequence::Linear,
        level_budget: 12,
    });
    let gen_spec = validate_spec(&raw).unwrap();
    let g = bnc_verdict(&gen_spec, &schedule, 400_000).unwrap();
    assert!(
        matches!(g.flag, BncStatus::Falsified),
        "diverging per-level map counts must falsify the condition, got {:?}",
        g.flag
    );
    println!(
        "PASS: condition checkers certify bounded-ratio and homogeneous systems \
         and falsify the linearly-branching generator"
    );
}

#[test]
fn unbounded_branching_example_properties() {
    let raw = moran_dim::examples::unbounded_example_spec(UnboundedExampleParams {
        eps: 0.25,
        f: ScalingFunction::Log,
        depth: 3,
        level_budget: 64,
    });
    let spec = validate_spec(&raw).unwrap();
    let meta = match spec.generator_meta() {
        Some(GeneratorMeta::Unbounded(m)) => m.clone(),
        other => panic!("wrong metadata: {other:?}"),
    };
    let max_level = spec.max_level().unwrap();

    // the construction keeps every level separated
    let osc = check_osc(&spec, None).unwrap();
    assert!(matches!(osc.status, OscStatus::Pass), "generated spec violates OSC");

    // per-level similarity dimension never exceeds the target
    for n in 1..=max_level {
        let t = theta(&spec, n, 1, 1e-12).unwrap().theta;
        assert!(t <= 0.25 + 1e-9, "theta({n},1) = {t} > eps");
    }

    // left-branch ratio products telescope to 1 - j/ell inside each tuple
    let mut offset = 0usize;
    for &ell in &meta.ell_seq {
        if offset + (ell - 1) > max_level {
            break;
        }
        let mut product = 1.0f64;
        for j in 1..=(ell - 1) {
            product *= spec.level(offset + j).unwrap().maps[0].ratio;
            let expected = 1.0 - j as f64 / ell as f64;
            assert!(
                (product - expected).abs() <= 1e-12,
                "tuple at level {}: partial product {product} vs {expected}",
                offset + 1
            );
        }
        offset += ell - 1;
    }

    // weak-tangent witnesses: the final tuple of each of the two deepest
    // completed blocks realizes the arithmetic progression {j/ell} in the
    // rescaled limit set, up to the certified sampling error
    assert!(meta.blocks_completed >= 3, "need at least 3 completed blocks");
    for back in [1usize, 2] {
        let entry_idx = meta.block_entries[meta.blocks_completed - back] - 1;
        let ell = meta.ell_seq[entry_idx];
        let depth: usize = meta.ell_seq[..entry_idx].iter().map(|&e| e - 1).sum();
        let prefix = spec.word_from_indices(&vec![0u32; depth]).unwrap();
        let target: Vec<f64> = (1..ell).map(|j| j as f64 / ell as f64).collect();
        let tw =
            moran_dim::examples::tangent_witness(&spec, &target, &prefix, 1e-6, 500_000).unwrap();
        assert!(
            tw.p_h <= tw.sample_error + 1e-12,
            "block {} (ell = {ell}): p_H = {} exceeds sampling error {}",
            meta.blocks_completed - back + 1,
            tw.p_h,
            tw.sample_error
        );
    }
    println!(
        "PASS: unbounded-branching example has OSC, per-level dimension <= eps, \
         exact telescoping ratios, and tangent witnesses within sampling error"
    );
}

#[test]
fn arbitrary_values_example_properties() {
    let raw = moran_dim::examples::arbitrary_values_spec(ArbitraryValuesParams {
        s: 0.5,
        t: 1.0,
        k: KSequence::Linear,
        level_budget: 24,
    });
    let spec = validate_spec(&raw).unwrap();
    let meta = match spec.generator_meta() {
        Some(GeneratorMeta::Arbitrary(m)) => m.clone(),
        other => panic!("wrong metadata: {other:?}"),
    };
    assert!(spec.homogeneous(), "every level must use a single ratio");
    let max_level = spec.max_level().unwrap();
    assert_eq!(max_level, 24);

    // per-block map count is exactly 2^{m_n} and stays within k_n
    for b in &meta.blocks {
        let level = spec.level(b.level).unwrap();
        assert_eq!(level.len(), 1usize << b.m_n, "block n={}", b.n);
        assert!((1u64 << b.m_n) <= b.k_n, "block n={}: 2^m > k", b.n);
    }

    // the pressure zero is pinned to s on the whole window
    for n in 1..=24 {
        for m in 1..=(25 - n) {
            let t = theta(&spec, n, m, 1e-12).unwrap().theta;
            assert!((t - 0.5).abs() <= 1e-9, "theta({n},{m}) = {t} != 0.5");
        }
    }

    // tangent-direction lower bound: a single block with m = 20 pushes the
    // empirical lower estimate above 0.9 at delta = 2^-12
    let deep = validate_spec(&moran_dim::examples::arbitrary_values_spec(
        ArbitraryValuesParams {
            s: 0.5,
            t: 1.0,
            k: KSequence::Table(vec![1 << 20]),
            level_budget: 1,
        },
    ))
    .unwrap();
    let budget = EstimatorBudget {
        slice_cap: 2_500_000,
        center_cap: 1,
    };
    let est = empirical_assouad(&deep, &[1.0], &[2.0f64.powi(-12)], &budget).unwrap();
    assert!(
        est.lo > 0.9,
        "lower estimate {} must exceed 0.9 once m_n reaches 20",
        est.lo
    );
    println!(
        "PASS: homogeneous blocks with 2^m <= k maps, theta = s on the window, \
         empirical lower bound {:.4} > 0.9 at the m = 20 block",
        est.lo
    );
}

fn run_cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_moran-dim"))
        .args(args)
        .status()
        .expect("binary must run");
    assert!(status.success(), "command failed: {args:?}");
}

#[test]
fn cli_outputs_are_byte_identical_across_runs() {
    let dir = std::env::temp_dir().join(format!("moran-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let spec_path = dir.join("cantor.json");
    std::fs::write(
        &spec_path,
        moran_dim::schema::spec_to_string(&cantor_spec(), None).unwrap(),
    )
    .unwrap();
    let spec = spec_path.to_str().unwrap();

    let out = |name: &str| -> PathBuf { dir.join(name) };
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "theta.csv",
            vec!["theta", "--spec", spec, "--n-max", "4", "--m-max", "4"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "dima.csv",
            vec!["dima", "--spec", spec, "--m-max", "6"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "check.txt",
            vec!["check", "--spec", spec, "--schedule-max", "6"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "nbhd.csv",
            vec![
                "nbhd", "--spec", spec, "--x", "0.333333", "--r", "0.25", "--refine", "8",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "estimate.csv",
            vec![
                "estimate",
                "--spec",
                spec,
                "--delta-min",
                "0.05",
                "--r-min",
                "0.2",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "pack.csv",
            vec![
                "pack", "--spec", spec, "--alpha", "0.64", "--depths", "1:5",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "render.csv",
            vec!["render", "--spec", spec, "--depth", "5"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "example-unbounded.json",
            vec![
                "example",
                "unbounded",
                "--eps",
                "0.3",
                "--depth",
                "2",
                "--budget",
                "32",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "example-arbitrary.json",
            vec![
                "example",
                "arbitrary",
                "--s",
                "0.5",
                "--t",
                "1.0",
                "--k",
                "4,8",
                "--budget",
                "4",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
    ];

    for (name, args) in &commands {
        let mut first: Option<Vec<u8>> = None;
        for run in 0..3 {
            let path = out(&format!("run{run}-{name}"));
            let mut argv: Vec<&str> = args.iter().map(String::as_str).collect();
            argv.push("--out");
            argv.push(path.to_str().unwrap());
            run_cli(&argv);
            let bytes = std::fs::read(&path).unwrap();
            match &first {
                None => first = Some(bytes),
                Some(f) => assert_eq!(
                    f, &bytes,
                    "{name}: run {run} differs from the first run"
                ),
            }
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    println!(
        "PASS: {} subcommands produced byte-identical output across 3 runs each",
        commands.len()
    );
}
