//! Acceptance suite. Every criterion runs, prints one PASS/FAIL line with its
//! runtime, and the process exits nonzero if any criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use emitter_unravel::ensemble::network_rng;
use emitter_unravel::experiments::{
    averaged_site_excitations, distribution_comparison, entropy_bound, mixture_entropy_report,
    scaling_sweep, ScalingRow, SweepPoint, UnitarySource,
};
use emitter_unravel::oracle::{
    chained_sequence_probability, outcome_probability, sequence_probability,
};
use emitter_unravel::state::binary_entropy;
use emitter_unravel::stats::expected_total_variation;
use emitter_unravel::unitary::{beamsplitter_unitary, haar_unitary, BeamSplitterParams};
use emitter_unravel::{
    permanent_naive, permanent_ryser, Bipartition, ClickSequence, OutcomeCounts, SectorState,
    UnitaryMatrix, C64,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn hom() -> Check {
    let u = beamsplitter_unitary(&BeamSplitterParams::balanced()).map_err(err)?;
    let report = distribution_comparison(2, 2, &u, 10_000, 101).map_err(err)?;
    let freq = |o: &[usize]| {
        let i = report
            .outcomes
            .iter()
            .position(|x| x.as_slice() == o)
            .unwrap();
        (report.exact[i], report.empirical[i])
    };
    let (p20, f20) = freq(&[2, 0]);
    let (p11, f11) = freq(&[1, 1]);
    let (p02, f02) = freq(&[0, 2]);
    ensure(
        (f20 - 0.5).abs() <= 0.015 && (f02 - 0.5).abs() <= 0.015,
        format!("bunching frequencies {f20}, {f02}"),
    )?;
    ensure(f11 == 0.0, format!("(1,1) observed with frequency {f11}"))?;
    let direct = outcome_probability(&u, &OutcomeCounts::from(vec![1, 1]), 2).map_err(err)?;
    ensure(
        p11.abs() < 1e-12 && direct.abs() < 1e-12,
        format!("P(1,1) = {p11}"),
    )?;
    ensure(
        (p20 - 0.5).abs() < 1e-12 && (p02 - 0.5).abs() < 1e-12,
        format!("P(2,0) = {p20}, P(0,2) = {p02}"),
    )?;
    Ok(format!("(2,0) {f20:.4}, (0,2) {f02:.4}, (1,1) never"))
}

fn boson_sampling() -> Check {
    let n_samples = 10_000;
    let u = haar_unitary(7, &mut network_rng(202));
    let exact = emitter_unravel::oracle::exact_distribution(&u, 4).map_err(err)?;
    let p: Vec<f64> = exact.iter().map(|(_, p)| *p).collect();
    ensure(p.len() == 210, format!("{} outcomes", p.len()))?;
    let sum: f64 = p.iter().sum();
    ensure(
        (sum - 1.0).abs() < 1e-9,
        format!("probabilities sum to {sum}"),
    )?;
    let threshold = 2.0 * expected_total_variation(&p, n_samples as u64);
    let report = distribution_comparison(7, 4, &u, n_samples, 203).map_err(err)?;
    ensure(
        report.tvd < threshold,
        format!("TVD {:.4} >= threshold {threshold:.4}", report.tvd),
    )?;
    Ok(format!(
        "TVD {:.4} < {threshold:.4}, sum {sum:.12}",
        report.tvd
    ))
}

fn permanents() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for n in 2..=8 {
        for _ in 0..100 {
            let a = DMatrix::from_fn(n, n, |_, _| {
                C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let naive = permanent_naive(&a).map_err(err)?;
            let ryser = permanent_ryser(&a).map_err(err)?;
            let rel = (naive - ryser).norm() / naive.norm();
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-10, format!("worst relative error {worst:e}"))?;
    Ok(format!("worst relative error {worst:.2e}"))
}

fn single_click_law() -> Check {
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let start = SectorState::initial(n, n).map_err(err)?;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let u = haar_unitary(n, &mut rng);
        for m in 0..n {
            let s = start.apply_jump(&u, m).map_err(err)?;
            let mut p = 0.0;
            for l in 1..n {
                p += u.get(m, l - 1).norm_sqr();
                let got = s
                    .entanglement_entropy(Bipartition::new(l, n).map_err(err)?)
                    .map_err(err)?;
                worst = worst.max((got - binary_entropy(p)).abs());
            }
        }
    }
    ensure(worst < 1e-10, format!("worst deviation {worst:e}"))?;
    Ok(format!("worst deviation {worst:.2e}"))
}

fn entropy_bound_check() -> Check {
    let n = 10;
    let grid =
        emitter_unravel::experiments::averaged_entropy_grid(n, n, &UnitarySource::Haar, 2000, 505)
            .map_err(err)?;
    for l in 1..n {
        let (s, se) = (grid.mean(1, l), grid.stderr(1, l));
        ensure(
            s <= entropy_bound(l, n) + 3.0 * se,
            format!("l={l}: {s} > h(l/N) = {} + 3 s.e.", entropy_bound(l, n)),
        )?;
    }
    let (half, se) = (grid.mean(1, 5), grid.stderr(1, 5));
    ensure(
        half <= std::f64::consts::LN_2 + 3.0 * se,
        format!("half-chain {half} > ln 2 + 3 s.e."),
    )?;
    Ok(format!("S(5,1) = {half:.4} ± {se:.4}, bound ln 2"))
}

fn unraveling_invariance() -> Check {
    let (n, k) = (6, 3);
    let target = (n - k) as f64 / n as f64;
    let mut detail = String::new();
    for (name, source) in [
        ("haar", UnitarySource::Haar),
        ("identity", UnitarySource::Fixed(UnitaryMatrix::identity(n))),
    ] {
        let prof = averaged_site_excitations(n, n, &source, k, 10_000, 606).map_err(err)?;
        for (j, (m, se)) in prof.mean.iter().zip(&prof.stderr).enumerate() {
            ensure(
                (m - target).abs() <= 5.0 * se,
                format!("{name} site {j}: {m} vs {target} (s.e. {se})"),
            )?;
        }
        let worst = prof
            .mean
            .iter()
            .zip(&prof.stderr)
            .map(|(m, se)| (m - target).abs() / se)
            .fold(0.0, f64::max);
        detail.push_str(&format!("{name} max |dev|/s.e. {worst:.2}; "));
    }
    Ok(detail.trim_end_matches("; ").to_string())
}

fn sweep(points: Vec<SweepPoint>) -> Result<Vec<ScalingRow>, String> {
    scaling_sweep(&points, 2000, 707).map_err(err)
}

fn row_line(r: &ScalingRow) -> String {
    format!(
        "N={} D={} S_max={:.4}±{:.4}",
        r.n_sites, r.depth, r.s_max, r.stderr
    )
}

fn combined(a: &ScalingRow, b: &ScalingRow) -> f64 {
    (a.stderr * a.stderr + b.stderr * b.stderr).sqrt()
}

fn area_volume_scaling() -> Check {
    let brick = |n: usize, depth: usize| SweepPoint {
        n_sites: n,
        source: UnitarySource::Brickwall { depth },
    };
    let mut failures = Vec::new();
    let mut lines = Vec::new();

    let area = sweep([8, 12, 16].iter().map(|&n| brick(n, 2)).collect())?;
    lines.push(format!(
        "(a) {}",
        area.iter().map(row_line).collect::<Vec<_>>().join(", ")
    ));
    for (i, a) in area.iter().enumerate() {
        for b in &area[i + 1..] {
            let allowed = 0.10 * a.s_max.max(b.s_max) + 3.0 * combined(a, b);
            if (a.s_max - b.s_max).abs() > allowed {
                failures.push(format!(
                    "(a) N={} and N={} differ by more than 10% + 3 s.e.",
                    a.n_sites, b.n_sites
                ));
            }
        }
    }

    let volume = sweep([6, 8, 10, 12].iter().map(|&n| brick(n, n / 2)).collect())?;
    lines.push(format!(
        "(b) {}",
        volume.iter().map(row_line).collect::<Vec<_>>().join(", ")
    ));
    for w in volume.windows(2) {
        if w[1].s_max <= w[0].s_max {
            failures.push(format!(
                "(b) S_max not increasing from N={} to N={}",
                w[0].n_sites, w[1].n_sites
            ));
        }
    }

    let mut depth_points: Vec<SweepPoint> =
        [1, 2, 5, 10, 20].iter().map(|&d| brick(10, d)).collect();
    depth_points.push(SweepPoint {
        n_sites: 10,
        source: UnitarySource::Haar,
    });
    let depth = sweep(depth_points)?;
    lines.push(format!(
        "(c) {}",
        depth.iter().map(row_line).collect::<Vec<_>>().join(", ")
    ));
    let (layers, haar) = depth.split_at(5);
    for w in layers.windows(2) {
        if w[1].s_max < w[0].s_max {
            failures.push(format!(
                "(c) S_max decreases from D={} to D={}",
                w[0].depth, w[1].depth
            ));
        }
    }
    let (deep, full) = (&layers[4], &haar[0]);
    if (deep.s_max - full.s_max).abs() > 3.0 * combined(deep, full) {
        failures.push(format!(
            "(c) D=20 value {:.4} not within 3 s.e. ({:.4}) of the Haar value {:.4}",
            deep.s_max,
            3.0 * combined(deep, full),
            full.s_max
        ));
    }

    let text = lines.join("\n      ");
    if failures.is_empty() {
        Ok(text)
    } else {
        Err(format!("{}\n      {text}", failures.join("; ")))
    }
}

fn sandwich() -> Check {
    let (n, k, l) = (6, 3, 3);
    let mut detail = Vec::new();
    for (name, u) in [
        ("haar", haar_unitary(n, &mut network_rng(808))),
        ("identity", UnitaryMatrix::identity(n)),
    ] {
        let r = mixture_entropy_report(n, n, &u, k, l, 10_000, 809).map_err(err)?;
        let line = format!(
            "{name}: S̄ {:.4} ≤ S(ρ̄) {:.4} ≤ S̄+H {:.4} (tol {:.4})",
            r.mean_trajectory_entropy,
            r.averaged_state_entropy,
            r.mean_trajectory_entropy + r.shannon_mixture_entropy,
            r.tolerance
        );
        ensure(r.sandwich_holds(), line.clone())?;
        detail.push(line);
    }
    Ok(detail.join("; "))
}

fn chain_rule() -> Check {
    let (n, m) = (5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let u = haar_unitary(n, &mut rng);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let clicks =
            ClickSequence::from((0..m).map(|_| rng.random_range(0..n)).collect::<Vec<_>>());
        let direct = sequence_probability(&u, &clicks, m).map_err(err)?;
        let chained = chained_sequence_probability(&u, &clicks, m).map_err(err)?;
        worst = worst.max((direct - chained).abs());
    }
    ensure(worst < 1e-9, format!("worst difference {worst:e}"))?;
    Ok(format!("worst difference {worst:.2e}"))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let runs: [&[&str]; 5] = [
        &[
            "--mode",
            "distribution",
            "--n",
            "7",
            "--m",
            "4",
            "--unitary",
            "haar",
            "--samples",
            "10000",
            "--seed",
            "42",
        ],
        &[
            "--mode",
            "entropy-grid",
            "--n",
            "10",
            "--unitary",
            "haar",
            "--samples",
            "2000",
            "--seed",
            "505",
        ],
        &[
            "--mode",
            "mixture-entropy",
            "--n",
            "6",
            "--k",
            "3",
            "--l",
            "3",
            "--unitary",
            "haar",
            "--samples",
            "10000",
            "--seed",
            "808",
        ],
        &[
            "--mode",
            "scaling-sweep",
            "--sizes",
            "6,8,10",
            "--unitary",
            "brickwall:N/2",
            "--samples",
            "2000",
            "--seed",
            "707",
        ],
        &[
            "--mode",
            "trajectory-dump",
            "--n",
            "8",
            "--unitary",
            "brickwall:3",
            "--samples",
            "500",
            "--seed",
            "7",
            "--waiting-times",
        ],
    ];
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let out = dir.path().join(format!("run{i}-t{threads}.out"));
            let status = Command::new(env!("CARGO_BIN_EXE_emitter-unravel"))
                .args(*args)
                .args(["--threads", threads, "--output", out.to_str().unwrap()])
                .output()
                .map_err(err)?;
            ensure(
                status.status.success(),
                format!(
                    "{args:?} failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ),
            )?;
            let manifest =
                fs::read_to_string(format!("{}.manifest.json", out.display())).map_err(err)?;
            // The manifest names its own output path, which differs per run.
            let manifest = manifest.replace(&format!("t{threads}.out"), "tN.out");
            outputs.push((fs::read(&out).map_err(err)?, manifest));
        }
        ensure(
            outputs[0] == outputs[1],
            format!("{} output differs between 1 and 4 threads", args[1]),
        )?;
    }
    Ok(format!(
        "{} runs byte-identical at 1 and 4 threads",
        runs.len()
    ))
}

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            1,
            "Hong-Ou-Mandel bunching",
            Some(Duration::from_secs(1)),
            hom,
        ),
        (
            2,
            "boson-sampling equivalence N=7 M=4",
            Some(Duration::from_secs(30)),
            boson_sampling,
        ),
        (
            3,
            "Ryser vs naive permanents",
            Some(Duration::from_secs(5)),
            permanents,
        ),
        (
            4,
            "single-click entropy law N=M=8",
            Some(Duration::from_secs(5)),
            single_click_law,
        ),
        (
            5,
            "single-click entropy bound N=M=10",
            Some(Duration::from_secs(60)),
            entropy_bound_check,
        ),
        (
            6,
            "unraveling invariance N=M=6 k=3",
            Some(Duration::from_secs(30)),
            unraveling_invariance,
        ),
        (
            7,
            "area vs volume scaling",
            Some(Duration::from_secs(600)),
            area_volume_scaling,
        ),
        (
            8,
            "mixture-entropy sandwich N=M=6",
            Some(Duration::from_secs(60)),
            sandwich,
        ),
        (
            9,
            "chain rule N=5 M=3",
            Some(Duration::from_secs(1)),
            chain_rule,
        ),
        (10, "thread-count determinism", None, determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if limit.is_some_and(|l| elapsed >= l) => Err(format!(
                "took {elapsed:.2?}, limit {:?}; {detail}",
                limit.unwrap()
            )),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS criterion {id:>2} {name} ({elapsed:.2?}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name} ({elapsed:.2?}): {detail}");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
