//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dms_core::consensus::complexity_counters;
use dms_core::harness::{
    report_lines, run_experiment, run_sweep, ExperimentConfig, ForecastSpec, QuadraticLayout,
    QuadraticSpec, TaskSpec,
};
use dms_core::numerics::{Dataset, MlpArch, MlpModel, Sample, WeightVector};
use dms_core::secagg::{
    detect_tampering, reconstruct, secure_aggregate, share, share_with_coefficients,
    FixedPointCodec, PrimeField, SharingParams, TamperCheck,
};
use dms_core::threats::{
    dlg_compare_topologies, run_poisoning_experiment, DlgConfig, PoisoningConfig,
};
use dms_core::{Error, Strategy};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn convergence_rate() -> Outcome {
    let cfg = ExperimentConfig {
        strategy: Strategy::Dfc,
        agents: 10,
        rounds: 2000,
        tolerance: Some(1e-10),
        ..Default::default()
    };
    let r = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let th = r.summary.bounds.clone().ok_or("no convergence check")?;
    let rounds = r.summary.rounds_to_tolerance;
    let rate = th.empirical_rate.ok_or("no empirical rate")?;

    let unstable = ExperimentConfig {
        strategy: Strategy::Dfc,
        agents: 1,
        rounds: 2000,
        allow_unstable: true,
        task: TaskSpec::Quadratic(QuadraticSpec {
            dim: 1,
            ..Default::default()
        }),
        learning: dms_core::harness::LearningSpec {
            gamma_scale: 3.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let diverged = matches!(run_experiment(&unstable), Err(Error::Divergence { .. }));
    check(
        rounds.is_some() && rate <= th.rate_bound + 0.01 && diverged,
        format!(
            "worst-MSE < 1e-10 after {rounds:?} rounds; slope {rate:.4} vs log bound {:.4}; 3/p divergence detected: {diverged}",
            th.rate_bound
        ),
    )
}

fn noise_floor() -> Outcome {
    let mut cfg = ExperimentConfig {
        strategy: Strategy::Dfc,
        agents: 10,
        rounds: 500,
        repetitions: 20,
        ..Default::default()
    };
    cfg.noise.variance = 0.01;
    let r = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let th = r.summary.bounds.ok_or("no convergence check")?;
    check(
        th.tail_mean <= 1.5 * th.noise_floor_bound,
        format!(
            "tail mean {:.4e} vs 1.5 x {:.4e} over 20 seeds",
            th.tail_mean, th.noise_floor_bound
        ),
    )
}

fn secure_sum_exact() -> Outcome {
    let field = PrimeField::default();
    let codec = FixedPointCodec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = 0;
    for trial in 0..1000 {
        let (nu, h) = [(3, 1), (4, 1), (5, 2)][trial % 3];
        let params = SharingParams::new(nu, h, field).map_err(|e| e.to_string())?;
        let contributors = rng.random_range(3..8);
        let dim = rng.random_range(1..6);
        let inputs: Vec<WeightVector<f64>> = (0..contributors)
            .map(|_| {
                let v: Vec<f64> = (0..dim)
                    .map(|_| rng.random_range(-(1i64 << 30)..(1i64 << 30)) as f64 / 65536.0)
                    .collect();
                WeightVector::from(v)
            })
            .collect();
        let mut plain = WeightVector::zeros(dim);
        for x in &inputs {
            plain.axpy(1.0, x).unwrap();
        }
        let (sum, _) =
            secure_aggregate(&inputs, &params, &codec, &mut rng).map_err(|e| e.to_string())?;
        if sum != plain {
            failures += 1;
        }

        let secret = field.random(&mut rng);
        let shares = share(secret, &params, &mut rng);
        for subset in subsets(nu, h + 1) {
            let picked: Vec<_> = subset.iter().map(|&i| shares[i]).collect();
            if reconstruct(&picked, &params).ok() != Some(secret) {
                failures += 1;
            }
        }
        for subset in subsets(nu, h) {
            let picked: Vec<_> = subset.iter().map(|&i| shares[i]).collect();
            if !matches!(
                reconstruct(&picked, &params),
                Err(Error::InsufficientShares { .. })
            ) {
                failures += 1;
            }
        }
    }
    check(
        failures == 0,
        format!("1000 sessions, {failures} mismatches"),
    )
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

fn threshold_privacy() -> Outcome {
    let field = PrimeField::new(31).map_err(|e| e.to_string())?;
    let params = SharingParams::new(3, 1, field).map_err(|e| e.to_string())?;
    let mut worst_tv: f64 = 0.0;
    for party in 0..3 {
        for s in 0..31u128 {
            let mut counts = [0usize; 31];
            for a in 0..31u128 {
                let shares = share_with_coefficients(field.elem(s), &[field.elem(a)], &params)
                    .map_err(|e| e.to_string())?;
                counts[shares[party].value.value() as usize] += 1;
            }
            let tv = 0.5
                * counts
                    .iter()
                    .map(|&c| (c as f64 / 31.0 - 1.0 / 31.0).abs())
                    .sum::<f64>();
            worst_tv = worst_tv.max(tv);
        }
    }
    check(
        worst_tv == 0.0,
        format!("max total-variation distance {worst_tv} over 3 parties x 31 secrets"),
    )
}

fn tamper_detection() -> Outcome {
    let field = PrimeField::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut detected = 0;
    for trial in 0..1000 {
        let (nu, h) = [(3, 1), (4, 1), (5, 2), (7, 3)][trial % 4];
        let params = SharingParams::new(nu, h, field).map_err(|e| e.to_string())?;
        let mut shares = share(field.random(&mut rng), &params, &mut rng);
        let victim = rng.random_range(0..nu);
        let delta = field.elem(rng.random_range(1..u64::MAX) as u128);
        shares[victim].value = field.add(shares[victim].value, delta);
        if matches!(
            detect_tampering(&shares, &params),
            Ok(TamperCheck::Inconsistent(_))
        ) {
            detected += 1;
        }
    }
    check(
        detected == 1000,
        format!("{detected}/1000 corrupted share sets flagged"),
    )
}

fn edge_reduction() -> Outcome {
    let cfg = ExperimentConfig {
        strategy: Strategy::Dms,
        agents: 30,
        rounds: 1000,
        ..Default::default()
    };
    let r = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let c = complexity_counters(r.rounds.iter().map(|x| &x.metrics));
    let ratio = c.mean_edges / 435.0;
    let closed_form = c.per_agent_messages == c.degree_sums && c.matches_degree_sum;
    check(
        (0.45..=0.55).contains(&ratio) && closed_form,
        format!("mean edges {:.1} = {ratio:.3} x 435; per-agent messages equal degree sums: {closed_form}", c.mean_edges),
    )
}

fn linear_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn scalability() -> Outcome {
    let base = ExperimentConfig {
        rounds: 20_000,
        tolerance: Some(1e-6),
        task: TaskSpec::Quadratic(QuadraticSpec {
            layout: QuadraticLayout::Anchored,
            ..Default::default()
        }),
        ..Default::default()
    };
    let ns = [5, 10, 20, 40];
    let pts = run_sweep(&base, &[Strategy::Dring, Strategy::Dfc, Strategy::Dms], &ns)
        .map_err(|e| e.to_string())?;
    let rounds = |s: Strategy| -> Option<Vec<f64>> {
        ns.iter()
            .map(|&n| {
                pts.iter()
                    .find(|p| p.strategy == s && p.agents == n)?
                    .rounds_to_tolerance
                    .map(|r| r as f64)
            })
            .collect()
    };
    let (ring, dfc, dms) = match (
        rounds(Strategy::Dring),
        rounds(Strategy::Dfc),
        rounds(Strategy::Dms),
    ) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err("a run missed the tolerance".into()),
    };
    let increasing = ring.windows(2).all(|w| w[1] > w[0]);
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let r2 = linear_r2(&x, &ring);
    let worst_ratio = dms.iter().zip(&dfc).map(|(a, b)| a / b).fold(0.0, f64::max);
    check(
        increasing && r2 > 0.9 && worst_ratio <= 1.5,
        format!("ring rounds {ring:?} (R^2 {r2:.3}); dms {dms:?} vs dfc {dfc:?}, max ratio {worst_ratio:.2}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn poisoning_ordering() -> Outcome {
    let reports = (0..10)
        .map(|seed| {
            run_poisoning_experiment(&PoisoningConfig {
                seed,
                ..Default::default()
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let dms = median(reports.iter().map(|r| r.dms.inflation).collect());
    let fed = median(reports.iter().map(|r| r.fedavg.inflation).collect());
    check(
        dms < fed,
        format!("median error inflation: dms {dms:.3}, fedavg {fed:.3}"),
    )
}

fn leakage_ordering() -> Outcome {
    let reports = (0..10)
        .map(|seed| {
            dlg_compare_topologies(&DlgConfig {
                seed,
                secure: true,
                ..Default::default()
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let fed_ok = reports.iter().filter(|r| r.fedavg.input_mse < 1e-3).count();
    let dms_worse = reports
        .iter()
        .filter(|r| r.dms.input_mse > r.fedavg.input_mse)
        .count();
    let leaks = reports
        .iter()
        .filter(|r| r.secure.as_ref().is_none_or(|s| s.transcript_leaks))
        .count();
    check(
        fed_ok >= 8 && dms_worse >= 9 && leaks == 0,
        format!("fedavg reconstructed {fed_ok}/10; dms worse {dms_worse}/10; transcripts exposing a coordinate {leaks}/10"),
    )
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.random_range(2..5);
        let sizes: Vec<usize> = (0..depth).map(|_| rng.random_range(1..7)).collect();
        let arch = MlpArch::new(sizes.clone()).map_err(|e| e.to_string())?;
        let model = MlpModel::<f64>::random(arch, &mut rng);
        let samples: Vec<Sample<f64>> = (0..rng.random_range(1..5))
            .map(|_| Sample {
                input: (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect(),
                target: (0..sizes[depth - 1])
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            })
            .collect();
        let batch = Dataset::new(samples).map_err(|e| e.to_string())?;
        let (_, grad) = model.loss_and_grad(&batch).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..grad.dim() {
            let mut plus = model.params().clone();
            plus[i] += h;
            let mut minus = model.params().clone();
            minus[i] -= h;
            let fd = (model.with_params(plus).unwrap().loss(&batch).unwrap()
                - model.with_params(minus).unwrap().loss(&batch).unwrap())
                / (2.0 * h);
            diff = diff.max((fd - grad[i]).abs());
            scale = scale.max(fd.abs()).max(grad[i].abs());
        }
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
    }
    check(
        worst < 1e-5,
        format!("max relative error {worst:.3e} over 100 architectures"),
    )
}

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig {
        strategy: Strategy::Dms,
        agents: 15,
        rounds: 200,
        seed: 99,
        ..Default::default()
    };
    cfg.noise.variance = 0.01;
    cfg.secure.enabled = true;
    let a = report_lines(&run_experiment(&cfg).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let b = report_lines(&run_experiment(&cfg).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    check(
        a == b,
        format!("{} report lines, identical: {}", a.len(), a == b),
    )
}

fn forecast_parity() -> Outcome {
    let run = |strategy: Strategy| -> Result<f64, String> {
        let mut cfg = ExperimentConfig {
            strategy,
            agents: 30,
            rounds: 300,
            task: TaskSpec::Forecast(ForecastSpec {
                days: 14,
                hidden: vec![8],
                ..Default::default()
            }),
            ..Default::default()
        };
        cfg.learning.shared_init = true;
        let r = run_experiment(&cfg).map_err(|e| e.to_string())?;
        r.summary
            .test_mse
            .ok_or_else(|| "no test error".to_string())
    };
    let central = run(Strategy::Centralized)?;
    let others: Vec<(Strategy, f64)> = [
        Strategy::FedAvg,
        Strategy::Dring,
        Strategy::Dfc,
        Strategy::Dms,
    ]
    .into_iter()
    .map(|s| run(s).map(|v| (s, v)))
    .collect::<Result<_, _>>()?;
    let within = others
        .iter()
        .all(|(_, v)| (v / central - 1.0).abs() <= 0.25);
    let dms = others.iter().find(|(s, _)| *s == Strategy::Dms).unwrap().1;
    let worst_other = others
        .iter()
        .filter(|(s, _)| *s != Strategy::Dms)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let table: Vec<String> = others.iter().map(|(s, v)| format!("{s} {v:.4e}")).collect();
    check(
        within && dms <= worst_other,
        format!("centralized {central:.4e}; {}", table.join(", ")),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 12] = [
        (
            "1 convergence rate",
            convergence_rate,
            Some(Duration::from_secs(10)),
        ),
        ("2 noise floor", noise_floor, Some(Duration::from_secs(60))),
        (
            "3 secure sum exact",
            secure_sum_exact,
            Some(Duration::from_secs(30)),
        ),
        ("4 threshold privacy", threshold_privacy, None),
        ("5 tamper detection", tamper_detection, None),
        ("6 edge reduction", edge_reduction, None),
        (
            "7 scalability trend",
            scalability,
            Some(Duration::from_secs(300)),
        ),
        (
            "8 poisoning ordering",
            poisoning_ordering,
            Some(Duration::from_secs(300)),
        ),
        (
            "9 leakage ordering",
            leakage_ordering,
            Some(Duration::from_secs(180)),
        ),
        ("10 gradient check", gradient_check, None),
        ("11 determinism", determinism, None),
        ("12 forecast parity", forecast_parity, None),
    ];
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let late = limit.is_some_and(|l| elapsed > l);
        let (status, detail) = match (&outcome, late) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {:?} budget", limit.unwrap())),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {name:<22} {status}  [{:.1}s] {detail}",
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
