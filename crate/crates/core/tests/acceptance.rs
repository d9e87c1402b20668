//! End-to-end acceptance checks. Runs as a plain binary so every check
//! prints its own PASS/FAIL line even when an earlier one fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use tap3::audit::merkle::{leaf_hash, ProofStep};
use tap3::audit::scenario::{HopBehavior, RouteScenario};
use tap3::audit::{ActiveAttacker, MerkleCommitment, Outcome};
use tap3::crypto::hmac_sha256;
use tap3::metrics::{run_sweep, SweepResult, SweepSpec};
use tap3::monitor::{distance, mean_vector, train_threshold, SeqVector};
use tap3::routing::{contains_node_id, MonitorStats, ProtocolKind};
use tap3::sim::{run, AttackKind, RunOptions, RunOutput, ScenarioConfig};

const PAUSES: [f64; 7] = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0];
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const ALL: [ProtocolKind; 3] = [ProtocolKind::Tap3, ProtocolKind::SMprf, ProtocolKind::Mprf];

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn full_sweep() -> (SweepResult, Duration) {
    let spec = SweepSpec {
        base: ScenarioConfig::desk_with_attackers(ProtocolKind::Tap3),
        pause_times: PAUSES.to_vec(),
        protocols: ALL.to_vec(),
        seeds: SEEDS.to_vec(),
    };
    let t = Instant::now();
    let result = run_sweep(&spec).expect("sweep");
    (result, t.elapsed())
}

fn averaged(result: &SweepResult, p: ProtocolKind, pause: f64, metric: fn(&tap3::metrics::AveragedRow) -> Option<f64>) -> f64 {
    result.average(p, pause).and_then(metric).unwrap_or(f64::NAN)
}

fn grand(result: &SweepResult, p: ProtocolKind, metric: fn(&tap3::metrics::AveragedRow) -> Option<f64>) -> f64 {
    let v: Vec<f64> = PAUSES.iter().map(|&t| averaged(result, p, t, metric)).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn pdr_ordering(result: &SweepResult, elapsed: Duration) -> Check {
    let pdr = |a: &tap3::metrics::AveragedRow| a.pdr;
    let ordered = PAUSES
        .iter()
        .filter(|&&t| {
            let (a, b, c) = (
                averaged(result, ProtocolKind::Tap3, t, pdr),
                averaged(result, ProtocolKind::SMprf, t, pdr),
                averaged(result, ProtocolKind::Mprf, t, pdr),
            );
            a > b && b > c
        })
        .count();
    let gap = grand(result, ProtocolKind::Tap3, pdr) - grand(result, ProtocolKind::Mprf, pdr);
    let secs = elapsed.as_secs_f64();
    check(
        "pdr ordering",
        ordered >= 6 && gap >= 2.0 && secs < 180.0,
        format!("ordered at {ordered}/7, tap3-mprf gap {gap:.2} pp, sweep {secs:.1} s"),
    )
}

fn overhead_trend(result: &SweepResult) -> Check {
    let oh = |a: &tap3::metrics::AveragedRow| Some(a.overhead);
    let ratio = grand(result, ProtocolKind::Mprf, oh) / grand(result, ProtocolKind::Tap3, oh);
    let lowest = PAUSES
        .iter()
        .filter(|&&t| {
            let tap3 = averaged(result, ProtocolKind::Tap3, t, oh);
            ALL[1..].iter().all(|&p| tap3 < averaged(result, p, t, oh))
        })
        .count();
    check(
        "overhead trend",
        ratio >= 1.2 && lowest >= 5,
        format!("mprf/tap3 = {ratio:.3}, tap3 lowest at {lowest}/7"),
    )
}

fn delay_trend(result: &SweepResult) -> Check {
    let d = |a: &tap3::metrics::AveragedRow| a.avg_delay;
    let [t, s, m] = ALL.map(|p| grand(result, p, d));
    check(
        "delay trend",
        t < s && t < m,
        format!("tap3 {:.3} ms, smprf {:.3} ms, mprf {:.3} ms", t * 1e3, s * 1e3, m * 1e3),
    )
}

/// Every TAP3 run of the sweep grid, with headers captured.
fn tap3_runs() -> Vec<RunOutput> {
    let opts = RunOptions {
        capture_headers: true,
        ..RunOptions::default()
    };
    let grid: Vec<ScenarioConfig> = PAUSES
        .iter()
        .flat_map(|&pause| {
            SEEDS.iter().map(move |&seed| {
                let mut c = ScenarioConfig::desk_with_attackers(ProtocolKind::Tap3);
                c.pause_time = pause;
                c.rng_seed = seed;
                c
            })
        })
        .collect();
    grid.par_iter().map(|c| run(c, opts).expect("tap3 run")).collect()
}

fn detector(runs: &[RunOutput]) -> Check {
    let mut s = MonitorStats::default();
    let mut max_th: f64 = 0.0;
    for r in runs {
        s.forged_checked += r.monitor.forged_checked;
        s.forged_flagged += r.monitor.forged_flagged;
        s.clean_checked += r.monitor.clean_checked;
        s.clean_flagged += r.monitor.clean_flagged;
        max_th = max_th.max(r.max_threshold.unwrap_or(0.0));
    }
    let delta = ScenarioConfig::desk_with_attackers(ProtocolKind::Tap3)
        .attackers
        .iter()
        .find_map(|(_, a)| match a {
            AttackKind::SeqInflation { delta } => Some(*delta as f64),
            _ => None,
        })
        .unwrap();
    let tpr = s.forged_flagged as f64 / s.forged_checked.max(1) as f64;
    let fpr = s.clean_flagged as f64 / s.clean_checked.max(1) as f64;
    let scale = max_th.sqrt();
    check(
        "detector efficacy",
        s.forged_checked > 0 && s.clean_checked > 0 && tpr >= 0.95 && fpr <= 0.05 && delta >= 3.0 * scale,
        format!(
            "forged {}/{} flagged, clean {}/{} flagged, delta {delta} vs 3*sqrt(th) {:.1}",
            s.forged_flagged,
            s.forged_checked,
            s.clean_flagged,
            s.clean_checked,
            3.0 * scale
        ),
    )
}

fn dropper(n: usize, k: usize) -> HopBehavior {
    HopBehavior::DropSome {
        modulus: n as u64 + 1,
        residue: k as u64,
    }
}

fn audit_exactness() -> Check {
    let t = Instant::now();
    let (mut total, mut right) = (0usize, 0usize);
    let mut tally = |ok: bool| {
        total += 1;
        right += ok as usize;
    };
    for n in 3..=8 {
        for k in 1..=n {
            let r = RouteScenario::honest(n, 6).with(k, HopBehavior::ForgeFields).build().run();
            tally(matches!(r, Ok(ref r) if r.verdict == Outcome::NotFellow
                && r.active_attacker == Some(ActiveAttacker::Position(k))));
        }
    }
    for n in 1..=6 {
        for a in 1..=n {
            let single = RouteScenario::honest(n, 3 * (n as u64 + 1)).with(a, dropper(n, a));
            let r = single.build().run();
            tally(matches!(r, Ok(ref r) if r.passive_attackers == vec![a]));
            for b in a + 1..=n {
                let r = single.clone().with(b, dropper(n, b)).build().run();
                tally(matches!(r, Ok(ref r) if r.passive_attackers == vec![a, b]));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut false_accusations = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let packets = rng.gen_range(1..20);
        let mut s = RouteScenario::honest(n, packets);
        for _ in 0..rng.gen_range(0..4) {
            s.link_breaks.push((rng.gen_range(0..=n), rng.gen_range(0..packets)));
        }
        match s.build().run() {
            Ok(r) if r.active_attacker.is_none() && r.passive_attackers.is_empty() => {}
            _ => false_accusations += 1,
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        "audit exactness",
        right == total && false_accusations == 0 && secs < 30.0,
        format!("{right}/{total} injected sets named, {false_accusations}/100 honest routes accused, {secs:.2} s"),
    )
}

fn privacy(runs: &[RunOutput]) -> Check {
    let mut headers = 0usize;
    let mut leaks = 0usize;
    for out in runs {
        for h in &out.headers {
            headers += 1;
            let Some(f) = h.flow.map(|i| &out.flows[i]) else {
                continue;
            };
            if contains_node_id(&h.bytes, f.source) || contains_node_id(&h.bytes, f.dest) {
                leaks += 1;
            }
        }
    }
    check(
        "privacy invariant",
        headers > 0 && leaks == 0,
        format!("{leaks} endpoint ids in {headers} route headers over {} runs", runs.len()),
    )
}

fn unhex(s: &str) -> Vec<u8> {
    hex::decode(s).unwrap()
}

fn crypto_conformance() -> Check {
    let cases: [(Vec<u8>, Vec<u8>, &str); 4] = [
        (
            vec![0x0b; 20],
            b"Hi There".to_vec(),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7",
        ),
        (
            b"Jefe".to_vec(),
            b"what do ya want for nothing?".to_vec(),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843",
        ),
        (
            vec![0xaa; 20],
            vec![0xdd; 50],
            "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe",
        ),
        (
            (1..=25).collect(),
            vec![0xcd; 50],
            "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b",
        ),
    ];
    let hmac_ok = cases
        .iter()
        .filter(|(k, m, want)| hmac_sha256(k, m).to_vec() == unhex(want))
        .count();

    let mut rng = ChaCha8Rng::seed_from_u64(4231);
    let mut rejected = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=40);
        let data: Vec<Vec<u8>> = (0..n).map(|_| (0..rng.gen_range(1..64)).map(|_| rng.gen()).collect()).collect();
        let tree = MerkleCommitment::from_leaves(data.iter().map(|d| leaf_hash(d)).collect());
        let idx = rng.gen_range(0..n);
        let mut proof = tree.prove(idx).unwrap();
        let mut entry = data[idx].clone();
        let mut root = tree.root();
        assert!(proof.verify(&leaf_hash(&entry), &root));
        // Flip one bit of the entry, a proof sibling or the root.
        let targets = if proof.steps.is_empty() { 2 } else { 3 };
        match rng.gen_range(0..targets) {
            0 => {
                let i = rng.gen_range(0..entry.len() * 8);
                entry[i / 8] ^= 1 << (i % 8);
            }
            1 => {
                let i = rng.gen_range(0..256);
                root[i / 8] ^= 1 << (i % 8);
            }
            _ => {
                let s = rng.gen_range(0..proof.steps.len());
                let ProofStep { sibling, .. } = &mut proof.steps[s];
                let i = rng.gen_range(0..256);
                sibling[i / 8] ^= 1 << (i % 8);
            }
        }
        if !proof.verify(&leaf_hash(&entry), &root) {
            rejected += 1;
        }
    }
    check(
        "crypto conformance",
        hmac_ok == 4 && rejected == 1000,
        format!("hmac {hmac_ok}/4 vectors, merkle {rejected}/1000 tamperings rejected"),
    )
}

fn cli_twice(cfg: &ScenarioConfig) -> Result<bool, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, cfg.to_string()).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for k in 0..2 {
        let csv = dir.path().join(format!("out{k}.csv"));
        let trace = dir.path().join(format!("trace{k}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_tap3"))
            .arg("run")
            .arg("--config")
            .arg(&cfg_path)
            .args(["--seed", "7", "--out"])
            .arg(&csv)
            .arg("--trace")
            .arg(&trace)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("cli exited with {status}"));
        }
        let read = |p| std::fs::read(p).map_err(|e: std::io::Error| e.to_string());
        outputs.push((read(&csv)?, read(&trace)?));
    }
    Ok(outputs[0] == outputs[1])
}

fn determinism() -> Check {
    let opts = RunOptions {
        trace: true,
        ..RunOptions::default()
    };
    let mut same_runs = 0;
    for p in ALL {
        let mut c = ScenarioConfig::desk_with_attackers(p);
        c.pause_time = 20.0;
        c.rng_seed = 3;
        let a = run(&c, opts).expect("run");
        let b = run(&c, opts).expect("run");
        if a.report.csv_row() == b.report.csv_row() && a.trace_text() == b.trace_text() {
            same_runs += 1;
        }
    }
    let spec = SweepSpec {
        base: ScenarioConfig::desk_with_attackers(ProtocolKind::Tap3),
        pause_times: vec![0.0, 30.0],
        protocols: ALL.to_vec(),
        seeds: vec![1, 2],
    };
    let sweep_same = run_sweep(&spec).unwrap().to_csv() == run_sweep(&spec).unwrap().to_csv();
    let cli = cli_twice(&ScenarioConfig::desk_with_attackers(ProtocolKind::Tap3));
    check(
        "determinism",
        same_runs == 3 && sweep_same && cli == Ok(true),
        format!("runs identical {same_runs}/3, sweep csv identical {sweep_same}, cli files identical {cli:?}"),
    )
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn math_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=64);
        let scale = 10f64.powi(rng.gen_range(0..5));
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|_| [(); 3].map(|_| rng.gen_range(-1.0..1.0) * scale))
            .collect();
        let samples: Vec<SeqVector> = rows.iter().map(|r| SeqVector::new(r[0], r[1], r[2])).collect();

        // Brute force: per-coordinate sums, then every squared distance by hand.
        let mut m = [0.0; 3];
        for d in 0..3 {
            m[d] = rows.iter().map(|r| r[d]).sum::<f64>() / n as f64;
        }
        let dists: Vec<f64> = rows
            .iter()
            .map(|r| (r[0] - m[0]).powi(2) + (r[1] - m[1]).powi(2) + (r[2] - m[2]).powi(2))
            .collect();
        let th = dists.iter().cloned().fold(f64::MIN, f64::max);

        let got_m = mean_vector(&samples).unwrap();
        for d in 0..3 {
            worst = worst.max((got_m[d] - m[d]).abs() / scale);
        }
        for (s, want) in samples.iter().zip(&dists) {
            let got = distance(s, &got_m);
            worst = worst.max(if *want == 0.0 { got.abs() } else { rel_err(got, *want) });
        }
        let got_th = train_threshold(&samples).unwrap();
        worst = worst.max(if th == 0.0 { got_th.abs() } else { rel_err(got_th, th) });
    }
    check("math oracle", worst <= 1e-9, format!("worst relative error {worst:.2e} over 500 windows"))
}

fn main() -> ExitCode {
    let (sweep, elapsed) = full_sweep();
    let runs = tap3_runs();
    let checks = [
        pdr_ordering(&sweep, elapsed),
        overhead_trend(&sweep),
        delay_trend(&sweep),
        detector(&runs),
        audit_exactness(),
        privacy(&runs),
        crypto_conformance(),
        determinism(),
        math_oracle(),
    ];
    let mut failed = 0;
    for (i, c) in checks.iter().enumerate() {
        println!("{} {}. {}: {}", if c.pass { "PASS" } else { "FAIL" }, i + 1, c.name, c.detail);
        failed += !c.pass as usize;
    }
    println!("{}/{} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
