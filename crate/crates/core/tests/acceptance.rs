//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uaelab::bits::bits;
use uaelab::cosmos::{fit_g_log2, simulation_ratio, SubstrateSet};
use uaelab::enumerate::{encode_runset, explore, explore_naive, explore_with, ExploreOptions, RunSet};
use uaelab::experiments::{
    a_z, resolution_check, teleport_ratio, v_hat, AgentTimeline, Coarsen, Scenario, ScenarioPair, UtilitySpec,
};
use uaelab::family::RunSetFamily;
use uaelab::machine::MachineConfig;
use uaelab::prior::{big_m_hat, m_hat, DiscreteTable};
use uaelab::weights::{rank_agreement, state, weight_chain, MindState, SequenceModel};
use uaelab::{Bits, Dyadic, Error};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rs(depth: usize, steps: u64) -> RunSet {
    explore(&MachineConfig::unconditional(depth, steps).unwrap()).unwrap()
}

const DEPTHS: [usize; 5] = [3, 6, 9, 12, 14];
const STEPS: [u64; 3] = [10, 50, 200];

fn grid() -> impl Iterator<Item = (usize, u64)> {
    DEPTHS.into_iter().flat_map(|d| STEPS.into_iter().map(move |s| (d, s)))
}

fn oracle_equivalence() -> Outcome {
    let mut slowest = Duration::ZERO;
    for (d, s) in grid() {
        let cfg = MachineConfig::unconditional(d, s).unwrap();
        let start = Instant::now();
        let fast = explore(&cfg).unwrap();
        let naive = explore_naive(&cfg).unwrap();
        let took = start.elapsed();
        slowest = slowest.max(took);
        ensure(fast == naive, || format!("RunSets differ at depth {d}, steps {s}"))?;
        ensure(took < Duration::from_secs(60), || {
            format!("depth {d}, steps {s} took {took:?}")
        })?;
    }
    Ok(format!("15 cap pairs identical, slowest comparison {slowest:.2?}"))
}

fn tiling() -> Outcome {
    for (d, s) in grid() {
        let m = rs(d, s).total_mass();
        ensure(m == Dyadic::ONE, || format!("mass {m} at depth {d}, steps {s}"))?;
    }
    Ok("Σ 2^-|prefix| = 1 on all 15 RunSets".into())
}

fn prefix_free() -> Outcome {
    let mut halted = 0;
    for (d, s) in grid() {
        let r = rs(d, s);
        halted += r.halted().count();
        ensure(r.prefix_violations() == 0, || {
            format!("violations at depth {d}, steps {s}")
        })?;
    }
    Ok(format!("0 violations among {halted} halting programs"))
}

fn all_strings(max_len: usize) -> Vec<Bits> {
    (0..=max_len)
        .flat_map(|len| (0..1u64 << len).map(move |v| Bits::from_uint(v, len)))
        .collect()
}

fn semimeasure() -> Outcome {
    let r = rs(14, 200);
    let table = DiscreteTable::new(&r);
    let total = table.total();
    ensure(total <= Dyadic::ONE, || format!("Σ m̂ = {total}"))?;
    // Every string is the image of exactly one natural, so Σ_n m̂_nat(n) is
    // the same sum taken in natural-number order.
    let nat: Dyadic = table
        .iter()
        .map(|(x, _)| table.natural(x.to_natural().expect("bijection")))
        .sum();
    ensure(nat <= Dyadic::ONE, || format!("Σ m̂_nat = {nat}"))?;
    let mut checked = 0;
    for x in all_strings(6) {
        let parent = big_m_hat(&r, &x).value;
        let kids = big_m_hat(&r, &x.concat(&bits("0"))).value + big_m_hat(&r, &x.concat(&bits("1"))).value;
        ensure(parent >= kids, || format!("M̂({x}) = {parent} < {kids}"))?;
        checked += 1;
    }
    Ok(format!("Σ m̂ = {total}, Σ m̂_nat = {nat}, {checked} monotone splits"))
}

fn cap_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let subjects: Vec<Bits> = (0..20)
        .map(|_| {
            let len = rng.gen_range(0..=5);
            (0..len).map(|_| rng.gen_bool(0.5)).collect()
        })
        .collect();
    let by_depth = [rs(9, 200), rs(12, 200), rs(14, 200)];
    let by_steps = [rs(14, 50), rs(14, 200)];
    for x in &subjects {
        for pair in by_depth.windows(2).chain(by_steps.windows(2)) {
            let (lo, hi) = (&pair[0], &pair[1]);
            for (name, a, b) in [
                ("m̂", m_hat(lo, x).value, m_hat(hi, x).value),
                ("M̂", big_m_hat(lo, x).value, big_m_hat(hi, x).value),
            ] {
                ensure(a <= b, || {
                    format!(
                        "{name}({x}) drops from {a} (d{} s{}) to {b} (d{} s{})",
                        lo.depth_cap(),
                        lo.step_cap(),
                        hi.depth_cap(),
                        hi.step_cap()
                    )
                })?;
            }
        }
    }
    Ok("20 subjects, m̂ and M̂ non-decreasing in depth 9→12→14 and steps 50→200".into())
}

fn parallel_determinism() -> Outcome {
    let cfg = MachineConfig::unconditional(14, 200).unwrap();
    let bytes: Vec<Vec<u8>> = [1, 2, 8]
        .iter()
        .map(|&w| encode_runset(&explore_with(&cfg, &ExploreOptions::with_workers(w)).unwrap()))
        .collect();
    ensure(bytes[0] == bytes[1] && bytes[1] == bytes[2], || {
        "cache bytes differ across worker counts".into()
    })?;
    Ok(format!(
        "1, 2 and 8 workers give identical {}-byte caches",
        bytes[0].len()
    ))
}

fn weight_identity() -> Outcome {
    let r = rs(12, 200);
    let n_max = 8;
    let model = SequenceModel::new(&r, 2, n_max).unwrap();
    let (mut checked, mut zero_evidence, mut worst) = (0, 0, 0.0f64);
    for a in MindState::universe(2) {
        let post = match model.posterior(&a) {
            Ok(p) => p,
            Err(Error::ZeroEvidence(_)) => {
                zero_evidence += 4;
                continue;
            }
            Err(e) => return Err(e.to_string()),
        };
        for b in MindState::universe(2) {
            let chain = weight_chain(&r, &a, &b, n_max).map_err(|e| e.to_string())?;
            ensure(chain.evidence == post.evidence(), || {
                format!("evidence differs for {a}")
            })?;
            ensure(chain.numerator == post.weight_numerator(&b), || {
                format!(
                    "numerators differ for ({a},{b}): {} vs {}",
                    chain.numerator,
                    post.weight_numerator(&b)
                )
            })?;
            let diff = (chain.value() - post.weight(&b)).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-12, || format!("({a},{b}) differs by {diff}"))?;
            checked += 1;
        }
    }
    ensure(checked > 0, || "no pair had nonzero evidence".into())?;
    Ok(format!(
        "{checked} pairs exact ({zero_evidence} skipped for zero evidence), max float gap {worst:e}"
    ))
}

fn v_hat_identity() -> Outcome {
    let r = rs(12, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let table: BTreeMap<MindState, f64> = MindState::universe(2)
        .into_iter()
        .map(|s| (s, rng.gen_range(-1.0..=1.0)))
        .collect();
    let utilities = [
        UtilitySpec::PopcountFraction,
        UtilitySpec::ConstantOne,
        UtilitySpec::lookup_table(table).unwrap(),
    ];
    // Width 2 has only four states, so every state is covered instead of
    // sampling ten.
    let (mut checked, mut worst) = (0, 0.0f64);
    for a in MindState::universe(2) {
        for u in &utilities {
            match v_hat(&r, &a, u, 8) {
                Ok(v) => {
                    let diff = (v.weight_sum - v.direct).abs();
                    worst = worst.max(diff);
                    ensure(diff <= 1e-9, || format!("V̂({a}) orders differ by {diff}"))?;
                    checked += 1;
                }
                Err(Error::ZeroEvidence(_)) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    ensure(checked > 0, || "no state had nonzero evidence".into())?;
    Ok(format!("{checked} (state, utility) cases, max gap {worst:e}"))
}

fn decision_identities() -> Outcome {
    let r = rs(12, 200);
    let pair = |a: &str, b: &str, p: f64| ScenarioPair {
        a: state(a),
        b: state(b),
        p,
    };
    let s = Scenario::new("s", vec![pair("0", "0", 0.25), pair("1", "0", 0.75)]).unwrap();
    let t = teleport_ratio(&r, &s, &s, 8).map_err(|e| e.to_string())?;
    ensure(t.ratio == 1.0, || format!("teleport_ratio(s,s) = {}", t.ratio))?;

    let rs_phi = explore(&MachineConfig::new(12, 200, bits("0110")).unwrap()).unwrap();
    let set = SubstrateSet::new("R", vec![state("0"), state("1")]).unwrap();
    let sim = simulation_ratio(&rs_phi, &set, &set).map_err(|e| e.to_string())?;
    ensure((sim.ratio, sim.p_sim) == (1.0, 0.5), || {
        format!("simulation_ratio(S,S) = {:?}", (sim.ratio, sim.p_sim))
    })?;

    let states = vec![state("0"), state("1"), state("0")];
    let tl = [
        AgentTimeline::new("x", states.clone()).unwrap(),
        AgentTimeline::new("y", states).unwrap(),
    ];
    let az = a_z(&r, &tl, 8, true).map_err(|e| e.to_string())?;
    ensure(az.product_form == 1.0 && az.geomean_form == 1.0, || {
        format!("mirrored A_Z = {} / {}", az.product_form, az.geomean_form)
    })?;

    let res = resolution_check(&r, &state("00"), &state("00"), &state("00"), Coarsen::EvenSubsample, 8)
        .map_err(|e| e.to_string())?;
    ensure(res.log2_deviation == 0.0, || {
        format!("deviation {}", res.log2_deviation)
    })?;
    Ok(format!(
        "teleport 1, simulation (1, 0.5), mirrored A_Z 1 over {} terms, resolution deviation 0",
        az.defined_terms
    ))
}

/// Minimizes Σ (r_i − x)^2 over x by successively finer grids.
fn grid_search(residuals: &[f64]) -> f64 {
    let objective = |x: f64| residuals.iter().map(|r| (r - x).powi(2)).sum::<f64>();
    let (mut lo, mut hi) = residuals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &r| (l.min(r), h.max(r)));
    let mut best = lo;
    for _ in 0..6 {
        let step = (hi - lo).max(1e-12) / 1000.0;
        best = (0..=1000)
            .map(|i| lo + step * i as f64)
            .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
            .unwrap();
        lo = best - step;
        hi = best + step;
    }
    best
}

fn fit_g_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for set in 0..5 {
        let n = rng.gen_range(2..=12);
        let true_log_g = rng.gen_range(-20.0..20.0);
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let rhs = rng.gen_range(-40.0..-5.0);
                (rhs + true_log_g + rng.gen_range(-2.0..2.0), rhs)
            })
            .collect();
        let fit = fit_g_log2(&points).map_err(|e| e.to_string())?;
        let residuals: Vec<f64> = points.iter().map(|(l, r)| l - r).collect();
        let oracle = grid_search(&residuals);
        let rel = (fit.log2_g - oracle).abs() / oracle.abs().max(1e-9);
        worst = worst.max(rel);
        ensure(rel <= 1e-3, || {
            format!("set {set}: closed {} vs grid {oracle}", fit.log2_g)
        })?;
    }
    Ok(format!("5 synthetic sets, max relative gap in log g {worst:e}"))
}

fn golden_pipeline() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let cache = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_uaelab"))
        .args(["--threads", "8", "--cache-dir"])
        .arg(cache.path())
        .args(["experiment", "pipeline"])
        .arg(dir.join("pipeline.json"))
        .arg("--build-cache")
        .output()
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure(out.status.success(), || {
        format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })?;
    let golden = std::fs::read(dir.join("pipeline.report.json")).map_err(|e| e.to_string())?;
    ensure(out.stdout == golden, || {
        "report differs from tests/golden/pipeline.report.json".into()
    })?;
    ensure(took < Duration::from_secs(600), || format!("took {took:?}"))?;
    Ok(format!("byte-identical report in {took:.2?}"))
}

/// Spearman agreement of the three weight estimators over b for fixed a at
/// depth 12. Reported only; no equality is claimed between them.
fn rank_diagnostic() -> String {
    let fam = RunSetFamily::in_memory(12, 200).unwrap();
    let bs: Vec<MindState> = MindState::universe(2);
    let a = state("00");
    match rank_agreement(&fam, &a, &bs, 8) {
        Ok(r) => format!(
            "rank agreement at depth 12, a = {a}: {} points, def~fast {:?}, def~cond {:?}, fast~cond {:?}",
            r.points, r.definitional_vs_fast, r.definitional_vs_conditional, r.fast_vs_conditional
        ),
        Err(e) => format!("rank agreement unavailable: {e}"),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("1 oracle equivalence", oracle_equivalence),
        ("2 tree tiling", tiling),
        ("3 prefix-free domain", prefix_free),
        ("4 semimeasure suite", semimeasure),
        ("5 cap monotonicity", cap_monotonicity),
        ("6 parallel determinism", parallel_determinism),
        ("7 weight identity", weight_identity),
        ("8 v_hat order identity", v_hat_identity),
        ("9 exact decision identities", decision_identities),
        ("10 fit_g vs grid search", fit_g_oracle),
        ("11 calibration regression", golden_pipeline),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    println!("diagnostic {}", rank_diagnostic());
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
