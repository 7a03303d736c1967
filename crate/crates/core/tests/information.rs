use uaelab::enumerate::{explore_naive, RunSet};
use uaelab::family::RunSetFamily;
use uaelab::machine::MachineConfig;
use uaelab::weights::{mutual_info, nid, MindState};
use uaelab::{Bits, Dyadic};

fn naive(depth: usize, steps: u64, aux: &Bits) -> RunSet {
    explore_naive(&MachineConfig::new(depth, steps, aux.clone()).unwrap()).unwrap()
}

/// −log2 of the halting mass with output `x`, summed straight from records.
fn k_naive(rs: &RunSet, x: &Bits) -> Option<f64> {
    let m: Dyadic = rs.halted().filter(|r| r.output == *x).map(|r| r.mass()).sum();
    (!m.is_zero()).then(|| -m.log2())
}

#[test]
fn nid_matches_naive_oracle_and_is_symmetric() {
    let (depth, steps) = (12, 100);
    let fam = RunSetFamily::in_memory(depth, steps).unwrap();
    let empty = naive(depth, steps, &Bits::new());
    let states: Vec<MindState> = MindState::universe(1)
        .into_iter()
        .chain(MindState::universe(2))
        .collect();
    let mut defined = 0;
    for a in states.iter().filter(|s| s.width() == 1) {
        for b in states.iter().filter(|s| s.width() == 1) {
            let (ra, rb) = (naive(depth, steps, a.bits()), naive(depth, steps, b.bits()));
            let oracle = (|| {
                let top = k_naive(&rb, a.bits())?.max(k_naive(&ra, b.bits())?);
                Some(top / k_naive(&empty, a.bits())?.max(k_naive(&empty, b.bits())?))
            })();
            let got = nid(&fam, a, b).ok();
            assert_eq!(got, oracle, "NID({a},{b})");
            assert_eq!(got, nid(&fam, b, a).ok());
            defined += got.is_some() as usize;
        }
    }
    assert!(defined > 0);
}

/// The copy program AUX OUT HALT is nine bits, the same as writing one bit
/// literally, so one-bit self-information is zero until longer copies win.
#[test]
fn copy_loop_depth_and_self_information() {
    let fam = RunSetFamily::in_memory(12, 100).unwrap();
    for a in MindState::universe(1) {
        let first = (3..=12).step_by(3).find(|&d| {
            naive(d, 100, a.bits())
                .halted()
                .any(|r| r.output == *a.bits() && r.consumed_prefix.as_slice()[..3] == [true, true, true])
        });
        assert_eq!(first, Some(9), "copy of {a} first appears at depth 9");
        let rs_a = naive(12, 100, a.bits());
        let empty = naive(12, 100, &Bits::new());
        let expected = k_naive(&empty, a.bits()).unwrap() - k_naive(&rs_a, a.bits()).unwrap();
        assert_eq!(mutual_info(&fam, &a, &a).unwrap(), expected);
    }
}

/// NID(a, a) at depth 15 for every state with a defined value, widths 1 to 4.
/// At these caps a copy costs about as much as a literal, so the self
/// distance stays near 1. The frozen numbers come from the calibration run.
#[test]
fn self_distance_at_depth_fifteen() {
    let fam = RunSetFamily::in_memory(15, 200).unwrap();
    let mut values = Vec::new();
    for w in 1..=4 {
        for a in MindState::universe(w) {
            if let Ok(v) = nid(&fam, &a, &a) {
                values.push((a, v));
            }
        }
    }
    assert_eq!(values.len(), 11);
    let (best, lo) = values.iter().min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
    let hi = values.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    assert_eq!(best.to_string(), "1");
    assert!((lo - 0.8736048276022793).abs() < 1e-12, "{lo}");
    assert_eq!(hi, 1.0);
}
