use flute_twin::fingering::{
    classify_register, transition_diff, FingeringError, FingeringTable, RegisterBounds,
};
use flute_twin::{KeyId, KeyMask, Register};
use proptest::prelude::*;

fn mask(keys: &[KeyId]) -> KeyMask {
    keys.iter().copied().collect()
}

#[test]
fn reference_fingerings() {
    use KeyId::*;
    let t = FingeringTable::default();
    assert_eq!(
        t.lookup(60).unwrap(),
        mask(&[LowC, CSharp, D, E, F, G, A, BFlat, C, B])
    );
    assert_eq!(
        t.lookup(96).unwrap(),
        mask(&[DSharpTrillLever, GSharpLever, F, G, A, C])
    );
    assert_eq!(t.lookup(69).unwrap(), mask(&[DSharpLever, A, BFlat, C, B]));
    assert_eq!(t.lookup(59), Err(FingeringError::Range(59)));
    assert_eq!(t.lookup(97), Err(FingeringError::Range(97)));
}

#[test]
fn f_to_f_sharp_moves_keys_both_ways() {
    use KeyId::*;
    let t = FingeringTable::default();
    let (press, release) = transition_diff(t.lookup(65).unwrap(), t.lookup(66).unwrap());
    assert_eq!(press, mask(&[E]));
    assert_eq!(release, mask(&[D, F]));
}

#[test]
fn kojo_registers() {
    let b = RegisterBounds::default();
    let notes = [69u8, 69, 74, 76, 77, 76, 74, 70, 70, 69, 67, 69];
    let regs: Vec<Register> = notes.iter().map(|&n| b.classify(n).unwrap()).collect();
    let mut want = vec![Register::Low; 12];
    for r in &mut want[2..=6] {
        *r = Register::Middle;
    }
    assert_eq!(regs, want);
}

#[test]
fn register_edges() {
    let b = RegisterBounds::default();
    assert_eq!(b.classify(73).unwrap(), Register::Low);
    assert_eq!(b.classify(74).unwrap(), Register::Middle);
    assert_eq!(b.classify(93).unwrap(), Register::Middle);
    assert_eq!(b.classify(94).unwrap(), Register::High);
    assert_eq!(classify_register(72, 71).unwrap(), Register::Middle);
    assert!(classify_register(100, 73).is_err());
}

#[test]
fn octave_twins_resolve_to_the_intended_note() {
    let t = FingeringTable::default();
    for n in 60..=96u8 {
        assert_eq!(t.sounding_note(t.lookup(n).unwrap(), n), Some(n));
    }
}

#[test]
fn table_parse_errors() {
    let full = FingeringTable::default().to_text();
    let missing: String = full.lines().filter(|l| !l.starts_with("D5 ")).map(|l| format!("{l}\n")).collect();
    assert_eq!(
        FingeringTable::parse(&missing),
        Err(FingeringError::Missing("D5".into()))
    );
    let dup = format!("{full}C4 -\n");
    assert!(matches!(FingeringTable::parse(&dup), Err(FingeringError::Parse { .. })));
    let bad_key = full.replacen("C4 ", "C4 Thumb, ", 1);
    assert!(matches!(FingeringTable::parse(&bad_key), Err(FingeringError::Parse { .. })));
}

fn any_mask() -> impl Strategy<Value = KeyMask> {
    (0u16..1 << 14).prop_map(KeyMask::from_bits)
}

proptest! {
    #[test]
    fn diff_reconstructs_the_target(a in any_mask(), b in any_mask()) {
        let (press, release) = transition_diff(a, b);
        prop_assert_eq!(a.difference(release).union(press), b);
        prop_assert!(press.intersection(release).is_empty());
        prop_assert!(press.intersection(a).is_empty());
        prop_assert_eq!(release.difference(a), KeyMask::EMPTY);
    }

    #[test]
    fn registers_are_monotone(a in 60u8..=96, b in 60u8..=96, low_max in 60u8..=93) {
        let bounds = RegisterBounds { low_max, high_min: 94 };
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(bounds.classify(lo).unwrap() <= bounds.classify(hi).unwrap());
    }

    #[test]
    fn table_text_is_idempotent(masks in prop::collection::vec(any_mask(), 37)) {
        let text: String = (60u8..=96)
            .zip(&masks)
            .map(|(n, m)| format!("{} {m}\n", flute_twin::midi_ingest::note_name(n)))
            .collect();
        let t = FingeringTable::parse(&text).unwrap();
        for (n, m) in (60u8..=96).zip(&masks) {
            prop_assert_eq!(t.lookup(n).unwrap(), *m);
        }
        let again = FingeringTable::parse(&t.to_text()).unwrap();
        prop_assert_eq!(&again, &t);
        prop_assert_eq!(again.to_text(), t.to_text());
    }
}
