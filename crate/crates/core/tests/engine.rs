mod common;

use cibflow::engine::*;
use cibflow::fixtures;
use cibflow::model::*;
use cibflow::Error;
use proptest::prelude::*;

fn z(v: &[usize]) -> Scenario {
    Scenario(v.to_vec())
}

#[test]
fn hand_balance_of_the_two_by_two() {
    let spec = fixtures::two_by_two();
    let theta = impact_balance(&spec, &spec.cim, &z(&[0, 0])).unwrap();
    assert_eq!(theta.row(0), &[1.0, -1.0]);
    assert_eq!(theta.row(1), &[2.0, -2.0]);

    assert!(
        check_consistency(&spec, &spec.cim, &z(&[0, 0]))
            .unwrap()
            .consistent
    );
    let c = check_consistency(&spec, &spec.cim, &z(&[0, 1])).unwrap();
    assert!(!c.consistent);
    assert_eq!(c.deficits[1], 4.0);
}

#[test]
fn zero_matrix_is_inert() {
    let spec = fixtures::zero_spec(&[2, 3, 2]);
    for s in common::all_scenarios(&[2, 3, 2]) {
        let theta = impact_balance(&spec, &spec.cim, &s).unwrap();
        assert!(theta.scores().iter().all(|&t| t == 0.0));
        assert!(check_consistency(&spec, &spec.cim, &s).unwrap().consistent);
        let found = find_attractor(&spec, &spec.cim, &s, 10).unwrap();
        let a = found.attractor().unwrap();
        assert_eq!(a.kind, AttractorKind::FixedPoint);
        assert_eq!(a.scenarios, vec![s.clone()]);
    }
    assert_eq!(
        enumerate_consistent(&spec, &spec.cim, 100).unwrap().len(),
        12
    );
}

#[test]
fn mismatched_matrix_is_a_structure_error() {
    let spec = fixtures::two_by_two();
    let other = CrossImpactMatrix::zeros(&[2, 3], 5);
    assert!(matches!(
        impact_balance(&spec, &other, &z(&[0, 0])),
        Err(Error::Structure(_))
    ));
    assert!(matches!(
        check_consistency(&spec, &spec.cim, &z(&[0, 0, 0])),
        Err(Error::Structure(_))
    ));
}

#[test]
fn threshold_rule_strengthens_one_cell() {
    let mut spec = fixtures::zero_spec(&[3, 2, 2]);
    let cell = CellRef {
        source: 1,
        source_state: 0,
        target: 2,
        target_state: 0,
    };
    spec.threshold_rules.push(ThresholdRule {
        conditions: vec![StateAssignment::new(0, 2), StateAssignment::new(1, 0)],
        cell,
        delta: 1.0,
    });
    assert_eq!(
        effective_cim(&fixtures::zero_spec(&[3, 2, 2]), &spec.cim, &z(&[2, 0, 0])).unwrap(),
        spec.cim
    );

    let on = effective_cim(&spec, &spec.cim, &z(&[2, 0, 1])).unwrap();
    for c in spec.cim.cells() {
        let expected = if c == cell { 1.0 } else { 0.0 };
        assert_eq!(on.score(c), expected);
    }
    assert_eq!(
        effective_cim(&spec, &spec.cim, &z(&[1, 0, 1])).unwrap(),
        spec.cim
    );
}

#[test]
fn succession_on_the_fixture() {
    let spec = fixtures::two_by_two();
    assert_eq!(
        succession_step(&spec, &spec.cim, &z(&[0, 0]), &[], None).unwrap(),
        z(&[0, 0])
    );
    assert_eq!(
        succession_step(&spec, &spec.cim, &z(&[0, 1]), &[], None).unwrap(),
        z(&[1, 0])
    );
    assert_eq!(
        succession_step(&spec, &spec.cim, &z(&[0, 1]), &[true, true], None).unwrap(),
        z(&[0, 1])
    );
}

#[test]
fn attractors_of_the_fixture() {
    let spec = fixtures::two_by_two();
    let fixed = find_attractor(&spec, &spec.cim, &z(&[0, 0]), 10).unwrap();
    let a = fixed.attractor().unwrap();
    assert_eq!(a.kind, AttractorKind::FixedPoint);
    assert_eq!(a.steps_to_reach, 0);
    assert_eq!(a.scenarios, vec![z(&[0, 0])]);

    let cyc = find_attractor(&spec, &spec.cim, &z(&[0, 1]), 10).unwrap();
    let a = cyc.attractor().unwrap();
    assert_eq!(a.kind, AttractorKind::Cycle);
    assert_eq!(a.scenarios, vec![z(&[0, 1]), z(&[1, 0])]);
    assert!(matches!(
        find_attractor(&spec, &spec.cim, &z(&[0, 1]), 0),
        Err(Error::Config(_))
    ));
}

#[test]
fn enumeration_of_the_fixture() {
    let mut spec = fixtures::two_by_two();
    assert_eq!(
        enumerate_consistent(&spec, &spec.cim, 4).unwrap(),
        vec![z(&[0, 0]), z(&[1, 1])]
    );
    spec.rules.forbidden_pairs = vec![(StateAssignment::new(0, 1), StateAssignment::new(1, 1))];
    assert_eq!(
        enumerate_consistent(&spec, &spec.cim, 4).unwrap(),
        vec![z(&[0, 0])]
    );
    match enumerate_consistent(&spec, &spec.cim, 3) {
        Err(Error::Intractable { size, limit }) => assert_eq!((size, limit), (4, 3)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn fully_forbidden_descriptor_is_infeasible() {
    let mut spec = fixtures::two_by_two();
    spec.rules.forbidden_pairs = vec![
        (StateAssignment::new(1, 0), StateAssignment::new(0, 0)),
        (StateAssignment::new(1, 0), StateAssignment::new(0, 1)),
    ];
    match succession_step(&spec, &spec.cim, &z(&[0, 0]), &[], None) {
        Err(Error::Infeasible { descriptor, .. }) => assert_eq!(descriptor, "A"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn implication_repairs_the_successor() {
    let mut spec = fixtures::two_by_two();
    spec.rules.implications = vec![Implication {
        antecedent: StateAssignment::new(0, 0),
        consequent: StateAssignment::new(1, 1),
    }];
    // (A2,B1) steps to (A1,B2) before the repair; A1 then forces B2.
    let next = succession_step(&spec, &spec.cim, &z(&[1, 0]), &[], None).unwrap();
    assert_eq!(next, z(&[0, 1]));
    let next = succession_step(&spec, &spec.cim, &z(&[0, 0]), &[], None).unwrap();
    assert_eq!(next, z(&[0, 1]));
}

#[test]
fn perturbation_shifts_the_argmax() {
    let spec = fixtures::two_by_two();
    let p = [0.0, 0.0, -5.0, 0.0];
    let next = succession_step(&spec, &spec.cim, &z(&[0, 0]), &[], Some(&p)).unwrap();
    assert_eq!(next, z(&[0, 1]));
    assert!(succession_step(&spec, &spec.cim, &z(&[0, 0]), &[], Some(&[0.0])).is_err());
}

fn add(a: &CrossImpactMatrix, b: &CrossImpactMatrix) -> CrossImpactMatrix {
    let mut out = a.clone();
    for c in a.cells() {
        out.set_score(c, a.score(c) + b.score(c)).unwrap();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_brute_force(seed in any::<u64>()) {
        let spec = common::random_spec(seed, 5, 3);
        prop_assert_eq!(enumerate_consistent(&spec, &spec.cim, 1000).unwrap(), common::brute_force(&spec));
    }

    #[test]
    fn balance_is_additive(a in any::<u64>(), b in any::<u64>(), pick in any::<u64>()) {
        let s1 = common::random_spec(a, 4, 3);
        let mut s2 = s1.clone();
        let other = common::random_spec(b, 4, 3);
        if other.state_counts() == s1.state_counts() {
            s2.cim = other.cim;
        }
        let sum = add(&s1.cim, &s2.cim);
        let all = common::all_scenarios(&s1.state_counts());
        let zz = &all[(pick % all.len() as u64) as usize];
        let t1 = impact_balance(&s1, &s1.cim, zz).unwrap();
        let t2 = impact_balance(&s1, &s2.cim, zz).unwrap();
        let t = impact_balance(&s1, &sum, zz).unwrap();
        for k in 0..t.scores().len() {
            prop_assert_eq!(t.scores()[k], t1.scores()[k] + t2.scores()[k]);
        }
    }

    #[test]
    fn changing_one_descriptor_only_moves_its_terms(seed in any::<u64>(), pick in any::<u64>()) {
        let spec = common::random_spec(seed, 4, 3);
        let counts = spec.state_counts();
        let all = common::all_scenarios(&counts);
        let base = &all[(pick % all.len() as u64) as usize];
        let k = (pick as usize / 7) % counts.len();
        let mut moved = base.clone();
        moved.0[k] = (moved.0[k] + 1) % counts[k];
        let t0 = impact_balance(&spec, &spec.cim, base).unwrap();
        let t1 = impact_balance(&spec, &spec.cim, &moved).unwrap();
        for j in (0..counts.len()).filter(|&j| j != k) {
            for l in 0..counts[j] {
                let cell = |s| spec.cim.score(CellRef { source: k, source_state: s, target: j, target_state: l });
                let expected = t0.row(j)[l] - cell(base.0[k]) + cell(moved.0[k]);
                prop_assert!((t1.row(j)[l] - expected).abs() < 1e-12);
            }
        }
        prop_assert_eq!(t0.row(k), t1.row(k));
    }

    #[test]
    fn attractors_are_sound(seed in any::<u64>(), pick in any::<u64>()) {
        let mut spec = common::random_spec(seed, 5, 3);
        spec.rules = DomainRules::default();
        let all = common::all_scenarios(&spec.state_counts());
        let start = &all[(pick % all.len() as u64) as usize];
        let found = find_attractor(&spec, &spec.cim, start, 500).unwrap();
        let a = found.attractor().expect("small spaces always recur");
        match a.kind {
            AttractorKind::FixedPoint => {
                prop_assert!(check_consistency(&spec, &spec.cim, &a.scenarios[0]).unwrap().consistent);
            }
            AttractorKind::Cycle => {
                let n = a.scenarios.len();
                prop_assert!(n >= 2);
                for i in 0..n {
                    let next = succession_step(&spec, &spec.cim, &a.scenarios[i], &[], None).unwrap();
                    prop_assert_eq!(&next, &a.scenarios[(i + 1) % n]);
                }
            }
        }
    }

    #[test]
    fn succession_fixes_consistent_feasible_scenarios(seed in any::<u64>()) {
        let spec = common::random_spec(seed, 5, 3);
        for s in common::brute_force(&spec) {
            let next = succession_step(&spec, &spec.cim, &s, &[], None).unwrap();
            prop_assert_eq!(&next, &s);
            let again = succession_step(&spec, &spec.cim, &s, &[], None).unwrap();
            prop_assert_eq!(next, again);
        }
    }
}
