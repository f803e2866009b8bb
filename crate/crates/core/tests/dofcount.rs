use condext::dofcount::{dof, fixture, InvolutiveTable};
use proptest::prelude::*;

#[test]
#[allow(clippy::identity_op)]
fn cotton_gravity_has_six() {
    let t = fixture("cotton").unwrap();
    // hand expansion of the alternating sum
    let by_hand = 2 * 1 + 3 * (24 - 8) + (0 - 4) + 4 * (0 - 15) + 5 * (0 - (-4));
    assert_eq!(by_hand, 6);
    assert_eq!(dof(&t), 6);
}

#[test]
fn linearized_einstein_has_four() {
    let t = fixture("einstein-linear").unwrap();
    assert_eq!(2 * 10 - 4 - 3 * 4, 4);
    assert_eq!(dof(&t), 4);
}

#[test]
fn central_field_needs_five_initial_values() {
    assert_eq!(dof(&fixture("central-field").unwrap()), 5);
}

#[test]
fn multiplier_version_needs_six() {
    assert_eq!(dof(&fixture("central-field-multiplier").unwrap()), 6);
}

#[test]
fn table_round_trips_through_toml() {
    let t = fixture("cotton").unwrap();
    assert_eq!(InvolutiveTable::from_toml(&t.to_toml()).unwrap(), t);
}

fn table() -> impl Strategy<Value = InvolutiveTable> {
    (
        prop::collection::btree_map(0u32..8, 0u64..50, 0..5),
        prop::collection::btree_map((0u32..8, 0u32..4), 0u64..50, 0..5),
        prop::collection::btree_map((0u32..8, 0u32..4), 0u64..50, 0..5),
    )
        .prop_map(|(equations, identities, symmetries)| InvolutiveTable {
            label: "random".into(),
            equations,
            identities,
            symmetries,
        })
}

proptest! {
    #[test]
    fn dof_is_additive(a in table(), b in table()) {
        prop_assert_eq!(dof(&a.union(&b)), dof(&a) + dof(&b));
    }

    #[test]
    fn union_with_empty_is_identity(a in table()) {
        prop_assert_eq!(dof(&a.union(&InvolutiveTable::default())), dof(&a));
    }
}
