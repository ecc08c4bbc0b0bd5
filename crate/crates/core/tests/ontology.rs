mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ontorec::checks::{brute_force_relations, closure_oracle, random_tree};
use ontorec::ontology::{load_ontology, OntologyKind};

#[test]
fn closure_matches_path_enumeration_on_100_dags() {
    closure_oracle(100, 11).unwrap();
}

/// Sizes and depths of the three production ontologies.
#[test]
fn generated_fixtures_have_reference_shapes() {
    for (kind, nodes, depth, prefix) in [
        (OntologyKind::Diagnosis, 17737, 7, "D"),
        (OntologyKind::Procedure, 4670, 4, "P"),
        (OntologyKind::Medication, 6441, 5, "M"),
    ] {
        let dag = common::tree(kind, nodes, depth, prefix, 3);
        assert_eq!(dag.len(), nodes);
        assert_eq!(dag.max_depth(), depth);
        let t = dag.derive_relations(None);
        assert_eq!(t.parent_pairs.len(), nodes - 1);
        assert!(t.parent_pairs.is_disjoint(&t.ancestor_pairs));
    }
}

#[test]
fn depth_bound_truncates_closure() {
    let dag = common::tree(OntologyKind::Diagnosis, 60, 5, "D", 4);
    let full = dag.derive_relations(None);
    let two = dag.derive_relations(Some(2));
    assert!(two.ancestor_pairs.is_subset(&full.ancestor_pairs));
    for &(a, n) in &two.ancestor_pairs {
        assert_eq!(dag.depth(n) - dag.depth(a), 2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relation_invariants(n in 2usize..120, seed in any::<u64>()) {
        let dag = random_tree(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let t = dag.derive_relations(None);
        prop_assert_eq!(&t, &brute_force_relations(&dag));
        prop_assert!(t.parent_pairs.is_disjoint(&t.ancestor_pairs));
        for &(a, b) in &t.sibling_pairs {
            prop_assert!(a < b);
            prop_assert_eq!(dag.parent(a), dag.parent(b));
        }
        // the parent of a parent is an ancestor
        for &(p, c) in &t.parent_pairs {
            if let Some(g) = dag.parent(p) {
                prop_assert!(t.ancestor_pairs.contains(&(g, c)));
            }
        }
    }

    #[test]
    fn save_load_round_trip(n in 2usize..80, seed in any::<u64>()) {
        let dag = random_tree(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("onto.tsv");
        dag.save(&path).unwrap();
        let back = load_ontology(&path, OntologyKind::Diagnosis).unwrap();
        prop_assert_eq!(back.len(), dag.len());
        prop_assert_eq!(back.id(back.root()), dag.id(dag.root()));
        for (p, c) in dag.edges() {
            let (bp, bc) = (back.require(dag.id(p)).unwrap(), back.require(dag.id(c)).unwrap());
            prop_assert!(back.has_edge(bp, bc));
        }
    }
}
