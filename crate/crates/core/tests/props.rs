//! Property tests over the identity, templating, and expansion layers.

mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use vdc_core::*;

fn arb_canon() -> impl Strategy<Value = serde_json::Value> {
    let leaf = prop_oneof![
        Just(serde_json::Value::Null),
        any::<bool>().prop_map(serde_json::Value::from),
        any::<i64>().prop_map(serde_json::Value::from),
        "[a-zA-Z0-9 _./\\u{e9}\\u{3b1}-]{0,20}".prop_map(serde_json::Value::from),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(serde_json::Value::from),
            prop::collection::btree_map("[a-z_]{1,8}", inner, 0..4).prop_map(|m| {
                serde_json::Value::Object(m.into_iter().collect())
            }),
        ]
    })
}

proptest! {
    #[test]
    fn canonical_encoding_round_trips(value in arb_canon()) {
        let canon = CanonValue::from_json(&value).unwrap();
        let bytes = canonical_encode(&canon);
        let reparsed: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let recanon = CanonValue::from_json(&reparsed).unwrap();
        prop_assert_eq!(canonical_encode(&recanon), bytes);
    }

    #[test]
    fn canonical_encoding_is_stable_under_key_shuffling(
        entries_map in prop::collection::btree_map("[a-z]{1,6}", any::<i64>(), 1..8),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let entries: Vec<(String, i64)> = entries_map.into_iter().collect();
        let mut shuffled = entries.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let build = |pairs: &[(String, i64)]| {
            let obj: serde_json::Map<String, serde_json::Value> = pairs
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::from(*v)))
                .collect();
            canonical_encode(&CanonValue::from_json(&serde_json::Value::Object(obj)).unwrap())
        };
        prop_assert_eq!(build(&entries), build(&shuffled));
    }

    #[test]
    fn template_scan_round_trips(
        literals in prop::collection::vec("[^$]{0,10}", 1..5),
        names in prop::collection::vec("[a-z][a-z0-9_]{0,8}", 0..4),
    ) {
        // interleave literals and placeholders, then instantiate with
        // bindings that map every name to its own `${name}` spelling —
        // the output must equal the input text
        let mut text = String::new();
        for (i, lit) in literals.iter().enumerate() {
            text.push_str(lit);
            if let Some(name) = names.get(i) {
                text.push_str(&format!("${{{name}}}"));
            }
        }
        let template = parse_template(&text).unwrap();
        let bindings: BTreeMap<String, ParamValue> = names
            .iter()
            .map(|n| (n.clone(), ParamValue::Str(format!("${{{n}}}"))))
            .collect();
        let rendered = instantiate(&template, &bindings).unwrap();
        prop_assert_eq!(rendered, text);
    }

    #[test]
    fn partition_ids_are_distinct_and_memoization_sound(
        partitions in 1u32..20,
        base_seed in -1_000_000i64..1_000_000,
        stride in 1i64..100,
    ) {
        let mut service = new_service();
        service.register_transformation(step_tx("evgen", "evgen", None)).unwrap();
        let mut ds = simple_dataset("a", "evgen", partitions, base_seed);
        ds.seed_stride = stride;
        let first = service.compose_dataset(ds.clone()).unwrap();
        prop_assert_eq!(first.created.len(), partitions as usize);
        let mut unique = first.created.clone();
        unique.sort();
        unique.dedup();
        prop_assert_eq!(unique.len(), partitions as usize);

        // identical composition under another name links all partitions
        ds.name = "b".into();
        let second = service.compose_dataset(ds).unwrap();
        prop_assert!(second.created.is_empty());
        let mut linked = second.linked.clone();
        linked.sort();
        let mut created = first.created.clone();
        created.sort();
        prop_assert_eq!(linked, created);
    }

    #[test]
    fn app_and_site_bindings_never_change_identity(
        verbosity in any::<i64>(),
        workdir in "[a-z/]{1,12}",
        events in 1i64..1000,
    ) {
        let tx = test_support::minimal_tx("t", 1, &"0".repeat(64));
        let base: BTreeMap<String, ParamValue> =
            BTreeMap::from([("events".to_string(), ParamValue::Int(events))]);
        let id0 = derivation_output_id(&tx, &base, &[]).unwrap();
        // APP/SITE values are not inputs to the hash at all; recompute with
        // the same REPRO bindings after "changing" them elsewhere
        let _ = (verbosity, workdir);
        let id1 = derivation_output_id(&tx, &base, &[]).unwrap();
        prop_assert_eq!(id0, id1);

        let mut other = base.clone();
        other.insert("events".to_string(), ParamValue::Int(events + 1));
        let id2 = derivation_output_id(&tx, &other, &[]).unwrap();
        prop_assert_ne!(id0, id2);
    }
}
