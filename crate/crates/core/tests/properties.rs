use memlattice::gen::{arbitrary_trace, gen_trace, mutate_trace, GenModel, GenSpec};
use memlattice::orders::{
    anti_order, augmented_data_orders, data_order, process_data_order, write_read_write_order,
    SerialOrderSpace, SoChoice,
};
use memlattice::transitions::{build_d, check_generalized, check_synchronized, Labeling};
use memlattice::view::{exists_serial_partial_view, exists_serial_view, is_serial, select_members};
use memlattice::{
    check_classical, check_node, check_processor, CheckOptions, ClassicalModel, Execution,
    ModelNode, OpKind, OperationPattern, PropertySet, Provenance, RawTrace, Relation,
    SyncModelKind, Variant,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(seed: u64) -> Execution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let raw = arbitrary_trace(
        rng.gen_range(1..=3),
        rng.gen_range(1..=8),
        rng.gen_range(1..=3),
        seed,
    );
    Execution::from_raw(&raw).expect("arbitrary traces validate")
}

fn opts() -> CheckOptions {
    CheckOptions::default()
}

fn writes_only(rel: &Relation, e: &Execution) -> bool {
    rel.edges()
        .all(|x| e.op(x.from).kind.is_write() && e.op(x.to).kind.is_write())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn render_then_parse_is_identity(seed in any::<u64>()) {
        let e = small(seed);
        let again = Execution::parse(&e.render()).unwrap();
        prop_assert_eq!(again.render(), e.render());
        prop_assert_eq!(again.ops(), e.ops());
    }

    #[test]
    fn writes_to_maps_reads_to_matching_writes(seed in any::<u64>()) {
        let e = small(seed);
        for r in e.reads() {
            let w = e.writes_to(r).expect("every read has a source");
            prop_assert!(e.op(w).kind.is_write());
            prop_assert_eq!(e.op(w).var, e.op(r).var);
            prop_assert_eq!(e.op(w).value, e.op(r).value);
        }
        for w in e.writes() {
            prop_assert!(e.writes_to(w).is_none());
        }
    }

    #[test]
    fn data_order_shape(seed in any::<u64>()) {
        let e = small(seed);
        let d = data_order(&e);
        prop_assert!(d.is_transitive());
        for (w, r) in e.writes_to_pairs() {
            prop_assert!(d.contains(w, r));
        }
        for x in e.process_order().edges() {
            if e.op(x.from).var == e.op(x.to).var {
                prop_assert!(d.contains(x.from, x.to));
            }
        }
        for x in d.edges() {
            prop_assert_eq!(e.op(x.from).var, e.op(x.to).var);
        }
        let pdo = process_data_order(&e, &d);
        for x in pdo.edges() {
            prop_assert!(e.process_order().contains(x.from, x.to) && d.contains(x.from, x.to));
        }
        prop_assert!(writes_only(&write_read_write_order(&e), &e));
    }

    #[test]
    fn serial_order_assignments_pick_exactly_one_side(seed in any::<u64>()) {
        let e = small(seed);
        let space = SerialOrderSpace::new(&e, true);
        prop_assume!(space.free_count() <= 6);
        let d = data_order(&e);
        let mut count = 0;
        for a in space.enumerate(6).unwrap() {
            count += 1;
            let so = a.relation(&e, &space);
            for (i, pair) in space.pairs().iter().enumerate() {
                let (w, r) = (pair.write, pair.read);
                let source = e.writes_to(r).unwrap();
                let before_source = so.contains(w, source);
                let after_read = so.contains(r, w);
                prop_assert!(before_source || after_read);
                let chosen = a.choices[i];
                match chosen {
                    SoChoice::WriteBeforeSource => prop_assert!(before_source),
                    SoChoice::ReadBeforeWrite => prop_assert!(after_read),
                }
                if let Some(forced) = pair.forced {
                    prop_assert_eq!(chosen, forced);
                }
            }
            prop_assert!(writes_only(&anti_order(&e, &d, &so), &e));
        }
        prop_assert_eq!(count, 1usize << space.free_count());
    }

    #[test]
    fn unpruned_space_has_two_to_the_pairs(seed in any::<u64>()) {
        let e = small(seed);
        let space = SerialOrderSpace::new(&e, false);
        prop_assume!(space.pairs().len() <= 8);
        prop_assert_eq!(space.free_count(), space.pairs().len());
        prop_assert_eq!(space.enumerate(8).unwrap().count(), 1usize << space.pairs().len());
    }

    #[test]
    fn witnesses_revalidate_and_edges_only_hurt(seed in any::<u64>(), extra in 0usize..6) {
        let e = small(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subset = vec![OperationPattern::any()];
        let mut rel = e.process_order().clone();
        let before = exists_serial_view(&e, &subset, &rel, 1_000_000);
        if let Some(views) = &before.witness {
            prop_assert!(rel.respected_by(&views[0].order));
            prop_assert!(is_serial(&e, &views[0].order));
        }
        for _ in 0..extra {
            let a = memlattice::OpId(rng.gen_range(0..e.len()));
            let b = memlattice::OpId(rng.gen_range(0..e.len()));
            if a != b {
                rel.insert(a, b, Provenance::Closure);
            }
        }
        let after = exists_serial_view(&e, &subset, &rel, 1_000_000);
        if after.is_satisfied() {
            prop_assert!(before.is_satisfied());
            let order = &after.witness.as_ref().unwrap()[0].order;
            prop_assert!(rel.respected_by(order) && is_serial(&e, order));
        }
    }

    #[test]
    fn partial_view_of_a_total_order_is_the_serial_predicate(seed in any::<u64>()) {
        let e = small(seed);
        let mut order: Vec<_> = e.op_ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // initial writes first, the rest shuffled
        let split = e.variables().len();
        rand::seq::SliceRandom::shuffle(&mut order[split..], &mut rng);
        let mut total = Relation::new(e.len());
        for (i, &a) in order.iter().enumerate() {
            for &b in &order[i + 1..] {
                total.insert(a, b, Provenance::Closure);
            }
        }
        let partial = exists_serial_partial_view(&e, &[OperationPattern::any()], &total);
        prop_assert_eq!(partial.is_satisfied(), is_serial(&e, &order));
    }

    #[test]
    fn mutated_traces_revalidate(seed in any::<u64>(), n in 1usize..4) {
        let e = small(seed);
        match mutate_trace(&e.render(), seed, n) {
            Ok(text) => {
                let m = Execution::parse(&text).unwrap();
                prop_assert_eq!(m.len(), e.len());
            }
            Err(err) => prop_assert_eq!(err, memlattice::Error::NoMutationCandidate),
        }
    }
}

/// Processor consistency with the write-only augmentation agrees with the
/// definition that totally orders every operation of each variable.
#[test]
fn processor_matches_full_augmentation() {
    let o = opts();
    let mut checked = 0;
    for seed in 0..300 {
        let e = small(seed);
        let d = data_order(&e);
        let Ok(augs) = augmented_data_orders(&e, &d, 20_000) else {
            continue;
        };
        let po = e.process_order();
        let full = augs.into_iter().any(|aug| {
            e.process_ids().all(|p| {
                let rel = e.local_relation(p).union(po).union(&aug);
                exists_serial_view(&e, &OperationPattern::process_view(p), &rel, 1_000_000)
                    .is_satisfied()
            })
        });
        let fast = check_processor(&e, &o);
        assert!(!fast.is_unknown(), "seed {seed}");
        assert_eq!(fast.is_satisfied(), full, "seed {seed}:\n{}", e.render());
        checked += 1;
    }
    assert!(checked > 250);
}

fn corpus_traces() -> Vec<Execution> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "trace"))
        .filter(|p| !p.ends_with("adversarial_so.trace"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Execution::parse(&std::fs::read_to_string(p).unwrap()).unwrap())
        .collect()
}

fn corpus_and_random() -> Vec<Execution> {
    let mut all = corpus_traces();
    all.extend((0..500).map(small));
    all
}

#[test]
fn uniform_labels_match_lattice_nodes() {
    let o = opts();
    for e in corpus_and_random() {
        // sync kinds count as plain reads and writes here
        for node in memlattice::lattice::lattice_nodes() {
            let labeling = Labeling::uniform(&e, node.properties);
            let general = check_generalized(&e, &labeling, false, None, &o);
            let lattice = check_node(&e, &node, &o);
            assert_eq!(general.status, lattice.status, "{node} on\n{}", e.render());
        }
    }
}

#[test]
fn weak_without_sync_ops_is_slow() {
    let o = opts();
    for e in corpus_and_random()
        .into_iter()
        .filter(|e| !e.has_sync_ops())
    {
        let weak = check_synchronized(&e, SyncModelKind::Weak, Variant::Revised, &o).unwrap();
        let slow = check_classical(&e, ClassicalModel::Slow, &o);
        assert_eq!(weak.status, slow.status, "\n{}", e.render());
    }
}

fn sync_trace(kind: SyncModelKind, seed: u64) -> Execution {
    let spec = GenSpec {
        sync_prob: 0.35,
        ..GenSpec::new(GenModel::Sync(kind), 2, 4, seed)
    };
    let text = gen_trace(&spec);
    let mutated = mutate_trace(&text, seed, 1).unwrap_or(text);
    Execution::parse(&mutated).unwrap()
}

#[test]
fn original_variant_implies_revised() {
    let o = opts();
    for kind in [
        SyncModelKind::Weak,
        SyncModelKind::Release,
        SyncModelKind::Entry,
    ] {
        for seed in 0..60 {
            let e = sync_trace(kind, seed);
            let original = check_synchronized(&e, kind, Variant::Original, &o).unwrap();
            let revised = check_synchronized(&e, kind, Variant::Revised, &o).unwrap();
            if original.is_satisfied() {
                assert!(
                    revised.is_satisfied(),
                    "{kind} seed {seed}:\n{}",
                    e.render()
                );
            }
        }
    }
}

#[test]
fn entry_implies_location() {
    let o = opts();
    for seed in 0..80 {
        let e = sync_trace(SyncModelKind::Entry, seed);
        let entry = check_synchronized(&e, SyncModelKind::Entry, Variant::Revised, &o).unwrap();
        let location =
            check_synchronized(&e, SyncModelKind::Location, Variant::Revised, &o).unwrap();
        if entry.is_satisfied() {
            assert!(location.is_satisfied(), "seed {seed}:\n{}", e.render());
        }
    }
}

#[test]
fn release_d_is_contained_in_weak_d_of_the_recoded_trace() {
    for seed in 0..80 {
        let e = sync_trace(SyncModelKind::Release, seed);
        let release = build_d(&e, SyncModelKind::Release).unwrap();
        let mut raw: RawTrace = e.to_raw();
        for op in &mut raw.ops {
            op.kind = match op.kind {
                OpKind::Acquire => OpKind::SyncRead,
                OpKind::Release => OpKind::SyncWrite,
                k => k,
            };
        }
        let recoded = Execution::from_raw(&raw).unwrap();
        let weak = build_d(&recoded, SyncModelKind::Weak).unwrap();
        for x in release.edges() {
            assert!(weak.contains(x.from, x.to), "seed {seed}:\n{}", e.render());
        }
    }
}

#[test]
fn generated_traces_satisfy_their_models() {
    let o = opts();
    for model in GenModel::CLASSICAL {
        let classical = ClassicalModel::from_name(&model.to_string()).unwrap();
        for seed in 0..40 {
            let spec = GenSpec {
                vars: 3,
                ..GenSpec::new(model, 3, 3, seed)
            };
            let e = Execution::parse(&gen_trace(&spec)).unwrap();
            assert!(
                check_classical(&e, classical, &o).is_satisfied(),
                "{model} seed {seed}"
            );
        }
    }
    for kind in SyncModelKind::ALL {
        for seed in 0..20 {
            let spec = GenSpec {
                sync_prob: 0.4,
                ..GenSpec::new(GenModel::Sync(kind), 2, 4, seed)
            };
            let e = Execution::parse(&gen_trace(&spec)).unwrap();
            for variant in [Variant::Original, Variant::Revised] {
                let v = check_synchronized(&e, kind, variant, &o).unwrap();
                assert!(v.is_satisfied(), "{kind} {variant} seed {seed}");
            }
        }
    }
}

#[test]
fn generator_examples() {
    let o = opts();
    let pram = Execution::parse(&gen_trace(&GenSpec::new(GenModel::Pram, 3, 8, 7))).unwrap();
    let c = memlattice::classify(&pram, &o);
    let gpo = ModelNode::new(PropertySet::new([memlattice::Property::GPO]));
    assert!(c
        .maximal
        .iter()
        .any(|n| n.compare(&gpo) != memlattice::Comparison::Weaker
            && n.compare(&gpo) != memlattice::Comparison::Incomparable));

    let cache = Execution::parse(&gen_trace(&GenSpec::new(GenModel::Cache, 2, 6, 1))).unwrap();
    assert!(data_order(&cache).is_acyclic());
}

#[test]
fn mutation_examples() {
    let o = opts();
    // both reads of PRAM(a) swapped to the process's own write
    let swapped = Execution::parse("p1 w x 1\np1 r x 1\np2 w x 2\np2 r x 2\n").unwrap();
    assert!(check_node(&swapped, &ModelNode::sequential(), &o).is_satisfied());
    // the mutator can reach that trace from PRAM(a)
    let pram_a = "p1 w x 1\np1 r x 2\np2 w x 2\np2 r x 1\n";
    let reached = (0..200).any(|seed| mutate_trace(pram_a, seed, 2).unwrap() == swapped.render());
    assert!(reached);

    // the data-race-free trace with its final read turned into bottom
    let bottom = Execution::parse("p1 w y 5\np1 sw x 1\np2 sr x 1\np2 r y _\n").unwrap();
    let weak = check_synchronized(&bottom, SyncModelKind::Weak, Variant::Revised, &o).unwrap();
    assert!(weak.is_violated());
    let drf = "p1 w y 5\np1 sw x 1\np2 sr x 1\np2 r y 5\n";
    let reached = (0..200).any(|seed| mutate_trace(drf, seed, 1).unwrap() == bottom.render());
    assert!(reached);
}

#[test]
fn select_members_always_includes_initial_writes() {
    let e = small(3);
    let members = select_members(&e, &[]);
    for op in e.ops() {
        assert_eq!(members[op.id.0], op.is_initial());
    }
}
