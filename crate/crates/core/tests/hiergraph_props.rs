mod common;

use std::sync::OnceLock;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use ringkit_core::hiergraph::{build_hier_graph, build_vocab, deserialize, encode_ring_attributes, read_jsonl, serialize, HierGraph};

fn corpus() -> &'static [HierGraph] {
    static CORPUS: OnceLock<Vec<HierGraph>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let mut rdr = csv::Reader::from_path(surrogate_csv()).unwrap();
        rdr.records()
            .take(100)
            .map(|r| {
                let r = r.unwrap();
                let y: Vec<f64> = (1..4).map(|i| r[i].parse().unwrap()).collect();
                build_hier_graph(&r[0], true).unwrap().with_targets(y)
            })
            .collect()
    })
}

#[test]
fn corpus_round_trips_byte_identically() {
    let text: String = corpus().iter().map(|h| serialize(h) + "\n").collect();
    let back = read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(back.len(), 100);
    assert_eq!(back, corpus());
    let again: String = back.iter().map(|h| serialize(h) + "\n").collect();
    assert_eq!(again, text);
}

#[test]
fn membership_bound_and_encoding_widths() {
    let v = build_vocab(corpus()).unwrap();
    for h in corpus() {
        let total: usize = h.ring_graph.rings.iter().map(|r| r.size()).sum();
        assert_eq!(h.inter_edges.len(), total);
        for &(r, a) in &h.inter_edges {
            assert!(h.ring_graph.rings[r].contains(a));
        }
        let enc = encode_ring_attributes(h, &v);
        assert_eq!(enc.ring_one_hot().len(), h.num_rings() * v.ring_dim());
        let edges = h.ring_graph.connections.len() + h.num_rings();
        assert_eq!(enc.edge_one_hot().len(), edges * v.connection_dim());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn vocab_ignores_corpus_order(seed in any::<u64>()) {
        let mut shuffled: Vec<&HierGraph> = corpus().iter().collect();
        shuffled.shuffle(&mut rng(seed));
        prop_assert_eq!(build_vocab(shuffled).unwrap(), build_vocab(corpus()).unwrap());
    }

    #[test]
    fn single_record_round_trip(idx in 0usize..100) {
        let h = &corpus()[idx];
        prop_assert_eq!(&deserialize(&serialize(h)).unwrap(), h);
    }
}
