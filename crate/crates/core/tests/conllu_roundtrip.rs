mod support;

use lowres_core::conllu::{parse_document, parse_document_with, serialize_document, ReadOptions};
use lowres_core::treebank_ops::seeded_rng;
use proptest::prelude::*;

fn document(seed: u64, sentences: usize) -> String {
    let mut rng = seeded_rng(seed);
    (0..sentences).map(|i| support::random_conllu_block(&mut rng, i)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn serialize_inverts_parse(seed in any::<u64>(), n in 1usize..20) {
        let text = document(seed, n);
        let (tb, report) = parse_document_with(&text, &ReadOptions::default()).unwrap();
        prop_assert_eq!(report.dropped, 0);
        prop_assert_eq!(tb.len(), n);
        prop_assert_eq!(serialize_document(&tb), text);
    }

    #[test]
    fn parse_inverts_serialize(seed in any::<u64>()) {
        let tb = parse_document(&document(seed, 5)).unwrap();
        let again = parse_document(&serialize_document(&tb)).unwrap();
        prop_assert_eq!(again, tb);
    }
}

#[test]
fn generator_covers_every_line_kind() {
    let text = document(3, 200);
    let tb = parse_document(&text).unwrap();
    assert!(tb.sentences.iter().any(|s| !s.multiword_ranges.is_empty()));
    assert!(tb.sentences.iter().any(|s| !s.empty_nodes.is_empty()));
    assert!(tb.sentences.iter().any(|s| s.empty_nodes.iter().any(|e| e.after == 0)));
    assert!(tb.sentences.iter().flat_map(|s| &s.tokens).any(|t| t.feats.iter().count() > 1));
    assert!(tb.sentences.iter().flat_map(|s| &s.tokens).any(|t| t.deprel.contains(':')));
}

#[test]
fn crlf_input_is_read_but_written_with_lf() {
    let text = document(9, 3);
    let tb = parse_document(&text.replace('\n', "\r\n")).unwrap();
    assert_eq!(serialize_document(&tb), text);
}
