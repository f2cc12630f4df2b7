mod common;

use cascade_ner::codec::{
    align_to_subwords, iob2_to_spans, project_from_subwords, repair, spans_to_iob2, Span, SubwordAlignment, Tag,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reference decoder: a token continues the previous span exactly when it is
/// `I-l` and the previous token carries label `l` as `B-l` or `I-l`.
fn oracle_spans(tags: &[Tag]) -> Vec<Span> {
    let label = |t: &Tag| match t {
        Tag::B(l) | Tag::I(l) => Some(l.clone()),
        Tag::O | Tag::X => None,
    };
    let continues = |i: usize| {
        i > 0 && matches!(&tags[i], Tag::I(l) if label(&tags[i - 1]).as_deref() == Some(l.as_str()))
    };
    let mut out = Vec::new();
    for i in 0..tags.len() {
        let Some(l) = label(&tags[i]) else { continue };
        if continues(i) {
            continue;
        }
        let mut end = i;
        while end + 1 < tags.len() && continues(end + 1) {
            end += 1;
        }
        out.push(Span::new(i, end, l));
    }
    out
}

fn well_formed(tags: &[Tag]) -> bool {
    tags.iter().enumerate().all(|(i, t)| match t {
        Tag::X => false,
        Tag::I(l) => i > 0 && matches!(&tags[i - 1], Tag::B(p) | Tag::I(p) if p == l),
        _ => true,
    })
}

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn spans_survive_an_iob2_round_trip(seed in any::<u64>(), len in 0usize..30) {
        let spans = common::random_spans(&mut seeded(seed), len);
        let tags = spans_to_iob2(len, &spans).unwrap();
        prop_assert!(well_formed(&tags));
        prop_assert_eq!(iob2_to_spans(&tags), spans);
    }

    #[test]
    fn decoding_matches_the_reference(seed in any::<u64>(), len in 0usize..30) {
        let tags = common::random_tags(&mut seeded(seed), len);
        prop_assert_eq!(iob2_to_spans(&tags), oracle_spans(&tags));
    }

    #[test]
    fn repair_is_idempotent_and_decoding_preserving(seed in any::<u64>(), len in 0usize..30) {
        let tags = common::random_tags(&mut seeded(seed), len);
        let fixed = repair(&tags);
        prop_assert!(well_formed(&fixed));
        prop_assert_eq!(&repair(&fixed), &fixed);
        prop_assert_eq!(iob2_to_spans(&fixed), iob2_to_spans(&tags));
    }

    #[test]
    fn subword_alignment_projects_back(
        seed in any::<u64>(),
        counts in proptest::collection::vec(1usize..5, 0..25),
    ) {
        let spans = common::random_spans(&mut seeded(seed), counts.len());
        let tags = spans_to_iob2(counts.len(), &spans).unwrap();
        let alignment = SubwordAlignment::from_piece_counts(&counts).unwrap();
        let pieces = align_to_subwords(&tags, &alignment).unwrap();
        prop_assert_eq!(pieces.len(), counts.iter().sum::<usize>());
        prop_assert_eq!(pieces.iter().filter(|t| **t != Tag::X).count(), counts.len());
        prop_assert_eq!(project_from_subwords(&pieces, &alignment).unwrap(), tags);
    }
}

#[test]
fn x_on_a_first_piece_projects_to_outside() {
    let alignment = SubwordAlignment::from_piece_counts(&[2, 1]).unwrap();
    let pieces = vec![Tag::X, Tag::B("per".into()), Tag::I("per".into())];
    assert_eq!(
        project_from_subwords(&pieces, &alignment).unwrap(),
        vec![Tag::O, Tag::I("per".into())]
    );
}

#[test]
fn misaligned_lengths_are_errors() {
    let alignment = SubwordAlignment::from_piece_counts(&[1, 2]).unwrap();
    assert!(align_to_subwords(&[Tag::O], &alignment).is_err());
    assert!(project_from_subwords(&[Tag::O, Tag::O], &alignment).is_err());
    assert!(SubwordAlignment::from_piece_counts(&[1, 0]).is_err());
    assert!(SubwordAlignment::new(vec!["a".into(), "b".into()], vec![0, 2]).is_err());
}
