//! Trainer and codec behavior on small corpora.

use nordpile_core::tokenizer::{
    train_bpe, whitespace_cover, PieceKind, SpecialsConfig, TokenizerModel, DEFAULT_VOCAB_SIZE,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_model() -> TokenizerModel {
    let corpus = [
        "det var en gång en katt som hette Måns",
        "katten Måns bodde i ett hus vid skogen",
        "i skogen fanns det många träd och djur",
        "def main():\n    print('hello world')\n    return 0",
        "siffror som 123 och 456 skrivs med siffror",
        "whitespace    matters    in    code blocks",
    ];
    let specials = SpecialsConfig::default();
    let target = specials.vocab_floor() + 120;
    let (model, report) = train_bpe(corpus.iter().copied(), target, &specials).unwrap();
    assert!(!report.stopped_early || report.achieved_vocab <= target);
    model
}

#[test]
fn byte_level_identity_at_floor_vocab() {
    let specials = SpecialsConfig::default();
    let (model, report) =
        train_bpe(["abc abc"].iter().copied(), specials.vocab_floor(), &specials).unwrap();
    assert_eq!(model.vocab_size(), specials.vocab_floor());
    assert_eq!(report.merge_count, 0);
    assert_eq!(report.char_pieces, 0);
    // every id is a byte token or a special; text still round-trips
    let ids = model.encode("abc");
    for id in &ids {
        assert!(matches!(model.piece(*id).unwrap().kind, PieceKind::Byte(_)));
    }
    assert_eq!(model.decode(&ids).unwrap().text, "abc");
}

#[test]
fn first_merge_is_most_frequent_pair() {
    // brute-force oracle: count adjacent pairs over the marker-transformed
    // corpus words and check the trainer picked the maximum
    let corpus = "abab abab abab";
    let specials = SpecialsConfig::default();
    let target = specials.vocab_floor() + 14; // room for chars + 1 merge
    let (model, _) = train_bpe([corpus].iter().copied(), target, &specials).unwrap();

    // oracle over words: each word is marker + chars
    let mut counts: std::collections::HashMap<(char, char), usize> = std::collections::HashMap::new();
    for word in corpus.split(' ') {
        let chars: Vec<char> = std::iter::once('\u{2581}').chain(word.chars()).collect();
        for w in chars.windows(2) {
            *counts.entry((w[0], w[1])).or_default() += 1;
        }
    }
    let (&best_pair, &best_count) = counts.iter().max_by_key(|(_, &c)| c).unwrap();
    assert_eq!(best_pair, ('a', 'b'));
    assert_eq!(best_count, 6);

    let (l, r) = model.merges()[0];
    assert_eq!(model.piece(l).unwrap().text, "a");
    assert_eq!(model.piece(r).unwrap().text, "b");
}

#[test]
fn training_reaches_exact_target_when_corpus_suffices() {
    // forty distinct four-letter words, each repeated often: plenty of
    // mergeable pairs with frequency >= 2
    let words: Vec<String> = (0..40)
        .map(|i| {
            let a = (b'a' + (i % 26) as u8) as char;
            let b = (b'a' + ((i * 7 + 3) % 26) as u8) as char;
            let c = (b'a' + ((i * 11 + 5) % 26) as u8) as char;
            let d = (b'a' + ((i * 17 + 1) % 26) as u8) as char;
            format!("{a}{b}{c}{d}")
        })
        .collect();
    let text = vec![words.join(" "); 5].join(" ");
    let specials = SpecialsConfig::default();
    let target = specials.vocab_floor() + 60;
    let (model, report) = train_bpe([text.as_str()].iter().copied(), target, &specials).unwrap();
    assert_eq!(model.vocab_size(), target);
    assert!(!report.stopped_early);
}

#[test]
fn tiny_corpus_stops_early_with_achieved_size() {
    let specials = SpecialsConfig::default();
    let target = specials.vocab_floor() + 5000;
    let (model, report) = train_bpe(["ab ab"].iter().copied(), target, &specials).unwrap();
    assert!(report.stopped_early);
    assert_eq!(report.achieved_vocab, model.vocab_size());
    assert!(model.vocab_size() < target);
}

#[test]
fn default_vocab_size_is_production_value() {
    assert_eq!(DEFAULT_VOCAB_SIZE, 64_000);
}

#[test]
fn digits_encode_one_token_each() {
    let model = small_model();
    let ids = model.encode("12345");
    assert_eq!(ids.len(), 5);
    for (id, digit) in ids.iter().zip("12345".chars()) {
        assert_eq!(model.piece(*id).unwrap().text, digit.to_string());
        assert_eq!(model.piece(*id).unwrap().kind, PieceKind::Char);
    }
}

#[test]
fn no_token_straddles_a_digit_boundary() {
    let model = small_model();
    for text in ["a1b2c3", "pris 100 kr", "3.14 och 2.72", "v2 x9 10x"] {
        for id in model.encode(text) {
            let piece = model.piece(id).unwrap();
            if matches!(piece.kind, PieceKind::Byte(_)) {
                continue; // byte spellings like <0x2E> are not text
            }
            if piece.text.chars().any(|c| c.is_ascii_digit()) {
                assert_eq!(piece.text.chars().count(), 1, "piece {:?} mixes digits", piece.text);
            }
        }
    }
}

#[test]
fn eight_spaces_encode_to_one_token() {
    let model = small_model();
    let ids = model.encode("        ");
    assert_eq!(ids.len(), 1);
    assert!(matches!(
        model.piece(ids[0]).unwrap().kind,
        PieceKind::WhitespaceRun(9) // dummy prefix joins the run
    ));

    // mid-text the run length is exact
    let ids = model.encode("a        b");
    let runs: Vec<_> = ids
        .iter()
        .filter_map(|&id| match model.piece(id).unwrap().kind {
            PieceKind::WhitespaceRun(n) => Some(n),
            _ => None,
        })
        .collect();
    assert_eq!(runs, vec![8]);
}

#[test]
fn rare_characters_fall_back_to_bytes() {
    let model = small_model();
    let ids = model.encode("🦀");
    // 4-byte scalar, absent from the training corpus
    assert_eq!(ids.len(), 5); // dummy prefix marker + 4 byte tokens
    let byte_tokens = ids
        .iter()
        .filter(|&&id| matches!(model.piece(id).unwrap().kind, PieceKind::Byte(_)))
        .count();
    assert_eq!(byte_tokens, 4);
    assert_eq!(model.decode(&ids).unwrap().text, "🦀");
}

#[test]
fn encode_is_deterministic() {
    let model = small_model();
    let text = "katten Måns och 99 träd";
    assert_eq!(model.encode(text), model.encode(text));
}

#[test]
fn round_trips_exactly() {
    let model = small_model();
    for text in [
        "hello värld",
        "",
        " leading space",
        "  two leading",
        "trailing ",
        "tabs\tand\nnewlines\n",
        "def f(x):\n    return x + 1",
        "blandat: åäö ÅÄÖ 123 !?#",
        "\u{2581}literal marker",
        "\u{27E8}|python|\u{27E9} literal tag",
        "🦀🦀 emoji ☃ snowman",
    ] {
        let decoded = model.decode(&model.encode(text)).unwrap();
        assert_eq!(decoded.text, text, "round trip failed");
        assert_eq!(decoded.invalid_utf8_runs, 0);
    }
}

#[test]
fn round_trips_random_unicode() {
    let model = small_model();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..500 {
        let len = rng.gen_range(0..60);
        let text: String = (0..len)
            .map(|_| loop {
                let c = rng.gen_range(0u32..=0x10FFFF);
                if let Some(c) = char::from_u32(c) {
                    break c;
                }
            })
            .collect();
        let decoded = model.decode(&model.encode(&text)).unwrap();
        assert_eq!(decoded.text, text);
    }
}

#[test]
fn plain_text_never_produces_control_specials() {
    let model = small_model();
    let specials = model.specials();
    for text in [
        "\u{27E8}|endoftext|\u{27E9}",
        "\u{27E8}|python|\u{27E9}",
        "\u{27E8}|bos|\u{27E9} inline",
    ] {
        let ids = model.encode(text);
        assert!(!ids.contains(&specials.eot_id));
        assert!(!ids.contains(&specials.bos_id));
        for id in specials.code_ids.values() {
            assert!(!ids.contains(id));
        }
        // and the escape is still lossless
        assert_eq!(model.decode(&ids).unwrap().text, text);
    }
}

#[test]
fn decode_of_eot_is_empty_unless_debug() {
    let model = small_model();
    let eot = model.eot_id();
    assert_eq!(model.decode(&[eot]).unwrap().text, "");
    assert_eq!(
        model.decode_opts(&[eot], true).unwrap().text,
        "\u{27E8}|endoftext|\u{27E9}"
    );
}

#[test]
fn decode_rejects_out_of_range_ids() {
    let model = small_model();
    let bad = model.vocab_size() as u32;
    assert!(model.decode(&[bad]).is_err());
}

#[test]
fn invalid_byte_runs_decode_to_replacement_with_warning() {
    let model = small_model();
    let specials = model.specials();
    // a lone continuation byte is never valid UTF-8
    let ids = vec![specials.byte_base + 0xBF];
    let decoded = model.decode(&ids).unwrap();
    assert_eq!(decoded.invalid_utf8_runs, 1);
    assert!(decoded.text.contains('\u{FFFD}'));
}

#[test]
fn model_save_load_preserves_encoding() {
    let model = small_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tok.json");
    model.save(&path).unwrap();
    let loaded = TokenizerModel::load(&path).unwrap();
    assert_eq!(loaded.vocab_size(), model.vocab_size());
    for text in ["katten Måns", "def f():  return 1", "123  456"] {
        assert_eq!(loaded.encode(text), model.encode(text));
    }
}

#[test]
fn encode_agrees_with_training_segmentation() {
    // encoding a training sentence must reproduce pieces the trainer built
    let corpus = ["aaab aaab aaab aaab"];
    let specials = SpecialsConfig::default();
    let (model, report) =
        train_bpe(corpus.iter().copied(), specials.vocab_floor() + 20, &specials).unwrap();
    assert!(report.merge_count > 0);
    let ids = model.encode("aaab aaab");
    let pieces: Vec<&str> = ids
        .iter()
        .map(|&id| model.piece(id).unwrap().text.as_str())
        .collect();
    let reassembled: String = pieces.concat();
    assert_eq!(reassembled, "\u{2581}aaab\u{2581}aaab");
}

#[test]
fn whitespace_cover_is_exposed_for_oracles() {
    let avail: Vec<u32> = (2..=24).rev().collect();
    assert_eq!(whitespace_cover(8, &avail), vec![8]);
}

#[test]
fn vocab_floor_is_enforced() {
    let specials = SpecialsConfig::default();
    let err = train_bpe(["x"].iter().copied(), specials.vocab_floor() - 1, &specials);
    assert!(err.is_err());
}

mod properties {
    use super::small_model;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn any_unicode_round_trips(text in "\\PC{0,64}") {
            let model = small_model();
            let decoded = model.decode(&model.encode(&text)).unwrap();
            prop_assert_eq!(decoded.text, text);
            prop_assert_eq!(decoded.invalid_utf8_runs, 0);
        }

        #[test]
        fn whitespace_and_digit_soup_round_trips(text in "[a 0-9\t\n\u{2581}\u{27E8}]{0,48}") {
            let model = small_model();
            let decoded = model.decode(&model.encode(&text)).unwrap();
            prop_assert_eq!(decoded.text, text);
        }
    }
}

/// Reference trainer: units rebuilt as plain string pieces, every pair
/// recounted from scratch each round, ties broken lexicographically.
/// Valid for corpora of letters and single spaces only.
fn naive_merge_list(corpus: &[&str], max_merges: usize) -> Vec<(String, String)> {
    let marker = '\u{2581}';
    let mut units: Vec<Vec<String>> = Vec::new();
    for text in corpus {
        for word in text.split(' ') {
            let mut unit: Vec<String> = vec![marker.to_string()];
            unit.extend(word.chars().map(|c| c.to_string()));
            units.push(unit);
        }
    }
    let mut merges = Vec::new();
    while merges.len() < max_merges {
        let mut counts: std::collections::BTreeMap<(String, String), u64> =
            std::collections::BTreeMap::new();
        for unit in &units {
            for w in unit.windows(2) {
                *counts.entry((w[0].clone(), w[1].clone())).or_default() += 1;
            }
        }
        // highest count, then lexicographically smallest pair
        let Some((pair, count)) = counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        else {
            break;
        };
        if count < 2 {
            break;
        }
        let fused = format!("{}{}", pair.0, pair.1);
        for unit in &mut units {
            let mut next = Vec::with_capacity(unit.len());
            let mut i = 0;
            while i < unit.len() {
                if i + 1 < unit.len() && unit[i] == pair.0 && unit[i + 1] == pair.1 {
                    next.push(fused.clone());
                    i += 2;
                } else {
                    next.push(unit[i].clone());
                    i += 1;
                }
            }
            *unit = next;
        }
        merges.push(pair);
    }
    merges
}

#[test]
fn trainer_matches_naive_reference_merge_for_merge() {
    let vocab = [
        "vatten", "berget", "skogen", "katten", "huset", "sjunga", "vandra",
        "morgon", "kvall", "natt", "dag", "stark", "vacker", "snabb", "rolig",
    ];
    let corpus: String = (0..400)
        .map(|i| vocab[(i * 7 + i / 5) % vocab.len()])
        .collect::<Vec<_>>()
        .join(" ");
    let specials = SpecialsConfig::default();
    let merge_budget = 40;
    // char pieces = marker + ten digits + the distinct corpus letters
    let distinct_letters = corpus
        .chars()
        .filter(|c| *c != ' ')
        .collect::<std::collections::HashSet<_>>()
        .len();
    let target = specials.vocab_floor() + 11 + distinct_letters + merge_budget;
    let (model, report) =
        train_bpe([corpus.as_str()].iter().copied(), target, &specials).unwrap();
    assert_eq!(report.merge_count, merge_budget, "corpus too small for test");

    let expected = naive_merge_list(&[corpus.as_str()], merge_budget);
    let got: Vec<(String, String)> = model
        .merges()
        .iter()
        .map(|&(l, r)| {
            (
                model.piece(l).unwrap().text.clone(),
                model.piece(r).unwrap().text.clone(),
            )
        })
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn gapped_whitespace_config_still_round_trips() {
    let specials = SpecialsConfig {
        ws_run_lengths: vec![4, 8],
        ..SpecialsConfig::default()
    };
    let (model, _) = train_bpe(
        ["indent    and more"].iter().copied(),
        specials.vocab_floor() + 30,
        &specials,
    )
    .unwrap();
    for text in ["a      b", "      ", "x        y z", "a  b"] {
        let decoded = model.decode(&model.encode(text)).unwrap();
        assert_eq!(decoded.text, text);
    }
}

#[test]
fn tampered_model_file_is_rejected_on_load() {
    let model = small_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tok.json");
    model.save(&path).unwrap();

    // rewrite the first merge to reference a byte piece
    let mut file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let merges = file["merges"].as_array_mut().unwrap();
    assert!(!merges.is_empty());
    merges[0] = serde_json::json!([2, 3]); // byte tokens
    std::fs::write(&path, file.to_string()).unwrap();
    assert!(TokenizerModel::load(&path).is_err());
}

#[test]
fn ws_run_tokens_are_never_extended_by_merges() {
    let corpus = ["code    block    code    block"];
    let specials = SpecialsConfig::default();
    let (model, _) =
        train_bpe(corpus.iter().copied(), specials.vocab_floor() + 40, &specials).unwrap();
    for (l, r) in model.merges() {
        for id in [l, r] {
            let kind = &model.piece(*id).unwrap().kind;
            assert!(
                matches!(kind, PieceKind::Char | PieceKind::Merged),
                "merge touches {kind:?}"
            );
        }
    }
}
