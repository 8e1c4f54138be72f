use std::path::Path;

use sirm_core::text::{
    generate_incongruity, grid_encode, parse_dataset, segment_sentences, tokenize, DataFormat,
    DatasetSplit, Example, SplitName, Vocabulary, PAD_ID, UNK_ID,
};

fn split(texts: &[&str]) -> DatasetSplit {
    DatasetSplit {
        name: SplitName::Train,
        examples: texts
            .iter()
            .map(|t| Example {
                text: t.to_string(),
                label: 0,
            })
            .collect(),
    }
}

#[test]
fn tokenizer_examples() {
    assert_eq!(tokenize("I LOVE Mondays!"), ["i", "love", "mondays", "!"]);
    assert!(tokenize("").is_empty());
    assert_eq!(tokenize("see http://x.co now"), ["see", "<url>", "now"]);
    assert_eq!(tokenize("@bob don't"), ["<user>", "don't"]);
}

#[test]
fn segmentation_examples() {
    assert_eq!(
        segment_sentences(&["a", "b", "."], 32),
        vec![vec!["a", "b", "."]]
    );
    assert_eq!(
        segment_sentences(&["a", ".", "b", "!"], 32),
        vec![vec!["a", "."], vec!["b", "!"]]
    );
    let long: Vec<String> = (0..70).map(|i| format!("w{i}")).collect();
    let lens: Vec<usize> = segment_sentences(&long, 32).iter().map(Vec::len).collect();
    assert_eq!(lens, [32, 32, 6]);
}

#[test]
fn vocabulary_examples() {
    let corpus = split(&["a a b"]);
    let v = Vocabulary::build(&corpus, 1, 100).unwrap();
    assert_eq!(v.len(), 4);
    assert_eq!(
        (v.id("<pad>"), v.id("<unk>"), v.id("a"), v.id("b")),
        (0, 1, 2, 3)
    );

    let v = Vocabulary::build(&corpus, 2, 100).unwrap();
    assert_eq!(v.len(), 3);
    assert!(v.contains("a") && !v.contains("b"));

    let v = Vocabulary::build(&corpus, 1, 3).unwrap();
    assert_eq!(v.len(), 3);
    assert_eq!(v.token(2), Some("a"));
}

#[test]
fn vocabulary_file_is_stable() {
    let corpus = split(&["z y x y", "x w"]);
    let a = Vocabulary::build(&corpus, 1, 100).unwrap().to_file_string();
    let b = Vocabulary::build(&corpus, 1, 100).unwrap().to_file_string();
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "<pad>\t0");
    assert_eq!(lines[1], "<unk>\t0");
    assert_eq!(&lines[2..], ["y\t2", "x\t2", "z\t1", "w\t1"]);
    let parsed = Vocabulary::parse(&a, Path::new("mem")).unwrap();
    assert_eq!(parsed.to_file_string(), a);
}

#[test]
fn grid_examples() {
    let v = Vocabulary::build(&split(&["a b"]), 1, 100).unwrap();
    let g = grid_encode("a b", &v, 2, 3, 1);
    assert_eq!(g.token_ids, [2, 3, PAD_ID, PAD_ID, PAD_ID, PAD_ID]);
    assert_eq!(g.word_mask, [true, true, false, false, false, false]);
    assert_eq!(g.sentence_mask, [true, false]);

    let g = grid_encode("a . b . a .", &v, 2, 3, 0);
    assert_eq!(g.sentence_mask, [true, true]);
    assert_eq!(g.id(1, 0), 3);

    let g = grid_encode("q r", &v, 1, 3, 0);
    assert_eq!(&g.token_ids[..2], [UNK_ID, UNK_ID]);
    assert_eq!(&g.word_mask[..2], [true, true]);

    for id in grid_encode("a b c a", &v, 2, 3, 0).valid_tokens() {
        assert!(v.token(id).is_some());
    }
}

#[test]
fn dataset_lines() {
    let (s, _) = parse_dataset(
        "{\"text\":\"x\",\"label\":1}\n",
        DataFormat::Jsonl,
        SplitName::Train,
        Path::new("m"),
    )
    .unwrap();
    assert_eq!((s.examples[0].text.as_str(), s.examples[0].label), ("x", 1));

    let (s, _) = parse_dataset(
        "0\thello world\n",
        DataFormat::Tsv,
        SplitName::Train,
        Path::new("m"),
    )
    .unwrap();
    assert_eq!(
        (s.examples[0].text.as_str(), s.examples[0].label),
        ("hello world", 0)
    );

    let mut lines: Vec<String> = (0..12)
        .map(|i| format!("{{\"text\":\"t{i}\",\"label\":0}}"))
        .collect();
    lines.push("{\"text\":\"bad\",\"label\":2}".into());
    let (s, report) = parse_dataset(
        &lines.join("\n"),
        DataFormat::Jsonl,
        SplitName::Train,
        Path::new("m"),
    )
    .unwrap();
    assert_eq!(s.len(), 12);
    assert_eq!(report.malformed[0].0, 13);
}

#[test]
fn dev_split_never_feeds_the_vocabulary() {
    let corpus = split(&[
        "a b", "c d", "e f", "g h", "i j", "k l", "m n", "o p", "q r", "s t",
    ]);
    let (train, dev) = corpus.split_off_dev(0.2, 7);
    let v = Vocabulary::build(&train, 1, 100).unwrap();
    for e in &dev.examples {
        for tok in tokenize(&e.text) {
            assert!(!v.contains(&tok));
        }
    }
}

#[test]
fn synthetic_label_is_a_cross_sentence_xor() {
    let s = generate_incongruity(64, 1, SplitName::Train);
    assert_eq!(s.examples.iter().filter(|e| e.label == 1).count(), 32);
    for e in &s.examples {
        let positive_sentiment = e.text.contains("love");
        let positive_situation = e.text.contains("sunny");
        assert_eq!(e.label == 1, positive_sentiment != positive_situation);
    }
}
