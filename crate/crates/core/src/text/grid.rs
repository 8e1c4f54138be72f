use super::tokenize::{segment_sentences, tokenize};
use super::vocab::{Vocabulary, PAD_ID, UNK_ID};
use crate::error::{Error, Result};

/// A paragraph rendered as `m` sentences of `n` token ids, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParagraphGrid {
    pub m: usize,
    pub n: usize,
    pub token_ids: Vec<usize>,
    pub word_mask: Vec<bool>,
    pub sentence_mask: Vec<bool>,
    pub label: u8,
}

impl ParagraphGrid {
    pub fn id(&self, sentence: usize, word: usize) -> usize {
        self.token_ids[sentence * self.n + word]
    }

    pub fn sentence_word_mask(&self, sentence: usize) -> &[bool] {
        &self.word_mask[sentence * self.n..(sentence + 1) * self.n]
    }

    pub fn valid_tokens(&self) -> impl Iterator<Item = usize> + '_ {
        self.token_ids
            .iter()
            .zip(&self.word_mask)
            .filter(|(_, &m)| m)
            .map(|(&id, _)| id)
    }

    /// Checks the mask invariants and that every id is below `vocab_size`.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let cells = self.m * self.n;
        if self.token_ids.len() != cells
            || self.word_mask.len() != cells
            || self.sentence_mask.len() != self.m
        {
            return Err(Error::shape(
                "paragraph grid",
                &[self.m, self.n],
                &[
                    self.token_ids.len(),
                    self.word_mask.len(),
                    self.sentence_mask.len(),
                ],
            ));
        }
        if let Some(&id) = self.token_ids.iter().find(|&&id| id >= vocab_size) {
            return Err(Error::Lookup { id, vocab_size });
        }
        for (i, &sentence_valid) in self.sentence_mask.iter().enumerate() {
            let row = self.sentence_word_mask(i);
            if sentence_valid != row.iter().any(|&m| m) {
                return Err(Error::Mismatch(format!(
                    "sentence {i}: sentence mask disagrees with word mask"
                )));
            }
        }
        let pad_ok = self
            .token_ids
            .iter()
            .zip(&self.word_mask)
            .all(|(&id, &m)| m || id == PAD_ID);
        if !pad_ok || !self.word_mask.iter().any(|&m| m) {
            return Err(Error::Mismatch(
                "grid padding/mask invariant violated".into(),
            ));
        }
        Ok(())
    }
}

/// Tokenizes, segments, and maps `text` onto an `m×n` grid. Sentences past
/// `m` are dropped; an empty text becomes a single UNK token.
pub fn grid_encode(text: &str, vocab: &Vocabulary, m: usize, n: usize, label: u8) -> ParagraphGrid {
    let (m, n) = (m.max(1), n.max(1));
    let tokens = tokenize(text);
    let mut sentences = segment_sentences(&tokens, n);
    sentences.truncate(m);

    let mut grid = ParagraphGrid {
        m,
        n,
        token_ids: vec![PAD_ID; m * n],
        word_mask: vec![false; m * n],
        sentence_mask: vec![false; m],
        label,
    };
    for (i, sentence) in sentences.iter().enumerate() {
        grid.sentence_mask[i] = true;
        for (j, tok) in sentence.iter().take(n).enumerate() {
            grid.token_ids[i * n + j] = vocab.id(tok);
            grid.word_mask[i * n + j] = true;
        }
    }
    if sentences.is_empty() {
        grid.token_ids[0] = UNK_ID;
        grid.word_mask[0] = true;
        grid.sentence_mask[0] = true;
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::dataset::{DatasetSplit, Example, SplitName};
    use proptest::prelude::*;

    fn vocab(text: &str) -> Vocabulary {
        let split = DatasetSplit {
            name: SplitName::Train,
            examples: vec![Example {
                text: text.into(),
                label: 0,
            }],
        };
        Vocabulary::build(&split, 1, 100).unwrap()
    }

    #[test]
    fn short_text_is_padded() {
        let v = vocab("a b");
        assert_eq!((v.id("a"), v.id("b")), (2, 3));
        let g = grid_encode("a b", &v, 2, 3, 1);
        assert_eq!(g.token_ids, [2, 3, 0, 0, 0, 0]);
        assert_eq!(g.word_mask, [true, true, false, false, false, false]);
        assert_eq!(g.sentence_mask, [true, false]);
        assert_eq!(g.label, 1);
        g.validate(v.len()).unwrap();
    }

    #[test]
    fn extra_sentences_are_dropped() {
        let v = vocab("a . b . c .");
        let g = grid_encode("a . b . c .", &v, 2, 4, 0);
        assert_eq!(g.sentence_mask, [true, true]);
        assert_eq!(g.id(1, 0), v.id("b"));
        assert!(g.valid_tokens().all(|id| id != v.id("c")));
    }

    #[test]
    fn unknown_words_and_empty_text() {
        let v = vocab("a");
        let g = grid_encode("zz yy", &v, 1, 4, 0);
        assert_eq!(g.token_ids, [UNK_ID, UNK_ID, 0, 0]);
        assert_eq!(g.word_mask, [true, true, false, false]);

        let g = grid_encode("", &v, 2, 2, 0);
        assert_eq!(g.token_ids, [UNK_ID, 0, 0, 0]);
        assert_eq!(g.sentence_mask, [true, false]);
        g.validate(v.len()).unwrap();
    }

    proptest! {
        #[test]
        fn encoded_grids_satisfy_invariants(
            text in "[a-d .!?@#,]{0,80}",
            m in 1usize..5,
            n in 1usize..7,
        ) {
            let v = vocab("a b c . ! ?");
            let g = grid_encode(&text, &v, m, n, 0);
            prop_assert!(g.validate(v.len()).is_ok());
            for id in g.valid_tokens() {
                prop_assert!(v.token(id).is_some());
            }
        }
    }
}
