//! Template-generated incongruity data.
//!
//! Every paragraph pairs a sentiment sentence ("love it !") with a situation
//! sentence ("heavy traffic ."), in either order. The label is 1 when the two
//! polarities disagree. Each word is equally frequent under both labels, so
//! the label is an XOR over the two sentences that no bag of words can
//! represent.
//!
//! The vocabulary is deliberately tiny so that the default optimizer settings
//! fit the training set within a couple of hundred epochs.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{DatasetSplit, Example, SplitName};

const POSITIVE_SENTIMENT: &[&str] = &["love it !", "love it ."];
const NEGATIVE_SENTIMENT: &[&str] = &["hate it !", "hate it ."];
const POSITIVE_SITUATIONS: &[&str] = &["sunny weather .", "sunny weather !"];
const NEGATIVE_SITUATIONS: &[&str] = &["heavy traffic .", "heavy traffic !"];

/// Grid shape large enough for every generated paragraph.
pub const SYNTHETIC_M: usize = 2;
pub const SYNTHETIC_N: usize = 3;

fn pick<'a>(rng: &mut impl Rng, options: &[&'a str]) -> &'a str {
    options.choose(rng).expect("non-empty")
}

fn paragraph(rng: &mut impl Rng, sentiment_positive: bool, situation_positive: bool) -> String {
    let sentiment = if sentiment_positive {
        POSITIVE_SENTIMENT
    } else {
        NEGATIVE_SENTIMENT
    };
    let situation = if situation_positive {
        POSITIVE_SITUATIONS
    } else {
        NEGATIVE_SITUATIONS
    };
    let mut sentences = [pick(rng, sentiment), pick(rng, situation)];
    if rng.random_bool(0.5) {
        sentences.swap(0, 1);
    }
    sentences.join(" ")
}

/// `size` examples with the four polarity combinations as evenly represented
/// as `size` allows, in shuffled order.
pub fn generate_incongruity(size: usize, seed: u64, name: SplitName) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let combos = [(true, true), (false, false), (true, false), (false, true)];
    let mut examples: Vec<Example> = (0..size)
        .map(|i| {
            let (a, b) = combos[i % combos.len()];
            Example {
                text: paragraph(&mut rng, a, b),
                label: u8::from(a != b),
            }
        })
        .collect();
    examples.shuffle(&mut rng);
    DatasetSplit { name, examples }
}
