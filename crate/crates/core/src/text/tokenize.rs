pub const URL_TOKEN: &str = "<url>";
pub const USER_TOKEN: &str = "<user>";

/// Tokens after which a sentence ends.
pub const SENTENCE_END: [&str; 4] = [".", "!", "?", ";"];

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercases, collapses URLs and `@mentions`, and splits every punctuation
/// character into its own token.
///
/// An apostrophe between two word characters stays inside the word, so
/// `don't` is one token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        if is_url(chunk) {
            tokens.push(URL_TOKEN.to_string());
            continue;
        }
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c == '@' && word.is_empty() && chars.get(i + 1).is_some_and(|&n| is_word_char(n)) {
                tokens.push(USER_TOKEN.to_string());
                i += 1;
                while i < chars.len() && is_word_char(chars[i]) {
                    i += 1;
                }
                continue;
            }
            let inner_apostrophe = (c == '\'' || c == '’')
                && !word.is_empty()
                && chars.get(i + 1).is_some_and(|&n| is_word_char(n));
            if is_word_char(c) || inner_apostrophe {
                word.extend(c.to_lowercase());
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_lowercase().collect());
            }
            i += 1;
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

/// Splits after sentence-final punctuation, then chunks any sentence longer
/// than `n` into consecutive pieces of at most `n` tokens.
pub fn segment_sentences<S: AsRef<str> + Clone>(tokens: &[S], n: usize) -> Vec<Vec<S>> {
    let n = n.max(1);
    let mut sentences = Vec::new();
    let mut current: Vec<S> = Vec::new();
    for tok in tokens {
        current.push(tok.clone());
        if SENTENCE_END.contains(&tok.as_ref()) {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
        .into_iter()
        .flat_map(|s| s.chunks(n).map(<[S]>::to_vec).collect::<Vec<_>>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text)
    }

    #[test]
    fn basic_rules() {
        assert_eq!(toks("I LOVE Mondays!"), ["i", "love", "mondays", "!"]);
        assert!(toks("").is_empty());
        assert!(toks("   \t\n").is_empty());
        assert_eq!(toks("see http://x.co now"), ["see", "<url>", "now"]);
        assert_eq!(
            toks("ping @Bob_1, thanks"),
            ["ping", "<user>", ",", "thanks"]
        );
        assert_eq!(toks("don't stop..."), ["don't", "stop", ".", ".", "."]);
        assert_eq!(toks("#sarcasm"), ["#", "sarcasm"]);
        assert_eq!(toks("a@b"), ["a", "@", "b"]);
    }

    #[test]
    fn segmentation() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(
            segment_sentences(&s(&["a", "b", "."]), 32),
            vec![s(&["a", "b", "."])]
        );
        assert_eq!(
            segment_sentences(&s(&["a", ".", "b", "!"]), 32),
            vec![s(&["a", "."]), s(&["b", "!"])]
        );
        let long: Vec<String> = (0..70).map(|i| format!("w{i}")).collect();
        let lens: Vec<usize> = segment_sentences(&long, 32).iter().map(Vec::len).collect();
        assert_eq!(lens, [32, 32, 6]);
        assert!(segment_sentences::<String>(&[], 4).is_empty());
        assert_eq!(segment_sentences(&s(&[".", "."]), 4).len(), 2);
    }
}
