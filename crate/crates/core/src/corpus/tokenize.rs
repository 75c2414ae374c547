//! Deterministic pre-tokenizer: lowercase, split on whitespace, split
//! punctuation into single-character tokens.

/// Splits one line into word and punctuation tokens.
///
/// Runs of alphanumeric characters form one token; every other
/// non-whitespace character becomes a token of its own. The line is
/// lowercased first, so the output is repeatable byte for byte.
pub fn tokenize(line: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in line.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            word.push(ch);
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_splits_punctuation() {
        assert_eq!(tokenize("Hello, world!"), vec!["hello", ",", "world", "!"]);
    }

    #[test]
    fn empty_and_whitespace_lines_yield_nothing() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t ").is_empty());
    }

    #[test]
    fn interior_punctuation_splits_words() {
        assert_eq!(
            tokenize("don't stop-gap"),
            vec!["don", "'", "t", "stop", "-", "gap"]
        );
    }

    #[test]
    fn repeated_runs_are_stable() {
        let line = "Ein  GROSSES   Haus; 12,5%";
        assert_eq!(tokenize(line), tokenize(line));
        assert_eq!(
            tokenize(line),
            vec!["ein", "grosses", "haus", ";", "12", ",", "5", "%"]
        );
    }
}
