/// Lowercases and splits text into alphanumeric runs; every other
/// non-whitespace character becomes a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            current.push(ch);
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_whitespace_and_punctuation() {
        assert_eq!(
            tokenize("Great knife,  SHARP!"),
            vec!["great", "knife", ",", "sharp", "!"]
        );
    }

    #[test]
    fn blank_text_has_no_tokens() {
        assert!(tokenize("  \t\n").is_empty());
    }
}
