//! Caption normalization shared by de-duplication and the caption metrics.

/// Lowercases, strips punctuation to token boundaries, and splits on
/// whitespace. Bracketed placeholders such as `[PLAYER]` or `[TEAM]` survive
/// as single atomic tokens (brackets included, content lowercased), so an
/// anonymized entity is matched as one unit.
///
/// The mapping is idempotent on its own space-joined output.
///
/// ```
/// use densecap::normalize_caption;
///
/// assert_eq!(normalize_caption("[PLAYER] scores!"), vec!["[player]", "scores"]);
/// assert_eq!(normalize_caption("A a A."), vec!["a", "a", "a"]);
/// assert!(normalize_caption("").is_empty());
/// ```
pub fn normalize_caption(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut i = 0;

    while i < chars.len() {
        let c = chars[i];
        if c == '[' {
            // A bracketed span with no nested brackets is one atomic token.
            if let Some(close) = find_placeholder_end(&chars, i) {
                flush(&mut word, &mut tokens);
                if close > i + 1 {
                    let inner: String = chars[i..=close].iter().collect();
                    tokens.push(inner.to_lowercase());
                }
                i = close + 1;
                continue;
            }
            // Unterminated bracket: plain punctuation.
            flush(&mut word, &mut tokens);
        } else if c.is_alphanumeric() {
            // Lowercasing can expand to sequences containing combining
            // marks (e.g. 'İ'); keep only alphanumeric output so the
            // mapping stays idempotent.
            word.extend(c.to_lowercase().filter(|lc| lc.is_alphanumeric()));
        } else {
            flush(&mut word, &mut tokens);
        }
        i += 1;
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// Index of the `]` closing the placeholder opened at `open`, or `None` if
/// the span is unterminated or contains a nested `[`.
fn find_placeholder_end(chars: &[char], open: usize) -> Option<usize> {
    for (offset, c) in chars[open + 1..].iter().enumerate() {
        match c {
            ']' => return Some(open + 1 + offset),
            '[' => return None,
            _ => {}
        }
    }
    None
}

fn flush(word: &mut String, tokens: &mut Vec<String>) {
    if !word.is_empty() {
        tokens.push(std::mem::take(word));
    }
}
