//! Built-in suffix stripper used by the caption metric's stem-equivalence
//! stage: the Porter algorithm (1980), fixed with no options, so stem
//! matches are stable across runs and platforms.
//!
//! Words shorter than three letters or containing anything outside
//! `a's`-`z` are returned unchanged.

/// Stems one lowercase token.
pub fn stem(word: &str) -> String {
    if word.len() <= 2 || !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return word.to_string();
    }
    let mut w: Vec<u8> = word.bytes().collect();
    step1a(&mut w);
    step1b(&mut w);
    step1c(&mut w);
    step2(&mut w);
    step3(&mut w);
    step4(&mut w);
    step5a(&mut w);
    step5b(&mut w);
    String::from_utf8(w).expect("ascii")
}

fn is_consonant(w: &[u8], i: usize) -> bool {
    match w[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => false,
        b'y' => i == 0 || !is_consonant(w, i - 1),
        _ => true,
    }
}

/// The measure m in the [C](VC)^m[V] decomposition.
fn measure(w: &[u8]) -> usize {
    let mut m = 0;
    let mut seen_vowel = false;
    for i in 0..w.len() {
        if !is_consonant(w, i) {
            seen_vowel = true;
        } else if seen_vowel {
            m += 1;
            seen_vowel = false;
        }
    }
    m
}

fn has_vowel(w: &[u8]) -> bool {
    (0..w.len()).any(|i| !is_consonant(w, i))
}

fn ends_double_consonant(w: &[u8]) -> bool {
    let n = w.len();
    n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1) && is_consonant(w, n - 2)
}

/// cvc at the end, where the final consonant is not w, x, or y.
fn ends_cvc(w: &[u8]) -> bool {
    let n = w.len();
    n >= 3
        && is_consonant(w, n - 3)
        && !is_consonant(w, n - 2)
        && is_consonant(w, n - 1)
        && !matches!(w[n - 1], b'w' | b'x' | b'y')
}

fn ends(w: &[u8], suffix: &[u8]) -> bool {
    w.len() >= suffix.len() && &w[w.len() - suffix.len()..] == suffix
}

/// Which stems a (suffix → replacement) rule applies to.
#[derive(Clone, Copy)]
enum Cond {
    Always,
    MeasureGt0,
    MeasureGt1,
    /// m > 1 and the stem ends in s or t (the ION rule of step 4).
    MeasureGt1EndsSt,
}

impl Cond {
    fn holds(self, stem: &[u8]) -> bool {
        match self {
            Cond::Always => true,
            Cond::MeasureGt0 => measure(stem) > 0,
            Cond::MeasureGt1 => measure(stem) > 1,
            Cond::MeasureGt1EndsSt => measure(stem) > 1 && matches!(stem.last(), Some(b's' | b't')),
        }
    }
}

/// Applies the rule with the longest matching suffix; a failed condition on
/// that rule ends the step without trying shorter suffixes.
fn apply_rules(w: &mut Vec<u8>, rules: &[(&[u8], &[u8], Cond)]) {
    let best = rules
        .iter()
        .filter(|(suffix, _, _)| ends(w, suffix))
        .max_by_key(|(suffix, _, _)| suffix.len());
    if let Some((suffix, replacement, cond)) = best {
        let stem_len = w.len() - suffix.len();
        if cond.holds(&w[..stem_len]) {
            w.truncate(stem_len);
            w.extend_from_slice(replacement);
        }
    }
}

fn step1a(w: &mut Vec<u8>) {
    apply_rules(
        w,
        &[
            (b"sses", b"ss", Cond::Always),
            (b"ies", b"i", Cond::Always),
            (b"ss", b"ss", Cond::Always),
            (b"s", b"", Cond::Always),
        ],
    );
}

fn step1b(w: &mut Vec<u8>) {
    if ends(w, b"eed") {
        if measure(&w[..w.len() - 3]) > 0 {
            w.pop();
        }
        return;
    }
    let removed = if ends(w, b"ed") && has_vowel(&w[..w.len() - 2]) {
        w.truncate(w.len() - 2);
        true
    } else if ends(w, b"ing") && has_vowel(&w[..w.len() - 3]) {
        w.truncate(w.len() - 3);
        true
    } else {
        false
    };
    if removed {
        if ends(w, b"at") || ends(w, b"bl") || ends(w, b"iz") {
            w.push(b'e');
        } else if ends_double_consonant(w) && !matches!(w.last(), Some(b'l' | b's' | b'z')) {
            w.pop();
        } else if measure(w) == 1 && ends_cvc(w) {
            w.push(b'e');
        }
    }
}

fn step1c(w: &mut [u8]) {
    if ends(w, b"y") && has_vowel(&w[..w.len() - 1]) {
        let n = w.len();
        w[n - 1] = b'i';
    }
}

fn step2(w: &mut Vec<u8>) {
    apply_rules(
        w,
        &[
            (b"ational", b"ate", Cond::MeasureGt0),
            (b"tional", b"tion", Cond::MeasureGt0),
            (b"enci", b"ence", Cond::MeasureGt0),
            (b"anci", b"ance", Cond::MeasureGt0),
            (b"izer", b"ize", Cond::MeasureGt0),
            (b"abli", b"able", Cond::MeasureGt0),
            (b"alli", b"al", Cond::MeasureGt0),
            (b"entli", b"ent", Cond::MeasureGt0),
            (b"eli", b"e", Cond::MeasureGt0),
            (b"ousli", b"ous", Cond::MeasureGt0),
            (b"ization", b"ize", Cond::MeasureGt0),
            (b"ation", b"ate", Cond::MeasureGt0),
            (b"ator", b"ate", Cond::MeasureGt0),
            (b"alism", b"al", Cond::MeasureGt0),
            (b"iveness", b"ive", Cond::MeasureGt0),
            (b"fulness", b"ful", Cond::MeasureGt0),
            (b"ousness", b"ous", Cond::MeasureGt0),
            (b"aliti", b"al", Cond::MeasureGt0),
            (b"iviti", b"ive", Cond::MeasureGt0),
            (b"biliti", b"ble", Cond::MeasureGt0),
        ],
    );
}

fn step3(w: &mut Vec<u8>) {
    apply_rules(
        w,
        &[
            (b"icate", b"ic", Cond::MeasureGt0),
            (b"ative", b"", Cond::MeasureGt0),
            (b"alize", b"al", Cond::MeasureGt0),
            (b"iciti", b"ic", Cond::MeasureGt0),
            (b"ical", b"ic", Cond::MeasureGt0),
            (b"ful", b"", Cond::MeasureGt0),
            (b"ness", b"", Cond::MeasureGt0),
        ],
    );
}

fn step4(w: &mut Vec<u8>) {
    apply_rules(
        w,
        &[
            (b"al", b"", Cond::MeasureGt1),
            (b"ance", b"", Cond::MeasureGt1),
            (b"ence", b"", Cond::MeasureGt1),
            (b"er", b"", Cond::MeasureGt1),
            (b"ic", b"", Cond::MeasureGt1),
            (b"able", b"", Cond::MeasureGt1),
            (b"ible", b"", Cond::MeasureGt1),
            (b"ant", b"", Cond::MeasureGt1),
            (b"ement", b"", Cond::MeasureGt1),
            (b"ment", b"", Cond::MeasureGt1),
            (b"ent", b"", Cond::MeasureGt1),
            (b"ion", b"", Cond::MeasureGt1EndsSt),
            (b"ou", b"", Cond::MeasureGt1),
            (b"ism", b"", Cond::MeasureGt1),
            (b"ate", b"", Cond::MeasureGt1),
            (b"iti", b"", Cond::MeasureGt1),
            (b"ous", b"", Cond::MeasureGt1),
            (b"ive", b"", Cond::MeasureGt1),
            (b"ize", b"", Cond::MeasureGt1),
        ],
    );
}

fn step5a(w: &mut Vec<u8>) {
    if !ends(w, b"e") {
        return;
    }
    let stem = &w[..w.len() - 1];
    let m = measure(stem);
    if m > 1 || (m == 1 && !ends_cvc(stem)) {
        w.pop();
    }
}

fn step5b(w: &mut Vec<u8>) {
    if measure(w) > 1 && ends_double_consonant(w) && w.last() == Some(&b'l') {
        w.pop();
    }
}
