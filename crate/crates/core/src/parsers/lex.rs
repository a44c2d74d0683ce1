//! Shared tokenizer and number-word table.

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// A digit run, optionally with a decimal part.
    Num(f64),
    /// `H:MM` written with a colon; fields kept raw so range errors are reportable.
    Clock(u64, u64),
    Word(String),
}

impl Tok {
    pub(crate) fn word(&self) -> Option<&str> {
        match self {
            Tok::Word(w) => Some(w),
            _ => None,
        }
    }

    pub(crate) fn is_word(&self, w: &str) -> bool {
        self.word() == Some(w)
    }
}

/// Lowercase, fold common spellings (`p.m.`, `o'clock`, apostrophes), and split
/// into numbers, `H:MM` clocks and words. Letters glued to digits are split, so
/// `10:15pm`, `1hr` and `500ml` tokenize like their spaced forms.
pub(crate) fn tokenize(input: &str) -> Vec<Tok> {
    let folded = input
        .to_lowercase()
        .replace("a.m.", "am")
        .replace("p.m.", "pm")
        .replace("a.m", "am")
        .replace("p.m", "pm")
        .replace("fl.", "fl ")
        .replace(['\'', '’'], "");

    let chars: Vec<char> = folded.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let int_part: String = chars[start..i].iter().collect();
            let has_frac = i + 1 < chars.len() && chars[i + 1].is_ascii_digit();
            if has_frac && chars[i] == ':' {
                let fs = i + 1;
                i = fs;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let frac: String = chars[fs..i].iter().collect();
                match (int_part.parse::<u64>(), frac.parse::<u64>()) {
                    // Two-digit minutes only; "10:5" or "10:155" are not clock readings.
                    (Ok(h), Ok(m)) if frac.len() == 2 => toks.push(Tok::Clock(h, m)),
                    _ => toks.push(Tok::Word(format!("{int_part}:{frac}"))),
                }
            } else if has_frac && chars[i] == '.' {
                let fs = i + 1;
                i = fs;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let frac: String = chars[fs..i].iter().collect();
                let text = format!("{int_part}.{frac}");
                toks.push(text.parse::<f64>().map(Tok::Num).unwrap_or(Tok::Word(text)));
            } else {
                toks.push(int_part.parse::<f64>().map(Tok::Num).unwrap_or(Tok::Word(int_part)));
            }
        } else if c.is_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
            toks.push(Tok::Word(chars[start..i].iter().collect()));
        } else {
            i += 1;
        }
    }
    toks
}

/// Value of a spoken number word. Covers zero..twenty plus the frequency words
/// `once`, `twice`, `thrice`.
pub(crate) fn number_word(w: &str) -> Option<u32> {
    let n = match w {
        "zero" => 0,
        "one" | "once" => 1,
        "two" | "twice" => 2,
        "three" | "thrice" => 3,
        "four" => 4,
        "five" => 5,
        "six" => 6,
        "seven" => 7,
        "eight" => 8,
        "nine" => 9,
        "ten" => 10,
        "eleven" => 11,
        "twelve" => 12,
        "thirteen" => 13,
        "fourteen" => 14,
        "fifteen" => 15,
        "sixteen" => 16,
        "seventeen" => 17,
        "eighteen" => 18,
        "nineteen" => 19,
        "twenty" => 20,
        _ => return None,
    };
    Some(n)
}

/// Reads a quantity starting at `toks[i]`: a digit number, a number word, `a`/`an`,
/// `half [a|an]`, optionally followed by `and a half`. Returns the value and the
/// index after it.
pub(crate) fn take_quantity(toks: &[Tok], i: usize) -> Option<(f64, usize)> {
    let (mut value, mut next) = match toks.get(i)? {
        Tok::Num(n) => (*n, i + 1),
        Tok::Word(w) if w == "half" => {
            let mut j = i + 1;
            if toks.get(j).is_some_and(|t| t.is_word("a") || t.is_word("an")) {
                j += 1;
            }
            return Some((0.5, j));
        }
        Tok::Word(w) if w == "a" || w == "an" => {
            // "a half" reads as one half.
            if toks.get(i + 1).is_some_and(|t| t.is_word("half")) {
                return Some((0.5, i + 2));
            }
            (1.0, i + 1)
        }
        Tok::Word(w) => (f64::from(number_word(w)?), i + 1),
        Tok::Clock(..) => return None,
    };
    if toks.get(next).is_some_and(|t| t.is_word("and"))
        && toks.get(next + 1).is_some_and(|t| t.is_word("a") || t.is_word("an"))
        && toks.get(next + 2).is_some_and(|t| t.is_word("half"))
    {
        value += 0.5;
        next += 3;
    }
    Some((value, next))
}

/// Whole-number reading of a token, for counts.
pub(crate) fn integer(tok: &Tok) -> Option<u64> {
    match tok {
        Tok::Num(n) if n.fract() == 0.0 && *n >= 0.0 && *n <= u32::MAX as f64 => Some(*n as u64),
        Tok::Word(w) => number_word(w).map(u64::from),
        _ => None,
    }
}

/// Drop words the caller treats as filler.
pub(crate) fn without(toks: Vec<Tok>, filler: &[&str]) -> Vec<Tok> {
    toks.into_iter()
        .filter(|t| !t.word().is_some_and(|w| filler.contains(&w)))
        .collect()
}

pub(crate) fn is_zero_phrase(toks: &[Tok]) -> bool {
    let words: Vec<&str> = toks.iter().filter_map(Tok::word).collect();
    if words.len() != toks.len() || words.is_empty() {
        return false;
    }
    matches!(
        words.as_slice(),
        ["none"] | ["zero"] | ["nothing"] | ["no"] | ["nope"] | ["never"] | ["not", "at", "all"]
    )
}
