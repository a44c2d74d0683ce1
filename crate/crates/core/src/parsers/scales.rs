use super::lex::{integer, tokenize, without, Tok};
use super::{AnswerValue, ParseFailure, ParseOutcome, Parsed};

pub const QUALITY_LABELS: [&str; 5] = ["Very poor", "Poor", "Fair", "Good", "Very good"];

const SCALE_FILLER: &[&str] = &[
    "i", "id", "would", "say", "feel", "like", "its", "it", "is", "a", "about", "maybe",
    "probably", "rate", "my", "health", "as", "level", "im", "at", "around", "today", "right",
    "now", "the", "number", "honestly", "guess",
];

/// A 1..5 rating given as a digit or number word ("3", "five", "4 out of 5").
pub fn parse_scale_1_5(utterance: &str) -> ParseOutcome {
    let toks = without(tokenize(utterance), SCALE_FILLER);
    let body: &[Tok] = match toks.as_slice() {
        [n, Tok::Word(out), Tok::Word(of), max] if out == "out" && of == "of" && integer(max) == Some(5) => {
            std::slice::from_ref(n)
        }
        all => all,
    };
    let [tok] = body else {
        return Err(ParseFailure::NoMatch);
    };
    let n = match tok {
        Tok::Num(n) if n.fract() == 0.0 => *n,
        Tok::Num(_) => return Err(ParseFailure::NoMatch),
        other => integer(other).ok_or(ParseFailure::NoMatch)? as f64,
    };
    if !(1.0..=5.0).contains(&n) {
        return Err(ParseFailure::OutOfRange);
    }
    Ok(Parsed::new(AnswerValue::Scale(n as u8)))
}

/// One of the five sleep-quality labels, case-insensitive; very poor = 1 ... very good = 5.
pub fn parse_quality(utterance: &str) -> ParseOutcome {
    let toks = without(
        tokenize(utterance),
        &["it", "was", "i", "id", "would", "say", "my", "sleep", "quality", "the", "is", "rate", "as", "its", "it"],
    );
    let words: Option<Vec<&str>> = toks.iter().map(Tok::word).collect();
    let q = match words.as_deref() {
        Some(["very", "poor"]) => 1,
        Some(["poor"]) => 2,
        Some(["fair"]) => 3,
        Some(["good"]) => 4,
        Some(["very", "good"]) => 5,
        _ => return Err(ParseFailure::NoMatch),
    };
    Ok(Parsed::new(AnswerValue::Quality(q)))
}

/// A bare non-negative count.
pub fn parse_count(utterance: &str) -> ParseOutcome {
    let toks = tokenize(utterance);
    match toks.as_slice() {
        [Tok::Num(n)] if n.fract() == 0.0 && *n > f64::from(u32::MAX) => Err(ParseFailure::OutOfRange),
        [tok] => integer(tok)
            .and_then(|n| u32::try_from(n).ok())
            .map(|n| Parsed::new(AnswerValue::Count(n)))
            .ok_or(ParseFailure::NoMatch),
        _ => Err(ParseFailure::NoMatch),
    }
}
