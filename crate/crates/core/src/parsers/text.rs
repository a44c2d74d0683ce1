use super::lex::{tokenize, Tok};
use super::{AnswerValue, ParseFailure, ParseOutcome, Parsed};

fn is_none_text(text: &str) -> bool {
    let toks = tokenize(text);
    let words: Option<Vec<&str>> = toks.iter().map(Tok::word).collect();
    matches!(
        words.as_deref(),
        Some(
            ["no"]
                | ["none"]
                | ["nope"]
                | ["nothing"]
                | ["nothing", "else"]
                | ["no", "medications"]
                | ["no", "medication"]
                | ["no", "meds"]
                | ["none", "today"]
                | ["no", "notes"]
                | ["not", "today"]
                | ["nothing", "to", "add"]
        )
    )
}

fn verbatim(utterance: &str) -> ParseOutcome {
    let text = utterance.trim();
    if text.is_empty() {
        return Err(ParseFailure::NoMatch);
    }
    if is_none_text(text) {
        return Ok(Parsed::new(AnswerValue::None));
    }
    Ok(Parsed::new(AnswerValue::Text(text.to_string())))
}

/// Medications as spoken, verbatim; "no" / "none" become `None`.
pub fn parse_medication(utterance: &str) -> ParseOutcome {
    verbatim(utterance)
}

/// Free-form notes, verbatim; "none" / "nothing" become `None`.
pub fn parse_free_text(utterance: &str) -> ParseOutcome {
    verbatim(utterance)
}

const ID_FILLER: &[&str] = &[
    "yes", "yeah", "yep", "correct", "right", "my", "id", "is", "user", "participant", "its",
    "it", "confirm", "confirmed", "i", "am", "im", "number", "the", "that", "thats", "me",
    "this", "ok", "okay", "sure", "code",
];

/// Extracts a participant identifier such as `P01` (returned upper-cased).
pub fn parse_user_id(utterance: &str) -> ParseOutcome {
    // Leading zeros matter here, so split on raw alphanumeric runs rather than
    // using the numeric tokenizer.
    let lowered = utterance.to_lowercase().replace(['\'', '’'], "");
    let words: Vec<&str> = lowered
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty() && !ID_FILLER.contains(w))
        .collect();

    let mut ids: Vec<String> = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let w = words[i];
        let is_letters = w.chars().all(|c| c.is_ascii_alphabetic());
        let next_is_digits = words
            .get(i + 1)
            .is_some_and(|n| n.chars().all(|c| c.is_ascii_digit()));
        if is_letters && w.len() <= 3 && next_is_digits {
            // "P 01" as transcribed from speech
            ids.push(format!("{w}{}", words[i + 1]));
            i += 2;
        } else if w.chars().any(|c| c.is_ascii_digit()) {
            ids.push(w.to_string());
            i += 1;
        } else {
            i += 1;
        }
    }
    ids.dedup();
    match ids.as_slice() {
        [] => Err(ParseFailure::NoMatch),
        [id] if id.len() > 32 => Err(ParseFailure::OutOfRange),
        [id] => Ok(Parsed::new(AnswerValue::Text(id.to_uppercase()))),
        _ => Err(ParseFailure::Ambiguous),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YesNo {
    Yes,
    No,
}

/// Confirmation grammar: {yes, yeah, yep, correct, right} versus {no, nope, wrong}.
/// Mixed or unrecognized replies return `None`.
pub fn parse_yes_no(utterance: &str) -> Option<YesNo> {
    let toks = tokenize(utterance);
    let mut yes = false;
    let mut no = false;
    let mut negated = false;
    for w in toks.iter().filter_map(Tok::word) {
        match w {
            "yes" | "yeah" | "yep" | "correct" | "right" => yes = true,
            "no" | "nope" | "wrong" => no = true,
            "not" | "isnt" => negated = true,
            "thats" | "that" | "is" | "its" | "it" | "please" | "thanks" | "thank" | "you" | "was" => {}
            _ => return None,
        }
    }
    if negated && yes && !no {
        return Some(YesNo::No);
    }
    match (yes, no) {
        (true, false) => Some(YesNo::Yes),
        (false, true) => Some(YesNo::No),
        _ => None,
    }
}
