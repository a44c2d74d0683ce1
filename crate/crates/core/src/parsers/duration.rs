use super::lex::{is_zero_phrase, take_quantity, tokenize, without, Tok};
use super::{AnswerValue, ParseFailure, ParseOutcome, Parsed, MAX_DURATION_MINUTES};

const FILLER: &[&str] = &[
    "about", "around", "maybe", "approximately", "roughly", "for", "like", "i", "think", "it",
    "took", "me", "total", "in", "was", "only", "just", "probably", "or", "so", "almost",
    "nearly", "over", "lasted", "lasting", "altogether", "overall", "ish",
];

const HOUR_UNITS: &[&str] = &["h", "hr", "hrs", "hour", "hours"];
const MINUTE_UNITS: &[&str] = &["m", "min", "mins", "minute", "minutes"];

pub fn parse_duration(utterance: &str) -> ParseOutcome {
    minutes_in_tokens(&tokenize(utterance)).map(|m| Parsed::new(AnswerValue::Duration(m)))
}

pub(crate) fn render(minutes: u32) -> String {
    let (h, m) = (minutes / 60, minutes % 60);
    match (h, m) {
        (0, m) => format!("{m} min"),
        (h, 0) => format!("{h} hr"),
        (h, m) => format!("{h} hr {m} min"),
    }
}

/// Total minutes expressed by a run of `<quantity> <unit>` terms.
pub(crate) fn minutes_in_tokens(toks: &[Tok]) -> Result<u32, ParseFailure> {
    if is_zero_phrase(toks) || is_instant_phrase(toks) {
        return Ok(0);
    }
    let toks = without(toks.to_vec(), FILLER);
    if toks.is_empty() {
        return Err(ParseFailure::NoMatch);
    }

    let mut total = 0.0_f64;
    let mut i = 0;
    let mut terms = 0;
    let mut last_was_hours = false;
    while i < toks.len() {
        if toks[i].is_word("and") && terms > 0 {
            i += 1;
            continue;
        }
        let (qty, j) = take_quantity(&toks, i).ok_or(ParseFailure::NoMatch)?;
        match toks.get(j).and_then(Tok::word) {
            Some(u) if HOUR_UNITS.contains(&u) => {
                total += qty * 60.0;
                i = j + 1;
                // "an hour and a half"
                if toks.get(i).is_some_and(|t| t.is_word("and"))
                    && toks.get(i + 1).is_some_and(|t| t.is_word("a") || t.is_word("an"))
                    && toks.get(i + 2).is_some_and(|t| t.is_word("half"))
                {
                    total += 30.0;
                    i += 3;
                }
                last_was_hours = true;
            }
            Some(u) if MINUTE_UNITS.contains(&u) => {
                total += qty;
                i = j + 1;
                last_was_hours = false;
            }
            None if j == toks.len() && (terms == 0 || last_was_hours) => {
                // Bare number, or "1 hour 15": minutes.
                total += qty;
                i = j;
                last_was_hours = false;
            }
            _ => return Err(ParseFailure::NoMatch),
        }
        terms += 1;
    }
    let total = total.round();
    if total > f64::from(MAX_DURATION_MINUTES) {
        return Err(ParseFailure::OutOfRange);
    }
    Ok(total as u32)
}

fn is_instant_phrase(toks: &[Tok]) -> bool {
    let words: Vec<&str> = toks.iter().filter_map(Tok::word).collect();
    words.len() == toks.len()
        && matches!(
            words.as_slice(),
            ["no", "time"]
                | ["right", "away"]
                | ["immediately"]
                | ["instantly"]
                | ["didnt", "nap"]
                | ["i", "didnt", "nap"]
                | ["i", "didnt"]
                | ["didnt"]
        )
}
