use super::clock::{clock_in_tokens, ClockContext};
use super::duration::minutes_in_tokens;
use super::lex::{integer, is_zero_phrase, tokenize, without, Tok};
use super::{AnswerValue, ParseFailure, ParseOutcome, Parsed};

const COUNT_UNITS: &[&str] = &["times", "time", "x"];
const DURATION_UNITS: &[&str] = &[
    "h", "hr", "hrs", "hour", "hours", "m", "min", "mins", "minute", "minutes",
];

/// Awakening count plus total time awake, e.g. `3 times 1 hr 10 min`.
pub fn parse_count_plus_duration(utterance: &str) -> ParseOutcome {
    let toks = tokenize(utterance);
    if is_zero_phrase(&toks) || is_no_awakening_phrase(&toks) {
        return Ok(Parsed::new(AnswerValue::CountPlusDuration { count: 0, minutes: 0 }));
    }
    let toks = without(
        toks,
        &["i", "woke", "wake", "up", "about", "around", "maybe", "probably", "awake", "roughly"],
    );
    let first = toks.first().ok_or(ParseFailure::NoMatch)?;
    let count = integer(first).ok_or(ParseFailure::NoMatch)?;
    let mut rest = &toks[1..];
    match rest.first().and_then(Tok::word) {
        Some(u) if COUNT_UNITS.contains(&u) => rest = &rest[1..],
        // "1 hr 10 min" on its own carries no count.
        Some(u) if DURATION_UNITS.contains(&u) => return Err(ParseFailure::NoMatch),
        _ => {}
    }
    while rest
        .first()
        .is_some_and(|t| t.is_word("and") || t.is_word("for") || t.is_word("lasting") || t.is_word("total"))
    {
        rest = &rest[1..];
    }
    let count = u32::try_from(count).map_err(|_| ParseFailure::OutOfRange)?;
    let minutes = if rest.is_empty() {
        if count != 0 {
            return Err(ParseFailure::NoMatch);
        }
        0
    } else {
        minutes_in_tokens(rest)?
    };
    Ok(Parsed::new(AnswerValue::CountPlusDuration { count, minutes }))
}

fn is_no_awakening_phrase(toks: &[Tok]) -> bool {
    let words: Vec<&str> = toks.iter().filter_map(Tok::word).collect();
    words.len() == toks.len()
        && matches!(
            words.as_slice(),
            ["didnt", "wake", "up"]
                | ["i", "didnt", "wake", "up"]
                | ["didnt", "wake"]
                | ["never", "woke", "up"]
                | ["no", "awakenings"]
                | ["slept", "through"]
                | ["slept", "through", "the", "night"]
                | ["i", "slept", "through", "the", "night"]
        )
}

const DRINK_WORDS: &[&str] = &[
    "drink", "drinks", "beer", "beers", "glass", "glasses", "of", "wine", "wines", "cocktail",
    "cocktails", "shot", "shots", "beverage", "beverages", "alcoholic", "alcohol", "with",
    "containing", "and", "was", "my", "had", "i", "can", "cans", "pint", "pints", "bottle",
    "bottles", "last", "drank", "finished", "red", "white",
];

/// Drink count plus the time of the last drink, e.g. `2 8:00 pm`.
pub fn parse_count_plus_time(utterance: &str) -> ParseOutcome {
    let toks = tokenize(utterance);
    if is_zero_phrase(&toks) || is_no_drinks_phrase(&toks) {
        return Ok(Parsed::new(AnswerValue::CountPlusTime { count: 0, time: None }));
    }
    let first = toks.first().ok_or(ParseFailure::NoMatch)?;
    let count = match first {
        Tok::Word(w) if w == "a" || w == "an" => 1,
        other => integer(other).ok_or(ParseFailure::NoMatch)?,
    };
    let count = u32::try_from(count).map_err(|_| ParseFailure::OutOfRange)?;

    // "the last one at 9pm": that "one" is a pronoun, not a clock reading.
    let mut rest: Vec<Tok> = Vec::with_capacity(toks.len());
    let mut prev_last = false;
    for t in &toks[1..] {
        if prev_last && t.is_word("one") {
            prev_last = false;
            continue;
        }
        prev_last = t.is_word("last");
        rest.push(t.clone());
    }
    let rest = without(rest, DRINK_WORDS);
    if rest.is_empty() || rest.iter().all(|t| t.is_word("at") || t.is_word("around")) {
        return Ok(Parsed::new(AnswerValue::CountPlusTime { count, time: None }));
    }
    let time = clock_in_tokens(rest, ClockContext::RequireMeridiem)?;
    Ok(Parsed::new(AnswerValue::CountPlusTime { count, time: Some(time) }))
}

fn is_no_drinks_phrase(toks: &[Tok]) -> bool {
    let words: Vec<&str> = toks.iter().filter_map(Tok::word).collect();
    words.len() == toks.len()
        && matches!(
            words.as_slice(),
            ["no", "drinks"]
                | ["no", "alcohol"]
                | ["none", "at", "all"]
                | ["didnt", "drink"]
                | ["i", "didnt", "drink"]
                | ["didnt", "have", "any"]
                | ["i", "didnt", "have", "any"]
                | ["zero", "drinks"]
        )
}
