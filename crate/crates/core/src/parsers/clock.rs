use super::lex::{integer, number_word, tokenize, Tok};
use super::{AnswerValue, ClockTime, ParseFailure, ParseOutcome, Parsed};

/// Whether an hour in 1..=12 without am/pm is acceptable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockContext {
    /// Read `9:00` as 09:00.
    #[default]
    TwentyFourHour,
    /// Report `9:00` as ambiguous.
    RequireMeridiem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Meridiem {
    Am,
    Pm,
    Night,
}

const FILLER: &[&str] = &[
    "at", "around", "about", "approximately", "roughly", "maybe", "i", "think", "it", "was",
    "by", "ish", "like", "probably", "just", "exactly", "sharp", "oclock", "o", "clock", "time", "the",
];

pub fn parse_clock_time(utterance: &str, ctx: ClockContext) -> ParseOutcome {
    clock_in_tokens(tokenize(utterance), ctx).map(|t| Parsed::new(AnswerValue::ClockTime(t)))
}

/// A token run holding exactly one clock reading plus filler.
pub(crate) fn clock_in_tokens(toks: Vec<Tok>, ctx: ClockContext) -> Result<ClockTime, ParseFailure> {
    let (toks, hint) = strip_meridiem_phrase(toks);
    let toks: Vec<Tok> = toks
        .into_iter()
        .filter(|t| !t.word().is_some_and(|w| FILLER.contains(&w)))
        .collect();
    clock_from_tokens(&toks, hint, ctx)
}

/// Parses an already-filtered token run as a single clock reading.
fn clock_from_tokens(
    toks: &[Tok],
    hint: Option<Meridiem>,
    ctx: ClockContext,
) -> Result<ClockTime, ParseFailure> {
    let (body, meridiem) = match toks.split_last() {
        Some((Tok::Word(w), rest)) if w == "am" => (rest, Some(Meridiem::Am)),
        Some((Tok::Word(w), rest)) if w == "pm" => (rest, Some(Meridiem::Pm)),
        _ => (toks, None),
    };
    let meridiem = match (meridiem, hint) {
        (Some(m), None) | (None, Some(m)) => Some(m),
        (None, None) => None,
        (Some(a), Some(b)) if a == b => Some(a),
        (Some(Meridiem::Am), Some(Meridiem::Night)) => Some(Meridiem::Am),
        (Some(Meridiem::Pm), Some(Meridiem::Night)) => Some(Meridiem::Pm),
        (Some(_), Some(_)) => return Err(ParseFailure::Ambiguous),
    };

    let (hour, minute) = match body {
        [Tok::Word(w)] if w == "noon" || w == "midday" => return Ok(fixed(720)),
        [Tok::Word(w)] if w == "midnight" => return Ok(fixed(0)),
        [h, Tok::Word(w)] if integer(h) == Some(12) && (w == "noon" || w == "midday") => {
            return Ok(fixed(720))
        }
        [h, Tok::Word(w)] if integer(h) == Some(12) && w == "midnight" => return Ok(fixed(0)),
        [Tok::Clock(h, m)] => (*h, *m),
        [h] => (hour_token(h)?, 0),
        [Tok::Num(h), Tok::Num(m)] if h.fract() == 0.0 && m.fract() == 0.0 && *m >= 10.0 => {
            (*h as u64, *m as u64)
        }
        [h, Tok::Word(half)] if half == "thirty" => (hour_token(h)?, 30),
        _ => return Err(ParseFailure::NoMatch),
    };
    if minute > 59 {
        return Err(ParseFailure::OutOfRange);
    }
    let hour = resolve_hour(hour, meridiem, ctx)?;
    ClockTime::from_hm(hour, minute as u32).ok_or(ParseFailure::OutOfRange)
}

fn fixed(minutes: u32) -> ClockTime {
    ClockTime::from_minutes(minutes).expect("constant in range")
}

fn hour_token(tok: &Tok) -> Result<u64, ParseFailure> {
    match tok {
        Tok::Num(n) if n.fract() == 0.0 && *n >= 0.0 => Ok(*n as u64),
        Tok::Word(w) => number_word(w)
            .filter(|n| (1..=12).contains(n))
            .map(u64::from)
            .ok_or(ParseFailure::NoMatch),
        _ => Err(ParseFailure::NoMatch),
    }
}

fn resolve_hour(hour: u64, meridiem: Option<Meridiem>, ctx: ClockContext) -> Result<u32, ParseFailure> {
    if hour > 23 {
        return Err(ParseFailure::OutOfRange);
    }
    let hour = hour as u32;
    match meridiem {
        Some(Meridiem::Am) => match hour {
            12 => Ok(0),
            1..=11 => Ok(hour),
            _ => Err(ParseFailure::OutOfRange),
        },
        Some(Meridiem::Pm) => match hour {
            12 => Ok(12),
            1..=11 => Ok(hour + 12),
            13..=23 => Ok(hour),
            _ => Err(ParseFailure::OutOfRange),
        },
        // "at night": evening hours are pm, small hours am, twelve is midnight.
        Some(Meridiem::Night) => match hour {
            12 => Ok(0),
            1..=5 => Ok(hour),
            6..=11 => Ok(hour + 12),
            _ => Err(ParseFailure::OutOfRange),
        },
        None => match (hour, ctx) {
            (0 | 13..=23, _) => Ok(hour),
            (_, ClockContext::TwentyFourHour) => Ok(hour),
            (_, ClockContext::RequireMeridiem) => Err(ParseFailure::Ambiguous),
        },
    }
}

/// Removes "in the morning" / "in the evening" / "at night" style phrases and
/// returns the meridiem they imply.
fn strip_meridiem_phrase(toks: Vec<Tok>) -> (Vec<Tok>, Option<Meridiem>) {
    const PHRASES: &[(&[&str], Meridiem)] = &[
        (&["in", "the", "morning"], Meridiem::Am),
        (&["in", "the", "afternoon"], Meridiem::Pm),
        (&["in", "the", "evening"], Meridiem::Pm),
        (&["at", "night"], Meridiem::Night),
        (&["last", "night"], Meridiem::Night),
        (&["tonight"], Meridiem::Pm),
        (&["this", "morning"], Meridiem::Am),
    ];
    for (phrase, meridiem) in PHRASES {
        if let Some(pos) = toks.windows(phrase.len()).position(|w| {
            w.iter().zip(phrase.iter()).all(|(t, p)| t.is_word(p))
        }) {
            let mut rest = toks;
            rest.drain(pos..pos + phrase.len());
            return (rest, Some(*meridiem));
        }
    }
    (toks, None)
}
