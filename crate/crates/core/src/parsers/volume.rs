use super::lex::{is_zero_phrase, take_quantity, tokenize, without, Tok};
use super::{AnswerValue, ParseFailure, ParseOutcome, Parsed, MAX_VOLUME_ML};

/// One US cup (also used for "glass").
pub const ML_PER_CUP: f64 = 236.588;
pub const ML_PER_FL_OZ: f64 = 29.5735;

const FILLER: &[&str] = &[
    "about", "around", "maybe", "approximately", "roughly", "i", "had", "drank", "have", "of",
    "water", "coffee", "tea", "juice", "milk", "soda", "fluid", "fluids", "liquid", "liquids",
    "total", "in", "just", "only", "probably", "like", "think", "since", "the", "last", "survey",
    "so", "far", "today", "or", "almost", "nearly", "full",
];

fn unit_ml(word: &str) -> Option<f64> {
    match word {
        "cup" | "cups" | "glass" | "glasses" | "mug" | "mugs" => Some(ML_PER_CUP),
        "oz" | "ounce" | "ounces" => Some(ML_PER_FL_OZ),
        "ml" | "milliliter" | "milliliters" | "millilitre" | "millilitres" | "mls" => Some(1.0),
        "l" | "liter" | "liters" | "litre" | "litres" => Some(1000.0),
        _ => None,
    }
}

/// Cups, glasses, fluid ounces, milliliters or liters, canonicalized to whole
/// milliliters. A bare number is read as cups. Several terms are summed
/// (`2 cups and 8 ounces`).
pub fn parse_volume(utterance: &str) -> ParseOutcome {
    let toks = tokenize(utterance);
    if is_zero_phrase(&toks) {
        return Ok(Parsed::new(AnswerValue::Volume(0)));
    }
    let toks = without(toks, FILLER);
    if toks.is_empty() {
        return Err(ParseFailure::NoMatch);
    }

    let mut total = 0.0_f64;
    let mut i = 0;
    let mut terms = 0;
    while i < toks.len() {
        if toks[i].is_word("and") && terms > 0 {
            i += 1;
            continue;
        }
        let (qty, mut j) = take_quantity(&toks, i).ok_or(ParseFailure::NoMatch)?;
        // "fl oz", "fluid ounces" (the "fluid" is already dropped as filler)
        if toks.get(j).is_some_and(|t| t.is_word("fl")) {
            j += 1;
        }
        let per_unit = match toks.get(j).and_then(Tok::word) {
            Some(w) => {
                let ml = unit_ml(w).ok_or(ParseFailure::NoMatch)?;
                j += 1;
                ml
            }
            None if terms == 0 && j == toks.len() => ML_PER_CUP,
            None => return Err(ParseFailure::NoMatch),
        };
        // "a cup and a half"
        let mut qty = qty;
        if toks.get(j).is_some_and(|t| t.is_word("and"))
            && toks.get(j + 1).is_some_and(|t| t.is_word("a"))
            && toks.get(j + 2).is_some_and(|t| t.is_word("half"))
        {
            qty += 0.5;
            j += 3;
        }
        total += qty * per_unit;
        terms += 1;
        i = j;
    }
    let ml = total.round();
    if ml > f64::from(MAX_VOLUME_ML) {
        return Err(ParseFailure::OutOfRange);
    }
    Ok(Parsed::new(AnswerValue::Volume(ml as u32)))
}

/// Milliliters expressed in cups, for display.
pub fn ml_to_cups(ml: u32) -> f64 {
    f64::from(ml) / ML_PER_CUP
}
