//! Numeric perturbations used to build multiple-choice distractors.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::verify::{canonicalize, rational_to_decimal, CanonicalAnswer, NumericKind};

/// Candidates are generated in rounds; round `k` applies each strategy with
/// strength `k` (off-by-k, doubling k times, ...).
pub const MAX_ROUNDS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    OffByOne,
    SignFlip,
    DigitSwap,
    Double,
    Halve,
    MagnitudeShift,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::OffByOne,
        Strategy::SignFlip,
        Strategy::DigitSwap,
        Strategy::Double,
        Strategy::Halve,
        Strategy::MagnitudeShift,
    ];

    fn apply(self, gold: &BigRational, round: u32) -> Vec<BigRational> {
        let k = BigRational::from_integer(BigInt::from(round));
        match self {
            Strategy::OffByOne => vec![gold - &k, gold + &k],
            Strategy::SignFlip if round == 1 => vec![-gold.clone()],
            Strategy::SignFlip => vec![],
            Strategy::DigitSwap => digit_swap(gold, round as usize - 1).into_iter().collect(),
            Strategy::Double => {
                vec![gold * BigRational::from_integer(BigInt::from(2).pow(round))]
            }
            Strategy::Halve => {
                vec![gold / BigRational::from_integer(BigInt::from(2).pow(round))]
            }
            Strategy::MagnitudeShift => {
                let scale = BigRational::from_integer(BigInt::from(10).pow(round));
                vec![gold * &scale, gold / &scale]
            }
        }
    }
}

/// Swap the digits at `pos` and `pos + 1` of an integer, skipping swaps that
/// leave the number unchanged or introduce a leading zero.
fn digit_swap(gold: &BigRational, pos: usize) -> Option<BigRational> {
    if !gold.is_integer() {
        return None;
    }
    let int = gold.to_integer();
    let mut digits: Vec<u8> = int.abs().to_string().into_bytes();
    if pos + 1 >= digits.len() || digits[pos] == digits[pos + 1] {
        return None;
    }
    digits.swap(pos, pos + 1);
    if digits[0] == b'0' {
        return None;
    }
    let mut swapped: BigInt = std::str::from_utf8(&digits).ok()?.parse().ok()?;
    if int.is_negative() {
        swapped = -swapped;
    }
    Some(BigRational::from_integer(swapped))
}

/// How the gold answer was written, so distractors look like it.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Style {
    Plain,
    LatexFrac,
    Slash,
}

impl Style {
    pub(crate) fn of(gold: &CanonicalAnswer) -> Style {
        match gold {
            CanonicalAnswer::Numeric {
                kind: NumericKind::Rational,
                raw,
                ..
            } if raw.contains("\\frac") || raw.contains("\\dfrac") => Style::LatexFrac,
            CanonicalAnswer::Numeric {
                kind: NumericKind::Rational,
                ..
            } => Style::Slash,
            _ => Style::Plain,
        }
    }
}

pub(crate) fn render(value: &BigRational, style: Style) -> String {
    if value.is_integer() {
        return value.to_integer().to_string();
    }
    if let (Style::Plain, Some(d)) = (style, rational_to_decimal(value)) {
        return d;
    }
    let sign = if value.is_negative() { "-" } else { "" };
    let (n, d) = (value.numer().abs(), value.denom());
    match style {
        Style::Slash => format!("{sign}{n}/{d}"),
        _ => format!("{sign}\\frac{{{n}}}{{{d}}}"),
    }
}

/// Up to `count` distinct rendered distractors, in generation order
/// (smallest perturbations first). Every returned string canonicalizes to a
/// value different from the gold and from every other distractor.
pub(crate) fn generate(
    gold: &CanonicalAnswer,
    strategies: &[Strategy],
    count: usize,
) -> Vec<String> {
    let Some(value) = gold.value() else {
        return Vec::new();
    };
    let style = Style::of(gold);
    let mut seen: Vec<BigRational> = vec![value.clone()];
    let mut out = Vec::new();
    'rounds: for round in 1..=MAX_ROUNDS {
        for &s in strategies {
            for cand in s.apply(value, round) {
                if out.len() == count {
                    break 'rounds;
                }
                if seen.contains(&cand) {
                    continue;
                }
                let text = render(&cand, style);
                // rendering must round-trip through the verifier
                if canonicalize(&text).value() != Some(&cand) {
                    continue;
                }
                seen.push(cand);
                out.push(text);
            }
        }
    }
    if value.is_zero() && out.is_empty() {
        log::debug!("gold 0 is a fixed point of every selected strategy");
    }
    out
}
