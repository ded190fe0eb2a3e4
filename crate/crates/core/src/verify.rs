//! Final-answer extraction and a deliberately small notion of mathematical
//! equivalence: exact rationals for anything that parses as a number, and
//! normalized case-insensitive string equality for everything else.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use regex::Regex;
use std::sync::OnceLock;

const BOXED: &str = "\\boxed";

/// Returns the contents of the last `\boxed{...}` in `completion`.
///
/// If the last `\boxed` is not followed by a balanced brace group the answer
/// is treated as absent, even when an earlier box was well formed.
pub fn extract_boxed(completion: &str) -> Option<String> {
    let start = completion.rfind(BOXED)?;
    let rest = &completion[start + BOXED.len()..];
    let rest = rest.trim_start();
    let body = rest.strip_prefix('{')?;
    let mut depth = 1usize;
    let mut prev_backslash = false;
    for (i, c) in body.char_indices() {
        match c {
            '{' if !prev_backslash => depth += 1,
            '}' if !prev_backslash => {
                depth -= 1;
                if depth == 0 {
                    return Some(body[..i].trim().to_string());
                }
            }
            _ => {}
        }
        prev_backslash = c == '\\' && !prev_backslash;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericKind {
    Integer,
    Rational,
    Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonicalAnswer {
    /// Exact value; integers carry denominator 1 and every value is reduced.
    Numeric {
        value: BigRational,
        kind: NumericKind,
        raw: String,
    },
    Symbolic { normalized: String, raw: String },
}

impl CanonicalAnswer {
    pub fn raw(&self) -> &str {
        match self {
            CanonicalAnswer::Numeric { raw, .. } | CanonicalAnswer::Symbolic { raw, .. } => raw,
        }
    }

    pub fn value(&self) -> Option<&BigRational> {
        match self {
            CanonicalAnswer::Numeric { value, .. } => Some(value),
            CanonicalAnswer::Symbolic { .. } => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, CanonicalAnswer::Numeric { .. })
    }

    pub fn numerator(&self) -> Option<&BigInt> {
        self.value().map(|v| v.numer())
    }

    pub fn denominator(&self) -> Option<&BigInt> {
        self.value().map(|v| v.denom())
    }

    /// Exact decimal rendering, for answers written as non-integer decimals.
    pub fn decimal_value(&self) -> Option<String> {
        match self {
            CanonicalAnswer::Numeric {
                value,
                kind: NumericKind::Decimal,
                ..
            } => rational_to_decimal(value),
            _ => None,
        }
    }

    /// Kind-appropriate equality: exact value for numbers, normalized text
    /// otherwise. A number never equals a symbolic answer.
    pub fn matches(&self, other: &CanonicalAnswer) -> bool {
        match (self, other) {
            (CanonicalAnswer::Numeric { value: a, .. }, CanonicalAnswer::Numeric { value: b, .. }) => {
                a == b
            }
            (
                CanonicalAnswer::Symbolic { normalized: a, .. },
                CanonicalAnswer::Symbolic { normalized: b, .. },
            ) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for CanonicalAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CanonicalAnswer::Numeric { value, .. } => write!(f, "{value}"),
            CanonicalAnswer::Symbolic { normalized, .. } => f.write_str(normalized),
        }
    }
}

pub fn canonicalize(answer: &str) -> CanonicalAnswer {
    let cleaned = strip_latex_noise(answer);
    if let Some((value, kind)) = parse_number(&cleaned) {
        return CanonicalAnswer::Numeric {
            value,
            kind,
            raw: answer.to_string(),
        };
    }
    CanonicalAnswer::Symbolic {
        normalized: normalize_symbolic(&cleaned),
        raw: answer.to_string(),
    }
}

pub fn equivalent(a: &str, b: &str) -> bool {
    canonicalize(a).matches(&canonicalize(b))
}

/// Terminating decimal expansion of `v`, or `None` when the denominator has a
/// prime factor other than 2 and 5.
pub fn rational_to_decimal(v: &BigRational) -> Option<String> {
    let mut den = v.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut twos, mut fives) = (0u32, 0u32);
    while den.is_even() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return None;
    }
    let places = twos.max(fives);
    let scaled = v * BigRational::from_integer(BigInt::from(10).pow(places));
    debug_assert!(scaled.is_integer());
    let digits = scaled.to_integer().abs().to_string();
    let sign = if v.is_negative() { "-" } else { "" };
    if places == 0 {
        return Some(format!("{sign}{digits}"));
    }
    let places = places as usize;
    let padded = format!("{digits:0>width$}", width = places + 1);
    let (int_part, frac_part) = padded.split_at(padded.len() - places);
    Some(format!("{sign}{int_part}.{frac_part}"))
}

fn strip_latex_noise(s: &str) -> String {
    let mut t = s.trim().to_string();
    for (open, close) in [("$$", "$$"), ("$", "$"), ("\\(", "\\)"), ("\\[", "\\]")] {
        if t.len() >= open.len() + close.len() && t.starts_with(open) && t.ends_with(close) {
            t = t[open.len()..t.len() - close.len()].to_string();
        }
    }
    for noise in ["\\left", "\\right", "\\,", "\\;", "\\:", "\\!", "\\ ", "~"] {
        t = t.replace(noise, "");
    }
    t = t.replace("\\dfrac", "\\frac").replace("\\tfrac", "\\frac");
    t = t.replace("{,}", "");
    t.retain(|c| !c.is_whitespace());
    loop {
        let before = t.len();
        for wrapper in ["\\text{", "\\mathrm{", "\\textbf{", "\\mathbf{"] {
            if t.starts_with(wrapper) && t.ends_with('}') && encloses(&t[wrapper.len() - 1..]) {
                t = t[wrapper.len()..t.len() - 1].to_string();
            }
        }
        if t.starts_with('{') && encloses(&t) {
            t = t[1..t.len() - 1].to_string();
        }
        if t.len() == before {
            return t;
        }
    }
}

/// True when `s` starts with `{` and its matching `}` is the final character.
fn encloses(s: &str) -> bool {
    if !s.starts_with('{') || !s.ends_with('}') {
        return false;
    }
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return i == s.len() - 1;
                }
            }
            _ => {}
        }
    }
    false
}

fn normalize_symbolic(s: &str) -> String {
    static SINGLE: OnceLock<Regex> = OnceLock::new();
    let single = SINGLE.get_or_init(|| Regex::new(r"\{([A-Za-z0-9])\}").unwrap());
    let mut out = s.to_lowercase();
    loop {
        let next = single.replace_all(&out, "$1").into_owned();
        if next == out {
            return out;
        }
        out = next;
    }
}

fn thousands_grouped(s: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[+-]?\d{1,3}(,\d{3})+(\.\d+)?$").unwrap())
        .is_match(s)
}

fn parse_number(s: &str) -> Option<(BigRational, NumericKind)> {
    let owned;
    let s = if thousands_grouped(s) {
        owned = s.replace(',', "");
        owned.as_str()
    } else {
        s
    };
    let mut parser = NumberParser {
        src: s.as_bytes(),
        pos: 0,
        saw_decimal_point: false,
        saw_fraction: false,
    };
    let value = parser.expr()?;
    if parser.pos != parser.src.len() {
        return None;
    }
    let kind = if value.is_integer() {
        NumericKind::Integer
    } else if parser.saw_fraction {
        NumericKind::Rational
    } else if parser.saw_decimal_point {
        NumericKind::Decimal
    } else {
        NumericKind::Rational
    };
    Some((value, kind))
}

/// Recursive descent over the cleaned answer:
///
/// ```text
/// expr   := signed ('/' signed)?
/// signed := ('+' | '-')* atom
/// atom   := number | '\frac' group group | '{' expr '}'
/// group  := '{' expr '}' | digit
/// ```
struct NumberParser<'a> {
    src: &'a [u8],
    pos: usize,
    saw_decimal_point: bool,
    saw_fraction: bool,
}

impl NumberParser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Option<BigRational> {
        let lhs = self.signed()?;
        if self.eat(b'/') {
            let rhs = self.signed()?;
            if rhs.is_zero() {
                return None;
            }
            self.saw_fraction = true;
            return Some(lhs / rhs);
        }
        Some(lhs)
    }

    fn signed(&mut self) -> Option<BigRational> {
        let mut negative = false;
        loop {
            if self.eat(b'-') {
                negative = !negative;
            } else if !self.eat(b'+') {
                break;
            }
        }
        let v = self.atom()?;
        Some(if negative { -v } else { v })
    }

    fn atom(&mut self) -> Option<BigRational> {
        match self.peek()? {
            b'\\' => {
                let rest = &self.src[self.pos..];
                if !rest.starts_with(b"\\frac") {
                    return None;
                }
                self.pos += b"\\frac".len();
                let num = self.group()?;
                let den = self.group()?;
                if den.is_zero() {
                    return None;
                }
                self.saw_fraction = true;
                Some(num / den)
            }
            b'{' => {
                self.pos += 1;
                let v = self.expr()?;
                self.eat(b'}').then_some(v)
            }
            b'0'..=b'9' | b'.' => self.number(),
            _ => None,
        }
    }

    fn group(&mut self) -> Option<BigRational> {
        if self.eat(b'{') {
            let v = self.expr()?;
            return self.eat(b'}').then_some(v);
        }
        // \frac12 shorthand: single-digit arguments without braces
        match self.peek()? {
            d @ b'0'..=b'9' => {
                self.pos += 1;
                Some(BigRational::from_integer(BigInt::from(d - b'0')))
            }
            _ => None,
        }
    }

    fn number(&mut self) -> Option<BigRational> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let int_digits = &self.src[start..self.pos];
        let mut frac_digits: &[u8] = &[];
        if self.eat(b'.') {
            self.saw_decimal_point = true;
            let fstart = self.pos;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
            frac_digits = &self.src[fstart..self.pos];
        }
        if int_digits.is_empty() && frac_digits.is_empty() {
            return None;
        }
        let mut all = String::with_capacity(int_digits.len() + frac_digits.len() + 1);
        all.push('0');
        all.push_str(std::str::from_utf8(int_digits).ok()?);
        all.push_str(std::str::from_utf8(frac_digits).ok()?);
        let numer: BigInt = all.parse().ok()?;
        let denom = BigInt::from(10).pow(frac_digits.len() as u32);
        Some(BigRational::new(numer, denom))
    }
}
