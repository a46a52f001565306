//! The structured critique text format.
//!
//! A canonical critique is four headed sections followed by a single score
//! line:
//!
//! ```text
//! [Original Image Description]
//! ...
//! [Edited Image Description]
//! ...
//! [Evaluation Rationale]
//! ...
//! [Final Assessment]0.58, 0.36, 0.50
//! ```
//!
//! Scores are visual quality, instruction alignment and content preservation,
//! each written with exactly two decimals. The parser tolerates whitespace
//! after the bracket and around the commas; the emitter always writes the
//! canonical `X.XX, X.XX, X.XX` form.

use std::fmt;

use super::DatasetError;

pub const HEADERS: [&str; 4] = [
    "[Original Image Description]",
    "[Edited Image Description]",
    "[Evaluation Rationale]",
    "[Final Assessment]",
];

/// A score in `[0, 1]` stored in hundredths so that the two-decimal text
/// form round-trips exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CentiScore(u8);

impl CentiScore {
    pub const MAX: CentiScore = CentiScore(100);

    pub fn from_hundredths(h: u8) -> Option<Self> {
        (h <= 100).then_some(CentiScore(h))
    }

    /// Rounds a real in `[0, 1]` to the nearest hundredth.
    pub fn from_f64(x: f64) -> Result<Self, DatasetError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(DatasetError::OutOfRange { what: "score", value: x });
        }
        Ok(CentiScore((x * 100.0).round() as u8))
    }

    pub fn hundredths(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 100.0
    }

    fn parse(token: &str) -> Result<Self, DatasetError> {
        let bad = || DatasetError::MalformedScores(format!("{token:?} is not of the form X.XX"));
        let b = token.as_bytes();
        if b.len() != 4 || b[1] != b'.' || !b[0].is_ascii_digit() || !b[2].is_ascii_digit() || !b[3].is_ascii_digit() {
            return Err(bad());
        }
        let h = u32::from(b[0] - b'0') * 100 + u32::from(b[2] - b'0') * 10 + u32::from(b[3] - b'0');
        if h > 100 {
            return Err(DatasetError::MalformedScores(format!("{token} is outside [0, 1]")));
        }
        Ok(CentiScore(h as u8))
    }
}

impl fmt::Display for CentiScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CritiqueSections {
    pub original_description: String,
    pub edited_description: String,
    pub rationale: String,
}

/// Sections and scores of a critique, independent of its identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CritiqueBody {
    pub sections: CritiqueSections,
    /// (visual quality, instruction alignment, content preservation)
    pub scores: [CentiScore; 3],
}

impl CritiqueBody {
    pub fn score_values(&self) -> [f64; 3] {
        self.scores.map(CentiScore::value)
    }
}

/// Strips the single newline the emitter places on each side of a section.
fn section_text(raw: &str) -> String {
    let s = raw.strip_prefix('\n').unwrap_or(raw);
    let s = s.strip_suffix('\n').unwrap_or(s);
    s.to_string()
}

pub fn parse_critique(text: &str) -> Result<CritiqueBody, DatasetError> {
    let mut positions = [0usize; 4];
    let mut cursor = 0;
    for (i, header) in HEADERS.iter().enumerate() {
        let found = text[cursor..].find(header).ok_or(DatasetError::MissingSection(header))?;
        positions[i] = cursor + found;
        cursor = positions[i] + header.len();
    }
    let body = |i: usize| section_text(&text[positions[i] + HEADERS[i].len()..positions[i + 1]]);
    let sections = CritiqueSections {
        original_description: body(0),
        edited_description: body(1),
        rationale: body(2),
    };
    let scores = parse_score_line(&text[cursor..])?;
    Ok(CritiqueBody { sections, scores })
}

fn parse_score_line(rest: &str) -> Result<[CentiScore; 3], DatasetError> {
    let rest = rest.trim_start_matches([' ', '\t']);
    let (line, after) = rest.split_once('\n').unwrap_or((rest, ""));
    if !after.trim().is_empty() {
        return Err(DatasetError::MalformedScores("unexpected text after the score line".into()));
    }
    let parts: Vec<&str> = line.trim_end().split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(DatasetError::MalformedScores(format!(
            "expected exactly three scores, found {}",
            parts.len()
        )));
    }
    let mut out = [CentiScore::default(); 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = CentiScore::parse(part)?;
    }
    Ok(out)
}

pub fn emit_critique(body: &CritiqueBody) -> String {
    let s = &body.sections;
    let [vq, ia, cp] = body.scores;
    format!(
        "{}\n{}\n{}\n{}\n{}\n{}\n{}{}, {}, {}",
        HEADERS[0],
        s.original_description,
        HEADERS[1],
        s.edited_description,
        HEADERS[2],
        s.rationale,
        HEADERS[3],
        vq,
        ia,
        cp
    )
}
