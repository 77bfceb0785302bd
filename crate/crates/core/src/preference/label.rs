use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairwise label. `PreferA` is y = 1, `PreferB` is y = 0, `NoPref` is -1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceLabel {
    PreferA,
    PreferB,
    NoPref,
}

impl PreferenceLabel {
    pub fn from_y(y: i64) -> Result<Self> {
        match y {
            1 => Ok(Self::PreferA),
            0 => Ok(Self::PreferB),
            -1 => Ok(Self::NoPref),
            other => Err(Error::InvalidArgument(format!("label {other} not in {{-1, 0, 1}}"))),
        }
    }

    pub fn y(self) -> i8 {
        match self {
            Self::PreferA => 1,
            Self::PreferB => 0,
            Self::NoPref => -1,
        }
    }

    /// Label for the same pair presented in the opposite order.
    pub fn swapped(self) -> Self {
        match self {
            Self::PreferA => Self::PreferB,
            Self::PreferB => Self::PreferA,
            Self::NoPref => Self::NoPref,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Scripted,
    FinalState,
    Noisy,
    Vlm,
    VlmScore,
    Human,
}

impl LabelSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::Scripted => "scripted",
            Self::FinalState => "final_state",
            Self::Noisy => "noisy",
            Self::Vlm => "vlm",
            Self::VlmScore => "vlm_score",
            Self::Human => "human",
        }
    }
}

fn is_minus(c: char) -> bool {
    c == '-' || c == '\u{2212}'
}

/// Standalone `-1`, `0` or `1` tokens in `text` with their byte offsets.
fn label_tokens(text: &str) -> Vec<(usize, i8)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let (value, start, end) = if is_minus(c) && chars.get(i + 1).map(|x| x.1) == Some('1') {
            (-1, i, i + 1)
        } else if c == '0' || c == '1' {
            (if c == '1' { 1 } else { 0 }, i, i)
        } else {
            i += 1;
            continue;
        };
        let prev_ok = start == 0 || {
            let p = chars[start - 1].1;
            !(p.is_alphanumeric() || p == '.' || p == '_' || (value >= 0 && is_minus(p)))
        };
        let next_ok = match chars.get(end + 1).map(|x| x.1) {
            None => true,
            Some(n) if n.is_alphanumeric() || n == '_' => false,
            Some('.') | Some(',') => !chars.get(end + 2).is_some_and(|x| x.1.is_ascii_digit()),
            Some(_) => true,
        };
        if prev_ok && next_ok {
            out.push((pos, value));
        }
        i = end + 1;
    }
    out
}

/// Extracts a label from free-form model output. The token right after the
/// last `Preference:` anchor (case-insensitive) that is followed by a label
/// wins; without an anchored label, the last standalone token in the text.
pub fn parse_vlm_label(text: &str) -> Result<i8> {
    let lower = text.to_lowercase();
    let tokens = label_tokens(text);
    // Lowercasing can shift byte offsets for non-ASCII input; anchors are
    // located on the original text when lengths agree.
    let haystack = if lower.len() == text.len() { lower } else { text.to_string() };
    let anchor = "preference:";
    let mut anchored = None;
    for (apos, _) in haystack.match_indices(anchor) {
        let after = apos + anchor.len();
        let gap_ok = |tpos: usize| {
            text[after..tpos]
                .chars()
                .all(|c| c.is_whitespace() || matches!(c, '*' | '"' | '\'' | '`' | '[' | '(' | '<'))
        };
        if let Some(&(tpos, v)) = tokens.iter().find(|(t, _)| *t >= after) {
            if gap_ok(tpos) {
                anchored = Some(v);
            }
        }
    }
    anchored
        .or_else(|| tokens.last().map(|&(_, v)| v))
        .ok_or(Error::NoLabelFound)
}

/// First decimal number in `text`, after the first `score:` anchor if any;
/// must lie in `[0, 1]`.
pub fn parse_vlm_score(text: &str) -> Result<f64> {
    let lower = text.to_lowercase();
    let start = match lower.find("score:") {
        Some(p) if lower.len() == text.len() => p + "score:".len(),
        _ => 0,
    };
    let bytes = text.as_bytes();
    let mut i = start;
    while i < bytes.len() {
        let b = bytes[i];
        let begins_number = b.is_ascii_digit() || (b == b'.' && bytes.get(i + 1).is_some_and(|n| n.is_ascii_digit()));
        let negative = b == b'-' && bytes.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == b'.');
        if begins_number || negative {
            let mut j = i + 1;
            let mut seen_dot = b == b'.';
            while j < bytes.len() {
                let c = bytes[j];
                if c.is_ascii_digit() {
                    j += 1;
                } else if c == b'.' && !seen_dot && bytes.get(j + 1).is_some_and(|n| n.is_ascii_digit()) {
                    seen_dot = true;
                    j += 1;
                } else {
                    break;
                }
            }
            let v: f64 = text[i..j].parse().map_err(|_| Error::Parse(format!("bad number {:?}", &text[i..j])))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parse(format!("score {v} outside [0, 1]")));
            }
            return Ok(v);
        }
        i += 1;
    }
    Err(Error::Parse("no score found".into()))
}
