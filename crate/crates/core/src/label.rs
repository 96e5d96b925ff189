//! Class labels.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// A categorical label carried as a finite real so that integer rating
/// classes and arbitrary disagreement values share one type. Labels are
/// totally ordered and compare by value; `-0.0` is stored as `0.0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Label(f64);

impl Label {
    /// `None` for NaN or infinite values.
    pub fn new(value: f64) -> Option<Label> {
        value
            .is_finite()
            .then_some(Label(if value == 0.0 { 0.0 } else { value }))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<i64> for Label {
    fn from(v: i64) -> Label {
        Label(v as f64)
    }
}

impl TryFrom<f64> for Label {
    type Error = String;

    fn try_from(v: f64) -> Result<Label, String> {
        Label::new(v).ok_or_else(|| format!("label {v} is not finite"))
    }
}

impl From<Label> for f64 {
    fn from(l: Label) -> f64 {
        l.0
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for Label {}

impl Hash for Label {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Label, String> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| format!("`{s}` is not a numeric label"))?;
        Label::try_from(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        assert_eq!(Label::from(7).to_string(), "7");
        assert_eq!(Label::new(2.5).unwrap().to_string(), "2.5");
        assert_eq!("7".parse::<Label>().unwrap(), Label::from(7));
        assert_eq!("7.0".parse::<Label>().unwrap(), Label::from(7));
        assert!("x".parse::<Label>().is_err());
        assert!("NaN".parse::<Label>().is_err());
    }

    #[test]
    fn signed_zero_is_one_label() {
        assert_eq!(Label::new(-0.0).unwrap(), Label::from(0));
        assert!(Label::new(f64::INFINITY).is_none());
        assert!(Label::from(-1) < Label::from(0));
    }
}
