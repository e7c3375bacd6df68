use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One labelled span `[start, end)` in sample units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneEntry {
    pub start: u64,
    pub end: u64,
    pub label: String,
}

impl PhoneEntry {
    pub fn new(start: u64, end: u64, label: impl Into<String>) -> Self {
        PhoneEntry {
            start,
            end,
            label: label.into(),
        }
    }
}

/// Ordered, non-overlapping phone spans.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhoneAlignment {
    entries: Vec<PhoneEntry>,
}

impl PhoneAlignment {
    pub fn new(entries: Vec<PhoneEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            check_entry(e, entries[..i].last()).map_err(Error::InvalidData)?;
        }
        Ok(PhoneAlignment { entries })
    }

    pub fn entries(&self) -> &[PhoneEntry] {
        &self.entries
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.label.as_str())
    }
}

fn check_entry(e: &PhoneEntry, prev: Option<&PhoneEntry>) -> std::result::Result<(), String> {
    if e.end <= e.start {
        return Err(format!("end {} is not after start {}", e.end, e.start));
    }
    if let Some(p) = prev {
        if e.start < p.end {
            return Err(format!(
                "entry {}..{} overlaps or precedes previous entry {}..{}",
                e.start, e.end, p.start, p.end
            ));
        }
    }
    Ok(())
}

/// Read a `.PHN` file: one `start end label` triple per line.
pub fn parse_alignment(path: impl AsRef<Path>) -> Result<PhoneAlignment> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignment_str(&text, path)
}

/// Parse alignment text; `origin` only labels error messages.
pub fn parse_alignment_str(text: &str, origin: impl AsRef<Path>) -> Result<PhoneAlignment> {
    let origin = origin.as_ref();
    let err = |line: usize, reason: String| Error::Alignment {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut entries: Vec<PhoneEntry> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else { continue };
        let start: u64 = first
            .parse()
            .map_err(|_| err(lineno, format!("start bound {first:?} is not a non-negative integer")))?;
        let end_tok = tokens.next().ok_or_else(|| err(lineno, "missing end bound".into()))?;
        let end: u64 = end_tok
            .parse()
            .map_err(|_| err(lineno, format!("end bound {end_tok:?} is not a non-negative integer")))?;
        let label = tokens.next().ok_or_else(|| err(lineno, "missing label".into()))?;
        if let Some(extra) = tokens.next() {
            return Err(err(lineno, format!("unexpected token {extra:?} after label")));
        }
        let entry = PhoneEntry::new(start, end, label);
        check_entry(&entry, entries.last()).map_err(|r| err(lineno, r))?;
        entries.push(entry);
    }
    Ok(PhoneAlignment { entries })
}

pub fn serialize_alignment(alignment: &PhoneAlignment) -> String {
    let mut out = String::new();
    for e in &alignment.entries {
        let _ = writeln!(out, "{} {} {}", e.start, e.end, e.label);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_two_entries() {
        let a = parse_alignment_str("0 1600 sil\n1600 4000 aa", "t.phn").unwrap();
        let labels: Vec<_> = a.labels().collect();
        assert_eq!(labels, ["sil", "aa"]);
        assert_eq!(a.entries()[1].start, 1600);
    }

    #[test]
    fn blank_lines_and_trailing_space_are_fine() {
        let a = parse_alignment_str("\n0 10 h#  \n\n10 20 aa\t\n\n", "t.phn").unwrap();
        assert_eq!(a.entries().len(), 2);
    }

    #[test]
    fn rejects_reversed_bounds() {
        let e = parse_alignment_str("4000 3000 s", "t.phn").unwrap_err();
        assert!(matches!(e, Error::Alignment { line: 1, .. }));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_alignment_str("0 x aa", "t").is_err());
        assert!(parse_alignment_str("0 10", "t").is_err());
        assert!(parse_alignment_str("-1 10 aa", "t").is_err());
        assert!(parse_alignment_str("0 10 aa extra", "t").is_err());
    }

    #[test]
    fn rejects_overlap_and_unsorted() {
        assert!(parse_alignment_str("0 100 a\n50 150 b", "t").is_err());
        assert!(parse_alignment_str("100 200 a\n0 50 b", "t").is_err());
        // touching spans are fine
        assert!(parse_alignment_str("0 100 a\n100 150 b", "t").is_ok());
    }

    #[test]
    fn ten_entry_file_round_trips() {
        let mut text = String::new();
        let mut t = 0;
        for i in 0..10 {
            let len = 100 + 37 * i;
            text.push_str(&format!("{} {} ph{}\n", t, t + len, i % 3));
            t += len + (i % 2) * 5;
        }
        let a = parse_alignment_str(&text, "t").unwrap();
        assert_eq!(serialize_alignment(&a), text);
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(
            spans in prop::collection::vec((0u64..50, 1u64..500, "[a-z#]{1,4}"), 0..30)
        ) {
            let mut t = 0;
            let entries: Vec<_> = spans
                .into_iter()
                .map(|(gap, len, label)| {
                    let e = PhoneEntry::new(t + gap, t + gap + len, label);
                    t = e.end;
                    e
                })
                .collect();
            let a = PhoneAlignment::new(entries).unwrap();
            let back = parse_alignment_str(&serialize_alignment(&a), "t").unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
