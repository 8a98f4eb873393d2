//! Findings raised during a sequence and the operator messages they map to.

use std::fmt;

use crate::error::{Error, Result};

pub const FEVER_TEXT: &str = "POSSIBLE ACTION: Inquire: Have you been experiencing a high fever?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FindingKind {
    Fever,
    AppearanceAnomaly,
}

impl FindingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FindingKind::Fever => "fever",
            FindingKind::AppearanceAnomaly => "appearance-anomaly",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fever" => Ok(FindingKind::Fever),
            "appearance-anomaly" => Ok(FindingKind::AppearanceAnomaly),
            other => Err(Error::InvalidArgument(format!("unknown finding kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub kind: FindingKind,
    /// Temperature in °C for fever findings; free-form score otherwise.
    pub value: f64,
    pub detail: String,
    /// Index of the frame the finding was raised on, if any.
    pub frame: Option<usize>,
}

impl Finding {
    pub fn fever(temp_c: f64, frame: Option<usize>) -> Self {
        Finding {
            kind: FindingKind::Fever,
            value: temp_c,
            detail: String::new(),
            frame,
        }
    }

    pub fn appearance(detail: impl Into<String>, frame: Option<usize>) -> Self {
        Finding {
            kind: FindingKind::AppearanceAnomaly,
            value: 0.0,
            detail: detail.into(),
            frame,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Action,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub severity: Severity,
    pub text: String,
}

impl fmt::Display for ProtocolMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

pub fn message_for(finding: &Finding) -> ProtocolMessage {
    match finding.kind {
        FindingKind::Fever => ProtocolMessage {
            severity: Severity::Action,
            text: FEVER_TEXT.to_string(),
        },
        FindingKind::AppearanceAnomaly => ProtocolMessage {
            severity: Severity::Warning,
            text: format!(
                "WARNING: Possible intention to change appearance; {}.",
                finding.detail
            ),
        },
    }
}

/// One message per finding, input order preserved.
pub fn protocol_messages(findings: &[Finding]) -> Vec<ProtocolMessage> {
    findings.iter().map(message_for).collect()
}

/// Keeps the first finding of each kind.
pub fn dedup_by_kind(findings: Vec<Finding>) -> Vec<Finding> {
    let mut seen = Vec::new();
    findings
        .into_iter()
        .filter(|f| {
            if seen.contains(&f.kind) {
                false
            } else {
                seen.push(f.kind);
                true
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fever_template_is_exact() {
        let msgs = protocol_messages(&[Finding::fever(38.5, Some(3))]);
        assert_eq!(msgs.len(), 1);
        assert_eq!(
            msgs[0].text,
            "POSSIBLE ACTION: Inquire: Have you been experiencing a high fever?"
        );
        assert_eq!(msgs[0].severity, Severity::Action);
    }

    #[test]
    fn appearance_template() {
        let m = message_for(&Finding::appearance("features of artificial moustache are detected", None));
        assert_eq!(
            m.text,
            "WARNING: Possible intention to change appearance; features of artificial moustache are detected."
        );
        assert_eq!(m.severity, Severity::Warning);
    }

    #[test]
    fn order_and_empty() {
        assert!(protocol_messages(&[]).is_empty());
        let msgs = protocol_messages(&[Finding::appearance("x", None), Finding::fever(39.0, None)]);
        assert_eq!(msgs[0].severity, Severity::Warning);
        assert_eq!(msgs[1].severity, Severity::Action);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(FindingKind::parse("fever").unwrap(), FindingKind::Fever);
        assert!(FindingKind::parse("sneeze").is_err());
    }

    #[test]
    fn dedup_keeps_first() {
        let f = dedup_by_kind(vec![
            Finding::fever(38.1, Some(1)),
            Finding::fever(38.9, Some(2)),
            Finding::appearance("a", None),
        ]);
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].frame, Some(1));
    }
}
