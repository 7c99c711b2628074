//! One report structure, rendered either as text or as JSON.

use std::fmt::Write as _;

use ospcheck::checks::{BadLeafGoodLeaf, PaymentBoundAudit, RatioReport, Verdict};
use ospcheck::format::serialize_bundle;
use ospcheck::search::{SearchOutcome, SearchVerdict};
use ospcheck::structure::StructureAudit;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(role: &str, path: &str, bytes: &[u8]) -> Self {
        InputDigest {
            role: role.to_string(),
            path: path.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchSummary {
    pub outcome: &'static str,
    pub examined: u64,
    pub decisions: u64,
    pub elapsed_seconds: f64,
    pub target_ratio: String,
    pub pruning: bool,
    pub class: String,
    pub caveat: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<RatioReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reverified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<serde_json::Value>,
    #[serde(skip)]
    pub line: String,
}

impl SearchSummary {
    pub fn new(v: &SearchVerdict) -> anyhow::Result<Self> {
        let (ratio, reverified, counterexample) = match &v.outcome {
            SearchOutcome::Counterexample {
                bundle,
                ratio,
                reverified,
            } => (
                Some(ratio.clone()),
                Some(*reverified),
                Some(serde_json::from_str(&serialize_bundle(bundle)?)?),
            ),
            _ => (None, None, None),
        };
        Ok(SearchSummary {
            outcome: v.outcome.name(),
            examined: v.examined,
            decisions: v.decisions,
            elapsed_seconds: v.elapsed.as_secs_f64(),
            target_ratio: v.target_ratio.to_string(),
            pruning: v.pruning,
            class: v.class.clone(),
            caveat: v.caveat.clone(),
            ratio,
            reverified,
            counterexample,
            line: v.to_string(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "section", rename_all = "kebab-case")]
pub enum Section {
    Verdict(Verdict),
    Ratio(RatioReport),
    Structure(StructureAudit),
    BadLeafGoodLeaf { triples: Vec<BadLeafGoodLeaf> },
    PaymentBounds(PaymentBoundAudit),
    Search(SearchSummary),
    Fixture { path: String },
}

impl Section {
    /// Whether the section reports a failed property or a counterexample.
    fn failed(&self) -> bool {
        match self {
            Section::Verdict(v) => !v.pass,
            Section::Search(s) => s.outcome == "counterexample",
            Section::BadLeafGoodLeaf { triples } => !triples.is_empty(),
            Section::PaymentBounds(a) => !a.holds(),
            Section::Ratio(_) | Section::Structure(_) | Section::Fixture { .. } => false,
        }
    }

    fn render(&self, out: &mut String) {
        let _ = match self {
            Section::Verdict(v) => writeln!(out, "{v}"),
            Section::Ratio(r) => writeln!(out, "{r}"),
            Section::Structure(s) => writeln!(out, "{s}"),
            Section::BadLeafGoodLeaf { triples } => {
                let _ = writeln!(out, "SCAN {} bad-leaf/good-leaf triples", triples.len());
                for t in triples.iter().take(5) {
                    let _ = writeln!(
                        out,
                        "  player {} at #{}: ({}) -> #{} utility {:?} vs ({}) -> #{} utility {:?}",
                        t.player,
                        t.vertex,
                        t.bad_profile.join(", "),
                        t.bad_leaf,
                        t.bad_utility,
                        t.good_profile.join(", "),
                        t.good_leaf,
                        t.good_utility
                    );
                }
                Ok(())
            }
            Section::PaymentBounds(a) => {
                let _ = writeln!(
                    out,
                    "BOUNDS {} of {} payment bounds hold",
                    a.checks.iter().filter(|c| c.holds).count(),
                    a.checks.len()
                );
                for c in a.failures() {
                    let _ = writeln!(
                        out,
                        "  violated: {} at ({}), player {} pays {:?} > {:?}",
                        c.claim,
                        c.profile.join(", "),
                        c.player,
                        c.payment,
                        c.bound
                    );
                }
                Ok(())
            }
            Section::Search(s) => {
                let _ = writeln!(out, "{}", s.line);
                let _ = writeln!(out, "  class: {}", s.class);
                writeln!(out, "  caveat: {}", s.caveat)
            }
            Section::Fixture { path } => writeln!(out, "WROTE {path}"),
        };
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportDocument {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub sections: Vec<Section>,
    pub status: &'static str,
}

impl ReportDocument {
    pub fn new(command: &str, inputs: Vec<InputDigest>, sections: Vec<Section>) -> Self {
        let status = if sections.iter().any(Section::failed) {
            "fail"
        } else {
            "pass"
        };
        ReportDocument {
            tool: "ospcheck",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            inputs,
            sections,
            status,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == "pass"
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for input in &self.inputs {
            let _ = writeln!(
                out,
                "INPUT {} {} sha256:{}",
                input.role, input.path, input.sha256
            );
        }
        for s in &self.sections {
            s.render(&mut out);
        }
        let _ = writeln!(out, "STATUS {}", self.status);
        out
    }

    pub fn machine(&self) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
