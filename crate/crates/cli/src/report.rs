// SPDX-License-Identifier: Apache-2.0

//! JSON-lines reports. Field names are stable; consumers may rely on them.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use sfamss::protocol::{DecidedBy, SessionOutcome};

/// Outcomes counted as detections in summaries.
pub const DETECTIONS: [&str; 4] = ["REPLAY", "STALE", "BAD_SIGNATURE", "SHARE_MISMATCH"];

#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    pub scenario: String,
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub action: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atm_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_s: Option<u64>,
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub authz: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decided_by: Option<DecidedBy>,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    pub ok: bool,
}

impl StepReport {
    pub fn session(scenario: &str, step: usize, out: &SessionOutcome) -> Self {
        StepReport {
            scenario: scenario.to_string(),
            step,
            line: None,
            action: "session".into(),
            user_id: Some(out.user_id.0),
            atm_id: Some(out.atm_id.0),
            t_s: out.t_s,
            outcome: out.outcome.label().into(),
            authz: out.authz_label().map(str::to_string),
            decided_by: Some(out.decided_by),
            accepted: out.outcome.is_accept(),
            expected: None,
            ok: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub summary: bool,
    pub passed: bool,
    pub steps: usize,
    pub decisions: Vec<String>,
    pub detections: BTreeMap<String, u32>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub transcript_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plaintext_share_findings: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ScenarioReport {
    pub name: String,
    pub steps: Vec<StepReport>,
    pub transcript_digest: String,
    pub plaintext_share_findings: Option<usize>,
}

impl ScenarioReport {
    pub fn new(name: &str) -> Self {
        ScenarioReport {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.steps.iter().all(|s| s.ok)
    }

    pub fn detections(&self) -> BTreeMap<String, u32> {
        let mut counts: BTreeMap<String, u32> = DETECTIONS.iter().map(|d| (d.to_string(), 0)).collect();
        for s in &self.steps {
            if let Some(c) = counts.get_mut(&s.outcome) {
                *c += 1;
            }
        }
        counts
    }

    pub fn summary(&self) -> Summary {
        Summary {
            scenario: self.name.clone(),
            summary: true,
            passed: self.passed(),
            steps: self.steps.len(),
            decisions: self.steps.iter().map(|s| s.outcome.clone()).collect(),
            detections: self.detections(),
            transcript_digest: self.transcript_digest.clone(),
            plaintext_share_findings: self.plaintext_share_findings,
        }
    }

    pub fn write_jsonl(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut *out, s)?;
            writeln!(out)?;
        }
        serde_json::to_writer(&mut *out, &self.summary())?;
        writeln!(out)?;
        out.flush()
    }
}
