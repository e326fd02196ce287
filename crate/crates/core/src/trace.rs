//! JSONL transition traces and their replay.

use serde::{Deserialize, Serialize};

use crate::crypto::{CryptoProvider, Digest, RunRng};
use crate::domain::{ProtocolState, Run, RunStep, Status};
use crate::error::{Error, Result};
use crate::protocol::{Actor, EventKind, EventLabel, Failure, Machine};

/// One transition: `pre_status -event(actor)-> post_status`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub step: usize,
    pub actor: Actor,
    pub event: EventKind,
    pub pre_status: Status,
    pub post_status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<Failure>,
    /// Hash of the packet this step put on the channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet_digest: Option<Digest>,
}

fn placed_packet(pre: &ProtocolState, post: &ProtocolState, provider: &CryptoProvider) -> Option<Digest> {
    match &post.env.channel {
        Some(pkt) if post.env.channel != pre.env.channel => Some(provider.hash(&pkt.encode())),
        _ => None,
    }
}

fn record(step: usize, pre: &ProtocolState, rs: &RunStep, post: &ProtocolState, p: &CryptoProvider) -> TraceRecord {
    TraceRecord {
        step,
        actor: rs.event.actor(),
        event: rs.event.kind(),
        pre_status: pre.status,
        post_status: post.status,
        reason: rs.failure,
        packet_digest: placed_packet(pre, post, p),
    }
}

pub fn trace_of(run: &Run, provider: &CryptoProvider) -> Vec<TraceRecord> {
    let posts = run.steps.iter().skip(1).map(|s| &s.state).chain(std::iter::once(&run.final_state));
    run.steps
        .iter()
        .zip(posts)
        .enumerate()
        .map(|(i, (rs, post))| record(i, &rs.state, rs, post, provider))
        .collect()
}

pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace record always serializes"));
        out.push('\n');
    }
    out
}

/// Parses a JSONL trace. Blank lines are skipped; step indices must run
/// 0, 1, 2, ... and each pre-status must equal the previous post-status.
pub fn parse_jsonl(text: &str) -> Result<Vec<TraceRecord>> {
    let mut out: Vec<TraceRecord> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: TraceRecord = serde_json::from_str(line)
            .map_err(|e| Error::Scenario(format!("trace line {}: {e}", line_no + 1)))?;
        if r.step != out.len() {
            return Err(Error::Scenario(format!(
                "trace line {}: step {} where {} was expected",
                line_no + 1,
                r.step,
                out.len()
            )));
        }
        if let Some(prev) = out.last() {
            if prev.post_status != r.pre_status {
                return Err(Error::Scenario(format!(
                    "trace line {}: pre_status {} does not follow {}",
                    line_no + 1,
                    r.pre_status,
                    prev.post_status
                )));
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Re-executes `records` from `s0` and checks every step reproduces the
/// recorded post-status, failure reason and packet digest.
pub fn replay(machine: &Machine, s0: &ProtocolState, run_seed: &[u8], records: &[TraceRecord]) -> Result<Run> {
    let mut rng = RunRng::from_seed_bytes(run_seed);
    let mut state = s0.clone();
    let mut steps = Vec::with_capacity(records.len());
    for r in records {
        let diverged = |detail: String| Error::ReplayDiverged { step: r.step, detail };
        if state.status != r.pre_status {
            return Err(diverged(format!("state is {} but trace says {}", state.status, r.pre_status)));
        }
        let event = EventLabel::new(r.event, r.actor).map_err(diverged)?;
        let t = machine.exec_event(&state, &event, &mut rng)?;
        let step = RunStep {
            state,
            event,
            failure: t.failure,
        };
        let got = record(r.step, &step.state, &step, &t.state, &machine.provider);
        if got != *r {
            let show = |st: Status, f: Option<Failure>| match f {
                Some(f) => format!("{st} ({f})"),
                None => st.to_string(),
            };
            let detail = if (got.post_status, got.reason) == (r.post_status, r.reason) {
                "packet digest differs".to_owned()
            } else {
                format!(
                    "trace says {}, execution gives {}",
                    show(r.post_status, r.reason),
                    show(got.post_status, got.reason)
                )
            };
            return Err(diverged(detail));
        }
        steps.push(step);
        state = t.state;
    }
    Ok(Run {
        steps,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_json_shape() {
        let r = TraceRecord {
            step: 0,
            actor: Actor::Attacker,
            event: EventKind::Attack,
            pre_status: "SEND_CHAL_OK".parse().unwrap(),
            post_status: "CHAL_ATTK".parse().unwrap(),
            reason: None,
            packet_digest: Some(Digest([0xab; 32])),
        };
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.starts_with(
            r#"{"step":0,"actor":"ATTACKER","event":"Attack","pre_status":"SEND_CHAL_OK","post_status":"CHAL_ATTK","packet_digest":"abab"#
        ));
        assert_eq!(parse_jsonl(&line).unwrap(), [r]);
    }

    #[test]
    fn parse_rejects_gaps_and_breaks() {
        let a = r#"{"step":0,"actor":"BOTH","event":"Read_ROM","pre_status":"INIT","post_status":"READ_ROM_OK"}"#;
        let b = r#"{"step":1,"actor":"BOTH","event":"Read_NVM","pre_status":"READ_ROM_OK","post_status":"READ_NVM_OK"}"#;
        assert_eq!(parse_jsonl(&format!("{a}\n\n{b}\n")).unwrap().len(), 2);
        assert!(parse_jsonl(b).is_err());
        assert!(parse_jsonl(&format!("{a}\n{a}")).is_err());
        let broken = b.replace("\"pre_status\":\"READ_ROM_OK\"", "\"pre_status\":\"INIT\"");
        assert!(parse_jsonl(&format!("{a}\n{broken}")).is_err());
        assert!(parse_jsonl(r#"{"step":0,"actor":"AP","event":"Attack","pre_status":"INIT","post_status":"INIT"}"#).is_ok());
        assert!(parse_jsonl(r#"{"step":0}"#).is_err());
    }
}
