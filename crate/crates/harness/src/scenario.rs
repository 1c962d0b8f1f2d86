//! Scenario files: who is in the workspace, how the network behaves, what
//! everyone types, and what must hold afterwards.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;
use wksp_core::security::MembershipModel;

pub const DAY_MS: u64 = 24 * 3600 * 1000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub workspace: WorkspaceSpec,
    pub peers: Vec<PeerSpec>,
    #[serde(default)]
    pub invitations: Vec<InvitationSpec>,
    /// Personal-key certificates `(issuer, subject)` for web-of-trust checks.
    #[serde(default)]
    pub trust_edges: Vec<(String, String)>,
    #[serde(default)]
    pub repo: bool,
    #[serde(default)]
    pub links: LinkSpec,
    #[serde(default)]
    pub partitions: Vec<PartitionSpec>,
    #[serde(default)]
    pub restarts: Vec<RestartSpec>,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
    #[serde(default)]
    pub load: Option<LoadSpec>,
    #[serde(default)]
    pub settings: Settings,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceSpec {
    pub name: String,
    #[serde(default = "default_model")]
    pub model: MembershipModel,
    /// Defaults to the first peer.
    #[serde(default)]
    pub initiator: Option<String>,
    /// Identity of the domain root key; defaults to the workspace name
    /// minus its last component.
    #[serde(default)]
    pub root: Option<String>,
}

fn default_model() -> MembershipModel {
    MembershipModel::PeerToPeer
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerSpec {
    pub username: String,
    /// `[start, end)` intervals; `null` end means until the run stops.
    /// Absent means always online.
    #[serde(default)]
    pub online: Option<Vec<(u64, Option<u64>)>>,
    #[serde(default)]
    pub router: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvitationSpec {
    pub inviter: String,
    pub invitee: String,
    #[serde(default = "default_lifetime")]
    pub lifetime_ms: u64,
}

fn default_lifetime() -> u64 {
    30 * DAY_MS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default = "default_delay")]
    pub delay_ms: u64,
    #[serde(default)]
    pub loss: f64,
    #[serde(default)]
    pub repo_router: usize,
}

fn default_delay() -> u64 {
    50
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self {
            delay_ms: default_delay(),
            loss: 0.0,
            repo_router: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub from_ms: u64,
    pub to_ms: u64,
    /// Peers (and `"repo"`) on each side. Unlisted peers join the first group.
    pub groups: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestartSpec {
    pub peer: String,
    pub at_ms: u64,
    #[serde(default = "default_down")]
    pub down_ms: u64,
}

fn default_down() -> u64 {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptStep {
    pub t: u64,
    pub peer: String,
    #[serde(flatten)]
    pub op: ScriptOp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptOp {
    CreateFolder { path: String },
    CreateText { path: String },
    Insert { path: String, pos: usize, text: String },
    /// Insert at the end of the file.
    Append { path: String, text: String },
    Delete { path: String, pos: usize, count: usize },
    Remove { path: String },
    /// Attach `size` pseudo-random bytes as a binary file.
    Attach { path: String, size: usize },
    /// `peer` issues a fresh invitation to `invitee`, delivered at once.
    Renew {
        invitee: String,
        #[serde(default = "default_lifetime")]
        lifetime_ms: u64,
    },
    /// Publish pending edits without waiting for the coalescing window.
    Flush,
}

/// Generated workload: every publisher appends `payload_bytes` characters to
/// its own file every `interval_ms`, at a random phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub start_ms: u64,
    pub duration_ms: u64,
    #[serde(default = "default_interval")]
    pub interval_ms: u64,
    #[serde(default = "default_payload")]
    pub payload_bytes: usize,
    /// Defaults to every member.
    #[serde(default)]
    pub publishers: Option<Vec<String>>,
}

fn default_interval() -> u64 {
    1000
}

fn default_payload() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    pub coalesce_ms: u64,
    pub steady_interval_ms: u64,
    pub suppression_ms: u64,
    pub max_payload: usize,
    pub piggyback: bool,
    /// How long after the last scripted event to wait for quiescence.
    pub settle_limit_ms: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            coalesce_ms: 500,
            steady_interval_ms: 30_000,
            suppression_ms: 200,
            max_payload: wksp_core::packet::DEFAULT_MAX_PAYLOAD,
            piggyback: true,
            settle_limit_ms: 600_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Assertion {
    /// All active members hold identical documents.
    Converged,
    /// The listed peers hold identical documents.
    ConvergedAmong { peers: Vec<String> },
    TextEquals {
        path: String,
        value: String,
        #[serde(default)]
        peers: Option<Vec<String>>,
    },
    Delivered { peer: String, from: String, seq: u64 },
    NotDelivered { peer: String, from: String, seq: u64 },
    /// `peer` rejected at least one publication by `from`.
    Rejected { peer: String, from: String },
    /// No peer rejected anything and every scripted edit succeeded.
    NoViolations,
    /// `truster`, who trusts their own key and every certificate they
    /// issued, authenticates `subject` through at most `max_chain`
    /// certificates.
    WotChain { truster: String, subject: String, max_chain: usize },
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn initiator(&self) -> &str {
        self.workspace
            .initiator
            .as_deref()
            .or_else(|| self.peers.first().map(|p| p.username.as_str()))
            .unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.peers.is_empty() {
            return bad("no peers".into());
        }
        let mut names = BTreeSet::new();
        for p in &self.peers {
            if p.username.is_empty() || p.username.contains('/') || p.username == "repo" {
                return bad(format!("bad username {:?}", p.username));
            }
            if !names.insert(p.username.as_str()) {
                return bad(format!("duplicate peer {}", p.username));
            }
            for (a, b) in p.online.iter().flatten() {
                if b.is_some_and(|b| b < *a) {
                    return bad(format!("online interval of {} ends before it starts", p.username));
                }
            }
        }
        let known = |n: &str| names.contains(n);
        let known_or_repo = |n: &str| known(n) || (n == "repo" && self.repo);
        if !known(self.initiator()) {
            return bad(format!("unknown initiator {}", self.initiator()));
        }
        let mut members: BTreeSet<&str> = BTreeSet::from([self.initiator()]);
        for inv in &self.invitations {
            if !known(&inv.inviter) || !known(&inv.invitee) {
                return bad(format!("invitation references unknown peer ({} -> {})", inv.inviter, inv.invitee));
            }
            if !members.contains(inv.inviter.as_str()) {
                return bad(format!("{} invites before being a member", inv.inviter));
            }
            members.insert(&inv.invitee);
        }
        for p in &self.peers {
            if !members.contains(p.username.as_str()) {
                return bad(format!("{} is never invited", p.username));
            }
        }
        for (a, b) in &self.trust_edges {
            if !known(a) || !known(b) {
                return bad(format!("trust edge references unknown peer ({a}, {b})"));
            }
        }
        for part in &self.partitions {
            if part.to_ms < part.from_ms {
                return bad("partition ends before it starts".into());
            }
            for n in part.groups.iter().flatten() {
                if !known_or_repo(n) {
                    return bad(format!("partition references unknown peer {n}"));
                }
            }
        }
        for r in &self.restarts {
            if !known(&r.peer) {
                return bad(format!("restart references unknown peer {}", r.peer));
            }
        }
        let mut last = 0;
        for step in &self.script {
            if !known(&step.peer) {
                return bad(format!("script references unknown peer {}", step.peer));
            }
            if step.t < last {
                return bad(format!("script time {} goes backwards", step.t));
            }
            last = step.t;
            if let ScriptOp::Renew { invitee, .. } = &step.op {
                if !known(invitee) {
                    return bad(format!("renewal for unknown peer {invitee}"));
                }
            }
        }
        if let Some(l) = &self.load {
            if l.interval_ms == 0 {
                return bad("load interval must be positive".into());
            }
            for p in l.publishers.iter().flatten() {
                if !known(p) {
                    return bad(format!("load references unknown peer {p}"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.links.loss) {
            return bad("loss must be within [0, 1]".into());
        }
        for a in &self.assertions {
            let refs: Vec<&str> = match a {
                Assertion::Converged | Assertion::NoViolations => vec![],
                Assertion::ConvergedAmong { peers } => peers.iter().map(String::as_str).collect(),
                Assertion::TextEquals { peers, .. } => peers.iter().flatten().map(String::as_str).collect(),
                Assertion::Delivered { peer, from, .. } | Assertion::NotDelivered { peer, from, .. } | Assertion::Rejected { peer, from } => {
                    vec![peer, from]
                }
                Assertion::WotChain { truster, subject, .. } => vec![truster, subject],
            };
            for r in refs {
                if !known_or_repo(r) {
                    return bad(format!("assertion references unknown peer {r}"));
                }
            }
        }
        Ok(())
    }
}
