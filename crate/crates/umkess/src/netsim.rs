//! Deterministic in-process network fabric: one KGC, n users, four message
//! flows, and a single adversary scripted between every sender and recipient.
//!
//! A session advances in synchronous steps (announce, challenge, distribute,
//! recover). All of a step's messages are observed by the adversary before
//! any of them is delivered, so a transform rule may consult everything on
//! the wire so far — including other messages of the same step. Delivery
//! order within a step is fixed (ascending recipient, point bundles before
//! the bulletin), which together with label-derived ChaCha20 streams makes
//! whole transcripts byte-reproducible from (config, script).
//!
//! Channel protection follows the scheme's stated assumptions by default:
//! broadcasts are reliable (observable, not modifiable), point-to-point
//! flows are tamperable. Scenarios may override per flow; a script that
//! modifies traffic on a reliable flow is rejected before the session runs.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::{FieldElement, FieldParams};
use crate::poly::Point;
use crate::protocol::{
    ChallengeMessage, GroupDescriptor, GroupListBroadcast, Kgc, PointBundle, ProtocolError,
    PublicBulletin, SessionOutcome, UserCredential, UserSession,
};

/// The four message flows of one session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flow {
    GroupList,
    Challenge,
    PointBundle,
    Bulletin,
}

impl Flow {
    pub const ALL: [Flow; 4] = [
        Flow::GroupList,
        Flow::Challenge,
        Flow::PointBundle,
        Flow::Bulletin,
    ];

    /// Transport class of the flow.
    pub fn kind(self) -> ChannelKind {
        match self {
            Flow::GroupList | Flow::Bulletin => ChannelKind::ReliableBroadcast,
            Flow::Challenge => ChannelKind::UserToKgc,
            Flow::PointBundle => ChannelKind::KgcToUser,
        }
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Flow::GroupList => "group-list",
            Flow::Challenge => "challenge",
            Flow::PointBundle => "point-bundle",
            Flow::Bulletin => "bulletin",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    ReliableBroadcast,
    UserToKgc,
    KgcToUser,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protection {
    /// Adversary may observe but any modifying rule is a scenario error.
    Reliable,
    /// Adversary hook applies in full.
    Tamperable,
}

/// Per-flow protection for one scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChannelPolicy {
    pub group_list: Protection,
    pub challenge: Protection,
    pub point_bundle: Protection,
    pub bulletin: Protection,
}

impl Default for ChannelPolicy {
    /// The scheme's stated assumptions: broadcasts reliable, point-to-point
    /// flows tamperable.
    fn default() -> Self {
        ChannelPolicy {
            group_list: Protection::Reliable,
            challenge: Protection::Tamperable,
            point_bundle: Protection::Tamperable,
            bulletin: Protection::Reliable,
        }
    }
}

impl ChannelPolicy {
    /// Every flow locked down; the falsifiability control for attacks.
    pub fn all_reliable() -> Self {
        ChannelPolicy {
            group_list: Protection::Reliable,
            challenge: Protection::Reliable,
            point_bundle: Protection::Reliable,
            bulletin: Protection::Reliable,
        }
    }

    pub fn protection(&self, flow: Flow) -> Protection {
        match flow {
            Flow::GroupList => self.group_list,
            Flow::Challenge => self.challenge,
            Flow::PointBundle => self.point_bundle,
            Flow::Bulletin => self.bulletin,
        }
    }
}

/// A wire endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Party {
    Kgc,
    User(u64),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Kgc => f.write_str("kgc"),
            Party::User(i) => write!(f, "user-{i}"),
        }
    }
}

impl Serialize for Party {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Party {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == "kgc" {
            return Ok(Party::Kgc);
        }
        s.strip_prefix("user-")
            .and_then(|i| i.parse().ok())
            .map(Party::User)
            .ok_or_else(|| D::Error::custom(format!("invalid party {s:?}")))
    }
}

/// Session phases; the first three carry messages, recovery is local.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    Announce,
    Challenge,
    Distribute,
    Recover,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Step::Announce => "announce",
            Step::Challenge => "challenge",
            Step::Distribute => "distribute",
            Step::Recover => "recover",
        };
        f.write_str(s)
    }
}

/// A typed protocol message in flight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    GroupList(GroupListBroadcast),
    Challenge(ChallengeMessage),
    Points(PointBundle),
    Bulletin(PublicBulletin),
}

/// One pre-adversary observation.
#[derive(Clone, Debug)]
pub struct WireEntry {
    pub step: Step,
    pub flow: Flow,
    pub from: Party,
    pub to: Party,
    pub message: Message,
}

/// Everything the adversary has seen so far, in wire order and pre-adversary
/// form. Transform rules receive this as their view of the session.
#[derive(Default, Debug)]
pub struct WireLog {
    entries: Vec<WireEntry>,
}

impl WireLog {
    pub fn entries(&self) -> &[WireEntry] {
        &self.entries
    }

    /// Latest observed bulletin, if any.
    pub fn bulletin(&self) -> Option<&PublicBulletin> {
        self.entries.iter().rev().find_map(|e| match &e.message {
            Message::Bulletin(b) => Some(b),
            _ => None,
        })
    }

    /// The point bundle addressed to `user`, if observed.
    pub fn bundle_for(&self, user: u64) -> Option<&PointBundle> {
        self.entries.iter().rev().find_map(|e| match &e.message {
            Message::Points(b) if e.to == Party::User(user) => Some(b),
            _ => None,
        })
    }

    /// The challenge message sent by `user`, if observed.
    pub fn challenges_from(&self, user: u64) -> Option<&ChallengeMessage> {
        self.entries.iter().rev().find_map(|e| match &e.message {
            Message::Challenge(c) if e.from == Party::User(user) => Some(c),
            _ => None,
        })
    }

    /// The group list as announced to `user`, if observed.
    pub fn group_list_for(&self, user: u64) -> Option<&GroupListBroadcast> {
        self.entries.iter().rev().find_map(|e| match &e.message {
            Message::GroupList(g) if e.to == Party::User(user) => Some(g),
            _ => None,
        })
    }
}

type MessagePredicate = Box<dyn Fn(&Message) -> bool + Send + Sync>;
type MessageTransform = Box<dyn Fn(&Message, &WireLog) -> Message + Send + Sync>;

/// What the adversary does with a matched message.
pub enum Action {
    /// Deliver unchanged.
    Pass,
    /// Deliver unchanged, noting the adversary retained a copy. Permitted on
    /// reliable channels (observation only).
    CopyThenPass,
    /// Withhold entirely.
    Drop,
    /// Deliver a fixed substitute.
    Replace(Message),
    /// Deliver a function of the original and of everything observed so far.
    Transform(MessageTransform),
}

impl Action {
    fn modifies(&self) -> bool {
        !matches!(self, Action::Pass | Action::CopyThenPass)
    }

    fn name(&self) -> &'static str {
        match self {
            Action::Pass => "pass",
            Action::CopyThenPass => "copy-then-pass",
            Action::Drop => "drop",
            Action::Replace(_) => "replace",
            Action::Transform(_) => "transform",
        }
    }
}

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One adversary rule: all present matchers must hold for the rule to apply.
pub struct Rule {
    flow: Option<Flow>,
    from: Option<Party>,
    to: Option<Party>,
    predicate: Option<MessagePredicate>,
    action: Action,
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Rule({:?}/{:?}->{:?}: {})",
            self.flow,
            self.from,
            self.to,
            self.action.name()
        )
    }
}

impl Rule {
    pub fn new(action: Action) -> Self {
        Rule {
            flow: None,
            from: None,
            to: None,
            predicate: None,
            action,
        }
    }

    pub fn flow(mut self, flow: Flow) -> Self {
        self.flow = Some(flow);
        self
    }

    pub fn from(mut self, from: Party) -> Self {
        self.from = Some(from);
        self
    }

    pub fn to(mut self, to: Party) -> Self {
        self.to = Some(to);
        self
    }

    pub fn when(mut self, predicate: impl Fn(&Message) -> bool + Send + Sync + 'static) -> Self {
        self.predicate = Some(Box::new(predicate));
        self
    }

    fn matches(&self, flow: Flow, from: Party, to: Party, message: &Message) -> bool {
        self.flow.is_none_or(|f| f == flow)
            && self.from.is_none_or(|p| p == from)
            && self.to.is_none_or(|p| p == to)
            && self.predicate.as_ref().is_none_or(|pred| pred(message))
    }
}

/// Ordered adversary rules; the first match decides, no match means Pass.
#[derive(Default, Debug)]
pub struct AdversaryScript {
    rules: Vec<Rule>,
}

impl AdversaryScript {
    /// The empty script: every message passes untouched.
    pub fn passive() -> Self {
        AdversaryScript::default()
    }

    pub fn rule(mut self, rule: Rule) -> Self {
        self.rules.push(rule);
        self
    }

    fn decide(&self, flow: Flow, from: Party, to: Party, message: &Message) -> &Action {
        self.rules
            .iter()
            .find(|r| r.matches(flow, from, to, message))
            .map(|r| &r.action)
            .unwrap_or(&Action::Pass)
    }

    /// A modifying rule that could match a reliable flow is a scenario
    /// definition error. Rules without a flow matcher are judged against
    /// every flow; message predicates cannot be analyzed statically, so they
    /// do not narrow this check.
    fn validate(&self, policy: &ChannelPolicy) -> Result<(), String> {
        for rule in &self.rules {
            if !rule.action.modifies() {
                continue;
            }
            let flows: &[Flow] = match &rule.flow {
                Some(f) => std::slice::from_ref(f),
                None => &Flow::ALL,
            };
            for &flow in flows {
                if policy.protection(flow) == Protection::Reliable {
                    return Err(format!(
                        "rule {:?} would modify traffic on the reliable {flow} flow",
                        rule
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The full deterministic input to one session.
#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub params: FieldParams,
    pub roster: Vec<UserCredential>,
    pub groups: Vec<Vec<u64>>,
    pub seed: u64,
    pub channels: ChannelPolicy,
}

impl SessionConfig {
    pub fn new(
        params: FieldParams,
        roster: Vec<UserCredential>,
        groups: Vec<Vec<u64>>,
        seed: u64,
    ) -> Self {
        SessionConfig {
            params,
            roster,
            groups,
            seed,
            channels: ChannelPolicy::default(),
        }
    }

    pub fn with_channels(mut self, channels: ChannelPolicy) -> Self {
        self.channels = channels;
        self
    }

    /// Canonical digest binding transcripts to the exact config (modulus,
    /// roster secrets, groups, seed, channel policy) that produced them.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct DigestDto<'a> {
            modulus: String,
            roster: Vec<(u64, String)>,
            groups: &'a [Vec<u64>],
            seed: u64,
            channels: &'a ChannelPolicy,
        }
        let dto = DigestDto {
            modulus: self.params.modulus().to_str_radix(10),
            roster: self
                .roster
                .iter()
                .map(|c| (c.index, c.secret.hex()))
                .collect(),
            groups: &self.groups,
            seed: self.seed,
            channels: &self.channels,
        };
        let json = serde_json::to_string(&dto).expect("digest dto serializes");
        format!("sha256:{}", hex::encode(Sha256::digest(json.as_bytes())))
    }
}

/// ChaCha20 stream derived from the session seed and a role label, so each
/// actor's randomness is independent and individually reproducible.
pub fn derived_rng(seed: u64, label: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

// --- wire schema ---------------------------------------------------------

/// JSON form of a message; field elements as fixed-width lowercase hex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WireMessage {
    GroupList {
        groups: Vec<WireGroup>,
    },
    Challenge {
        sender_index: u64,
        // Map keys are decimal group ids; JSON object keys must be strings.
        challenges: BTreeMap<String, String>,
    },
    PointBundle {
        recipient_index: u64,
        points: Vec<WirePoint>,
    },
    Bulletin {
        r0: String,
        key_hashes: BTreeMap<String, String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireGroup {
    pub group_id: u64,
    pub members: Vec<u64>,
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WirePoint {
    pub x: String,
    pub y: String,
}

impl Message {
    pub fn flow(&self) -> Flow {
        match self {
            Message::GroupList(_) => Flow::GroupList,
            Message::Challenge(_) => Flow::Challenge,
            Message::Points(_) => Flow::PointBundle,
            Message::Bulletin(_) => Flow::Bulletin,
        }
    }

    pub fn to_wire(&self) -> WireMessage {
        match self {
            Message::GroupList(b) => WireMessage::GroupList {
                groups: b
                    .groups
                    .iter()
                    .map(|g| WireGroup {
                        group_id: g.group_id(),
                        members: g.members().to_vec(),
                        tag: g.tag().hex(),
                    })
                    .collect(),
            },
            Message::Challenge(c) => WireMessage::Challenge {
                sender_index: c.sender_index,
                challenges: c
                    .challenges
                    .iter()
                    .map(|(&gid, r)| (gid.to_string(), r.hex()))
                    .collect(),
            },
            Message::Points(b) => WireMessage::PointBundle {
                recipient_index: b.recipient_index,
                points: b
                    .points
                    .iter()
                    .map(|p| WirePoint {
                        x: p.x.hex(),
                        y: p.y.hex(),
                    })
                    .collect(),
            },
            Message::Bulletin(b) => WireMessage::Bulletin {
                r0: b.r0.hex(),
                key_hashes: b
                    .key_hashes
                    .iter()
                    .map(|(&gid, h)| (gid.to_string(), h.hex()))
                    .collect(),
            },
        }
    }

    /// Decodes a wire message. Group descriptors are revalidated: the carried
    /// tag must equal the recomputed member sum, so no transcript can smuggle
    /// in a descriptor the protocol itself could not have produced.
    pub fn from_wire(wire: &WireMessage, params: &FieldParams) -> Result<Message, String> {
        let elem = |s: &String| {
            params
                .decode_hex(s)
                .map_err(|e| format!("bad field element {s:?}: {e}"))
        };
        let group_id =
            |s: &String| s.parse::<u64>().map_err(|_| format!("bad group id {s:?}"));
        match wire {
            WireMessage::GroupList { groups } => {
                let mut out = Vec::with_capacity(groups.len());
                for g in groups {
                    let descriptor = GroupDescriptor::new(g.group_id, &g.members, params)
                        .map_err(|e| format!("bad group {}: {e}", g.group_id))?;
                    if descriptor.tag() != &elem(&g.tag)? {
                        return Err(format!(
                            "group {} carries tag {} inconsistent with its members",
                            g.group_id, g.tag
                        ));
                    }
                    out.push(descriptor);
                }
                Ok(Message::GroupList(GroupListBroadcast::new(out)))
            }
            WireMessage::Challenge {
                sender_index,
                challenges,
            } => {
                let mut map = BTreeMap::new();
                for (gid, r) in challenges {
                    map.insert(group_id(gid)?, elem(r)?);
                }
                Ok(Message::Challenge(ChallengeMessage {
                    sender_index: *sender_index,
                    challenges: map,
                }))
            }
            WireMessage::PointBundle {
                recipient_index,
                points,
            } => {
                let mut out = Vec::with_capacity(points.len());
                for p in points {
                    out.push(Point::new(elem(&p.x)?, elem(&p.y)?));
                }
                Ok(Message::Points(PointBundle {
                    recipient_index: *recipient_index,
                    points: out,
                }))
            }
            WireMessage::Bulletin { r0, key_hashes } => {
                let mut map = BTreeMap::new();
                for (gid, h) in key_hashes {
                    map.insert(group_id(gid)?, elem(h)?);
                }
                Ok(Message::Bulletin(PublicBulletin {
                    r0: elem(r0)?,
                    key_hashes: map,
                }))
            }
        }
    }
}

/// One delivered (or withheld) message: the payload as sent and as received.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub step: Step,
    pub channel: Flow,
    pub from: Party,
    pub to: Party,
    pub payload_before: WireMessage,
    /// `None` when the adversary dropped the message.
    pub payload_after: Option<WireMessage>,
}

/// Append-only session record, bound to its config by digest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub config_digest: String,
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    fn new(config_digest: String) -> Self {
        Transcript {
            config_digest,
            records: Vec::new(),
        }
    }

    /// Canonical JSON: pretty-printed, struct-order keys, sorted maps,
    /// trailing newline. Byte-stable for equal transcripts.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("transcript serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Content address of the canonical JSON form.
    pub fn digest(&self) -> String {
        format!(
            "sha256:{}",
            hex::encode(Sha256::digest(self.to_json().as_bytes()))
        )
    }
}

/// A completed session: per-user outcomes plus the KGC's private ground
/// truth (group keys and r0), which the harness uses to judge attacks.
#[derive(Debug)]
pub struct SessionRun {
    pub outcomes: BTreeMap<u64, SessionOutcome>,
    pub keys: BTreeMap<u64, FieldElement>,
    pub r0: FieldElement,
    pub transcript: Transcript,
}

/// A session that aborted mid-protocol, with the step that failed and the
/// transcript up to that point.
#[derive(Debug)]
pub struct SessionFailure {
    pub step: Step,
    pub error: ProtocolError,
    pub transcript: Transcript,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid adversary script: {0}")]
    ScenarioDefinition(String),
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("session aborted at the {} step: {}", .0.step, .0.error)]
    Aborted(Box<SessionFailure>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("transcript does not match: {0}")]
    TranscriptMismatch(String),
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
}

struct Envelope {
    flow: Flow,
    from: Party,
    to: Party,
    message: Message,
}

struct Delivery {
    flow: Flow,
    from: Party,
    to: Party,
    message: Option<Message>,
}

/// Observes the whole step, then applies the first matching rule to each
/// message in order and records before/after pairs.
fn process_step(
    step: Step,
    sends: Vec<Envelope>,
    script: &AdversaryScript,
    policy: &ChannelPolicy,
    wire: &mut WireLog,
    transcript: &mut Transcript,
) -> Vec<Delivery> {
    for e in &sends {
        wire.entries.push(WireEntry {
            step,
            flow: e.flow,
            from: e.from,
            to: e.to,
            message: e.message.clone(),
        });
    }
    let mut deliveries = Vec::with_capacity(sends.len());
    for e in sends {
        let action = script.decide(e.flow, e.from, e.to, &e.message);
        debug_assert!(
            !(action.modifies() && policy.protection(e.flow) == Protection::Reliable),
            "script validation admitted a modifying rule on a reliable flow"
        );
        let after = match action {
            Action::Pass | Action::CopyThenPass => Some(e.message.clone()),
            Action::Drop => None,
            Action::Replace(m) => Some(m.clone()),
            Action::Transform(f) => Some(f(&e.message, wire)),
        };
        transcript.records.push(TranscriptRecord {
            step,
            channel: e.flow,
            from: e.from,
            to: e.to,
            payload_before: e.message.to_wire(),
            payload_after: after.as_ref().map(Message::to_wire),
        });
        deliveries.push(Delivery {
            flow: e.flow,
            from: e.from,
            to: e.to,
            message: after,
        });
    }
    deliveries
}

/// Drives one full session through the adversary. Deterministic in
/// (config, script).
///
/// Abort semantics: a protocol error raised by the KGC or any user aborts
/// the whole session at that step (carrying the partial transcript). A user
/// whose group list, bundle, or bulletin was withheld simply produces no
/// outcome — in a real deployment it would still be waiting.
pub fn run_session(
    config: &SessionConfig,
    script: &AdversaryScript,
) -> Result<SessionRun, SessionError> {
    script
        .validate(&config.channels)
        .map_err(SessionError::ScenarioDefinition)?;
    let kgc = Kgc::new(
        config.params.clone(),
        &config.roster,
        &config.groups,
    )
    .map_err(|e| SessionError::InvalidConfig(e.to_string()))?;

    let mut transcript = Transcript::new(config.digest());
    let mut wire = WireLog::default();
    let abort = |step, error, transcript| {
        Err(SessionError::Aborted(Box::new(SessionFailure {
            step,
            error,
            transcript,
        })))
    };

    // Step 2: the group list reaches every roster member.
    let broadcast = kgc.announce();
    let sends = config
        .roster
        .iter()
        .map(|c| Envelope {
            flow: Flow::GroupList,
            from: Party::Kgc,
            to: Party::User(c.index),
            message: Message::GroupList(broadcast.clone()),
        })
        .collect();
    let delivered = process_step(
        Step::Announce,
        sends,
        script,
        &config.channels,
        &mut wire,
        &mut transcript,
    );

    // Step 3: participants answer with challenges.
    let mut sessions: BTreeMap<u64, UserSession> = BTreeMap::new();
    let mut sends = Vec::new();
    for cred in &config.roster {
        let list = delivered
            .iter()
            .find(|d| d.to == Party::User(cred.index))
            .and_then(|d| match &d.message {
                Some(Message::GroupList(b)) => Some(b),
                _ => None,
            });
        let Some(list) = list else { continue };
        let mut rng = derived_rng(config.seed, &format!("user-{}", cred.index));
        match UserSession::begin(cred.clone(), list, &mut rng) {
            Ok((session, msg)) => {
                sessions.insert(cred.index, session);
                sends.push(Envelope {
                    flow: Flow::Challenge,
                    from: Party::User(cred.index),
                    to: Party::Kgc,
                    message: Message::Challenge(msg),
                });
            }
            Err(ProtocolError::NotParticipating { .. }) => {}
            Err(e) => return abort(Step::Challenge, e, transcript),
        }
    }
    let delivered = process_step(
        Step::Challenge,
        sends,
        script,
        &config.channels,
        &mut wire,
        &mut transcript,
    );

    // Step 4: the KGC builds bundles and the bulletin from whatever
    // challenges actually arrived, then fans both out.
    let mut challenges = BTreeMap::new();
    for d in &delivered {
        if let (Party::User(u), Some(Message::Challenge(c))) = (d.from, &d.message) {
            challenges.insert(u, c.clone());
        }
    }
    let mut kgc_rng = derived_rng(config.seed, "kgc");
    let artifacts = match kgc.build_session(&challenges, &mut kgc_rng) {
        Ok(a) => a,
        Err(e) => return abort(Step::Distribute, e, transcript),
    };
    let mut sends: Vec<Envelope> = artifacts
        .bundles
        .values()
        .map(|b| Envelope {
            flow: Flow::PointBundle,
            from: Party::Kgc,
            to: Party::User(b.recipient_index),
            message: Message::Points(b.clone()),
        })
        .collect();
    sends.extend(config.roster.iter().map(|c| Envelope {
        flow: Flow::Bulletin,
        from: Party::Kgc,
        to: Party::User(c.index),
        message: Message::Bulletin(artifacts.bulletin.clone()),
    }));
    let delivered = process_step(
        Step::Distribute,
        sends,
        script,
        &config.channels,
        &mut wire,
        &mut transcript,
    );

    // Step 5: recovery is local; users missing a delivery stay silent.
    let mut outcomes = BTreeMap::new();
    for (&user, session) in &sessions {
        let mut bundle = None;
        let mut bulletin = None;
        for d in &delivered {
            if d.to != Party::User(user) {
                continue;
            }
            match &d.message {
                Some(Message::Points(b)) if d.flow == Flow::PointBundle => bundle = Some(b),
                Some(Message::Bulletin(b)) if d.flow == Flow::Bulletin => bulletin = Some(b),
                _ => {}
            }
        }
        let (Some(bundle), Some(bulletin)) = (bundle, bulletin) else {
            continue;
        };
        match session.recover(bundle, bulletin) {
            Ok(outcome) => {
                outcomes.insert(user, outcome);
            }
            Err(e) => return abort(Step::Recover, e, transcript),
        }
    }

    Ok(SessionRun {
        outcomes,
        keys: artifacts.keys,
        r0: artifacts.r0,
        transcript,
    })
}

/// Shorthand for an adversary-free run.
pub fn run_honest(config: &SessionConfig) -> Result<SessionRun, SessionError> {
    run_session(config, &AdversaryScript::passive())
}

/// Re-derives all user outcomes from a transcript's post-adversary payloads.
///
/// Every honest-side payload is recomputed from the config (same derived RNG
/// streams) and compared against the recorded `payload_before`; any
/// divergence — wrong digest, edited payload, missing or reordered records —
/// is a [`ReplayError::TranscriptMismatch`]. A transcript of a session that
/// aborted replays to the empty outcome map.
pub fn replay(
    transcript: &Transcript,
    config: &SessionConfig,
) -> Result<BTreeMap<u64, SessionOutcome>, ReplayError> {
    let mismatch = |msg: String| Err(ReplayError::TranscriptMismatch(msg));
    if transcript.config_digest != config.digest() {
        return mismatch("config digest differs".into());
    }
    let kgc = Kgc::new(
        config.params.clone(),
        &config.roster,
        &config.groups,
    )
    .map_err(|e| ReplayError::InvalidConfig(e.to_string()))?;

    let mut records = transcript.records.iter();
    // Pairs the next record against the expected envelope and returns the
    // delivered message.
    let mut take = |step: Step,
                    flow: Flow,
                    from: Party,
                    to: Party,
                    before: &Message|
     -> Result<Option<Message>, ReplayError> {
        let r = records.next().ok_or_else(|| {
            ReplayError::TranscriptMismatch(format!(
                "transcript ends where a {flow} record to {to} was expected"
            ))
        })?;
        if (r.step, r.channel, r.from, r.to) != (step, flow, from, to) {
            return Err(ReplayError::TranscriptMismatch(format!(
                "record out of order: found {} {} {} -> {}, expected {} {} {} -> {}",
                r.step, r.channel, r.from, r.to, step, flow, from, to
            )));
        }
        if r.payload_before != before.to_wire() {
            return Err(ReplayError::TranscriptMismatch(format!(
                "recorded {flow} payload to {to} differs from the recomputed one"
            )));
        }
        r.payload_after
            .as_ref()
            .map(|w| {
                Message::from_wire(w, &config.params)
                    .map_err(ReplayError::TranscriptMismatch)
            })
            .transpose()
    };

    // Announce.
    let broadcast = kgc.announce();
    let mut lists: BTreeMap<u64, GroupListBroadcast> = BTreeMap::new();
    for cred in &config.roster {
        let delivered = take(
            Step::Announce,
            Flow::GroupList,
            Party::Kgc,
            Party::User(cred.index),
            &Message::GroupList(broadcast.clone()),
        )?;
        if let Some(Message::GroupList(b)) = delivered {
            lists.insert(cred.index, b);
        }
    }

    // Challenge.
    let mut sessions: BTreeMap<u64, UserSession> = BTreeMap::new();
    let mut challenges: BTreeMap<u64, ChallengeMessage> = BTreeMap::new();
    for cred in &config.roster {
        let Some(list) = lists.get(&cred.index) else {
            continue;
        };
        let mut rng = derived_rng(config.seed, &format!("user-{}", cred.index));
        let (session, msg) = match UserSession::begin(cred.clone(), list, &mut rng) {
            Ok(pair) => pair,
            Err(ProtocolError::NotParticipating { .. }) => continue,
            Err(e) => return mismatch(format!("challenge step fails on replay: {e}")),
        };
        sessions.insert(cred.index, session);
        let delivered = take(
            Step::Challenge,
            Flow::Challenge,
            Party::User(cred.index),
            Party::Kgc,
            &Message::Challenge(msg),
        )?;
        if let Some(Message::Challenge(c)) = delivered {
            challenges.insert(cred.index, c);
        }
    }

    // Distribute. A KGC failure means the original session aborted here, so
    // the transcript must simply end.
    let mut kgc_rng = derived_rng(config.seed, "kgc");
    let artifacts = match kgc.build_session(&challenges, &mut kgc_rng) {
        Ok(a) => a,
        Err(_) => {
            return if records.next().is_some() {
                mismatch("transcript continues past the step where the session aborts".into())
            } else {
                Ok(BTreeMap::new())
            };
        }
    };
    let mut bundles: BTreeMap<u64, PointBundle> = BTreeMap::new();
    for bundle in artifacts.bundles.values() {
        let delivered = take(
            Step::Distribute,
            Flow::PointBundle,
            Party::Kgc,
            Party::User(bundle.recipient_index),
            &Message::Points(bundle.clone()),
        )?;
        if let Some(Message::Points(b)) = delivered {
            bundles.insert(bundle.recipient_index, b);
        }
    }
    let mut bulletins: BTreeMap<u64, PublicBulletin> = BTreeMap::new();
    for cred in &config.roster {
        let delivered = take(
            Step::Distribute,
            Flow::Bulletin,
            Party::Kgc,
            Party::User(cred.index),
            &Message::Bulletin(artifacts.bulletin.clone()),
        )?;
        if let Some(Message::Bulletin(b)) = delivered {
            bulletins.insert(cred.index, b);
        }
    }
    if records.next().is_some() {
        return mismatch("transcript has surplus records".into());
    }

    // Recover.
    let mut outcomes = BTreeMap::new();
    for (&user, session) in &sessions {
        let (Some(bundle), Some(bulletin)) = (bundles.get(&user), bulletins.get(&user)) else {
            continue;
        };
        match session.recover(bundle, bulletin) {
            Ok(outcome) => {
                outcomes.insert(user, outcome);
            }
            Err(_) => return Ok(BTreeMap::new()), // original aborted at recover
        }
    }
    Ok(outcomes)
}
