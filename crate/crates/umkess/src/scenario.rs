//! Scenario files: a small JSON surface describing one session — prime,
//! roster, groups, seed and which behavior to drive — plus execution and
//! transcript verification on top of it. The strictness here is deliberate:
//! every structural problem is caught before a session starts, so a running
//! scenario can only fail by *outcome*.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{
    collision_scenario, group_list_forgery_in, hash_list_forgery, insider_secret_recovery,
    AttackError, AttackRun,
};
use crate::field::FieldParams;
use crate::netsim::{
    derived_rng, replay, run_honest, Protection, ReplayError, SessionConfig, SessionError,
    Transcript,
};
use crate::protocol::{SessionOutcome, UserCredential};

#[derive(Debug, Error)]
pub enum ScenarioError {
    /// The file (or transcript) is structurally unusable: bad JSON, bad
    /// prime, inconsistent roster, fields that don't fit the scenario.
    #[error("scenario rejected: {0}")]
    Schema(String),
    /// A verification run that completed but did not reproduce the
    /// transcript.
    #[error("transcript mismatch: {0}")]
    Mismatch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Honest,
    Collision,
    InsiderSecretRecovery,
    GroupListForgery,
    HashListForgery,
}

impl ScenarioKind {
    fn name(self) -> &'static str {
        match self {
            ScenarioKind::Honest => "honest",
            ScenarioKind::Collision => "collision",
            ScenarioKind::InsiderSecretRecovery => "insider-secret-recovery",
            ScenarioKind::GroupListForgery => "group-list-forgery",
            ScenarioKind::HashListForgery => "hash-list-forgery",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    pub index: u64,
    /// Fixed-width hex; drawn from the seed's "roster" stream when absent.
    #[serde(default)]
    pub secret: Option<String>,
}

/// One scenario as written on disk. Unknown keys are rejected.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// A preset name ("p23", "p47", "p1019", "p256"), a decimal integer, or
    /// a 0x-prefixed hex integer; always validated as a safe prime.
    pub prime: String,
    pub roster: Vec<RosterEntry>,
    pub groups: Vec<Vec<u64>>,
    pub seed: u64,
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub attacker: Option<u64>,
    #[serde(default)]
    pub victim: Option<u64>,
    #[serde(default)]
    pub target_group: Option<u64>,
}

/// What a finished scenario hands the caller: the pass/fail verdict against
/// the scenario's expectation, a one-line summary, and the two artifacts to
/// write out.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub expectation_met: bool,
    pub summary: String,
    pub transcript_json: String,
    pub report_json: String,
}

/// Session-completion report for honest runs, the CLI-side sibling of the
/// attack report (same envelope fields, per-user outcomes as payload).
#[derive(Debug, Serialize)]
struct HonestReport<'a> {
    scenario: &'static str,
    success: bool,
    users: &'a BTreeMap<u64, SessionOutcome>,
    failure: Option<String>,
    transcript_ref: String,
}

impl ScenarioFile {
    pub fn from_json(json: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(json).map_err(|e| ScenarioError::Schema(e.to_string()))
    }

    fn params(&self) -> Result<FieldParams, ScenarioError> {
        let schema = |m: String| ScenarioError::Schema(m);
        if FieldParams::PRESETS.contains(&self.prime.as_str()) {
            return FieldParams::preset(&self.prime)
                .ok_or_else(|| schema("preset table out of sync".into()));
        }
        let value = if let Some(hex) = self.prime.strip_prefix("0x") {
            BigUint::parse_bytes(hex.as_bytes(), 16)
        } else {
            BigUint::parse_bytes(self.prime.as_bytes(), 10)
        }
        .ok_or_else(|| schema(format!("prime \"{}\" is not a number or preset", self.prime)))?;
        FieldParams::new(value).map_err(|e| schema(format!("prime rejected: {e}")))
    }

    /// Builds the session configuration, drawing absent roster secrets from
    /// the (possibly overridden) seed. One derivation per roster slot is
    /// consumed whether or not the slot's secret is explicit, so adding an
    /// explicit secret never shifts anyone else's derived one.
    pub fn build_config(&self, seed_override: Option<u64>) -> Result<SessionConfig, ScenarioError> {
        let schema = |m: String| ScenarioError::Schema(m);
        let params = self.params()?;
        let seed = seed_override.unwrap_or(self.seed);

        let mut entries = self.roster.clone();
        entries.sort_by_key(|e| e.index);
        if entries.is_empty() {
            return Err(schema("roster is empty".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.index != i as u64 + 1 {
                return Err(schema(format!(
                    "roster indices must be exactly 1..={}, found {}",
                    entries.len(),
                    e.index
                )));
            }
        }
        if BigUint::from(entries.len() as u64) >= *params.modulus() {
            return Err(schema("roster does not fit in the field".into()));
        }
        let mut rng = derived_rng(seed, "roster");
        let roster: Vec<UserCredential> = entries
            .iter()
            .map(|e| {
                let drawn = params.random_element(&mut rng);
                let secret = match &e.secret {
                    None => Ok(drawn),
                    Some(hex) => params.decode_hex(hex).map_err(|err| {
                        schema(format!("secret for user {}: {err}", e.index))
                    }),
                }?;
                Ok(UserCredential { index: e.index, secret })
            })
            .collect::<Result<_, ScenarioError>>()?;

        if self.groups.is_empty() {
            return Err(schema("at least one group is required".into()));
        }

        self.check_role_fields()?;
        let mut config = SessionConfig::new(params, roster, self.groups.clone(), seed);
        match self.scenario {
            ScenarioKind::Honest | ScenarioKind::Collision | ScenarioKind::InsiderSecretRecovery => {}
            ScenarioKind::GroupListForgery => {
                config.channels.group_list = Protection::Tamperable;
            }
            ScenarioKind::HashListForgery => {
                config.channels.bulletin = Protection::Tamperable;
            }
        }
        Ok(config)
    }

    /// Each scenario takes exactly the role fields it uses; stray ones are
    /// as much a schema error as unknown keys.
    fn check_role_fields(&self) -> Result<(), ScenarioError> {
        let required: &[(&str, &Option<u64>, bool)] = match self.scenario {
            ScenarioKind::Honest | ScenarioKind::Collision => &[
                ("attacker", &self.attacker, false),
                ("victim", &self.victim, false),
                ("target_group", &self.target_group, false),
            ],
            ScenarioKind::InsiderSecretRecovery => &[
                ("attacker", &self.attacker, true),
                ("victim", &self.victim, true),
                ("target_group", &self.target_group, false),
            ],
            ScenarioKind::GroupListForgery => &[
                ("attacker", &self.attacker, false),
                ("victim", &self.victim, true),
                ("target_group", &self.target_group, false),
            ],
            ScenarioKind::HashListForgery => &[
                ("attacker", &self.attacker, true),
                ("victim", &self.victim, true),
                ("target_group", &self.target_group, true),
            ],
        };
        for (name, value, needed) in required {
            match (needed, value.is_some()) {
                (true, false) => {
                    return Err(ScenarioError::Schema(format!(
                        "scenario \"{}\" requires the {name} field",
                        self.scenario.name()
                    )));
                }
                (false, true) => {
                    return Err(ScenarioError::Schema(format!(
                        "scenario \"{}\" does not take the {name} field",
                        self.scenario.name()
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Runs the scenario to completion. `Ok` means artifacts exist — the
    /// expectation verdict inside distinguishes pass from fail; `Err` means
    /// the scenario could not even produce a run.
    pub fn execute(&self, seed_override: Option<u64>) -> Result<ScenarioOutcome, ScenarioError> {
        let config = self.build_config(seed_override)?;
        let kind = self.scenario;
        let attack = |run: AttackRun| {
            let expectation_met = run.report.success;
            let detail = run
                .report
                .failure
                .clone()
                .unwrap_or_else(|| "attack succeeded".into());
            ScenarioOutcome {
                expectation_met,
                summary: format!(
                    "{}: expectation {} ({detail})",
                    kind.name(),
                    if expectation_met { "met" } else { "NOT met" }
                ),
                transcript_json: run.transcript.to_json(),
                report_json: run.report.to_json(),
            }
        };
        let schema = |m: String| ScenarioError::Schema(m);
        let from_attack = |r: Result<AttackRun, AttackError>| -> Result<ScenarioOutcome, ScenarioError> {
            match r {
                Ok(run) => Ok(attack(run)),
                Err(AttackError::PreconditionUnmet(m)) => Err(schema(m)),
                Err(AttackError::Session(SessionError::Aborted(f))) => Err(schema(format!(
                    "session aborted during {}: {}",
                    f.step, f.error
                ))),
                Err(AttackError::Session(e)) => Err(schema(e.to_string())),
            }
        };
        match kind {
            ScenarioKind::Honest => match run_honest(&config) {
                Ok(run) => {
                    let participants = config
                        .roster
                        .iter()
                        .filter(|c| config.groups.iter().any(|g| g.contains(&c.index)))
                        .count();
                    let success = run.outcomes.len() == participants
                        && run.outcomes.values().all(|o| o.all_accepted());
                    let report = HonestReport {
                        scenario: "honest",
                        success,
                        users: &run.outcomes,
                        failure: (!success).then(|| "not all keys were accepted".into()),
                        transcript_ref: run.transcript.digest(),
                    };
                    let mut report_json =
                        serde_json::to_string_pretty(&report).expect("report serializes");
                    report_json.push('\n');
                    Ok(ScenarioOutcome {
                        expectation_met: success,
                        summary: format!(
                            "honest: expectation {} ({} users, all accepted: {success})",
                            if success { "met" } else { "NOT met" },
                            run.outcomes.len()
                        ),
                        transcript_json: run.transcript.to_json(),
                        report_json,
                    })
                }
                Err(SessionError::Aborted(f)) => {
                    let report = HonestReport {
                        scenario: "honest",
                        success: false,
                        users: &BTreeMap::new(),
                        failure: Some(format!("session aborted during {}: {}", f.step, f.error)),
                        transcript_ref: f.transcript.digest(),
                    };
                    let mut report_json =
                        serde_json::to_string_pretty(&report).expect("report serializes");
                    report_json.push('\n');
                    Ok(ScenarioOutcome {
                        expectation_met: false,
                        summary: format!(
                            "honest: expectation NOT met (aborted during {}: {})",
                            f.step, f.error
                        ),
                        transcript_json: f.transcript.to_json(),
                        report_json,
                    })
                }
                Err(e) => Err(schema(e.to_string())),
            },
            ScenarioKind::Collision => from_attack(collision_scenario(&config)),
            ScenarioKind::InsiderSecretRecovery => from_attack(insider_secret_recovery(
                &config,
                self.attacker.unwrap(),
                self.victim.unwrap(),
            )),
            ScenarioKind::GroupListForgery => {
                from_attack(group_list_forgery_in(&config, self.victim.unwrap()))
            }
            ScenarioKind::HashListForgery => from_attack(hash_list_forgery(
                &config,
                self.attacker.unwrap(),
                self.victim.unwrap(),
                self.target_group.unwrap(),
            )),
        }
    }

    /// Checks a previously written transcript against this scenario:
    /// rebuilds the config, replays the transcript record by record, and
    /// fails on the first divergence.
    pub fn verify(
        &self,
        transcript_json: &str,
        seed_override: Option<u64>,
    ) -> Result<String, ScenarioError> {
        let config = self.build_config(seed_override)?;
        let transcript = Transcript::from_json(transcript_json)
            .map_err(|e| ScenarioError::Schema(format!("transcript unreadable: {e}")))?;
        match replay(&transcript, &config) {
            Ok(outcomes) => Ok(format!(
                "transcript verified: {} records, {} user outcomes reproduced",
                transcript.records.len(),
                outcomes.len()
            )),
            Err(ReplayError::TranscriptMismatch(m)) => Err(ScenarioError::Mismatch(m)),
            Err(ReplayError::InvalidConfig(m)) => Err(ScenarioError::Schema(m)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn honest_json() -> String {
        r#"{
            "prime": "p1019",
            "roster": [{"index": 1}, {"index": 2}, {"index": 3}, {"index": 4}],
            "groups": [[1, 2], [1, 3, 4]],
            "seed": 7,
            "scenario": "honest"
        }"#
        .to_string()
    }

    #[test]
    fn honest_scenario_runs_and_verifies() {
        let file = ScenarioFile::from_json(&honest_json()).unwrap();
        let outcome = file.execute(None).unwrap();
        assert!(outcome.expectation_met, "{}", outcome.summary);
        assert!(outcome.report_json.contains("\"scenario\": \"honest\""));
        let note = file.verify(&outcome.transcript_json, None).unwrap();
        assert!(note.contains("verified"), "{note}");
    }

    #[test]
    fn execution_is_byte_deterministic() {
        let file = ScenarioFile::from_json(&honest_json()).unwrap();
        let a = file.execute(None).unwrap();
        let b = file.execute(None).unwrap();
        assert_eq!(a.transcript_json, b.transcript_json);
        assert_eq!(a.report_json, b.report_json);
    }

    #[test]
    fn seed_override_changes_the_run() {
        let file = ScenarioFile::from_json(&honest_json()).unwrap();
        let a = file.execute(None).unwrap();
        let b = file.execute(Some(8)).unwrap();
        assert_ne!(a.transcript_json, b.transcript_json);
        // And the override must be used for verification too.
        assert!(file.verify(&b.transcript_json, Some(8)).is_ok());
        assert!(matches!(
            file.verify(&b.transcript_json, None),
            Err(ScenarioError::Mismatch(_))
        ));
    }

    #[test]
    fn tampered_transcript_fails_verification() {
        let file = ScenarioFile::from_json(&honest_json()).unwrap();
        let outcome = file.execute(None).unwrap();
        // Flip one hex digit inside some payload field.
        let pos = outcome.transcript_json.find("\"x\": \"").unwrap() + 6;
        let mut bytes = outcome.transcript_json.into_bytes();
        bytes[pos] = if bytes[pos] == b'0' { b'1' } else { b'0' };
        let doctored = String::from_utf8(bytes).unwrap();
        assert!(matches!(
            file.verify(&doctored, None),
            Err(ScenarioError::Mismatch(_))
        ));
    }

    #[test]
    fn unknown_keys_and_bad_primes_are_schema_errors() {
        let with_unknown = honest_json().replace("\"seed\": 7", "\"seed\": 7, \"oops\": 1");
        assert!(matches!(
            ScenarioFile::from_json(&with_unknown),
            Err(ScenarioError::Schema(_))
        ));

        // 29 is prime but 14 is not: not a safe prime.
        let bad_prime = honest_json().replace("\"p1019\"", "\"29\"");
        let file = ScenarioFile::from_json(&bad_prime).unwrap();
        assert!(matches!(file.execute(None), Err(ScenarioError::Schema(_))));

        let not_a_number = honest_json().replace("\"p1019\"", "\"pmax\"");
        let file = ScenarioFile::from_json(&not_a_number).unwrap();
        let err = file.execute(None).unwrap_err();
        assert!(err.to_string().contains("not a number"), "{err}");
    }

    #[test]
    fn decimal_and_hex_primes_parse() {
        for spec in ["1019", "0x3fb"] {
            let json = honest_json().replace("p1019", spec);
            let file = ScenarioFile::from_json(&json).unwrap();
            let config = file.build_config(None).unwrap();
            assert_eq!(config.params.modulus(), &BigUint::from(1019u32));
        }
    }

    #[test]
    fn roster_must_be_contiguous_from_one() {
        let gap = honest_json().replace("{\"index\": 2}, ", "");
        let file = ScenarioFile::from_json(&gap).unwrap();
        let err = file.execute(None).unwrap_err();
        assert!(err.to_string().contains("1..=3"), "{err}");
    }

    #[test]
    fn explicit_secrets_pin_only_their_slot() {
        let explicit = honest_json().replace(
            "{\"index\": 2}",
            "{\"index\": 2, \"secret\": \"00ff\"}",
        );
        let file = ScenarioFile::from_json(&explicit).unwrap();
        let config = file.build_config(None).unwrap();
        assert_eq!(config.roster[1].secret.hex(), "00ff");
        // Other slots keep exactly the secrets of the all-derived roster.
        let derived = ScenarioFile::from_json(&honest_json())
            .unwrap()
            .build_config(None)
            .unwrap();
        for i in [0, 2, 3] {
            assert_eq!(config.roster[i].secret, derived.roster[i].secret);
        }
        // Wrong-width secrets are schema errors.
        let bad = honest_json().replace(
            "{\"index\": 2}",
            "{\"index\": 2, \"secret\": \"ff\"}",
        );
        let file = ScenarioFile::from_json(&bad).unwrap();
        assert!(matches!(file.execute(None), Err(ScenarioError::Schema(_))));
    }

    #[test]
    fn role_fields_must_fit_the_scenario() {
        let stray = honest_json().replace("\"seed\": 7", "\"seed\": 7, \"attacker\": 1");
        let file = ScenarioFile::from_json(&stray).unwrap();
        let err = file.execute(None).unwrap_err();
        assert!(err.to_string().contains("does not take"), "{err}");

        let missing = honest_json().replace("\"honest\"", "\"insider-secret-recovery\"");
        let file = ScenarioFile::from_json(&missing).unwrap();
        let err = file.execute(None).unwrap_err();
        assert!(err.to_string().contains("requires"), "{err}");
    }

    #[test]
    fn collision_scenario_file_meets_expectation() {
        let json = r#"{
            "prime": "p1019",
            "roster": [{"index": 1}, {"index": 2}, {"index": 3}, {"index": 4}, {"index": 5}],
            "groups": [[1, 5], [1, 2, 3]],
            "seed": 3,
            "scenario": "collision"
        }"#;
        let file = ScenarioFile::from_json(json).unwrap();
        let outcome = file.execute(None).unwrap();
        assert!(outcome.expectation_met, "{}", outcome.summary);
        assert!(outcome.report_json.contains("\"colliding_tag\": \"0006\""));
        assert!(file.verify(&outcome.transcript_json, None).is_ok());
    }

    #[test]
    fn attack_scenario_files_meet_expectations() {
        let insider = r#"{
            "prime": "p256",
            "roster": [{"index": 1}, {"index": 2}, {"index": 3}, {"index": 4}],
            "groups": [[1, 2], [1, 2, 4]],
            "seed": 11,
            "scenario": "insider-secret-recovery",
            "attacker": 1,
            "victim": 2
        }"#;
        let forgery = r#"{
            "prime": "p1019",
            "roster": [{"index": 1}, {"index": 2}, {"index": 3}, {"index": 4}, {"index": 5}],
            "groups": [[1, 2, 3]],
            "seed": 12,
            "scenario": "group-list-forgery",
            "victim": 1
        }"#;
        let hashes = r#"{
            "prime": "p1019",
            "roster": [{"index": 1}, {"index": 2}, {"index": 3}],
            "groups": [[1, 2], [2, 3]],
            "seed": 13,
            "scenario": "hash-list-forgery",
            "attacker": 1,
            "victim": 2,
            "target_group": 1
        }"#;
        for json in [insider, forgery, hashes] {
            let file = ScenarioFile::from_json(json).unwrap();
            let outcome = file.execute(None).unwrap();
            assert!(outcome.expectation_met, "{}", outcome.summary);
            assert!(file.verify(&outcome.transcript_json, None).is_ok());
        }
    }

    #[test]
    fn honest_run_of_a_colliding_config_misses_expectation() {
        let json = r#"{
            "prime": "p1019",
            "roster": [{"index": 1}, {"index": 2}, {"index": 3}, {"index": 4}, {"index": 5}],
            "groups": [[1, 5], [1, 2, 3]],
            "seed": 3,
            "scenario": "honest"
        }"#;
        let file = ScenarioFile::from_json(json).unwrap();
        let outcome = file.execute(None).unwrap();
        assert!(!outcome.expectation_met);
        assert!(outcome.summary.contains("aborted"), "{}", outcome.summary);
        // The aborted transcript still verifies against the config.
        assert!(file.verify(&outcome.transcript_json, None).is_ok());
    }
}
