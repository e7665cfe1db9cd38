//! The group key distribution scheme: a key generation center (KGC) and n
//! users exchanging typed messages.
//!
//! One session, honest path:
//! 1. the KGC broadcasts the group list; each group carries a tag equal to
//!    the sum of its member indices mod p;
//! 2. every participating user sends one fresh random challenge per group it
//!    belongs to, retaining private copies;
//! 3. the KGC draws one key per group plus a public offset r0, and for each
//!    user interpolates a polynomial through (i, x_i + r0) and, per group,
//!    (tag, key + h(x_i + challenge + r0)); the user receives m_i freshly
//!    sampled points on that polynomial, never the defining points;
//! 4. each user adds its own point (i, x_i + r0), re-interpolates, evaluates
//!    at each group tag, strips the hash blinding, and accepts a key iff its
//!    hash matches the public bulletin.
//!
//! Nothing here is authenticated; that is the scheme's defining weakness and
//! the attack modules exploit it as-is.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use rand::RngCore;
use serde::Serialize;
use thiserror::Error;

use crate::field::{FieldElement, FieldParams};
use crate::poly::{Point, PolyError, Polynomial};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("a group must have at least one member")]
    EmptyGroup,
    #[error("group {group_id} lists member {member} twice")]
    DuplicateMember { group_id: u64, member: u64 },
    #[error("group {group_id} references user {member} who is not in the roster")]
    UnknownMember { group_id: u64, member: u64 },
    #[error("user {user} belongs to no announced group")]
    NotParticipating { user: u64 },
    #[error("no challenge message received from participating user {user}")]
    MissingChallenge { user: u64 },
    #[error("challenge message attributed to user {user} is inconsistent with their group memberships")]
    MalformedChallenges { user: u64 },
    #[error("user {user}: defining abscissa {} collides for groups {groups:?}", tag.value())]
    DuplicateGroupTag {
        user: u64,
        tag: FieldElement,
        groups: Vec<u64>,
    },
    #[error("bundle for user {user} has {got} points, expected {expected}")]
    WrongBundleSize { user: u64, expected: usize, got: usize },
    #[error("bulletin is missing the key hash for group {group_id}")]
    MissingKeyHash { group_id: u64 },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Sum of member indices mod p — the only group identifier the scheme binds
/// into its polynomials, and the root cause of its collision failures.
pub fn compute_group_tag(members: &[u64], params: &FieldParams) -> Result<FieldElement, ProtocolError> {
    if members.is_empty() {
        return Err(ProtocolError::EmptyGroup);
    }
    let sum: BigUint = members.iter().map(|&m| BigUint::from(m)).sum();
    Ok(params.element(sum))
}

/// A user's long-term identity: public index i and secret x_i shared with
/// the KGC.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserCredential {
    pub index: u64,
    pub secret: FieldElement,
}

/// An announced group: id, sorted member indices, and the tag S(G).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupDescriptor {
    group_id: u64,
    members: Vec<u64>,
    tag: FieldElement,
}

impl GroupDescriptor {
    pub fn new(group_id: u64, members: &[u64], params: &FieldParams) -> Result<Self, ProtocolError> {
        let mut members = members.to_vec();
        members.sort_unstable();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(ProtocolError::DuplicateMember {
                group_id,
                member: w[0],
            });
        }
        let tag = compute_group_tag(&members, params)?;
        Ok(GroupDescriptor {
            group_id,
            members,
            tag,
        })
    }

    pub fn group_id(&self) -> u64 {
        self.group_id
    }

    pub fn members(&self) -> &[u64] {
        &self.members
    }

    pub fn contains(&self, user: u64) -> bool {
        self.members.binary_search(&user).is_ok()
    }

    pub fn tag(&self) -> &FieldElement {
        &self.tag
    }
}

/// Step-2 broadcast: the full group list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupListBroadcast {
    pub groups: Vec<GroupDescriptor>,
}

impl GroupListBroadcast {
    pub fn new(groups: Vec<GroupDescriptor>) -> Self {
        let mut ids = BTreeSet::new();
        for g in &groups {
            assert!(ids.insert(g.group_id), "duplicate group id {}", g.group_id);
        }
        GroupListBroadcast { groups }
    }
}

/// Step-3 message: one fresh random challenge per group the sender is in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChallengeMessage {
    pub sender_index: u64,
    pub challenges: BTreeMap<u64, FieldElement>,
}

/// Step-4 unicast: the sampled points for one user, in delivery order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointBundle {
    pub recipient_index: u64,
    pub points: Vec<Point>,
}

/// Step-4 broadcast: the public offset r0 and one key hash per group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicBulletin {
    pub r0: FieldElement,
    pub key_hashes: BTreeMap<u64, FieldElement>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Rejected,
}

/// One user's step-5 result: what it recovered and whether each key's hash
/// matched the bulletin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SessionOutcome {
    pub recovered_keys: BTreeMap<u64, FieldElement>,
    pub verification: BTreeMap<u64, Verdict>,
}

impl SessionOutcome {
    pub fn all_accepted(&self) -> bool {
        self.verification.values().all(|v| *v == Verdict::Accepted)
    }
}

/// Everything the KGC produced in step 4. `keys` and `r0` are the KGC's
/// private ground truth; the harness uses them to judge attacks and honest
/// runs, they are never placed on the wire except as blinded polynomial
/// values and hashes.
#[derive(Clone, Debug)]
pub struct SessionArtifacts {
    pub bundles: BTreeMap<u64, PointBundle>,
    pub bulletin: PublicBulletin,
    pub keys: BTreeMap<u64, FieldElement>,
    pub r0: FieldElement,
}

/// The key generation center: knows every user's long-term secret and the
/// group list.
#[derive(Clone, Debug)]
pub struct Kgc {
    params: FieldParams,
    roster: BTreeMap<u64, FieldElement>,
    groups: Vec<GroupDescriptor>,
}

impl Kgc {
    /// Validates the roster (indices exactly 1..=n, n below p) and builds
    /// group descriptors with ids 1..=m in list order.
    pub fn new(
        params: FieldParams,
        roster: &[UserCredential],
        group_members: &[Vec<u64>],
    ) -> Result<Self, ProtocolError> {
        let n = roster.len() as u64;
        assert!(n > 0, "roster must be nonempty");
        assert!(
            BigUint::from(n) < *params.modulus(),
            "roster size must be below the modulus"
        );
        let mut map = BTreeMap::new();
        for cred in roster {
            assert!(
                cred.index >= 1 && cred.index <= n,
                "roster indices must be exactly 1..=n"
            );
            assert!(
                cred.secret.params() == &params,
                "credential secret from a different field"
            );
            assert!(
                map.insert(cred.index, cred.secret.clone()).is_none(),
                "duplicate roster index {}",
                cred.index
            );
        }
        let mut groups = Vec::with_capacity(group_members.len());
        for (pos, members) in group_members.iter().enumerate() {
            let group_id = pos as u64 + 1;
            let g = GroupDescriptor::new(group_id, members, &params)?;
            for &member in g.members() {
                if !map.contains_key(&member) {
                    return Err(ProtocolError::UnknownMember { group_id, member });
                }
            }
            groups.push(g);
        }
        Ok(Kgc {
            params,
            roster: map,
            groups,
        })
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn roster_indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.roster.keys().copied()
    }

    pub fn groups(&self) -> &[GroupDescriptor] {
        &self.groups
    }

    fn groups_of(&self, user: u64) -> Vec<&GroupDescriptor> {
        self.groups.iter().filter(|g| g.contains(user)).collect()
    }

    /// Indices of users that belong to at least one group, ascending.
    pub fn participants(&self) -> Vec<u64> {
        self.roster
            .keys()
            .copied()
            .filter(|&u| self.groups.iter().any(|g| g.contains(u)))
            .collect()
    }

    /// Step 2: broadcast the group list.
    pub fn announce(&self) -> GroupListBroadcast {
        GroupListBroadcast::new(self.groups.clone())
    }

    /// Step 4. Draws group keys (ascending group id) and r0, then per
    /// participating user (ascending index) interpolates the delivery
    /// polynomial and samples its bundle. That fixed draw order makes the
    /// whole step a pure function of the challenge set and the RNG stream.
    pub fn build_session(
        &self,
        challenges: &BTreeMap<u64, ChallengeMessage>,
        rng: &mut impl RngCore,
    ) -> Result<SessionArtifacts, ProtocolError> {
        let mut keys = BTreeMap::new();
        for g in &self.groups {
            keys.insert(g.group_id, self.params.random_element(rng));
        }
        let r0 = self.params.random_element(rng);

        let mut bundles = BTreeMap::new();
        for user in self.participants() {
            let msg = challenges
                .get(&user)
                .ok_or(ProtocolError::MissingChallenge { user })?;
            let user_groups = self.groups_of(user);
            let expected_ids: BTreeSet<u64> = user_groups.iter().map(|g| g.group_id).collect();
            let got_ids: BTreeSet<u64> = msg.challenges.keys().copied().collect();
            if msg.sender_index != user || expected_ids != got_ids {
                return Err(ProtocolError::MalformedChallenges { user });
            }

            let secret = &self.roster[&user];
            let own_x = self.params.element_from_u64(user);
            let own_y = secret + &r0;

            // Defining abscissae must be pairwise distinct before Lagrange
            // sees them; a clash is the scheme's tag-collision failure and is
            // reported with the groups responsible.
            let mut owners: BTreeMap<BigUint, Vec<Option<u64>>> = BTreeMap::new();
            owners.entry(own_x.value().clone()).or_default().push(None);
            for g in &user_groups {
                owners
                    .entry(g.tag().value().clone())
                    .or_default()
                    .push(Some(g.group_id));
            }
            for (value, who) in &owners {
                if who.len() > 1 {
                    return Err(ProtocolError::DuplicateGroupTag {
                        user,
                        tag: self.params.element(value.clone()),
                        groups: who.iter().filter_map(|w| *w).collect(),
                    });
                }
            }

            let mut defining = vec![Point::new(own_x.clone(), own_y)];
            for g in &user_groups {
                let r = &msg.challenges[&g.group_id];
                let blind = (&(secret + r) + &r0).hash_to_field();
                defining.push(Point::new(g.tag().clone(), &keys[&g.group_id] + &blind));
            }
            let f = Polynomial::interpolate(&defining).expect("defining abscissae are distinct");
            let excluded: Vec<FieldElement> =
                defining.iter().map(|p| p.x.clone()).collect();
            let points = f.sample_points(user_groups.len(), &excluded, rng)?;
            bundles.insert(
                user,
                PointBundle {
                    recipient_index: user,
                    points,
                },
            );
        }

        let bulletin = PublicBulletin {
            r0: r0.clone(),
            key_hashes: keys
                .iter()
                .map(|(&gid, k)| (gid, k.hash_to_field()))
                .collect(),
        };
        Ok(SessionArtifacts {
            bundles,
            bulletin,
            keys,
            r0,
        })
    }
}

/// A user's view of one session: its groups per the (possibly forged)
/// broadcast it received, and the private challenge copies from step 3.
#[derive(Clone, Debug)]
pub struct UserSession {
    cred: UserCredential,
    groups: Vec<GroupDescriptor>,
    retained: BTreeMap<u64, FieldElement>,
}

impl UserSession {
    /// Step 3: join the announced session and produce the challenge message.
    /// Challenges are drawn per group in ascending group-id order.
    pub fn begin(
        cred: UserCredential,
        broadcast: &GroupListBroadcast,
        rng: &mut impl RngCore,
    ) -> Result<(UserSession, ChallengeMessage), ProtocolError> {
        let params = cred.secret.params().clone();
        let mut groups: Vec<GroupDescriptor> = broadcast
            .groups
            .iter()
            .filter(|g| g.contains(cred.index))
            .cloned()
            .collect();
        if groups.is_empty() {
            return Err(ProtocolError::NotParticipating { user: cred.index });
        }
        groups.sort_by_key(|g| g.group_id());
        let retained: BTreeMap<u64, FieldElement> = groups
            .iter()
            .map(|g| (g.group_id(), params.random_element(rng)))
            .collect();
        let message = ChallengeMessage {
            sender_index: cred.index,
            challenges: retained.clone(),
        };
        Ok((
            UserSession {
                cred,
                groups,
                retained,
            },
            message,
        ))
    }

    pub fn index(&self) -> u64 {
        self.cred.index
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Step 5: interpolate through the delivered points plus the private
    /// point (i, x_i + r0), evaluate at every group tag, strip the blinding,
    /// and check each key hash against the bulletin.
    pub fn recover(
        &self,
        bundle: &PointBundle,
        bulletin: &PublicBulletin,
    ) -> Result<SessionOutcome, ProtocolError> {
        let expected = self.groups.len();
        if bundle.points.len() != expected {
            return Err(ProtocolError::WrongBundleSize {
                user: self.cred.index,
                expected,
                got: bundle.points.len(),
            });
        }
        let params = self.cred.secret.params();
        let own_x = params.element_from_u64(self.cred.index);
        let own_y = &self.cred.secret + &bulletin.r0;
        let mut points = bundle.points.clone();
        points.push(Point::new(own_x, own_y));
        let f = Polynomial::interpolate(&points)?;

        let mut recovered_keys = BTreeMap::new();
        let mut verification = BTreeMap::new();
        for g in &self.groups {
            let published = bulletin
                .key_hashes
                .get(&g.group_id())
                .ok_or(ProtocolError::MissingKeyHash {
                    group_id: g.group_id(),
                })?;
            let blind = (&(&self.cred.secret + &self.retained[&g.group_id()]) + &bulletin.r0)
                .hash_to_field();
            let key = &f.evaluate(g.tag()) - &blind;
            let verdict = if key.hash_to_field() == *published {
                Verdict::Accepted
            } else {
                Verdict::Rejected
            };
            recovered_keys.insert(g.group_id(), key);
            verification.insert(g.group_id(), verdict);
        }
        Ok(SessionOutcome {
            recovered_keys,
            verification,
        })
    }
}
