//! Participant profiles and account linking.
//!
//! Linking is a two-step handshake: [`Accounts::begin_link`] issues a
//! short-lived single-use token, and [`Accounts::confirm_link`] redeems it
//! together with the participant's password. Once linked, sessions skip the
//! User ID confirmation question.
//!
//! Every profile mutation is appended to the event store as `USER_PARAM_SET`
//! on the stream `user:<id>`, and [`Accounts::load`] rebuilds all profiles
//! from those events. Link tokens are held in memory only, so a restart drops
//! pending handshakes back to `UNLINKED`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use chrono_tz::Tz;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::parsers::ML_PER_CUP;
use crate::store::{EventKind, EventStore, ExportFilter, StoreError};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LinkStatus {
    Unlinked,
    Pending,
    Linked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GoalMode {
    /// Drink at least the goal.
    Goal,
    /// Stay at or under the limit.
    Limit,
}

impl std::str::FromStr for GoalMode {
    type Err = AccountError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GOAL" => Ok(GoalMode::Goal),
            "LIMIT" => Ok(GoalMode::Limit),
            other => Err(AccountError::InvalidGoalMode(other.to_string())),
        }
    }
}

/// 8 cups a day.
pub fn default_goal_ml() -> u32 {
    (8.0 * ML_PER_CUP).round() as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    /// Participant ID.
    pub user_id: String,
    pub display_name: String,
    pub link_status: LinkStatus,
    #[serde(skip_serializing)]
    #[serde(default)]
    pub secret_hash: String,
    /// IANA zone name.
    pub timezone: String,
    pub fluid_goal_ml: u32,
    pub goal_mode: GoalMode,
    pub schedule_ref: String,
}

impl UserProfile {
    pub fn tz(&self) -> Tz {
        self.timezone.parse().unwrap_or(Tz::UTC)
    }

    pub fn is_linked(&self) -> bool {
        self.link_status == LinkStatus::Linked
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkToken {
    pub token: String,
    pub user_id: String,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserParam {
    pub user_id: String,
    pub key: String,
    pub value: Value,
    pub set_at: Timestamp,
}

#[derive(Debug, Error)]
pub enum AccountError {
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("user `{0}` already exists")]
    AlreadyEnrolled(String),
    #[error("user `{0}` already has a link in progress")]
    AlreadyPending(String),
    #[error("user `{0}` is already linked")]
    AlreadyLinked(String),
    #[error("link token is not valid")]
    BadToken,
    #[error("link token has expired")]
    ExpiredToken,
    #[error("wrong password ({remaining} attempts left)")]
    WrongPassword { remaining: u32 },
    #[error("too many wrong passwords; linking was cancelled")]
    TooManyAttempts,
    #[error("fluid goal must be positive")]
    NonPositiveGoal,
    #[error("unknown goal mode `{0}`")]
    InvalidGoalMode(String),
    #[error("unknown timezone `{0}`")]
    InvalidTimezone(String),
    #[error("invalid user id `{0}`")]
    InvalidUserId(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone)]
pub struct AccountsConfig {
    pub link_token_ttl_ms: i64,
    pub max_password_attempts: u32,
    pub default_schedule_ref: String,
}

impl Default for AccountsConfig {
    fn default() -> Self {
        AccountsConfig {
            link_token_ttl_ms: 10 * 60 * 1000,
            max_password_attempts: 5,
            default_schedule_ref: "default".to_string(),
        }
    }
}

struct UserRecord {
    profile: UserProfile,
    failed_attempts: u32,
    api_token_hashes: Vec<String>,
}

pub fn user_stream(user_id: &str) -> String {
    format!("user:{user_id}")
}

fn digest_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn hash_password(salt: &str, password: &str) -> String {
    format!("sha256${salt}${}", digest_hex(&[salt.as_bytes(), password.as_bytes()]))
}

fn verify_password(secret_hash: &str, password: &str) -> bool {
    let mut parts = secret_hash.splitn(3, '$');
    match (parts.next(), parts.next(), parts.next()) {
        (Some("sha256"), Some(salt), Some(_)) => hash_password(salt, password) == secret_hash,
        _ => false,
    }
}

pub struct Accounts {
    store: Arc<EventStore>,
    config: AccountsConfig,
    users: BTreeMap<String, UserRecord>,
    tokens: HashMap<String, LinkToken>,
    rng: ChaCha20Rng,
}

impl Accounts {
    /// Rebuilds every profile from the store's `USER_PARAM_SET` events.
    pub fn load(store: Arc<EventStore>, config: AccountsConfig) -> Result<Self, AccountError> {
        Self::load_with_rng(store, config, ChaCha20Rng::from_entropy())
    }

    /// As [`Accounts::load`], with salts and tokens drawn from a seeded generator.
    pub fn load_seeded(store: Arc<EventStore>, config: AccountsConfig, seed: u64) -> Result<Self, AccountError> {
        Self::load_with_rng(store, config, ChaCha20Rng::seed_from_u64(seed))
    }

    fn load_with_rng(store: Arc<EventStore>, config: AccountsConfig, rng: ChaCha20Rng) -> Result<Self, AccountError> {
        let mut accounts = Accounts { store, config, users: BTreeMap::new(), tokens: HashMap::new(), rng };
        let params = accounts.store.scan(&ExportFilter::all().kind(EventKind::UserParamSet))?;
        for record in params {
            if let Ok(param) = serde_json::from_value::<UserParam>(record.payload.clone()) {
                accounts.apply(&param);
            }
        }
        for rec in accounts.users.values_mut() {
            if rec.profile.link_status == LinkStatus::Pending {
                rec.profile.link_status = LinkStatus::Unlinked;
            }
        }
        Ok(accounts)
    }

    fn apply(&mut self, p: &UserParam) {
        if p.key == "enrollment" {
            if let Ok(profile) = serde_json::from_value::<StoredProfile>(p.value.clone()) {
                self.users.insert(
                    p.user_id.clone(),
                    UserRecord { profile: profile.into_profile(&p.user_id), failed_attempts: 0, api_token_hashes: Vec::new() },
                );
            }
            return;
        }
        let Some(rec) = self.users.get_mut(&p.user_id) else {
            return;
        };
        match p.key.as_str() {
            "fluid_goal" => {
                if let (Some(ml), Some(mode)) = (
                    p.value.get("goal_ml").and_then(Value::as_u64),
                    p.value.get("mode").and_then(|m| serde_json::from_value::<GoalMode>(m.clone()).ok()),
                ) {
                    rec.profile.fluid_goal_ml = ml as u32;
                    rec.profile.goal_mode = mode;
                }
            }
            "link_status" => {
                if let Ok(status) = serde_json::from_value::<LinkStatus>(p.value.clone()) {
                    rec.profile.link_status = status;
                }
            }
            "timezone" => {
                if let Some(tz) = p.value.as_str() {
                    rec.profile.timezone = tz.to_string();
                }
            }
            "schedule_ref" => {
                if let Some(s) = p.value.as_str() {
                    rec.profile.schedule_ref = s.to_string();
                }
            }
            "api_token" => {
                if let Some(h) = p.value.as_str() {
                    rec.api_token_hashes.push(h.to_string());
                }
            }
            _ => {}
        }
    }

    fn record_param(&mut self, user_id: &str, key: &str, value: Value, now: Timestamp) -> Result<(), AccountError> {
        let param = UserParam { user_id: user_id.to_string(), key: key.to_string(), value, set_at: now };
        self.store.append(&user_stream(user_id), EventKind::UserParamSet, serde_json::to_value(&param).map_err(StoreError::from)?, now)?;
        self.apply(&param);
        Ok(())
    }

    pub fn config(&self) -> &AccountsConfig {
        &self.config
    }

    pub fn get(&self, user_id: &str) -> Option<&UserProfile> {
        self.users.get(user_id).map(|r| &r.profile)
    }

    pub fn require(&self, user_id: &str) -> Result<&UserProfile, AccountError> {
        self.get(user_id).ok_or_else(|| AccountError::UnknownUser(user_id.to_string()))
    }

    pub fn profiles(&self) -> impl Iterator<Item = &UserProfile> {
        self.users.values().map(|r| &r.profile)
    }

    /// Registers a participant with the default goal (8 cups/day, GOAL mode).
    pub fn enroll(
        &mut self,
        user_id: &str,
        display_name: &str,
        password: &str,
        timezone: &str,
        now: Timestamp,
    ) -> Result<UserProfile, AccountError> {
        if user_id.is_empty() || !user_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(AccountError::InvalidUserId(user_id.to_string()));
        }
        if self.users.contains_key(user_id) {
            return Err(AccountError::AlreadyEnrolled(user_id.to_string()));
        }
        timezone.parse::<Tz>().map_err(|_| AccountError::InvalidTimezone(timezone.to_string()))?;
        let mut salt = [0u8; 16];
        self.rng.fill_bytes(&mut salt);
        let stored = StoredProfile {
            display_name: display_name.to_string(),
            secret_hash: hash_password(&hex::encode(salt), password),
            timezone: timezone.to_string(),
            fluid_goal_ml: default_goal_ml(),
            goal_mode: GoalMode::Goal,
            schedule_ref: self.config.default_schedule_ref.clone(),
        };
        self.record_param(user_id, "enrollment", serde_json::to_value(&stored).map_err(StoreError::from)?, now)?;
        Ok(self.users[user_id].profile.clone())
    }

    /// Starts linking: `UNLINKED -> PENDING` and a token valid for the configured TTL.
    pub fn begin_link(&mut self, user_id: &str, now: Timestamp) -> Result<LinkToken, AccountError> {
        let status = self.require(user_id)?.link_status;
        match status {
            LinkStatus::Linked => return Err(AccountError::AlreadyLinked(user_id.to_string())),
            LinkStatus::Pending => {
                let live = self.tokens.values().any(|t| t.user_id == user_id && t.expires_at > now);
                if live {
                    return Err(AccountError::AlreadyPending(user_id.to_string()));
                }
                self.tokens.retain(|_, t| t.user_id != user_id);
            }
            LinkStatus::Unlinked => {}
        }
        let mut raw = [0u8; 24];
        self.rng.fill_bytes(&mut raw);
        let token = LinkToken {
            token: hex::encode(raw),
            user_id: user_id.to_string(),
            issued_at: now,
            expires_at: now + self.config.link_token_ttl_ms,
        };
        self.tokens.insert(token.token.clone(), token.clone());
        if let Some(rec) = self.users.get_mut(user_id) {
            rec.failed_attempts = 0;
        }
        if status != LinkStatus::Pending {
            self.record_param(user_id, "link_status", json!(LinkStatus::Pending), now)?;
        }
        Ok(token)
    }

    /// Redeems a link token with the participant's password.
    /// User a live link token was issued to.
    pub fn link_token_owner(&self, token: &str) -> Option<&str> {
        self.tokens.get(token).map(|t| t.user_id.as_str())
    }

    pub fn confirm_link(&mut self, token: &str, password: &str, now: Timestamp) -> Result<UserProfile, AccountError> {
        let link = self.tokens.get(token).cloned().ok_or(AccountError::BadToken)?;
        let user_id = link.user_id.clone();
        if now >= link.expires_at {
            self.tokens.remove(token);
            self.record_param(&user_id, "link_status", json!(LinkStatus::Unlinked), now)?;
            return Err(AccountError::ExpiredToken);
        }
        let rec = self.users.get_mut(&user_id).ok_or_else(|| AccountError::UnknownUser(user_id.clone()))?;
        if !verify_password(&rec.profile.secret_hash, password) {
            rec.failed_attempts += 1;
            let max = self.config.max_password_attempts;
            if rec.failed_attempts >= max {
                rec.failed_attempts = 0;
                self.tokens.remove(token);
                self.record_param(&user_id, "link_status", json!(LinkStatus::Unlinked), now)?;
                return Err(AccountError::TooManyAttempts);
            }
            return Err(AccountError::WrongPassword { remaining: max - rec.failed_attempts });
        }
        rec.failed_attempts = 0;
        self.tokens.remove(token);
        self.record_param(&user_id, "link_status", json!(LinkStatus::Linked), now)?;
        Ok(self.users[&user_id].profile.clone())
    }

    pub fn set_goal(&mut self, user_id: &str, goal_ml: i64, mode: GoalMode, now: Timestamp) -> Result<UserProfile, AccountError> {
        self.require(user_id)?;
        if goal_ml <= 0 || goal_ml > i64::from(u32::MAX) {
            return Err(AccountError::NonPositiveGoal);
        }
        self.record_param(user_id, "fluid_goal", json!({ "goal_ml": goal_ml, "mode": mode }), now)?;
        Ok(self.users[user_id].profile.clone())
    }

    pub fn set_timezone(&mut self, user_id: &str, timezone: &str, now: Timestamp) -> Result<UserProfile, AccountError> {
        self.require(user_id)?;
        timezone.parse::<Tz>().map_err(|_| AccountError::InvalidTimezone(timezone.to_string()))?;
        self.record_param(user_id, "timezone", json!(timezone), now)?;
        Ok(self.users[user_id].profile.clone())
    }

    /// Issues a bearer token for the gateway. Only its digest is stored.
    pub fn issue_api_token(&mut self, user_id: &str, now: Timestamp) -> Result<String, AccountError> {
        self.require(user_id)?;
        let mut raw = [0u8; 24];
        self.rng.fill_bytes(&mut raw);
        let token = hex::encode(raw);
        let digest = digest_hex(&[token.as_bytes()]);
        self.record_param(user_id, "api_token", json!(digest), now)?;
        Ok(token)
    }

    /// The user an API token belongs to.
    pub fn authenticate(&self, token: &str) -> Option<&str> {
        let digest = digest_hex(&[token.as_bytes()]);
        self.users
            .iter()
            .find(|(_, r)| r.api_token_hashes.contains(&digest))
            .map(|(id, _)| id.as_str())
    }

    /// Goal history of a user as recorded in the log, oldest first.
    pub fn goal_history(&self, user_id: &str) -> Result<Vec<(Timestamp, u32, GoalMode)>, AccountError> {
        let records = self.store.read_stream(&user_stream(user_id), 1)?;
        let mut out = Vec::new();
        for r in records {
            let Ok(p) = serde_json::from_value::<UserParam>(r.payload) else { continue };
            match p.key.as_str() {
                "enrollment" => {
                    if let Ok(s) = serde_json::from_value::<StoredProfile>(p.value) {
                        out.push((p.set_at, s.fluid_goal_ml, s.goal_mode));
                    }
                }
                "fluid_goal" => {
                    let ml = p.value.get("goal_ml").and_then(Value::as_u64).unwrap_or(0) as u32;
                    let mode = p.value.get("mode").and_then(|m| serde_json::from_value(m.clone()).ok()).unwrap_or(GoalMode::Goal);
                    out.push((p.set_at, ml, mode));
                }
                _ => {}
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredProfile {
    display_name: String,
    secret_hash: String,
    timezone: String,
    fluid_goal_ml: u32,
    goal_mode: GoalMode,
    schedule_ref: String,
}

impl StoredProfile {
    fn into_profile(self, user_id: &str) -> UserProfile {
        UserProfile {
            user_id: user_id.to_string(),
            display_name: self.display_name,
            link_status: LinkStatus::Unlinked,
            secret_hash: self.secret_hash,
            timezone: self.timezone,
            fluid_goal_ml: self.fluid_goal_ml,
            goal_mode: self.goal_mode,
            schedule_ref: self.schedule_ref,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOW: Timestamp = Timestamp(1_529_300_000_000);

    fn setup() -> Accounts {
        let mut a = Accounts::load_seeded(Arc::new(EventStore::in_memory()), AccountsConfig::default(), 7).unwrap();
        a.enroll("P01", "Pat", "hunter2", "America/New_York", NOW).unwrap();
        a
    }

    #[test]
    fn enrollment_defaults_to_eight_cups() {
        let a = setup();
        let p = a.get("P01").unwrap();
        assert_eq!(p.fluid_goal_ml, 1893);
        assert_eq!(p.goal_mode, GoalMode::Goal);
        assert_eq!(p.link_status, LinkStatus::Unlinked);
    }

    #[test]
    fn begin_link_transitions() {
        let mut a = setup();
        a.begin_link("P01", NOW).unwrap();
        assert_eq!(a.get("P01").unwrap().link_status, LinkStatus::Pending);
        assert!(matches!(a.begin_link("P01", NOW), Err(AccountError::AlreadyPending(_))));
        assert!(matches!(a.begin_link("nobody", NOW), Err(AccountError::UnknownUser(_))));
    }

    #[test]
    fn confirm_link_happy_path_and_single_use() {
        let mut a = setup();
        let tok = a.begin_link("P01", NOW).unwrap();
        let p = a.confirm_link(&tok.token, "hunter2", NOW + 1000).unwrap();
        assert_eq!(p.link_status, LinkStatus::Linked);
        assert!(matches!(a.confirm_link(&tok.token, "hunter2", NOW + 2000), Err(AccountError::BadToken)));
        assert!(matches!(a.begin_link("P01", NOW), Err(AccountError::AlreadyLinked(_))));
    }

    #[test]
    fn wrong_password_keeps_pending_then_reverts() {
        let mut a = setup();
        let tok = a.begin_link("P01", NOW).unwrap();
        for remaining in (1..5).rev() {
            match a.confirm_link(&tok.token, "nope", NOW) {
                Err(AccountError::WrongPassword { remaining: r }) => assert_eq!(r, remaining),
                other => panic!("{other:?}"),
            }
            assert_eq!(a.get("P01").unwrap().link_status, LinkStatus::Pending);
        }
        assert!(matches!(a.confirm_link(&tok.token, "nope", NOW), Err(AccountError::TooManyAttempts)));
        assert_eq!(a.get("P01").unwrap().link_status, LinkStatus::Unlinked);
        assert!(matches!(a.confirm_link(&tok.token, "hunter2", NOW), Err(AccountError::BadToken)));
    }

    #[test]
    fn expired_token_never_links() {
        let mut a = setup();
        let tok = a.begin_link("P01", NOW).unwrap();
        let late = tok.expires_at;
        assert!(matches!(a.confirm_link(&tok.token, "hunter2", late), Err(AccountError::ExpiredToken)));
        assert_eq!(a.get("P01").unwrap().link_status, LinkStatus::Unlinked);
    }

    #[test]
    fn goals() {
        let mut a = setup();
        assert_eq!(a.set_goal("P01", 1893, GoalMode::Goal, NOW).unwrap().fluid_goal_ml, 1893);
        let p = a.set_goal("P01", 1000, GoalMode::Limit, NOW + 1).unwrap();
        assert_eq!((p.fluid_goal_ml, p.goal_mode), (1000, GoalMode::Limit));
        assert!(matches!(a.set_goal("P01", 0, GoalMode::Goal, NOW), Err(AccountError::NonPositiveGoal)));
        assert!(matches!(a.set_goal("P09", 5, GoalMode::Goal, NOW), Err(AccountError::UnknownUser(_))));
    }

    #[test]
    fn profiles_rebuild_from_log() {
        let store = Arc::new(EventStore::in_memory());
        let mut a = Accounts::load_seeded(store.clone(), AccountsConfig::default(), 1).unwrap();
        a.enroll("P01", "Pat", "pw", "Europe/Berlin", NOW).unwrap();
        a.set_goal("P01", 1200, GoalMode::Limit, NOW + 1).unwrap();
        let tok = a.begin_link("P01", NOW + 2).unwrap();
        a.confirm_link(&tok.token, "pw", NOW + 3).unwrap();
        let api = a.issue_api_token("P01", NOW + 4).unwrap();

        let b = Accounts::load(store, AccountsConfig::default()).unwrap();
        assert_eq!(b.get("P01"), a.get("P01"));
        assert_eq!(b.authenticate(&api), Some("P01"));
        assert_eq!(b.authenticate("bogus"), None);
        let history = b.goal_history("P01").unwrap();
        assert_eq!(history.last().map(|h| (h.1, h.2)), Some((1200, GoalMode::Limit)));
        assert_eq!(history.len(), 2);
    }

    #[test]
    fn enroll_validation() {
        let mut a = setup();
        assert!(matches!(a.enroll("P01", "x", "y", "UTC", NOW), Err(AccountError::AlreadyEnrolled(_))));
        assert!(matches!(a.enroll("P02", "x", "y", "Mars/Base", NOW), Err(AccountError::InvalidTimezone(_))));
        assert!(matches!(a.enroll("bad id", "x", "y", "UTC", NOW), Err(AccountError::InvalidUserId(_))));
    }
}
