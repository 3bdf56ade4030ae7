//! Users, roles, bearer tokens and per-user provider credentials.
//!
//! Tokens are 256-bit random hex strings. Only their SHA-256 is stored.

use std::sync::Arc;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::store::{DocStore, StorageError};
use crate::util::{self, random_hex, sha256_hex};

const USERS: &str = "users";
const CREDENTIALS: &str = "credentials";

/// Ordered so that a higher role includes every lower one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    EndUser,
    Engineer,
    Administrator,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Administrator, Role::Engineer, Role::EndUser];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::EndUser => "end_user",
            Role::Engineer => "engineer",
            Role::Administrator => "administrator",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: String,
    pub username: String,
    pub role: Role,
    pub created_at: String,
}

impl User {
    pub fn is_admin(&self) -> bool {
        self.role == Role::Administrator
    }

    /// Owner-or-administrator rule used for jobs and functions.
    pub fn may_access(&self, owner: &str) -> bool {
        self.is_admin() || self.id == owner
    }
}

#[derive(Serialize, Deserialize)]
struct UserDoc {
    #[serde(flatten)]
    user: User,
    token_hash: String,
}

pub struct Users {
    store: Arc<DocStore>,
    by_token: DashMap<String, User>,
}

fn valid_username(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'.')
}

impl Users {
    pub fn load(store: Arc<DocStore>) -> Result<Self> {
        let by_token = DashMap::new();
        for doc in store.list(USERS)? {
            let d: UserDoc = serde_json::from_value(doc.body).map_err(StorageError::from)?;
            by_token.insert(d.token_hash, d.user);
        }
        Ok(Users { store, by_token })
    }

    pub fn is_empty(&self) -> bool {
        self.by_token.is_empty()
    }

    /// Creates a user. A caller-chosen token must be at least 16 characters;
    /// otherwise a fresh one is generated. Returns the user and its token.
    pub fn create(&self, username: &str, role: Role, token: Option<String>) -> Result<(User, String)> {
        if !valid_username(username) {
            return Err(Error::BadRequest(format!("invalid username `{username}`")));
        }
        if self.by_token.iter().any(|e| e.value().username == username) {
            return Err(Error::UserExists(username.to_owned()));
        }
        let token = match token {
            Some(t) if t.len() < 16 => {
                return Err(Error::BadRequest("token must be at least 16 characters".into()))
            }
            Some(t) => t,
            None => random_hex(32),
        };
        let hash = sha256_hex(token.as_bytes());
        if self.by_token.contains_key(&hash) {
            return Err(Error::BadRequest("token already in use".into()));
        }
        let user = User {
            id: format!("usr_{}", random_hex(8)),
            username: username.to_owned(),
            role,
            created_at: util::format_ts(&util::now_ms()),
        };
        self.persist(&user, &hash)?;
        self.by_token.insert(hash, user.clone());
        Ok((user, token))
    }

    fn persist(&self, user: &User, hash: &str) -> Result<()> {
        let doc = UserDoc {
            user: user.clone(),
            token_hash: hash.to_owned(),
        };
        self.store.put_typed(USERS, &user.id, &doc)?;
        Ok(())
    }

    pub fn authenticate(&self, token: &str) -> Result<User> {
        self.by_token
            .get(&sha256_hex(token.as_bytes()))
            .map(|u| u.clone())
            .ok_or(Error::InvalidToken)
    }

    /// Resolves a bearer token and checks the caller's role is at least `required`.
    pub fn dependency_check(&self, token: Option<&str>, required: Role) -> Result<User> {
        let user = self.authenticate(token.ok_or(Error::InvalidToken)?)?;
        if user.role < required {
            return Err(Error::forbidden(format!(
                "role {} may not perform this action (requires {})",
                user.role.as_str(),
                required.as_str()
            )));
        }
        Ok(user)
    }

    pub fn list(&self) -> Vec<User> {
        let mut v: Vec<User> = self.by_token.iter().map(|e| e.value().clone()).collect();
        v.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
        v
    }

    pub fn get(&self, id: &str) -> Result<User> {
        self.by_token
            .iter()
            .find(|e| e.value().id == id)
            .map(|e| e.value().clone())
            .ok_or_else(|| Error::UserNotFound(id.to_owned()))
    }

    fn entry_for(&self, id: &str) -> Result<(String, User)> {
        self.by_token
            .iter()
            .find(|e| e.value().id == id)
            .map(|e| (e.key().clone(), e.value().clone()))
            .ok_or_else(|| Error::UserNotFound(id.to_owned()))
    }

    pub fn set_role(&self, id: &str, role: Role) -> Result<User> {
        let (hash, mut user) = self.entry_for(id)?;
        user.role = role;
        self.persist(&user, &hash)?;
        self.by_token.insert(hash, user.clone());
        Ok(user)
    }

    /// Issues a new token for the user, invalidating the old one.
    pub fn rotate_token(&self, id: &str) -> Result<String> {
        let (old, user) = self.entry_for(id)?;
        let token = random_hex(32);
        let hash = sha256_hex(token.as_bytes());
        self.persist(&user, &hash)?;
        self.by_token.remove(&old);
        self.by_token.insert(hash, user);
        Ok(token)
    }

    pub fn delete(&self, id: &str) -> Result<()> {
        let (hash, _) = self.entry_for(id)?;
        self.store.delete(USERS, id)?;
        self.by_token.remove(&hash);
        Ok(())
    }
}

/// One stored provider credential.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Credential {
    pub user_id: String,
    pub provider: String,
    pub credential: String,
    pub registered_at: String,
}

impl Credential {
    /// View safe to return over the API: the secret is masked.
    pub fn masked(&self) -> serde_json::Value {
        let tail: String = self
            .credential
            .chars()
            .rev()
            .take(4)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        json!({
            "provider": self.provider,
            "credential": format!("****{tail}"),
            "registered_at": self.registered_at,
        })
    }
}

pub struct Credentials {
    store: Arc<DocStore>,
}

fn credential_id(user_id: &str, provider: &str) -> String {
    format!("{user_id}:{provider}")
}

impl Credentials {
    pub fn new(store: Arc<DocStore>) -> Self {
        Credentials { store }
    }

    pub fn register(&self, user: &User, provider: &str, credential: &str) -> Result<Credential> {
        if credential.is_empty() {
            return Err(Error::BadRequest("credential must be non-empty".into()));
        }
        let c = Credential {
            user_id: user.id.clone(),
            provider: provider.to_owned(),
            credential: credential.to_owned(),
            registered_at: util::format_ts(&util::now_ms()),
        };
        self.store.put_typed(CREDENTIALS, &credential_id(&user.id, provider), &c)?;
        Ok(c)
    }

    pub fn remove(&self, user: &User, provider: &str) -> Result<()> {
        self.store.delete(CREDENTIALS, &credential_id(&user.id, provider))?;
        Ok(())
    }

    /// The caller's token for `provider`, if registered.
    pub fn provider_token(&self, user: &User, provider: &str) -> Result<Option<String>> {
        match self
            .store
            .get_typed::<Credential>(CREDENTIALS, &credential_id(&user.id, provider))
        {
            Ok(c) => Ok(Some(c.credential)),
            Err(StorageError::NotFound { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn list_for(&self, user_id: &str) -> Result<Vec<Credential>> {
        let docs = self.store.query(CREDENTIALS, &[("user_id", json!(user_id))])?;
        docs.into_iter()
            .map(|d| serde_json::from_value(d.body).map_err(|e| StorageError::from(e).into()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn users() -> (tempfile::TempDir, Users) {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(DocStore::open(dir.path()).unwrap());
        (dir, Users::load(store).unwrap())
    }

    #[test]
    fn role_order_is_inclusive() {
        assert!(Role::Administrator > Role::Engineer && Role::Engineer > Role::EndUser);
        assert_eq!(Role::from_name("end_user"), Some(Role::EndUser));
    }

    #[test]
    fn dependency_check_outcomes() {
        let (_d, u) = users();
        let (_, eng) = u.create("eng", Role::Engineer, None).unwrap();
        let (_, end) = u.create("end", Role::EndUser, None).unwrap();
        assert!(u.dependency_check(Some(&eng), Role::Engineer).is_ok());
        assert!(matches!(
            u.dependency_check(Some(&end), Role::Engineer),
            Err(Error::PermissionError(_))
        ));
        assert!(matches!(u.dependency_check(Some("garbage"), Role::EndUser), Err(Error::InvalidToken)));
        assert!(matches!(u.dependency_check(None, Role::EndUser), Err(Error::InvalidToken)));
    }

    #[test]
    fn users_survive_reload_and_rotation() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(DocStore::open(dir.path()).unwrap());
        let u = Users::load(store.clone()).unwrap();
        let (user, tok) = u.create("alice", Role::Engineer, None).unwrap();
        assert!(matches!(u.create("alice", Role::EndUser, None), Err(Error::UserExists(_))));
        let reloaded = Users::load(store.clone()).unwrap();
        assert_eq!(reloaded.authenticate(&tok).unwrap(), user);
        let fresh = reloaded.rotate_token(&user.id).unwrap();
        assert!(reloaded.authenticate(&tok).is_err());
        assert_eq!(Users::load(store).unwrap().authenticate(&fresh).unwrap().id, user.id);
    }

    #[test]
    fn credentials_are_scoped_per_user() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(DocStore::open(dir.path()).unwrap());
        let u = Users::load(store.clone()).unwrap();
        let c = Credentials::new(store);
        let (a, _) = u.create("a", Role::Engineer, None).unwrap();
        let (b, _) = u.create("b", Role::Engineer, None).unwrap();
        c.register(&a, "ibmq", "secret-a").unwrap();
        assert_eq!(c.provider_token(&a, "ibmq").unwrap().as_deref(), Some("secret-a"));
        assert_eq!(c.provider_token(&b, "ibmq").unwrap(), None);
        assert_eq!(c.list_for(&a.id).unwrap().len(), 1);
        assert_eq!(c.list_for(&a.id).unwrap()[0].masked()["credential"], "****et-a");
        assert!(c.list_for(&b.id).unwrap().is_empty());
    }
}
