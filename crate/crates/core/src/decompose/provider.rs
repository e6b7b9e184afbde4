use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Credential variable read by [`HttpProvider::from_env`].
pub const API_KEY_VAR: &str = "TEAMPLAN_API_KEY";

/// One language-model call. Mock and replay providers answer by
/// `(scenario, role, turn)` only; the prompt matters to live providers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LmRequest {
    pub scenario: String,
    /// Stage tag: `precondition`, `allocation`, `problem/<subtask>/<robot>`
    /// or `replan/<subtask>/<robot>`.
    pub role: String,
    pub turn: u32,
    pub system: String,
    pub prompt: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("no fixture for scenario {scenario:?}, role {role:?}, turn {turn}")]
    MissingFixture { scenario: String, role: String, turn: u32 },
    #[error("cannot read fixtures: {0}")]
    Fixtures(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("missing credential: set {0}")]
    MissingCredential(&'static str),
}

pub trait LmProvider: Send + Sync {
    fn request(&self, req: &LmRequest) -> Result<String, ProviderError>;
}

/// scenario → role → turn → response text.
pub type FixtureMap = BTreeMap<String, BTreeMap<String, BTreeMap<String, String>>>;

/// Deterministic provider backed by a fixture map.
///
/// ```toml
/// [egg_apple.precondition]
/// 0 = """
/// Subtask 1: ...
/// """
/// ```
#[derive(Clone, Debug, Default)]
pub struct FixtureProvider {
    map: FixtureMap,
}

impl FixtureProvider {
    pub fn new(map: FixtureMap) -> Self {
        FixtureProvider { map }
    }

    pub fn from_toml(text: &str) -> Result<Self, ProviderError> {
        toml::from_str(text).map(FixtureProvider::new).map_err(|e| ProviderError::Fixtures(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Fixtures(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Loads a single file, or every `*.toml` file of a directory merged
    /// in file-name order.
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        if !path.is_dir() {
            return Self::from_path(path);
        }
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| ProviderError::Fixtures(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        files.sort();
        let mut merged = FixtureProvider::default();
        for f in files {
            merged.merge(Self::from_path(&f)?);
        }
        Ok(merged)
    }

    pub fn merge(&mut self, other: FixtureProvider) {
        for (scenario, roles) in other.map {
            let slot = self.map.entry(scenario).or_default();
            for (role, turns) in roles {
                slot.entry(role).or_default().extend(turns);
            }
        }
    }

    pub fn has_scenario(&self, scenario: &str) -> bool {
        self.map.contains_key(scenario)
    }

    pub fn map(&self) -> &FixtureMap {
        &self.map
    }
}

impl LmProvider for FixtureProvider {
    fn request(&self, req: &LmRequest) -> Result<String, ProviderError> {
        self.map
            .get(&req.scenario)
            .and_then(|roles| roles.get(&req.role))
            .and_then(|turns| turns.get(&req.turn.to_string()))
            .cloned()
            .ok_or_else(|| ProviderError::MissingFixture {
                scenario: req.scenario.clone(),
                role: req.role.clone(),
                turn: req.turn,
            })
    }
}

/// Replays a transcript written by [`Recorder`]. Transcripts share the
/// fixture format, so this is a fixture provider under another name.
pub type ReplayProvider = FixtureProvider;

/// OpenAI-style chat-completions client.
pub struct HttpProvider {
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f32,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: String,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build();
        HttpProvider { endpoint: endpoint.into(), model: model.into(), api_key: api_key.into(), agent }
    }

    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self, ProviderError> {
        let key = std::env::var(API_KEY_VAR).map_err(|_| ProviderError::MissingCredential(API_KEY_VAR))?;
        Ok(Self::new(endpoint, model, key))
    }
}

impl LmProvider for HttpProvider {
    fn request(&self, req: &LmRequest) -> Result<String, ProviderError> {
        let body = ChatRequest {
            model: &self.model,
            temperature: 0.0,
            messages: vec![
                ChatMessage { role: "system", content: &req.system },
                ChatMessage { role: "user", content: &req.prompt },
            ],
        };
        let resp: ChatResponse = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| ProviderError::Transport(e.to_string()))?
            .into_json()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Transport("empty choices".into()))
    }
}

/// Wraps a provider and keeps every answered request for later replay.
pub struct Recorder<'a> {
    inner: &'a dyn LmProvider,
    log: Mutex<FixtureMap>,
}

impl<'a> Recorder<'a> {
    pub fn new(inner: &'a dyn LmProvider) -> Self {
        Recorder { inner, log: Mutex::new(FixtureMap::new()) }
    }

    pub fn transcript(&self) -> FixtureMap {
        self.log.lock().expect("recorder lock").clone()
    }

    /// Transcript in fixture format, loadable by [`ReplayProvider`].
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.transcript()).expect("string maps serialize")
    }
}

impl LmProvider for Recorder<'_> {
    fn request(&self, req: &LmRequest) -> Result<String, ProviderError> {
        let out = self.inner.request(req)?;
        self.log
            .lock()
            .expect("recorder lock")
            .entry(req.scenario.clone())
            .or_default()
            .entry(req.role.clone())
            .or_default()
            .insert(req.turn.to_string(), out.clone());
        Ok(out)
    }
}
