//! Backend factories selected by type name, and the JSON registry file.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::mock::{ChatScript, LastValue, LookupTabular, ScriptedChat, SeasonalNaive};
use super::remote::{OpenAiChat, RemoteBackend, DEFAULT_TIMEOUT};
use super::{Backend, BackendKind, Registry};
use crate::error::RegistryError;

/// One entry of a registry file. Type-specific settings sit beside the
/// common fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub backend_id: String,
    #[serde(rename = "type")]
    pub backend_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<BackendKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(flatten)]
    pub params: Map<String, Value>,
}

impl BackendSpec {
    pub fn new(backend_id: impl Into<String>, backend_type: impl Into<String>) -> Self {
        BackendSpec {
            backend_id: backend_id.into(),
            backend_type: backend_type.into(),
            kind: None,
            endpoint: None,
            params: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    fn param<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<Option<T>, String> {
        match self.params.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| format!("parameter `{key}`: {e}")),
        }
    }

    fn timeout(&self) -> Result<Duration, String> {
        Ok(self.param::<u64>("timeout_ms")?.map(Duration::from_millis).unwrap_or(DEFAULT_TIMEOUT))
    }
}

/// Registry-wide defaults consumed by the harness.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistryDefaults {
    /// Chat model used by single agents and MAS members.
    pub chat: Option<String>,
    /// Chat model that writes orchestration configs.
    pub planner: Option<String>,
    /// Control policy name (see the agent module's policy catalog).
    pub control_policy: Option<String>,
    /// Character budget for adapted backend responses.
    pub adapter_budget: Option<usize>,
    /// Chat models available to the planner; defaults to every chat model.
    pub llm_pool: Option<Vec<String>>,
    /// Foundation models available to the planner; defaults to all.
    pub fm_pool: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryFile {
    pub backends: Vec<BackendSpec>,
    #[serde(default)]
    pub defaults: RegistryDefaults,
}

impl RegistryFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RegistryError::File(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        serde_json::from_str(text).map_err(|e| RegistryError::File(e.to_string()))
    }
}

pub type BackendFactory = Box<dyn Fn(&BackendSpec) -> Result<Arc<dyn Backend>, String> + Send + Sync>;

/// Name -> factory table used to build registries from files.
pub struct BackendCatalog {
    factories: BTreeMap<String, BackendFactory>,
}

impl Default for BackendCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl BackendCatalog {
    pub fn empty() -> Self {
        BackendCatalog {
            factories: BTreeMap::new(),
        }
    }

    /// `scripted-chat`, `last-value`, `seasonal-naive`, `lookup-tabular`,
    /// `remote`, `openai-chat`.
    pub fn builtin() -> Self {
        let mut c = Self::empty();
        c.register("scripted-chat", |s| {
            let cycle = s.param::<bool>("cycle")?.unwrap_or(false);
            let mut scripts = s.param::<Vec<ChatScript>>("scripts")?.unwrap_or_default();
            if let Some(replies) = s.param::<Vec<String>>("replies")? {
                scripts.push(ChatScript { trigger: None, replies });
            }
            if scripts.is_empty() {
                return Err("needs `replies` or `scripts`".into());
            }
            Ok(Arc::new(ScriptedChat::with_scripts(&s.backend_id, scripts, cycle)))
        });
        c.register("last-value", |s| Ok(Arc::new(LastValue::new(&s.backend_id))));
        c.register("seasonal-naive", |s| {
            let period = s.param::<usize>("period")?.unwrap_or(2);
            if period == 0 {
                return Err("`period` must be >= 1".into());
            }
            Ok(Arc::new(SeasonalNaive::new(&s.backend_id, period)))
        });
        c.register("lookup-tabular", |s| Ok(Arc::new(LookupTabular::new(&s.backend_id))));
        c.register("remote", |s| {
            let kind = s.kind.ok_or("remote backend needs `kind`")?;
            let endpoint = s.endpoint.clone().ok_or("remote backend needs `endpoint`")?;
            let remote_id = s.param::<String>("remote_id")?;
            Ok(Arc::new(RemoteBackend::new(&s.backend_id, kind, endpoint, remote_id, s.timeout()?)))
        });
        c.register("openai-chat", |s| {
            let model = s.param::<String>("model")?.unwrap_or_else(|| s.backend_id.clone());
            let timeout = s.timeout()?;
            match &s.endpoint {
                Some(base) => {
                    let key = std::env::var(super::remote::LLM_API_KEY_VAR).ok().filter(|k| !k.is_empty());
                    Ok(Arc::new(OpenAiChat::new(&s.backend_id, model, base.clone(), key, timeout)))
                }
                None => Ok(Arc::new(OpenAiChat::from_env(&s.backend_id, model, timeout)?)),
            }
        });
        c
    }

    pub fn register<F>(&mut self, type_name: &str, factory: F)
    where
        F: Fn(&BackendSpec) -> Result<Arc<dyn Backend>, String> + Send + Sync + 'static,
    {
        self.factories.insert(type_name.to_string(), Box::new(factory));
    }

    pub fn type_names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, spec: &BackendSpec) -> Result<Arc<dyn Backend>, RegistryError> {
        let factory = self
            .factories
            .get(&spec.backend_type)
            .ok_or_else(|| RegistryError::UnknownType(spec.backend_type.clone()))?;
        let backend = factory(spec).map_err(|reason| RegistryError::Invalid {
            id: spec.backend_id.clone(),
            reason,
        })?;
        if let Some(kind) = spec.kind {
            if backend.descriptor().kind != kind {
                return Err(RegistryError::Invalid {
                    id: spec.backend_id.clone(),
                    reason: format!("type `{}` builds a {}, not a {kind}", spec.backend_type, backend.descriptor().kind),
                });
            }
        }
        Ok(backend)
    }

    /// Builds a fresh registry; stateful backends start from scratch.
    pub fn build(&self, specs: &[BackendSpec]) -> Result<Registry, RegistryError> {
        specs
            .iter()
            .try_fold(Registry::builder(), |b, spec| Ok(b.register_arc(self.create(spec)?)))?
            .build()
    }
}
