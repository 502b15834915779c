//! Application configuration: a TOML file with sections for templates,
//! backends, oracle thresholds, and validation rules. A mock backend is
//! always synthesized even when the file names none, so every subcommand
//! works offline out of the box. Cloud credentials are referenced by
//! environment-variable name only; the secret never sits in the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use fincomm_core::llm_gateway::{BackendConfig, BackendKind, FaultProfile, MockMode};
use fincomm_core::trend_oracle::OracleConfig;
use fincomm_core::validator::RuleConfig;
use serde::Deserialize;

#[derive(Debug)]
pub struct AppConfig {
    pub template_dir: PathBuf,
    pub runlog_path: PathBuf,
    pub alias_file: Option<PathBuf>,
    pub oracle: OracleConfig,
    pub rules: RuleConfig,
    pub backends: BTreeMap<String, BackendConfig>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    templates: Option<TemplatesSection>,
    runlog: Option<RunlogSection>,
    aliases: Option<AliasSection>,
    oracle: Option<OracleSection>,
    rules: Option<RulesSection>,
    #[serde(default)]
    backends: BTreeMap<String, BackendSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplatesSection {
    dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunlogSection {
    path: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AliasSection {
    file: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleSection {
    major_threshold_pct: Option<f64>,
    flat_epsilon: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesSection {
    max_sentences: Option<usize>,
    forbid_numerals: Option<bool>,
    require_grounded_product_lines: Option<bool>,
    require_grounded_regions: Option<bool>,
    unique_product_line: Option<bool>,
    polarity_logic: Option<bool>,
    faithfulness_min: Option<f64>,
    coverage_top_k: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackendSection {
    kind: String,
    endpoint: Option<String>,
    model: Option<String>,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    timeout_secs: Option<u64>,
    retries: Option<u32>,
    backoff_ms: Option<u64>,
    api_key_env: Option<String>,
    mock_mode: Option<String>,
    fixture_dir: Option<PathBuf>,
    faults: Option<FaultSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultSection {
    drop_top_driver: Option<f64>,
    inject_ungrounded_entity: Option<f64>,
    inject_numeral: Option<f64>,
    repeat_product_line: Option<f64>,
    contradict_direction: Option<f64>,
    emit_code_block: Option<f64>,
    seed: Option<u64>,
}

impl AppConfig {
    /// Built-in defaults: templates under ./templates, run log at
    /// ./runs.jsonl, one mock backend.
    pub fn defaults() -> AppConfig {
        let mut backends = BTreeMap::new();
        backends.insert("mock".to_string(), BackendConfig::mock());
        AppConfig {
            template_dir: PathBuf::from("templates"),
            runlog_path: PathBuf::from("runs.jsonl"),
            alias_file: None,
            oracle: OracleConfig::default(),
            rules: RuleConfig::default(),
            backends,
        }
    }

    /// Load configuration, merging the file (when given) over the defaults.
    /// Referenced paths must exist; the mock backend is synthesized when the
    /// file omits it.
    pub fn load(path: Option<&Path>) -> Result<AppConfig, String> {
        let mut config = AppConfig::defaults();
        let Some(path) = path else {
            return Ok(config);
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let file: FileConfig =
            toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;

        if let Some(t) = file.templates {
            config.template_dir = t.dir;
        }
        if let Some(r) = file.runlog {
            config.runlog_path = r.path;
        }
        if let Some(a) = file.aliases {
            config.alias_file = Some(a.file);
        }
        if let Some(o) = file.oracle {
            if let Some(v) = o.major_threshold_pct {
                config.oracle.major_threshold_pct = v;
            }
            if let Some(v) = o.flat_epsilon {
                config.oracle.flat_epsilon = v;
            }
        }
        if let Some(r) = file.rules {
            let d = &mut config.rules;
            if let Some(v) = r.max_sentences {
                d.max_sentences = v;
            }
            if let Some(v) = r.forbid_numerals {
                d.forbid_numerals = v;
            }
            if let Some(v) = r.require_grounded_product_lines {
                d.require_grounded_product_lines = v;
            }
            if let Some(v) = r.require_grounded_regions {
                d.require_grounded_regions = v;
            }
            if let Some(v) = r.unique_product_line {
                d.unique_product_line = v;
            }
            if let Some(v) = r.polarity_logic {
                d.polarity_logic = v;
            }
            if let Some(v) = r.faithfulness_min {
                d.faithfulness_min = v;
            }
            if let Some(v) = r.coverage_top_k {
                d.coverage_top_k = v;
            }
        }
        for (name, section) in file.backends {
            let backend = section_to_backend(&name, section)?;
            config.backends.insert(name, backend);
        }
        config
            .backends
            .entry("mock".to_string())
            .or_insert_with(BackendConfig::mock);

        if config.oracle.major_threshold_pct < 0.0 {
            return Err("oracle.major_threshold_pct must be non-negative".into());
        }
        if config.oracle.flat_epsilon < 0.0 {
            return Err("oracle.flat_epsilon must be non-negative".into());
        }
        if config.rules.max_sentences < 1 {
            return Err("rules.max_sentences must be at least 1".into());
        }
        if !config.template_dir.is_dir() {
            return Err(format!(
                "template directory does not exist: {}",
                config.template_dir.display()
            ));
        }
        if let Some(alias) = &config.alias_file {
            if !alias.is_file() {
                return Err(format!("alias file does not exist: {}", alias.display()));
            }
        }
        Ok(config)
    }
}

fn section_to_backend(name: &str, s: BackendSection) -> Result<BackendConfig, String> {
    let kind = match s.kind.as_str() {
        "cloud" => BackendKind::Cloud,
        "local" => BackendKind::Local,
        "mock" => BackendKind::Mock,
        other => return Err(format!("backend {name}: unknown kind {other:?}")),
    };
    let mut backend = BackendConfig::mock();
    backend.kind = kind;
    backend.endpoint = s.endpoint;
    if let Some(m) = s.model {
        backend.model = m;
    }
    if let Some(t) = s.temperature {
        backend.temperature = t;
    }
    if let Some(m) = s.max_tokens {
        backend.max_tokens = m;
    }
    if let Some(t) = s.timeout_secs {
        backend.timeout = Duration::from_secs(t);
    }
    if let Some(r) = s.retries {
        backend.retries = r;
    }
    if let Some(b) = s.backoff_ms {
        backend.backoff_ms = b;
    }
    if let Some(e) = s.api_key_env {
        backend.api_key_env = e;
    }
    if let Some(mode) = s.mock_mode {
        backend.mock_mode = match mode.as_str() {
            "replay" => MockMode::Replay,
            "oracle" => MockMode::Oracle,
            other => return Err(format!("backend {name}: unknown mock_mode {other:?}")),
        };
    }
    backend.fixture_dir = s.fixture_dir;
    if let Some(f) = s.faults {
        let mut profile = FaultProfile::default();
        if let Some(v) = f.drop_top_driver {
            profile.drop_top_driver = v;
        }
        if let Some(v) = f.inject_ungrounded_entity {
            profile.inject_ungrounded_entity = v;
        }
        if let Some(v) = f.inject_numeral {
            profile.inject_numeral = v;
        }
        if let Some(v) = f.repeat_product_line {
            profile.repeat_product_line = v;
        }
        if let Some(v) = f.contradict_direction {
            profile.contradict_direction = v;
        }
        if let Some(v) = f.emit_code_block {
            profile.emit_code_block = v;
        }
        if let Some(v) = f.seed {
            profile.seed = v;
        }
        backend.fault_profile = Some(profile);
    }
    backend
        .validate()
        .map_err(|e| format!("backend {name}: {e}"))?;
    Ok(backend)
}
