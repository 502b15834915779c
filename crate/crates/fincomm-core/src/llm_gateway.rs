//! Uniform chat-completion access to three backend kinds.
//!
//! Cloud and local runtimes speak their usual HTTP chat protocols; the mock
//! backend is a pure function of the request and its seed, so every workflow
//! runs identically online and offline. The mock's oracle mode reads the
//! delta table embedded in the prompt, reproduces the deterministic baseline
//! summary, and can inject six classes of realistic faults with configured
//! probabilities.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::claims::segment_sentences;
use crate::ledger::{compute_contributions, DeltaTable};
use crate::trend_oracle::{analyze, baseline_summary, OracleConfig};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol error {status}: {body_excerpt}")]
    Protocol { status: u16, body_excerpt: String },
    #[error("request timed out")]
    Timeout,
    #[error("no credential in environment variable {0}")]
    AuthMissing(String),
    #[error("no replay fixture for digest {0}")]
    FixtureMissing(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Cloud,
    Local,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockMode {
    Replay,
    Oracle,
}

/// The six fault classes the mock can inject, in application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultClass {
    DropTopDriver,
    InjectUngroundedEntity,
    InjectNumeral,
    RepeatProductLine,
    ContradictDirection,
    EmitCodeBlock,
}

impl FaultClass {
    pub const ALL: [FaultClass; 6] = [
        FaultClass::DropTopDriver,
        FaultClass::InjectUngroundedEntity,
        FaultClass::InjectNumeral,
        FaultClass::RepeatProductLine,
        FaultClass::ContradictDirection,
        FaultClass::EmitCodeBlock,
    ];
}

/// Per-call fault probabilities and the seed for the mock's generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultProfile {
    pub drop_top_driver: f64,
    pub inject_ungrounded_entity: f64,
    pub inject_numeral: f64,
    pub repeat_product_line: f64,
    pub contradict_direction: f64,
    pub emit_code_block: f64,
    pub seed: u64,
}

impl Default for FaultProfile {
    fn default() -> Self {
        FaultProfile {
            drop_top_driver: 0.0,
            inject_ungrounded_entity: 0.0,
            inject_numeral: 0.0,
            repeat_product_line: 0.0,
            contradict_direction: 0.0,
            emit_code_block: 0.0,
            seed: 0,
        }
    }
}

impl FaultProfile {
    pub fn clean(seed: u64) -> Self {
        FaultProfile {
            seed,
            ..FaultProfile::default()
        }
    }

    /// A profile firing exactly one class with the given probability.
    pub fn single(class: FaultClass, probability: f64, seed: u64) -> Self {
        let mut p = FaultProfile::clean(seed);
        *p.slot_mut(class) = probability;
        p
    }

    fn slot_mut(&mut self, class: FaultClass) -> &mut f64 {
        match class {
            FaultClass::DropTopDriver => &mut self.drop_top_driver,
            FaultClass::InjectUngroundedEntity => &mut self.inject_ungrounded_entity,
            FaultClass::InjectNumeral => &mut self.inject_numeral,
            FaultClass::RepeatProductLine => &mut self.repeat_product_line,
            FaultClass::ContradictDirection => &mut self.contradict_direction,
            FaultClass::EmitCodeBlock => &mut self.emit_code_block,
        }
    }

    pub fn probability(&self, class: FaultClass) -> f64 {
        match class {
            FaultClass::DropTopDriver => self.drop_top_driver,
            FaultClass::InjectUngroundedEntity => self.inject_ungrounded_entity,
            FaultClass::InjectNumeral => self.inject_numeral,
            FaultClass::RepeatProductLine => self.repeat_product_line,
            FaultClass::ContradictDirection => self.contradict_direction,
            FaultClass::EmitCodeBlock => self.emit_code_block,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        for class in FaultClass::ALL {
            let p = self.probability(class);
            if !(0.0..=1.0).contains(&p) {
                return Err(GatewayError::InvalidConfig(format!(
                    "fault probability for {class:?} out of [0,1]: {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Backend selection and transport parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL; required for cloud and local kinds.
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    pub retries: u32,
    /// Delay before the first retry; doubles per attempt.
    pub backoff_ms: u64,
    /// Name of the environment variable holding the cloud credential. The
    /// credential itself never appears in config files.
    pub api_key_env: String,
    pub mock_mode: MockMode,
    pub fixture_dir: Option<PathBuf>,
    pub fault_profile: Option<FaultProfile>,
}

mod duration_ms {
    use super::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model: "mock-oracle".into(),
            temperature: 0.0,
            max_tokens: 512,
            timeout: Duration::from_secs(30),
            retries: 0,
            backoff_ms: 250,
            api_key_env: "FINCOMM_API_KEY".into(),
            mock_mode: MockMode::Oracle,
            fixture_dir: None,
            fault_profile: None,
        }
    }

    pub fn cloud(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Cloud,
            endpoint: Some(endpoint.into()),
            model: model.into(),
            ..BackendConfig::mock()
        }
    }

    pub fn local(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Local,
            endpoint: Some(endpoint.into()),
            model: model.into(),
            ..BackendConfig::mock()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.kind != BackendKind::Mock && self.endpoint.is_none() {
            return Err(GatewayError::InvalidConfig(
                "endpoint required for non-mock backends".into(),
            ));
        }
        if self.retries > 5 {
            return Err(GatewayError::InvalidConfig(format!(
                "retries must be at most 5, got {}",
                self.retries
            )));
        }
        if self.temperature < 0.0 {
            return Err(GatewayError::InvalidConfig(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        if let Some(profile) = &self.fault_profile {
            profile.validate()?;
        }
        Ok(())
    }
}

/// One assistant response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub content: String,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    pub backend: String,
    pub model: String,
    /// Hex SHA-256 of the canonical request body.
    pub request_digest: String,
}

// Field order within these structs is the canonical (sorted) key order, so
// serialized bodies are byte-stable across runs and replay fixtures stay
// valid.
#[derive(Serialize)]
struct WireMessage<'a> {
    content: &'a str,
    role: &'a str,
}

#[derive(Serialize)]
struct CloudBody<'a> {
    max_tokens: u32,
    messages: Vec<WireMessage<'a>>,
    model: &'a str,
    temperature: f64,
}

#[derive(Serialize)]
struct LocalOptions {
    temperature: f64,
}

#[derive(Serialize)]
struct LocalBody<'a> {
    messages: Vec<WireMessage<'a>>,
    model: &'a str,
    options: LocalOptions,
    stream: bool,
}

fn wire_messages<'a>(messages: &'a [ChatMessage]) -> Vec<WireMessage<'a>> {
    messages
        .iter()
        .map(|m| WireMessage {
            content: &m.content,
            role: m.role.as_str(),
        })
        .collect()
}

/// Canonical cloud-protocol body: sorted keys, no insignificant whitespace.
pub fn cloud_body(cfg: &BackendConfig, messages: &[ChatMessage]) -> String {
    serde_json::to_string(&CloudBody {
        max_tokens: cfg.max_tokens,
        messages: wire_messages(messages),
        model: &cfg.model,
        temperature: cfg.temperature,
    })
    .expect("body serializes")
}

/// Canonical local-protocol body; streaming is always off.
pub fn local_body(cfg: &BackendConfig, messages: &[ChatMessage]) -> String {
    serde_json::to_string(&LocalBody {
        messages: wire_messages(messages),
        model: &cfg.model,
        options: LocalOptions {
            temperature: cfg.temperature,
        },
        stream: false,
    })
    .expect("body serializes")
}

/// Hex SHA-256 of a canonical request body.
pub fn request_digest(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), GatewayError> {
    let Some(first) = messages.first() else {
        return Err(GatewayError::InvalidRequest("messages must be non-empty".into()));
    };
    if first.role == Role::Assistant {
        return Err(GatewayError::InvalidRequest(
            "first message must be a system or user message".into(),
        ));
    }
    for m in messages {
        if matches!(m.role, Role::System | Role::User) && m.content.is_empty() {
            return Err(GatewayError::InvalidRequest(format!(
                "{} message content must be non-empty",
                m.role.as_str()
            )));
        }
    }
    Ok(())
}

/// Issue one chat completion against the configured backend.
///
/// Transient transport failures (and 5xx responses) are retried with
/// exponential backoff up to `cfg.retries`; 4xx protocol errors never retry.
pub fn complete(cfg: &BackendConfig, messages: &[ChatMessage]) -> Result<Completion, GatewayError> {
    cfg.validate()?;
    check_messages(messages)?;
    match cfg.kind {
        BackendKind::Mock => mock::mock_complete(cfg, messages),
        BackendKind::Cloud | BackendKind::Local => http_complete(cfg, messages),
    }
}

fn retryable(err: &GatewayError) -> bool {
    match err {
        GatewayError::Transport(_) | GatewayError::Timeout => true,
        GatewayError::Protocol { status, .. } => *status >= 500,
        _ => false,
    }
}

fn http_complete(cfg: &BackendConfig, messages: &[ChatMessage]) -> Result<Completion, GatewayError> {
    let endpoint = cfg.endpoint.as_deref().expect("validated");
    let endpoint = endpoint.trim_end_matches('/');
    let (url, body, auth) = match cfg.kind {
        BackendKind::Cloud => {
            let key = std::env::var(&cfg.api_key_env)
                .map_err(|_| GatewayError::AuthMissing(cfg.api_key_env.clone()))?;
            (
                format!("{endpoint}/v1/chat/completions"),
                cloud_body(cfg, messages),
                Some(format!("Bearer {key}")),
            )
        }
        BackendKind::Local => (
            format!("{endpoint}/api/chat"),
            local_body(cfg, messages),
            None,
        ),
        BackendKind::Mock => unreachable!(),
    };
    let digest = request_digest(&body);

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .http_status_as_error(false)
        .build()
        .into();

    let started = Instant::now();
    let mut attempt = 0u32;
    loop {
        match send_once(&agent, &url, &body, auth.as_deref(), cfg.kind) {
            Ok(content) => {
                return Ok(Completion {
                    content,
                    latency: started.elapsed(),
                    backend: match cfg.kind {
                        BackendKind::Cloud => "cloud".into(),
                        BackendKind::Local => "local".into(),
                        BackendKind::Mock => unreachable!(),
                    },
                    model: cfg.model.clone(),
                    request_digest: digest,
                });
            }
            Err(err) if retryable(&err) && attempt < cfg.retries => {
                let delay = cfg.backoff_ms.saturating_mul(1u64 << attempt.min(16));
                std::thread::sleep(Duration::from_millis(delay));
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

fn send_once(
    agent: &ureq::Agent,
    url: &str,
    body: &str,
    auth: Option<&str>,
    kind: BackendKind,
) -> Result<String, GatewayError> {
    let mut request = agent
        .post(url)
        .header("Content-Type", "application/json");
    if let Some(auth) = auth {
        request = request.header("Authorization", auth);
    }
    let mut response = request.send(body).map_err(map_ureq_error)?;
    let status = response.status().as_u16();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(map_ureq_error)?;
    if !(200..300).contains(&status) {
        return Err(GatewayError::Protocol {
            status,
            body_excerpt: excerpt(&text),
        });
    }
    parse_response(&text, kind).ok_or_else(|| GatewayError::Protocol {
        status,
        body_excerpt: format!("unexpected response shape: {}", excerpt(&text)),
    })
}

fn excerpt(text: &str) -> String {
    text.chars().take(200).collect()
}

fn map_ureq_error(err: ureq::Error) -> GatewayError {
    match err {
        ureq::Error::Timeout(_) => GatewayError::Timeout,
        other => GatewayError::Transport(other.to_string()),
    }
}

/// Cloud: `choices[0].message.content`. Local: `message.content`.
fn parse_response(text: &str, kind: BackendKind) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(text).ok()?;
    let content = match kind {
        BackendKind::Cloud => value.get("choices")?.get(0)?.get("message")?.get("content")?,
        BackendKind::Local => value.get("message")?.get("content")?,
        BackendKind::Mock => return None,
    };
    content.as_str().map(str::to_string)
}

pub mod mock {
    //! The deterministic offline backend.
    //!
    //! Oracle mode reads the delta table embedded in the prompt and answers
    //! with the trend oracle's baseline summary; prompts without a table but
    //! with an "Input from previous step:" marker echo the prior stage's
    //! output, which is what makes chained fault propagation observable.
    //! Replay mode returns stored fixtures keyed by request digest.

    use super::*;

    /// Sentence the entity-injection fault appends; the product line is
    /// absent from any real table.
    pub const UNGROUNDED_SENTENCE: &str = "Phantom Accessories up in all regions.";
    /// Sentence the numeral-injection fault appends.
    pub const NUMERAL_SENTENCE: &str = "Overall movement of 12 percent in the period.";
    /// Script the code-block fault substitutes for the whole summary,
    /// mimicking a model that answers with code instead of prose.
    pub const CODE_BLOCK: &str = "import pandas as pd\n\
        df = pd.read_csv(\"order_intake.csv\")\n\
        totals = df.groupby([\"product_line\", \"region\"]).sum()\n\
        print(totals)";
    /// Marker our chained templates place immediately before injected prior
    /// output.
    pub const PRIOR_OUTPUT_MARKER: &str = "Input from previous step:";

    const FALLBACK: &str = "No structured data provided.";
    const MAX_SENTENCES: usize = 4;

    #[derive(Debug, Serialize, Deserialize)]
    struct Fixture {
        digest: String,
        response: String,
    }

    /// Store a replay fixture for a request digest.
    pub fn write_fixture(
        dir: &std::path::Path,
        digest: &str,
        response: &str,
    ) -> std::io::Result<()> {
        let fixture = Fixture {
            digest: digest.to_string(),
            response: response.to_string(),
        };
        std::fs::write(
            dir.join(format!("{digest}.json")),
            serde_json::to_string_pretty(&fixture).expect("fixture serializes"),
        )
    }

    pub fn mock_complete(
        cfg: &BackendConfig,
        messages: &[ChatMessage],
    ) -> Result<Completion, GatewayError> {
        let body = cloud_body(cfg, messages);
        let digest = request_digest(&body);
        let content = match cfg.mock_mode {
            MockMode::Replay => {
                let dir = cfg.fixture_dir.as_deref().ok_or_else(|| {
                    GatewayError::InvalidConfig("replay mode requires fixture_dir".into())
                })?;
                let path = dir.join(format!("{digest}.json"));
                let text = std::fs::read_to_string(path)
                    .map_err(|_| GatewayError::FixtureMissing(digest.clone()))?;
                let fixture: Fixture = serde_json::from_str(&text)
                    .map_err(|_| GatewayError::FixtureMissing(digest.clone()))?;
                fixture.response
            }
            MockMode::Oracle => {
                let base = oracle_content(messages);
                match &cfg.fault_profile {
                    Some(profile) => apply_faults(&base, profile, &digest),
                    None => base,
                }
            }
        };
        Ok(Completion {
            content,
            latency: Duration::ZERO,
            backend: "mock".into(),
            model: cfg.model.clone(),
            request_digest: digest,
        })
    }

    fn oracle_content(messages: &[ChatMessage]) -> String {
        let joined: Vec<&str> = messages.iter().map(|m| m.content.as_str()).collect();
        let joined = joined.join("\n\n");
        if let Some(rows) = scan_table(&joined) {
            let table = compute_contributions(DeltaTable::from_deltas(rows, "period_a", "period_b"));
            let analysis = analyze(&table, &OracleConfig::default());
            return baseline_summary(&analysis, MAX_SENTENCES);
        }
        if let Some(prior) = extract_prior_output(&joined) {
            return prior;
        }
        FALLBACK.to_string()
    }

    /// Find a rendered delta table (markdown or aligned-text) in prompt text.
    /// The header line may carry an inline prefix such as "Data: ", the way
    /// the shipped templates inject the block.
    pub fn scan_table(text: &str) -> Option<Vec<(String, String, f64)>> {
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            let Some(style) = header_style(line) else {
                continue;
            };
            let mut rows = Vec::new();
            for data_line in &lines[i + 1..] {
                match parse_table_row(data_line, style) {
                    Some(row) => rows.push(row),
                    None => break,
                }
            }
            if !rows.is_empty() {
                return Some(rows);
            }
        }
        None
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Style {
        Markdown,
        Aligned,
    }

    const HEADER_CELLS: [&str; 4] = ["Product Line", "Region", "Total Difference", "Contribution (%)"];

    fn header_style(line: &str) -> Option<Style> {
        let markdown_part = line.find('|').map(|pos| &line[pos..]);
        if let Some(cells) = markdown_part.and_then(split_markdown) {
            if cells == HEADER_CELLS {
                return Some(Style::Markdown);
            }
        }
        if let Some(pos) = line.find("Product Line") {
            if split_aligned(&line[pos..]) == HEADER_CELLS {
                return Some(Style::Aligned);
            }
        }
        None
    }

    fn split_markdown(line: &str) -> Option<Vec<&str>> {
        let trimmed = line.trim();
        let inner = trimmed.strip_prefix('|')?.strip_suffix('|')?;
        Some(inner.split('|').map(str::trim).collect())
    }

    fn split_aligned(line: &str) -> Vec<&str> {
        line.trim()
            .split("  ")
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect()
    }

    fn parse_table_row(line: &str, style: Style) -> Option<(String, String, f64)> {
        let cells: Vec<String> = match style {
            Style::Markdown => split_markdown(line)?
                .into_iter()
                .map(str::to_string)
                .collect(),
            Style::Aligned => split_aligned(line).into_iter().map(str::to_string).collect(),
        };
        if cells.len() != 4 {
            return None;
        }
        let delta: f64 = cells[2].parse().ok().filter(|v: &f64| v.is_finite())?;
        let _contribution: f64 = cells[3].parse().ok()?;
        Some((cells[0].clone(), cells[1].clone(), delta))
    }

    /// Text after the last prior-output marker, up to the next blank line.
    fn extract_prior_output(text: &str) -> Option<String> {
        let pos = text.rfind(PRIOR_OUTPUT_MARKER)?;
        let after = &text[pos + PRIOR_OUTPUT_MARKER.len()..];
        let after = after.trim_start();
        let end = after.find("\n\n").unwrap_or(after.len());
        let out = after[..end].trim();
        if out.is_empty() {
            None
        } else {
            Some(out.to_string())
        }
    }

    fn derive_rng(seed: u64, digest: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(digest.as_bytes());
        let bytes: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(bytes)
    }

    /// Apply each fault class independently with its configured probability.
    /// One uniform draw per class, in fixed order, keyed by (seed, digest).
    pub fn apply_faults(content: &str, profile: &FaultProfile, digest: &str) -> String {
        let mut rng = derive_rng(profile.seed, digest);
        let mut out = content.to_string();
        for class in FaultClass::ALL {
            let u: f64 = rng.random();
            if u < profile.probability(class) {
                out = apply_fault_class(class, &out);
            }
        }
        out
    }

    /// The deterministic text transform for one fault class.
    pub fn apply_fault_class(class: FaultClass, content: &str) -> String {
        match class {
            FaultClass::DropTopDriver => {
                let mut sentences = segment_sentences(content, None);
                if sentences.is_empty() {
                    return content.to_string();
                }
                let idx = sentences
                    .iter()
                    .position(|s| s.to_lowercase().contains(" as main "))
                    .unwrap_or(0);
                sentences.remove(idx);
                sentences.join(" ")
            }
            FaultClass::InjectUngroundedEntity => append_sentence(content, UNGROUNDED_SENTENCE),
            FaultClass::InjectNumeral => append_sentence(content, NUMERAL_SENTENCE),
            FaultClass::RepeatProductLine => {
                let sentences = segment_sentences(content, None);
                match sentences.first() {
                    Some(first) => append_sentence(content, &first.clone()),
                    None => content.to_string(),
                }
            }
            FaultClass::ContradictDirection => flip_directions(content),
            FaultClass::EmitCodeBlock => CODE_BLOCK.to_string(),
        }
    }

    fn append_sentence(content: &str, sentence: &str) -> String {
        if content.trim().is_empty() {
            sentence.to_string()
        } else {
            format!("{} {sentence}", content.trim_end())
        }
    }

    const PHRASE_FLIPS: [(&str, &str); 1] = [("as main growth driver", "as main detractor")];

    const WORD_FLIPS: [(&str, &str); 7] = [
        ("up", "down"),
        ("increase", "decrease"),
        ("increases", "decreases"),
        ("increased", "decreased"),
        ("increasing", "decreasing"),
        ("growth", "decline"),
        ("rising", "falling"),
    ];

    /// Swap every direction-bearing phrase and word for its opposite.
    /// Headline phrases are masked while individual words flip, then swapped
    /// whole, so "as main growth driver" becomes "as main detractor" and not
    /// "as main decline driver".
    fn flip_directions(content: &str) -> String {
        let mut out = content.to_string();
        let markers: Vec<(String, String)> = PHRASE_FLIPS
            .iter()
            .enumerate()
            .flat_map(|(i, (a, b))| {
                [
                    (format!("\u{1}a{i}\u{1}"), a.to_string()),
                    (format!("\u{1}b{i}\u{1}"), b.to_string()),
                ]
            })
            .collect();
        for (marker, phrase) in &markers {
            out = out.replace(phrase, marker);
        }
        out = flip_words(&out);
        for pair in markers.chunks(2) {
            // Unmask crosswise: the driver marker yields the detractor
            // phrase and vice versa.
            out = out.replace(&pair[0].0, &pair[1].1);
            out = out.replace(&pair[1].0, &pair[0].1);
        }
        out
    }

    fn flip_words(content: &str) -> String {
        let flip = |word: &str| -> Option<String> {
            let lower = word.to_lowercase();
            for (a, b) in WORD_FLIPS {
                let target = if lower == a {
                    b
                } else if lower == b {
                    a
                } else {
                    continue;
                };
                return Some(match_case(word, target));
            }
            None
        };

        let mut out = String::with_capacity(content.len());
        let mut word = String::new();
        for ch in content.chars() {
            if ch.is_alphanumeric() {
                word.push(ch);
            } else {
                if !word.is_empty() {
                    out.push_str(&flip(&word).unwrap_or_else(|| word.clone()));
                    word.clear();
                }
                out.push(ch);
            }
        }
        if !word.is_empty() {
            out.push_str(&flip(&word).unwrap_or(word));
        }
        out
    }

    fn match_case(original: &str, replacement: &str) -> String {
        let mut chars = original.chars();
        match chars.next() {
            Some(c) if c.is_uppercase() => {
                let mut out = String::new();
                let mut rep = replacement.chars();
                if let Some(first) = rep.next() {
                    out.extend(first.to_uppercase());
                }
                out.extend(rep);
                out
            }
            _ => replacement.to_string(),
        }
    }
}

/// A named collection of backend configs, as the orchestrator consumes it.
pub type BackendMap = BTreeMap<String, BackendConfig>;
