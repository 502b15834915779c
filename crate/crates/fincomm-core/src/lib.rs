//! Turns two-period financial tables into qualitative report commentary via
//! configurable LLM workflows, and deterministically validates the generated
//! text against the source data.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`ledger`]: ingestion of raw two-period observations and aggregation
//!   into the per-(product line, region) delta table every stage consumes.
//! - [`trend_oracle`]: deterministic trend analysis (overall direction,
//!   ranked drivers/detractors, cross-region consistency) and a template
//!   baseline summary; ground truth for validation and the mock backend.
//! - [`prompt_engine`]: versioned five-part prompt templates with
//!   placeholder bindings.
//! - [`llm_gateway`]: uniform chat-completion access to cloud, local, and
//!   deterministic mock backends with seeded fault injection.
//! - [`orchestrator`]: sequential prompt-chained workflows (WF-A, WF-B,
//!   WF-C), run logging, and summary post-processing.
//! - [`claims`]: sentence segmentation and claim parsing against the entity
//!   lexicon derived from the input data.
//! - [`validator`]: rule-based structural, grounding, and logic checks plus
//!   faithfulness scoring.
//! - [`eval_harness`]: batch generated-vs-reference comparison and the
//!   Monte-Carlo chain fault-propagation experiment.

pub mod claims;
pub mod eval_harness;
pub mod ledger;
pub mod llm_gateway;
pub mod orchestrator;
pub mod prompt_engine;
pub mod trend_oracle;
pub mod validator;
