//! Uniform access to text-generation backends.

mod backend;
mod gateway;
mod ratelimit;
mod template;

pub use backend::{
    request_hash, to_messages, Backend, BackendCall, BackendError, ChatCompletionBackend, ChatMessage, ScriptRule,
    ScriptedBackend, ScriptedReply, Transcript, TranscriptEntry,
};
pub use gateway::{Gateway, GatewayError, GenerationRequest, GenerationResult, PromptSource, RenderedPrompt};
pub use ratelimit::TokenBucket;
pub use template::{
    numbered_block, Bindings, PromptTemplate, TemplateError, TemplateSet, JUDGE_QA, NLI_NO_DOCS,
    NLI_PREMISE_HYPOTHESIS, NLI_WITH_DOCS, REGENERATE, REGENERATE_OPEN, REWRITE_PASSAGE,
};
