//! Prompt-based baselines: versioned templates, a cached chat client, and
//! the familiarity, information-need and term-extraction calls.

pub mod client;
pub mod prompt;
pub mod tasks;

pub use client::{
    cache_key, ChatCache, ChatClient, ChatExchange, ChatRequest, ClientConfig, HttpTransport, MockTransport, Reply,
    Transport,
};
pub use prompt::{build_prompt, related_data, FewShotExample, PromptExamples, PromptGranularity, PromptSpec, Strategy};
pub use tasks::{classify_familiarity_llm, classify_info_need_llm, extract_terms_llm, parse_binary, parse_term_list};
