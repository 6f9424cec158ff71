//! Prompt construction, response parsing and chat-completion gateways.

mod gateway;
mod parse;
mod prompt;

pub use gateway::{
    estimate_tokens, ChatGateway, ChatUsage, Completion, EndpointConfig, GatewayError,
    OpenAiGateway, ScriptedGateway, UsageMeter, UsageTotals,
};
pub use parse::{parse_algorithm, render_algorithm, ParseError, ParsedAlgorithm};
pub use prompt::{
    build_prompt, ParentAlgorithm, Prompt, PromptError, PromptSpec, CROSSOVER_NOVELTY,
    FS_SIGNATURE, JOINT_LOGITS_WITH_FS_SIGNATURE, JOINT_SIGNATURE, LOGITS_SIGNATURE,
    MUTATION_NOVELTY, NO_DEEP_LOOPS, NO_LEARNABLE, NO_RANDOM, READABILITY,
};
