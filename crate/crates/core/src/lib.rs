//! Desk-scale toolkit for reinforcement-learning experiments on grammatical
//! error correction: rule-based rewards, group-relative policy optimization,
//! span-level scoring, majority voting, and data-generation pipelines.

pub mod corpus;
pub mod grpo;
pub mod pipeline;
pub mod policy;
pub mod report;
pub mod reward;
pub mod rng;
pub mod scorer;
pub mod text;
pub mod voting;

// Every rust snippet in the book runs under `cargo test --doc`. mdbook's own
// `test` command can't link this crate, so the chapters are attached here as
// doc comments instead — one module per chapter, so a failing test names the
// chapter it came from.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/rewards.md")]
    mod rewards {}
    #[doc = include_str!("../../../book/src/policy.md")]
    mod policy {}
    #[doc = include_str!("../../../book/src/grpo.md")]
    mod grpo {}
    #[doc = include_str!("../../../book/src/voting.md")]
    mod voting {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
