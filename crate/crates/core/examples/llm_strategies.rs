//! The four prompting strategies against an in-process mock chat model:
//! rendered prompts, parsed answers, and a cached second pass.
//!
//! ```text
//! cargo run --example llm_strategies
//! ```
//!
//! Point `llm.endpoint` at a real chat-completions service and export the
//! variable named by `llm.api_key_env` to run the same code for real.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jargon::config::RunConfig;
use jargon::dataset::{splits_for, Target};
use jargon::eval::{evaluate_llm, select_examples, select_publications};
use jargon::llm::{
    build_prompt, ChatCache, ChatClient, ClientConfig, MockTransport, PromptExamples, PromptGranularity, PromptSpec,
    Reply, Strategy,
};
use jargon::pipeline::load_study;

fn main() -> jargon::Result<()> {
    let mut config = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/run.toml"))?;
    config.llm.max_test_rows = 5;
    let study = load_study(&config)?;
    let splits = splits_for(
        &study.records,
        config.split.mode,
        config.split.train_fraction,
        config.seed,
    )?;

    // answers 1 (unfamiliar) whenever the prompt carries labeled examples
    let transport = Arc::new(MockTransport::from_fn(|req| {
        Ok(Reply::ok(if req.prompt().contains("Familiarity score:") {
            "1"
        } else {
            "The score is 0."
        }))
    }));
    std::env::set_var("JARGON_EXAMPLE_KEY", "not-a-real-key");
    let client_config = ClientConfig {
        api_key_env: "JARGON_EXAMPLE_KEY".into(),
        requests_per_second: 0.0,
        ..ClientConfig::default()
    };
    let client = ChatClient::new(client_config, transport.clone(), ChatCache::in_memory());

    let (annotator, split) = splits.iter().next().expect("annotators");
    let reader = &study.readers[annotator];
    let record = study
        .records
        .iter()
        .find(|r| &r.annotator_id == annotator && split.is_test(&r.key()))
        .expect("a test term");
    let doc = &study.abstracts[&record.abstract_id];
    let specs = [
        PromptSpec::baseline(),
        PromptSpec::new(Strategy::Metadata, None),
        PromptSpec {
            n_examples: 2,
            ..PromptSpec::new(Strategy::ContextEnhanced, Some(PromptGranularity::Individual))
        },
        PromptSpec {
            n_examples: 2,
            ..PromptSpec::new(Strategy::FewShot, Some(PromptGranularity::Subdomain))
        },
    ];
    for spec in &specs {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let examples = PromptExamples {
            publications: select_publications(&study, spec, reader, &mut rng)?,
            labeled: select_examples(&study, spec, reader, split, &mut rng)?,
        };
        let prompt = build_prompt(spec, &record.term, doc, reader, &examples, split)?;
        let related = prompt
            .split("Related Data:")
            .nth(1)
            .and_then(|rest| rest.split(" Here's how").next())
            .unwrap_or("");
        println!(
            "== {} ==\nrelated data: {}\n",
            spec.label(),
            related.chars().take(240).collect::<String>()
        );
    }

    for spec in &specs {
        let results = evaluate_llm(&study, &splits, spec, Target::Familiarity, &client)?;
        let mean = results.iter().map(|r| r.f1).sum::<f64>() / results.len() as f64;
        println!(
            "{:<32} mean F1 {mean:.4} over {} annotators",
            spec.label(),
            results.len()
        );
    }
    let first_pass = transport.calls();
    for spec in &specs {
        evaluate_llm(&study, &splits, spec, Target::Familiarity, &client)?;
    }
    println!(
        "\nmodel calls: {first_pass} on the first pass, {} on the cached second pass",
        transport.calls() - first_pass
    );
    Ok(())
}
