//! Calls an OpenAI-compatible chat endpoint.
//!
//!     ALIGNRAG_ENDPOINT=http://localhost:8000/v1/chat/completions \
//!     ALIGNRAG_MODEL=qwen2.5-7b-instruct \
//!     cargo run --example http_backend
//!
//! Set `ALIGNRAG_TOKEN_ENV` to the name of a variable holding a bearer token
//! if the server needs one. Without `ALIGNRAG_ENDPOINT` the example only
//! prints the request body it would send.

use alignrag::backends::{Backend, BackendSpec, HttpChatBackend};
use alignrag::domain::Document;
use alignrag::prompts::{render, PromptInput, PromptKind};

fn main() -> anyhow::Result<()> {
    let endpoint = std::env::var("ALIGNRAG_ENDPOINT").ok();
    let model = std::env::var("ALIGNRAG_MODEL").unwrap_or_else(|_| "qwen2.5-7b-instruct".into());
    let spec = BackendSpec {
        auth_token_env: std::env::var("ALIGNRAG_TOKEN_ENV").ok(),
        max_retries: 3,
        timeout_secs: 60.0,
        ..BackendSpec::http("remote", endpoint.clone().unwrap_or_else(|| "http://localhost:8000/v1/chat/completions".into()), model)
    };
    let backend = HttpChatBackend::new(spec)?;

    let docs = [Document::new("Alexander (film)", "Alexander is a 2004 epic film directed by Oliver Stone.")?];
    let prompt = render(
        PromptKind::CdaRationale,
        &PromptInput::new(&docs).slot("question", "Who was the director of Alexander?"),
    )?
    .text;

    match endpoint {
        None => println!("{}", String::from_utf8(backend.request_body(&prompt))?),
        Some(_) => {
            let out = backend.complete(&prompt)?;
            println!("{} ({:?})", out.text, out.latency);
        }
    }
    Ok(())
}
