#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use specprobe_core::gateway::{GatewayMode, LlmGateway, ScriptedProvider};
use specprobe_core::orchestrator::{Config, Pipeline};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn pet_script() -> String {
    std::fs::read_to_string(fixture("pet-create-fetch.test.ts")).unwrap()
}

/// A completion in the requested output format wrapping `script`.
pub fn completion(script: &str) -> String {
    format!(
        "REQUIREMENT:\nCreate a pet, then fetch it by id and compare.\n\
         ENDPOINTS:\n- POST /pet\n- GET /pet/{{petId}}\n\
         TEST:\n```typescript\n{script}```\n"
    )
}

pub const BROKEN_SCRIPT: &str = "import axios from 'axios';\n\ndescribe('pets', () => {\n  test('x', async () => {\n    expect(1).toBe(1);\n\n});\n";

pub fn config() -> Config {
    let mut c = Config::default();
    c.generation.parallelism = 2;
    c
}

pub fn scripted(config: Config, replies: Vec<String>) -> Pipeline {
    let gw = LlmGateway::new(config.llm.clone(), Some(Arc::new(ScriptedProvider::queue(replies)))).unwrap();
    Pipeline::with_gateway(config, gw).unwrap()
}

/// Pipeline recording scripted replies into `transcript`.
pub fn recording(mut config: Config, transcript: &Path, replies: Vec<String>) -> Pipeline {
    config.llm.mode = GatewayMode::Record;
    config.llm.transcript = Some(transcript.to_path_buf());
    scripted(config, replies)
}

pub fn replaying(mut config: Config, transcript: &Path) -> Pipeline {
    config.llm.mode = GatewayMode::Replay;
    config.llm.transcript = Some(transcript.to_path_buf());
    Pipeline::from_config(config).unwrap()
}

/// Every file below `dir`, relative path and contents, sorted.
pub fn tree(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read_to_string(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Record JSON with the wall-clock fields blanked.
pub fn without_timestamps(json: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(json).unwrap();
    if let Some(t) = v.get_mut("timestamps").and_then(|t| t.as_object_mut()) {
        t.remove("started_at");
        t.remove("finished_at");
        t.remove("execution_s");
    }
    v
}
