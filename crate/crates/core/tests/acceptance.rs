//! Acceptance gate: one line per criterion, then a single assertion.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use common::*;
use specprobe_core::expand::Requirement;
use specprobe_core::gateway::{LlmGateway, ScriptedProvider};
use specprobe_core::harness::{annotate, classify, AutoClass, ChainOutcome, ManualLabel, MockRunner};
use specprobe_core::ingest::{
    load_spec, parse_spec, serialize, serialize_document, simplify, ApproxTokenizer, SimplificationRules, Tokenizer,
};
use specprobe_core::orchestrator::{eval_flow, generate_flow, FlowMode, Pipeline, PreparedSpec, Suite, SuiteEntry};
use specprobe_core::prompting::{
    build_system_prompt, route, ContextMode, PromptTemplateSet, DEFAULT_RAG_THRESHOLD, DEFAULT_TEST_EXAMPLE,
};
use specprobe_core::rag::{
    chunk_text, embed, index, ChunkBounds, HashingEmbedder, ScoredChunk, StoreEntry, VectorStore,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const WORDS: &[&str] = &[
    "pet",
    "order",
    "user",
    "inventory",
    "vehicle",
    "model",
    "market",
    "quote",
    "status",
    "identifier",
    "available",
    "configuration",
    "price",
    "currency",
    "category",
    "photo",
    "tag",
    "shipment",
    "invoice",
    "account",
];

fn sentence(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Canonical text of a synthetic spec with at least `target` tokens.
fn synthetic_spec(rng: &mut ChaCha8Rng, target: usize, tok: &dyn Tokenizer) -> String {
    let op = |rng: &mut ChaCha8Rng, i: usize| {
        let words = rng.gen_range(5..80);
        json!({
            "operationId": format!("op{i}"),
            "summary": sentence(rng, 6),
            "description": sentence(rng, words),
            "parameters": [{"name": "id", "in": "path", "required": true, "schema": {"type": "string"}}],
            "responses": {"200": {"description": sentence(rng, 4)}},
        })
    };
    let doc = |paths: &serde_json::Map<String, Value>| {
        serialize_document(&json!({"openapi": "3.0.3", "info": {"title": "synthetic", "version": "1"}, "paths": paths}))
    };
    let mut paths = serde_json::Map::new();
    let mut i = 0;
    loop {
        // estimate how many more paths are needed from the average so far
        let have = if paths.is_empty() { 0 } else { tok.count(&doc(&paths)) };
        if have >= target {
            return doc(&paths);
        }
        // approach from below so the result overshoots by at most a few paths
        let per_path = if paths.is_empty() { 1_000 } else { (have / paths.len()).max(1) };
        let more = ((target - have) * 9 / 10 / per_path).max(1);
        for _ in 0..more {
            paths.insert(format!("/r{i}/{{id}}"), json!({"get": op(rng, i), "put": op(rng, i + 1)}));
            i += 2;
        }
    }
}

fn chunking_suite() -> Outcome {
    let mut elapsed = Duration::ZERO;
    let tok = ApproxTokenizer;
    let bounds = ChunkBounds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let (mut chunks_seen, mut tokens_seen) = (0usize, 0usize);
    let (mut smallest, mut largest) = (usize::MAX, 0usize);
    let (lo, hi) = (1_000f64.ln(), 500_000f64.ln());
    let mut targets: Vec<usize> = (0..48).map(|_| rng.gen_range(lo..hi).exp() as usize).collect();
    targets.extend([1_000, 500_000]);
    for (n, target) in targets.into_iter().enumerate() {
        let text = synthetic_spec(&mut rng, target, &tok);
        let size = tok.count(&text);
        tokens_seen += size;
        smallest = smallest.min(size);
        largest = largest.max(size);
        // only chunking is timed; building the inputs is not
        let started = Instant::now();
        let chunks = chunk_text("synthetic", &text, &tok, bounds).map_err(|e| e.to_string())?;
        elapsed += started.elapsed();
        chunks_seen += chunks.len();
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
        ensure(joined == text, || format!("spec {n}: concatenation differs from the source"))?;
        for (i, c) in chunks.iter().enumerate() {
            let count = tok.count(&c.text);
            ensure(count == c.token_count, || {
                format!("spec {n} chunk {i}: stored count {} != {count}", c.token_count)
            })?;
            if i + 1 < chunks.len() {
                ensure((bounds.min_tokens..=bounds.max_tokens).contains(&count), || {
                    format!("spec {n} chunk {i}: {count} tokens outside [800, 1200]")
                })?;
            }
        }
    }
    ensure(smallest >= 1_000 && largest <= 501_000, || format!("sizes {smallest}..{largest}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "50 specs of {smallest}..{largest} tokens ({tokens_seen} total), {chunks_seen} chunks in {:.1}s",
        elapsed.as_secs_f64()
    ))
}

/// Full sort with an independently written comparison, then truncate.
fn brute_force(store: &VectorStore, q: &[f32], k: usize) -> Vec<(String, f32)> {
    let mut all: Vec<(String, f32)> = store
        .entries()
        .iter()
        .map(|e| {
            let mut s = 0f32;
            for (a, b) in q.iter().zip(&e.vector) {
                s += a * b;
            }
            (e.chunk.id.clone(), s)
        })
        .collect();
    all.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        std::cmp::Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    all.truncate(k);
    all
}

fn retrieval_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tok = ApproxTokenizer;
    let mut checked = 0;
    for s in 0..200 {
        let n = rng.gen_range(1..=1000usize);
        // a small vocabulary of texts forces many exact score ties
        let pool: Vec<String> = (0..rng.gen_range(1..=n.min(50))).map(|_| sentence(&mut rng, 5)).collect();
        let mut chunks = Vec::with_capacity(n);
        for i in 0..n {
            let text = pool[rng.gen_range(0..pool.len())].clone();
            chunks.push(specprobe_core::rag::Chunk {
                id: format!("s{s}-{:04}", (i * 7919) % 10007),
                token_count: tok.count(&text),
                text,
                anchor: String::new(),
            });
        }
        let store = index(chunks, &HashingEmbedder).map_err(|e| e.to_string())?;
        let q = embed(&sentence(&mut rng, 4), &HashingEmbedder).map_err(|e| e.to_string())?;
        for k in [1, 5, 10, n + 1] {
            let got: Vec<(String, f32)> = store
                .query(&q, k)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|h: ScoredChunk| (h.chunk.id, h.score))
                .collect();
            let want = brute_force(&store, &q.values, k);
            ensure(got == want, || format!("store {s} (n={n}) k={k}: result differs from brute force"))?;
            checked += 1;
        }
    }
    // the same store built from raw vectors, including negative scores
    let entries: Vec<StoreEntry> = (0..300)
        .map(|i| StoreEntry {
            chunk: specprobe_core::rag::Chunk {
                id: format!("v{i:03}"),
                text: String::new(),
                token_count: 0,
                anchor: String::new(),
            },
            vector: (0..8).map(|_| rng.gen_range(-1i32..=1) as f32 * 0.5).collect(),
        })
        .collect();
    let store = VectorStore::from_entries(8, "raw", entries).map_err(|e| e.to_string())?;
    let q = specprobe_core::rag::EmbeddingVector {
        values: vec![0.5, -0.5, 0.0, 0.5, 0.5, -0.5, 0.0, 0.5],
        dim: 8,
        provider_id: "raw".into(),
    };
    for k in [1, 5, 10, 301] {
        let got: Vec<(String, f32)> = store.query(&q, k).unwrap().into_iter().map(|h| (h.chunk.id, h.score)).collect();
        ensure(got == brute_force(&store, &q.values, k), || format!("raw store k={k} differs"))?;
        checked += 1;
    }
    Ok(format!("{checked} queries, 0 mismatches"))
}

fn simplification() -> Outcome {
    let tok = ApproxTokenizer;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut docs: Vec<(String, specprobe_core::ingest::ApiSpec)> = Vec::new();
    for f in ["petstore.yaml", "fleet.yaml", "gallery.yaml"] {
        docs.push((f.into(), load_spec(&fixture(&format!("specs/{f}"))).map_err(|e| e.to_string())?));
    }
    for i in 0..20 {
        let text = synthetic_spec(&mut rng, 2_000, &tok);
        let mut v: Value = serde_json::from_str(&text).unwrap();
        // sprinkle deprecations, images and admin routes
        for (j, (_, item)) in v["paths"].as_object_mut().unwrap().iter_mut().enumerate() {
            match (i + j) % 5 {
                0 => item["get"]["deprecated"] = json!(true),
                1 => item["put"]["description"] = json!("see ![diagram](https://x.test/d.png) <img src=\"a.png\">"),
                _ => {}
            }
        }
        v["paths"]["/admin/flush"] = json!({"post": {"tags": ["admin"], "responses": {"200": {"description": "ok"}}}});
        docs.push((format!("synthetic-{i}"), parse_spec(&v.to_string(), None, "s").map_err(|e| e.to_string())?));
    }
    let rules = SimplificationRules::default();
    for (name, spec) in &docs {
        let original = serialize_document(&spec.document);
        let once = simplify(spec, &rules);
        let twice = simplify(&once.spec, &rules);
        ensure(serialize(&once) == serialize(&twice), || format!("{name}: not idempotent"))?;
        ensure(twice.report.total() == 0, || format!("{name}: second pass removed nodes"))?;
        ensure(tok.count(&serialize(&once)) <= tok.count(&original), || format!("{name}: token count grew"))?;
        let identity = simplify(spec, &SimplificationRules::none());
        ensure(serialize(&identity) == original, || format!("{name}: rules-off run is not the identity"))?;
    }
    let gallery = &docs[2].1;
    let before = tok.count(&serialize_document(&gallery.document));
    let s = simplify(gallery, &rules);
    let after = tok.count(&serialize(&s));
    ensure(after < before, || format!("gallery: {after} !< {before}"))?;
    ensure(s.report.images > 0 && s.report.deprecated_operations > 0, || "gallery: nothing removed".into())?;
    Ok(format!("{} documents; gallery {before} -> {after} tokens", docs.len()))
}

fn prompt_fidelity() -> Outcome {
    let t = PromptTemplateSet::default();
    let a = build_system_prompt(&t, Some(DEFAULT_TEST_EXAMPLE), &[]).map_err(|e| e.to_string())?;
    let b = build_system_prompt(&PromptTemplateSet::default(), Some(DEFAULT_TEST_EXAMPLE), &[])
        .map_err(|e| e.to_string())?;
    ensure(a == b, || "two builds differ".into())?;
    ensure(a.starts_with("As an AI coding assistant, my goal is to facilitate the creation of executable API integration tests in TypeScript."), || "context opening missing".into())?;
    ensure(a.contains("\nTESTS WILL BE ASSESSED ON SEVERAL KEY FACTORS:\n- Executability:"), || {
        "performance header missing".into()
    })?;
    let format = "Document your generation using the following format:\n\nREQUIREMENT:\n<1. **Clarifying the Business Requirement**>\nENDPOINTS:\n<2. **Listing Endpoints**>\nTEST:\n```typescript\n<3. **Craft Executable Test Code**>";
    ensure(a.contains(format), || "output format instruction missing".into())?;
    ensure(a.contains(DEFAULT_TEST_EXAMPLE.trim_end()), || "test example not embedded".into())?;
    Ok(format!("{} bytes, byte-identical across builds", a.len()))
}

/// Text whose approximate token count is exactly `n`.
fn text_with_tokens(n: usize) -> String {
    "abcd ".repeat(n)
}

fn rag_threshold() -> Outcome {
    let tok = ApproxTokenizer;
    let mut out = Vec::new();
    for (n, want) in [(4_070, ContextMode::FullSpec), (424_465, ContextMode::Rag)] {
        let counted = tok.count(&text_with_tokens(n));
        ensure(counted == n, || format!("counted {counted} for {n}"))?;
        let got = route(counted, DEFAULT_RAG_THRESHOLD);
        ensure(got == want, || format!("{n} routed to {got:?}"))?;
        out.push(format!("{n}->{got:?}"));
    }
    ensure(route(DEFAULT_RAG_THRESHOLD, DEFAULT_RAG_THRESHOLD) == ContextMode::FullSpec, || "threshold itself".into())?;
    ensure(route(DEFAULT_RAG_THRESHOLD + 1, DEFAULT_RAG_THRESHOLD) == ContextMode::Rag, || "threshold + 1".into())?;
    Ok(out.join(", "))
}

fn petstore_entry() -> SuiteEntry {
    SuiteEntry::new(
        Requirement::new("PS-1", "As a store owner, I want to add a new pet and retrieve it by its id"),
        "PS",
        fixture("specs/petstore.yaml"),
    )
}

/// Record `replies` once, then run the same requirement in replay mode.
fn replay_generate(replies: Vec<String>, work: &std::path::Path, out: &str) -> Result<Vec<AutoClass>, String> {
    let transcript = work.join(format!("{out}.jsonl"));
    let entry = petstore_entry();
    {
        let p = recording(config(), &transcript, replies);
        let spec = PreparedSpec::prepare(&entry.spec, &p).map_err(|e| e.to_string())?;
        generate_flow(&p, &entry, &spec, &work.join(format!("{out}-rec")), FlowMode::StopOnSuccess)
            .map_err(|e| e.to_string())?;
    }
    let p = replaying(config(), &transcript);
    let spec = PreparedSpec::prepare(&entry.spec, &p).map_err(|e| e.to_string())?;
    let r = generate_flow(&p, &entry, &spec, &work.join(out), FlowMode::StopOnSuccess).map_err(|e| e.to_string())?;
    Ok(r.records.iter().map(|r| r.outcome.auto).collect())
}

fn retry_protocol() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let three =
        replay_generate(vec!["".into(), completion(BROKEN_SCRIPT), completion(&pet_script())], work.path(), "three")?;
    ensure(three == [AutoClass::EmptyScript, AutoClass::SyntaxError, AutoClass::Passed], || format!("got {three:?}"))?;
    let one = replay_generate(vec![completion(&pet_script())], work.path(), "one")?;
    ensure(one == [AutoClass::Passed], || format!("got {one:?}"))?;

    let mut files: Vec<_> = std::fs::read_dir(fixture("classification")).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    let mut matched = 0;
    for f in &files {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(f).unwrap()).unwrap();
        let chain: ChainOutcome = serde_json::from_value(v["chain"].clone()).map_err(|e| e.to_string())?;
        let mut outcome = classify(&chain);
        let auto = outcome.auto.as_str();
        if let Some(label) = v.get("manual_label").and_then(Value::as_str) {
            let label: ManualLabel = label.parse().map_err(|e: String| e)?;
            outcome = annotate(&outcome, label, "").map_err(|e| e.to_string())?;
        }
        let row = outcome.table_row().map(|r| r.letter().to_string());
        let name = f.file_name().unwrap().to_string_lossy();
        ensure(auto == v["expected_auto"], || format!("{name}: auto {auto}"))?;
        ensure(row.as_deref() == v["expected_row"].as_str(), || format!("{name}: row {row:?}"))?;
        matched += 1;
    }
    ensure(matched == 12, || format!("{matched} classification fixtures"))?;
    Ok(format!("3 attempts -> passed; 1 attempt; {matched}/12 fixtures match"))
}

fn end_to_end_offline() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let transcript = work.path().join("t.jsonl");
    let entry = petstore_entry();
    {
        let p = recording(config(), &transcript, vec![completion(BROKEN_SCRIPT), completion(&pet_script())]);
        let spec = PreparedSpec::prepare(&entry.spec, &p).map_err(|e| e.to_string())?;
        generate_flow(&p, &entry, &spec, &work.path().join("rec"), FlowMode::StopOnSuccess)
            .map_err(|e| e.to_string())?;
    }
    let mut trees = Vec::new();
    let mut slowest = Duration::ZERO;
    for run in ["a", "b"] {
        let started = Instant::now();
        let p = replaying(config(), &transcript);
        let spec = PreparedSpec::prepare(&entry.spec, &p).map_err(|e| e.to_string())?;
        let out = work.path().join(run);
        let r = generate_flow(&p, &entry, &spec, &out, FlowMode::StopOnSuccess).map_err(|e| e.to_string())?;
        slowest = slowest.max(started.elapsed());
        ensure(r.succeeded() && r.records.len() == 2, || format!("run {run}: {} records", r.records.len()))?;
        trees.push(tree(&out));
    }
    ensure(slowest < Duration::from_secs(5), || format!("took {slowest:?}"))?;
    ensure(trees[0].len() == trees[1].len(), || "different file sets".into())?;
    for ((pa, ca), (pb, cb)) in trees[0].iter().zip(&trees[1]) {
        ensure(pa == pb, || format!("{pa} vs {pb}"))?;
        let same = if pa.ends_with(".json") { without_timestamps(ca) == without_timestamps(cb) } else { ca == cb };
        ensure(same, || format!("{pa} differs between runs"))?;
    }
    Ok(format!(
        "{} files identical modulo timestamps; slowest run {:.0}ms",
        trees[0].len(),
        slowest.as_secs_f64() * 1e3
    ))
}

fn eval_suite() -> Outcome {
    let suite = Suite::load(&fixture("suite/suite.yaml")).map_err(|e| e.to_string())?;
    ensure(suite.requirements.len() == 6, || "suite size".into())?;
    let runner = Arc::new(MockRunner::from_file(&fixture("runner-results.json")).map_err(|e| e.to_string())?);
    let provider = ScriptedProvider::responder(|req| {
        Ok(if req.user.contains("[attempt 2]") { completion(BROKEN_SCRIPT) } else { completion(&pet_script()) })
    });
    let cfg = config();
    let gw = LlmGateway::new(cfg.llm.clone(), Some(Arc::new(provider))).map_err(|e| e.to_string())?;
    let p = Pipeline::with_gateway(cfg, gw).map_err(|e| e.to_string())?.with_runner(runner);
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = eval_flow(&p, &suite, out.path()).map_err(|e| e.to_string())?.report;
    let low = m.subtotal("api_complexity", "low").ok_or("no low subtotal")?;
    let high = m.subtotal("api_complexity", "high").ok_or("no high subtotal")?;
    ensure(low.requirements == 2 && high.requirements == 4, || "subtotal sizes".into())?;
    ensure(low.attempts + high.attempts == m.total.attempts, || "complexity subtotals do not sum".into())?;
    ensure(low.valid_attempts + high.valid_attempts == m.total.valid_attempts, || "valid counts do not sum".into())?;
    ensure(m.is_consistent(), || "Total is not the sum of the API rows".into())?;
    ensure(m.total.attempts == 18 && m.total.valid_attempts == 12 && m.total.requirements_with_valid == 6, || {
        format!("{}/{} valid, {} with >=1", m.total.valid_attempts, m.total.attempts, m.total.requirements_with_valid)
    })?;
    ensure(m.subtotal("detail", "procedural").is_some() && m.subtotal("detail", "concrete_data").is_some(), || {
        "detail subtotals missing".into()
    })?;
    Ok(format!(
        "{} API rows, {} subtotals, Total {}/{} valid",
        m.rows.len(),
        m.subtotals.len(),
        m.total.valid_attempts,
        m.total.attempts
    ))
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("chunking suite", chunking_suite),
        ("retrieval oracle", retrieval_oracle),
        ("simplification", simplification),
        ("prompt fidelity", prompt_fidelity),
        ("rag threshold", rag_threshold),
        ("retry protocol", retry_protocol),
        ("end-to-end offline", end_to_end_offline),
        ("eval suite", eval_suite),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
