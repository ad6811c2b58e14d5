use serde_json::{json, Value};
use specprobe_core::mock_server::{MockServer, Scenario};

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn new_pet() -> Value {
    json!({
        "name": "Fluffy",
        "photoUrls": ["http://example.com/photo1"],
        "category": {"id": 1, "name": "Dogs"},
        "tags": [{"id": 1, "name": "Friendly"}],
        "status": "available"
    })
}

/// The two requests of the example script: create a pet, fetch it by id.
fn create_then_fetch(agent: &ureq::Agent, base: &str) -> (Value, u16, Value) {
    let mut created = agent.post(&format!("{base}/v2/pet")).send_json(new_pet()).unwrap();
    assert_eq!(created.status(), 200);
    let created: Value = created.body_mut().read_json().unwrap();
    let id = created["id"].as_i64().unwrap();
    let mut fetched = agent.get(&format!("{base}/v2/pet/{id}")).call().unwrap();
    let status = fetched.status().as_u16();
    (created, status, fetched.body_mut().read_json().unwrap())
}

#[test]
fn faithful_scenario_echoes_created_pets() {
    let server = MockServer::start(Scenario::petstore_faithful(), "127.0.0.1:0", 2).unwrap();
    let (created, status, fetched) = create_then_fetch(&agent(), &server.base_url());
    assert_eq!(status, 200);
    assert_eq!(fetched["id"], created["id"]);
    assert_eq!(fetched["name"], "Fluffy");
}

#[test]
fn defect_scenario_returns_a_different_pet() {
    let server = MockServer::start(Scenario::petstore_defect(), "127.0.0.1:0", 2).unwrap();
    let (created, status, fetched) = create_then_fetch(&agent(), &server.base_url());
    assert_eq!(status, 200);
    assert_ne!(fetched["id"], created["id"], "retrieval must return another pet");
    assert_ne!(fetched["name"], "Fluffy");
}

#[test]
fn unknown_ids_and_routes() {
    let server = MockServer::start(Scenario::petstore_faithful(), "127.0.0.1:0", 1).unwrap();
    let a = agent();
    assert_eq!(a.get(&format!("{}/v2/pet/424242", server.base_url())).call().unwrap().status(), 404);
    assert_eq!(a.get(&format!("{}/v3/nothing", server.base_url())).call().unwrap().status(), 404);
    let mut inv = a.get(&format!("{}/v2/store/inventory", server.base_url())).call().unwrap();
    assert_eq!(inv.status(), 200);
    assert!(inv.body_mut().read_json::<Value>().unwrap().is_object());
}

#[test]
fn concurrent_clients_get_distinct_ids() {
    let server = MockServer::start(Scenario::petstore_faithful(), "127.0.0.1:0", 4).unwrap();
    let base = server.base_url();
    let ids: Vec<i64> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let base = base.clone();
                s.spawn(move || {
                    let a = agent();
                    (0..5)
                        .map(|_| {
                            let (created, status, fetched) = create_then_fetch(&a, &base);
                            assert_eq!(status, 200);
                            assert_eq!(created["id"], fetched["id"]);
                            created["id"].as_i64().unwrap()
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    let mut unique = ids.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), 40);
}

#[test]
fn scenario_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.yaml");
    std::fs::write(
        &p,
        "name: tiny\nroutes:\n  - {method: GET, path: /ping, action: static, status: 200, body: {ok: true}}\n",
    )
    .unwrap();
    let server = MockServer::start(Scenario::load(&p).unwrap(), "127.0.0.1:0", 1).unwrap();
    let mut r = agent().get(&format!("{}/ping", server.base_url())).call().unwrap();
    assert_eq!(r.body_mut().read_json::<Value>().unwrap(), json!({"ok": true}));
    drop(server);
}
