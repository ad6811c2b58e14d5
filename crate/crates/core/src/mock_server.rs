//! A small HTTP API double driven by a scenario file.
//!
//! Routes answer with a static body, store the request body in a named
//! collection, or fetch a stored item by a path parameter. A fetch may
//! apply `overrides` to the stored item, which is how defect scenarios
//! return the wrong record.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MockServerError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RouteAction {
    Static {
        #[serde(default = "ok")]
        status: u16,
        #[serde(default)]
        body: Value,
    },
    /// Store the JSON request body; a missing or zero `id` is assigned.
    Store {
        collection: String,
        #[serde(default = "ok")]
        status: u16,
    },
    /// Return the item whose `id` equals path parameter `param`.
    Fetch {
        collection: String,
        param: String,
        #[serde(default)]
        overrides: serde_json::Map<String, Value>,
        #[serde(default = "not_found")]
        not_found_status: u16,
    },
}

fn ok() -> u16 {
    200
}

fn not_found() -> u16 {
    404
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub method: String,
    /// Path template; `{name}` matches one segment.
    pub path: String,
    #[serde(flatten)]
    pub action: RouteAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "id_start")]
    pub id_start: i64,
    pub routes: Vec<Route>,
}

fn id_start() -> i64 {
    1
}

impl Scenario {
    /// JSON or YAML, chosen by the first non-blank character.
    pub fn parse(raw: &str) -> Result<Self, MockServerError> {
        let s: Scenario = if raw.trim_start().starts_with('{') {
            serde_json::from_str(raw).map_err(|e| MockServerError::Scenario(e.to_string()))?
        } else {
            serde_yaml::from_str(raw).map_err(|e| MockServerError::Scenario(e.to_string()))?
        };
        for r in &s.routes {
            if !r.path.starts_with('/') {
                return Err(MockServerError::Scenario(format!("route path {} must start with '/'", r.path)));
            }
            if let RouteAction::Fetch { param, .. } = &r.action {
                if !r.path.contains(&format!("{{{param}}}")) {
                    return Err(MockServerError::Scenario(format!("route {} has no {{{param}}} segment", r.path)));
                }
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, MockServerError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|source| MockServerError::Io { path: path.display().to_string(), source })?;
        Self::parse(&raw)
    }

    /// Pet Store routes that echo created pets back.
    pub fn petstore_faithful() -> Self {
        Self::parse(PETSTORE_FAITHFUL).expect("built-in scenario parses")
    }

    /// Pet Store routes whose retrieval returns a different pet.
    pub fn petstore_defect() -> Self {
        Self::parse(PETSTORE_DEFECT).expect("built-in scenario parses")
    }
}

const PETSTORE_FAITHFUL: &str = include_str!("mock_server/petstore-faithful.yaml");
const PETSTORE_DEFECT: &str = include_str!("mock_server/petstore-defect.yaml");

fn match_path<'a>(template: &'a str, path: &'a str) -> Option<BTreeMap<&'a str, &'a str>> {
    let t: Vec<&str> = template.trim_end_matches('/').split('/').collect();
    let p: Vec<&str> = path.trim_end_matches('/').split('/').collect();
    if t.len() != p.len() {
        return None;
    }
    let mut params = BTreeMap::new();
    for (ts, ps) in t.iter().zip(&p) {
        if let Some(name) = ts.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
            if ps.is_empty() {
                return None;
            }
            params.insert(name, *ps);
        } else if ts != ps {
            return None;
        }
    }
    Some(params)
}

#[derive(Debug, Default)]
struct State {
    next_id: i64,
    collections: BTreeMap<String, BTreeMap<String, Value>>,
}

fn id_key(v: &Value) -> Option<String> {
    match v {
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        _ => None,
    }
}

fn error_body(status: u16, message: &str) -> (u16, Value) {
    (status, json!({ "code": status, "type": "error", "message": message }))
}

fn handle(scenario: &Scenario, state: &Mutex<State>, method: &str, url: &str, body: &str) -> (u16, Value) {
    let path = url.split(['?', '#']).next().unwrap_or("");
    let hit = scenario.routes.iter().find_map(|r| {
        (r.method.eq_ignore_ascii_case(method)).then(|| match_path(&r.path, path).map(|p| (r, p))).flatten()
    });
    let Some((route, params)) = hit else {
        return error_body(404, &format!("no route for {method} {path}"));
    };
    match &route.action {
        RouteAction::Static { status, body } => (*status, body.clone()),
        RouteAction::Store { collection, status } => {
            let mut item: Value = match serde_json::from_str(body) {
                Ok(v @ Value::Object(_)) => v,
                _ => return error_body(400, "request body must be a JSON object"),
            };
            let mut st = state.lock().expect("mock state lock");
            let id = match item.get("id").and_then(id_key) {
                Some(k) if k != "0" => k,
                _ => {
                    let id = st.next_id;
                    st.next_id += 1;
                    item["id"] = json!(id);
                    id.to_string()
                }
            };
            st.collections.entry(collection.clone()).or_default().insert(id, item.clone());
            (*status, item)
        }
        RouteAction::Fetch { collection, param, overrides, not_found_status } => {
            let key = params.get(param.as_str()).copied().unwrap_or("");
            let st = state.lock().expect("mock state lock");
            match st.collections.get(collection).and_then(|c| c.get(key)) {
                Some(item) => {
                    let mut item = item.clone();
                    if let Value::Object(m) = &mut item {
                        for (k, v) in overrides {
                            m.insert(k.clone(), v.clone());
                        }
                    }
                    (200, item)
                }
                None => error_body(*not_found_status, &format!("{collection} not found")),
            }
        }
    }
}

/// A running server; stops when dropped.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl MockServer {
    /// Bind `addr` (use port 0 for an ephemeral port) and serve with
    /// `workers` threads.
    pub fn start(scenario: Scenario, addr: &str, workers: usize) -> Result<Self, MockServerError> {
        let server = tiny_http::Server::http(addr)
            .map_err(|e| MockServerError::Bind { addr: addr.to_string(), message: e.to_string() })?;
        let local = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| MockServerError::Bind { addr: addr.into(), message: "not an IP listener".into() })?;
        let server = Arc::new(server);
        let scenario = Arc::new(scenario);
        let state = Arc::new(Mutex::new(State { next_id: scenario.id_start, ..State::default() }));
        let workers = (0..workers.max(1))
            .map(|_| {
                let (server, scenario, state) = (server.clone(), scenario.clone(), state.clone());
                std::thread::spawn(move || {
                    while let Ok(mut req) = server.recv() {
                        let mut body = String::new();
                        let _ = req.as_reader().read_to_string(&mut body);
                        let (status, value) = handle(&scenario, &state, req.method().as_str(), req.url(), &body);
                        tracing::debug!(method = %req.method(), url = req.url(), status, "mock request");
                        let header =
                            tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
                        let resp = tiny_http::Response::from_string(value.to_string())
                            .with_status_code(status)
                            .with_header(header);
                        let _ = req.respond(resp);
                    }
                })
            })
            .collect();
        Ok(Self { server, addr: local, workers })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Block the calling thread until the server is stopped elsewhere.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_templates() {
        assert!(match_path("/v2/pet/{petId}", "/v2/pet/7").unwrap()["petId"] == "7");
        assert!(match_path("/v2/pet/{petId}", "/v2/pet/").is_none());
        assert!(match_path("/v2/pet", "/v2/pet/").is_some());
        assert!(match_path("/v2/pet", "/v2/pets").is_none());
    }

    #[test]
    fn store_then_fetch() {
        let s = Scenario::petstore_faithful();
        let st = Mutex::new(State { next_id: s.id_start, ..Default::default() });
        let (code, created) = handle(&s, &st, "POST", "/v2/pet", r#"{"name":"Fluffy"}"#);
        assert_eq!(code, 200);
        let id = created["id"].as_i64().unwrap();
        let (code, got) = handle(&s, &st, "GET", &format!("/v2/pet/{id}?x=1"), "");
        assert_eq!((code, got), (200, created));
        assert_eq!(handle(&s, &st, "GET", "/v2/pet/999999", "").0, 404);
        assert_eq!(handle(&s, &st, "POST", "/v2/pet", "[1]").0, 400);
        assert_eq!(handle(&s, &st, "DELETE", "/nowhere", "").0, 404);
    }

    #[test]
    fn defect_returns_other_pet() {
        let s = Scenario::petstore_defect();
        let st = Mutex::new(State { next_id: s.id_start, ..Default::default() });
        let (_, created) = handle(&s, &st, "POST", "/v2/pet", r#"{"name":"Fluffy"}"#);
        let (code, got) = handle(&s, &st, "GET", &format!("/v2/pet/{}", created["id"]), "");
        assert_eq!(code, 200);
        assert_ne!(got["id"], created["id"]);
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!(Scenario::parse("name: x\nroutes:\n  - method: GET\n    path: nope\n    action: static\n").is_err());
        assert!(Scenario::parse(
            "name: x\nroutes:\n  - method: GET\n    path: /a/{id}\n    action: fetch\n    collection: c\n    param: other\n"
        )
        .is_err());
    }
}
