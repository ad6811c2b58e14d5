//! Requirement-driven Web-API test generation.
//!
//! The pipeline turns a natural-language business requirement and an OpenAPI
//! document into an executable integration test script, runs it through a
//! runner plugin, classifies the outcome, and records every attempt.

pub mod expand;
pub mod gateway;
pub mod harness;
pub mod ingest;
pub mod mock_server;
pub mod orchestrator;
pub mod par;
pub mod parser;
pub mod prompting;
pub mod rag;
