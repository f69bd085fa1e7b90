//! Session service for the career interview engine: file-backed sessions,
//! an HTTP+JSON API and the `interview` command-line tool.

pub mod cli;
pub mod config;
pub mod http;
pub mod session;
pub mod store;

pub use config::{BackendConfig, EngineFactory, ServiceConfig};
pub use session::{CreateSessionRequest, ServiceError, SessionId, SessionRecord, SessionService};
pub use store::FileStore;
