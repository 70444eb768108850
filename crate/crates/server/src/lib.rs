//! Persisted query indexes over a fitted trend model and the HTTP API that
//! serves them.

pub mod api;
pub mod error;
pub mod store;

pub use api::{router, serve, ServeOptions, StoreHandle, VERSION_HEADER};
pub use error::{Error, Result};
pub use store::{BuildInputs, IndexStore};
