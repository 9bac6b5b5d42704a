//! HTTP transport for oracles: a blocking client that implements
//! [`LogitOracle`](crate::oracle::LogitOracle) and a server exposing any
//! oracle over the same protocol.

mod client;
pub mod server;
pub mod wire;

pub use client::RemoteOracle;
pub use server::{serve, spawn, ServerHandle};
