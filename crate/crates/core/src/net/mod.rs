//! Client/server deployment over TCP with newline-delimited JSON.

pub mod client;
pub mod server;
pub mod wire;

pub use client::{run_client_episode, SleepController, SocketNavigator};
pub use server::{serve, spawn_server, ServerConfig, ServerHandle};
pub use wire::{decode_message, encode_message, write_message, FrameReader, WireError, WireMessage, WireUnit};
