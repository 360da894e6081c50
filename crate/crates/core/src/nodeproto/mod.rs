//! Line-delimited JSON protocol (`occlane-node/1`) that lets an external
//! process serve the detect, inpaint or segment stage.
//!
//! The parent writes one message per line to the node's stdin and reads one
//! per line from its stdout; images travel as PNG paths inside a per-session
//! scratch directory. See `docs/protocol.md` for the wire format.

mod client;
mod messages;
mod server;

pub use client::{spawn_node, NodeHandle, NodeOptions, SCRATCH_ENV};
pub use messages::{Message, NodeReply, NodeRequest, Role, PROTOCOL};
pub use server::{serve, Behavior};
