//! Deterministic network simulation, persistent packet stores, and the
//! member and repo peers that run on top of them.

pub mod net;
pub mod peer;
pub mod store;

pub use net::{Dest, NetConfig, NetStats, Node, Outbox, PeerId, SimNet};
pub use peer::{Delivery, Edit, Peer, PeerConfig, PeerError, Rejection, REPO_REPLAY_INTERVAL_MS};
pub use store::{file_name, load_dir, version_cmp, PacketStore};
