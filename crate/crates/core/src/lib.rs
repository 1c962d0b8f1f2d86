//! Serverless collaborative workspaces over named, signed data.

pub mod crdt;
pub mod membership;
pub mod name;
pub mod packet;
pub mod security;
pub mod sim;
pub mod svs;
pub mod tlv;

pub use name::{Component, Name, NamePattern};
pub use packet::{ContentType, DataPacket, InterestPacket, Packet, SigInfo, SigType, Validity};
pub use tlv::TlvError;
