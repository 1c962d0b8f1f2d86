#![allow(dead_code)]

pub mod trust_matrix;
pub mod wot_oracle;
pub mod codec_fuzz;
pub mod crdt_oracle;
