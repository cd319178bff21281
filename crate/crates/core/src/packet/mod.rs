// SPDX-License-Identifier: Apache-2.0

//! Packet crafting: templates, buffers, batches, field modifiers and
//! checksum arithmetic.

mod buffer;
pub mod checksum;
pub mod field;
mod modifier;

pub use buffer::{
    materialize, BufBatch, BufferPool, Offload, PacketBuffer, PacketTemplate,
    DEFAULT_BATCH_CAPACITY, MAX_FRAME_LEN, MIN_FRAME_LEN,
};
pub use checksum::{crc32_fcs, fcs_valid, ipv4_checksum, l4_checksum, L4Proto};
pub use field::{FieldValue, Layout, Proto};
pub use modifier::{apply_modifier, FieldModifier, ModifierKind};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PacketError {
    #[error("unknown field `{0}` for this protocol stack")]
    UnknownField(String),
    #[error("packet length {len} is below the minimum of {min} bytes")]
    LengthTooSmall { len: usize, min: usize },
    #[error("packet length {len} exceeds the maximum of {max} bytes")]
    LengthTooLarge { len: usize, max: usize },
    #[error("invalid protocol stack {0}")]
    InvalidStack(String),
    #[error("batch of {requested} buffers exceeds capacity {capacity}")]
    CapacityExceeded { requested: usize, capacity: usize },
    #[error("checksum input has odd length {0}")]
    OddLength(usize),
    #[error("buffer has no {0} layer")]
    MissingLayer(&'static str),
    #[error("value {value} does not fit field {field}")]
    ValueOutOfRange { field: String, value: u128 },
    #[error("cannot parse field value `{0}`")]
    InvalidValue(String),
    #[error("modifier range is empty (lo > hi)")]
    EmptyRange,
}
