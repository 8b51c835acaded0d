//! Executable semantics for generated descriptors.
//!
//! Values are packed by walking the same [`crate::emit::DescriptorPlan`] the
//! emitter renders, so every base call, member call, array loop and pointer
//! policy in the generated text has a runtime counterpart here.

mod bind;
mod buffer;
mod pack;
mod value;

pub use bind::{bind_members, BindError, CommandRegistry};
pub use buffer::{decode_primitive, encode_primitive, Mode, PackBuffer};
pub use pack::{pack, stream_pack, unpack, Stream};
pub use value::{format_scalar, parse_scalar, Scalar, Shared, Value};

use crate::model::PrimKind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("value {value} out of range for {kind:?}")]
    Range { kind: PrimKind, value: String },
    #[error("type mismatch at `{path}`: expected {expected}")]
    Mismatch { path: String, expected: String },
    #[error("unions cannot be packed in xdr mode (`{path}`)")]
    XdrUnion { path: String },
    #[error("cyclic structure at `{path}`")]
    Cyclic { path: String },
    #[error("buffer underrun at `{path}`: need {needed} bytes, {available} left")]
    Underrun { path: String, needed: usize, available: usize },
    #[error("corrupt data at `{path}`: {detail}")]
    Corrupt { path: String, detail: String },
    #[error("no descriptor for `{type_name}` at `{path}`")]
    NoDescriptor { path: String, type_name: String },
}

pub type Result<T> = std::result::Result<T, RuntimeError>;
