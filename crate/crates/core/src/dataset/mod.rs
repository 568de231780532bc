//! Schema, agent pools, discretization, one-hot encoding and splits.

mod encode;
mod io;
mod pool;
mod schema;

pub use encode::{
    argmax, one_hot_encode, BlockKind, ColumnBlock, EncodedMatrix, EncodingLayout, Hardening, Standardization,
};
pub use io::{load_dataset, read_pool, read_pool_file, write_pool, write_pool_file, PROVENANCE_COLUMN};
pub use pool::{split, AgentPool, CodedData, Provenance, Row, Value};
pub use schema::{
    build_uniform_edges, discretize, EncodingMode, Schema, SchemaDoc, VariableDoc, VariableKind, VariableSpec,
};
