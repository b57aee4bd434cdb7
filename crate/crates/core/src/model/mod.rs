//! The MSF-CNN classifier, a GCN node classifier and the checkpoint format.

mod checkpoint;
mod config;
mod gcn_node;
mod msf;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{GnnKind, MsfCnnConfig};
pub use gcn_node::GcnNodeClassifier;
pub use msf::{BatchCache, GnnStack, MsfCnnModel};
