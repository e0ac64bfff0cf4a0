//! File formats: embedding dumps, results tables and checkpoints.

mod checkpoint;
mod dump;
mod results;

pub use checkpoint::{
    decode_model, decode_rnd, encode_model, encode_rnd, hex, load_model, load_rnd, rnd_target_hash, save_model,
    save_rnd, stored_target_hash, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use dump::{
    decode_embedding_dump, encode_embedding_dump, read_embedding_dump, read_embedding_dump_full,
    write_embedding_dump, write_embedding_dump_with, DumpManifest, DUMP_MAGIC, DUMP_VERSION,
};
pub use results::{format_sig9, parse_results, read_results, results_to_string, write_results, RESULTS_HEADER};
