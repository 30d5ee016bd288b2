//! On-disk video formats.

mod rvid;
mod y4m;

pub use rvid::{decode_rvid, encode_rvid, read_rvid, write_rvid, RVID_MAGIC, RVID_VERSION};
pub use y4m::{decode_y4m, read_y4m};
