//! `ECCK` checkpoint container: magic, u32 version, architecture descriptor
//! (u32 input width, u32 hidden-layer count, u32 per hidden width, u32 class
//! count), u32 epoch stamp, then every parameter as a little-endian f32 in
//! layer order (row-major weights, then biases).

use std::path::Path;

use crate::container::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::nettrain::{Arch, Model};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ECCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let arch = model.arch();
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u32(arch.input_dim as u32);
    w.u32(arch.hidden_dims.len() as u32);
    for &h in &arch.hidden_dims {
        w.u32(h as u32);
    }
    w.u32(arch.num_classes as u32);
    w.u32(model.epoch_stamp as u32);
    for &p in model.params() {
        w.f32(p as f32);
    }
    w.buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    r.expect_version(CHECKPOINT_VERSION)?;
    let input_dim = r.u32()? as usize;
    let depth = r.u32()? as u64;
    r.require(depth, 4)?;
    let hidden_dims = (0..depth)
        .map(|_| r.u32().map(|h| h as usize))
        .collect::<Result<Vec<_>>>()?;
    let num_classes = r.u32()? as usize;
    let epoch_stamp = r.u32()? as usize;
    let arch = Arch::new(input_dim, hidden_dims, num_classes);
    arch.validate()
        .map_err(|e| Error::format(8, format!("bad architecture descriptor: {e}")))?;
    let count = arch.num_params();
    r.require(count as u64, 4)?;
    let params = (0..count)
        .map(|_| r.f32().map(f64::from))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Model::from_params(&arch, params, epoch_stamp)
}

pub fn store_checkpoint(model: &Model, path: &Path) -> Result<()> {
    write_file(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    decode_checkpoint(&read_file(path)?)
}
