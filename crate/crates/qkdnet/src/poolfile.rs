//! Binary key-pool files. One file holds one endpoint's copy of a pair's
//! pool; the byte layout is given in `docs/FORMATS.md`.

use std::io::{self, Read, Write};

use thiserror::Error;

use qkdnet_core::keystore::{KeyBlock, KeyError, KeyPool, Lane, NodePair};

pub const MAGIC: [u8; 4] = *b"QKPL";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum PoolFileError {
    #[error("not a key pool file")]
    BadMagic,
    #[error("unsupported pool file version {0}")]
    Version(u16),
    #[error("corrupt pool file: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn put_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "name too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn get_u16<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut b = [0; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn get_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> Result<String, PoolFileError> {
    let len = get_u16(r)? as usize;
    let mut b = vec![0; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| PoolFileError::Corrupt("name is not UTF-8"))
}

/// Writes `pool` after dropping its consumed prefix.
pub fn write_pool<W: Write>(pool: &KeyPool, mut w: W) -> Result<(), PoolFileError> {
    let mut pool = pool.clone();
    pool.compact();
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    put_str(&mut w, pool.pair().a())?;
    put_str(&mut w, pool.pair().b())?;
    put_str(&mut w, pool.owner())?;
    for v in [
        pool.consumed(),
        pool.reserved(),
        pool.base(),
        pool.cursor(Lane::Forward),
        pool.cursor(Lane::Backward),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(pool.blocks().len() as u32).to_le_bytes())?;
    for b in pool.blocks() {
        for v in [b.start, b.len, b.provenance] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.write_all(&(pool.stored_bytes().len() as u64).to_le_bytes())?;
    w.write_all(pool.stored_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_pool<R: Read>(mut r: R) -> Result<KeyPool, PoolFileError> {
    let mut magic = [0; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(PoolFileError::BadMagic);
    }
    let version = get_u16(&mut r)?;
    if version != VERSION {
        return Err(PoolFileError::Version(version));
    }
    let _flags = get_u16(&mut r)?;
    let a = get_str(&mut r)?;
    let b = get_str(&mut r)?;
    let owner = get_str(&mut r)?;
    let pair = NodePair::new(&a, &b)?;
    if pair.a() != a {
        return Err(PoolFileError::Corrupt("pair names out of order"));
    }
    let consumed = get_u64(&mut r)?;
    let reserved = get_u64(&mut r)?;
    let base = get_u64(&mut r)?;
    let cursors = [get_u64(&mut r)?, get_u64(&mut r)?];
    let block_count = get_u32(&mut r)?;
    let mut blocks = Vec::with_capacity(block_count.min(1 << 16) as usize);
    for _ in 0..block_count {
        blocks.push(KeyBlock {
            start: get_u64(&mut r)?,
            len: get_u64(&mut r)?,
            provenance: get_u64(&mut r)?,
        });
    }
    let len = get_u64(&mut r)?;
    let mut bytes = Vec::new();
    (&mut r).take(len).read_to_end(&mut bytes)?;
    if bytes.len() as u64 != len {
        return Err(PoolFileError::Corrupt("truncated key bytes"));
    }
    let mut rest = [0; 1];
    if r.read(&mut rest)? != 0 {
        return Err(PoolFileError::Corrupt("trailing data"));
    }
    let pool = KeyPool::from_parts(pair, &owner, base, bytes, blocks, cursors)?;
    if pool.consumed() != consumed || pool.reserved() != reserved {
        return Err(PoolFileError::Corrupt("watermarks disagree with lane cursors"));
    }
    Ok(pool)
}
