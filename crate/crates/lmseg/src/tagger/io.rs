//! Versioned binary model format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      6 bytes  "LMEOS1" ("LMEOS" + version digit)
//! header     u32 embed_dim, u32 hidden_dim, u32 vocab_size (incl. PAD/OOV),
//!            u8 lookahead flag, u64 rng seed,
//!            u32 vocab max_size, u32 vocab min_frequency,
//!            f64 learning_rate, u32 max_epochs, u32 patience, f64 clip_norm
//! vocab      per non-reserved token in id order: u32 byte length, UTF-8 bytes
//! params     f32 tensors, row-major, in order: embedding, wz, uz, bz,
//!            wr, ur, br, wc, uc, bc, out_w, out_b
//! trailer    u32 CRC-32 of all prior bytes
//! ```

use std::fs;
use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use thiserror::Error;

use super::{Hyperparams, Params, TaggerModel, Vocabulary, NUM_TAGS};

const MAGIC: &[u8; 5] = b"LMEOS";
const VERSION: u8 = b'1';

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    VersionUnsupported(char),
    #[error("checksum mismatch (file truncated or corrupted)")]
    ChecksumMismatch,
    #[error("malformed model file: {0}")]
    Malformed(String),
}

impl TaggerModel<f32> {
    /// Serialize to `path`. `load(save(m))` reproduces `m` bit-exactly.
    pub fn save(&self, path: &Path) -> Result<(), ModelIoError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.push(VERSION);

        buf.write_u32::<LittleEndian>(self.hp.embed_dim as u32)?;
        buf.write_u32::<LittleEndian>(self.hp.hidden_dim as u32)?;
        buf.write_u32::<LittleEndian>(self.vocab.size() as u32)?;
        buf.push(u8::from(self.lookahead_mode));
        buf.write_u64::<LittleEndian>(self.rng_seed)?;
        buf.write_u32::<LittleEndian>(self.vocab.max_size() as u32)?;
        buf.write_u32::<LittleEndian>(self.vocab.min_frequency() as u32)?;
        buf.write_f64::<LittleEndian>(self.hp.learning_rate)?;
        buf.write_u32::<LittleEndian>(self.hp.max_epochs as u32)?;
        buf.write_u32::<LittleEndian>(self.hp.patience as u32)?;
        buf.write_f64::<LittleEndian>(self.hp.clip_norm)?;

        for token in self.vocab.tokens() {
            let bytes = token.as_bytes();
            buf.write_u32::<LittleEndian>(bytes.len() as u32)?;
            buf.extend_from_slice(bytes);
        }

        let p = &self.params;
        write_mat(&mut buf, &p.embedding)?;
        write_mat(&mut buf, &p.wz)?;
        write_mat(&mut buf, &p.uz)?;
        write_vec(&mut buf, &p.bz)?;
        write_mat(&mut buf, &p.wr)?;
        write_mat(&mut buf, &p.ur)?;
        write_vec(&mut buf, &p.br)?;
        write_mat(&mut buf, &p.wc)?;
        write_mat(&mut buf, &p.uc)?;
        write_vec(&mut buf, &p.bc)?;
        write_mat(&mut buf, &p.out_w)?;
        write_vec(&mut buf, &p.out_b)?;

        let crc = crc32fast::hash(&buf);
        buf.write_u32::<LittleEndian>(crc)?;
        fs::write(path, buf)?;
        Ok(())
    }

    /// Deserialize from `path`.
    pub fn load(path: &Path) -> Result<TaggerModel<f32>, ModelIoError> {
        let data = fs::read(path)?;
        if data.len() >= 6 {
            if &data[..5] != MAGIC {
                return Err(ModelIoError::BadMagic);
            }
            if data[5] != VERSION {
                return Err(ModelIoError::VersionUnsupported(data[5] as char));
            }
        } else if data.len() >= 5 && &data[..5] != MAGIC {
            return Err(ModelIoError::BadMagic);
        } else if data.len() < 5 {
            return Err(ModelIoError::ChecksumMismatch);
        }
        if data.len() < 10 {
            return Err(ModelIoError::ChecksumMismatch);
        }
        let (body, trailer) = data.split_at(data.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(ModelIoError::ChecksumMismatch);
        }

        let mut cur = Cursor::new(&body[6..]);
        let embed_dim = cur.read_u32::<LittleEndian>()? as usize;
        let hidden_dim = cur.read_u32::<LittleEndian>()? as usize;
        let vocab_size = cur.read_u32::<LittleEndian>()? as usize;
        let lookahead = cur.read_u8()? != 0;
        let seed = cur.read_u64::<LittleEndian>()?;
        let vocab_max = cur.read_u32::<LittleEndian>()? as usize;
        let vocab_minf = cur.read_u32::<LittleEndian>()? as u64;
        let learning_rate = cur.read_f64::<LittleEndian>()?;
        let max_epochs = cur.read_u32::<LittleEndian>()? as usize;
        let patience = cur.read_u32::<LittleEndian>()? as usize;
        let clip_norm = cur.read_f64::<LittleEndian>()?;

        if vocab_size < 2 {
            return Err(ModelIoError::Malformed("vocab_size < 2".into()));
        }
        let mut tokens = Vec::with_capacity(vocab_size - 2);
        for _ in 0..vocab_size - 2 {
            let len = cur.read_u32::<LittleEndian>()? as usize;
            let mut bytes = vec![0u8; len];
            std::io::Read::read_exact(&mut cur, &mut bytes)?;
            let token = String::from_utf8(bytes)
                .map_err(|e| ModelIoError::Malformed(format!("vocab token: {e}")))?;
            tokens.push(token);
        }
        let vocab = Vocabulary::from_tokens(tokens, vocab_max, vocab_minf);

        let params = Params {
            embedding: read_mat(&mut cur, vocab_size, embed_dim)?,
            wz: read_mat(&mut cur, hidden_dim, embed_dim)?,
            uz: read_mat(&mut cur, hidden_dim, hidden_dim)?,
            bz: read_vec(&mut cur, hidden_dim)?,
            wr: read_mat(&mut cur, hidden_dim, embed_dim)?,
            ur: read_mat(&mut cur, hidden_dim, hidden_dim)?,
            br: read_vec(&mut cur, hidden_dim)?,
            wc: read_mat(&mut cur, hidden_dim, embed_dim)?,
            uc: read_mat(&mut cur, hidden_dim, hidden_dim)?,
            bc: read_vec(&mut cur, hidden_dim)?,
            out_w: read_mat(&mut cur, NUM_TAGS, hidden_dim)?,
            out_b: read_vec(&mut cur, NUM_TAGS)?,
        };
        if cur.position() as usize != body.len() - 6 {
            return Err(ModelIoError::Malformed("trailing bytes after parameters".into()));
        }

        let hp = Hyperparams {
            embed_dim,
            hidden_dim,
            learning_rate,
            max_epochs,
            patience,
            clip_norm,
        };
        Ok(TaggerModel::from_parts(vocab, hp, lookahead, seed, params))
    }
}

fn write_mat(buf: &mut Vec<u8>, m: &Array2<f32>) -> std::io::Result<()> {
    for v in m.iter() {
        buf.write_f32::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn write_vec(buf: &mut Vec<u8>, v: &Array1<f32>) -> std::io::Result<()> {
    for x in v.iter() {
        buf.write_f32::<LittleEndian>(*x)?;
    }
    Ok(())
}

fn read_mat(cur: &mut Cursor<&[u8]>, rows: usize, cols: usize) -> Result<Array2<f32>, ModelIoError> {
    let mut out = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        out.push(cur.read_f32::<LittleEndian>()?);
    }
    Array2::from_shape_vec((rows, cols), out)
        .map_err(|e| ModelIoError::Malformed(e.to_string()))
}

fn read_vec(cur: &mut Cursor<&[u8]>, len: usize) -> Result<Array1<f32>, ModelIoError> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(cur.read_f32::<LittleEndian>()?);
    }
    Ok(Array1::from_vec(out))
}
