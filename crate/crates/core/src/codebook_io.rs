//! Binary matrix files and learned-codebook sidecar metadata.
//!
//! Layout: 16-byte header (`b"UFMD"`, `u32` rows, `u32` columns, `u32` kind
//! code) followed by the matrix in row-major order as little-endian `f32`
//! real/imaginary pairs.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dictionary::{Dictionary, DictionaryKind};
use crate::error::{Error, Result};
use crate::ksvd::{KsvdConfig, LearnedCodebook};
use crate::linalg::{CMatrix, C64};

pub const MAGIC: [u8; 4] = *b"UFMD";
pub const HEADER_LEN: usize = 16;

pub fn encode_matrix(m: &CMatrix, kind: DictionaryKind) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.nrows()).map_err(|_| Error::Format("row count exceeds u32".into()))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| Error::Format("column count exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    out.extend_from_slice(&kind.code().to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.extend_from_slice(&(z.re as f32).to_le_bytes());
            out.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn read_f32(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Decodes a matrix file. Rejects bad magic, unknown kind codes, truncated or
/// oversized payloads and non-finite entries.
pub fn decode_matrix(bytes: &[u8]) -> Result<(CMatrix, DictionaryKind)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("file is {} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let rows = read_u32(bytes, 4) as usize;
    let cols = read_u32(bytes, 8) as usize;
    let code = read_u32(bytes, 12);
    let kind = DictionaryKind::from_code(code).ok_or_else(|| Error::Format(format!("unknown kind code {code}")))?;
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("{rows}×{cols} overflows")))?;
    if bytes.len() - HEADER_LEN != payload {
        return Err(Error::Format(format!(
            "payload is {} bytes, {rows}×{cols} needs {payload}",
            bytes.len() - HEADER_LEN
        )));
    }
    let mut m = CMatrix::zeros(rows, cols);
    let mut at = HEADER_LEN;
    for i in 0..rows {
        for j in 0..cols {
            let re = read_f32(bytes, at);
            let im = read_f32(bytes, at + 4);
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::Format(format!("non-finite entry at ({i}, {j})")));
            }
            m[(i, j)] = C64::new(re as f64, im as f64);
            at += 8;
        }
    }
    Ok((m, kind))
}

pub fn write_dictionary(path: &Path, dict: &Dictionary) -> Result<()> {
    fs::write(path, encode_matrix(dict.atoms(), dict.kind())?)?;
    Ok(())
}

/// Reads a dictionary; columns are renormalized after the `f32` round trip.
pub fn read_dictionary(path: &Path) -> Result<Dictionary> {
    let (m, kind) = decode_matrix(&fs::read(path)?)?;
    Dictionary::from_matrix(m, kind)
}

/// Path of the metadata file written next to a codebook file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookMeta {
    pub antennas: usize,
    pub config: KsvdConfig,
    pub iterations: usize,
    pub final_nmse: f64,
    pub projected: bool,
}

impl CodebookMeta {
    pub fn from_learned(cb: &LearnedCodebook, projected: bool) -> Self {
        Self {
            antennas: cb.dictionary.num_antennas(),
            config: cb.config.clone(),
            iterations: cb.history.len(),
            final_nmse: cb.final_nmse(),
            projected,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "antennas = {}\natom_count = {}\nsparsity = {}\nmax_iters = {}\nnmse_threshold = {}\nseed = {}\niterations = {}\nfinal_nmse = {}\nprojected = {}\n",
            self.antennas,
            self.config.atom_count,
            self.config.sparsity,
            self.config.max_iters,
            self.config.nmse_threshold,
            self.config.seed,
            self.iterations,
            self.final_nmse,
            self.projected,
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { line: idx + 1, reason: "expected key = value".into() })?;
            fields.insert(k.trim().to_string(), (idx + 1, v.trim().to_string()));
        }
        fn get<T: std::str::FromStr>(
            fields: &std::collections::HashMap<String, (usize, String)>,
            key: &str,
        ) -> Result<T> {
            let (line, v) =
                fields.get(key).ok_or_else(|| Error::Config { line: 0, reason: format!("missing key `{key}`") })?;
            v.parse().map_err(|_| Error::Config { line: *line, reason: format!("bad value for `{key}`: {v}") })
        }
        Ok(Self {
            antennas: get(&fields, "antennas")?,
            config: KsvdConfig {
                atom_count: get(&fields, "atom_count")?,
                sparsity: get(&fields, "sparsity")?,
                max_iters: get(&fields, "max_iters")?,
                nmse_threshold: get(&fields, "nmse_threshold")?,
                seed: get(&fields, "seed")?,
            },
            iterations: get(&fields, "iterations")?,
            final_nmse: get(&fields, "final_nmse")?,
            projected: get(&fields, "projected")?,
        })
    }
}

/// Writes the codebook matrix and its sidecar metadata file.
pub fn write_learned(path: &Path, dict: &Dictionary, meta: &CodebookMeta) -> Result<()> {
    write_dictionary(path, dict)?;
    fs::write(sidecar_path(path), meta.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::dft_codebook;
    use crate::geometry::ArrayGeometry;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = CMatrix::from_fn(2, 3, |i, j| C64::new(i as f64, j as f64));
        let bytes = encode_matrix(&m, DictionaryKind::Polar).unwrap();
        assert_eq!(bytes.len(), 16 + 2 * 3 * 8);
        assert_eq!(&bytes[..4], b"UFMD");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        // row-major: second entry is (0, 1)
        assert_eq!(&bytes[24..28], &0f32.to_le_bytes());
        assert_eq!(&bytes[28..32], &1f32.to_le_bytes());
    }

    #[test]
    fn round_trip_exact_for_f32_values() {
        let m = CMatrix::from_fn(3, 4, |i, j| C64::new(0.5 * i as f64 - 1.0, 0.25 * j as f64));
        let (back, kind) = decode_matrix(&encode_matrix(&m, DictionaryKind::Learned).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(kind, DictionaryKind::Learned);
    }

    #[test]
    fn rejects_malformed() {
        let m = CMatrix::from_element(2, 2, C64::new(1.0, 0.0));
        let good = encode_matrix(&m, DictionaryKind::Dft).unwrap();
        assert!(decode_matrix(&good[..10]).is_err());
        assert!(decode_matrix(&good[..good.len() - 1]).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode_matrix(&bad).is_err());
        let mut bad = good.clone();
        bad[12] = 9;
        assert!(decode_matrix(&bad).is_err());
        let mut bad = good.clone();
        bad[4..8].copy_from_slice(&u32::MAX.to_le_bytes());
        bad[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_matrix(&bad).is_err());
        let mut bad = good;
        bad[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_matrix(&bad).is_err());
    }

    #[test]
    fn dictionary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dft.bin");
        let g = ArrayGeometry::upa(4, 4, 0.005, 0.01).unwrap();
        let d = dft_codebook(&g, 2).unwrap();
        write_dictionary(&path, &d).unwrap();
        let back = read_dictionary(&path).unwrap();
        assert_eq!(back.kind(), DictionaryKind::Dft);
        assert!((back.atoms() - d.atoms()).camax() < 1e-6);
    }

    #[test]
    fn sidecar_round_trip() {
        let meta = CodebookMeta {
            antennas: 64,
            config: KsvdConfig { atom_count: 64, sparsity: 8, max_iters: 30, nmse_threshold: 1e-3, seed: 1_000_042 },
            iterations: 30,
            final_nmse: 0.012345678901234,
            projected: true,
        };
        assert_eq!(CodebookMeta::parse(&meta.to_text()).unwrap(), meta);
        assert_eq!(sidecar_path(Path::new("a/cb.bin")), PathBuf::from("a/cb.bin.meta"));
        assert!(CodebookMeta::parse("antennas = x\n").is_err());
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
            let _ = decode_matrix(&bytes);
        }

        #[test]
        fn encode_decode_within_f32(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = CMatrix::from_fn(rows, cols, |_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
            let (back, _) = decode_matrix(&encode_matrix(&m, DictionaryKind::Wavenumber).unwrap()).unwrap();
            prop_assert!((back - m).camax() < 1e-7);
        }
    }
}
