//! Single-file archive of fitted statistics.
//!
//! Layout: one ASCII manifest line, then the concatenated FMAT blocks. The
//! manifest is space separated:
//!
//! ```text
//! FSTATS 1 eps_scale=<g17> [basis_source=<within|full>] <name>:<offset>:<rows>:<cols> ...
//! ```
//!
//! Offsets are byte offsets of each block counted from the first byte after
//! the manifest's newline. Blocks are FMAT version 0x02 (`f64` payload) so
//! statistics survive a round trip bit-exactly. Block names: `means`,
//! `cov_within`, `cov_full`, `precision_within`, `precision_full`,
//! `reg_epsilon` (1x1), `reg_epsilon_full` (1x1) and, when a basis was
//! computed, `basis` (k x d) and `basis_eigenvalues` (1 x k).

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::feature_io::{fmat_encoded_len, fmt_g17, read_fmat, write_fmat, FMAT_VERSION_F64};
use crate::gaussian_stats::{CovarianceSource, GaussianStats, ResidualBasis};

const MAGIC: &str = "FSTATS";
const VERSION: &str = "1";

pub fn write_stats_archive(
    path: &Path,
    stats: &GaussianStats,
    basis: Option<&ResidualBasis>,
) -> Result<()> {
    let scalar = |x: f64| DMatrix::from_element(1, 1, x);
    let mut blocks: Vec<(&str, DMatrix<f64>)> = vec![
        ("means", stats.means.clone()),
        ("cov_within", stats.cov_within.clone()),
        ("cov_full", stats.cov_full.clone()),
        ("precision_within", stats.precision_within.clone()),
        ("precision_full", stats.precision_full.clone()),
        ("reg_epsilon", scalar(stats.reg_epsilon)),
        ("reg_epsilon_full", scalar(stats.reg_epsilon_full)),
    ];
    if let Some(b) = basis {
        blocks.push(("basis", b.basis.clone()));
        blocks.push((
            "basis_eigenvalues",
            DMatrix::from_row_slice(1, b.k(), b.eigenvalues.as_slice()),
        ));
    }

    let mut manifest = format!(
        "{MAGIC} {VERSION} eps_scale={}",
        fmt_g17(stats.reg_epsilon_scale)
    );
    if let Some(b) = basis {
        manifest.push_str(&format!(" basis_source={}", b.source));
    }
    let mut offset = 0usize;
    for (name, m) in &blocks {
        manifest.push_str(&format!(" {name}:{offset}:{}:{}", m.nrows(), m.ncols()));
        offset += fmat_encoded_len(m.nrows(), m.ncols(), FMAT_VERSION_F64);
    }
    manifest.push('\n');

    let mut bytes = manifest.into_bytes();
    for (_, m) in &blocks {
        write_fmat(&mut bytes, m, FMAT_VERSION_F64)?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_stats_archive(path: &Path) -> Result<(GaussianStats, Option<ResidualBasis>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing manifest line"))?;
    let manifest =
        std::str::from_utf8(&bytes[..newline]).map_err(|_| bad("manifest is not UTF-8"))?;
    let payload = &bytes[newline + 1..];

    let mut tokens = manifest.split_ascii_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(bad("not a statistics archive"));
    }
    if tokens.next() != Some(VERSION) {
        return Err(bad("unsupported archive version"));
    }

    let mut eps_scale = None;
    let mut source = None;
    let mut blocks: HashMap<String, DMatrix<f64>> = HashMap::new();
    for token in tokens {
        if let Some((key, value)) = token.split_once('=') {
            match key {
                "eps_scale" => {
                    eps_scale = Some(value.parse::<f64>().map_err(|_| bad("bad eps_scale"))?)
                }
                "basis_source" => source = Some(value.parse::<CovarianceSource>()?),
                _ => return Err(bad(&format!("unknown manifest key `{key}`"))),
            }
            continue;
        }
        let parts: Vec<&str> = token.split(':').collect();
        let [name, offset, rows, cols] = parts[..] else {
            return Err(bad(&format!("bad block entry `{token}`")));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(&format!("bad number `{s}`")))
        };
        let (offset, rows, cols) = (parse(offset)?, parse(rows)?, parse(cols)?);
        let end = offset + fmat_encoded_len(rows, cols, FMAT_VERSION_F64);
        if end > payload.len() {
            return Err(bad(&format!("block `{name}` runs past end of file")));
        }
        let m = read_fmat(&mut &payload[offset..end])?;
        if m.nrows() != rows || m.ncols() != cols {
            return Err(bad(&format!(
                "block `{name}` header disagrees with manifest"
            )));
        }
        blocks.insert(name.to_string(), m);
    }

    let mut take = |name: &str| {
        blocks
            .remove(name)
            .ok_or_else(|| bad(&format!("missing block `{name}`")))
    };
    let scalar = |m: DMatrix<f64>| -> Result<f64> {
        if m.shape() != (1, 1) {
            return Err(bad("scalar block must be 1x1"));
        }
        Ok(m[(0, 0)])
    };
    let stats = GaussianStats::from_parts(
        take("means")?,
        take("cov_within")?,
        take("cov_full")?,
        take("precision_within")?,
        take("precision_full")?,
        scalar(take("reg_epsilon")?)?,
        scalar(take("reg_epsilon_full")?)?,
        eps_scale.ok_or_else(|| bad("missing eps_scale"))?,
    )?;

    let basis = match (take("basis"), take("basis_eigenvalues")) {
        (Ok(basis), Ok(eigenvalues)) => {
            if basis.ncols() != stats.dim() || eigenvalues.shape() != (1, basis.nrows()) {
                return Err(bad("basis blocks have inconsistent shapes"));
            }
            Some(ResidualBasis {
                basis,
                eigenvalues: DVector::from_iterator(
                    eigenvalues.ncols(),
                    eigenvalues.iter().copied(),
                ),
                source: source.ok_or_else(|| bad("basis present without basis_source"))?,
            })
        }
        (Err(_), Err(_)) => None,
        _ => return Err(bad("basis and basis_eigenvalues must appear together")),
    };
    Ok((stats, basis))
}
