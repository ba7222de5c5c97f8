//! Binary persistence of hedging tables.
//!
//! Layout, little-endian: magic `ARHMMTAB`, `u32` version, 32-byte key, then `u64` sizes
//! `n, l, ny, ns, ny_cfg`, payoff tag (`u8`, 0 call, 1 put) and strike, rates, the configured
//! and effective `y` grids, the `s` grid, and the tables `g, a, b, h, psi, big_a` row-major
//! in time, regime, `s` node, `y` node order.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::tables::{HedgeTables, ScalarTables};
use super::{HedgeConfig, OptionKind, Payoff};
use crate::error::{ArhmmError, Result};
use crate::model::ArhmmModel;

pub const CACHE_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ARHMMTAB";

fn payoff_tag(p: &Payoff) -> Result<(u8, f64)> {
    match p.vanilla() {
        Some((OptionKind::Call, k)) => Ok((0, k)),
        Some((OptionKind::Put, k)) => Ok((1, k)),
        None => Err(ArhmmError::InvalidInput(
            "custom payoffs cannot be cached".into(),
        )),
    }
}

/// Hex SHA-256 of the model and every table input.
pub fn tables_cache_key(model: &ArhmmModel, cfg: &HedgeConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(model.to_json().as_bytes());
    let (tag, k) = payoff_tag(&cfg.payoff)?;
    h.update([tag]);
    h.update(k.to_le_bytes());
    h.update((cfg.n_steps as u64).to_le_bytes());
    for part in [&cfg.rates, &cfg.y_grid, &cfg.s_grid] {
        h.update((part.len() as u64).to_le_bytes());
        for v in part.iter() {
            h.update(v.to_le_bytes());
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn write_vec<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_f64::<LittleEndian>(*x)?;
    }
    Ok(())
}

fn read_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut v)?;
    Ok(v)
}

/// Writes `tables` tagged with `key` (see [`tables_cache_key`]).
pub fn write_tables<W: Write>(w: &mut W, tables: &HedgeTables, key: &str) -> Result<()> {
    let key_bytes = decode_key(key)?;
    let (tag, k) = payoff_tag(&tables.config.payoff)?;
    let sc = &tables.scalars;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(CACHE_VERSION)?;
    w.write_all(&key_bytes)?;
    for size in [
        sc.n,
        sc.l,
        sc.y_grid.len(),
        tables.s_grid.len(),
        tables.config.y_grid.len(),
    ] {
        w.write_u64::<LittleEndian>(size as u64)?;
    }
    w.write_u8(tag)?;
    w.write_f64::<LittleEndian>(k)?;
    write_vec(w, &tables.config.rates)?;
    write_vec(w, &tables.config.y_grid)?;
    write_vec(w, &sc.y_grid)?;
    write_vec(w, &tables.s_grid)?;
    for part in [&sc.g, &sc.a, &sc.b, &sc.h, &tables.psi, &tables.big_a] {
        write_vec(w, part)?;
    }
    Ok(())
}

fn decode_key(key: &str) -> Result<[u8; 32]> {
    let bad = || ArhmmError::InvalidInput(format!("cache key must be 64 hex digits, got '{key}'"));
    if key.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&key[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

/// Reads tables and the key they were written with.
pub fn read_tables<R: Read>(r: &mut R) -> Result<(HedgeTables, String)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ArhmmError::InvalidInput("not a hedge-table cache".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CACHE_VERSION {
        return Err(ArhmmError::InvalidInput(format!(
            "cache version {version}, expected {CACHE_VERSION}"
        )));
    }
    let mut key = [0u8; 32];
    r.read_exact(&mut key)?;
    let mut sizes = [0usize; 5];
    for s in sizes.iter_mut() {
        *s = usize::try_from(r.read_u64::<LittleEndian>()?)
            .map_err(|_| ArhmmError::InvalidInput("cache size field overflows".into()))?;
    }
    let [n, l, ny, ns, ny_cfg] = sizes;
    if n == 0 || l == 0 || ny == 0 || ns < 2 || n.max(l).max(ny).max(ns).max(ny_cfg) > 1 << 24 {
        return Err(ArhmmError::InvalidInput(
            "implausible table sizes in cache".into(),
        ));
    }
    let tag = r.read_u8()?;
    let strike = r.read_f64::<LittleEndian>()?;
    let payoff = match tag {
        0 => Payoff::call(strike),
        1 => Payoff::put(strike),
        other => {
            return Err(ArhmmError::InvalidInput(format!(
                "unknown payoff tag {other}"
            )))
        }
    };
    let rates = read_vec(r, n)?;
    let y_cfg = read_vec(r, ny_cfg)?;
    let y_eff = read_vec(r, ny)?;
    let s_grid = read_vec(r, ns)?;
    let g = read_vec(r, (n + 1) * l * ny)?;
    let a = read_vec(r, n * l * ny)?;
    let b = read_vec(r, n * l * ny)?;
    let h = read_vec(r, n * l * ny)?;
    let psi = read_vec(r, (n + 1) * l * ns * ny)?;
    let big_a = read_vec(r, n * l * ns * ny)?;
    let config = HedgeConfig {
        n_steps: n,
        rates: rates.clone(),
        payoff,
        y_grid: y_cfg,
        s_grid: s_grid.clone(),
    };
    config.validate()?;
    let scalars = ScalarTables {
        n,
        l,
        y_grid: y_eff,
        rates,
        g,
        a,
        b,
        h,
    };
    let key = key.iter().map(|b| format!("{b:02x}")).collect();
    Ok((
        HedgeTables {
            config,
            scalars,
            s_grid,
            psi,
            big_a,
        },
        key,
    ))
}
