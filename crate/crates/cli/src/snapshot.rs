//! Binary snapshot format shared by traces and grids.
//!
//! Layout (all little-endian):
//!   magic  `SGDT` (4 bytes)
//!   version u8 = 1
//!   n_arrays u8
//!   per array: rank u8, then `rank` u64 dims, then the f64 payload
//!   (row-major).
//!
//! A trace writes two arrays: `times [n]` and `positions [n, M, d]`.
//! A grid writes one array per axis of cell centers plus `values [n0(, n1)]`.

use sgdlab_core::fokker_planck::GridDensity;
use sgdlab_core::simulate::EnsembleTrace;

pub const MAGIC: &[u8; 4] = b"SGDT";
pub const VERSION: u8 = 1;

pub struct ArrayView<'a> {
    pub dims: Vec<u64>,
    pub data: &'a [f64],
}

pub fn encode(arrays: &[ArrayView]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(arrays.len() as u8);
    for a in arrays {
        out.push(a.dims.len() as u8);
        for d in &a.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in a.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decode a snapshot (used by tests and downstream consumers).
pub fn decode(bytes: &[u8]) -> Result<Vec<(Vec<u64>, Vec<f64>)>, String> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err("bad magic".into());
    }
    if bytes[4] != VERSION {
        return Err(format!("unsupported version {}", bytes[4]));
    }
    let n_arrays = bytes[5] as usize;
    let mut pos = 6usize;
    let mut out = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let rank = *bytes.get(pos).ok_or("truncated rank")? as usize;
        pos += 1;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let end = pos + 8;
            let b: [u8; 8] = bytes.get(pos..end).ok_or("truncated dims")?.try_into().unwrap();
            dims.push(u64::from_le_bytes(b));
            pos = end;
        }
        let count: u64 = dims.iter().product();
        let mut data = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let end = pos + 8;
            let b: [u8; 8] = bytes.get(pos..end).ok_or("truncated data")?.try_into().unwrap();
            data.push(f64::from_le_bytes(b));
            pos = end;
        }
        out.push((dims, data));
    }
    Ok(out)
}

pub fn encode_trace(trace: &EnsembleTrace) -> Vec<u8> {
    let n = trace.times.len() as u64;
    let flat: Vec<f64> = trace.snapshots.iter().flatten().copied().collect();
    encode(&[
        ArrayView {
            dims: vec![n],
            data: &trace.times,
        },
        ArrayView {
            dims: vec![n, trace.n_traj as u64, trace.dim as u64],
            data: &flat,
        },
    ])
}

pub fn encode_grid(grid: &GridDensity) -> Vec<u8> {
    let centers: Vec<Vec<f64>> = grid
        .axes
        .iter()
        .map(|a| (0..a.n).map(|i| a.center(i)).collect())
        .collect();
    let mut arrays: Vec<ArrayView> = centers
        .iter()
        .map(|c| ArrayView {
            dims: vec![c.len() as u64],
            data: c,
        })
        .collect();
    let dims: Vec<u64> = grid.axes.iter().map(|a| a.n as u64).collect();
    arrays.push(ArrayView {
        dims,
        data: &grid.values,
    });
    encode(&arrays)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_dims_and_bits() {
        let data = vec![1.0, -2.5, 3.75, f64::MIN_POSITIVE, 0.1 + 0.2];
        let bytes = encode(&[ArrayView {
            dims: vec![5],
            data: &data,
        }]);
        assert_eq!(&bytes[..4], b"SGDT");
        assert_eq!(bytes[4], 1);
        let decoded = decode(&bytes).unwrap();
        assert_eq!(decoded.len(), 1);
        assert_eq!(decoded[0].0, vec![5]);
        for (a, b) in decoded[0].1.iter().zip(&data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
