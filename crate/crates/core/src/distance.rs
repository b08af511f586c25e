//! Pairwise record distances: destination distance (IP prefix, port, host
//! edit distance), compression-based content distance, and their sum.
//!
//! Every component is a true distance: 0 for identical inputs, growing with
//! dissimilarity. Each component is clamped to [0, 1], so the destination
//! and content parts each lie in [0, 3] and the combined packet distance in
//! [0, 6].
//!
//! Content similarity uses the normalized compression distance
//!
//! ```text
//! ncd(x, y) = (C(xy) - min(C(x), C(y))) / max(C(x), C(y))
//! ```
//!
//! where `C(s)` is the byte length of `s` compressed with DEFLATE at a
//! configurable level. Real compressors give a small nonzero self-distance
//! and can push the ratio slightly past 1, hence the clamp. The
//! concatenation is always compressed first-argument-first, so `ncd(x, y)`
//! and `ncd(y, x)` may differ by a few compressed bytes; callers that need
//! symmetry should fix an argument order, as `distance_matrix` does.

use std::io::Write as _;
use std::net::Ipv4Addr;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use rayon::prelude::*;
use thiserror::Error;

use crate::record::HttpRecord;

/// Default DEFLATE level for content distances (maximum compression).
pub const DEFAULT_COMPRESSOR_LEVEL: u32 = 9;

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("compressor failure: {0}")]
    Compressor(#[from] std::io::Error),
}

/// 1 - lmatch/32, where lmatch counts identical leading bits. 0 for equal
/// addresses, 1 when the first bit already differs.
pub fn ip_distance(a: Ipv4Addr, b: Ipv4Addr) -> f64 {
    let lmatch = (u32::from(a) ^ u32::from(b)).leading_zeros();
    1.0 - f64::from(lmatch) / 32.0
}

/// 0 on matching ports, 1 otherwise.
pub fn port_distance(a: u16, b: u16) -> f64 {
    if a == b {
        0.0
    } else {
        1.0
    }
}

/// Levenshtein distance normalized by the longer input's length.
pub fn host_distance(a: &str, b: &str) -> f64 {
    debug_assert!(!a.is_empty() && !b.is_empty());
    if a == b {
        return 0.0;
    }
    let max_len = a.len().max(b.len());
    levenshtein(a.as_bytes(), b.as_bytes()) as f64 / max_len as f64
}

/// Two-row edit-distance DP over bytes.
fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sum of IP, port, and host distances. In [0, 3]; exactly 0 for identical
/// destination triples.
pub fn dest_distance(p: &HttpRecord, q: &HttpRecord) -> f64 {
    ip_distance(p.dst_ip, q.dst_ip)
        + port_distance(p.dst_port, q.dst_port)
        + host_distance(&p.host, &q.host)
}

fn compressed_len(data: &[u8], level: u32) -> Result<usize, DistanceError> {
    let mut encoder = DeflateEncoder::new(Vec::new(), Compression::new(level));
    encoder.write_all(data)?;
    Ok(encoder.finish()?.len())
}

fn ncd_from_lengths(cx: usize, cy: usize, cxy: usize) -> f64 {
    let min = cx.min(cy) as f64;
    let max = cx.max(cy) as f64;
    ((cxy as f64 - min) / max).clamp(0.0, 1.0)
}

/// Normalized compression distance over raw bytes, clamped to [0, 1].
///
/// Empty components are decided without compressing: two empty strings are
/// identical (0) and an empty string shares nothing with a non-empty one
/// (1). The concatenation is compressed with `x` first.
pub fn ncd(x: &[u8], y: &[u8], level: u32) -> Result<f64, DistanceError> {
    match (x.is_empty(), y.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(1.0),
        (false, false) => {}
    }
    let cx = compressed_len(x, level)?;
    let cy = compressed_len(y, level)?;
    let mut xy = Vec::with_capacity(x.len() + y.len());
    xy.extend_from_slice(x);
    xy.extend_from_slice(y);
    let cxy = compressed_len(&xy, level)?;
    Ok(ncd_from_lengths(cx, cy, cxy))
}

fn ncd_cached(
    x: &[u8],
    y: &[u8],
    cx: usize,
    cy: usize,
    level: u32,
) -> Result<f64, DistanceError> {
    match (x.is_empty(), y.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(1.0),
        (false, false) => {}
    }
    let mut xy = Vec::with_capacity(x.len() + y.len());
    xy.extend_from_slice(x);
    xy.extend_from_slice(y);
    let cxy = compressed_len(&xy, level)?;
    Ok(ncd_from_lengths(cx, cy, cxy))
}

/// NCD over request line, cookie, and body. In [0, 3].
pub fn content_distance(
    p: &HttpRecord,
    q: &HttpRecord,
    level: u32,
) -> Result<f64, DistanceError> {
    Ok(ncd(&p.request_line, &q.request_line, level)?
        + ncd(&p.cookie, &q.cookie, level)?
        + ncd(&p.body, &q.body, level)?)
}

/// Destination distance plus content distance. In [0, 6].
pub fn packet_distance(
    p: &HttpRecord,
    q: &HttpRecord,
    level: u32,
) -> Result<f64, DistanceError> {
    Ok(dest_distance(p, q) + content_distance(p, q, level)?)
}

/// Symmetric pairwise distance matrix with zero diagonal, stored condensed
/// (one entry per unordered pair).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps a condensed upper triangle, row-major: pairs (0,1), (0,2), ...
    /// (n-2,n-1). Panics if the length does not match.
    pub fn from_condensed(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            n * n.saturating_sub(1) / 2,
            "condensed length must be n*(n-1)/2"
        );
        assert!(
            values.iter().all(|v| v.is_finite() && *v >= 0.0),
            "distances must be finite and non-negative"
        );
        DistanceMatrix { n, values }
    }

    /// Number of records the matrix covers.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn condensed_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        // Offset of row i in the condensed triangle, plus the column.
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Distance between records `i` and `j`; 0 on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index out of bounds");
        if i == j {
            return 0.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.values[self.condensed_index(i, j)]
    }
}

/// Packet distance over all unordered record pairs. Deterministic for a
/// fixed input order and compressor level: pair (i, j) with i < j always
/// compresses record i's bytes first. Pairs are evaluated in parallel into
/// pre-assigned cells.
pub fn distance_matrix(
    records: &[HttpRecord],
    level: u32,
) -> Result<DistanceMatrix, DistanceError> {
    assert!(!records.is_empty(), "record list must be non-empty");
    let n = records.len();
    // Compress each record's components once; pairs then only cost the
    // concatenation compression.
    let component_lens: Vec<[usize; 3]> = records
        .par_iter()
        .map(|r| {
            let len_of = |data: &[u8]| -> Result<usize, DistanceError> {
                if data.is_empty() {
                    Ok(0)
                } else {
                    compressed_len(data, level)
                }
            };
            Ok([
                len_of(&r.request_line)?,
                len_of(&r.cookie)?,
                len_of(&r.body)?,
            ])
        })
        .collect::<Result<_, DistanceError>>()?;

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (p, q) = (&records[i], &records[j]);
            let (cp, cq) = (&component_lens[i], &component_lens[j]);
            let content = ncd_cached(&p.request_line, &q.request_line, cp[0], cq[0], level)?
                + ncd_cached(&p.cookie, &q.cookie, cp[1], cq[1], level)?
                + ncd_cached(&p.body, &q.body, cp[2], cq[2], level)?;
            Ok(dest_distance(p, q) + content)
        })
        .collect::<Result<_, DistanceError>>()?;
    Ok(DistanceMatrix { n, values })
}
