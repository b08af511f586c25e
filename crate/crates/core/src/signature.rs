//! Conjunction signatures: sets of invariant byte tokens extracted from a
//! cluster of records. A record matches a signature iff every token occurs
//! somewhere in its content.
//!
//! Token extraction finds all maximal common substrings of the cluster
//! members' content. Matching and extraction both work on a single
//! concatenated view of a record's content fields, joined with a 0x00
//! separator so that no token can span a field boundary (0x00 never occurs
//! inside HTTP header content, and any candidate containing it is split).
//! HTTP boilerplate that would match nearly everything is filtered by a
//! blocklist.

use std::collections::{BTreeSet, HashMap};

use aho_corasick::AhoCorasick;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bytes::contains_subslice;
use crate::cluster::FlatClusters;
use crate::record::HttpRecord;

/// Default minimum token length in bytes.
pub const DEFAULT_MIN_TOKEN_LEN: usize = 5;

/// Byte that joins content fields in the matching view. Never occurs in
/// HTTP header content, so tokens cannot bridge fields.
const FIELD_SEPARATOR: u8 = 0x00;

/// HTTP boilerplate never allowed as (or composed into) a token. Tokens
/// equal to an entry, or formed entirely by concatenating entries, are
/// dropped.
const GENERIC_TOKEN_BLOCKLIST: &[&[u8]] = &[
    b"GET ",
    b"POST ",
    b" HTTP/1.1",
    b"HTTP/1.0",
    b"Cookie:",
    b"&",
    b"=",
    b"?",
];

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("signature {0} has an empty token set")]
    EmptyTokenSet(String),
    #[error("signature {id} token {index} is not maximal")]
    NonMaximalToken { id: String, index: usize },
    #[error("unparseable signature file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("signature {id}: invalid base64 token: {reason}")]
    BadToken { id: String, reason: String },
}

/// Provenance carried by every signature: the configuration of the run
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureMetadata {
    pub compressor_level: u32,
    pub tau: f64,
    pub min_token_len: usize,
    pub seed: u64,
    pub n_sample: usize,
    /// True for signatures generated from a single-record cluster, whose
    /// tokens are just that record's own fields.
    pub low_generality: bool,
}

/// An invariant-token signature. A record matches iff every token occurs
/// in its content view.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjunctionSignature {
    id: String,
    tokens: BTreeSet<Vec<u8>>,
    source_cluster_size: usize,
    metadata: SignatureMetadata,
}

impl ConjunctionSignature {
    /// Builds a signature, enforcing the invariants: at least one token
    /// and no token a substring of a sibling.
    pub fn new(
        id: impl Into<String>,
        tokens: BTreeSet<Vec<u8>>,
        source_cluster_size: usize,
        metadata: SignatureMetadata,
    ) -> Result<Self, SignatureError> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(SignatureError::EmptyTokenSet(id));
        }
        let list: Vec<&Vec<u8>> = tokens.iter().collect();
        for (i, t) in list.iter().enumerate() {
            let absorbed = list
                .iter()
                .enumerate()
                .any(|(j, u)| i != j && contains_subslice(u, t));
            if absorbed {
                return Err(SignatureError::NonMaximalToken { id, index: i });
            }
        }
        Ok(ConjunctionSignature {
            id,
            tokens,
            source_cluster_size,
            metadata,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[u8]> {
        self.tokens.iter().map(Vec::as_slice)
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn source_cluster_size(&self) -> usize {
        self.source_cluster_size
    }

    pub fn metadata(&self) -> &SignatureMetadata {
        &self.metadata
    }
}

/// The single byte string a record is matched against: request line,
/// cookie, and body joined by the field separator.
fn content_view(record: &HttpRecord) -> Vec<u8> {
    let mut view = Vec::with_capacity(
        record.request_line.len() + record.cookie.len() + record.body.len() + 2,
    );
    view.extend_from_slice(&record.request_line);
    view.push(FIELD_SEPARATOR);
    view.extend_from_slice(&record.cookie);
    view.push(FIELD_SEPARATOR);
    view.extend_from_slice(&record.body);
    view
}

/// True iff every token of `sig` occurs as a substring of the record's
/// content view.
pub fn matches(sig: &ConjunctionSignature, record: &HttpRecord) -> bool {
    let view = content_view(record);
    sig.tokens.iter().all(|t| contains_subslice(&view, t))
}

// ---------------------------------------------------------------------
// Common-substring extraction
// ---------------------------------------------------------------------

/// Suffix automaton over one byte string; used to stream other strings
/// through and read off their longest matches.
struct SuffixAutomaton {
    // (len, link, transitions)
    states: Vec<(usize, isize, HashMap<u8, usize>)>,
    last: usize,
}

impl SuffixAutomaton {
    fn build(s: &[u8]) -> Self {
        let mut sam = SuffixAutomaton {
            states: vec![(0, -1, HashMap::new())],
            last: 0,
        };
        for &c in s {
            sam.extend(c);
        }
        sam
    }

    fn extend(&mut self, c: u8) {
        let cur = self.states.len();
        let last_len = self.states[self.last].0;
        self.states.push((last_len + 1, 0, HashMap::new()));
        let mut p = self.last as isize;
        while p >= 0 && !self.states[p as usize].2.contains_key(&c) {
            self.states[p as usize].2.insert(c, cur);
            p = self.states[p as usize].1;
        }
        if p >= 0 {
            let q = self.states[p as usize].2[&c];
            if self.states[p as usize].0 + 1 == self.states[q].0 {
                self.states[cur].1 = q as isize;
            } else {
                let clone = self.states.len();
                let mut cloned = self.states[q].clone();
                cloned.0 = self.states[p as usize].0 + 1;
                self.states.push(cloned);
                while p >= 0 && self.states[p as usize].2.get(&c) == Some(&q) {
                    self.states[p as usize].2.insert(c, clone);
                    p = self.states[p as usize].1;
                }
                self.states[q].1 = clone as isize;
                self.states[cur].1 = clone as isize;
            }
        }
        self.last = cur;
    }

    /// For each position k of `t`, the length of the longest suffix of
    /// t[..=k] that occurs in the automaton's source string.
    fn match_lengths(&self, t: &[u8]) -> Vec<usize> {
        let mut out = Vec::with_capacity(t.len());
        let mut state = 0usize;
        let mut len = 0usize;
        for &c in t {
            loop {
                if let Some(&next) = self.states[state].2.get(&c) {
                    state = next;
                    len += 1;
                    break;
                }
                let link = self.states[state].1;
                if link < 0 {
                    len = 0;
                    break;
                }
                state = link as usize;
                len = self.states[state].0;
            }
            out.push(len);
        }
        out
    }
}

/// All maximal common substrings of `t` and the automaton's source: pieces
/// that occur in both and cannot be extended in either direction.
fn maximal_common_pieces(t: &[u8], sam: &SuffixAutomaton) -> Vec<Vec<u8>> {
    let lengths = sam.match_lengths(t);
    let mut pieces = Vec::new();
    for (k, &len) in lengths.iter().enumerate() {
        if len == 0 {
            continue;
        }
        let extendable_right = k + 1 < t.len() && lengths[k + 1] == len + 1;
        if !extendable_right {
            pieces.push(t[k + 1 - len..=k].to_vec());
        }
    }
    pieces
}

/// Drops duplicates and any string contained in another; the survivors are
/// sorted.
fn maximal_set(mut tokens: Vec<Vec<u8>>) -> Vec<Vec<u8>> {
    tokens.sort();
    tokens.dedup();
    let keep: Vec<Vec<u8>> = tokens
        .iter()
        .filter(|t| {
            !tokens
                .iter()
                .any(|u| u.len() > t.len() && contains_subslice(u, t))
        })
        .cloned()
        .collect();
    keep
}

/// All maximal byte strings of length >= `min_len` occurring in every
/// element of `contents`. Maximal: no returned token is a substring of
/// another. Runs iterative refinement: the token set starts as the first
/// string and is intersected with each following string in turn.
pub fn common_tokens(contents: &[&[u8]], min_len: usize) -> Vec<Vec<u8>> {
    assert!(!contents.is_empty(), "contents must be non-empty");
    assert!(min_len >= 1, "min_len must be >= 1");
    if contents[0].len() < min_len {
        return Vec::new();
    }
    let mut tokens: Vec<Vec<u8>> = vec![contents[0].to_vec()];
    for s in &contents[1..] {
        if s.len() < min_len {
            return Vec::new();
        }
        let sam = SuffixAutomaton::build(s);
        let mut next = Vec::new();
        for t in &tokens {
            for piece in maximal_common_pieces(t, &sam) {
                if piece.len() >= min_len {
                    next.push(piece);
                }
            }
        }
        tokens = maximal_set(next);
        if tokens.is_empty() {
            return tokens;
        }
    }
    tokens
}

/// True if the token is blocklisted boilerplate: equal to a blocklist
/// entry or a concatenation of entries and nothing else.
fn is_generic_token(token: &[u8]) -> bool {
    let mut reachable = vec![false; token.len() + 1];
    reachable[0] = true;
    for end in 1..=token.len() {
        for entry in GENERIC_TOKEN_BLOCKLIST {
            if entry.len() <= end
                && reachable[end - entry.len()]
                && &token[end - entry.len()..end] == *entry
            {
                reachable[end] = true;
                break;
            }
        }
    }
    reachable[token.len()]
}

/// Splits candidate tokens on the field separator, applies the length
/// floor, maximality, and the blocklist.
fn finalize_tokens(candidates: Vec<Vec<u8>>, min_len: usize) -> BTreeSet<Vec<u8>> {
    let split: Vec<Vec<u8>> = candidates
        .iter()
        .flat_map(|t| t.split(|&b| b == FIELD_SEPARATOR))
        .filter(|piece| piece.len() >= min_len)
        .map(<[u8]>::to_vec)
        .collect();
    maximal_set(split)
        .into_iter()
        .filter(|t| !is_generic_token(t))
        .collect()
}

/// Extracts one signature per cluster: the maximal common substrings of
/// the members' content views, filtered by length and blocklist. Clusters
/// whose tokens are all filtered away yield no signature and are logged.
/// `base` supplies the provenance metadata, including the token length
/// floor.
pub fn generate_signatures(
    clusters: &FlatClusters,
    records: &[HttpRecord],
    base: &SignatureMetadata,
) -> Vec<ConjunctionSignature> {
    let mut signatures = Vec::new();
    for (index, cluster) in clusters.clusters.iter().enumerate() {
        let views: Vec<Vec<u8>> = cluster.iter().map(|&i| content_view(&records[i])).collect();
        let view_refs: Vec<&[u8]> = views.iter().map(Vec::as_slice).collect();
        let candidates = common_tokens(&view_refs, base.min_token_len);
        let tokens = finalize_tokens(candidates, base.min_token_len);
        if tokens.is_empty() {
            log::warn!(
                "cluster {index} ({} records) yielded no usable tokens; dropped",
                cluster.len()
            );
            continue;
        }
        let metadata = SignatureMetadata {
            low_generality: cluster.len() == 1,
            ..base.clone()
        };
        let sig = ConjunctionSignature::new(
            format!("sig-{index:04}"),
            tokens,
            cluster.len(),
            metadata,
        )
        .expect("generated token set is non-empty and maximal");
        signatures.push(sig);
    }
    signatures
}

/// Per-record verdicts: the sorted ids of every signature the record
/// matches. Multi-pattern matching is accelerated with an Aho-Corasick
/// automaton over the union of tokens; the result equals the naive
/// per-signature scan.
pub fn detect(sigs: &[ConjunctionSignature], records: &[HttpRecord]) -> Vec<Vec<String>> {
    if sigs.is_empty() {
        return vec![Vec::new(); records.len()];
    }
    // Dedup tokens across signatures; each signature keeps pattern ids.
    let mut pattern_ids: HashMap<&[u8], usize> = HashMap::new();
    let mut patterns: Vec<&[u8]> = Vec::new();
    let sig_patterns: Vec<Vec<usize>> = sigs
        .iter()
        .map(|sig| {
            sig.tokens()
                .map(|t| {
                    *pattern_ids.entry(t).or_insert_with(|| {
                        patterns.push(t);
                        patterns.len() - 1
                    })
                })
                .collect()
        })
        .collect();
    let automaton = AhoCorasick::new(&patterns).expect("token automaton construction");

    records
        .par_iter()
        .map(|record| {
            let view = content_view(record);
            let mut present = vec![false; patterns.len()];
            for hit in automaton.find_overlapping_iter(&view) {
                present[hit.pattern().as_usize()] = true;
            }
            let mut ids: Vec<String> = sigs
                .iter()
                .zip(&sig_patterns)
                .filter(|(_, pats)| pats.iter().all(|&p| present[p]))
                .map(|(sig, _)| sig.id.clone())
                .collect();
            ids.sort();
            ids
        })
        .collect()
}

// ---------------------------------------------------------------------
// Signature file format
// ---------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireSignature {
    id: String,
    tokens: Vec<String>,
    source_cluster_size: usize,
    metadata: SignatureMetadata,
}

/// Serializes signatures as a JSON array, ordered by id, tokens base64.
pub fn write_signatures(sigs: &[ConjunctionSignature]) -> String {
    let mut sorted: Vec<&ConjunctionSignature> = sigs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let wire: Vec<WireSignature> = sorted
        .iter()
        .map(|s| WireSignature {
            id: s.id.clone(),
            tokens: s.tokens.iter().map(|t| BASE64.encode(t)).collect(),
            source_cluster_size: s.source_cluster_size,
            metadata: s.metadata.clone(),
        })
        .collect();
    let mut out = serde_json::to_string_pretty(&wire).expect("signature serialization");
    out.push('\n');
    out
}

/// Parses a signature file, re-validating every signature's invariants.
pub fn read_signatures(input: &str) -> Result<Vec<ConjunctionSignature>, SignatureError> {
    let wire: Vec<WireSignature> = serde_json::from_str(input)?;
    wire.into_iter()
        .map(|w| {
            let tokens: BTreeSet<Vec<u8>> = w
                .tokens
                .iter()
                .map(|t| {
                    BASE64.decode(t).map_err(|e| SignatureError::BadToken {
                        id: w.id.clone(),
                        reason: e.to_string(),
                    })
                })
                .collect::<Result<_, _>>()?;
            ConjunctionSignature::new(w.id, tokens, w.source_cluster_size, w.metadata)
        })
        .collect()
}
