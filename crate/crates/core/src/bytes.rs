//! Byte-string search helpers shared by labeling and signature matching.

/// Returns true if `needle` occurs as a contiguous subslice of `hay`.
/// An empty needle matches everything.
pub(crate) fn contains_subslice(hay: &[u8], needle: &[u8]) -> bool {
    if needle.is_empty() {
        return true;
    }
    if needle.len() > hay.len() {
        return false;
    }
    hay.windows(needle.len()).any(|w| w == needle)
}

/// Case-insensitive whole-token search: `token` must occur in `hay` (ASCII
/// case folded) with no alphanumeric byte immediately before or after the
/// match. Used for carrier names, which appear in varying case but should
/// not match inside longer identifiers.
pub(crate) fn contains_token_ci(hay: &[u8], token: &[u8]) -> bool {
    if token.is_empty() || token.len() > hay.len() {
        return false;
    }
    'scan: for start in 0..=(hay.len() - token.len()) {
        for (h, t) in hay[start..].iter().zip(token) {
            if !h.eq_ignore_ascii_case(t) {
                continue 'scan;
            }
        }
        let end = start + token.len();
        let before_ok = start == 0 || !hay[start - 1].is_ascii_alphanumeric();
        let after_ok = end == hay.len() || !hay[end].is_ascii_alphanumeric();
        if before_ok && after_ok {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subslice_basics() {
        assert!(contains_subslice(b"abcdef", b"cde"));
        assert!(contains_subslice(b"abcdef", b""));
        assert!(!contains_subslice(b"abc", b"abcd"));
        assert!(!contains_subslice(b"abcdef", b"xyz"));
        assert!(contains_subslice(b"aaa", b"aaa"));
    }

    #[test]
    fn token_ci_respects_boundaries() {
        assert!(contains_token_ci(b"net=docomo&x=1", b"DOCOMO"));
        assert!(contains_token_ci(b"carrier=NTT DOCOMO", b"ntt docomo"));
        // Embedded inside a longer alphanumeric run does not count.
        assert!(!contains_token_ci(b"xdocomoy", b"docomo"));
        assert!(!contains_token_ci(b"docomo1", b"docomo"));
        assert!(contains_token_ci(b"docomo", b"docomo"));
    }
}
