//! Binary design vectors and their canonical integer keys.
//!
//! A design is a `&[u8]` of zeros and ones of length `N`. Its canonical key
//! is `1 + Σ_i d_i · 2^i` (entry 0 is the least significant bit), which gives
//! every design a unique integer used for cache identity, enumeration order,
//! tie-breaking, and scatter-plot axes. Keys fit in a `u64` only for
//! `N ≤ 63`; beyond that the same total order is available through
//! [`canonical_cmp`] without big-integer arithmetic.

use std::cmp::Ordering;

use crate::error::Error;
use crate::Result;

/// Checks that every entry of `design` is 0 or 1.
///
/// # Errors
/// [`Error::Domain`] naming the first offending index.
pub fn validate_design(design: &[u8]) -> Result<()> {
    match design.iter().position(|&b| b > 1) {
        None => Ok(()),
        Some(index) => Err(Error::Domain {
            reason: format!(
                "design entry at index {index} is {}, expected 0 or 1",
                design[index]
            ),
        }),
    }
}

/// Number of active entries `||d||_0`.
#[must_use]
pub fn popcount(design: &[u8]) -> usize {
    design.iter().filter(|&&b| b == 1).count()
}

/// Canonical key `1 + Σ_i d_i · 2^i`, or `None` when the design is longer
/// than 63 entries (the key would overflow a `u64`).
#[must_use]
pub fn canonical_key_u64(design: &[u8]) -> Option<u64> {
    if design.len() > 63 {
        return None;
    }
    let mut bits = 0u64;
    for (i, &d) in design.iter().enumerate() {
        if d == 1 {
            bits |= 1u64 << i;
        }
    }
    Some(bits + 1)
}

/// Total order by canonical key, valid for any dimension.
///
/// Equivalent to comparing `canonical_key_u64` values where those exist:
/// the highest index at which the designs differ decides (a one there is the
/// larger key). Both designs must have the same length.
#[must_use]
pub fn canonical_cmp(a: &[u8], b: &[u8]) -> Ordering {
    debug_assert_eq!(a.len(), b.len(), "designs must have equal dimension");
    for i in (0..a.len().min(b.len())).rev() {
        match a[i].cmp(&b[i]) {
            Ordering::Equal => {}
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Packs a design into little-endian 64-bit words for use as a hash-map key.
#[must_use]
pub fn pack_words(design: &[u8]) -> Box<[u64]> {
    let mut words = vec![0u64; design.len().div_ceil(64)];
    for (i, &d) in design.iter().enumerate() {
        if d == 1 {
            words[i / 64] |= 1u64 << (i % 64);
        }
    }
    words.into_boxed_slice()
}

/// Renders a design as a `01` string with entry 0 first (the framing used by
/// the external-objective line protocol and the sample artifact).
#[must_use]
pub fn bitstring(design: &[u8]) -> String {
    design
        .iter()
        .map(|&d| if d == 1 { '1' } else { '0' })
        .collect()
}

/// Parses a `01` string produced by [`bitstring`].
///
/// # Errors
/// [`Error::Domain`] on any character other than `0` or `1`.
pub fn parse_bitstring(text: &str) -> Result<Vec<u8>> {
    text.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::Domain {
                reason: format!("invalid bitstring character {other:?}"),
            }),
        })
        .collect()
}
