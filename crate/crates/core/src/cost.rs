//! Back-of-the-envelope space and query-time model for a chain SFA of
//! string length `l`, alphabet size `sigma`, `k` retained strings, `m`
//! chunks and a query DFA with `q` states. Every stored record costs its
//! string bytes plus [`METADATA_BYTES`] (tuple id, location, probability).

pub const METADATA_BYTES: u64 = 16;

pub fn kmap_space(l: u64, k: u64) -> u64 {
    l * k + METADATA_BYTES * k
}

pub fn fullsfa_space(l: u64, sigma: u64) -> u64 {
    l * sigma + METADATA_BYTES * l * sigma
}

pub fn staccato_space(l: u64, m: u64, k: u64) -> u64 {
    l * k + METADATA_BYTES * m * k
}

pub fn kmap_query(l: u64, q: u64, k: u64) -> u64 {
    l * q * k
}

pub fn fullsfa_query(l: u64, q: u64, sigma: u64) -> u64 {
    l * q * sigma + q.pow(3) * l.saturating_sub(1)
}

pub fn staccato_query(l: u64, q: u64, m: u64, k: u64) -> u64 {
    l * q * k + q.pow(3) * m.saturating_sub(1)
}

/// Predicted bytes of a set of stored records given their string lengths.
/// On a chain this reduces to the closed forms above.
pub fn records_space(lengths: impl IntoIterator<Item = usize>) -> u64 {
    lengths.into_iter().map(|l| l as u64 + METADATA_BYTES).sum()
}
