//! Deterministic hashing used by the scripted backend and run identifiers.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Bucket in `[0, 1000)` for the key `"{seed}|{task_id}|{index}"`, with an
/// optional `|{salt}` suffix so that independent draws (agent vs. reflector)
/// for the same sample are decorrelated.
pub fn scripted_bucket(seed: u64, task_id: &str, index: usize, salt: Option<&str>) -> u64 {
    let key = match salt {
        Some(s) => format!("{seed}|{task_id}|{index}|{s}"),
        None => format!("{seed}|{task_id}|{index}"),
    };
    fnv1a64(key.as_bytes()) % 1000
}

/// Whether a draw in `bucket` counts as a success at `rate`.
pub fn bucket_succeeds(bucket: u64, rate: f64) -> bool {
    (bucket as f64) / 1000.0 < rate
}
