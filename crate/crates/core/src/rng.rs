//! Counter-based seeding so that every random stream is addressable by index.

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 32-byte seed for the stream `(seed, tag, index, attempt)`.
pub fn stream_seed(seed: u64, tag: u64, index: u64, attempt: u64) -> [u8; 32] {
    let mut state = seed;
    for word in [tag, index, attempt] {
        state = splitmix64(&mut state) ^ word;
    }
    let mut out = [0u8; 32];
    for chunk in out.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    out
}

/// Stable 64-bit tag for a label.
pub fn tag(label: &str) -> u64 {
    let mut state = 0x5EED_u64;
    for b in label.bytes() {
        state = splitmix64(&mut state) ^ u64::from(b);
    }
    splitmix64(&mut state)
}
