//! Counter-based fan-out of the master seed.

/// Named streams; the counter value is part of the output schema, so never
/// renumber an existing entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Initial = 0,
    Phase = 1,
    MonteCarlo = 2,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Initial, Stream::Phase, Stream::MonteCarlo];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Initial => "initial",
            Stream::Phase => "phase",
            Stream::MonteCarlo => "monte_carlo",
        }
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(master + (stream + 1)·φ)`: the `stream`-th output of a
/// splitmix sequence started at `master`.
pub fn derive(master: u64, stream: Stream) -> u64 {
    splitmix64(master.wrapping_add((stream as u64).wrapping_mul(GOLDEN)))
}

/// `key=value` pairs for CSV headers and metadata.
pub fn describe(master: u64) -> Vec<(String, u64)> {
    let mut out = vec![("master_seed".to_string(), master)];
    out.extend(Stream::ALL.iter().map(|s| (format!("seed.{}", s.name()), derive(master, *s))));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_splitmix_sequence() {
        // first outputs of splitmix64 seeded with 0
        assert_eq!(derive(0, Stream::Initial), 0xE220_A839_7B1D_CDAF);
        assert_eq!(derive(0, Stream::Phase), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(derive(0, Stream::MonteCarlo), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn streams_differ() {
        for m in [0u64, 1, 42, u64::MAX] {
            let s: Vec<u64> = Stream::ALL.iter().map(|s| derive(m, *s)).collect();
            assert!(s[0] != s[1] && s[1] != s[2] && s[0] != s[2]);
        }
    }
}
