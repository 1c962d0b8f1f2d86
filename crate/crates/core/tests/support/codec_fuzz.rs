//! Randomized round-trip and mutation fuzzing for the packet codec. Shared
//! with the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wksp_core::packet::arbitrary;
use wksp_core::{DataPacket, InterestPacket, Packet};

/// Encodes and decodes `count` random packets, half Data and half Interest.
pub fn roundtrip(count: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..count {
        if k % 2 == 0 {
            let d = arbitrary::data(&mut rng);
            if DataPacket::decode(&d.encode()).as_ref() != Ok(&d) {
                return Err(format!("data packet {k} did not survive: {}", d.name));
            }
        } else {
            let i = arbitrary::interest(&mut rng);
            if InterestPacket::decode(&i.encode()).as_ref() != Ok(&i) {
                return Err(format!("interest {k} did not survive: {}", i.name));
            }
        }
    }
    Ok(())
}

/// Feeds `count` mutated encodings to the decoder. A panic fails the
/// caller; anything accepted must re-encode consistently. Returns how many
/// inputs were accepted.
pub fn mutation_fuzz(count: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<Vec<u8>> = (0..64)
        .map(|k| if k % 2 == 0 { arbitrary::data(&mut rng).encode() } else { arbitrary::interest(&mut rng).encode() })
        .collect();
    let mut accepted = 0;
    for _ in 0..count {
        let mut b = seeds[rng.gen_range(0..seeds.len())].clone();
        for _ in 0..rng.gen_range(1..4) {
            match rng.gen_range(0..4) {
                0 if !b.is_empty() => {
                    let i = rng.gen_range(0..b.len());
                    b[i] ^= 1 << rng.gen_range(0..8);
                }
                1 if !b.is_empty() => b.truncate(rng.gen_range(0..b.len())),
                2 => {
                    let i = rng.gen_range(0..=b.len());
                    b.insert(i, rng.gen());
                }
                _ => {
                    let i = rng.gen_range(0..=b.len());
                    b.splice(i..i, [0xFD, 0xFF, 0xFF]);
                }
            }
        }
        if let Ok(p) = Packet::decode(&b) {
            accepted += 1;
            // Anything accepted must re-encode to something that decodes the same.
            if Packet::decode(&p.encode()).as_ref() != Ok(&p) {
                return Err(format!("accepted mutant {} does not re-encode consistently", p.name()));
            }
        }
    }
    Ok(accepted)
}
