//! Small shared utilities: batch parallelism switch and seed derivation.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SERIAL: AtomicBool = AtomicBool::new(false);

/// Force all batch-parallel loops to run serially. Results are identical
/// either way (each batch element is computed independently); the switch
/// exists for the CLI's `--single-thread` reproduction mode.
pub fn set_single_thread(v: bool) {
    FORCE_SERIAL.store(v, Ordering::SeqCst);
}

pub fn single_thread() -> bool {
    FORCE_SERIAL.load(Ordering::SeqCst)
}

/// Map `f` over `0..n`, in parallel when the `parallel` feature is enabled
/// and single-thread mode is off.
pub fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        if !single_thread() && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// SplitMix64 step; used to derive independent deterministic seeds from a
/// base seed plus a tag without sharing RNG streams.
pub fn mix_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(tag)
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_matches_serial() {
        let par = par_map(17, |i| i * i);
        let ser: Vec<_> = (0..17).map(|i| i * i).collect();
        assert_eq!(par, ser);
    }

    #[test]
    fn mix_seed_spreads_tags() {
        let a = mix_seed(42, 0);
        let b = mix_seed(42, 1);
        assert_ne!(a, b);
        assert_eq!(a, mix_seed(42, 0));
    }
}
