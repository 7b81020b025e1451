use std::hash::Hasher;

use fnv::FnvHasher;

/// FNV-1a 64 over explicit little-endian encodings, so the digest does not
/// depend on the platform's native layout.
pub(crate) struct StateHasher(FnvHasher);

impl StateHasher {
    pub fn new() -> Self {
        StateHasher(FnvHasher::default())
    }

    pub fn u64(&mut self, x: u64) {
        self.0.write(&x.to_le_bytes());
    }

    pub fn usize(&mut self, x: usize) {
        self.u64(x as u64);
    }

    pub fn f64(&mut self, x: f64) {
        self.u64(x.to_bits());
    }

    pub fn bool(&mut self, x: bool) {
        self.0.write(&[x as u8]);
    }

    pub fn opt_usize(&mut self, x: Option<usize>) {
        match x {
            Some(v) => {
                self.bool(true);
                self.usize(v);
            }
            None => self.bool(false),
        }
    }

    pub fn opt_f64(&mut self, x: Option<f64>) {
        match x {
            Some(v) => {
                self.bool(true);
                self.f64(v);
            }
            None => self.bool(false),
        }
    }

    pub fn finish(&self) -> u64 {
        self.0.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::fnv1a;

    #[test]
    fn matches_reference_fnv() {
        let mut h = StateHasher::new();
        h.u64(0x0102030405060708);
        h.bool(true);
        let bytes = [8u8, 7, 6, 5, 4, 3, 2, 1, 1];
        assert_eq!(h.finish(), fnv1a(&bytes));
    }
}
