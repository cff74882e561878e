use serde::{Deserialize, Serialize};

/// Antenna and pilot-length dimensions of one link.
///
/// The channel vector is ordered with transmit antenna fastest, then symbol
/// time, then receive antenna; every module indexes through [`Dims::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub l_t: usize,
    pub l_r: usize,
    pub n: usize,
}

impl Dims {
    pub fn new(l_t: usize, l_r: usize, n: usize) -> Self {
        Dims { l_t, l_r, n }
    }

    /// Flat position of `h[r, t, k]` (all 0-based).
    #[inline]
    pub fn index(&self, r: usize, t: usize, k: usize) -> usize {
        (r * self.n + k) * self.l_t + t
    }

    /// Inverse of [`Dims::index`]: `(r, t, k)`.
    #[inline]
    pub fn split(&self, i: usize) -> (usize, usize, usize) {
        let t = i % self.l_t;
        let k = (i / self.l_t) % self.n;
        let r = i / (self.l_t * self.n);
        (r, t, k)
    }

    /// Length of the vectorized channel, `l_t * l_r * n`.
    pub fn len(&self) -> usize {
        self.l_t * self.l_r * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of the received vector, `n * l_r`.
    pub fn rx_len(&self) -> usize {
        self.n * self.l_r
    }

    /// Position of `y[r, k]` in the received vector.
    #[inline]
    pub fn rx_index(&self, r: usize, k: usize) -> usize {
        r * self.n + k
    }
}
