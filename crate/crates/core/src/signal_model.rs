//! Uplink signal model `y = Hs + v`.
//!
//! Channel entries are i.i.d. CN(0, 1), symbols are drawn from unit-energy
//! Gray-mapped square QAM, and the SNR is the average receive power per
//! antenna over the noise variance. With unit-variance entries and unit-power
//! symbols the receive power per antenna is `K`, so `σ² = K / SNR`.

use crate::rng::{self, complex_gaussian};
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};

/// `M × K` channel matrix stored row-major; row `n` is the local CSI `h_nᵀ`
/// of antenna `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    m: usize,
    k: usize,
    entries: Vec<C64>,
}

impl ChannelMatrix {
    pub fn new(m: usize, k: usize, entries: Vec<C64>) -> Result<Self> {
        if k == 0 || m < k {
            return Err(Error::Dimension(format!(
                "channel must satisfy M >= K >= 1, got M = {m}, K = {k}"
            )));
        }
        if entries.len() != m * k {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {m}x{k} channel, got {}",
                m * k,
                entries.len()
            )));
        }
        if !crate::linalg::all_finite(&entries) {
            return Err(Error::NonFinite("channel matrix"));
        }
        Ok(Self { m, k, entries })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension("ragged channel rows".into()));
        }
        Self::new(rows.len(), k, rows.concat())
    }

    pub fn identity(k: usize) -> Result<Self> {
        let mut entries = vec![C64::new(0.0, 0.0); k * k];
        for i in 0..k {
            entries[i * k + i] = C64::new(1.0, 0.0);
        }
        Self::new(k, k, entries)
    }

    pub fn m_antennas(&self) -> usize {
        self.m
    }

    pub fn k_users(&self) -> usize {
        self.k
    }

    pub fn row(&self, n: usize) -> &[C64] {
        &self.entries[n * self.k..(n + 1) * self.k]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[C64]> + '_ {
        self.entries.chunks_exact(self.k)
    }

    pub fn get(&self, n: usize, j: usize) -> C64 {
        self.entries[n * self.k + j]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.entries
    }

    /// `H s`.
    pub fn apply(&self, s: &[C64]) -> Vec<C64> {
        assert_eq!(s.len(), self.k);
        self.rows()
            .map(|row| row.iter().zip(s).map(|(h, x)| h * x).sum())
            .collect()
    }

    /// Rows `range` as a new matrix (antennas `range` of the array).
    pub fn sub_array(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let m = range.len();
        Self::new(
            m,
            self.k,
            self.entries[range.start * self.k..range.end * self.k].to_vec(),
        )
    }

    /// Stacks `other` below `self`.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if other.k != self.k {
            return Err(Error::UserCountMismatch {
                expected: self.k,
                got: other.k,
            });
        }
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Self::new(self.m + other.m, self.k, entries)
    }

    /// Reorders antennas: row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.m {
            return Err(Error::Dimension("permutation length".into()));
        }
        let entries = perm
            .iter()
            .flat_map(|&p| self.row(p).iter().copied())
            .collect();
        Self::new(self.m, self.k, entries)
    }
}

/// Draws an `m × k` block-fading Rayleigh channel with CN(0, 1) entries.
pub fn generate_rayleigh_channel(m: usize, k: usize, rng_seed: u64) -> Result<ChannelMatrix> {
    if m == 0 || k == 0 {
        return Err(Error::Dimension(format!(
            "channel needs at least one antenna and one user, got M = {m}, K = {k}"
        )));
    }
    let mut rng = rng::rng_from_seed(rng_seed);
    let entries = (0..m * k)
        .map(|_| complex_gaussian(&mut rng, 1.0))
        .collect();
    ChannelMatrix::new(m, k, entries)
}

/// Gray-mapped square QAM with unit average symbol energy.
///
/// Point `i` carries label `i` (MSB first). The first half of the label bits
/// selects the in-phase level and the second half the quadrature level, each
/// through a binary-reflected Gray code.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<C64>,
}

impl Constellation {
    pub fn new(order: usize) -> Result<Self> {
        let bits_per_symbol = match order {
            4 => 2,
            16 => 4,
            64 => 6,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unsupported constellation order {order} (expected 4, 16 or 64)"
                )))
            }
        };
        let half = bits_per_symbol / 2;
        let levels = 1usize << half;
        let energy = 2.0 * ((levels * levels) as f64 - 1.0) / 3.0;
        let scale = energy.sqrt().recip();
        let amplitude = |bits: usize| {
            let level = gray_decode(bits);
            (2.0 * level as f64 - (levels as f64 - 1.0)) * scale
        };
        let points = (0..order)
            .map(|label| {
                let i_bits = label >> half;
                let q_bits = label & (levels - 1);
                C64::new(amplitude(i_bits), amplitude(q_bits))
            })
            .collect();
        Ok(Self {
            order,
            bits_per_symbol,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    /// Bit label of point `index`, MSB first.
    pub fn label(&self, index: usize) -> Vec<u8> {
        (0..self.bits_per_symbol)
            .rev()
            .map(|b| ((index >> b) & 1) as u8)
            .collect()
    }

    /// Index of the nearest point; ties go to the lower index.
    pub fn nearest(&self, x: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (x - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

fn gray_decode(mut g: usize) -> usize {
    let mut n = g;
    while g > 1 {
        g >>= 1;
        n ^= g;
    }
    n
}

/// Symbols of all `K` users for one resource element, with the bits they carry.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSymbolVector {
    pub symbols: Vec<C64>,
    pub source_bits: Vec<u8>,
}

/// Maps `bits` onto `k` symbols; symbol `i` carries bits `[i·b, (i+1)·b)`.
pub fn modulate(bits: &[u8], c: &Constellation, k: usize) -> Result<UserSymbolVector> {
    let b = c.bits_per_symbol();
    if bits.len() != k * b {
        return Err(Error::Dimension(format!(
            "{k} users of {}-QAM need {} bits, got {}",
            c.order(),
            k * b,
            bits.len()
        )));
    }
    if bits.iter().any(|&x| x > 1) {
        return Err(Error::InvalidParameter("bits must be 0 or 1".into()));
    }
    let symbols = bits
        .chunks_exact(b)
        .map(|chunk| {
            let index = chunk.iter().fold(0usize, |acc, &x| (acc << 1) | x as usize);
            c.points()[index]
        })
        .collect();
    Ok(UserSymbolVector {
        symbols,
        source_bits: bits.to_vec(),
    })
}

/// Per-user minimum-distance decision.
pub fn demodulate_hard(estimate: impl AsRef<[C64]>, c: &Constellation) -> Vec<u8> {
    estimate
        .as_ref()
        .iter()
        .flat_map(|&x| c.label(c.nearest(x)))
        .collect()
}

/// Received samples for one resource element.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedVector {
    pub samples: Vec<C64>,
    /// Linear noise power per sample.
    pub noise_variance: f64,
}

/// Noise variance `K · 10^(−snr_db/10)`; `+∞` dB gives the noiseless model.
pub fn noise_variance(k: usize, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        k as f64 * 10f64.powf(-snr_db / 10.0)
    }
}

/// `y = H s + v` with `v ~ CN(0, σ² I)`.
pub fn transmit(
    h: &ChannelMatrix,
    s: &UserSymbolVector,
    snr_db: f64,
    rng_seed: u64,
) -> Result<ReceivedVector> {
    if s.symbols.len() != h.k_users() {
        return Err(Error::Dimension(format!(
            "channel serves {} users, symbol vector has {}",
            h.k_users(),
            s.symbols.len()
        )));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!("SNR {snr_db} dB")));
    }
    let sigma2 = noise_variance(h.k_users(), snr_db);
    let mut samples = h.apply(&s.symbols);
    if sigma2 > 0.0 {
        let mut rng = rng::rng_from_seed(rng_seed);
        for y in samples.iter_mut() {
            *y += complex_gaussian(&mut rng, sigma2);
        }
    }
    Ok(ReceivedVector {
        samples,
        noise_variance: sigma2,
    })
}

/// Channel shared by `re_count` resource elements.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceBlock {
    pub channel: ChannelMatrix,
    re_count: usize,
}

impl CoherenceBlock {
    pub fn new(channel: ChannelMatrix, re_count: usize) -> Result<Self> {
        if re_count == 0 {
            return Err(Error::InvalidParameter(
                "coherence block needs at least one resource element".into(),
            ));
        }
        Ok(Self { channel, re_count })
    }

    pub fn re_count(&self) -> usize {
        self.re_count
    }
}

/// Supported constellation orders, for config validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct QamOrder(usize);

impl QamOrder {
    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for QamOrder {
    type Error = String;
    fn try_from(v: usize) -> std::result::Result<Self, String> {
        match v {
            4 | 16 | 64 => Ok(Self(v)),
            _ => Err(format!("constellation order must be 4, 16 or 64, got {v}")),
        }
    }
}

impl From<QamOrder> for usize {
    fn from(q: QamOrder) -> usize {
        q.0
    }
}
