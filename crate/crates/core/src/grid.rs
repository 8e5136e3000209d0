//! Periodic wavenumber grid on the torus `[0, 2π)²`.
//!
//! Coefficients are stored densely in FFT order: the flat index of a
//! wavenumber `k = (k1, k2)` is `(k1 mod n) * n + (k2 mod n)`. Signed
//! wavenumbers live in `{-n/2+1, ..., n/2}`.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer wavenumber `k ∈ ℤ²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Wavenumber {
    pub k1: i64,
    pub k2: i64,
}

impl Wavenumber {
    pub const fn new(k1: i64, k2: i64) -> Self {
        Self { k1, k2 }
    }

    pub fn norm_sq(self) -> i64 {
        self.k1 * self.k1 + self.k2 * self.k2
    }

    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// `k^⊥ = (k2, -k1)`.
    pub fn perp(self) -> Self {
        Self::new(self.k2, -self.k1)
    }

    pub fn dot(self, other: Self) -> i64 {
        self.k1 * other.k1 + self.k2 * other.k2
    }

    pub fn is_zero(self) -> bool {
        self.k1 == 0 && self.k2 == 0
    }
}

impl Add for Wavenumber {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.k1 + rhs.k1, self.k2 + rhs.k2)
    }
}

impl Sub for Wavenumber {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.k1 - rhs.k1, self.k2 - rhs.k2)
    }
}

impl Neg for Wavenumber {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.k1, -self.k2)
    }
}

impl fmt::Display for Wavenumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k1, self.k2)
    }
}

/// Rational dealiasing fraction in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DealiasFraction {
    num: u32,
    den: u32,
}

impl DealiasFraction {
    pub const TWO_THIRDS: Self = Self { num: 2, den: 3 };
    pub const NONE: Self = Self { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::InvalidDealias { num, den });
        }
        Ok(Self { num, den })
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    /// Largest `m` with `m <= fraction * n / 2`.
    fn cutoff(self, n: usize) -> i64 {
        (u64::from(self.num) * n as u64 / (2 * u64::from(self.den))) as i64
    }
}

impl Default for DealiasFraction {
    fn default() -> Self {
        Self::TWO_THIRDS
    }
}

impl fmt::Display for DealiasFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for DealiasFraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse dealias fraction {s:?}"));
        match s.split_once('/') {
            Some((a, b)) => {
                let num = a.trim().parse().map_err(|_| bad())?;
                let den = b.trim().parse().map_err(|_| bad())?;
                Self::new(num, den)
            }
            None => {
                let num: u32 = s.trim().parse().map_err(|_| bad())?;
                Self::new(num, 1)
            }
        }
    }
}

pub struct WaveGrid {
    n: usize,
    dealias: DealiasFraction,
    cutoff: i64,
    mask: Vec<bool>,
    active: Vec<usize>,
    representatives: Vec<usize>,
    conj: Vec<usize>,
    ksq: Vec<f64>,
    // Wavenumbers used by odd-order multipliers; components at the Nyquist
    // frequency are zeroed so derivatives of real fields stay real.
    kderiv: Vec<[f64; 2]>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for WaveGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaveGrid")
            .field("n", &self.n)
            .field("dealias", &self.dealias)
            .field("cutoff", &self.cutoff)
            .field("active", &self.active.len())
            .finish()
    }
}

impl WaveGrid {
    pub fn new(n: usize, dealias: DealiasFraction) -> Result<Arc<Self>> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGridSize(n));
        }
        let cutoff = dealias.cutoff(n);
        let len = n * n;
        let signed = |i: usize| -> i64 {
            if i <= n / 2 {
                i as i64
            } else {
                i as i64 - n as i64
            }
        };
        let mut mask = vec![false; len];
        let mut active = Vec::new();
        let mut conj = vec![0; len];
        let mut ksq = vec![0.0; len];
        let mut kderiv = vec![[0.0; 2]; len];
        let nyq = (n / 2) as i64;
        for i1 in 0..n {
            for i2 in 0..n {
                let idx = i1 * n + i2;
                let (k1, k2) = (signed(i1), signed(i2));
                conj[idx] = ((n - i1) % n) * n + (n - i2) % n;
                ksq[idx] = (k1 * k1 + k2 * k2) as f64;
                let d = |k: i64| if k == nyq { 0.0 } else { k as f64 };
                kderiv[idx] = [d(k1), d(k2)];
                if (k1, k2) != (0, 0) && k1.abs() <= cutoff && k2.abs() <= cutoff {
                    mask[idx] = true;
                    active.push(idx);
                }
            }
        }
        let representatives = active.iter().copied().filter(|&i| i <= conj[i]).collect();
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Self {
            n,
            dealias,
            cutoff,
            mask,
            active,
            representatives,
            conj,
            ksq,
            kderiv,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dealias(&self) -> DealiasFraction {
        self.dealias
    }

    /// Largest retained `|k_i|`.
    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    /// Number of storage slots, `n²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn active_indices(&self) -> &[usize] {
        &self.active
    }

    /// One flat index per Hermitian pair of active modes, in increasing
    /// index order. This is the canonical order for random draws.
    pub fn pair_representatives(&self) -> &[usize] {
        &self.representatives
    }

    pub fn is_active_index(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn is_active(&self, k: Wavenumber) -> bool {
        self.index_of(k).is_some_and(|i| self.mask[i] && self.wavenumber(i) == k)
    }

    pub fn active_modes(&self) -> impl Iterator<Item = Wavenumber> + '_ {
        self.active.iter().map(|&i| self.wavenumber(i))
    }

    pub fn wavenumber(&self, idx: usize) -> Wavenumber {
        let n = self.n;
        let s = |i: usize| -> i64 {
            if i <= n / 2 {
                i as i64
            } else {
                i as i64 - n as i64
            }
        };
        Wavenumber::new(s(idx / n), s(idx % n))
    }

    /// Storage index of `k` when it is representable on the grid.
    pub fn index_of(&self, k: Wavenumber) -> Option<usize> {
        let half = (self.n / 2) as i64;
        let ok = |c: i64| c > -half && c <= half;
        if !ok(k.k1) || !ok(k.k2) {
            return None;
        }
        let n = self.n as i64;
        Some((k.k1.rem_euclid(n) * n + k.k2.rem_euclid(n)) as usize)
    }

    pub fn conj_index(&self, idx: usize) -> usize {
        self.conj[idx]
    }

    pub fn ksq(&self, idx: usize) -> f64 {
        self.ksq[idx]
    }

    pub(crate) fn kderiv(&self, idx: usize) -> [f64; 2] {
        self.kderiv[idx]
    }

    /// Largest `|k|²` over the active set.
    pub fn max_ksq(&self) -> i64 {
        2 * self.cutoff * self.cutoff
    }

    pub fn same_as(&self, other: &WaveGrid) -> bool {
        std::ptr::eq(self, other) || (self.n == other.n && self.cutoff == other.cutoff)
    }

    /// Physical sample coordinate `2π j / n`.
    pub fn coordinate(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * j as f64 / self.n as f64
    }

    /// Unnormalised 2D FFT in place. Inverse transforms assume the input is
    /// supported on `|k1| ≤ cutoff` and skip the other rows; forward
    /// transforms only produce valid output for `|k2| ≤ cutoff`. Both hold for
    /// every [`crate::SpectralField`], which lives on the active set.
    pub(crate) fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        thread_local! {
            static SCRATCH: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
        }
        let n = self.n;
        let c = self.cutoff as usize;
        let fft = if inverse { &self.inv } else { &self.fwd };
        SCRATCH.with_borrow_mut(|(scratch, tmp)| {
            scratch.resize(fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
            tmp.resize(n * n, Complex64::new(0.0, 0.0));
            let band = |buf: &mut [Complex64], scratch: &mut [Complex64]| {
                if 2 * c + 1 >= n {
                    fft.process_with_scratch(buf, scratch);
                } else {
                    fft.process_with_scratch(&mut buf[..(c + 1) * n], scratch);
                    fft.process_with_scratch(&mut buf[(n - c) * n..], scratch);
                }
            };
            let tmp = &mut tmp[..n * n];
            if inverse {
                band(data, scratch);
                transpose::transpose(data, tmp, n, n);
                fft.process_with_scratch(tmp, scratch);
            } else {
                fft.process_with_scratch(data, scratch);
                transpose::transpose(data, tmp, n, n);
                band(tmp, scratch);
            }
            transpose::transpose(tmp, data, n, n);
        });
    }
}
