//! Small dense kernels over complex slices.
//!
//! Every kernel reports the number of complex multiplications it performs to
//! the op counter, which is compiled in only with the `op-count` feature.
//! A real-by-complex product counts as one multiplication.

use crate::C64;

/// Complex multiplication counter.
pub mod opcount {
    #[cfg(feature = "op-count")]
    mod imp {
        use std::cell::Cell;

        thread_local! {
            static CMUL: Cell<u64> = const { Cell::new(0) };
        }

        #[inline]
        pub fn add(n: usize) {
            CMUL.with(|c| c.set(c.get() + n as u64));
        }

        /// Resets the calling thread's counter.
        pub fn reset() {
            CMUL.with(|c| c.set(0));
        }

        /// Complex multiplications counted on the calling thread since the
        /// last [`reset`].
        pub fn complex_mults() -> u64 {
            CMUL.with(|c| c.get())
        }
    }

    #[cfg(not(feature = "op-count"))]
    mod imp {
        #[inline(always)]
        pub fn add(_n: usize) {}
    }

    #[cfg(feature = "op-count")]
    pub use imp::{complex_mults, reset};

    pub(crate) use imp::add;
}

/// Unconjugated dot product `hᵀ s`.
#[inline]
pub fn dot_t(h: &[C64], s: &[C64]) -> C64 {
    debug_assert_eq!(h.len(), s.len());
    opcount::add(h.len());
    h.iter().zip(s).map(|(a, b)| a * b).sum()
}

/// `y += a · x`.
#[inline]
pub fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(x.len(), y.len());
    opcount::add(x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y += a · conj(x)`.
#[inline]
pub fn axpy_conj(a: C64, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(x.len(), y.len());
    opcount::add(x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi.conj();
    }
}

/// `a · x` for real `a`.
#[inline]
pub fn scale_real(a: f64, x: &[C64]) -> Vec<C64> {
    opcount::add(x.len());
    x.iter().map(|v| v * a).collect()
}

/// `Γ h*` for a row-major `k × k` matrix.
pub fn matvec_conj(gamma: &[C64], h: &[C64]) -> Vec<C64> {
    let k = h.len();
    debug_assert_eq!(gamma.len(), k * k);
    opcount::add(k * k);
    gamma
        .chunks_exact(k)
        .map(|row| row.iter().zip(h).map(|(g, hj)| g * hj.conj()).sum())
        .collect()
}

/// `Γ -= u vᴴ` for a row-major `k × k` matrix.
pub fn rank1_sub(gamma: &mut [C64], u: &[C64], v: &[C64]) {
    let k = u.len();
    debug_assert_eq!(gamma.len(), k * k);
    opcount::add(k * k);
    for (row, ui) in gamma.chunks_exact_mut(k).zip(u) {
        for (g, vj) in row.iter_mut().zip(v) {
            *g -= ui * vj.conj();
        }
    }
}

/// Replaces a square matrix by its Hermitian part `(Γ + Γᴴ) / 2`.
pub fn hermitianize(gamma: &mut [C64], k: usize) {
    for i in 0..k {
        gamma[i * k + i].im = 0.0;
        for j in (i + 1)..k {
            let avg = (gamma[i * k + j] + gamma[j * k + i].conj()) * 0.5;
            gamma[i * k + j] = avg;
            gamma[j * k + i] = avg.conj();
        }
    }
}

pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

/// Squared distance `‖a − b‖²`.
pub fn dist_sqr(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

pub fn all_finite(x: &[C64]) -> bool {
    x.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}
