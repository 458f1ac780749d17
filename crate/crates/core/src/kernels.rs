//! Inner loops of coordinate descent. Each loop has one body, compiled
//! twice: once for the baseline target and once with AVX2 enabled, chosen at
//! run time. Rust never contracts `a * b + c` into a fused multiply-add, so
//! both builds perform the same IEEE operations and return identical bits.

use crate::smoothing::{logistic_fast, logistic_prime_fast};

macro_rules! dispatch {
    ($(#[$doc:meta])* fn $name:ident($($arg:ident : $ty:ty),*) $(-> $ret:ty)? $body:block) => {
        $(#[$doc])*
        pub(crate) fn $name($($arg: $ty),*) $(-> $ret)? {
            #[inline(always)]
            fn body($($arg: $ty),*) $(-> $ret)? $body

            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2")]
                unsafe fn wide($($arg: $ty),*) $(-> $ret)? {
                    body($($arg),*)
                }
                if std::arch::is_x86_feature_detected!("avx2") {
                    // SAFETY: the CPU supports AVX2, checked just above.
                    return unsafe { wide($($arg),*) };
                }
            }
            body($($arg),*)
        }
    };
}

dispatch! {
    /// Dot product over four interleaved accumulators.
    fn dot(a: &[f64], b: &[f64]) -> f64 {
        let split = a.len().min(b.len()) / 4 * 4;
        let mut acc = [0.0f64; 4];
        for (x, y) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
            for l in 0..4 {
                acc[l] += x[l] * y[l];
            }
        }
        let tail: f64 = a[split..].iter().zip(&b[split..]).map(|(x, y)| x * y).sum();
        (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
    }
}

dispatch! {
    /// `m_p += delta * dx_p`.
    fn axpy(m: &mut [f64], delta: f64, dx: &[f64]) {
        for (m, &dx) in m.iter_mut().zip(dx) {
            *m += delta * dx;
        }
    }
}

dispatch! {
    /// `q_p = dw_p F'(alpha m_p)` at unit scale.
    fn weighted_slope(q: &mut [f64], dw: &[f64], m: &[f64], alpha: f64) {
        for ((q, &dw), &m) in q.iter_mut().zip(dw).zip(m) {
            *q = dw * logistic_prime_fast(alpha * m);
        }
    }
}

dispatch! {
    /// `m_out = m + delta * dx` and `f_out = F(alpha m_out)`.
    fn shifted_smooth(m_out: &mut [f64], f_out: &mut [f64], m: &[f64], dx: &[f64], delta: f64, alpha: f64) {
        for (((mo, fo), &m), &dx) in m_out.iter_mut().zip(f_out.iter_mut()).zip(m).zip(dx) {
            let v = m + delta * dx;
            *mo = v;
            *fo = logistic_fast(alpha * v);
        }
    }
}

dispatch! {
    /// `f_p = F(alpha m_p)`.
    fn smooth(f: &mut [f64], m: &[f64], alpha: f64) {
        for (f, &m) in f.iter_mut().zip(m) {
            *f = logistic_fast(alpha * m);
        }
    }
}

dispatch! {
    /// `q_p = dw_p f_p (1 - f_p)`.
    fn slope_from_smooth(q: &mut [f64], f: &[f64], dw: &[f64]) {
        for ((q, &f), &dw) in q.iter_mut().zip(f).zip(dw) {
            *q = dw * f * (1.0 - f);
        }
    }
}

dispatch! {
    /// Writes `q_p = dw_p f_p (1 - f_p)` and returns `sum_p dw_p (f_p - f0_p)`.
    fn slope_and_change(q: &mut [f64], f: &[f64], f0: &[f64], dw: &[f64]) -> f64 {
        let split = q.len() / 4 * 4;
        let mut acc = [0.0f64; 4];
        for (((q, f), f0), dw) in q[..split]
            .chunks_exact_mut(4)
            .zip(f[..split].chunks_exact(4))
            .zip(f0[..split].chunks_exact(4))
            .zip(dw[..split].chunks_exact(4))
        {
            for l in 0..4 {
                q[l] = dw[l] * f[l] * (1.0 - f[l]);
                acc[l] += dw[l] * (f[l] - f0[l]);
            }
        }
        let mut tail = 0.0;
        for p in split..q.len() {
            q[p] = dw[p] * f[p] * (1.0 - f[p]);
            tail += dw[p] * (f[p] - f0[p]);
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
    }
}
