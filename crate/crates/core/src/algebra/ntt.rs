//! Negacyclic number-theoretic transform over `F_p` for `Z_p[X]/(X^n + 1)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::field::Fp;

pub(crate) struct NttTable {
    n: usize,
    psi_rev: Vec<Fp>,
    psi_inv_rev: Vec<Fp>,
    n_inv: Fp,
}

fn bit_reverse(mut x: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

impl NttTable {
    fn new(n: usize) -> Self {
        assert!(n.is_power_of_two());
        let log_n = n.trailing_zeros();
        let psi = Fp::two_adic_root(log_n + 1);
        let psi_inv = psi.inv().expect("root of unity is nonzero");
        let mut psi_rev = vec![Fp::ZERO; n];
        let mut psi_inv_rev = vec![Fp::ZERO; n];
        for (i, (fwd, inv)) in psi_rev.iter_mut().zip(psi_inv_rev.iter_mut()).enumerate() {
            let e = bit_reverse(i, log_n) as u64;
            *fwd = psi.pow(e);
            *inv = psi_inv.pow(e);
        }
        Self {
            n,
            psi_rev,
            psi_inv_rev,
            n_inv: Fp::new(n as u64).inv().expect("n is nonzero"),
        }
    }

    pub(crate) fn get(n: usize) -> Arc<NttTable> {
        static TABLES: OnceLock<Mutex<HashMap<usize, Arc<NttTable>>>> = OnceLock::new();
        let tables = TABLES.get_or_init(Default::default);
        let mut guard = tables.lock().expect("ntt table cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(NttTable::new(n))).clone()
    }

    pub(crate) fn forward(&self, a: &mut [Fp]) {
        debug_assert_eq!(a.len(), self.n);
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t /= 2;
            for i in 0..m {
                let j1 = 2 * i * t;
                let s = self.psi_rev[m + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t] * s;
                    a[j] = u + v;
                    a[j + t] = u - v;
                }
            }
            m *= 2;
        }
    }

    pub(crate) fn inverse(&self, a: &mut [Fp]) {
        debug_assert_eq!(a.len(), self.n);
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m / 2;
            let mut j1 = 0;
            for i in 0..h {
                let s = self.psi_inv_rev[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = u + v;
                    a[j + t] = (u - v) * s;
                }
                j1 += 2 * t;
            }
            t *= 2;
            m = h;
        }
        for x in a.iter_mut() {
            *x *= self.n_inv;
        }
    }
}
