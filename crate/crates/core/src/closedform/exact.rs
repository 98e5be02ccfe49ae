//! Exact first and second moments of the received RF power.
//!
//! Fix a UE `k` and an AP `l` and write `x = sqrt(beta_kl) g~_kl`. Every
//! estimate at AP `l` is `g_hat_il = gbar_il + t_i x + c_il z_i`, where
//! `t_i = c_il sqrt(tau_p P_p)` for UEs on the pilot of `k` (zero otherwise)
//! and `z_i` is the remaining pilot-projection term, independent of `x`:
//! `CN(0, omega I)` on the pilot of `k`, `CN(0, s_p I)` on any other pilot `p`.
//!
//! The per-AP vector `u_il = w_il g_kl^T conj(g_hat_il)` is then
//! `mu_i(x) + sqrt(G(x)) eta_i` with `G = |g_kl|^2` and `eta ~ CN(0, B)`,
//! `B_ij = w_i c_i w_j c_j v_p` for UEs `i, j` on a common pilot `p`.
//! Conditioning on `x` reduces every moment to Gaussian moments in `x`,
//! evaluated with [`super::gaussian`]. The received power is
//! `I_k = |sum_l u_l|^2`, a squared norm of a sum of independent vectors,
//! whose mean and variance follow from the per-AP mean `a`, covariance `R`,
//! pseudo-covariance `P`, third moment `T` and fourth moment `F`.

use num_complex::Complex64;

use super::gaussian::{Atom, Gaussian, Poly};
use crate::mat::Mat;
use crate::topology::LargeScaleModel;

struct ApMoments {
    a: Vec<Complex64>,
    r: Mat<Complex64>,
    p: Mat<Complex64>,
    t: Vec<Complex64>,
    f: f64,
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn ap_moments(ls: &LargeScaleModel, k: usize, l: usize, w: &[f64]) -> ApMoments {
    let nk = ls.num_ues;
    let gram = Mat::from_fn(nk, nk, |a, b| {
        ls.los(a, l)
            .iter()
            .zip(ls.los(b, l))
            .map(|(x, y)| x.conj() * y)
            .sum::<Complex64>()
    });
    let g = Gaussian {
        gram: &gram,
        dim: ls.antennas,
        variance: ls.beta[(k, l)],
    };
    let active: Vec<usize> = (0..nk).filter(|&i| w[i] != 0.0).collect();
    let sqrt_e = ls.tau_p_pp.sqrt();
    let pk = ls.pilots.pilot_index[k];

    let mut a = vec![zero(); nk];
    let mut m: Vec<Poly> = vec![Poly::zero(); nk];
    for &i in &active {
        let t = if ls.shares_pilot(i, k) {
            ls.c[(i, l)] * sqrt_e
        } else {
            0.0
        };
        let mut mu = Poly::constant(gram[(i, k)]);
        mu.add_scaled(&Poly::atom(Atom::Lin(i), 1.0), 1.0);
        mu.add_scaled(&Poly::atom(Atom::ConjLin(k), t), 1.0);
        mu.add_scaled(&Poly::atom(Atom::Norm, t), 1.0);
        let mu = mu.scaled(w[i]);
        a[i] = g.expect(&mu);
        let mut centred = mu;
        centred.add_scaled(&Poly::constant(a[i]), -1.0);
        m[i] = centred;
    }

    let pilot_var = |p: usize| {
        let s = ls.pilot_power(p, l);
        if p == pk {
            (s - ls.tau_p_pp * ls.beta[(k, l)]).max(0.0)
        } else {
            s
        }
    };
    let mut b = Mat::filled(nk, nk, 0.0);
    for &i in &active {
        for &j in &active {
            let p = ls.pilots.pilot_index[i];
            if p == ls.pilots.pilot_index[j] {
                b[(i, j)] = w[i] * ls.c[(i, l)] * w[j] * ls.c[(j, l)] * pilot_var(p);
            }
        }
    }
    let tr_b: f64 = active.iter().map(|&i| b[(i, i)]).sum();
    let tr_b2: f64 = active
        .iter()
        .flat_map(|&i| active.iter().map(move |&j| (i, j)))
        .map(|(i, j)| b[(i, j)] * b[(j, i)])
        .sum();

    let mut gp = Poly::constant(gram[(k, k)]);
    gp.add_scaled(&Poly::atom(Atom::Lin(k), 1.0), 1.0);
    gp.add_scaled(&Poly::atom(Atom::ConjLin(k), 1.0), 1.0);
    gp.add_scaled(&Poly::atom(Atom::Norm, 1.0), 1.0);
    let eg = g.expect(&gp).re;

    let mc: Vec<Poly> = m.iter().map(Poly::conj).collect();
    let mut r = Mat::filled(nk, nk, zero());
    let mut p = Mat::filled(nk, nk, zero());
    for &i in &active {
        for &j in &active {
            r[(i, j)] = g.expect(&m[i].mul(&mc[j])) + eg * b[(i, j)];
            p[(i, j)] = g.expect(&m[i].mul(&m[j]));
        }
    }

    let mut n2 = Poly::zero();
    for &i in &active {
        n2.add_scaled(&m[i].mul(&mc[i]), 1.0);
    }
    // B m' and m'^H B m'
    let mut bm: Vec<Poly> = vec![Poly::zero(); nk];
    let mut q = Poly::zero();
    for &i in &active {
        for &j in &active {
            if b[(i, j)] != 0.0 {
                bm[i].add_scaled(&m[j], b[(i, j)]);
            }
        }
        q.add_scaled(&mc[i].mul(&bm[i]), 1.0);
    }
    let g2 = gp.mul(&gp);
    let mut fourth = n2.mul(&n2);
    fourth.add_scaled(&gp.mul(&q), 2.0);
    fourth.add_scaled(&g2, tr_b * tr_b + tr_b2);
    fourth.add_scaled(&gp.mul(&n2), 2.0 * tr_b);
    let f = g.expect(&fourth).re;

    let mut t = vec![zero(); nk];
    for &i in &active {
        let mut poly = m[i].mul(&n2);
        let mut inner = m[i].scaled(tr_b);
        inner.add_scaled(&bm[i], 1.0);
        poly.add_scaled(&gp.mul(&inner), 1.0);
        t[i] = g.expect(&poly);
    }
    ApMoments { a, r, p, t, f }
}

/// Mean and variance of `|sum_l u_l|^2` for UE `k`, where UE `i` is beamed
/// from AP `l` with amplitude `weights[(i, l)]`.
pub fn power_moments(ls: &LargeScaleModel, weights: &Mat<f64>, k: usize) -> (f64, f64) {
    let nk = ls.num_ues;
    let mut per_ap = Vec::new();
    for l in 0..ls.num_aps {
        let w: Vec<f64> = (0..nk).map(|i| weights[(i, l)]).collect();
        if w.iter().all(|&x| x == 0.0) {
            continue;
        }
        per_ap.push(ap_moments(ls, k, l, &w));
    }
    let mut a = vec![zero(); nk];
    let mut r_tot = Mat::filled(nk, nk, zero());
    let mut p_tot = Mat::filled(nk, nk, zero());
    for m in &per_ap {
        for i in 0..nk {
            a[i] += m.a[i];
            for j in 0..nk {
                r_tot[(i, j)] += m.r[(i, j)];
                p_tot[(i, j)] += m.p[(i, j)];
            }
        }
    }
    let quad = |mat: &Mat<Complex64>, v: &[Complex64], conj_right: bool| -> Complex64 {
        let mut s = zero();
        for i in 0..nk {
            for j in 0..nk {
                let right = if conj_right { v[j].conj() } else { v[j] };
                s += v[i].conj() * mat[(i, j)] * right;
            }
        }
        s
    };
    let frob = |mat: &Mat<Complex64>| mat.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>();

    let mut mean = a.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let mut var = 0.0;
    for m in &per_ap {
        let tr_r: f64 = (0..nk).map(|i| m.r[(i, i)].re).sum();
        mean += tr_r;
        // 4 Var(Re(A^H D_l))
        var += 2.0 * (quad(&m.r, &a, false).re + quad(&m.p, &a, true).re);
        var += m.f - tr_r * tr_r;
        var += 4.0
            * a.iter()
                .zip(&m.t)
                .map(|(x, t)| (x.conj() * t).re)
                .sum::<f64>();
        var -= frob(&m.r) + frob(&m.p);
    }
    var += frob(&r_tot) + frob(&p_tot);
    (mean, var.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PilotAssignment;

    #[test]
    fn rayleigh_single_pair_variance() {
        // Var(|g^T conj(g_hat)|^2) for one UE, one AP, no LoS
        let (beta, e, s2, n) = (0.8, 2.0, 0.5, 3usize);
        let ls = LargeScaleModel::from_parts(
            Mat::filled(1, 1, beta),
            Mat::filled(1, 1, 0.0),
            Mat::filled(1, 1, 0.0),
            n,
            PilotAssignment::new(1, vec![0]).unwrap(),
            e,
            s2,
        )
        .unwrap();
        let (g, u) = (ls.gamma[(0, 0)], ls.upsilon[(0, 0)]);
        let nf = n as f64;
        let mean = g * g * nf * (nf + 1.0) + u * g * nf;
        let second = g.powi(4) * nf * (nf + 1.0) * (nf + 2.0) * (nf + 3.0)
            + 4.0 * u * g.powi(3) * nf * (nf + 1.0) * (nf + 2.0)
            + 2.0 * u * u * g * g * nf * (nf + 1.0);
        let (m, v) = power_moments(&ls, &Mat::filled(1, 1, 1.0), 0);
        assert!((m - mean).abs() < 1e-12 * mean, "{m} vs {mean}");
        assert!((v - (second - mean * mean)).abs() < 1e-12 * second, "{v}");
    }
}
