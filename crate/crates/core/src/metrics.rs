//! Loss measures of an estimate against a known truth, and replicate aggregation.

use crate::error::{Error, Result};
use crate::linalg::{spd_cholesky, spd_logdet, sym_eigenvalues, SymMatrix};
use crate::scenario::GeneratedTruth;
use crate::selection::NONZERO_THRESHOLD;

pub const METRIC_NAMES: [&str; 6] = ["L1", "L2", "Fnorm", "KL", "QL", "FSL"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l1: f64,
    pub l2: f64,
    pub fnorm: f64,
    /// `+∞` when the estimate is not SPD.
    pub kl: f64,
    pub ql: f64,
    pub fsl_percent: f64,
}

impl LossReport {
    pub fn values(&self) -> [f64; 6] {
        [self.l1, self.l2, self.fnorm, self.kl, self.ql, self.fsl_percent]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        Self {
            l1: v[0],
            l2: v[1],
            fnorm: v[2],
            kl: v[3],
            ql: v[4],
            fsl_percent: v[5],
        }
    }

    /// KL could not be computed because the estimate is not SPD.
    pub fn kl_failed(&self) -> bool {
        self.kl.is_infinite()
    }
}

pub fn losses(truth: &GeneratedTruth, est: &SymMatrix) -> Result<LossReport> {
    let p = truth.dim();
    if est.dim() != p {
        return Err(Error::invalid(format!("estimate is {} but truth is {p}", est.dim())));
    }
    let omega = truth.omega.as_matrix();
    let e = est.as_matrix();
    let diff = omega.sub(e);

    let mut l1: f64 = 0.0;
    for j in 0..p {
        l1 = l1.max((0..p).map(|i| diff[(i, j)].abs()).sum());
    }
    let l2 = sym_eigenvalues(&SymMatrix::symmetrize(&diff))?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let fnorm = diff.frobenius_norm();

    let pf = p as f64;
    let m = truth.sigma.as_matrix().matmul(e);
    let tr = m.trace();
    let kl = match spd_cholesky(est) {
        Ok(f) => {
            let logdet_truth = spd_logdet(&spd_cholesky(&truth.omega)?);
            (tr - (spd_logdet(&f) - logdet_truth) - pf) / pf
        }
        Err(_) => f64::INFINITY,
    };
    let mut tr_sq = 0.0;
    for i in 0..p {
        for k in 0..p {
            tr_sq += m[(i, k)] * m[(k, i)];
        }
    }
    let ql = (tr_sq - 2.0 * tr + pf) / pf;

    let mut wrong = 0usize;
    for i in 0..p {
        for j in 0..p {
            if (e[(i, j)].abs() > NONZERO_THRESHOLD) != truth.in_support(i, j) {
                wrong += 1;
            }
        }
    }
    Ok(LossReport {
        l1,
        l2,
        fnorm,
        kl,
        ql,
        fsl_percent: 100.0 * wrong as f64 / (pf * pf),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: LossReport,
    pub se: LossReport,
    pub count: usize,
}

/// Per-field mean and standard error `sd / sqrt(R)` (sd with `R - 1`).
pub fn aggregate(reports: &[LossReport]) -> Result<Aggregate> {
    let r = reports.len();
    if r < 2 {
        return Err(Error::invalid(format!("need at least 2 reports, got {r}")));
    }
    let rf = r as f64;
    let mut mean = [0.0; 6];
    for rep in reports {
        for (m, v) in mean.iter_mut().zip(rep.values()) {
            *m += v / rf;
        }
    }
    let mut se = [0.0; 6];
    for (k, s) in se.iter_mut().enumerate() {
        let ss: f64 = reports.iter().map(|rep| (rep.values()[k] - mean[k]).powi(2)).sum();
        *s = (ss / (rf - 1.0)).sqrt() / rf.sqrt();
    }
    Ok(Aggregate {
        mean: LossReport::from_values(mean),
        se: LossReport::from_values(se),
        count: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_spd;
    use proptest::prelude::*;

    fn truth(omega: SymMatrix) -> GeneratedTruth {
        GeneratedTruth::from_omega(omega, 0.0).unwrap()
    }

    #[test]
    fn exact_recovery_is_zero() {
        let t = truth(random_spd(5, 1));
        let r = losses(&t, &t.omega).unwrap();
        for v in r.values() {
            assert!(v.abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn doubled_identity() {
        let p = 4;
        let t = truth(SymMatrix::identity(p));
        let r = losses(&t, &SymMatrix::from_diag(&[2.0; 4])).unwrap();
        assert!((r.kl - (1.0 - 2f64.ln())).abs() < 1e-14);
        assert!((r.ql - 1.0).abs() < 1e-14);
        assert!((r.l2 - 1.0).abs() < 1e-12);
        assert!((r.fnorm - (p as f64).sqrt()).abs() < 1e-14);
        assert!((r.l1 - 1.0).abs() < 1e-14);
        assert_eq!(r.fsl_percent, 0.0);
    }

    #[test]
    fn fsl_counting() {
        // Truth support: diagonal positions (0,0),(1,1) plus edge (0,1),(1,0) = 4.
        let omega = SymMatrix::from_rows(&[[1.0, 0.3, 0.0], [0.3, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let mut t = truth(omega);
        t.support[8] = false; // (2,2) removed so the truth has exactly 4 nonzeros
        let est = SymMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        // est keeps (0,0),(1,1), misses (0,1),(1,0), adds (2,2): FP = 1, FN = 2.
        let r = losses(&t, &est).unwrap();
        assert!((r.fsl_percent - 100.0 * 3.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn non_spd_estimate_flags_kl() {
        let t = truth(SymMatrix::identity(2));
        let r = losses(&t, &SymMatrix::from_diag(&[1.0, -1.0])).unwrap();
        assert!(r.kl_failed());
        assert!(r.ql.is_finite());
        assert!(losses(&t, &SymMatrix::identity(3)).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let a = LossReport::from_values([1.0; 6]);
        let agg = aggregate(&[a, a, a]).unwrap();
        assert_eq!(agg.se.values(), [0.0; 6]);
        let mut b = a;
        let mut c = a;
        b.kl = 0.0;
        c.kl = 2.0;
        let agg = aggregate(&[b, c]).unwrap();
        assert_eq!(agg.mean.kl, 1.0);
        assert!((agg.se.kl - 1.0).abs() < 1e-15);
        assert!(aggregate(&[a]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kl_nonnegative_and_permutation_invariant(seed in 0u64..10_000, dim in 2usize..8) {
            let t = truth(random_spd(dim, seed));
            let est = random_spd(dim, seed + 1);
            let r = losses(&t, &est).unwrap();
            prop_assert!(r.kl >= -1e-10);
            let perm: Vec<usize> = (0..dim).rev().collect();
            let tp = truth(t.omega.permuted(&perm));
            let rp = losses(&tp, &est.permuted(&perm)).unwrap();
            for (a, b) in r.values().iter().zip(rp.values()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }

        #[test]
        fn fnorm_matches_naive(seed in 0u64..10_000, dim in 1usize..8) {
            let t = truth(random_spd(dim, seed));
            let est = random_spd(dim, seed + 7);
            let mut ss = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    ss += (est[(i, j)] - t.omega[(i, j)]).powi(2);
                }
            }
            let r = losses(&t, &est).unwrap();
            prop_assert!((r.fnorm.powi(2) - ss).abs() <= 1e-12 * ss.max(1e-300));
        }
    }
}
