//! Block Cholesky factors `Ω = Tᵀ D⁻¹ T` under a partial (group-level)
//! variable ordering.
//!
//! `T` is unit block-lower-triangular: its diagonal blocks are identities and
//! the block in row-group `j`, column-group `i < j` is `-A_ji`, the negated
//! coefficients of regressing group `j` on group `i`. `D⁻¹` is block-diagonal
//! with SPD blocks, the precisions of the regression residuals.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::{spd_cholesky, spd_inverse, sym_eigenvalues, Matrix, SymMatrix};

/// Ordered group sizes `(p_1, ..., p_M)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl GroupPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::invalid("partition needs at least one group"));
        }
        if let Some(j) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("group {} has size 0", j + 1)));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Ok(Self { sizes, offsets })
    }

    /// One group holding all `p` variables.
    pub fn single(p: usize) -> Result<Self> {
        Self::new(vec![p])
    }

    /// `p` groups of size one: a full variable ordering.
    pub fn singletons(p: usize) -> Result<Self> {
        Self::new(vec![1; p])
    }

    /// `groups` groups of (nearly) equal size; earlier groups take the remainder.
    pub fn equal(p: usize, groups: usize) -> Result<Self> {
        if groups == 0 || groups > p {
            return Err(Error::invalid(format!("cannot split {p} variables into {groups} groups")));
        }
        let base = p / groups;
        let extra = p % groups;
        Self::new((0..groups).map(|j| base + usize::from(j < extra)).collect())
    }

    /// Parses `"p1,p2,...,pM"`.
    pub fn parse(text: &str) -> Result<Self> {
        let sizes = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad group size {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn num_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.offsets.last().unwrap() + self.sizes.last().unwrap()
    }

    pub fn size(&self, j: usize) -> usize {
        self.sizes[j]
    }

    pub fn offset(&self, j: usize) -> usize {
        self.offsets[j]
    }

    pub fn range(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j] + self.sizes[j]
    }

    /// Group index of variable `k`.
    pub fn group_of(&self, k: usize) -> usize {
        match self.offsets.binary_search(&k) {
            Ok(j) => j,
            Err(j) => j - 1,
        }
    }

    /// True if `k` variables can be split off the front without cutting a group.
    pub fn is_boundary(&self, k: usize) -> bool {
        k == self.total() || self.offsets.binary_search(&k).is_ok()
    }

    pub fn check_total(&self, p: usize) -> Result<()> {
        if self.total() != p {
            return Err(Error::invalid(format!(
                "partition total ≠ p ({} vs {p})",
                self.total()
            )));
        }
        Ok(())
    }
}

/// The unit block-lower-triangular factor `T = I - A`.
///
/// Only strictly-lower blocks are stored; missing blocks are zero and the
/// diagonal blocks are implicit identities.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLowerUnit {
    partition: GroupPartition,
    blocks: BTreeMap<(usize, usize), Matrix>,
}

impl BlockLowerUnit {
    pub fn identity(partition: GroupPartition) -> Self {
        Self {
            partition,
            blocks: BTreeMap::new(),
        }
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    /// Stores the `T` block at `(j, i)`, `j > i`.
    pub fn set_block(&mut self, j: usize, i: usize, block: Matrix) -> Result<()> {
        if j <= i || j >= self.partition.num_groups() {
            return Err(Error::invalid(format!("block ({j}, {i}) is not strictly lower")));
        }
        let shape = (self.partition.size(j), self.partition.size(i));
        if (block.rows(), block.cols()) != shape {
            return Err(Error::invalid(format!(
                "block ({j}, {i}) must be {}x{}, got {}x{}",
                shape.0,
                shape.1,
                block.rows(),
                block.cols()
            )));
        }
        self.blocks.insert((j, i), block);
        Ok(())
    }

    /// Stores regression coefficients `A_j` (row block `j`, columns are the
    /// concatenation of the listed predecessor groups) as `T` blocks `-A_ji`.
    pub fn set_regression_row(&mut self, j: usize, predecessors: &[usize], coef: &Matrix) -> Result<()> {
        let mut col = 0;
        for &i in predecessors {
            let width = self.partition.size(i);
            let block = coef.block(0, col, coef.rows(), width).scale(-1.0);
            self.set_block(j, i, block)?;
            col += width;
        }
        if col != coef.cols() {
            return Err(Error::invalid("coefficient width does not match predecessor groups"));
        }
        Ok(())
    }

    pub fn block(&self, j: usize, i: usize) -> Option<&Matrix> {
        self.blocks.get(&(j, i))
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&(usize, usize), &Matrix)> {
        self.blocks.iter()
    }

    /// True if every stored block is exactly zero.
    pub fn is_identity(&self) -> bool {
        self.blocks.values().all(|b| b.as_slice().iter().all(|&v| v == 0.0))
    }

    pub fn to_dense(&self) -> Matrix {
        let p = self.partition.total();
        let mut t = Matrix::identity(p);
        for (&(j, i), b) in &self.blocks {
            t.set_block(self.partition.offset(j), self.partition.offset(i), b);
        }
        t
    }
}

/// The block-diagonal factor `D⁻¹ = diag(D_1⁻¹, ..., D_M⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagSpd {
    partition: GroupPartition,
    blocks: Vec<SymMatrix>,
}

impl BlockDiagSpd {
    /// Validates block shapes and that every block is SPD.
    pub fn new(partition: GroupPartition, blocks: Vec<SymMatrix>) -> Result<Self> {
        if blocks.len() != partition.num_groups() {
            return Err(Error::invalid(format!(
                "expected {} diagonal blocks, got {}",
                partition.num_groups(),
                blocks.len()
            )));
        }
        for (j, b) in blocks.iter().enumerate() {
            if b.dim() != partition.size(j) {
                return Err(Error::invalid(format!(
                    "block {j} has dim {}, expected {}",
                    b.dim(),
                    partition.size(j)
                )));
            }
            spd_cholesky(b).map_err(|e| e.context(format!("block {}", j + 1)))?;
        }
        Ok(Self { partition, blocks })
    }

    pub fn identity(partition: GroupPartition) -> Self {
        let blocks = partition.sizes().iter().map(|&s| SymMatrix::identity(s)).collect();
        Self { partition, blocks }
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn blocks(&self) -> &[SymMatrix] {
        &self.blocks
    }

    pub fn to_dense(&self) -> SymMatrix {
        let p = self.partition.total();
        let mut m = Matrix::zeros(p, p);
        for (j, b) in self.blocks.iter().enumerate() {
            let o = self.partition.offset(j);
            m.set_block(o, o, b.as_matrix());
        }
        SymMatrix::from_lower(m)
    }
}

/// A fitted precision matrix together with its factors and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub partition: GroupPartition,
    pub t: BlockLowerUnit,
    pub dinv: BlockDiagSpd,
    pub omega: SymMatrix,
    pub lambda1: f64,
    pub lambda2: f64,
    pub per_group_iterations: Vec<usize>,
    pub converged_flags: Vec<bool>,
}

impl PrecisionEstimate {
    pub fn converged(&self) -> bool {
        self.converged_flags.iter().all(|&c| c)
    }
}

/// `Ω = Tᵀ D⁻¹ T`, computed as `RᵀR` with `R = Lᵀ T` where `D⁻¹_j = L_j L_jᵀ`,
/// so the result is exactly symmetric.
pub fn assemble(t: &BlockLowerUnit, dinv: &BlockDiagSpd) -> Result<SymMatrix> {
    let part = t.partition();
    if part != dinv.partition() {
        return Err(Error::invalid("T and D⁻¹ have different partitions"));
    }
    let p = part.total();
    // Rows of `rt` are the columns of R.
    let mut rt = Matrix::zeros(p, p);
    for (j, block) in dinv.blocks().iter().enumerate() {
        let l = spd_cholesky(block).map_err(|e| e.context(format!("block {}", j + 1)))?;
        let l = l.lower();
        let oj = part.offset(j);
        let pj = part.size(j);
        // Block row j of R: Lᵀ T_{j,i} for i < j, and Lᵀ on the diagonal.
        for r in 0..pj {
            // Diagonal block: R[oj + r, oj + c] = L[c, r].
            for c in r..pj {
                rt[(oj + c, oj + r)] = l[(c, r)];
            }
        }
        for i in 0..j {
            if let Some(tb) = t.block(j, i) {
                let oi = part.offset(i);
                for r in 0..pj {
                    for c in 0..part.size(i) {
                        let mut s = 0.0;
                        for k in r..pj {
                            s += l[(k, r)] * tb[(k, c)];
                        }
                        rt[(oi + c, oj + r)] = s;
                    }
                }
            }
        }
    }
    let mut omega = Matrix::zeros(p, p);
    for a in 0..p {
        for b in 0..=a {
            omega[(a, b)] = rt.row(a).iter().zip(rt.row(b)).map(|(x, y)| x * y).sum();
        }
    }
    Ok(SymMatrix::from_lower(omega))
}

/// Population block Cholesky factors of `sigma⁻¹`: `A_j` are the regression
/// coefficients of group `j` on all earlier groups and `D_j` the Schur
/// complements (conditional covariances).
pub fn population_decompose(
    sigma: &SymMatrix,
    partition: &GroupPartition,
) -> Result<(BlockLowerUnit, BlockDiagSpd)> {
    partition.check_total(sigma.dim())?;
    spd_cholesky(sigma)?;
    let mut t = BlockLowerUnit::identity(partition.clone());
    let mut dinv_blocks = Vec::with_capacity(partition.num_groups());
    for j in 0..partition.num_groups() {
        let oj = partition.offset(j);
        let pj = partition.size(j);
        let sjj = sigma.principal_block(oj, pj);
        let d = if j == 0 {
            sjj
        } else {
            let szz = sigma.principal_block(0, oj);
            let szx = sigma.as_matrix().block(0, oj, oj, pj);
            let f = spd_cholesky(&szz)?;
            // Aᵀ = Σ_ZZ⁻¹ Σ_ZX
            let a_t = f.solve_matrix(&szx);
            let a = a_t.transpose();
            let preds: Vec<usize> = (0..j).collect();
            t.set_regression_row(j, &preds, &a)?;
            SymMatrix::symmetrize(&sjj.as_matrix().sub(&a.matmul(&szx)))
        };
        let f = spd_cholesky(&d).map_err(|e| e.context(format!("group {}", j + 1)))?;
        dinv_blocks.push(spd_inverse(&f));
    }
    let dinv = BlockDiagSpd::new(partition.clone(), dinv_blocks)?;
    Ok((t, dinv))
}

/// Checks that the spectrum of the assembled block-diagonal matrix is the union
/// of the blocks' spectra (per value within `1e-8`, sorted comparison).
pub fn block_diag_eigen_union_check(dinv: &BlockDiagSpd) -> bool {
    let Ok(mut full) = sym_eigenvalues(&dinv.to_dense()) else {
        return false;
    };
    let mut union = Vec::with_capacity(full.len());
    for b in dinv.blocks() {
        match sym_eigenvalues(b) {
            Ok(v) => union.extend(v),
            Err(_) => return false,
        }
    }
    full.sort_by(f64::total_cmp);
    union.sort_by(f64::total_cmp);
    full.len() == union.len() && full.iter().zip(&union).all(|(a, b)| (a - b).abs() <= 1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spd_invert;
    use crate::testutil::{random_matrix, random_spd};
    use proptest::prelude::*;

    fn random_factors(partition: &GroupPartition, seed: u64) -> (BlockLowerUnit, BlockDiagSpd) {
        let mut t = BlockLowerUnit::identity(partition.clone());
        let m = partition.num_groups();
        for j in 1..m {
            for i in 0..j {
                let b = random_matrix(partition.size(j), partition.size(i), seed ^ (31 * j + i) as u64);
                t.set_block(j, i, b).unwrap();
            }
        }
        let blocks = (0..m)
            .map(|j| random_spd(partition.size(j), seed.wrapping_add(1000 + j as u64)))
            .collect();
        (t, BlockDiagSpd::new(partition.clone(), blocks).unwrap())
    }

    #[test]
    fn partition_validation() {
        assert!(GroupPartition::new(vec![]).is_err());
        assert!(GroupPartition::new(vec![2, 0]).is_err());
        let p = GroupPartition::new(vec![3, 2, 3]).unwrap();
        assert_eq!(p.offsets(), &[0, 3, 5]);
        assert_eq!(p.total(), 8);
        assert_eq!(p.group_of(4), 1);
        assert_eq!(p.group_of(5), 2);
        assert!(p.is_boundary(5) && !p.is_boundary(4) && p.is_boundary(8));
        assert_eq!(GroupPartition::parse("30, 60,40,70").unwrap().total(), 200);
        assert!(GroupPartition::parse("3,x").is_err());
        assert_eq!(GroupPartition::equal(10, 3).unwrap().sizes(), &[4, 3, 3]);
        let err = p.check_total(9).unwrap_err();
        assert!(err.to_string().contains("partition total ≠ p"));
    }

    #[test]
    fn assemble_identity() {
        let part = GroupPartition::new(vec![2, 1]).unwrap();
        let omega = assemble(&BlockLowerUnit::identity(part.clone()), &BlockDiagSpd::identity(part)).unwrap();
        assert_eq!(omega, SymMatrix::identity(3));
    }

    #[test]
    fn assemble_two_by_two_by_hand() {
        let (a, d1, d2) = (0.7, 2.0, 0.5);
        let part = GroupPartition::new(vec![1, 1]).unwrap();
        let mut t = BlockLowerUnit::identity(part.clone());
        t.set_regression_row(1, &[0], &Matrix::from_rows(&[[a]]).unwrap()).unwrap();
        let dinv = BlockDiagSpd::new(
            part,
            vec![SymMatrix::from_diag(&[1.0 / d1]), SymMatrix::from_diag(&[1.0 / d2])],
        )
        .unwrap();
        let omega = assemble(&t, &dinv).unwrap();
        let expected = Matrix::from_rows(&[[1.0 / d1 + a * a / d2, -a / d2], [-a / d2, 1.0 / d2]]).unwrap();
        assert!(omega.as_matrix().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn assemble_matches_naive_triple_product() {
        let part = GroupPartition::new(vec![2, 3, 1]).unwrap();
        let (t, dinv) = random_factors(&part, 17);
        let omega = assemble(&t, &dinv).unwrap();
        let td = t.to_dense();
        let dd = dinv.to_dense();
        let p = 6;
        for a in 0..p {
            for b in 0..p {
                let mut s = 0.0;
                for k in 0..p {
                    for l in 0..p {
                        s += td[(k, a)] * dd[(k, l)] * td[(l, b)];
                    }
                }
                assert!((omega[(a, b)] - s).abs() < 1e-12, "({a},{b}) {} vs {s}", omega[(a, b)]);
            }
        }
    }

    #[test]
    fn assemble_rejects_partition_mismatch() {
        let p1 = GroupPartition::new(vec![1, 1]).unwrap();
        let p2 = GroupPartition::new(vec![2]).unwrap();
        let err = assemble(&BlockLowerUnit::identity(p1), &BlockDiagSpd::identity(p2)).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn decompose_identity() {
        let part = GroupPartition::new(vec![2, 2]).unwrap();
        let (t, dinv) = population_decompose(&SymMatrix::identity(4), &part).unwrap();
        assert!(t.is_identity());
        assert_eq!(dinv.to_dense(), SymMatrix::identity(4));
    }

    #[test]
    fn decompose_bivariate() {
        let sigma = SymMatrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let part = GroupPartition::new(vec![1, 1]).unwrap();
        let (t, dinv) = population_decompose(&sigma, &part).unwrap();
        assert!((t.block(1, 0).unwrap()[(0, 0)] + 0.5).abs() < 1e-15);
        assert!((1.0 / dinv.blocks()[0][(0, 0)] - 1.0).abs() < 1e-15);
        assert!((1.0 / dinv.blocks()[1][(0, 0)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn decompose_round_trip_p8() {
        let sigma = random_spd(8, 99);
        let part = GroupPartition::new(vec![3, 2, 3]).unwrap();
        let (t, dinv) = population_decompose(&sigma, &part).unwrap();
        let omega = assemble(&t, &dinv).unwrap();
        let expected = spd_invert(&sigma).unwrap();
        assert!(omega.as_matrix().max_abs_diff(expected.as_matrix()) < 1e-9);
    }

    #[test]
    fn decompose_rejects_non_spd() {
        let sigma = SymMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let part = GroupPartition::new(vec![1, 1]).unwrap();
        assert!(matches!(
            population_decompose(&sigma, &part),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn eigen_union_examples() {
        let part = GroupPartition::new(vec![1, 1]).unwrap();
        let d = BlockDiagSpd::new(part, vec![SymMatrix::from_diag(&[1.0]), SymMatrix::from_diag(&[2.0])]).unwrap();
        assert!(block_diag_eigen_union_check(&d));
        let part = GroupPartition::new(vec![2, 1]).unwrap();
        let d = BlockDiagSpd::new(
            part,
            vec![
                SymMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap(),
                SymMatrix::from_diag(&[5.0]),
            ],
        )
        .unwrap();
        assert!(block_diag_eigen_union_check(&d));
    }

    fn partition_strategy() -> impl Strategy<Value = GroupPartition> {
        prop::collection::vec(1usize..6, 1..6).prop_map(|s| GroupPartition::new(s).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn eigen_union_holds(part in partition_strategy(), seed in any::<u64>()) {
            let (_, dinv) = random_factors(&part, seed);
            prop_assert!(block_diag_eigen_union_check(&dinv));
        }

        #[test]
        fn round_trip_through_decomposition(part in partition_strategy(), seed in any::<u64>()) {
            let omega = random_spd(part.total(), seed);
            let sigma = spd_invert(&omega).unwrap();
            let (t, dinv) = population_decompose(&sigma, &part).unwrap();
            let back = assemble(&t, &dinv).unwrap();
            let scale = omega.as_matrix().max_abs().max(1.0);
            prop_assert!(back.as_matrix().max_abs_diff(omega.as_matrix()) < 1e-9 * scale);
        }

        #[test]
        fn assembled_is_symmetric_and_pd(part in partition_strategy(), seed in any::<u64>()) {
            let (t, dinv) = random_factors(&part, seed);
            let omega = assemble(&t, &dinv).unwrap();
            let m = omega.as_matrix();
            for i in 0..omega.dim() {
                for j in 0..i {
                    prop_assert_eq!(m[(i, j)].to_bits(), m[(j, i)].to_bits());
                }
            }
            prop_assert!(spd_cholesky(&omega).is_ok());
        }

        #[test]
        fn factor_singular_values_are_bounded(part in partition_strategy(), seed in any::<u64>(), theta in 1.5f64..20.0) {
            // Precision with eigenvalues clamped to [1/θ, θ].
            let raw = random_spd(part.total(), seed);
            let (vals, vecs) = crate::linalg::sym_eigendecomp(&raw).unwrap();
            let p = part.total();
            let clamped: Vec<f64> = vals.iter().map(|v| v.clamp(1.0 / theta, theta)).collect();
            let scaled = Matrix::from_fn(p, p, |i, j| vecs[(i, j)] * clamped[j]);
            let omega = SymMatrix::symmetrize(&scaled.matmul(&vecs.transpose()));
            let sigma = spd_invert(&omega).unwrap();
            let (t, dinv) = population_decompose(&sigma, &part).unwrap();
            for m in [t.to_dense(), dinv.to_dense().into_matrix()] {
                let gram = SymMatrix::symmetrize(&m.t_matmul_scaled(&m, 1.0));
                let ev = crate::linalg::sym_eigenvalues(&gram).unwrap();
                let smin = ev.last().unwrap().max(0.0).sqrt();
                let smax = ev[0].sqrt();
                prop_assert!(smin > 0.0 && smax < 1e12);
            }
        }
    }
}
