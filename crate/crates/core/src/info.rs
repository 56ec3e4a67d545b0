//! The channel information matrix and its spectral summaries.
//!
//! For a channel `W` over the paired domain, entry `(i1, i2)` of the `k x k`
//! matrix `H(W)` is
//!
//! ```text
//! sum_y (W(y|2·i1) - W(y|2·i1+1)) (W(y|2·i2) - W(y|2·i2+1)) / sum_x W(y|x)
//! ```
//!
//! with columns of total mass zero contributing nothing (their numerators
//! vanish too; the 0/0 limit is 0). `H(W)` is positive semidefinite, its
//! operator norm never exceeds 2 (each Gershgorin row sum is at most the L1
//! norm of a row difference), and its nuclear norm equals its trace.

use crate::channel::Channel;
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

const SYM_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;

/// A validated `k x k` information matrix with its eigenvalues.
#[derive(Clone, Debug)]
pub struct InfoMatrix {
    k: usize,
    entries: DMatrix<f64>,
    /// Nonincreasing.
    eigenvalues: Vec<f64>,
}

impl InfoMatrix {
    /// Validates symmetry (1e-10), positive semidefiniteness (eigenvalues
    /// ≥ -1e-9), and the PSD identity nuclear = trace (1e-9).
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        let k = entries.nrows();
        if entries.ncols() != k || k == 0 {
            return Err(Error::InvalidParameter("info matrix must be square and nonempty".into()));
        }
        let mut delta: f64 = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                delta = delta.max((entries[(i, j)] - entries[(j, i)]).abs());
            }
        }
        if delta > SYM_TOL {
            return Err(Error::NotSymmetric { delta });
        }
        let eig = entries
            .clone()
            .try_symmetric_eigen(1e-10, 10_000)
            .unwrap_or_else(|| entries.clone().symmetric_eigen());
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if eigenvalues[k - 1] < -PSD_TOL {
            return Err(Error::NotPsd { min_eigenvalue: eigenvalues[k - 1] });
        }
        let nuclear: f64 = eigenvalues.iter().map(|l| l.abs()).sum();
        let trace = entries.trace();
        if (nuclear - trace).abs() > PSD_TOL {
            return Err(Error::NumericSanity(format!(
                "nuclear norm {nuclear} differs from trace {trace}"
            )));
        }
        Ok(InfoMatrix { k, entries, eigenvalues })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Eigenvalues in nonincreasing order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Largest Gershgorin disc bound: `max_i sum_j |H_ij|`.
    pub fn gershgorin_row_bound(&self) -> f64 {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.entries[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Evaluates the information matrix of a channel directly from its matrix.
pub fn info_matrix(ch: &Channel) -> Result<InfoMatrix> {
    let k = ch.k();
    let mut h = DMatrix::<f64>::zeros(k, k);
    let mut diff = vec![0.0; k];
    for y in 0..ch.cols() {
        let mut colsum = 0.0;
        for x in 0..2 * k {
            colsum += ch.entry(x, y);
        }
        if colsum <= 0.0 {
            continue; // unreachable label: numerators vanish as well
        }
        for i in 0..k {
            diff[i] = ch.entry(2 * i, y) - ch.entry(2 * i + 1, y);
        }
        for i1 in 0..k {
            if diff[i1] == 0.0 {
                continue;
            }
            for i2 in 0..k {
                h[(i1, i2)] += diff[i1] * diff[i2] / colsum;
            }
        }
    }
    InfoMatrix::from_entries(h)
}

/// Operator, nuclear, and Frobenius norms of an information matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyNorms {
    pub op: f64,
    pub nuclear: f64,
    pub frobenius: f64,
}

/// Spectral norms of a PSD information matrix: op = largest eigenvalue,
/// nuclear = trace, Frobenius = entrywise root-sum-of-squares. Checks the
/// Hölder chain `F^2 <= op * nuclear`, the ordering `op <= F <= nuclear`,
/// and cross-checks op against the Gershgorin row bound.
pub fn norms(h: &InfoMatrix) -> Result<FamilyNorms> {
    let op = h.eigenvalues()[0].max(0.0);
    let nuclear = h.trace();
    let frobenius = h.entries().iter().map(|v| v * v).sum::<f64>().sqrt();
    if op > h.gershgorin_row_bound() + PSD_TOL {
        return Err(Error::NumericSanity(format!(
            "operator norm {op} exceeds Gershgorin bound {}",
            h.gershgorin_row_bound()
        )));
    }
    let n = FamilyNorms { op, nuclear, frobenius };
    check_holder(&n)?;
    Ok(n)
}

pub(crate) fn check_holder(n: &FamilyNorms) -> Result<()> {
    let ok = n.frobenius * n.frobenius <= n.op * n.nuclear + PSD_TOL
        && n.op <= n.frobenius + PSD_TOL
        && n.frobenius <= n.nuclear + PSD_TOL;
    if ok {
        Ok(())
    } else {
        Err(Error::NumericSanity(format!("norm chain violated: {n:?}")))
    }
}

/// Closed form for the leaky-query information matrix:
/// `2 eta I + (1 - eta) delta(u) delta(u)^T` with
/// `delta(u)_i = (u_{2i} - u_{2i+1}) sqrt(2k / (|u|_1 (2k - |u|_1)))`.
/// When `|u|_1` is 0 or `2k` the binary responses are constant and carry no
/// information, so `delta(u) = 0`.
pub fn leaky_query_info_closed_form(k: usize, eta: f64, u: &[f64]) -> Result<InfoMatrix> {
    if u.len() != 2 * k {
        return Err(Error::DomainMismatch { left: u.len(), right: 2 * k });
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 1), got {eta}")));
    }
    let l1: f64 = u.iter().sum();
    let full = (2 * k) as f64;
    let scale = if l1 <= 0.0 || l1 >= full {
        0.0
    } else {
        (full / (l1 * (full - l1))).sqrt()
    };
    let delta: Vec<f64> = (0..k).map(|i| (u[2 * i] - u[2 * i + 1]) * scale).collect();
    let mut m = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        m[(i, i)] = 2.0 * eta;
    }
    for i1 in 0..k {
        for i2 in 0..k {
            m[(i1, i2)] += (1.0 - eta) * delta[i1] * delta[i2];
        }
    }
    InfoMatrix::from_entries(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{random_channel, Channel, Label};
    use crate::rng::chacha;

    #[test]
    fn constant_channel_has_zero_matrix() {
        let ch = Channel::constant(3, Label::Bot).unwrap();
        let h = info_matrix(&ch).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h.entry(i, j), 0.0);
            }
        }
        let n = norms(&h).unwrap();
        assert_eq!((n.op, n.nuclear, n.frobenius), (0.0, 0.0, 0.0));
    }

    #[test]
    fn identity_channel_has_twice_identity() {
        for k in [1usize, 2, 5] {
            let h = info_matrix(&Channel::identity(k).unwrap()).unwrap();
            for i in 0..k {
                for j in 0..k {
                    let want = if i == j { 2.0 } else { 0.0 };
                    assert!((h.entry(i, j) - want).abs() < 1e-12);
                }
            }
            let n = norms(&h).unwrap();
            assert!((n.op - 2.0).abs() < 1e-12);
            assert!((n.nuclear - 2.0 * k as f64).abs() < 1e-12);
            assert!((n.frobenius - 2.0 * (k as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_erasure_diagonal() {
        // Diagonal entry 2*eta away from the passthrough pair and
        // 1 + eta + (1-eta)/(2k-1) at the pair containing x_star; this
        // assignment is the one consistent with the nuclear-norm window at
        // eta = 1/sqrt(k).
        let k = 4;
        let eta = 0.3;
        let x_star = 5; // pair 2
        let h = info_matrix(&Channel::partial_erasure(k, eta, x_star).unwrap()).unwrap();
        let special = 1.0 + eta + (1.0 - eta) / (2 * k - 1) as f64;
        for i in 0..k {
            for j in 0..k {
                let want = if i != j {
                    0.0
                } else if i == 2 {
                    special
                } else {
                    2.0 * eta
                };
                assert!((h.entry(i, j) - want).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn partial_erasure_norm_window_at_tuned_eta() {
        for k in [4usize, 16, 64] {
            let eta = 1.0 / (k as f64).sqrt();
            let h = info_matrix(&Channel::partial_erasure(k, eta, 0).unwrap()).unwrap();
            let n = norms(&h).unwrap();
            let rk = (k as f64).sqrt();
            assert!(n.frobenius >= 2.0 - 1e-9 && n.frobenius <= 2.0 * 2f64.sqrt() + 1e-9);
            assert!(n.nuclear >= 2.0 * rk - 1e-9 && n.nuclear <= 2.0 * rk + 2.0 + 1e-9);
            assert!(n.op >= 1.0 - 1e-9 && n.op <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn leaky_closed_form_matches_direct_evaluation() {
        let mut rng = chacha(11, crate::rng::domain::INSTANCE, 0);
        for trial in 0..60 {
            let k = [2usize, 3, 5][trial % 3];
            let eta = 0.5 * rand::Rng::gen::<f64>(&mut rng);
            let u: Vec<f64> = (0..2 * k).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
            let direct = info_matrix(&Channel::leaky_query(k, eta, &u).unwrap()).unwrap();
            let closed = leaky_query_info_closed_form(k, eta, &u).unwrap();
            for i in 0..k {
                for j in 0..k {
                    assert!(
                        (direct.entry(i, j) - closed.entry(i, j)).abs() < 1e-9,
                        "k={k} ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn leaky_eigenstructure() {
        let k = 6;
        let eta = 0.2;
        let u: Vec<f64> = (0..2 * k).map(|x| if x % 4 == 0 { 0.9 } else { 0.1 }).collect();
        let h = leaky_query_info_closed_form(k, eta, &u).unwrap();
        let l1: f64 = u.iter().sum();
        let scale = (2 * k) as f64 / (l1 * ((2 * k) as f64 - l1));
        let d2: f64 = (0..k).map(|i| (u[2 * i] - u[2 * i + 1]).powi(2) * scale).sum();
        let evs = h.eigenvalues();
        assert!((evs[0] - (2.0 * eta + (1.0 - eta) * d2)).abs() < 1e-9);
        for &e in &evs[1..] {
            assert!((e - 2.0 * eta).abs() < 1e-9);
        }
        // all-zero query: binary outputs are constant, matrix is 2 eta I
        let h0 = leaky_query_info_closed_form(k, eta, &vec![0.0; 2 * k]).unwrap();
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 2.0 * eta } else { 0.0 };
                assert!((h0.entry(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn leaky_optimal_query_hits_op_two() {
        // alternating indicator: delta_i = sqrt(2/k), |delta|^2 = 2
        for k in [4usize, 16] {
            let eta = 1.0 / (k as f64).sqrt();
            let u: Vec<f64> = (0..2 * k).map(|x| if x % 2 == 0 { 1.0 } else { 0.0 }).collect();
            let h = leaky_query_info_closed_form(k, eta, &u).unwrap();
            let scale = (2.0 / k as f64).sqrt();
            for i in 0..k {
                // delta entries
                let want = 2.0 * eta + (1.0 - eta) * scale * scale;
                assert!((h.entry(i, i) - want).abs() < 1e-12);
            }
            let n = norms(&h).unwrap();
            assert!((n.op - 2.0).abs() < 1e-9);
            let rk = (k as f64).sqrt();
            assert!(n.nuclear >= 2.0 * rk - 1e-9 && n.nuclear <= 2.0 * rk + 2.0 + 1e-9);
        }
    }

    #[test]
    fn unreachable_label_contributes_zero() {
        // a channel with a never-emitted label: 0/0 column treated as 0
        let labels = vec![Label::Sym(0), Label::Sym(1), Label::Named("dead".into())];
        let rows = vec![
            vec![0.8, 0.2, 0.0],
            vec![0.3, 0.7, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![0.6, 0.4, 0.0],
        ];
        let ch = Channel::from_rows(2, labels, rows).unwrap();
        let h = info_matrix(&ch).unwrap();
        // drop the dead column and recompute: identical
        let ch2 = Channel::from_rows(
            2,
            vec![Label::Sym(0), Label::Sym(1)],
            vec![vec![0.8, 0.2], vec![0.3, 0.7], vec![0.5, 0.5], vec![0.6, 0.4]],
        )
        .unwrap();
        let h2 = info_matrix(&ch2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(h.entry(i, j), h2.entry(i, j));
            }
        }
    }

    #[test]
    fn random_channels_respect_op_bound_and_psd() {
        let mut rng = chacha(5, crate::rng::domain::INSTANCE, 1);
        for trial in 0..120 {
            let k = [2usize, 3, 4][trial % 3];
            let alphabet = 2 + trial % (3 * k - 1);
            let ch = random_channel(k, alphabet, &mut rng).unwrap();
            let h = info_matrix(&ch).unwrap();
            let n = norms(&h).unwrap();
            assert!(n.op <= 2.0 + 1e-9);
            assert!(h.eigenvalues()[k - 1] >= -1e-9);
        }
    }

    #[test]
    fn rr_nuclear_is_quadratic_in_rho() {
        // constant fitted once from direct evaluation at rho = 1
        for k in [2usize, 4] {
            let fit = norms(&info_matrix(&Channel::randomized_response(k, 1.0).unwrap()).unwrap())
                .unwrap()
                .nuclear;
            for step in 1..=10 {
                let rho = step as f64 / 10.0;
                let nuc =
                    norms(&info_matrix(&Channel::randomized_response(k, rho).unwrap()).unwrap())
                        .unwrap()
                        .nuclear;
                assert!(nuc <= fit * rho * rho + 1e-9, "k={k} rho={rho}");
            }
        }
    }

    #[test]
    fn pair_permutation_reindexes_the_matrix() {
        // swapping the two pairs of a k=2 channel swaps the diagonal entries
        let ch = Channel::partial_erasure(2, 0.4, 0).unwrap();
        let h = info_matrix(&ch).unwrap();
        let swapped = ch.permute_domain(&[2, 3, 0, 1]).unwrap();
        let hs = info_matrix(&swapped).unwrap();
        assert!((h.entry(0, 0) - hs.entry(1, 1)).abs() < 1e-12);
        assert!((h.entry(1, 1) - hs.entry(0, 0)).abs() < 1e-12);
    }
}
