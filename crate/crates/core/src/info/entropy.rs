//! Discrete distributions, entropy, KL divergence and plug-in mutual information.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::InfoError;

const SUM_TOL: f64 = 1e-12;

/// Probability vector summing to one within `1e-12`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiscretePmf {
    probs: Vec<f64>,
}

impl DiscretePmf {
    pub fn new(probs: Vec<f64>) -> Result<Self, InfoError> {
        if probs.is_empty() {
            return Err(InfoError::InvalidPmf("empty support".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(InfoError::InvalidPmf(format!("entry {p} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(InfoError::InvalidPmf(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self, InfoError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(InfoError::InvalidPmf(
                "weights must be non-negative with positive sum".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self, InfoError> {
        Self::from_weights(&vec![1.0; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

impl TryFrom<Vec<f64>> for DiscretePmf {
    type Error = InfoError;

    fn try_from(v: Vec<f64>) -> Result<Self, InfoError> {
        Self::new(v)
    }
}

impl From<DiscretePmf> for Vec<f64> {
    fn from(p: DiscretePmf) -> Self {
        p.probs
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `H(p) = -sum p_i ln p_i` with `0 ln 0 = 0`.
pub fn discrete_entropy(p: &DiscretePmf) -> f64 {
    (-p.probs.iter().map(|&q| plogp(q)).sum::<f64>()).max(0.0)
}

/// Exact `D(p || q)`; infinite when `p` is not absolutely continuous w.r.t. `q`.
pub fn kl_divergence(p: &DiscretePmf, q: &DiscretePmf) -> Result<f64, InfoError> {
    if p.len() != q.len() {
        return Err(InfoError::SupportMismatch(p.len(), q.len()));
    }
    let mut d = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        if a > 0.0 {
            if b == 0.0 {
                return Ok(f64::INFINITY);
            }
            d += a * (a / b).ln();
        }
    }
    Ok(d.max(0.0))
}

/// Exact mutual information of a joint probability table `p[x][y]`.
pub fn joint_mi(table: &[Vec<f64>]) -> Result<f64, InfoError> {
    let cols = table.first().map_or(0, Vec::len);
    if cols == 0 || table.iter().any(|r| r.len() != cols) {
        return Err(InfoError::InvalidPmf(
            "joint table must be a non-empty rectangle".into(),
        ));
    }
    let flat: Vec<f64> = table.iter().flatten().copied().collect();
    DiscretePmf::new(flat)?;
    let row: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &p) in r.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (row[i] * col[j])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Contingency table of co-occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointCounts {
    table: Vec<Vec<u64>>,
    total: u64,
}

impl JointCounts {
    pub fn new(table: Vec<Vec<u64>>) -> Result<Self, InfoError> {
        let cols = table.first().map_or(0, Vec::len);
        if cols == 0 || table.iter().any(|r| r.len() != cols) {
            return Err(InfoError::InvalidCounts("table must be a non-empty rectangle".into()));
        }
        let total = table.iter().flatten().sum();
        if total == 0 {
            return Err(InfoError::InvalidCounts("all cells are zero".into()));
        }
        Ok(Self { table, total })
    }

    /// Tabulates paired observations; rows and columns follow key order.
    pub fn from_pairs<X: Ord, Y: Ord>(xs: &[X], ys: &[Y]) -> Result<Self, InfoError> {
        if xs.len() != ys.len() {
            return Err(InfoError::InvalidCounts(format!(
                "{} x values but {} y values",
                xs.len(),
                ys.len()
            )));
        }
        let (xi, yi) = (key_index(xs), key_index(ys));
        let mut table = vec![vec![0u64; yi.len().max(1)]; xi.len().max(1)];
        for (x, y) in xs.iter().zip(ys) {
            table[xi[x]][yi[y]] += 1;
        }
        Self::new(table)
    }

    pub fn table(&self) -> &[Vec<u64>] {
        &self.table
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    fn row_sums(&self) -> Vec<u64> {
        self.table.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.table[0].len())
            .map(|j| self.table.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn row_marginal(&self) -> DiscretePmf {
        let w: Vec<f64> = self.row_sums().into_iter().map(|c| c as f64).collect();
        DiscretePmf::from_weights(&w).expect("non-empty table")
    }

    pub fn col_marginal(&self) -> DiscretePmf {
        let w: Vec<f64> = self.col_sums().into_iter().map(|c| c as f64).collect();
        DiscretePmf::from_weights(&w).expect("non-empty table")
    }
}

fn key_index<K: Ord>(vals: &[K]) -> BTreeMap<&K, usize> {
    let mut m = BTreeMap::new();
    for v in vals {
        m.entry(v).or_insert(0);
    }
    for (i, v) in m.values_mut().enumerate() {
        *v = i;
    }
    m
}

/// Plug-in estimate `sum p_xy ln(p_xy / (p_x p_y))` from counts.
///
/// Written as `(c/n) ln(c n / (r_x c_y))` over integer counts so that
/// product tables give exactly zero per cell.
pub fn plugin_mi(counts: &JointCounts) -> f64 {
    let n = counts.total as f64;
    let rows = counts.row_sums();
    let cols = counts.col_sums();
    let mut mi = 0.0;
    for (i, r) in counts.table.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_examples() {
        let h = discrete_entropy(&DiscretePmf::uniform(4).unwrap());
        assert!((h - 1.386_294_361_119_890_6).abs() < 1e-15);
        assert_eq!(discrete_entropy(&DiscretePmf::new(vec![0.0, 1.0, 0.0]).unwrap()), 0.0);
        let h = discrete_entropy(&DiscretePmf::new(vec![0.5, 0.25, 0.25]).unwrap());
        assert!((h - 1.039_720_770_839_917_9).abs() < 1e-15);
    }

    #[test]
    fn pmf_validation() {
        assert!(DiscretePmf::new(vec![0.5, 0.4]).is_err());
        assert!(DiscretePmf::new(vec![1.5, -0.5]).is_err());
        assert!(DiscretePmf::new(vec![]).is_err());
        assert!(serde_json::from_str::<DiscretePmf>("[0.2, 0.8]").is_ok());
    }

    #[test]
    fn plugin_mi_examples() {
        let product = JointCounts::new(vec![vec![2, 4, 6], vec![1, 2, 3]]).unwrap();
        assert!(plugin_mi(&product).abs() < 1e-12);
        let diag = JointCounts::new(
            (0..4)
                .map(|i| (0..4).map(|j| u64::from(i == j) * 5).collect())
                .collect(),
        )
        .unwrap();
        assert!((plugin_mi(&diag) - 4f64.ln()).abs() < 1e-12);
        let t = JointCounts::new(vec![vec![2, 1], vec![1, 2]]).unwrap();
        assert!((plugin_mi(&t) - 0.056_633_012_265_132_49).abs() < 1e-15);
    }

    #[test]
    fn from_pairs_orders_keys() {
        let c = JointCounts::from_pairs(&["b", "a", "a"], &[1, 2, 2]).unwrap();
        assert_eq!(c.table(), &[vec![0, 2], vec![1, 0]]);
        assert_eq!(c.total(), 3);
        assert!(JointCounts::new(vec![vec![0, 0]]).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = DiscretePmf::new(vec![0.5, 0.5]).unwrap();
        let q = DiscretePmf::new(vec![0.25, 0.75]).unwrap();
        let expected = 0.5 * (2.0f64).ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-15);
        let r = DiscretePmf::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(kl_divergence(&p, &r).unwrap(), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn plugin_mi_bounded_by_marginal_entropies(
            cells in proptest::collection::vec(0u64..20, 12),
        ) {
            prop_assume!(cells.iter().any(|&c| c > 0));
            let table: Vec<Vec<u64>> = cells.chunks(4).map(<[u64]>::to_vec).collect();
            let c = JointCounts::new(table).unwrap();
            let mi = plugin_mi(&c);
            prop_assert!(mi >= 0.0);
            let hx = discrete_entropy(&c.row_marginal());
            let hy = discrete_entropy(&c.col_marginal());
            prop_assert!(mi <= hx.min(hy) + 1e-12);
        }

        #[test]
        fn outer_products_have_zero_mi(
            r in proptest::collection::vec(0u64..9, 1..5),
            s in proptest::collection::vec(0u64..9, 1..5),
        ) {
            prop_assume!(r.iter().any(|&x| x > 0) && s.iter().any(|&x| x > 0));
            let table = r.iter().map(|a| s.iter().map(|b| a * b).collect()).collect();
            prop_assert!(plugin_mi(&JointCounts::new(table).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn entropy_nonnegative(w in proptest::collection::vec(0.0f64..1.0, 1..10)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            prop_assert!(discrete_entropy(&DiscretePmf::from_weights(&w).unwrap()) >= 0.0);
        }
    }
}
