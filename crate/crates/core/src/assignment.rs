//! Source permutations and exact linear assignment.

use serde::{Deserialize, Serialize};

/// A bijection on `0..n`: entry `k` is `π(k)`.
///
/// For the separation objectives, `π(k)` is the index in the estimate set
/// matched to item `k` of the reference set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub permutation: Vec<usize>,
}

impl Assignment {
    pub fn identity(n: usize) -> Self {
        Self { permutation: (0..n).collect() }
    }

    /// Validates bijectivity.
    pub fn new(permutation: Vec<usize>) -> Option<Self> {
        let n = permutation.len();
        let mut seen = vec![false; n];
        for &p in &permutation {
            if p >= n || seen[p] {
                return None;
            }
            seen[p] = true;
        }
        Some(Self { permutation })
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// Permutation matrix with `Π[k][π(k)] = 1`.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        self.permutation
            .iter()
            .map(|&p| (0..n).map(|j| u8::from(j == p)).collect())
            .collect()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &p) in self.permutation.iter().enumerate() {
            inv[p] = i;
        }
        Self { permutation: inv }
    }

    /// Total `Σ_k cost[k][π(k)]`.
    pub fn cost(&self, cost: &[Vec<f64>]) -> f64 {
        self.permutation.iter().enumerate().map(|(i, &p)| cost[i][p]).sum()
    }
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// potentials formulation, `O(n³)`).
pub fn solve_min_cost(cost: &[Vec<f64>]) -> Assignment {
    let n = cost.len();
    if n == 0 {
        return Assignment::identity(0);
    }
    debug_assert!(cost.iter().all(|row| row.len() == n));

    // 1-based arrays; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    Assignment { permutation: perm }
}

/// Every permutation of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            break;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    out
}

/// Exhaustive minimum over all `n!` permutations of an arbitrary objective.
/// Ties keep the lexicographically first permutation.
pub fn brute_force_min<F: FnMut(&Assignment) -> f64>(n: usize, mut objective: F) -> (f64, Assignment) {
    let mut best = (f64::INFINITY, Assignment::identity(n));
    for perm in all_permutations(n) {
        let a = Assignment { permutation: perm };
        let value = objective(&a);
        if value < best.0 {
            best = (value, a);
        }
    }
    best
}
