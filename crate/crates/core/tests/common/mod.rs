#![allow(clippy::needless_range_loop)]

//! Independent reference implementations. None of them call into the
//! solver code they are compared against; only plain loops over `Vec`s.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn random_rows(n: usize, k: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn to_array(m: &Mat) -> ndarray::Array2<f64> {
    let k = m[0].len();
    ndarray::Array2::from_shape_vec((m.len(), k), m.iter().flatten().copied().collect()).unwrap()
}

fn cosine(p: &Mat) -> Mat {
    let norms: Vec<f64> = p.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    (0..p.len())
        .map(|i| {
            (0..p.len())
                .map(|j| p[i].iter().zip(&p[j]).map(|(a, b)| a * b).sum::<f64>() / (norms[i] * norms[j]))
                .collect()
        })
        .collect()
}

/// Objective and gradient in `Q` of the full problem with `b = Q^T 1`
/// substituted, which absorbs the column constraint.
struct Reduced {
    cost: Mat,
    s: Mat,
    eps1: f64,
    eps2: f64,
    eps3: f64,
}

impl Reduced {
    fn value(&self, q: &Mat) -> f64 {
        let (n, k) = (q.len(), q[0].len());
        let mut v = 0.0;
        let mut col = vec![0.0; k];
        for i in 0..n {
            for j in 0..k {
                let x = q[i][j];
                v += x * self.cost[i][j] + self.eps1 * (x * x.ln() - x);
                col[j] += x;
            }
        }
        v += self.eps2 * col.iter().map(|b| b * b.ln()).sum::<f64>();
        let mut inter = 0.0;
        for i in 0..n {
            for l in 0..n {
                let dot: f64 = (0..k).map(|j| q[i][j] * q[l][j]).sum();
                inter += self.s[i][l] * dot;
            }
        }
        v - self.eps3 * inter
    }

    fn grad(&self, q: &Mat) -> Mat {
        let (n, k) = (q.len(), q[0].len());
        let col: Vec<f64> = (0..k).map(|j| (0..n).map(|i| q[i][j]).sum()).collect();
        (0..n)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        let sq: f64 = (0..n).map(|l| (self.s[i][l] + self.s[l][i]) * q[l][j]).sum();
                        self.cost[i][j] + self.eps1 * q[i][j].ln() + self.eps2 * (col[j].ln() + 1.0)
                            - self.eps3 * sq
                    })
                    .collect()
            })
            .collect()
    }
}

/// Euclidean projection onto `{x : x_j >= floor, sum x = total}`: shift by
/// `floor`, then the sort-based projection onto a scaled simplex.
fn project_row(y: &[f64], total: f64, floor: f64) -> Vec<f64> {
    let mass = total - floor * y.len() as f64;
    let shifted: Vec<f64> = y.iter().map(|v| v - floor).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (r, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - mass) / (r + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    shifted.iter().map(|v| (v - theta).max(0.0) + floor).collect()
}

/// Best objective over `restarts` projected-gradient runs with Armijo
/// backtracking, each from a random row-feasible start.
pub fn pgd_oracle(p0: &Mat, eps1: f64, eps2: f64, eps3: f64, restarts: usize, seed: u64) -> f64 {
    let n = p0.len();
    let k = p0[0].len();
    let a = 1.0 / n as f64;
    let floor = 1e-14;
    let problem = Reduced {
        cost: p0.iter().map(|r| r.iter().map(|p| -p.max(1e-12).ln()).collect()).collect(),
        s: cosine(p0),
        eps1,
        eps2,
        eps3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let mut q: Mat = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|v| a * v / s).collect()
            })
            .collect();
        let mut value = problem.value(&q);
        let mut step = 1e-3;
        for _ in 0..5_000 {
            let g = problem.grad(&q);
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Mat = (0..n)
                    .map(|i| {
                        let y: Vec<f64> = (0..k).map(|j| q[i][j] - step * g[i][j]).collect();
                        project_row(&y, a, floor)
                    })
                    .collect();
                let decrease: f64 = (0..n)
                    .flat_map(|i| (0..k).map(move |j| (i, j)))
                    .map(|(i, j)| g[i][j] * (q[i][j] - cand[i][j]))
                    .sum();
                let cv = problem.value(&cand);
                if cv <= value - 1e-4 * decrease {
                    let moved = value - cv;
                    q = cand;
                    value = cv;
                    accepted = true;
                    step *= 2.0;
                    if moved < 1e-13 {
                        step = 0.0;
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted || step == 0.0 {
                break;
            }
        }
        best = best.min(value);
    }
    best
}

/// Standard entropic OT with fixed marginals, by matrix scaling.
pub fn sinkhorn(cost: &Mat, a: &[f64], b: &[f64], eps: f64, iters: usize) -> Mat {
    let n = cost.len();
    let k = cost[0].len();
    let kern: Mat = cost.iter().map(|r| r.iter().map(|c| (-c / eps).exp()).collect()).collect();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; k];
    for _ in 0..iters {
        for i in 0..n {
            u[i] = a[i] / (0..k).map(|j| kern[i][j] * v[j]).sum::<f64>();
        }
        for j in 0..k {
            v[j] = b[j] / (0..n).map(|i| kern[i][j] * u[i]).sum::<f64>();
        }
    }
    (0..n).map(|i| (0..k).map(|j| u[i] * kern[i][j] * v[j]).collect()).collect()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Accuracy under the best of all `k!` one-to-one label mappings.
pub fn brute_force_accuracy(y: &[usize], yhat: &[usize], k: usize) -> f64 {
    let best = permutations(k)
        .iter()
        .map(|map| y.iter().zip(yhat).filter(|(t, p)| map[**p] == **t).count())
        .max()
        .unwrap();
    best as f64 / y.len() as f64
}

/// Every label vector of length `n` over `k` labels.
pub fn all_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..k).map(move |l| {
                    let mut w = v.clone();
                    w.push(l);
                    w
                })
            })
            .collect();
    }
    out
}
