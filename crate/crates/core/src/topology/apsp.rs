/// Dense all-pairs result: distances and first hops, row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllPairs {
    n: usize,
    dist: Vec<f64>,
    next: Vec<u32>,
}

const NO_HOP: u32 = u32::MAX;

impl AllPairs {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn distance(&self, i: usize, j: usize) -> Option<f64> {
        let d = self.dist[i * self.n + j];
        d.is_finite().then_some(d)
    }

    pub fn next(&self, i: usize, j: usize) -> Option<usize> {
        match self.next[i * self.n + j] {
            NO_HOP => None,
            k => Some(k as usize),
        }
    }

    pub(crate) fn next_table(&self) -> &[u32] {
        &self.next
    }
}

/// Floyd-Warshall over undirected `edges`. Only nodes with `transit[k]`
/// may appear strictly inside a path. Relaxation uses strict `<` with `k`
/// ascending, so on ties the path through the lowest intermediate wins.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)], transit: &[bool]) -> AllPairs {
    assert_eq!(transit.len(), n);
    let mut dist = vec![f64::INFINITY; n * n];
    let mut next = vec![NO_HOP; n * n];
    for i in 0..n {
        dist[i * n + i] = 0.0;
    }
    for &(a, b, w) in edges {
        if a == b {
            continue;
        }
        for (u, v) in [(a, b), (b, a)] {
            if w < dist[u * n + v] {
                dist[u * n + v] = w;
                next[u * n + v] = v as u32;
            }
        }
    }
    for k in 0..n {
        if !transit[k] {
            continue;
        }
        let row_k: Vec<f64> = dist[k * n..(k + 1) * n].to_vec();
        for i in 0..n {
            let dik = dist[i * n + k];
            if !dik.is_finite() || i == k {
                continue;
            }
            let hop = next[i * n + k];
            let row = i * n;
            for j in 0..n {
                let cand = dik + row_k[j];
                if cand < dist[row + j] {
                    dist[row + j] = cand;
                    next[row + j] = hop;
                }
            }
        }
    }
    AllPairs { n, dist, next }
}
