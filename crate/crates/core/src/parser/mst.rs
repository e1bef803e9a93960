//! Maximum spanning arborescence decoding (Chu-Liu/Edmonds).

use ndarray::Array2;

use crate::error::{Error, Result};

const NEG: f64 = f64::NEG_INFINITY;

/// Highest-scoring dependency tree for `scores`, an `(n+1)×(n+1)` matrix
/// where `scores[[d, h]]` scores head `h` for dependent `d`. Row 0 (the
/// artificial root as dependent) is ignored. Exactly one word attaches to
/// the root. Ties go to the lower head index, then to the lower root child.
///
/// Returns the head of each word `1..=n`.
pub fn mst_decode(scores: &Array2<f64>) -> Result<Vec<usize>> {
    let (rows, cols) = scores.dim();
    if rows != cols || rows < 2 {
        return Err(Error::Shape(format!(
            "score matrix must be (n+1)×(n+1) with n ≥ 1, got {}×{}",
            rows, cols
        )));
    }
    if let Some(((d, h), v)) = scores
        .indexed_iter()
        .find(|((d, _), v)| *d > 0 && !v.is_finite())
    {
        return Err(Error::invalid(format!("non-finite score {} at ({}, {})", v, d, h)));
    }
    let m = rows;
    let mut s: Vec<Vec<f64>> = (0..m)
        .map(|d| (0..m).map(|h| if d == 0 || d == h { NEG } else { scores[[d, h]] }).collect())
        .collect();

    let free = chu_liu_edmonds(&s);
    if (1..m).filter(|&v| free[v] == 0).count() == 1 {
        return Ok(free[1..].to_vec());
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let from_root: Vec<f64> = (0..m).map(|d| s[d][0]).collect();
    for r in 1..m {
        for d in 1..m {
            s[d][0] = if d == r { from_root[d] } else { NEG };
        }
        let heads = chu_liu_edmonds(&s);
        let total: f64 = (1..m).map(|d| scores[[d, heads[d]]]).sum();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, heads));
        }
    }
    Ok(best.unwrap().1[1..].to_vec())
}

/// Unconstrained maximum arborescence rooted at node 0; `s[d][h]`, with
/// `NEG` marking forbidden arcs. Returns heads indexed by node.
fn chu_liu_edmonds(s: &[Vec<f64>]) -> Vec<usize> {
    let m = s.len();
    let mut best = vec![0usize; m];
    for v in 1..m {
        let mut bh = 0;
        let mut bs = NEG;
        for (h, &score) in s[v].iter().enumerate() {
            if h != v && score > bs {
                bs = score;
                bh = h;
            }
        }
        best[v] = bh;
    }
    let cycle = match find_cycle(&best) {
        None => return best,
        Some(c) => c,
    };

    let mut in_cycle = vec![false; m];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    let mut map = vec![usize::MAX; m];
    let mut back = Vec::new();
    for v in 0..m {
        if !in_cycle[v] {
            map[v] = back.len();
            back.push(v);
        }
    }
    let c = back.len();
    let m2 = c + 1;
    let mut s2 = vec![vec![NEG; m2]; m2];
    let mut enter = vec![usize::MAX; m2];
    let mut leave = vec![usize::MAX; m2];
    for v in 1..m {
        for u in 0..m {
            if u == v || s[v][u] == NEG {
                continue;
            }
            match (in_cycle[u], in_cycle[v]) {
                (false, false) => s2[map[v]][map[u]] = s[v][u],
                (false, true) => {
                    let gain = s[v][u] - s[v][best[v]];
                    if gain > s2[c][map[u]] {
                        s2[c][map[u]] = gain;
                        enter[map[u]] = v;
                    }
                }
                (true, false) => {
                    if s[v][u] > s2[map[v]][c] {
                        s2[map[v]][c] = s[v][u];
                        leave[map[v]] = u;
                    }
                }
                (true, true) => {}
            }
        }
    }

    let inner = chu_liu_edmonds(&s2);
    let mut heads = vec![0usize; m];
    for v in 1..m {
        if in_cycle[v] {
            heads[v] = best[v];
        } else {
            let h = inner[map[v]];
            heads[v] = if h == c { leave[map[v]] } else { back[h] };
        }
    }
    let h = inner[c];
    heads[enter[h]] = back[h];
    heads
}

/// The first cycle among head pointers, if any; node 0 is the root.
fn find_cycle(heads: &[usize]) -> Option<Vec<usize>> {
    let m = heads.len();
    // 0 = unvisited, 1 = on current path, 2 = done
    let mut state = vec![0u8; m];
    state[0] = 2;
    for start in 1..m {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v];
        }
        if state[v] == 1 {
            let pos = path.iter().position(|&x| x == v).unwrap();
            return Some(path[pos..].to_vec());
        }
        for p in path {
            state[p] = 2;
        }
    }
    None
}
