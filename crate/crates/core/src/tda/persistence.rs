use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::filtration::Filtration;
use crate::error::{Error, Result};

/// Birth/death pairs of components (H0) and holes (H1).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub pairs_h0: Vec<(f64, f64)>,
    pub pairs_h1: Vec<(f64, f64)>,
    /// Number of classes that never die (one per nonempty cloud).
    pub essential_h0: usize,
}

impl PersistenceDiagram {
    pub fn pairs(&self, dimension: usize) -> &[(f64, f64)] {
        match dimension {
            0 => &self.pairs_h0,
            1 => &self.pairs_h1,
            _ => &[],
        }
    }

    pub fn max_death(&self) -> f64 {
        self.pairs_h0.iter().chain(&self.pairs_h1).map(|p| p.1).fold(0.0, f64::max)
    }
}

/// Persistence pairs as positions in the filtration order, including
/// zero-length pairs.
#[derive(Debug, Clone, Default)]
pub struct IndexedPairs {
    pub h0: Vec<(usize, usize)>,
    pub h1: Vec<(usize, usize)>,
    pub essential: Vec<usize>,
}

struct UnionFind {
    parent: Vec<usize>,
    /// Filtration position of the oldest vertex in the component.
    birth: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Pairs by filtration position: H0 by union-find over edges, H1 by
/// reducing the triangle boundary columns over Z/2.
pub fn persistence_indexed(filt: &Filtration) -> Result<IndexedPairs> {
    let s = &filt.simplices;
    let mut vertex_pos: HashMap<usize, usize> = HashMap::new();
    let mut edge_pos: HashMap<[usize; 2], usize> = HashMap::new();
    let mut uf = UnionFind { parent: Vec::new(), birth: Vec::new() };
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut out = IndexedPairs::default();
    let mut pivot_owner: HashMap<usize, Vec<usize>> = HashMap::new();

    for (pos, sx) in s.iter().enumerate() {
        if pos > 0 && s[pos - 1].value > sx.value {
            return Err(Error::NonMonotoneFiltration(pos));
        }
        let face_ok = |face_pos: Option<&usize>| matches!(face_pos, Some(&fp) if fp < pos && s[fp].value <= sx.value);
        match sx.dim {
            0 => {
                vertex_pos.insert(sx.vertices[0], pos);
                slot.insert(sx.vertices[0], uf.parent.len());
                uf.parent.push(uf.parent.len());
                uf.birth.push(pos);
            }
            1 => {
                let [a, b, _] = sx.vertices;
                if !face_ok(vertex_pos.get(&a)) || !face_ok(vertex_pos.get(&b)) {
                    return Err(Error::NonMonotoneFiltration(pos));
                }
                edge_pos.insert([a.min(b), a.max(b)], pos);
                let (ra, rb) = (uf.find(slot[&a]), uf.find(slot[&b]));
                if ra != rb {
                    // Elder rule: the younger component dies.
                    let (old, young) = if uf.birth[ra] <= uf.birth[rb] { (ra, rb) } else { (rb, ra) };
                    out.h0.push((uf.birth[young], pos));
                    uf.parent[young] = old;
                }
            }
            2 => {
                let [a, b, c] = sx.vertices;
                let mut column = Vec::with_capacity(3);
                for e in [[a, b], [a, c], [b, c]] {
                    let e = [e[0].min(e[1]), e[0].max(e[1])];
                    let p = edge_pos.get(&e);
                    if !face_ok(p) {
                        return Err(Error::NonMonotoneFiltration(pos));
                    }
                    column.push(*p.expect("checked"));
                }
                column.sort_unstable();
                while let Some(&low) = column.last() {
                    match pivot_owner.get(&low) {
                        Some(other) => column = symmetric_difference(&column, other),
                        None => break,
                    }
                }
                if let Some(&low) = column.last() {
                    out.h1.push((low, pos));
                    pivot_owner.insert(low, column);
                }
            }
            d => return Err(Error::InvalidInput(format!("simplex of dimension {d} in planar filtration"))),
        }
    }
    for v in 0..uf.parent.len() {
        if uf.find(v) == v {
            out.essential.push(uf.birth[v]);
        }
    }
    Ok(out)
}

/// Persistence diagram in filtration values. Zero-length H1 pairs are
/// dropped; H0 keeps all `n - 1` finite pairs. Pairs are sorted by death.
pub fn persistence_pairs(filt: &Filtration) -> Result<PersistenceDiagram> {
    let idx = persistence_indexed(filt)?;
    let v = |p: usize| filt.simplices[p].value;
    let sort = |pairs: &mut Vec<(f64, f64)>| pairs.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    let mut pairs_h0: Vec<(f64, f64)> = idx.h0.iter().map(|&(_, d)| (0.0, v(d))).collect();
    let mut pairs_h1: Vec<(f64, f64)> = idx.h1.iter().map(|&(b, d)| (v(b), v(d))).filter(|(b, d)| d > b).collect();
    sort(&mut pairs_h0);
    sort(&mut pairs_h1);
    Ok(PersistenceDiagram { pairs_h0, pairs_h1, essential_h0: idx.essential.len() })
}
