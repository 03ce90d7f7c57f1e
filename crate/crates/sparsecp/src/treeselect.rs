//! Best kappa-subtree selection on rooted forests.
//!
//! A valid selection must respect the hierarchy: a node can only be selected
//! if its parent is selected (roots are exempt). The dynamic program merges
//! child tables into parent tables bottom-up, producing the optimal subtree
//! for every size at once. An exhaustive enumerator serves as testing oracle.

use std::io::Write;
use std::sync::Arc;

use crate::criteria::{Selection, Selector};
use crate::error::{Error, Result};

/// Parent-array hierarchy over `m` nodes. Nodes are indexed `0..m`;
/// `parent[i] == None` marks a root. The CSV form is 1-based with parent 0
/// as the root marker.
#[derive(Debug, Clone)]
pub struct Forest {
    parent: Vec<Option<usize>>,
}

impl Forest {
    pub fn new(parent: Vec<Option<usize>>) -> Result<Self> {
        let m = parent.len();
        for (i, &p) in parent.iter().enumerate() {
            if let Some(p) = p {
                if p >= m || p == i {
                    return Err(Error::InvalidForest { node: i });
                }
            }
        }
        // Cycle check by pointer chasing with a visit stamp.
        let mut state = vec![0u8; m]; // 0 unseen, 1 on path, 2 done
        for start in 0..m {
            if state[start] != 0 {
                continue;
            }
            let mut path = Vec::new();
            let mut i = start;
            loop {
                if state[i] == 1 {
                    return Err(Error::InvalidForest { node: i });
                }
                if state[i] == 2 {
                    break;
                }
                state[i] = 1;
                path.push(i);
                match parent[i] {
                    Some(p) => i = p,
                    None => break,
                }
            }
            for j in path {
                state[j] = 2;
            }
        }
        if m > 0 && !parent.iter().any(|p| p.is_none()) {
            return Err(Error::InvalidForest { node: 0 });
        }
        Ok(Forest { parent })
    }

    /// Builds from a 1-based parent array where 0 means "root".
    pub fn from_parent_array(parent: &[usize]) -> Result<Self> {
        let conv: Vec<Option<usize>> = parent
            .iter()
            .map(|&p| if p == 0 { None } else { Some(p - 1) })
            .collect();
        Forest::new(conv)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    /// Children lists, each sorted ascending.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.len()];
        for (i, &p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                ch[p].push(i);
            }
        }
        ch
    }

    pub fn roots(&self) -> Vec<usize> {
        self.parent
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    /// True when `sel` respects the hierarchy.
    pub fn is_closed(&self, sel: &[usize]) -> bool {
        let mut member = vec![false; self.len()];
        for &i in sel {
            member[i] = true;
        }
        sel.iter().all(|&i| match self.parent[i] {
            Some(p) => member[p],
            None => true,
        })
    }

    /// CSV `node,parent`, 1-based, parent 0 = root.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "node,parent")?;
        for (i, &p) in self.parent.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, p.map_or(0, |p| p + 1))?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let node: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidArgument("bad node column".into()))?;
            let parent: usize = rec
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidArgument("bad parent column".into()))?;
            pairs.push((node, parent));
        }
        let m = pairs.len();
        let mut parent = vec![0usize; m];
        for (node, p) in pairs {
            if node == 0 || node > m {
                return Err(Error::InvalidForest { node });
            }
            parent[node - 1] = p;
        }
        Forest::from_parent_array(&parent)
    }
}

/// Per-node elementary mass functions. Convex with minimum 0 at the origin.
#[derive(Clone)]
#[derive(Default)]
pub enum MassSpec {
    /// `M_i(x) = x^2`, the default.
    #[default]
    Square,
    /// `M_i(x) = |x|`.
    Abs,
    /// Arbitrary per-node mass `(node, value) -> mass`.
    Custom(Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>),
}


impl MassSpec {
    pub fn eval(&self, node: usize, x: f64) -> f64 {
        match self {
            MassSpec::Square => x * x,
            MassSpec::Abs => x.abs(),
            MassSpec::Custom(f) => f(node, x),
        }
    }
}

/// The best selection and its mass for every size `0..=kappa_max`.
#[derive(Debug, Clone)]
pub struct SubtreePath {
    /// `selections[kappa]`: sorted node indices of the best size-kappa subtree.
    pub selections: Vec<Vec<usize>>,
    /// `masses[kappa]`: the mass attained by `selections[kappa]`.
    pub masses: Vec<f64>,
}

impl SubtreePath {
    pub fn kappa_max(&self) -> usize {
        self.selections.len() - 1
    }

    /// CSV `kappa,mass,selection` with 1-based semicolon-joined indices.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "kappa,mass,selection")?;
        for kappa in 0..self.selections.len() {
            let sel = self.selections[kappa]
                .iter()
                .map(|&i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(";");
            writeln!(w, "{},{},{}", kappa, self.masses[kappa], sel)?;
        }
        Ok(())
    }
}

const NEG: f64 = f64::NEG_INFINITY;

/// Backtracking record for one DP table version.
enum Version {
    Empty,
    Leaf(usize),
    Merge {
        left: u32,
        right: u32,
        /// `choice[k]` = number of nodes taken from the left (parent) side.
        choice: Vec<u32>,
    },
}

fn collect(arena: &[Version], version: u32, k: usize, out: &mut Vec<usize>) {
    if k == 0 {
        return;
    }
    match &arena[version as usize] {
        Version::Empty => debug_assert_eq!(k, 0),
        Version::Leaf(i) => {
            debug_assert_eq!(k, 1);
            out.push(*i);
        }
        Version::Merge { left, right, choice } => {
            let l = choice[k] as usize;
            collect(arena, *left, l, out);
            collect(arena, *right, k - l, out);
        }
    }
}

/// Finds, for every `kappa <= kappa_max`, the hierarchy-respecting subset of
/// size kappa maximising the accumulated mass. Multiple roots are handled by
/// merging under an artificial zero-mass superroot that never counts toward
/// kappa. Ties in the merge argmax break toward the smallest left count.
pub fn best_subtrees(
    forest: &Forest,
    x: &[f64],
    mass: &MassSpec,
    kappa_max: usize,
) -> Result<SubtreePath> {
    let m = forest.len();
    if x.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: x.len() });
    }
    if let Some(i) = x.iter().position(|v| v.is_nan()) {
        return Err(Error::NanInput { index: i });
    }
    let cap = kappa_max.min(m);
    let children = forest.children();
    let roots = forest.roots();

    // Iterative post-order over the forest (superroot implicit).
    let mut order = Vec::with_capacity(m);
    let mut stack: Vec<(usize, usize)> = roots.iter().rev().map(|&r| (r, 0)).collect();
    while let Some((node, ci)) = stack.pop() {
        if ci < children[node].len() {
            stack.push((node, ci + 1));
            stack.push((children[node][ci], 0));
        } else {
            order.push(node);
        }
    }
    debug_assert_eq!(order.len(), m);

    struct Table {
        masses: Vec<f64>,
        size: usize,
        version: u32,
    }

    let mut arena: Vec<Version> = Vec::new();
    // Finished child tables waiting for their parent, per node.
    let mut pending: Vec<Vec<Table>> = (0..m).map(|_| Vec::new()).collect();
    let mut root_tables: Vec<Table> = Vec::new();

    let merge = |arena: &mut Vec<Version>, base: Table, child: Table, min_left: usize| -> Table {
        let total = (base.size + child.size).min(cap);
        let mut masses = vec![NEG; cap + 1];
        let mut choice = vec![0u32; cap + 1];
        // min_left == 0 only for the superroot, whose table admits emptiness.
        masses[0] = if min_left == 0 { 0.0 } else { NEG };
        for k in 1..=total {
            let lo = min_left.max(k.saturating_sub(child.size));
            let hi = k.min(base.size);
            let mut best = NEG;
            let mut best_l = 0u32;
            for l in lo..=hi {
                if base.masses[l] == NEG {
                    continue;
                }
                let c = child.masses[k - l];
                if c == NEG {
                    continue;
                }
                let v = base.masses[l] + c;
                if v > best {
                    best = v;
                    best_l = l as u32;
                }
            }
            masses[k] = best;
            choice[k] = best_l;
        }
        arena.push(Version::Merge {
            left: base.version,
            right: child.version,
            choice,
        });
        Table {
            masses,
            size: total,
            version: (arena.len() - 1) as u32,
        }
    };

    for &node in &order {
        // Start table: the node alone.
        let mut masses = vec![NEG; cap + 1];
        masses[0] = NEG; // a nonempty subtree rooted here must include the node
        if cap >= 1 {
            masses[1] = mass.eval(node, x[node]);
        }
        arena.push(Version::Leaf(node));
        let mut table = Table {
            masses,
            size: 1,
            version: (arena.len() - 1) as u32,
        };
        // Merge convolution: left count l >= 1 keeps the parent in.
        for child in std::mem::take(&mut pending[node]) {
            table = merge(&mut arena, table, child, 1);
        }
        // S_0 = empty set enters once the rooted subtree is complete.
        table.masses[0] = 0.0;
        match forest.parent(node) {
            Some(p) => pending[p].push(table),
            None => root_tables.push(table),
        }
    }

    // Superroot: zero mass, excluded from kappa, left count may be zero.
    arena.push(Version::Empty);
    let mut table = Table {
        masses: {
            let mut v = vec![NEG; cap + 1];
            v[0] = 0.0;
            v
        },
        size: 0,
        version: (arena.len() - 1) as u32,
    };
    for child in root_tables {
        table = merge(&mut arena, table, child, 0);
    }

    let mut selections = Vec::with_capacity(cap + 1);
    let mut masses = Vec::with_capacity(cap + 1);
    for kappa in 0..=cap {
        debug_assert!(table.masses[kappa] != NEG, "kappa {kappa} unreachable");
        let mut sel = Vec::with_capacity(kappa);
        collect(&arena, table.version, kappa, &mut sel);
        sel.sort_unstable();
        debug_assert_eq!(sel.len(), kappa);
        masses.push(table.masses[kappa]);
        selections.push(sel);
    }
    Ok(SubtreePath { selections, masses })
}

/// Exhaustive oracle: enumerates every hierarchy-respecting subset of each
/// size and keeps the exact maximiser, breaking ties toward the
/// lexicographically smallest index set. Guarded to `m <= 20`.
pub fn brute_force_subtrees(
    forest: &Forest,
    x: &[f64],
    mass: &MassSpec,
    kappa_max: usize,
) -> Result<SubtreePath> {
    let m = forest.len();
    if m > 20 {
        return Err(Error::BruteForceTooLarge { m });
    }
    if x.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: x.len() });
    }
    if let Some(i) = x.iter().position(|v| v.is_nan()) {
        return Err(Error::NanInput { index: i });
    }
    let cap = kappa_max.min(m);
    let node_mass: Vec<f64> = (0..m).map(|i| mass.eval(i, x[i])).collect();

    let mut best_mass = vec![NEG; cap + 1];
    let mut best_set: Vec<Option<Vec<usize>>> = vec![None; cap + 1];
    best_mass[0] = 0.0;
    best_set[0] = Some(vec![]);

    for bits in 1u32..(1u32 << m) {
        let size = bits.count_ones() as usize;
        if size > cap {
            continue;
        }
        let mut closed = true;
        for i in 0..m {
            if bits & (1 << i) != 0 {
                if let Some(p) = forest.parent(i) {
                    if bits & (1 << p) == 0 {
                        closed = false;
                        break;
                    }
                }
            }
        }
        if !closed {
            continue;
        }
        let total: f64 = (0..m)
            .filter(|&i| bits & (1 << i) != 0)
            .map(|i| node_mass[i])
            .sum();
        let replace = if total > best_mass[size] {
            true
        } else if total == best_mass[size] {
            let set: Vec<usize> = (0..m).filter(|&i| bits & (1 << i) != 0).collect();
            best_set[size].as_ref().is_none_or(|cur| set < *cur)
        } else {
            false
        };
        if replace {
            best_mass[size] = total;
            best_set[size] = Some((0..m).filter(|&i| bits & (1 << i) != 0).collect());
        }
    }

    let mut selections = Vec::with_capacity(cap + 1);
    let mut masses = Vec::with_capacity(cap + 1);
    for kappa in 0..=cap {
        let set = best_set[kappa]
            .take()
            .ok_or_else(|| Error::Numerical(format!("no closed subset of size {kappa}")))?;
        selections.push(set);
        masses.push(best_mass[kappa]);
    }
    Ok(SubtreePath { selections, masses })
}

/// Adapts [`best_subtrees`] to the [`Selector`] contract. In the
/// diagonal-projection setting the captured noise energy is the sum of
/// squared selected coordinates.
#[derive(Clone)]
pub struct TreeSelector {
    forest: Forest,
    mass: MassSpec,
}

pub fn tree_selector(forest: &Forest, mass: MassSpec) -> TreeSelector {
    TreeSelector {
        forest: forest.clone(),
        mass,
    }
}

impl Selector for TreeSelector {
    fn dim(&self) -> usize {
        self.forest.len()
    }

    fn select(&self, z: &[f64], kappa_max: usize) -> Result<Vec<Selection>> {
        let path = best_subtrees(&self.forest, z, &self.mass, kappa_max)?;
        Ok(path
            .selections
            .into_iter()
            .map(|indices| {
                let energy = indices.iter().map(|&i| z[i] * z[i]).sum();
                Selection { indices, energy }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn forest_1based(parent: &[usize]) -> Forest {
        Forest::from_parent_array(parent).unwrap()
    }

    #[test]
    fn chain_forces_nesting() {
        // chain 1 -> 2 -> 3 (1-based), x = [sqrt5, 1, sqrt10]
        let f = forest_1based(&[0, 1, 2]);
        let x = [5.0f64.sqrt(), 1.0, 10.0f64.sqrt()];
        let path = best_subtrees(&f, &x, &MassSpec::Square, 3).unwrap();
        assert_eq!(path.selections[1], vec![0]);
        assert_eq!(path.selections[2], vec![0, 1]);
        assert_eq!(path.selections[3], vec![0, 1, 2]);
    }

    #[test]
    fn deep_child_beats_shallow() {
        // root 1, children 2 and 3, node 4 child of 2; x = [1,2,5,10]
        let f = forest_1based(&[0, 1, 1, 2]);
        let x = [1.0, 2.0, 5.0, 10.0];
        let path = best_subtrees(&f, &x, &MassSpec::Square, 3).unwrap();
        assert_eq!(path.selections[3], vec![0, 1, 3]);
        assert_eq!(path.masses[3], 105.0);
    }

    #[test]
    fn star_brute_force() {
        let f = forest_1based(&[0, 1, 1, 1]);
        let x = [0.0, 3.0, 1.0, 2.0];
        let path = brute_force_subtrees(&f, &x, &MassSpec::Square, 4).unwrap();
        assert_eq!(path.selections[0], Vec::<usize>::new());
        assert_eq!(path.masses[0], 0.0);
        assert_eq!(path.selections[2], vec![0, 1]);
        assert_eq!(path.selections[3], vec![0, 1, 3]);
    }

    #[test]
    fn single_node() {
        let f = forest_1based(&[0]);
        let path = brute_force_subtrees(&f, &[2.5], &MassSpec::Square, 1).unwrap();
        assert_eq!(path.selections[1], vec![0]);
    }

    #[test]
    fn brute_force_size_guard() {
        let f = Forest::new(vec![None; 21]).unwrap();
        assert!(matches!(
            brute_force_subtrees(&f, &[0.0; 21], &MassSpec::Square, 2),
            Err(Error::BruteForceTooLarge { m: 21 })
        ));
    }

    #[test]
    fn cyclic_parent_rejected() {
        assert!(matches!(
            Forest::new(vec![Some(1), Some(0)]),
            Err(Error::InvalidForest { .. })
        ));
    }

    #[test]
    fn nan_rejected() {
        let f = forest_1based(&[0, 1]);
        assert!(matches!(
            best_subtrees(&f, &[1.0, f64::NAN], &MassSpec::Square, 2),
            Err(Error::NanInput { index: 1 })
        ));
    }

    /// Random forest: each node's parent is a uniformly chosen earlier node,
    /// or a root with probability 1/3.
    #[allow(clippy::needless_range_loop)]
    fn random_forest(rng: &mut ChaCha8Rng, m: usize) -> Forest {
        let mut parent = vec![None; m];
        for i in 1..m {
            if rng.gen_range(0..3) > 0 {
                parent[i] = Some(rng.gen_range(0..i));
            }
        }
        Forest::new(parent).unwrap()
    }

    #[test]
    fn dp_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let m = rng.gen_range(1..=12);
            let forest = random_forest(&mut rng, m);
            let x: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let dp = best_subtrees(&forest, &x, &MassSpec::Square, m).unwrap();
            let bf = brute_force_subtrees(&forest, &x, &MassSpec::Square, m).unwrap();
            for kappa in 0..=m {
                assert!(
                    (dp.masses[kappa] - bf.masses[kappa]).abs() <= 1e-9 * (1.0 + bf.masses[kappa]),
                    "kappa={kappa}: dp={} bf={}",
                    dp.masses[kappa],
                    bf.masses[kappa]
                );
                assert!(forest.is_closed(&dp.selections[kappa]));
                assert_eq!(dp.selections[kappa].len(), kappa);
            }
            // Monotone mass in kappa.
            for kappa in 1..=m {
                assert!(dp.masses[kappa] >= dp.masses[kappa - 1] - 1e-12);
            }
        }
    }

    #[test]
    fn all_roots_is_top_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 9;
        let forest = Forest::new(vec![None; m]).unwrap();
        let x: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let path = best_subtrees(&forest, &x, &MassSpec::Square, m).unwrap();
        let mut sorted: Vec<f64> = x.iter().map(|v| v * v).collect();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for kappa in 0..=m {
            let expect: f64 = sorted[..kappa].iter().sum();
            assert!((path.masses[kappa] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let forest = random_forest(&mut rng, 12);
        let x: Vec<f64> = (0..12).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = best_subtrees(&forest, &x, &MassSpec::Square, 12).unwrap();
        let b = best_subtrees(&forest, &x, &MassSpec::Square, 12).unwrap();
        assert_eq!(a.selections, b.selections);
        assert_eq!(a.masses, b.masses);
    }

    #[test]
    fn selector_energy_consistency() {
        // balanced binary tree on 7 nodes, 1-based parent floor(i/2)
        let f = forest_1based(&[0, 1, 1, 2, 2, 3, 3]);
        let sel = tree_selector(&f, MassSpec::Square);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..7).map(|_| StandardNormal.sample(&mut rng)).collect();
        let out = sel.select(&z, 7).unwrap();
        for (kappa, s) in out.iter().enumerate() {
            assert_eq!(s.indices.len(), kappa);
            let recompute: f64 = s.indices.iter().map(|&i| z[i] * z[i]).sum();
            assert_eq!(s.energy, recompute);
        }
        // all zeros and one-hot cases
        let out = sel.select(&[0.0; 7], 7).unwrap();
        assert!(out.iter().all(|s| s.energy == 0.0));
        let mut z = vec![0.0; 7];
        z[0] = 1.0;
        let out = sel.select(&z, 1).unwrap();
        assert_eq!(out[1].indices, vec![0]);
        assert_eq!(out[1].energy, 1.0);
    }

    #[test]
    fn forest_csv_roundtrip() {
        let f = forest_1based(&[0, 1, 1, 2]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = Forest::read_csv(&buf[..]).unwrap();
        assert_eq!(
            (0..4).map(|i| g.parent(i)).collect::<Vec<_>>(),
            (0..4).map(|i| f.parent(i)).collect::<Vec<_>>()
        );
    }
}
