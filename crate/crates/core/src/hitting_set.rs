//! Deterministic greedy hitting sets and the layer-minimizing radius
//! selection used by the repair and store-building passes.

use thiserror::Error;

use crate::graph::{VertexId, VertexSet};

#[derive(Debug, Error, PartialEq)]
pub enum HittingSetError {
    #[error("set {index} has {size} elements, below the declared minimum {min}")]
    SetTooSmall {
        index: usize,
        size: usize,
        min: usize,
    },
    #[error("element {0} outside universe of size {1}")]
    ElementOutOfRange(usize, usize),
    #[error("no integer lies in the open interval ({0}, {1})")]
    EmptyInterval(f64, f64),
}

/// Collection of subsets of `0..universe_size`, each of size at least
/// `min_size`.
#[derive(Debug, Clone)]
pub struct SetSystem {
    pub universe_size: usize,
    pub sets: Vec<Vec<usize>>,
    pub min_size: usize,
}

impl SetSystem {
    fn validate(&self) -> Result<(), HittingSetError> {
        for (index, set) in self.sets.iter().enumerate() {
            if set.len() < self.min_size.max(1) {
                return Err(HittingSetError::SetTooSmall {
                    index,
                    size: set.len(),
                    min: self.min_size,
                });
            }
            for &e in set {
                if e >= self.universe_size {
                    return Err(HittingSetError::ElementOutOfRange(e, self.universe_size));
                }
            }
        }
        Ok(())
    }
}

/// Size bound guaranteed by [`greedy_hitting_set`]:
/// ceil((u/s) * ln(k+1)) + 1 for k sets over a universe of u elements.
pub fn greedy_bound(universe_size: usize, min_size: usize, set_count: usize) -> usize {
    let u = universe_size as f64;
    let s = min_size.max(1) as f64;
    ((u / s) * ((set_count + 1) as f64).ln()).ceil() as usize + 1
}

/// Greedy hitting set: repeatedly take the element covering the most
/// uncovered sets, ties broken by smallest element id.
pub fn greedy_hitting_set(sys: &SetSystem) -> Result<VertexSet, HittingSetError> {
    sys.validate()?;
    let u = sys.universe_size;
    let mut member_of: Vec<Vec<u32>> = vec![Vec::new(); u];
    for (i, set) in sys.sets.iter().enumerate() {
        for &e in set {
            member_of[e].push(i as u32);
        }
    }
    let mut gain: Vec<usize> = member_of.iter().map(|m| m.len()).collect();
    let mut covered = vec![false; sys.sets.len()];
    let mut remaining = sys.sets.len();
    let mut out = VertexSet::new(u);
    // lazy max-heap keyed on (gain, reverse id); stale entries are skipped
    let mut heap: std::collections::BinaryHeap<(usize, std::cmp::Reverse<usize>)> = (0..u)
        .filter(|&e| gain[e] > 0)
        .map(|e| (gain[e], std::cmp::Reverse(e)))
        .collect();
    while remaining > 0 {
        let (g, std::cmp::Reverse(e)) = heap.pop().expect("uncovered sets imply candidates");
        if g != gain[e] {
            if gain[e] > 0 {
                heap.push((gain[e], std::cmp::Reverse(e)));
            }
            continue;
        }
        out.insert(e);
        for &si in &member_of[e] {
            let si = si as usize;
            if !covered[si] {
                covered[si] = true;
                remaining -= 1;
                for &x in &sys.sets[si] {
                    gain[x] = gain[x].saturating_sub(1);
                }
            }
        }
        gain[e] = 0;
    }
    Ok(out)
}

/// Radius plus the hop layer it selects.
#[derive(Debug, Clone)]
pub struct SeparatorChoice {
    pub radius: u32,
    pub members: VertexSet,
    /// Number of non-excluded vertices whose hop lies inside the interval.
    pub candidates: usize,
    /// Number of integers inside the open interval.
    pub integer_count: usize,
}

/// Picks the integer radius in the open interval `(lo, hi)` whose hop layer
/// (over `hops`, minus `excluded`) is smallest, ties to the smaller radius.
///
/// By pigeonhole the chosen layer has at most `candidates / integer_count`
/// members.
pub fn choose_radius(
    hops: &[(VertexId, u32)],
    lo: f64,
    hi: f64,
    excluded: &VertexSet,
    n_slots: usize,
) -> Result<SeparatorChoice, HittingSetError> {
    let first = (lo.floor() as i64 + 1).max(0) as u32;
    let mut radii = Vec::new();
    let mut r = first;
    while (r as f64) < hi {
        if (r as f64) > lo {
            radii.push(r);
        }
        r += 1;
    }
    if radii.is_empty() {
        return Err(HittingSetError::EmptyInterval(lo, hi));
    }
    let base = radii[0];
    let mut layer_sizes = vec![0usize; radii.len()];
    for &(v, h) in hops {
        if excluded.contains(v) {
            continue;
        }
        if h >= base && ((h - base) as usize) < radii.len() {
            layer_sizes[(h - base) as usize] += 1;
        }
    }
    let candidates: usize = layer_sizes.iter().sum();
    let best = (0..radii.len())
        .min_by_key(|&i| (layer_sizes[i], radii[i]))
        .unwrap();
    let radius = radii[best];
    let members = VertexSet::from_iter(
        n_slots,
        hops.iter()
            .filter(|(v, h)| *h == radius && !excluded.contains(*v))
            .map(|(v, _)| *v),
    );
    // pigeonhole: the smallest layer times the layer count cannot exceed the
    // total candidate mass
    debug_assert!(members.len() * radii.len() <= candidates);
    Ok(SeparatorChoice {
        radius,
        members,
        candidates,
        integer_count: radii.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn hits_all(sys: &SetSystem, a: &VertexSet) -> bool {
        sys.sets.iter().all(|s| s.iter().any(|&e| a.contains(e)))
    }

    #[test]
    fn common_element_wins() {
        let sys = SetSystem {
            universe_size: 4,
            sets: vec![vec![0, 1], vec![1, 2], vec![1, 3]],
            min_size: 2,
        };
        let a = greedy_hitting_set(&sys).unwrap();
        assert!(hits_all(&sys, &a));
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn disjoint_singletons_force_both() {
        let sys = SetSystem {
            universe_size: 2,
            sets: vec![vec![0], vec![1]],
            min_size: 1,
        };
        let a = greedy_hitting_set(&sys).unwrap();
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn rejects_small_set() {
        let sys = SetSystem {
            universe_size: 3,
            sets: vec![vec![0, 1], vec![2]],
            min_size: 2,
        };
        assert!(matches!(
            greedy_hitting_set(&sys),
            Err(HittingSetError::SetTooSmall { index: 1, .. })
        ));
    }

    #[test]
    fn random_systems_hit_within_bound() {
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..20 {
            let u = 50;
            let s = 10;
            let mut sets = Vec::new();
            for _ in 0..100 {
                let mut set = Vec::new();
                while set.len() < s {
                    let e = rng.gen_range(0..u);
                    if !set.contains(&e) {
                        set.push(e);
                    }
                }
                sets.push(set);
            }
            let sys = SetSystem {
                universe_size: u,
                sets,
                min_size: s,
            };
            let a = greedy_hitting_set(&sys).unwrap();
            assert!(hits_all(&sys, &a));
            assert!(a.len() <= greedy_bound(u, s, sys.sets.len()));
        }
    }

    #[test]
    fn greedy_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut sets = Vec::new();
        for _ in 0..30 {
            let mut set: Vec<usize> = (0..20).filter(|_| rng.gen_bool(0.3)).collect();
            if set.len() < 2 {
                set = vec![0, 1];
            }
            sets.push(set);
        }
        let sys = SetSystem {
            universe_size: 20,
            sets,
            min_size: 2,
        };
        let a = greedy_hitting_set(&sys).unwrap();
        let b = greedy_hitting_set(&sys).unwrap();
        assert_eq!(a.iter().collect::<Vec<_>>(), b.iter().collect::<Vec<_>>());
    }

    #[test]
    fn radius_on_path_graph_layers() {
        // hop(x) = x on a path graph; layers are singletons
        let hops: Vec<(VertexId, u32)> = (0..10).map(|x| (x, x as u32)).collect();
        let none = VertexSet::new(10);
        let c = choose_radius(&hops, 1.6875, 3.375, &none, 10).unwrap();
        assert_eq!(c.integer_count, 2); // {2, 3}
        assert_eq!(c.radius, 2);
        assert_eq!(c.members.iter().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn radius_single_choice_takes_everything() {
        let hops: Vec<(VertexId, u32)> = (0..6).map(|x| (x, 2)).collect();
        let none = VertexSet::new(6);
        let c = choose_radius(&hops, 1.125, 2.25, &none, 6).unwrap();
        assert_eq!(c.radius, 2);
        assert_eq!(c.members.len(), 6);
    }

    #[test]
    fn radius_errors_on_empty_interval() {
        let hops = vec![(0, 1)];
        let none = VertexSet::new(1);
        assert!(matches!(
            choose_radius(&hops, 1.1, 1.9, &none, 1),
            Err(HittingSetError::EmptyInterval(..))
        ));
    }

    #[test]
    fn radius_layer_obeys_pigeonhole_on_random_tree() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..10 {
            // random tree: parent(x) < x, hop = depth
            let n = 100;
            let mut hops = vec![(0, 0u32)];
            for x in 1..n {
                let p = rng.gen_range(0..x);
                let d = hops[p].1 + 1;
                hops.push((x, d));
            }
            let none = VertexSet::new(n);
            let (lo, hi) = (2.53, 5.06);
            let c = choose_radius(&hops, lo, hi, &none, n).unwrap();
            let in_band = hops
                .iter()
                .filter(|(_, h)| (*h as f64) > lo && (*h as f64) < hi)
                .count();
            assert_eq!(c.candidates, in_band);
            assert!(c.members.len() * c.integer_count <= in_band.max(c.members.len()));
            assert!(c.members.len() <= in_band.div_ceil(c.integer_count).max(1));
        }
    }

    #[test]
    fn radius_excludes_vertices() {
        let hops: Vec<(VertexId, u32)> = vec![(0, 2), (1, 2), (2, 2)];
        let ex = VertexSet::from_iter(3, [1]);
        let c = choose_radius(&hops, 1.5, 2.5, &ex, 3).unwrap();
        assert_eq!(c.members.iter().collect::<Vec<_>>(), vec![0, 2]);
    }
}
