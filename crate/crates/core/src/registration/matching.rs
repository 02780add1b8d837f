use serde::{Deserialize, Serialize};

use super::features::Descriptor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub index_a: usize,
    pub index_b: usize,
    /// Euclidean descriptor distance.
    pub distance: f32,
}

/// Nearest-neighbour matching with a ratio test, restricted to mutual best
/// pairs. Output is ordered by `index_a`.
pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor], ratio: f64) -> Result<Vec<MatchPair>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "match ratio must be in (0, 1], got {ratio}"
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    // best in b for each a: (index, d1², d2²)
    let mut best_b = vec![(usize::MAX, f32::INFINITY, f32::INFINITY); a.len()];
    // best in a for each b: (index, d²)
    let mut best_a = vec![(usize::MAX, f32::INFINITY); b.len()];
    for (i, da) in a.iter().enumerate() {
        let row = &mut best_b[i];
        for (j, db) in b.iter().enumerate() {
            let d = da.distance_sq(db);
            if d < row.1 {
                row.2 = row.1;
                row.1 = d;
                row.0 = j;
            } else if d < row.2 {
                row.2 = d;
            }
            if d < best_a[j].1 {
                best_a[j] = (i, d);
            }
        }
    }
    let r = ratio as f32;
    Ok(best_b
        .iter()
        .enumerate()
        .filter_map(|(i, &(j, d1, d2))| {
            let (d1, d2) = (d1.sqrt(), d2.sqrt());
            (best_a[j].0 == i && d1 < r * d2).then_some(MatchPair {
                index_a: i,
                index_b: j,
                distance: d1,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::features::DESCRIPTOR_LEN;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn unit(v: [f32; DESCRIPTOR_LEN]) -> Descriptor {
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        Descriptor(v.map(|x| x / n))
    }

    fn random_set(n: usize, rng: &mut ChaCha8Rng) -> Vec<Descriptor> {
        (0..n)
            .map(|_| unit(std::array::from_fn(|_| rng.random_range(-1.0f32..1.0))))
            .collect()
    }

    #[test]
    fn identical_sets_match_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_set(40, &mut rng);
        let m = match_descriptors(&a, &a, 0.99).unwrap();
        assert_eq!(m.len(), 40);
        for (k, p) in m.iter().enumerate() {
            assert_eq!((p.index_a, p.index_b), (k, k));
            assert_eq!(p.distance, 0.0);
        }
    }

    #[test]
    fn empty_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_set(5, &mut rng);
        assert!(match_descriptors(&a, &[], 0.8).unwrap().is_empty());
        assert!(match_descriptors(&[], &a, 0.8).unwrap().is_empty());
    }

    #[test]
    fn ratio_out_of_range() {
        assert!(match_descriptors(&[], &[], 0.0).is_err());
        assert!(match_descriptors(&[], &[], 1.5).is_err());
    }

    #[test]
    fn planted_noisy_correspondences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0f32, 0.01).unwrap();
        let n = 200;
        let a = random_set(n, &mut rng);
        // b is a shuffled, perturbed copy of a
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut b = vec![Descriptor([0.0; DESCRIPTOR_LEN]); n];
        for (i, &p) in perm.iter().enumerate() {
            b[p] = unit(std::array::from_fn(|k| a[i].0[k] + noise.sample(&mut rng)));
        }
        let m = match_descriptors(&a, &b, 0.7).unwrap();
        let correct = m.iter().filter(|p| perm[p.index_a] == p.index_b).count();
        assert!(correct as f64 >= 0.9 * n as f64, "{correct}/{n}");
        let mut seen_b: Vec<usize> = m.iter().map(|p| p.index_b).collect();
        seen_b.sort_unstable();
        seen_b.dedup();
        assert_eq!(seen_b.len(), m.len());
    }
}
