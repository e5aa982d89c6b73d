//! Energy-based reduction of a wide activation matrix to its `k` most active
//! columns.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Mean absolute activation per column.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyVector {
    pub energies: Vec<f64>,
}

pub fn compute_energy(z: &FeatureMatrix) -> EnergyVector {
    let n = z.nrows() as f64;
    let energies = z
        .values()
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n)
        .collect();
    EnergyVector { energies }
}

/// Column positions of the `k` largest energies, ordered by descending
/// energy. Ties go to the lower position.
pub fn top_k_indices(energy: &EnergyVector, k: usize) -> Result<Vec<usize>> {
    let m = energy.energies.len();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!(
            "top_k must be in 1..={m}, got {k}"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    // stable sort keeps the lower index first on equal energies
    order.sort_by(|&a, &b| energy.energies[b].total_cmp(&energy.energies[a]));
    order.truncate(k);
    Ok(order)
}

/// Keeps the `k` most energetic columns of `z`. The result's column ids are
/// the original latent ids, in descending-energy order.
pub fn select_top_k(z: &FeatureMatrix, energy: &EnergyVector, k: usize) -> Result<FeatureMatrix> {
    if energy.energies.len() != z.ncols() {
        return Err(Error::Dimension(format!(
            "{} energies for {} columns",
            energy.energies.len(),
            z.ncols()
        )));
    }
    let keep = top_k_indices(energy, k)?;
    let src = z.values();
    let values = DMatrix::from_fn(z.nrows(), k, |i, j| src[(i, keep[j])]);
    let ids = keep.iter().map(|&j| z.column_ids()[j]).collect();
    FeatureMatrix::new(values, ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z() -> FeatureMatrix {
        FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![-3.0, 2.0]]).unwrap()
    }

    #[test]
    fn energy_is_mean_abs() {
        assert_eq!(compute_energy(&z()).energies, vec![2.0, 1.0]);
        let single = FeatureMatrix::from_rows(&[vec![5.0]]).unwrap();
        assert_eq!(compute_energy(&single).energies, vec![5.0]);
        let zero = FeatureMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(compute_energy(&zero).energies[0], 0.0);
    }

    #[test]
    fn top_one() {
        let e = compute_energy(&z());
        let r = select_top_k(&z(), &e, 1).unwrap();
        assert_eq!(r.column_ids(), &[0]);
        assert_eq!(r.values().column(0).as_slice(), &[1.0, -3.0]);
    }

    #[test]
    fn full_selection_reorders_by_energy() {
        let m = FeatureMatrix::from_rows(&[vec![0.5, 4.0, 1.0]]).unwrap();
        let r = select_top_k(&m, &compute_energy(&m), 3).unwrap();
        assert_eq!(r.column_ids(), &[1, 2, 0]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let m = FeatureMatrix::new(DMatrix::from_row_slice(1, 2, &[1.0, -1.0]), vec![7, 3])
            .unwrap();
        let r = select_top_k(&m, &compute_energy(&m), 1).unwrap();
        // position 0 wins even though its latent id is larger
        assert_eq!(r.column_ids(), &[7]);
    }

    #[test]
    fn k_out_of_range() {
        let e = compute_energy(&z());
        assert!(select_top_k(&z(), &e, 3).is_err());
        assert!(select_top_k(&z(), &e, 0).is_err());
    }

    fn brute_force(energy: &[f64], k: usize) -> Vec<usize> {
        let mut pairs: Vec<(f64, i64)> =
            energy.iter().enumerate().map(|(i, &e)| (e, -(i as i64))).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        let mut set: Vec<usize> = pairs[..k].iter().map(|p| (-p.1) as usize).collect();
        set.sort_unstable();
        set
    }

    fn matrix_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
        (1usize..20, 1usize..20).prop_flat_map(|(n, m)| {
            (
                // small integer grid so ties actually occur
                prop::collection::vec(prop::collection::vec(-3i32..4, m), n)
                    .prop_map(|r| r.into_iter().map(|row| row.into_iter().map(f64::from).collect()).collect()),
                1..=m,
            )
        })
    }

    proptest! {
        #[test]
        fn matches_sort_oracle((rows, k) in matrix_strategy()) {
            let m = FeatureMatrix::from_rows(&rows).unwrap();
            let e = compute_energy(&m);
            let r = select_top_k(&m, &e, k).unwrap();
            let mut got = r.column_ids().to_vec();
            got.sort_unstable();
            prop_assert_eq!(got, brute_force(&e.energies, k));
            let sel: Vec<f64> = r.column_ids().iter().map(|&j| e.energies[j]).collect();
            let min_sel = sel.iter().cloned().fold(f64::INFINITY, f64::min);
            for (j, &ej) in e.energies.iter().enumerate() {
                if !r.column_ids().contains(&j) {
                    prop_assert!(ej <= min_sel);
                }
            }
            prop_assert!(sel.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn column_permutation_equivariance(
            rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 6), 1..10),
            k in 1usize..=6,
            perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            // continuous values: ties have probability zero, so the selected
            // latent set must not depend on column order
            let m = FeatureMatrix::from_rows(&rows).unwrap();
            let src = m.values();
            let permuted = FeatureMatrix::new(
                DMatrix::from_fn(src.nrows(), 6, |i, j| src[(i, perm[j])]),
                perm.clone(),
            ).unwrap();
            let a = select_top_k(&m, &compute_energy(&m), k).unwrap();
            let b = select_top_k(&permuted, &compute_energy(&permuted), k).unwrap();
            prop_assert_eq!(a.column_ids(), b.column_ids());
        }
    }
}
