use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prdc {
    pub precision: f64,
    pub recall: f64,
    pub density: f64,
    pub coverage: f64,
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance from each row to its `k`-th nearest neighbour in the
/// same set, the row itself excluded.
fn kth_radii(points: ArrayView2<f64>, k: usize) -> Vec<f64> {
    (0..points.nrows())
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..points.nrows())
                .filter(|&j| j != i)
                .map(|j| squared_distance(points.row(i), points.row(j)))
                .collect();
            *d.select_nth_unstable_by(k - 1, f64::total_cmp).1
        })
        .collect()
}

/// Precision, recall, density and coverage with k-NN spheres in Euclidean
/// space. Membership is inclusive, so a point lies inside its own sphere.
pub fn prdc(real: ArrayView2<f64>, fake: ArrayView2<f64>, k: usize) -> Result<Prdc> {
    if k == 0 {
        return Err(Error::arg("prdc needs k >= 1"));
    }
    if k >= real.nrows() || k >= fake.nrows() {
        return Err(Error::arg(format!(
            "prdc needs more than k = {k} rows per side (real {}, fake {})",
            real.nrows(),
            fake.nrows()
        )));
    }
    if real.ncols() != fake.ncols() {
        return Err(Error::Shape {
            context: "prdc columns",
            expected: real.ncols(),
            found: fake.ncols(),
        });
    }
    let real_r = kth_radii(real, k);
    let fake_r = kth_radii(fake, k);

    // For each fake point: how many real spheres contain it, and whether it
    // sits in any.
    let per_fake: Vec<usize> = (0..fake.nrows())
        .into_par_iter()
        .map(|j| {
            (0..real.nrows())
                .filter(|&i| squared_distance(fake.row(j), real.row(i)) <= real_r[i])
                .count()
        })
        .collect();
    // For each real point: covered by a fake point, and inside a fake sphere.
    let per_real: Vec<(bool, bool)> = (0..real.nrows())
        .into_par_iter()
        .map(|i| {
            let mut covered = false;
            let mut recalled = false;
            for j in 0..fake.nrows() {
                let d = squared_distance(real.row(i), fake.row(j));
                covered |= d <= real_r[i];
                recalled |= d <= fake_r[j];
                if covered && recalled {
                    break;
                }
            }
            (covered, recalled)
        })
        .collect();

    let (m, n) = (real.nrows() as f64, fake.nrows() as f64);
    Ok(Prdc {
        precision: per_fake.iter().filter(|&&c| c > 0).count() as f64 / n,
        recall: per_real.iter().filter(|p| p.1).count() as f64 / m,
        density: per_fake.iter().sum::<usize>() as f64 / (k as f64 * n),
        coverage: per_real.iter().filter(|p| p.0).count() as f64 / m,
    })
}
