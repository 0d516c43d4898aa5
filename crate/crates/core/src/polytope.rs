//! Double-description enumeration for polytopes inside the probability
//! simplex.
//!
//! Both directions reduce to extreme rays of a pointed cone
//! `{x : r·x >= 0 for every row r}`:
//! - vertex enumeration homogenizes `a·q <= b` over the simplex into rows
//!   `b·1 - a` next to the orthant rows `e_j`;
//! - facet enumeration takes the dual cone of the vertex cone inside the
//!   linear span of the vertices, with the orthogonal complement of that
//!   span emitted as equalities.

use fixedbitset::FixedBitSet;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Half-space `a·q <= b`, relative to the simplex `q >= 0, Σq = 1`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Halfspace {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        Halfspace { a, b }
    }

    pub fn slack(&self, q: &[f64]) -> f64 {
        self.b - dot(&self.a, q)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn scale_max_abs(v: &mut [f64]) -> bool {
    let m = max_abs(v);
    if m == 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= m;
    }
    true
}

struct Ray {
    x: Vec<f64>,
    zeros: FixedBitSet,
}

/// Extreme rays of the pointed cone `{x ∈ R^dim : row·x >= 0}`.
///
/// Rows are rescaled to unit max-norm; `tol` decides which rows a ray lies
/// on. Fails with `Internal` if the rows do not have full rank.
pub fn extreme_rays(dim: usize, rows: &[Vec<f64>], tol: f64) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = rows
        .iter()
        .filter_map(|r| {
            let mut r = r.clone();
            scale_max_abs(&mut r).then_some(r)
        })
        .collect();
    rows.dedup();
    let nrows = rows.len();

    // greedy choice of an independent starting set
    let mut basis_rows = Vec::with_capacity(dim);
    let mut reduced: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for (i, r) in rows.iter().enumerate() {
        let mut v = r.clone();
        for b in &reduced {
            let p = b.iter().position(|x| x.abs() > 0.5).unwrap_or(0);
            let f = v[p] / b[p];
            for (vj, bj) in v.iter_mut().zip(b) {
                *vj -= f * bj;
            }
        }
        let m = max_abs(&v);
        if m > 1e-9 {
            for x in v.iter_mut() {
                *x /= m;
            }
            // normalize so the pivot entry is the largest
            let p = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0;
            let f = v[p];
            for x in v.iter_mut() {
                *x /= f;
            }
            reduced.push(v);
            basis_rows.push(i);
            if basis_rows.len() == dim {
                break;
            }
        }
    }
    if basis_rows.len() < dim {
        return Err(Error::Internal(format!(
            "cone rows have rank {} < {dim}",
            basis_rows.len()
        )));
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| rows[basis_rows[i]][j]);
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::Internal("singular starting basis".into()))?;
    let mut rays: Vec<Ray> = (0..dim)
        .map(|j| {
            let mut x: Vec<f64> = inv.column(j).iter().copied().collect();
            scale_max_abs(&mut x);
            let mut zeros = FixedBitSet::with_capacity(nrows);
            for (k, &bi) in basis_rows.iter().enumerate() {
                if k != j {
                    zeros.insert(bi);
                }
            }
            Ray { x, zeros }
        })
        .collect();
    let mut in_basis = FixedBitSet::with_capacity(nrows);
    for &bi in &basis_rows {
        in_basis.insert(bi);
    }
    for (i, row) in rows.iter().enumerate() {
        if in_basis.contains(i) {
            continue;
        }
        let vals: Vec<f64> = rays.iter().map(|r| dot(row, &r.x)).collect();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (k, &v) in vals.iter().enumerate() {
            if v > tol {
                pos.push(k);
            } else if v < -tol {
                neg.push(k);
            } else {
                rays[k].zeros.insert(i);
            }
        }
        if neg.is_empty() {
            continue;
        }
        let mut fresh = Vec::new();
        for &p in &pos {
            for &q in &neg {
                let mut common = rays[p].zeros.clone();
                common.intersect_with(&rays[q].zeros);
                if common.count_ones(..) + 2 < dim {
                    continue;
                }
                let adjacent = rays
                    .iter()
                    .enumerate()
                    .all(|(k, r)| k == p || k == q || !common.is_subset(&r.zeros));
                if !adjacent {
                    continue;
                }
                let (vp, vq) = (vals[p], vals[q]);
                let mut x: Vec<f64> = rays[q]
                    .x
                    .iter()
                    .zip(&rays[p].x)
                    .map(|(xq, xp)| vp * xq - vq * xp)
                    .collect();
                if !scale_max_abs(&mut x) {
                    continue;
                }
                common.insert(i);
                fresh.push(Ray { x, zeros: common });
            }
        }
        let mut keep_neg = FixedBitSet::with_capacity(rays.len());
        for &q in &neg {
            keep_neg.insert(q);
        }
        let mut k = 0;
        rays.retain(|_| {
            let keep = !keep_neg.contains(k);
            k += 1;
            keep
        });
        rays.extend(fresh);
    }
    Ok(rays.into_iter().map(|r| r.x).collect())
}

/// Removes near-duplicates in the max norm, keeping first occurrences.
pub fn dedup_points(points: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        let dup = out
            .iter()
            .any(|o| o.iter().zip(&p).all(|(a, b)| (a - b).abs() <= tol));
        if !dup {
            out.push(p);
        }
    }
    out
}

/// Snaps tiny magnitudes to zero and rescales to unit sum.
pub(crate) fn clean_probability(mut q: Vec<f64>, zero: f64) -> Vec<f64> {
    for x in q.iter_mut() {
        if x.abs() <= zero {
            *x = 0.0;
        }
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = q.iter().sum();
    if s > 0.0 {
        for x in q.iter_mut() {
            *x /= s;
        }
    }
    q
}

/// Vertices of `{q in R^n : q >= 0, Σq = 1, a·q <= b}`.
pub fn enumerate_vertices(n: usize, halfspaces: &[Halfspace], tol: f64) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut r = vec![0.0; n];
            r[j] = 1.0;
            r
        })
        .collect();
    for h in halfspaces {
        if h.a.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: h.a.len(),
            });
        }
        rows.push(h.a.iter().map(|a| h.b - a).collect());
    }
    let rays = extreme_rays(n, &rows, tol)?;
    let points = rays
        .into_iter()
        .filter_map(|x| {
            let s: f64 = x.iter().sum();
            (s > 0.0).then(|| clean_probability(x.iter().map(|v| v / s).collect(), 1e-13))
        })
        .collect();
    Ok(dedup_points(points, tol))
}

/// Half-space description of the convex hull of `points` (each summing to
/// one), relative to the simplex.
pub fn facets(points: &[Vec<f64>], tol: f64) -> Result<Vec<Halfspace>> {
    let Some(first) = points.first() else {
        return Err(Error::EmptySet);
    };
    let n = first.len();
    let gram = {
        let mut g = DMatrix::<f64>::zeros(n, n);
        for p in points {
            let v = DVector::from_column_slice(p);
            g += &v * v.transpose();
        }
        g
    };
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let mut span = Vec::new();
    let mut complement = Vec::new();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        if lambda > 1e-12 * top.max(1.0) {
            span.push(v);
        } else {
            complement.push(v);
        }
    }
    let d = span.len();
    let coords: Vec<Vec<f64>> = points
        .iter()
        .map(|p| span.iter().map(|u| dot(u, p)).collect())
        .collect();
    let dual_rays = extreme_rays(d, &coords, tol)?;
    let mut out = Vec::new();
    for h in dual_rays {
        // g·q >= 0 with g = U h
        let mut g = vec![0.0; n];
        for (u, &hk) in span.iter().zip(&h) {
            for (gj, uj) in g.iter_mut().zip(u) {
                *gj += hk * uj;
            }
        }
        let mut a: Vec<f64> = g.iter().map(|x| -x).collect();
        if scale_max_abs(&mut a) {
            out.push(Halfspace::new(a, 0.0));
        }
    }
    for mut w in complement {
        if scale_max_abs(&mut w) {
            out.push(Halfspace::new(w.clone(), 0.0));
            out.push(Halfspace::new(w.iter().map(|x| -x).collect(), 0.0));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    fn close(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(x, y)| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-9))
    }

    #[test]
    fn simplex_vertices_are_unit_masses() {
        let v = sorted(enumerate_vertices(3, &[], 1e-9).unwrap());
        assert!(close(
            &v,
            &[
                vec![0.0, 0.0, 1.0],
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0]
            ]
        ));
    }

    #[test]
    fn one_dimensional_cut() {
        let v =
            sorted(enumerate_vertices(2, &[Halfspace::new(vec![1.0, 0.0], 0.6)], 1e-9).unwrap());
        assert!(close(&v, &[vec![0.0, 1.0], vec![0.6, 0.4]]));
    }

    #[test]
    fn empty_polytope_has_no_vertices() {
        let h = [
            Halfspace::new(vec![1.0, 0.0], 0.2),
            Halfspace::new(vec![-1.0, 0.0], -0.5),
        ];
        assert!(enumerate_vertices(2, &h, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn square_section_with_equalities() {
        // q0 + q2 = 1/2, q1 + q3 = 1/2
        let h = [
            Halfspace::new(vec![1.0, 0.0, 1.0, 0.0], 0.5),
            Halfspace::new(vec![-1.0, 0.0, -1.0, 0.0], -0.5),
        ];
        let v = enumerate_vertices(4, &h, 1e-9).unwrap();
        assert_eq!(v.len(), 4);
        for p in &v {
            assert!((p[0] + p[2] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn facets_round_trip() {
        let pts = vec![
            vec![0.5, 0.3, 0.2, 0.0],
            vec![0.1, 0.1, 0.4, 0.4],
            vec![0.25, 0.25, 0.25, 0.25],
            vec![0.0, 0.6, 0.1, 0.3],
        ];
        let h = facets(&pts, 1e-9).unwrap();
        for p in &pts {
            assert!(h.iter().all(|hs| hs.slack(p) >= -1e-9));
        }
        let back = sorted(enumerate_vertices(4, &h, 1e-9).unwrap());
        assert!(close(&back, &sorted(pts)));
    }

    #[test]
    fn facets_of_single_point() {
        let pts = vec![vec![0.2, 0.8]];
        let h = facets(&pts, 1e-9).unwrap();
        let back = enumerate_vertices(2, &h, 1e-9).unwrap();
        assert!(close(&back, &pts));
    }

    #[test]
    fn facets_of_segment_inside_square() {
        let pts = vec![vec![0.4, 0.1, 0.4, 0.1], vec![0.1, 0.4, 0.1, 0.4]];
        let h = facets(&pts, 1e-9).unwrap();
        let back = sorted(enumerate_vertices(4, &h, 1e-9).unwrap());
        assert!(close(&back, &sorted(pts)));
        let outside = [0.4, 0.1, 0.1, 0.4];
        assert!(h.iter().any(|hs| hs.slack(&outside) < -1e-6));
    }
}
