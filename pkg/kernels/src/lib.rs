//! Native kernels for point-cloud grouping and surface descriptors.
//!
//! Exposed as a flat, versioned C ABI over contiguous float64 / int64
//! buffers so any caller (the Python package loads it through ctypes)
//! can drive the hot loops without marshalling.
//!
//! Contract highlights, see CONTRACT.md for the full text:
//!
//! * Squared distances accumulate in the fixed order
//!   `(dx*dx + dy*dy) + dz*dz`; no FMA, no reordering. Index decisions
//!   (FPS picks, kNN ordering) therefore agree bitwise with a reference
//!   that uses the same arithmetic, ties always resolving to the lowest
//!   point index.
//! * Descriptor floats (normals, curvature) agree with the reference
//!   eigendecomposition to 1e-6; exact-diagonal covariances reproduce
//!   the reference solver's tie ordering (ascending eigenvalue, then
//!   ascending coordinate axis).
//! * Every entry point returns 0 on success, -1 on a null pointer and
//!   -2 on an out-of-range argument, writing nothing on failure.

use std::slice;

pub const ABI_VERSION: u32 = 1;

const ERR_NULL: i32 = -1;
const ERR_RANGE: i32 = -2;
const OK: i32 = 0;

#[no_mangle]
pub extern "C" fn pcad_abi_version() -> u32 {
    ABI_VERSION
}

/// Squared euclidean distance between points `a` and `b` of a flat
/// (n, 3) row-major buffer, accumulated as `(dx*dx + dy*dy) + dz*dz`.
#[inline]
fn sq_dist(pts: &[f64], a: usize, b: usize) -> f64 {
    let dx = pts[3 * a] - pts[3 * b];
    let dy = pts[3 * a + 1] - pts[3 * b + 1];
    let dz = pts[3 * a + 2] - pts[3 * b + 2];
    (dx * dx + dy * dy) + dz * dz
}

// ---------------------------------------------------------------------------
// Farthest point sampling
// ---------------------------------------------------------------------------

pub fn fps(pts: &[f64], n: usize, g: usize, start: usize, out: &mut [i64]) {
    out[0] = start as i64;
    let mut min_sq: Vec<f64> = (0..n).map(|j| sq_dist(pts, j, start)).collect();
    for i in 1..g {
        // first occurrence of the maximum = lowest index on ties
        let mut best = 0usize;
        for j in 1..n {
            if min_sq[j] > min_sq[best] {
                best = j;
            }
        }
        out[i] = best as i64;
        for j in 0..n {
            let s = sq_dist(pts, j, best);
            if s < min_sq[j] {
                min_sq[j] = s;
            }
        }
    }
}

/// Greedy maximin farthest point sampling.
///
/// `points` is (n, 3) row-major float64; writes `g` selection-order
/// indices to `out_indices`.
///
/// # Safety
/// `points` must hold `3 * n` readable doubles and `out_indices` `g`
/// writable int64s.
#[no_mangle]
pub unsafe extern "C" fn pcad_fps(
    points: *const f64,
    n: i64,
    g: i64,
    start: i64,
    out_indices: *mut i64,
) -> i32 {
    if points.is_null() || out_indices.is_null() {
        return ERR_NULL;
    }
    if n < 1 || g < 1 || g > n || start < 0 || start >= n {
        return ERR_RANGE;
    }
    let (n, g) = (n as usize, g as usize);
    let pts = slice::from_raw_parts(points, 3 * n);
    let out = slice::from_raw_parts_mut(out_indices, g);
    fps(pts, n, g, start as usize, out);
    OK
}

// ---------------------------------------------------------------------------
// k nearest neighbours
// ---------------------------------------------------------------------------

pub fn knn(pts: &[f64], n: usize, centers: &[i64], r: usize, out: &mut [i64]) {
    let mut dist = vec![0f64; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for (c, &ci) in centers.iter().enumerate() {
        let ci = ci as usize;
        for j in 0..n {
            dist[j] = sq_dist(pts, j, ci);
        }
        order.clear();
        order.extend(0..n);
        let cmp = |a: &usize, b: &usize| {
            dist[*a].total_cmp(&dist[*b]).then(a.cmp(b))
        };
        if r < n {
            order.select_nth_unstable_by(r - 1, cmp);
        }
        order[..r].sort_unstable_by(cmp);
        for (t, &j) in order[..r].iter().enumerate() {
            out[c * r + t] = j as i64;
        }
    }
}

/// The `r` nearest points to each listed center, self included,
/// ascending by distance with ties to the lowest index.
///
/// Writes a (g, r) row-major int64 matrix to `out_indices`.
///
/// # Safety
/// `points`: `3 * n` readable doubles; `centers`: `g` readable int64s;
/// `out_indices`: `g * r` writable int64s.
#[no_mangle]
pub unsafe extern "C" fn pcad_knn(
    points: *const f64,
    n: i64,
    centers: *const i64,
    g: i64,
    r: i64,
    out_indices: *mut i64,
) -> i32 {
    if points.is_null() || centers.is_null() || out_indices.is_null() {
        return ERR_NULL;
    }
    if n < 1 || g < 0 || r < 1 || r > n {
        return ERR_RANGE;
    }
    let (n, g, r) = (n as usize, g as usize, r as usize);
    let center_idx = slice::from_raw_parts(centers, g);
    if center_idx.iter().any(|&c| c < 0 || c >= n as i64) {
        return ERR_RANGE;
    }
    let pts = slice::from_raw_parts(points, 3 * n);
    let out = slice::from_raw_parts_mut(out_indices, g * r);
    knn(pts, n, center_idx, r, out);
    OK
}

// ---------------------------------------------------------------------------
// Symmetric 3x3 eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Eigenvalues (ascending) and matching unit eigenvector columns of a
/// symmetric 3x3 matrix.
///
/// An exactly diagonal input performs no rotations, so tied eigenvalues
/// keep their coordinate-axis eigenvectors ordered by axis index, the
/// same ordering the reference LAPACK path produces for such inputs.
pub fn eigh3(m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= f64::EPSILON * f64::EPSILON * (diag + off) || off == 0.0 {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = if theta >= 0.0 {
                1.0 / (theta + (theta * theta + 1.0).sqrt())
            } else {
                -1.0 / (-theta + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let (app, aqq) = (a[p][p], a[q][q]);
            a[p][p] = app - t * apq;
            a[q][q] = aqq + t * apq;
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            let k = 3 - p - q; // the remaining axis
            let (akp, akq) = (a[k][p], a[k][q]);
            a[k][p] = c * akp - s * akq;
            a[p][k] = a[k][p];
            a[k][q] = s * akp + c * akq;
            a[q][k] = a[k][q];
            for row in 0..3 {
                let (vp, vq) = (v[row][p], v[row][q]);
                v[row][p] = c * vp - s * vq;
                v[row][q] = s * vp + c * vq;
            }
        }
    }
    // ascending eigenvalue order, ties by original axis index
    let mut idx = [0usize, 1, 2];
    for i in 1..3 {
        let mut j = i;
        while j > 0 {
            let (lo, hi) = (idx[j - 1], idx[j]);
            if a[hi][hi] < a[lo][lo] {
                idx.swap(j - 1, j);
                j -= 1;
            } else {
                break;
            }
        }
    }
    let evals = [a[idx[0]][idx[0]], a[idx[1]][idx[1]], a[idx[2]][idx[2]]];
    let mut evecs = [[0.0; 3]; 3];
    for col in 0..3 {
        for row in 0..3 {
            evecs[row][col] = v[row][idx[col]];
        }
    }
    (evals, evecs)
}

// ---------------------------------------------------------------------------
// Per-point surface descriptors
// ---------------------------------------------------------------------------

/// Deterministic sign convention: flip so the component along +z is
/// positive, falling through to +x then +y on exact zeros.
fn canonicalize(nv: &mut [f64; 3]) {
    for &axis in &[2usize, 0, 1] {
        let c = nv[axis];
        if c < 0.0 {
            nv[0] = -nv[0];
            nv[1] = -nv[1];
            nv[2] = -nv[2];
            return;
        }
        if c != 0.0 {
            return;
        }
    }
}

pub fn point_descriptors(
    pts: &[f64],
    n: usize,
    radius: f64,
    normals: &mut [f64],
    kappa: &mut [f64],
    fallback: &mut [u8],
) {
    let r_sq = radius * radius;
    let mut dist = vec![0f64; n];
    let mut members: Vec<usize> = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for j in 0..n {
        for i in 0..n {
            dist[i] = sq_dist(pts, i, j);
        }
        members.clear();
        members.extend((0..n).filter(|&i| dist[i] <= r_sq));
        fallback[j] = 0;
        if members.len() < 3 {
            fallback[j] = 1;
            let take = n.min(3);
            order.clear();
            order.extend(0..n);
            let cmp = |a: &usize, b: &usize| {
                dist[*a].total_cmp(&dist[*b]).then(a.cmp(b))
            };
            if take < n {
                order.select_nth_unstable_by(take - 1, cmp);
            }
            order[..take].sort_unstable_by(cmp);
            members.clear();
            members.extend_from_slice(&order[..take]);
        }
        let m = members.len() as f64;
        let mut mean = [0f64; 3];
        for &i in &members {
            mean[0] += pts[3 * i];
            mean[1] += pts[3 * i + 1];
            mean[2] += pts[3 * i + 2];
        }
        for v in &mut mean {
            *v /= m;
        }
        let mut cov = [[0f64; 3]; 3];
        for &i in &members {
            let d = [
                pts[3 * i] - mean[0],
                pts[3 * i + 1] - mean[1],
                pts[3 * i + 2] - mean[2],
            ];
            for a in 0..3 {
                for b in a..3 {
                    cov[a][b] += d[a] * d[b];
                }
            }
        }
        for a in 0..3 {
            for b in a..3 {
                cov[a][b] /= m;
                cov[b][a] = cov[a][b];
            }
        }
        let (evals, evecs) = eigh3(cov);
        let total = evals[0] + evals[1] + evals[2];
        let mut nv;
        if total > 0.0 {
            let k = (evals[0] / total).clamp(0.0, 1.0 / 3.0);
            kappa[j] = k;
            nv = [evecs[0][0], evecs[1][0], evecs[2][0]];
        } else {
            kappa[j] = 0.0;
            nv = [0.0, 0.0, 1.0];
        }
        canonicalize(&mut nv);
        normals[3 * j] = nv[0];
        normals[3 * j + 1] = nv[1];
        normals[3 * j + 2] = nv[2];
    }
}

/// Normal, curvature and fallback flag for every point from its radius
/// neighborhood (the point itself always qualifies; fewer than 3
/// members fall back to the 3 nearest points and set the flag).
///
/// Curvature is `lambda_0 / (lambda_0 + lambda_1 + lambda_2)` of the
/// neighborhood covariance, clamped to [0, 1/3]; a zero-trace
/// covariance yields curvature 0 and the canonical +z normal.
///
/// # Safety
/// `points`: `3 * n` readable doubles; `out_normals`: `3 * n` writable
/// doubles; `out_kappa`: `n` writable doubles; `out_fallback`: `n`
/// writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pcad_point_descriptors(
    points: *const f64,
    n: i64,
    radius: f64,
    out_normals: *mut f64,
    out_kappa: *mut f64,
    out_fallback: *mut u8,
) -> i32 {
    if points.is_null() || out_normals.is_null() || out_kappa.is_null() || out_fallback.is_null()
    {
        return ERR_NULL;
    }
    if n < 1 {
        return ERR_RANGE;
    }
    let n = n as usize;
    let pts = slice::from_raw_parts(points, 3 * n);
    let normals = slice::from_raw_parts_mut(out_normals, 3 * n);
    let kappa = slice::from_raw_parts_mut(out_kappa, n);
    let fallback = slice::from_raw_parts_mut(out_fallback, n);
    point_descriptors(pts, n, radius, normals, kappa, fallback);
    OK
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(rows: &[[f64; 3]]) -> Vec<f64> {
        rows.iter().flatten().copied().collect()
    }

    #[test]
    fn abi_version_is_one() {
        assert_eq!(pcad_abi_version(), 1);
    }

    #[test]
    fn fps_square_with_tie() {
        // unit square: from corner 0 the farthest is the diagonal corner,
        // then the two remaining corners tie and the lower index wins
        let pts = flat(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
        ]);
        let mut out = [0i64; 4];
        fps(&pts, 4, 4, 0, &mut out);
        assert_eq!(out, [0, 3, 1, 2]);
    }

    #[test]
    fn fps_duplicate_points_pick_lowest_index() {
        let pts = flat(&[[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let mut out = [0i64; 3];
        fps(&pts, 4, 3, 0, &mut out);
        // point 2 and 3 tie for farthest; afterwards every distance is 0
        // and the first index wins
        assert_eq!(out, [0, 2, 0]);
    }

    #[test]
    fn knn_orders_by_distance_then_index() {
        let pts = flat(&[
            [0.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
        ]);
        let centers = [0i64];
        let mut out = [0i64; 4];
        knn(&pts, 4, &centers, 4, &mut out);
        // distances 0, 4, 1, 1: the (2, 3) pair ties at 1 -> index order
        assert_eq!(out, [0, 2, 3, 1]);
    }

    #[test]
    fn knn_row_starts_with_center() {
        let pts = flat(&[[0.4, 0.2, -1.0], [3.0, 2.0, 1.0], [0.0, 1.0, 0.5]]);
        let centers = [1i64, 2];
        let mut out = [0i64; 4];
        knn(&pts, 3, &centers, 2, &mut out);
        assert_eq!(out[0], 1);
        assert_eq!(out[2], 2);
    }

    #[test]
    fn eigh3_diagonal_tie_order_matches_axis_order() {
        let (evals, evecs) = eigh3([[0.25, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(evals, [0.0, 0.0, 0.25]);
        // tied zero eigenvalues keep axis order: y first, then z
        assert_eq!(evecs[1][0], 1.0);
        assert_eq!(evecs[2][1], 1.0);
        assert_eq!(evecs[0][2], 1.0);
    }

    #[test]
    fn eigh3_recovers_known_spectrum() {
        // A = Q diag(1, 2, 5) Q^T for a rotation Q around (1,1,1)
        let q = [
            [2.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0],
            [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0],
            [-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0],
        ];
        let d = [1.0, 2.0, 5.0];
        let mut a = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                for k in 0..3 {
                    a[r][c] += q[r][k] * d[k] * q[c][k];
                }
            }
        }
        let (evals, evecs) = eigh3(a);
        for (got, want) in evals.iter().zip(&d) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        // residual ||A v - lambda v|| per eigenpair
        for col in 0..3 {
            for r in 0..3 {
                let av: f64 = (0..3).map(|c| a[r][c] * evecs[c][col]).sum();
                assert!((av - evals[col] * evecs[r][col]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn descriptors_on_a_plane() {
        // z = 0 grid: normals +z, curvature 0
        let mut rows = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                rows.push([i as f64 * 0.1, j as f64 * 0.1, 0.0]);
            }
        }
        let pts = flat(&rows);
        let n = rows.len();
        let mut normals = vec![0.0; 3 * n];
        let mut kappa = vec![1.0; n];
        let mut fb = vec![9u8; n];
        point_descriptors(&pts, n, 0.25, &mut normals, &mut kappa, &mut fb);
        for j in 0..n {
            assert_eq!(fb[j], 0);
            assert!(kappa[j].abs() < 1e-12);
            assert!((normals[3 * j + 2] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn descriptors_coincident_cloud() {
        let pts = vec![0.0; 3 * 5];
        let mut normals = vec![0.0; 15];
        let mut kappa = vec![1.0; 5];
        let mut fb = vec![0u8; 5];
        point_descriptors(&pts, 5, 0.5, &mut normals, &mut kappa, &mut fb);
        for j in 0..5 {
            assert_eq!(kappa[j], 0.0);
            assert_eq!(&normals[3 * j..3 * j + 3], &[0.0, 0.0, 1.0]);
            // five coincident members qualify: no fallback
            assert_eq!(fb[j], 0);
        }
    }

    #[test]
    fn descriptors_sparse_fallback_flags() {
        // two far-apart points: every neighborhood needs the fallback
        let pts = flat(&[[0.0; 3], [10.0, 0.0, 0.0]]);
        let mut normals = vec![0.0; 6];
        let mut kappa = vec![0.0; 2];
        let mut fb = vec![0u8; 2];
        point_descriptors(&pts, 2, 0.5, &mut normals, &mut kappa, &mut fb);
        assert_eq!(fb, vec![1, 1]);
    }

    #[test]
    fn error_codes() {
        let pts = flat(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        let mut out = [0i64; 2];
        unsafe {
            assert_eq!(
                pcad_fps(std::ptr::null(), 2, 1, 0, out.as_mut_ptr()),
                ERR_NULL
            );
            assert_eq!(pcad_fps(pts.as_ptr(), 2, 3, 0, out.as_mut_ptr()), ERR_RANGE);
            assert_eq!(pcad_fps(pts.as_ptr(), 2, 1, 2, out.as_mut_ptr()), ERR_RANGE);
            assert_eq!(pcad_fps(pts.as_ptr(), 2, 1, -1, out.as_mut_ptr()), ERR_RANGE);
            let centers = [5i64];
            assert_eq!(
                pcad_knn(pts.as_ptr(), 2, centers.as_ptr(), 1, 1, out.as_mut_ptr()),
                ERR_RANGE
            );
            let centers = [0i64];
            assert_eq!(
                pcad_knn(pts.as_ptr(), 2, centers.as_ptr(), 1, 3, out.as_mut_ptr()),
                ERR_RANGE
            );
            let mut k = [0f64; 2];
            let mut nm = [0f64; 6];
            let mut f = [0u8; 2];
            assert_eq!(
                pcad_point_descriptors(
                    pts.as_ptr(),
                    0,
                    0.5,
                    nm.as_mut_ptr(),
                    k.as_mut_ptr(),
                    f.as_mut_ptr()
                ),
                ERR_RANGE
            );
            assert_eq!(
                pcad_point_descriptors(
                    pts.as_ptr(),
                    2,
                    0.5,
                    std::ptr::null_mut(),
                    k.as_mut_ptr(),
                    f.as_mut_ptr()
                ),
                ERR_NULL
            );
        }
    }

    #[test]
    fn ffi_roundtrip_matches_safe_impl() {
        let pts = flat(&[
            [0.1, -0.4, 0.9],
            [1.2, 0.3, -0.5],
            [-0.7, 0.8, 0.2],
            [0.0, 0.0, 0.0],
            [0.5, 0.5, 0.5],
        ]);
        let mut want = [0i64; 3];
        fps(&pts, 5, 3, 0, &mut want);
        let mut got = [0i64; 3];
        let rc = unsafe { pcad_fps(pts.as_ptr(), 5, 3, 0, got.as_mut_ptr()) };
        assert_eq!(rc, OK);
        assert_eq!(want, got);
    }
}
