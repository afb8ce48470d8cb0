"""Backend dispatch plus native/reference equivalence (skipped if unbuilt)."""

import numpy as np
import pytest

from pcad import kernels
from pcad.exceptions import ConfigError
from pcad.geometry import point_normals_curvature
from pcad.grouping import fps, knn_indices


def native_or_skip():
    try:
        return kernels.native_backend()
    except OSError:
        pytest.skip("native kernel library not built")


def assert_normals_equivalent(pts, radius, n_ref, n_nat, atol=1e-6):
    """Unsigned direction agreement, degenerate eigenspaces excepted.

    Downstream consumers only take unsigned angles, so normals are
    compared as lines. Where the two backends still disagree the
    neighborhood covariance must have a degenerate smallest eigenvalue,
    in which case any unit vector of that eigenspace is correct: both
    normals must then satisfy the eigenpair equation to tolerance.
    """
    dots = np.abs((n_ref * n_nat).sum(axis=1))
    r_sq = radius * radius
    for j in np.flatnonzero(dots < 1.0 - atol):
        diff = pts - pts[j]
        sq = (diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]) + diff[:, 2] * diff[:, 2]
        member = np.flatnonzero(sq <= r_sq)
        if member.size < 3:
            member = np.argsort(sq, kind="stable")[:3]
        neigh = pts[member]
        centered = neigh - neigh.mean(axis=0)
        cov = centered.T @ centered / member.size
        lam0 = float(np.linalg.eigvalsh(cov)[0])
        scale = max(float(np.trace(cov)), 1e-30)
        for tag, nv in (("reference", n_ref[j]), ("native", n_nat[j])):
            assert abs(np.linalg.norm(nv) - 1.0) < 1e-9, f"{tag} normal {j} not unit"
            resid = float(np.linalg.norm(cov @ nv - lam0 * nv))
            assert resid <= atol * scale, (
                f"{tag} normal at point {j} is no smallest-eigenvalue "
                f"eigenvector: residual {resid:.3g} (scale {scale:.3g})"
            )


class TestDispatch:
    def test_reference_is_singleton(self):
        assert kernels.get_backend("reference") is kernels.get_backend("reference")
        assert kernels.get_backend("reference") is kernels.reference_backend()

    def test_auto_always_resolves(self):
        backend = kernels.get_backend("auto")
        assert hasattr(backend, "fps")
        assert backend.name in ("reference", "native")
        assert kernels.get_backend(None).name == backend.name

    def test_unknown_name_rejected(self):
        with pytest.raises(ConfigError):
            kernels.get_backend("gpu")

    def test_native_request_fails_loudly_without_library(self, monkeypatch):
        monkeypatch.delenv("PCAD_KERNELS_LIB", raising=False)
        monkeypatch.setattr(kernels, "_library_candidates", lambda: [])
        with pytest.raises(OSError):
            kernels.get_backend("native")

    def test_missing_explicit_path(self, tmp_path):
        with pytest.raises(OSError):
            kernels.native_backend(str(tmp_path / "libnothing.so"))


class TestReferenceDelegation:
    def test_matches_direct_calls(self, rng):
        pts = rng.normal(size=(120, 3))
        backend = kernels.reference_backend()
        centers = backend.fps(pts, 10)
        assert np.array_equal(centers, fps(pts, 10))
        neigh = backend.knn(pts, centers, 6)
        assert np.array_equal(neigh, knn_indices(pts, centers, 6))
        normals, kappa, fb = backend.point_descriptors(pts, 0.8)
        n2, k2, f2 = point_normals_curvature(pts, 0.8)
        assert np.array_equal(normals, n2)
        assert np.array_equal(kappa, k2)
        assert np.array_equal(fb, f2)


def degenerate_clouds():
    rng = np.random.default_rng(5150)
    coincident = np.zeros((40, 3))
    collinear = np.stack([np.linspace(0, 1, 50), np.zeros(50), np.zeros(50)], axis=1)
    coplanar = np.column_stack([rng.normal(size=(60, 2)), np.zeros(60)])
    duplicated = np.repeat(rng.normal(size=(20, 3)), 3, axis=0)
    pair = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    grid = np.stack(
        np.meshgrid(np.arange(4.0), np.arange(4.0), np.arange(4.0)), axis=-1
    ).reshape(-1, 3)
    return [coincident, collinear, coplanar, duplicated, pair, grid]


class TestNativeEquivalence:
    def test_abi_version(self):
        backend = native_or_skip()
        assert backend.name == "native"

    def test_random_clouds_exact_indices(self):
        backend = native_or_skip()
        rng = np.random.default_rng(99)
        for trial in range(100):
            n = int(rng.integers(8, 400))
            pts = rng.normal(size=(n, 3)) * float(rng.uniform(0.1, 10))
            g = int(rng.integers(1, n + 1))
            start = int(rng.integers(0, n))
            want_fps = fps(pts, g, start)
            got_fps = backend.fps(pts, g, start)
            assert np.array_equal(want_fps, got_fps), f"fps trial {trial}"
            r = int(rng.integers(1, min(n, 32) + 1))
            want_knn = knn_indices(pts, want_fps, r)
            got_knn = backend.knn(pts, got_fps, r)
            assert np.array_equal(want_knn, got_knn), f"knn trial {trial}"

    def test_degenerate_clouds_exact_indices(self):
        backend = native_or_skip()
        for i, pts in enumerate(degenerate_clouds()):
            n = len(pts)
            g = min(8, n)
            want = fps(pts, g)
            got = backend.fps(pts, g)
            assert np.array_equal(want, got), f"degenerate cloud {i}"
            r = min(5, n)
            assert np.array_equal(
                knn_indices(pts, want, r), backend.knn(pts, got, r)
            ), f"degenerate knn {i}"

    def test_descriptor_agreement(self):
        backend = native_or_skip()
        rng = np.random.default_rng(7)
        for trial in range(20):
            n = int(rng.integers(30, 200))
            pts = rng.normal(size=(n, 3))
            radius = float(rng.uniform(0.3, 1.5))
            n_ref, k_ref, f_ref = point_normals_curvature(pts, radius)
            n_nat, k_nat, f_nat = backend.point_descriptors(pts, radius)
            assert np.array_equal(f_ref, f_nat), f"fallback flags trial {trial}"
            assert np.allclose(k_ref, k_nat, atol=1e-6), f"kappa trial {trial}"
            assert_normals_equivalent(pts, radius, n_ref, n_nat)

    def test_descriptor_degenerates(self):
        backend = native_or_skip()
        for i, pts in enumerate(degenerate_clouds()):
            n_ref, k_ref, f_ref = point_normals_curvature(pts, 0.75)
            n_nat, k_nat, f_nat = backend.point_descriptors(pts, 0.75)
            assert np.array_equal(f_ref, f_nat), f"cloud {i}"
            assert np.allclose(k_ref, k_nat, atol=1e-6), f"cloud {i}"
            assert_normals_equivalent(pts, 0.75, n_ref, n_nat)
