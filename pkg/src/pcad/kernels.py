"""Pluggable compute backends for the grouping and descriptor hot loops.

Two backends expose the same three operations:

* ``reference``: the pure numpy implementations in :mod:`pcad.grouping`
  and :mod:`pcad.geometry`. Always available.
* ``native``: a shared library loaded through ctypes (built separately,
  see ``kernels/`` at the repository root). Exposes a stable, versioned
  C ABI over flat float64/int64 arrays.

Both backends must return bitwise-identical FPS and kNN index arrays:
index decisions are made on squared distances accumulated in the fixed
order ``(dx*dx + dy*dy) + dz*dz`` with lowest-index tie-breaks, and the
native side reproduces that arithmetic exactly. Descriptor floats agree
to 1e-6 (eigensolvers may legitimately differ in the last bits).

ABI summary (version 1):

.. code-block:: c

    uint32_t pcad_abi_version(void);
    int32_t  pcad_fps(const double *points, int64_t n, int64_t g,
                      int64_t start, int64_t *out_indices);
    int32_t  pcad_knn(const double *points, int64_t n,
                      const int64_t *centers, int64_t g, int64_t r,
                      int64_t *out_indices);
    int32_t  pcad_point_descriptors(const double *points, int64_t n,
                                    double radius, double *out_normals,
                                    double *out_kappa,
                                    uint8_t *out_fallback);

All functions return 0 on success and a negative code on invalid input.
"""

from __future__ import annotations

import ctypes
import os
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

ABI_VERSION = 1

_ERRORS = {
    -1: "null pointer argument",
    -2: "argument out of range",
}


class ReferenceBackend:
    """Pure numpy implementations; the behavioural ground truth."""

    name = "reference"

    def fps(self, points: np.ndarray, g: int, start: int = 0) -> np.ndarray:
        from .grouping import fps

        return fps(points, g, start)

    def knn(self, points: np.ndarray, center_indices: np.ndarray, r: int) -> np.ndarray:
        from .grouping import knn_indices

        return knn_indices(points, center_indices, r)

    def point_descriptors(
        self, points: np.ndarray, radius: float
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        from .geometry import point_normals_curvature

        return point_normals_curvature(points, radius)


class NativeBackend:
    """ctypes binding to the compiled kernel library."""

    name = "native"

    def __init__(self, library_path: str):
        self._lib = ctypes.CDLL(library_path)
        self.library_path = library_path
        self._lib.pcad_abi_version.restype = ctypes.c_uint32
        self._lib.pcad_abi_version.argtypes = []
        version = int(self._lib.pcad_abi_version())
        if version != ABI_VERSION:
            raise ConfigError(
                f"kernel library {library_path} has ABI version {version}, "
                f"this build expects {ABI_VERSION}"
            )
        f64p = ctypes.POINTER(ctypes.c_double)
        i64p = ctypes.POINTER(ctypes.c_int64)
        u8p = ctypes.POINTER(ctypes.c_uint8)
        i64 = ctypes.c_int64
        self._lib.pcad_fps.restype = ctypes.c_int32
        self._lib.pcad_fps.argtypes = [f64p, i64, i64, i64, i64p]
        self._lib.pcad_knn.restype = ctypes.c_int32
        self._lib.pcad_knn.argtypes = [f64p, i64, i64p, i64, i64, i64p]
        self._lib.pcad_point_descriptors.restype = ctypes.c_int32
        self._lib.pcad_point_descriptors.argtypes = [
            f64p,
            i64,
            ctypes.c_double,
            f64p,
            f64p,
            u8p,
        ]

    @staticmethod
    def _check(rc: int, op: str) -> None:
        if rc != 0:
            raise ValueError(f"native {op} failed: {_ERRORS.get(rc, f'code {rc}')}")

    def fps(self, points: np.ndarray, g: int, start: int = 0) -> np.ndarray:
        pts = np.ascontiguousarray(points, dtype=np.float64)
        n = pts.shape[0]
        if not 1 <= g <= n:
            raise ValueError(f"g={g} must be in [1, {n}]")
        if not 0 <= start < n:
            raise ValueError(f"start={start} out of range [0, {n})")
        out = np.empty(g, dtype=np.int64)
        rc = self._lib.pcad_fps(
            pts.ctypes.data_as(ctypes.POINTER(ctypes.c_double)),
            n,
            g,
            start,
            out.ctypes.data_as(ctypes.POINTER(ctypes.c_int64)),
        )
        self._check(rc, "fps")
        return out

    def knn(self, points: np.ndarray, center_indices: np.ndarray, r: int) -> np.ndarray:
        pts = np.ascontiguousarray(points, dtype=np.float64)
        centers = np.ascontiguousarray(center_indices, dtype=np.int64)
        n = pts.shape[0]
        if not 1 <= r <= n:
            raise ValueError(f"r={r} must be in [1, {n}]")
        out = np.empty((centers.shape[0], r), dtype=np.int64)
        rc = self._lib.pcad_knn(
            pts.ctypes.data_as(ctypes.POINTER(ctypes.c_double)),
            n,
            centers.ctypes.data_as(ctypes.POINTER(ctypes.c_int64)),
            centers.shape[0],
            r,
            out.ctypes.data_as(ctypes.POINTER(ctypes.c_int64)),
        )
        self._check(rc, "knn")
        return out

    def point_descriptors(
        self, points: np.ndarray, radius: float
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pts = np.ascontiguousarray(points, dtype=np.float64)
        n = pts.shape[0]
        normals = np.empty((n, 3), dtype=np.float64)
        kappa = np.empty(n, dtype=np.float64)
        fallback = np.empty(n, dtype=np.uint8)
        rc = self._lib.pcad_point_descriptors(
            pts.ctypes.data_as(ctypes.POINTER(ctypes.c_double)),
            n,
            float(radius),
            normals.ctypes.data_as(ctypes.POINTER(ctypes.c_double)),
            kappa.ctypes.data_as(ctypes.POINTER(ctypes.c_double)),
            fallback.ctypes.data_as(ctypes.POINTER(ctypes.c_uint8)),
        )
        self._check(rc, "point_descriptors")
        return normals, kappa, fallback.astype(bool)


_REFERENCE = ReferenceBackend()


def reference_backend() -> ReferenceBackend:
    return _REFERENCE


def _library_candidates() -> list[Path]:
    paths = []
    env = os.environ.get("PCAD_KERNELS_LIB")
    if env:
        paths.append(Path(env))
    repo = Path(__file__).resolve().parents[2]
    for profile in ("release", "debug"):
        for stem in ("libpcad_kernels.so", "libpcad_kernels.dylib", "pcad_kernels.dll"):
            paths.append(repo / "kernels" / "target" / profile / stem)
    return paths


def native_backend(library_path: str | None = None) -> NativeBackend:
    """Load the native backend, raising OSError when no library is found."""
    if library_path is not None:
        return NativeBackend(library_path)
    for candidate in _library_candidates():
        if candidate.is_file():
            return NativeBackend(str(candidate))
    raise OSError(
        "no kernel library found; build it with `cargo build --release` in "
        "kernels/ or point PCAD_KERNELS_LIB at the shared object"
    )


def get_backend(name: str | None = None):
    """Resolve a backend by name: 'reference', 'native', or 'auto'/None.

    'auto' silently falls back to the reference backend when the native
    library is absent; asking for 'native' explicitly does not.
    """
    if name in (None, "auto"):
        try:
            return native_backend()
        except OSError:
            return _REFERENCE
    if name == "reference":
        return _REFERENCE
    if name == "native":
        return native_backend()
    raise ConfigError(f"unknown kernel backend {name!r}")
