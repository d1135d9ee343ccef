"""Structured blur operators on square images.

A point-spread function (PSF) with a designated center pixel defines, for each
boundary condition, a linear operator on n-by-n images.  Images are stacked
row-major into vectors of length n^2; under zero boundary conditions the
operator is block-Toeplitz with Toeplitz blocks, under periodic conditions it
is block-circulant with circulant blocks, and under reflective (half-sample
symmetric) conditions it picks up Toeplitz-plus-Hankel corrections.  All three
are applied through one code path: pad the image according to the boundary
rule, circularly convolve on the padded grid via the FFT, and crop back to the
field of view.

The trigonometric polynomial generated by the PSF (its "symbol") ties the
operator to its circulant relatives: sampled on the uniform n-by-n frequency
grid it gives exactly the eigenvalues of the periodic-boundary operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import fft as _fft

__all__ = [
    "BoundaryCondition",
    "Psf",
    "BlurOperator",
    "FlipComposedOperator",
    "sample_symbol",
    "bccb_eigenvalues",
    "apply_flip",
    "materialize_dense",
    "load_psf",
    "save_psf",
]

#: Relative threshold on the imaginary residue left by an FFT round trip.
#: Anything above this is a programming error, not roundoff, and raises.
IMAG_RESIDUE_RTOL = 1e-10

#: |sum(kernel) - 1| tolerance for a PSF to count as normalized (an averaging
#: kernel), and the tolerance used by the kernel symmetry predicates.
NORMALIZATION_ATOL = 1e-12

#: Largest n for which dense materialization is allowed by default.
DENSE_CAP = 64


class BoundaryCondition(Enum):
    """How the scene continues past the field of view."""

    ZERO = "zero"
    PERIODIC = "periodic"
    REFLECTIVE = "reflective"

    @classmethod
    def coerce(cls, value) -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ValueError(
                f"unknown boundary condition {value!r}; expected one of {names}"
            ) from None


_PAD_MODE = {
    BoundaryCondition.ZERO: "constant",
    BoundaryCondition.PERIODIC: "wrap",
    BoundaryCondition.REFLECTIVE: "symmetric",
}


@dataclass(frozen=True)
class Psf:
    """A point-spread function: a real kernel plus the index of its center.

    The center entry is the response at the source pixel itself; entry
    (i, j) of the kernel sits at spatial offset (i - center[0], j - center[1]).
    An explicit center keeps even-extent kernels (e.g. rasterized motion
    smears) unambiguous.

    ``normalized`` may be passed explicitly; by default it is detected from
    the kernel sum.  Passing ``normalized=True`` for a kernel whose entries do
    not sum to 1 (within 1e-12) is an error.
    """

    kernel: np.ndarray
    center: tuple[int, int]
    normalized: bool | None = None

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=float)
        if kernel.ndim != 2 or kernel.size == 0:
            raise ValueError("PSF kernel must be a non-empty 2-D array")
        if not np.all(np.isfinite(kernel)):
            raise ValueError("PSF kernel entries must be finite")
        kernel.setflags(write=False)
        cr, cc = (int(self.center[0]), int(self.center[1]))
        if not (0 <= cr < kernel.shape[0] and 0 <= cc < kernel.shape[1]):
            raise ValueError(
                f"PSF center {(cr, cc)} outside kernel of shape {kernel.shape}"
            )
        is_unit_sum = abs(kernel.sum() - 1.0) <= NORMALIZATION_ATOL
        if self.normalized is None:
            normalized = is_unit_sum
        elif self.normalized and not is_unit_sum:
            raise ValueError(
                "PSF declared normalized but kernel entries sum to "
                f"{kernel.sum()!r}, not 1"
            )
        else:
            normalized = bool(self.normalized)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "center", (cr, cc))
        object.__setattr__(self, "normalized", normalized)

    @property
    def shape(self) -> tuple[int, int]:
        return self.kernel.shape

    @property
    def row_offsets(self) -> np.ndarray:
        return np.arange(self.kernel.shape[0]) - self.center[0]

    @property
    def col_offsets(self) -> np.ndarray:
        return np.arange(self.kernel.shape[1]) - self.center[1]

    @property
    def pad_extents(self) -> tuple[int, int]:
        """Largest spatial offset magnitude per axis (required pad width)."""
        kr, kc = self.kernel.shape
        cr, cc = self.center
        return max(cr, kr - 1 - cr), max(cc, kc - 1 - cc)

    def rotated(self) -> "Psf":
        """The kernel rotated 180 degrees about its center.

        Blurring with the rotated PSF under the same boundary rule is how the
        adjoint-like companion operator is realized.
        """
        kr, kc = self.kernel.shape
        cr, cc = self.center
        return Psf(self.kernel[::-1, ::-1], (kr - 1 - cr, kc - 1 - cc),
                   normalized=self.normalized)

    def _on_canvas(self, flip_rows: bool, flip_cols: bool) -> np.ndarray:
        # Embed the kernel (optionally axis-flipped about the center) in the
        # smallest canvas symmetric about the center, so kernels with the
        # same entries but different trailing zeros compare equal.
        pr, pc = self.pad_extents
        canvas = np.zeros((2 * pr + 1, 2 * pc + 1))
        rows = self.row_offsets * (-1 if flip_rows else 1) + pr
        cols = self.col_offsets * (-1 if flip_cols else 1) + pc
        canvas[np.ix_(rows, cols)] = self.kernel
        return canvas

    @property
    def centrally_symmetric(self) -> bool:
        """True when the kernel equals its 180-degree rotation."""
        a = self._on_canvas(False, False)
        b = self._on_canvas(True, True)
        return bool(np.allclose(a, b, rtol=0.0, atol=NORMALIZATION_ATOL))

    @property
    def quadrantally_symmetric(self) -> bool:
        """True when the kernel is even in each axis separately."""
        a = self._on_canvas(False, False)
        return bool(
            np.allclose(a, self._on_canvas(True, False), rtol=0.0,
                        atol=NORMALIZATION_ATOL)
            and np.allclose(a, self._on_canvas(False, True), rtol=0.0,
                            atol=NORMALIZATION_ATOL)
        )


def _check_support(psf: Psf, n: int):
    kr, kc = psf.kernel.shape
    if kr > n or kc > n:
        raise ValueError(
            f"PSF support {kr}x{kc} does not fit inside a {n}x{n} field of view"
        )
    if n < 1:
        raise ValueError("image side must be positive")


def sample_symbol(psf: Psf, n: int) -> np.ndarray:
    """Sample the PSF's generating trigonometric polynomial on the n-grid.

    Entry (i, j) is  sum_{r,c} h[r,c] * exp(1i*(r*2*pi*i/n + c*2*pi*j/n))
    with (r, c) running over spatial offsets from the center.  The sum is
    evaluated factorized by kernel rows, which is exact up to roundoff and
    cheap for the small supports used here.

    For a normalized PSF the (0, 0) entry equals 1: the operator preserves
    constant images up to boundary effects.
    """
    _check_support(psf, n)
    theta = 2.0 * np.pi * np.arange(n) / n
    col_phase = np.exp(1j * np.outer(psf.col_offsets, theta))   # (kc, n)
    inner = psf.kernel @ col_phase                              # (kr, n)
    row_phase = np.exp(1j * np.outer(theta, psf.row_offsets))   # (n, kr)
    return row_phase @ inner


def _first_circulant_column(psf: Psf, n: int) -> np.ndarray:
    # Kernel entries spread on the n-grid at their offsets taken modulo n:
    # the first column of the periodic-boundary operator.
    canvas = np.zeros((n, n))
    kr, kc = psf.kernel.shape
    canvas[:kr, :kc] = psf.kernel
    return np.roll(canvas, (-psf.center[0], -psf.center[1]), axis=(0, 1))


def bccb_eigenvalues(psf: Psf, n: int) -> np.ndarray:
    """Eigenvalue grid of the periodic-boundary operator.

    Computed as the (conjugated) 2-D DFT of the first circulant column, i.e.
    the circularly shifted PSF; entry (i, j) equals the symbol sampled at
    frequency (2*pi*i/n, 2*pi*j/n), so this agrees elementwise with
    :func:`sample_symbol`.
    """
    _check_support(psf, n)
    return np.conj(_fft.fft2(_first_circulant_column(psf, n)))


def apply_flip(x: np.ndarray) -> np.ndarray:
    """Reverse the stacked pixel order (the anti-identity / exchange matrix).

    On a flat vector this reverses all entries; on an image it reverses both
    axes, which is the same permutation through row-major stacking.  Applying
    it twice is the identity.
    """
    return np.flip(x)


class BlurOperator:
    """Blur of n-by-n images by a PSF under a fixed boundary condition.

    Application pads the image per the boundary rule, multiplies in the
    frequency domain by the cached transfer function of the kernel, and crops
    the field of view.  The padded grid is rounded up to an FFT-friendly
    length; extra padding follows the same boundary rule and cannot reach the
    field of view, so results are independent of the rounding.

    ``apply_adjoint`` blurs with the 180-degree-rotated PSF under the same
    boundary rule.  For zero and periodic boundaries that is exactly the
    transpose; for reflective boundaries with a non-symmetric kernel it is
    the usual "reblurring" companion, which differs from the transpose.
    """

    def __init__(self, psf: Psf, bc, n: int):
        bc = BoundaryCondition.coerce(bc)
        _check_support(psf, n)
        self.psf = psf
        self.bc = bc
        self.n = int(n)
        pr, pc = psf.pad_extents
        mr = _fft.next_fast_len(n + 2 * pr)
        mc = _fft.next_fast_len(n + 2 * pc)
        self._pad = ((pr, mr - n - pr), (pc, mc - n - pc))
        canvas = np.zeros((mr, mc))
        kr, kc = psf.kernel.shape
        canvas[:kr, :kc] = psf.kernel
        canvas = np.roll(canvas, (-psf.center[0], -psf.center[1]), axis=(0, 1))
        self._kernel_hat = _fft.fft2(canvas)

    @property
    def size(self) -> int:
        """Length of the stacked image vectors this operator acts on."""
        return self.n * self.n

    def _convolve(self, x, kernel_hat):
        arr = np.asarray(x, dtype=float)
        if arr.shape[-1:] == (self.size,):
            work = arr.reshape(arr.shape[:-1] + (self.n, self.n))
        elif arr.shape[-2:] == (self.n, self.n):
            work = arr
        else:
            raise ValueError(
                f"expected image(s) of shape {(self.n, self.n)} or stacked "
                f"vectors of length {self.size}, got shape {arr.shape}"
            )
        (pr, ar), (pc, ac) = self._pad
        pad_width = [(0, 0)] * (work.ndim - 2) + [(pr, ar), (pc, ac)]
        mode = _PAD_MODE[self.bc]
        if mode == "constant":
            padded = np.pad(work, pad_width)
        else:
            padded = np.pad(work, pad_width, mode=mode)
        out = _fft.ifft2(_fft.fft2(padded, axes=(-2, -1)) * kernel_hat,
                         axes=(-2, -1))
        out = out[..., pr:pr + self.n, pc:pc + self.n]
        residue = np.linalg.norm(out.imag.ravel())
        scale = np.linalg.norm(work.ravel())
        if residue > IMAG_RESIDUE_RTOL * max(scale, np.finfo(float).tiny):
            raise ArithmeticError(
                "frequency-domain round trip left an imaginary residue of "
                f"{residue:.3e} (input norm {scale:.3e}); real transfer data "
                "expected"
            )
        return np.ascontiguousarray(out.real).reshape(arr.shape)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Blur. Accepts an n-by-n image or a flat length-n^2 vector (also
        batched along leading axes); returns the same shape."""
        return self._convolve(x, self._kernel_hat)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        """Blur with the rotated PSF (exact transpose for zero/periodic)."""
        return self._convolve(y, np.conj(self._kernel_hat))


class FlipComposedOperator:
    """The base operator followed by the stacked-order flip.

    When the base operator is persymmetric (zero or periodic boundaries, and
    any boundary rule whose matrix satisfies flip*A*flip = A^T), the composed
    map is symmetric, which is what makes MINRES applicable to deblurring.
    The adjoint composes the base adjoint after the flip; it is the exact
    transpose whenever the base adjoint is.
    """

    def __init__(self, base):
        self.base = base
        self.size = base.size
        self.n = getattr(base, "n", None)

    def _flip_data_axes(self, arr):
        # Flip only the pixel axes so stacked inputs keep their batch order.
        arr = np.asarray(arr)
        if arr.shape[-1:] == (self.size,):
            return arr[..., ::-1]
        return arr[..., ::-1, ::-1]

    def apply(self, x):
        return self._flip_data_axes(self.base.apply(x))

    def apply_adjoint(self, y):
        return self.base.apply_adjoint(self._flip_data_axes(y))


def materialize_dense(op, cap: int = DENSE_CAP) -> np.ndarray:
    """Assemble the dense matrix of an operator column by column.

    Column j is the operator applied to the j-th unit vector, so this is an
    oracle for structural checks (persymmetry, transpose identities, dense
    eigensolves) rather than a fast path.  Refuses to run above ``cap``
    (default 64) to keep memory at desk scale.
    """
    n = op.n
    if n > cap:
        raise ValueError(
            f"dense materialization refused for n={n} > cap={cap}; "
            "raise cap explicitly if you really want an n^2 x n^2 matrix"
        )
    size = op.size
    out = np.empty((size, size))
    chunk = 128
    for start in range(0, size, chunk):
        cols = range(start, min(start + chunk, size))
        batch = np.zeros((len(cols), size))
        for row, j in enumerate(cols):
            batch[row, j] = 1.0
        image = op.apply(batch.reshape(len(cols), n, n))
        out[:, start:start + len(cols)] = image.reshape(len(cols), size).T
    return out


# ---------------------------------------------------------------------------
# PSF file format: a header line "PSF n_rows n_cols center_row center_col"
# followed by whitespace-separated kernel entries in row-major order.
# ---------------------------------------------------------------------------

def load_psf(path) -> Psf:
    """Read a PSF from the plain-text kernel format."""
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    tokens = text.split()
    if len(tokens) < 5 or tokens[0].upper() != "PSF":
        raise ValueError(f"{path}: not a PSF file (missing 'PSF' header)")
    try:
        kr, kc, cr, cc = (int(t) for t in tokens[1:5])
        values = np.array([float(t) for t in tokens[5:]])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed PSF file: {exc}") from None
    if values.size != kr * kc:
        raise ValueError(
            f"{path}: header promises {kr * kc} entries, file has {values.size}"
        )
    return Psf(values.reshape(kr, kc), (cr, cc))


def save_psf(psf: Psf, path):
    """Write a PSF in the plain-text kernel format."""
    kr, kc = psf.kernel.shape
    cr, cc = psf.center
    lines = [f"PSF {kr} {kc} {cr} {cc}"]
    for row in psf.kernel:
        lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
