"""Prototype transfer-function sets over a uniform azimuth grid.

Free-field anechoic prototypes: unit-magnitude plane-wave phases from the
horizontal-plane geometry of the array.  Sets can be whitened per frame,
converted to relative form, and stored in a small binary format.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .backend import kernels as K
from .errors import DegenerateReference, FormatError, InvalidInput

MAGIC = b"PROTOSET\0"
KINDS = ("atf", "rtf")
SCOPES = ("ha", "full")
SPEED_OF_SOUND = 343.0


@dataclass
class DirectionGrid:
    """Candidate azimuths in degrees, increasing."""

    angles_deg: np.ndarray

    @classmethod
    def uniform(cls, step_deg: float = 5.0) -> "DirectionGrid":
        return cls(np.arange(-180.0, 180.0, step_deg))

    @property
    def size(self) -> int:
        return len(self.angles_deg)

    def radians(self) -> np.ndarray:
        return np.deg2rad(self.angles_deg)


@dataclass
class PrototypeSet:
    """Prototype vectors, bins x directions x channels."""

    kind: str
    scope: str
    values: np.ndarray
    angles_deg: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown prototype kind {self.kind!r}")
        if self.scope not in SCOPES:
            raise InvalidInput(f"unknown prototype scope {self.scope!r}")
        if self.values.ndim != 3:
            raise InvalidInput("values must be bins x directions x channels")
        if len(self.angles_deg) != self.values.shape[1]:
            raise InvalidInput("angle count does not match the direction axis")

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_directions(self) -> int:
        return self.values.shape[1]

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]

    @property
    def frequencies(self) -> np.ndarray:
        frame_len = 2 * (self.values.shape[0] - 1)
        return np.arange(self.values.shape[0]) * self.sample_rate / frame_len


def generate_freefield_set(mic_positions, grid: DirectionGrid, n_bins: int,
                           sample_rate: int, scope: str = "ha",
                           c: float = SPEED_OF_SOUND,
                           source_distance: float = None) -> PrototypeSet:
    """Anechoic prototype ATFs for the given microphone layout.

    mic_positions: (n_mics, 2 or 3) in meters, horizontal plane is x/y.
    With source_distance=None a source at azimuth theta is a plane wave
    from direction d = [cos(theta), sin(theta)]; the arrival delay at mic m
    relative to the origin is -(d . p_m) / c, so entries are unit magnitude.
    With a finite source_distance the source is a point at that range from
    the array centroid and the entries carry the spherical wavefront:
    relative spreading loss and the curvature of the arrival delays.  Use
    this when the sources sit close enough that the array aperture is not
    small against the range.
    """
    pos = np.asarray(mic_positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] not in (2, 3):
        raise InvalidInput("mic_positions must be (n_mics, 2) or (n_mics, 3)")
    if n_bins < 2:
        raise InvalidInput("need at least two frequency bins")
    rad = grid.radians()
    direction = np.stack([np.cos(rad), np.sin(rad)], axis=1)
    frame_len = 2 * (n_bins - 1)
    freqs = np.arange(n_bins) * sample_rate / frame_len
    if source_distance is None:
        delays = -(direction @ pos[:, :2].T) / c
        gains = np.ones_like(delays)
    else:
        center = pos[:, :2].mean(axis=0)
        radius = float(np.max(np.linalg.norm(pos[:, :2] - center, axis=1)))
        if source_distance <= radius:
            raise InvalidInput("source_distance must place the source outside the array")
        src = center[None, :] + source_distance * direction
        ranges = np.linalg.norm(src[:, None, :] - pos[None, :, :2], axis=2)
        delays = (ranges - source_distance) / c
        gains = source_distance / ranges
    phase = -2.0 * np.pi * freqs[:, None, None] * delays[None, :, :]
    values = gains[None, :, :] * np.exp(1j * phase)
    return PrototypeSet(
        kind="atf",
        scope=scope,
        values=np.ascontiguousarray(values, dtype=np.complex128),
        angles_deg=np.asarray(grid.angles_deg, dtype=np.float64),
        sample_rate=int(sample_rate),
    )


def atf_to_rtf(ps: PrototypeSet, ref: int = 0) -> PrototypeSet:
    """Relative form: every vector divided by its reference channel entry."""
    if ps.kind != "atf":
        raise InvalidInput("input set must hold absolute transfer functions")
    refvals = ps.values[:, :, ref]
    norms = np.linalg.norm(ps.values, axis=2)
    if np.any(np.abs(refvals) <= 1e-12 * norms):
        raise DegenerateReference("a prototype has a numerically zero reference entry")
    return PrototypeSet(
        kind="rtf",
        scope=ps.scope,
        values=ps.values / refvals[:, :, None],
        angles_deg=ps.angles_deg.copy(),
        sample_rate=ps.sample_rate,
    )


def whiten_set(values: np.ndarray, lower: np.ndarray) -> np.ndarray:
    """Apply L^{-1} per bin to a (K, I, n) prototype stack, lower (K, n, n)."""
    if values.shape[0] != lower.shape[0] or values.shape[2] != lower.shape[1]:
        raise InvalidInput("prototype and factor shapes do not match")
    rhs = np.ascontiguousarray(np.transpose(values, (0, 2, 1)), np.complex128)
    out = K.solve_lower(np.ascontiguousarray(lower, np.complex128), rhs)
    return np.ascontiguousarray(np.transpose(out, (0, 2, 1)))


def save_protoset(ps: PrototypeSet, path) -> None:
    """Write the binary prototype format (complex64 payload)."""
    if ps.kind not in KINDS or ps.scope not in SCOPES:
        raise InvalidInput(f"unknown kind/scope {ps.kind}/{ps.scope}")
    k, i, n = ps.values.shape
    header = MAGIC + struct.pack(
        "<6I", KINDS.index(ps.kind), SCOPES.index(ps.scope), n, k, i, ps.sample_rate
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ps.angles_deg, "<f8").tobytes())
        fh.write(np.ascontiguousarray(ps.values, "<c8").tobytes())


def load_protoset(path) -> PrototypeSet:
    """Read the binary prototype format written by `save_protoset`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise FormatError("bad magic, not a prototype set file")
    off = len(MAGIC)
    if len(blob) < off + 24:
        raise FormatError("truncated header")
    kind_i, scope_i, n, k, i, fs = struct.unpack_from("<6I", blob, off)
    if kind_i >= len(KINDS) or scope_i >= len(SCOPES):
        raise FormatError(f"unknown kind/scope codes {kind_i}/{scope_i}")
    off += 24
    need = i * 8 + k * i * n * 8
    if len(blob) - off != need:
        raise FormatError(f"payload size mismatch: have {len(blob) - off}, need {need}")
    angles = np.frombuffer(blob, "<f8", count=i, offset=off).copy()
    off += i * 8
    values = np.frombuffer(blob, "<c8", count=k * i * n, offset=off)
    return PrototypeSet(
        kind=KINDS[kind_i],
        scope=SCOPES[scope_i],
        values=values.reshape(k, i, n).astype(np.complex128),
        angles_deg=angles,
        sample_rate=int(fs),
    )
