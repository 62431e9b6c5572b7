"""Free-field prototype generation, whitening and PROTOSET file round-trips."""

import io

import numpy as np
import pytest

from subdoa.errors import FormatError, InvalidInput
from subdoa.prototypes import (
    DirectionGrid,
    PrototypeSet,
    atf_to_rtf,
    generate_freefield_set,
    load_protoset,
    save_protoset,
    whiten_set,
)

FS = 16000
K = 257  # 512-point frames


def two_mic_positions():
    # pair 17 cm apart along the x axis, heights irrelevant for azimuth sets
    return np.array([[0.085, 0.0, 0.0], [-0.085, 0.0, 0.0]])


def test_uniform_grid_layout():
    grid = DirectionGrid.uniform(5.0)
    assert grid.angles_deg.shape == (72,)
    assert grid.angles_deg[0] == -180.0
    assert grid.angles_deg[-1] == 175.0
    assert np.allclose(np.diff(grid.angles_deg), 5.0)
    rad = grid.radians()
    assert np.isclose(rad[0], -np.pi)


def test_freefield_unit_magnitude_and_broadside():
    grid = DirectionGrid(angles_deg=np.array([90.0]))
    ps = generate_freefield_set(two_mic_positions(), grid, K, FS)
    assert ps.values.shape == (K, 1, 2)
    assert np.allclose(np.abs(ps.values), 1.0, atol=1e-12)
    # broadside to the pair: both mics at equal distance, identical phase
    assert np.allclose(ps.values[:, 0, 0], ps.values[:, 0, 1], atol=1e-12)


def test_freefield_endfire_phase():
    grid = DirectionGrid(angles_deg=np.array([0.0]))
    ps = generate_freefield_set(two_mic_positions(), grid, K, FS)
    k = 32  # 1 kHz at 16 kHz / 512-point frames
    f = FS * k / 512
    assert np.isclose(f, 1000.0)
    phase_diff = np.angle(ps.values[k, 0, 0] / ps.values[k, 0, 1])
    expect = 2.0 * np.pi * f * 0.17 / 343.0  # mic 0 leads: positive phase advance
    # compare on the circle
    assert np.isclose(np.angle(np.exp(1j * (phase_diff - expect))), 0.0, atol=1e-12)


def test_freefield_zero_bin_is_one():
    grid = DirectionGrid.uniform(30.0)
    ps = generate_freefield_set(two_mic_positions(), grid, K, FS)
    assert np.allclose(ps.values[0], 1.0, atol=1e-12)


def test_atf_to_rtf_reference_element():
    grid = DirectionGrid.uniform(45.0)
    ps = generate_freefield_set(two_mic_positions(), grid, K, FS)
    rs = atf_to_rtf(ps)
    assert rs.kind == "rtf"
    assert np.allclose(rs.values[..., 0], 1.0, atol=1e-12)
    assert np.allclose(rs.values[..., 1], ps.values[..., 1] / ps.values[..., 0], atol=1e-12)


def test_whiten_set_matches_triangular_solve():
    rng = np.random.default_rng(23)
    n, n_dir, k = 4, 6, 5
    values = rng.standard_normal((k, n_dir, n)) + 1j * rng.standard_normal((k, n_dir, n))
    b = rng.standard_normal((k, n, n)) + 1j * rng.standard_normal((k, n, n))
    lower = np.linalg.cholesky(
        np.einsum("kij,klj->kil", b, b.conj()) + n * np.eye(n)
    )
    got = whiten_set(values, lower)
    for ki in range(k):
        for d in range(n_dir):
            want = np.linalg.solve(lower[ki], values[ki, d])
            assert np.linalg.norm(got[ki, d] - want) <= 1e-10 * np.linalg.norm(want)


def test_protoset_roundtrip_bytes_idempotent(tmp_path):
    grid = DirectionGrid.uniform(15.0)
    ps = generate_freefield_set(two_mic_positions(), grid, 33, FS)
    path = tmp_path / "ff.protoset"
    save_protoset(ps, path)
    loaded = load_protoset(path)
    assert loaded.kind == ps.kind
    assert loaded.scope == ps.scope
    assert loaded.sample_rate == ps.sample_rate
    assert np.array_equal(loaded.angles_deg, ps.angles_deg)
    # storage is complex64: loaded values equal the cast of the originals
    assert np.array_equal(loaded.values, ps.values.astype(np.complex64).astype(np.complex128))

    second = tmp_path / "ff2.protoset"
    save_protoset(loaded, second)
    assert path.read_bytes() == second.read_bytes()


def test_protoset_bad_magic(tmp_path):
    grid = DirectionGrid.uniform(90.0)
    ps = generate_freefield_set(two_mic_positions(), grid, 9, FS)
    path = tmp_path / "ok.protoset"
    save_protoset(ps, path)
    raw = bytearray(path.read_bytes())
    raw[0] = ord(b"X")
    bad = tmp_path / "bad.protoset"
    bad.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_protoset(bad)


def test_protoset_truncated(tmp_path):
    grid = DirectionGrid.uniform(90.0)
    ps = generate_freefield_set(two_mic_positions(), grid, 9, FS)
    path = tmp_path / "ok.protoset"
    save_protoset(ps, path)
    raw = path.read_bytes()
    cut = tmp_path / "cut.protoset"
    cut.write_bytes(raw[: len(raw) - 7])
    with pytest.raises(FormatError):
        load_protoset(cut)


def test_protoset_unknown_kind_code(tmp_path):
    grid = DirectionGrid.uniform(90.0)
    ps = generate_freefield_set(two_mic_positions(), grid, 9, FS)
    path = tmp_path / "ok.protoset"
    save_protoset(ps, path)
    raw = bytearray(path.read_bytes())
    raw[9] = 7  # first field of the header after the 9-byte magic
    bad = tmp_path / "kind.protoset"
    bad.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_protoset(bad)


def test_protoset_rejects_bad_inputs():
    with pytest.raises(InvalidInput):
        PrototypeSet(
            kind="nope",
            scope="ha",
            values=np.ones((3, 2, 2), dtype=complex),
            angles_deg=np.array([0.0, 90.0]),
            sample_rate=FS,
        )
    with pytest.raises(InvalidInput):
        PrototypeSet(
            kind="atf",
            scope="ha",
            values=np.ones((3, 2, 2), dtype=complex),
            angles_deg=np.array([0.0]),
            sample_rate=FS,
        )
