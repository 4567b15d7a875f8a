"""
산출물 입출력 테스트
"""

import math

import numpy as np
import pandas as pd
import pytest

from artifacts import (F64_MAGIC, ArtifactFormatError, read_f64,
                       write_convergence_csv, write_f64, write_pgm)
from state import RECORD_COLUMNS, ConvergenceRecord


@pytest.mark.parametrize("shape", [(7,), (3, 5)])
def test_f64_preserves_shape_and_bits(tmp_path, rng, shape):
    array = rng.standard_normal(shape)
    path = write_f64(tmp_path / "a.f64", array)
    loaded = read_f64(path)
    assert loaded.shape == shape
    assert loaded.tobytes() == array.tobytes()


def test_f64_layout(tmp_path):
    raw = write_f64(tmp_path / "b.f64", np.array([[1.0, 2.0]])).read_bytes()
    assert raw[:8] == F64_MAGIC
    assert np.frombuffer(raw[8:32], dtype="<u8").tolist() == [2, 1, 2]
    assert len(raw) == 32 + 16


def test_f64_bad_magic(tmp_path):
    path = tmp_path / "bad.f64"
    path.write_bytes(b"NOTMAGIC" + bytes(16))
    with pytest.raises(ArtifactFormatError):
        read_f64(path)


def test_f64_truncated_data(tmp_path):
    path = write_f64(tmp_path / "c.f64", np.ones(4))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ArtifactFormatError):
        read_f64(path)


def test_pgm_header_and_scaling(tmp_path):
    path = write_pgm(tmp_path / "img.pgm", np.array([[0.0, 1.0, 2.0], [2.0, 1.0, 0.0]]))
    raw = path.read_bytes()
    header = b"P5\n3 2\n65535\n"
    assert raw.startswith(header)
    pixels = np.frombuffer(raw[len(header):], dtype=">u2")
    assert pixels.tolist() == [0, 32768, 65535, 65535, 32768, 0]


def test_pgm_rejects_1d(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.ones(4))


def test_convergence_csv_columns(tmp_path):
    record = ConvergenceRecord("ccd")
    record.append(1, 2, 2, 1.5, math.nan, 1.0)
    record.append(2, 4, 4, 1.25, 0.1, 0.5, 0.3)
    path = write_convergence_csv(record, tmp_path / "convergence.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == RECORD_COLUMNS
    assert frame["ops_A"].tolist() == [2, 4]
    assert math.isnan(frame["primal_residual"][0])
    assert math.isnan(frame["rel_error"][0])
    assert frame["objective"][1] == 1.25
