"""COLMAP model serialization: byte layout, round trips, validation."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import random_model
from lumifuse.colmap import (
    INVALID_POINT3D_ID,
    ColmapCamera,
    ColmapImage,
    ColmapModel,
    ColmapPoint3D,
    read_binary,
    read_text,
    write_binary,
    write_text,
)
from lumifuse.errors import InputError
from lumifuse.util import format_float

FILES = ("cameras", "images", "points3D")


def read_files(directory, ext):
    return {name: (directory / f"{name}.{ext}").read_bytes() for name in FILES}


def assert_models_equal(a: ColmapModel, b: ColmapModel):
    assert list(a.cameras) == list(b.cameras)
    for cid in a.cameras:
        ca, cb = a.cameras[cid], b.cameras[cid]
        assert (ca.model_id, ca.width, ca.height) == (cb.model_id, cb.width, cb.height)
        np.testing.assert_array_equal(ca.params, cb.params)
    assert list(a.images) == list(b.images)
    for iid in a.images:
        ia, ib = a.images[iid], b.images[iid]
        assert (ia.camera_id, ia.name) == (ib.camera_id, ib.name)
        np.testing.assert_array_equal(ia.qvec, ib.qvec)
        np.testing.assert_array_equal(ia.tvec, ib.tvec)
        np.testing.assert_array_equal(ia.xys, ib.xys)
        np.testing.assert_array_equal(ia.point3D_ids, ib.point3D_ids)
    assert list(a.points3D) == list(b.points3D)
    for pid in a.points3D:
        pa, pb = a.points3D[pid], b.points3D[pid]
        np.testing.assert_array_equal(pa.xyz, pb.xyz)
        np.testing.assert_array_equal(pa.rgb, pb.rgb)
        assert pa.error == pb.error
        np.testing.assert_array_equal(pa.image_ids, pb.image_ids)
        np.testing.assert_array_equal(pa.point2D_idxs, pb.point2D_idxs)


class TestBinary:
    def test_empty_model_is_three_zero_counts(self, tmp_path):
        write_binary(ColmapModel(), tmp_path)
        for name in FILES:
            assert (tmp_path / f"{name}.bin").read_bytes() == b"\x00" * 8

    def test_simple_pinhole_camera_record_size(self, tmp_path):
        """8 (count) + 4 (id) + 4 (model) + 8 + 8 (dims) + 3*8 (params) = 56."""
        m = ColmapModel()
        m.cameras[1] = ColmapCamera(1, 0, 640, 480, np.array([500.0, 320.0, 240.0]))
        write_binary(m, tmp_path)
        assert (tmp_path / "cameras.bin").stat().st_size == 56

    def test_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        model = random_model(rng, max_points=500)
        d1 = tmp_path / "a"
        d2 = tmp_path / "b"
        write_binary(model, d1)
        write_binary(read_binary(d1), d2)
        assert read_files(d1, "bin") == read_files(d2, "bin")

    def test_invalid_id_constant_preserved(self, tmp_path):
        assert INVALID_POINT3D_ID == 2**64 - 1
        m = ColmapModel()
        m.cameras[1] = ColmapCamera(1, 0, 4, 4, np.array([1.0, 2.0, 2.0]))
        m.images[1] = ColmapImage(1, np.array([1.0, 0, 0, 0]), np.zeros(3), 1, "x.png",
                                  np.array([[1.0, 2.0]]),
                                  np.array([INVALID_POINT3D_ID], dtype=np.uint64))
        write_binary(m, tmp_path)
        raw = (tmp_path / "images.bin").read_bytes()
        assert raw[-8:] == b"\xff" * 8
        m2 = read_binary(tmp_path)
        assert int(m2.images[1].point3D_ids[0]) == INVALID_POINT3D_ID

    def test_truncated_file(self, tmp_path):
        rng = np.random.default_rng(1)
        write_binary(random_model(rng, max_points=50), tmp_path)
        for name in FILES:
            p = tmp_path / f"{name}.bin"
            data = p.read_bytes()
            if len(data) > 8:
                p.write_bytes(data[:-3])
                with pytest.raises(InputError, match="truncat"):
                    read_binary(tmp_path)
                p.write_bytes(data)

    def test_trailing_bytes_rejected(self, tmp_path):
        write_binary(ColmapModel(), tmp_path)
        p = tmp_path / "points3D.bin"
        p.write_bytes(p.read_bytes() + b"\x00")
        with pytest.raises(InputError, match="trailing"):
            read_binary(tmp_path)

    def test_unknown_model_id(self, tmp_path):
        m = ColmapModel()
        m.cameras[1] = ColmapCamera(1, 0, 4, 4, np.array([1.0, 2.0, 2.0]))
        write_binary(m, tmp_path)
        p = tmp_path / "cameras.bin"
        data = bytearray(p.read_bytes())
        data[12] = 9  # model_id little-endian low byte
        p.write_bytes(bytes(data))
        with pytest.raises(InputError, match="model id"):
            read_binary(tmp_path)


class TestText:
    def test_empty_model_only_comments(self, tmp_path):
        write_text(ColmapModel(), tmp_path)
        for name in FILES:
            body = (tmp_path / f"{name}.txt").read_text()
            assert body
            assert all(line.startswith("#") for line in body.splitlines() if line.strip())

    def test_point_line_format(self, tmp_path):
        m = ColmapModel()
        m.points3D[1] = ColmapPoint3D(1, np.array([1.5, 0.0, -2.0]),
                                      np.array([255, 0, 0], dtype=np.uint8), 0.0)
        write_text(m, tmp_path)
        data_lines = [l for l in (tmp_path / "points3D.txt").read_text().splitlines()
                      if not l.startswith("#")]
        assert data_lines == ["1 1.5 0 -2 255 0 0 0"]

    def test_round_trip_value_identical(self, tmp_path):
        rng = np.random.default_rng(2)
        model = random_model(rng, max_points=200)
        write_text(model, tmp_path)
        assert_models_equal(model, read_text(tmp_path))

    def test_invalid_id_text_forms(self, tmp_path):
        m = ColmapModel()
        m.cameras[1] = ColmapCamera(1, 0, 4, 4, np.array([1.0, 2.0, 2.0]))
        m.images[1] = ColmapImage(1, np.array([1.0, 0, 0, 0]), np.zeros(3), 1, "x.png",
                                  np.array([[1.0, 2.0]]),
                                  np.array([INVALID_POINT3D_ID], dtype=np.uint64))
        write_text(m, tmp_path)
        assert str(INVALID_POINT3D_ID) in (tmp_path / "images.txt").read_text()
        m2 = read_text(tmp_path)
        assert int(m2.images[1].point3D_ids[0]) == INVALID_POINT3D_ID
        # COLMAP's own writer spells the invalid id as -1; accept that too.
        body = (tmp_path / "images.txt").read_text().replace(str(INVALID_POINT3D_ID), "-1")
        (tmp_path / "images.txt").write_text(body)
        m3 = read_text(tmp_path)
        assert int(m3.images[1].point3D_ids[0]) == INVALID_POINT3D_ID

    def test_name_with_space_not_representable(self, tmp_path):
        m = ColmapModel()
        m.cameras[1] = ColmapCamera(1, 0, 4, 4, np.array([1.0, 2.0, 2.0]))
        m.images[1] = ColmapImage(1, np.array([1.0, 0, 0, 0]), np.zeros(3), 1, "a b.png")
        with pytest.raises(InputError, match="whitespace"):
            write_text(m, tmp_path)
        write_binary(m, tmp_path)  # binary form has no such restriction
        assert read_binary(tmp_path).images[1].name == "a b.png"


class TestValidation:
    def test_name_rules(self):
        with pytest.raises(InputError, match="non-empty"):
            ColmapImage(1, np.array([1.0, 0, 0, 0]), np.zeros(3), 1, "")
        with pytest.raises(InputError, match="NUL"):
            ColmapImage(1, np.array([1.0, 0, 0, 0]), np.zeros(3), 1, "a\x00b")

    def test_params_length(self):
        with pytest.raises(InputError, match="params"):
            ColmapCamera(1, 0, 4, 4, np.array([1.0, 2.0, 2.0, 3.0]))
        with pytest.raises(InputError, match="model id"):
            ColmapCamera(1, 7, 4, 4, np.array([1.0]))

    def test_missing_camera_reference(self, tmp_path):
        m = ColmapModel()
        m.images[1] = ColmapImage(1, np.array([1.0, 0, 0, 0]), np.zeros(3), 5, "x.png")
        with pytest.raises(InputError, match="camera"):
            write_binary(m, tmp_path)

    def test_track_references_checked_only_with_images(self, tmp_path):
        m = ColmapModel()
        m.points3D[1] = ColmapPoint3D(1, np.zeros(3), np.zeros(3, dtype=np.uint8), 0.0,
                                      np.array([9], dtype=np.uint32),
                                      np.array([0], dtype=np.uint32))
        write_binary(m, tmp_path)  # no images -> tracks not validated
        m.cameras[1] = ColmapCamera(1, 0, 4, 4, np.array([1.0, 2.0, 2.0]))
        m.images[1] = ColmapImage(1, np.array([1.0, 0, 0, 0]), np.zeros(3), 1, "x.png")
        with pytest.raises(InputError, match="track"):
            write_binary(m, tmp_path)


class TestFloatFormat:
    def test_shortest_round_trip(self):
        values = [0.1, 1 / 3, -0.0, 0.0, 1e-17, -2.0, 1.5, 12345678901234567.0,
                  5e-324, 1.7976931348623157e308]
        for v in values:
            s = format_float(v)
            back = float(s)
            assert (back == v and np.signbit(back) == np.signbit(v)), (v, s)

    def test_integral_collapse(self):
        assert format_float(0.0) == "0"
        assert format_float(-2.0) == "-2"
        assert format_float(-0.0) == "-0"
        assert format_float(1.5) == "1.5"
