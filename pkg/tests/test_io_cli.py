import json

import numpy as np
import pytest

from odtmotion import io, so3
from odtmotion.cli import main
from odtmotion.config import PipelineConfig, config_to_dict, load_config
from odtmotion.grids import FieldStack, VolumeGrid


def random_stack(rng, t=3, n=8):
    vals = (rng.normal(size=(t, n, n)).astype(np.float32)
            + 1j * rng.normal(size=(t, n, n)).astype(np.float32))
    return FieldStack(vals.astype(np.complex64), 0.15, 0.64, 1.33, 0.2)


def test_stack_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    stack = random_stack(rng)
    path = tmp_path / "a.odts"
    io.write_stack(path, stack)
    back = io.read_stack(path)
    assert np.array_equal(back.values.astype(np.complex64),
                          stack.values.astype(np.complex64))
    assert back.pitch == stack.pitch
    assert back.wavelength == stack.wavelength
    assert back.n0 == stack.n0
    assert back.plane_offset == stack.plane_offset
    # writing the re-read stack reproduces the file byte for byte
    path2 = tmp_path / "b.odts"
    io.write_stack(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_stack_sidecar_mirrors_header(tmp_path):
    rng = np.random.default_rng(1)
    stack = random_stack(rng, t=2, n=4)
    path = tmp_path / "s.odts"
    io.write_stack(path, stack)
    sidecar = json.loads((tmp_path / "s.odts.json").read_text())
    assert sidecar["magic"] == "ODTS"
    assert sidecar["N"] == 4
    assert sidecar["T"] == 2
    assert sidecar["dtype"] == "complex64"


def test_stack_payload_length_check(tmp_path):
    rng = np.random.default_rng(2)
    stack = random_stack(rng)
    path = tmp_path / "t.odts"
    io.write_stack(path, stack)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ValueError, match="payload"):
        io.read_stack(path)


def test_stack_bad_magic(tmp_path):
    path = tmp_path / "bad.odts"
    path.write_bytes(b"NOPE" + bytes(100))
    with pytest.raises(ValueError, match="magic"):
        io.read_stack(path)


def test_volume_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    vol = VolumeGrid((rng.normal(size=(6, 6, 6))
                      + 1j * rng.normal(size=(6, 6, 6))).astype(np.complex64),
                     0.2)
    path = tmp_path / "v.odtv"
    io.write_volume(path, vol, wavelength=0.64, n0=1.33)
    back, wavelength, n0 = io.read_volume(path)
    assert np.array_equal(back.values.astype(np.complex64),
                          vol.values.astype(np.complex64))
    assert wavelength == 0.64
    assert n0 == 1.33


def test_trajectory_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    rots = np.stack([so3.random_rotation(rng) for _ in range(5)])
    trans = rng.normal(size=(5, 3))
    traj = so3.RotationTrajectory(rots, trans)
    path = tmp_path / "traj.csv"
    io.write_trajectory_csv(path, traj)
    back = io.read_trajectory_csv(path)
    for t in range(5):
        assert so3.distance(back.rotations[t], rots[t]) < 1e-10
    assert np.allclose(back.translations, trans)


def test_trajectory_csv_field_order(tmp_path):
    traj = so3.RotationTrajectory(np.eye(3)[None], np.array([[1.0, 2.0, 3.0]]))
    path = tmp_path / "t.csv"
    io.write_trajectory_csv(path, traj)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "frame,q0,q1,q2,q3,dx,dy,dz"
    row = lines[1].split(",")
    assert row[0] == "0"
    assert float(row[1]) == 1.0


def test_trajectory_json_round_trip_and_coordinate_change(tmp_path):
    rng = np.random.default_rng(5)
    rots = np.stack([so3.random_rotation(rng) for _ in range(4)])
    traj = so3.RotationTrajectory(rots)
    path = tmp_path / "traj.json"
    io.write_trajectory_json(path, traj)
    back = io.read_trajectory_json(path)
    for t in range(4):
        assert so3.distance(back.rotations[t], rots[t]) < 1e-10
    # conjugation import convention R -> Q0 R^T Q0^T
    Q0 = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    conv = io.read_trajectory_json(path, coordinate_change=Q0)
    for t in range(4):
        expected = Q0 @ rots[t].T @ Q0.T
        assert so3.distance(conv.rotations[t], expected) < 1e-10


def test_metrics_round_trip(tmp_path):
    path = tmp_path / "m.json"
    io.write_metrics(path, {"rotation_error_deg": {"mean": 3.5}})
    back = io.read_metrics(path)
    assert back["schema_version"] == io.METRICS_SCHEMA_VERSION
    assert back["rotation_error_deg"]["mean"] == 3.5


def test_config_defaults_and_overrides(tmp_path):
    cfg = load_config(None)
    assert cfg.wavelength == 0.64
    assert cfg.n0 == 1.33
    assert cfg.direct_lambda == 60.0
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n_frames": 12, "noise_sigma": 0.1}))
    cfg2 = load_config(path)
    assert cfg2.n_frames == 12
    assert cfg2.noise_sigma == 0.1


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"not_a_key": 1}))
    with pytest.raises(ValueError, match="unknown config"):
        load_config(path)


def test_config_to_dict_serializable():
    d = config_to_dict(PipelineConfig())
    json.dumps(d)
    assert d["semi_axes"] == [3.0, 2.2, 2.0]


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    """A configuration small enough for CLI smoke tests."""
    cfg = {
        "n_pixels": 32,
        "pitch": 0.15,
        "n_frames": 16,
        "semi_axes": [1.4, 1.1, 0.9],
        "bead_count": 3,
        "bead_radius": 0.25,
        "n_angles": 45,
        "n_radii": 12,
        "reg_iterations": 3,
        "method": "infinitesimal",
        "cg_iterations": 4,
        "smoothing_sigma": 0.0,
        "transform": "born",
    }
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps(cfg))
    return path


def test_cli_phantom_and_simulate(tiny_config, tmp_path):
    vol_path = tmp_path / "phantom.odtv"
    assert main(["phantom", "--config", str(tiny_config),
                 "-o", str(vol_path)]) == 0
    vol, wavelength, n0 = io.read_volume(vol_path)
    assert vol.n == 32
    stack_path = tmp_path / "raw.odts"
    truth_path = tmp_path / "truth.csv"
    assert main(["simulate", "--config", str(tiny_config),
                 "--phantom", str(vol_path), "--truth", str(truth_path),
                 "-o", str(stack_path)]) == 0
    stack = io.read_stack(stack_path)
    assert stack.n_frames == 16
    truth = io.read_trajectory_csv(truth_path)
    assert len(truth) == 16


def test_cli_full_chain(tiny_config, tmp_path):
    stack_path = tmp_path / "raw.odts"
    main(["simulate", "--config", str(tiny_config), "-o", str(stack_path)])
    prep_path = tmp_path / "prep.odts"
    assert main(["preprocess", "--config", str(tiny_config),
                 "-i", str(stack_path), "-o", str(prep_path)]) == 0
    traj_path = tmp_path / "traj.csv"
    assert main(["estimate", "--config", str(tiny_config),
                 "-i", str(prep_path), "-o", str(traj_path)]) == 0
    traj = io.read_trajectory_csv(traj_path)
    assert len(traj) == 16
    vol_path = tmp_path / "rec.odtv"
    assert main(["reconstruct", "--config", str(tiny_config),
                 "--trajectory", str(traj_path), "-i", str(prep_path),
                 "-o", str(vol_path)]) == 0
    metrics_path = tmp_path / "metrics.json"
    truth_path = tmp_path / "truth.csv"
    main(["simulate", "--config", str(tiny_config), "--truth",
          str(truth_path), "-o", str(stack_path)])
    assert main(["evaluate", "--estimate", str(traj_path),
                 "--truth", str(truth_path), "-o", str(metrics_path)]) == 0
    metrics = io.read_metrics(metrics_path)
    assert "rotation_error_deg" in metrics


def test_cli_evaluate_identical_trajectories(tmp_path):
    rng = np.random.default_rng(6)
    traj = so3.RotationTrajectory(
        np.stack([so3.random_rotation(rng) for _ in range(4)]))
    path = tmp_path / "t.csv"
    io.write_trajectory_csv(path, traj)
    out = tmp_path / "m.json"
    assert main(["evaluate", "--estimate", str(path), "--truth", str(path),
                 "-o", str(out)]) == 0
    metrics = io.read_metrics(out)
    assert metrics["rotation_error_deg"]["mean"] == pytest.approx(0.0,
                                                                  abs=1e-8)


def test_cli_missing_input_is_machine_readable(tmp_path, capsys):
    rc = main(["preprocess", "-i", str(tmp_path / "nope.odts"),
               "-o", str(tmp_path / "out.odts")])
    assert rc == 2
    err = capsys.readouterr().err
    record = json.loads(err.strip())
    assert "error" in record


def test_cli_pipeline_determinism(tiny_config, tmp_path):
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert main(["pipeline", "--config", str(tiny_config),
                 "-o", str(out1)]) == 0
    assert main(["pipeline", "--config", str(tiny_config),
                 "-o", str(out2)]) == 0
    m1 = (out1 / "metrics.json").read_bytes()
    m2 = (out2 / "metrics.json").read_bytes()
    assert m1 == m2
    assert (out1 / "manifest.json").exists()
    # identical manifests -> identical outputs
    assert (out1 / "manifest.json").read_bytes() \
        == (out2 / "manifest.json").read_bytes()


def test_cli_version():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
