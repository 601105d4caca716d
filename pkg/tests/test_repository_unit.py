import hashlib
import json

import numpy as np
import pytest

from src.domain.errors import ConfigSchemaError, EmptySampleError, SampleParseError, ShapeMismatchError
from src.repository.fixtures_repository import FixtureRepository, population_from_model
from src.repository.samples_repository import EtaTableRepository, SampleRepository, file_digest
from src.schemas import PopulationModel
from src.services.measures_service import parse_cost


@pytest.fixture
def sample_repository():
    return SampleRepository()


def test_csv_one_dimensional(sample_repository, tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("0.0\n1.0\n", encoding="utf-8")
    samples = sample_repository.load_samples(path)
    assert samples.points.shape == (2, 1)
    assert samples.source == str(path)


def test_csv_two_dimensional(sample_repository, tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("1,2\n3,4\n", encoding="utf-8")
    samples = sample_repository.load_samples(path)
    np.testing.assert_array_equal(samples.points, [[1.0, 2.0], [3.0, 4.0]])


def test_csv_header_skipped(sample_repository, tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("x,y\n1,2\n", encoding="utf-8")
    samples = sample_repository.load_samples(path, header=True)
    np.testing.assert_array_equal(samples.points, [[1.0, 2.0]])


def test_json_ragged_rows(sample_repository, tmp_path):
    path = tmp_path / "x.json"
    path.write_text("[[1,2],[3]]", encoding="utf-8")
    with pytest.raises(SampleParseError) as excinfo:
        sample_repository.load_samples(path, fmt="json")
    assert str(excinfo.value) == "ragged rows at record 2"
    assert excinfo.value.index == 2


def test_csv_non_numeric(sample_repository, tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("1\nabc\n", encoding="utf-8")
    with pytest.raises(SampleParseError) as excinfo:
        sample_repository.load_samples(path)
    assert excinfo.value.index == 2


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_invalid_utf8(sample_repository, tmp_path, fmt):
    path = tmp_path / f"x.{fmt}"
    path.write_bytes(b"\xff\xfe\x00")
    with pytest.raises(SampleParseError, match="cannot decode"):
        sample_repository.load_samples(path, fmt=fmt)


def test_csv_field_over_limit(sample_repository, tmp_path):
    path = tmp_path / "x.csv"
    path.write_text('"' + "1" * 200_000 + '"\n', encoding="utf-8")
    with pytest.raises(SampleParseError, match="malformed CSV"):
        sample_repository.load_samples(path)


def test_eta_table_invalid_utf8(tmp_path):
    path = tmp_path / "eta.csv"
    path.write_bytes(b"1,\xff\n")
    with pytest.raises(SampleParseError, match="cannot decode"):
        EtaTableRepository().load_table(path, (1, 2))


def test_empty_file(sample_repository, tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(EmptySampleError):
        sample_repository.load_samples(path)


def test_unknown_format(sample_repository, tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("1\n", encoding="utf-8")
    with pytest.raises(SampleParseError):
        sample_repository.load_samples(path, fmt="parquet")


def test_file_digest_is_sha256_of_bytes(tmp_path):
    path = tmp_path / "x.csv"
    path.write_bytes(b"0.0\n1.0\n")
    assert file_digest(path) == hashlib.sha256(b"0.0\n1.0\n").hexdigest()


def test_eta_table_shape_checked(tmp_path):
    path = tmp_path / "eta.csv"
    path.write_text("1,0\n0,1\n", encoding="utf-8")
    np.testing.assert_array_equal(EtaTableRepository().load_table(path, (2, 2)), np.eye(2))
    with pytest.raises(ShapeMismatchError):
        EtaTableRepository().load_table(path, (2, 3))


def test_fixtures_shipped():
    assert FixtureRepository().names() == ["F1", "F2"]


def test_fixture_f2_contents(f2):
    np.testing.assert_allclose(f2.P.weights, [0.5, 0.3, 0.2])
    np.testing.assert_allclose(f2.Q.atoms[:, 0], [0.0, 0.5, 1.5, 3.0])
    assert f2.lam == 0.5
    assert f2.ctx.epsilon == 1.0


def test_unknown_fixture():
    with pytest.raises(ConfigSchemaError) as excinfo:
        FixtureRepository().load("F9")
    assert excinfo.value.keys == ["population"]


def test_fixture_roundtrip(f1, tmp_path):
    repository = FixtureRepository(tmp_path)
    path = repository.save(f1, tmp_path / "copy.json")
    assert json.loads(path.read_text(encoding="utf-8"))["lambda"] == 0.5
    loaded = repository.load("copy")
    np.testing.assert_array_equal(loaded.ctx.cost_values, f1.ctx.cost_values)


def test_fixture_schema_violation(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"P": {"atoms": [0], "weights": [1]}, "colour": "red"}), encoding="utf-8")
    with pytest.raises(ConfigSchemaError) as excinfo:
        FixtureRepository(tmp_path).load("bad")
    assert "Q" in excinfo.value.keys
    assert "colour" in excinfo.value.keys


def test_population_cost_name_rebuilds_the_same_table():
    model = PopulationModel.model_validate(
        {
            "cost": "indicator:0.4999999",
            "P": {"atoms": [0.0, 1.0], "weights": [0.5, 0.5]},
            "Q": {"atoms": [0.5, 1.5], "weights": [0.5, 0.5]},
        }
    )
    pop = population_from_model(model)
    np.testing.assert_array_equal(pop.ctx.cost_values, [[1.0, 1.0], [1.0, 1.0]])
    rebuilt = parse_cost(pop.cost_name).pairwise(pop.P.atoms, pop.Q.atoms)
    np.testing.assert_array_equal(rebuilt, pop.ctx.cost_values)
