import json
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from src.conf import messages
from src.domain.errors import ConfigSchemaError
from src.domain.models import DiscreteMeasure, FinitePopulation
from src.repository.samples_repository import read_text
from src.schemas import MeasureModel, PopulationModel
from src.services.measures_service import build_cost

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"


def population_from_model(model: PopulationModel) -> FinitePopulation:
    """
    Build a FinitePopulation from its JSON model, evaluating the named cost.
    """
    P = DiscreteMeasure(atoms=np.asarray(model.P.atoms, dtype=float), weights=model.P.weights)
    Q = DiscreteMeasure(atoms=np.asarray(model.Q.atoms, dtype=float), weights=model.Q.weights)
    ctx = build_cost(model.cost, P, Q, model.epsilon)
    return FinitePopulation(P=P, Q=Q, ctx=ctx, lam=model.lambda_, cost_name=ctx.cost_name, name=model.name)


def population_to_model(pop: FinitePopulation) -> PopulationModel:
    return PopulationModel(
        name=pop.name,
        cost=pop.cost_name,
        epsilon=pop.ctx.epsilon,
        lambda_=pop.lam,
        P=MeasureModel(atoms=pop.P.atoms.tolist(), weights=pop.P.weights.tolist()),
        Q=MeasureModel(atoms=pop.Q.atoms.tolist(), weights=pop.Q.weights.tolist()),
    )


class FixtureRepository:
    """
    A repository of finite populations stored as JSON.
    """

    def __init__(self, directory: str | Path = FIXTURES_DIR):
        """
        Initialize a FixtureRepository.

        Args:
            directory (str | Path): folder holding ``<name>.json`` fixtures
        """
        self.directory = Path(directory)

    def names(self) -> list[str]:
        return sorted(p.stem.upper() for p in self.directory.glob("*.json"))

    def load(self, name_or_path: str | Path) -> FinitePopulation:
        """
        Load a fixture by name (``F1``, ``F2``) or by file path.

        Raises:
            ConfigSchemaError: unknown fixture or invalid JSON content
        """
        path = Path(name_or_path)
        if not path.is_file():
            path = self.directory / f"{str(name_or_path).lower()}.json"
        if not path.is_file():
            raise ConfigSchemaError(messages.UNKNOWN_FIXTURE.format(name=name_or_path), ["population"])
        try:
            model = PopulationModel.model_validate_json(read_text(path))
        except ValidationError as e:
            keys = [".".join(str(p) for p in err["loc"]) for err in e.errors()]
            raise ConfigSchemaError(messages.CONFIG_SCHEMA_VIOLATION.format(keys=", ".join(keys)), keys)
        return population_from_model(model)

    def save(self, pop: FinitePopulation, path: str | Path) -> Path:
        path = Path(path)
        data = population_to_model(pop).model_dump(by_alias=True)
        path.write_text(json.dumps(data, indent=2), encoding="utf-8")
        return path
