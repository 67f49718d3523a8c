"""
Configuration d'expérience - dataclasses chargées depuis un document JSON
"""

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .benchmarks import REGISTRY, PolicyContext
from .errors import ConfigError, ShadingError
from .landscape import DEFAULT_GRID_N, LandscapeSpec
from .shading import CUTS, DEFAULT_MAX_STEPS, DEFAULT_RELATIVE_EPSILON
from .winrate import TrainingConfig, Vocabulary

DEFAULT_OUTPUT_DIR = "bid_shading_out"
OUTPUT_DIR_VARIABLE = "BIDSHADE_OUTPUT_DIR"

# flux aléatoires indépendants dérivés de la graine
STREAMS = ("train_requests", "eval_requests", "train_auctions", "eval_auctions", "exploration")


@dataclass
class RequestStreamConfig:
    """Attributs catégoriels des requêtes synthétiques et loi log-normale des valeurs"""
    categories: Dict[str, List[str]] = field(default_factory=lambda: {
        "exchange": ["adx", "openx", "rubicon"],
        "domain": ["news", "sports", "games", "shop"],
        "device": ["desktop", "mobile"]
    })
    value_mu: float = 0.0
    value_sigma: float = 0.3

    def __post_init__(self):
        if not self.categories or any(not values for values in self.categories.values()):
            raise ConfigError("requests.categories: chaque attribut exige au moins une catégorie")
        if not self.value_sigma >= 0:
            raise ConfigError("requests.value_sigma doit être >= 0")

    def vocabulary(self) -> Vocabulary:
        return Vocabulary.from_categories(self.categories)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RequestStreamConfig':
        return cls(**data)


@dataclass
class ExplorationConfig:
    """Enchères des retours d'entraînement: V * facteur log-uniforme sur [low, high]"""
    low: float = 0.05
    high: float = 1.0

    def __post_init__(self):
        if not 0 < self.low <= self.high:
            raise ConfigError(f"train_bid_policy: exige 0 < low <= high (low={self.low}, high={self.high})")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExplorationConfig':
        return cls(**data)


@dataclass
class ShadingConfig:
    """Réglages de la recherche d'enchère de la politique wr"""
    epsilon_relative: float = DEFAULT_RELATIVE_EPSILON
    max_steps: int = DEFAULT_MAX_STEPS
    cut: str = "ratio"
    floor_factor: float = 0.0

    def __post_init__(self):
        if not self.epsilon_relative > 0:
            raise ConfigError("shading.epsilon_relative doit être > 0")
        if self.max_steps < 1:
            raise ConfigError("shading.max_steps doit être >= 1")
        if self.cut not in CUTS:
            raise ConfigError(f"shading.cut: {self.cut!r} inconnu (attendu {', '.join(CUTS)})")
        if not 0 <= self.floor_factor < 1:
            raise ConfigError("shading.floor_factor doit être dans [0, 1)")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ShadingConfig':
        return cls(**data)


@dataclass
class PolicyConfig:
    name: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in REGISTRY:
            raise ConfigError(f"policies: politique inconnue {self.name!r} (connues: {', '.join(sorted(REGISTRY))})")
        unknown = set(self.params) - set(REGISTRY[self.name].defaults)
        if unknown:
            raise ConfigError(f"policies.{self.name}: paramètres inconnus {sorted(unknown)}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Union[str, Dict[str, Any]]) -> 'PolicyConfig':
        if isinstance(data, str):
            return cls(data)
        return cls(data["name"], dict(data.get("params", {})))


@dataclass
class ExperimentConfig:
    """
    Expérience complète: paysage, flux de requêtes, politiques comparées

    Deux exécutions de même configuration et même graine produisent des
    fichiers identiques octet pour octet.
    """
    landscape: Dict[str, Any] = field(default_factory=lambda: {
        "kind": "lognormal", "params": {"mu": -1.0, "sigma": 0.5}
    })
    requests: RequestStreamConfig = field(default_factory=RequestStreamConfig)
    n_train: int = 20_000
    n_eval: int = 20_000
    policies: List[PolicyConfig] = field(default_factory=lambda: [
        PolicyConfig(name) for name in ("wr", "mpp", "factor-lr", "segment-nl", "wr-maintainer", "point-est", "fixed", "oracle")
    ])
    baseline: str = "mpp"
    seed: int = 0
    reveal_mbtw: bool = True
    output_dir: str = DEFAULT_OUTPUT_DIR
    train_bid_policy: ExplorationConfig = field(default_factory=ExplorationConfig)
    grid_n: int = DEFAULT_GRID_N
    training: TrainingConfig = field(default_factory=TrainingConfig)
    shading: ShadingConfig = field(default_factory=ShadingConfig)

    def __post_init__(self):
        if self.n_train < 1 or self.n_eval < 1:
            raise ConfigError(f"n_train et n_eval doivent être >= 1 (n_train={self.n_train}, n_eval={self.n_eval})")
        if not self.policies:
            raise ConfigError("policies: au moins une politique")
        if self.grid_n < 1000:
            raise ConfigError("grid_n doit être >= 1000")
        # paysage validé dès le chargement, jamais à la requête
        self.landscape_spec()

    def vocabulary(self) -> Vocabulary:
        return self.requests.vocabulary()

    def landscape_spec(self) -> LandscapeSpec:
        return LandscapeSpec.from_dict(self.landscape, self.vocabulary())

    def policy_names(self) -> List[str]:
        return [p.name for p in self.policies]

    def policy_context(self) -> PolicyContext:
        return PolicyContext(self.vocabulary(), self.landscape_spec(), self.training, self.grid_n)

    def policy_params(self, policy: PolicyConfig) -> Dict[str, Any]:
        """Les réglages de shading s'appliquent à wr sauf surcharge explicite"""
        params = {}
        if policy.name == "wr":
            params.update(self.shading.to_dict())
        params.update(policy.params)
        return params

    def rng(self, stream: str) -> np.random.Generator:
        """Générateur propre à un flux, indépendant de l'ordre de consommation des autres"""
        children = np.random.SeedSequence(self.seed).spawn(len(STREAMS))
        return np.random.default_rng(children[STREAMS.index(stream)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "landscape": self.landscape,
            "requests": self.requests.to_dict(),
            "n_train": self.n_train,
            "n_eval": self.n_eval,
            "policies": [p.to_dict() for p in self.policies],
            "baseline": self.baseline,
            "seed": self.seed,
            "reveal_mbtw": self.reveal_mbtw,
            "output_dir": self.output_dir,
            "train_bid_policy": self.train_bid_policy.to_dict(),
            "grid_n": self.grid_n,
            "training": self.training.to_dict(),
            "shading": self.shading.to_dict()
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: Optional[Path] = None) -> 'ExperimentConfig':
        """Crée une configuration depuis un dictionnaire (paysage en ligne ou chemin)"""
        data = dict(data)
        try:
            landscape = data.pop("landscape", None)
            if isinstance(landscape, str):
                landscape = _read_json(Path(base_dir or ".") / landscape)
            nested = {
                "requests": RequestStreamConfig.from_dict,
                "train_bid_policy": ExplorationConfig.from_dict,
                "training": TrainingConfig.from_dict,
                "shading": ShadingConfig.from_dict
            }
            kwargs = {key: parse(data.pop(key)) for key, parse in nested.items() if key in data}
            if "policies" in data:
                kwargs["policies"] = [PolicyConfig.from_dict(p) for p in data.pop("policies")]
            if landscape is not None:
                kwargs["landscape"] = landscape
            return cls(**kwargs, **data)
        except ShadingError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e
        except (TypeError, KeyError, ValueError) as e:
            raise ConfigError(f"configuration invalide: {e}") from e


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"fichier de configuration introuvable: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"configuration JSON illisible ({path}): {e}") from e


def load_config(path: Union[str, Path, None] = None) -> ExperimentConfig:
    """Charge une configuration JSON; sans chemin, configuration par défaut"""
    if path is None:
        config = ExperimentConfig()
    else:
        path = Path(path)
        config = ExperimentConfig.from_dict(_read_json(path), base_dir=path.parent)
    env_dir = os.getenv(OUTPUT_DIR_VARIABLE)
    if env_dir and config.output_dir == DEFAULT_OUTPUT_DIR:
        config.output_dir = env_dir
    return config
