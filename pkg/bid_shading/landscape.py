"""
Paysages concurrentiels synthétiques - distribution connue de l'enchère
concurrente la plus haute et retours d'enchères censurés
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, DomainError
from .shading import grid_maximize
from .winrate import FeatureVector, Vocabulary, encode

logger = logging.getLogger(__name__)

UNIFORM = "uniform"
LOGNORMAL = "lognormal"
SPIKED = "spiked"
KINDS = (UNIFORM, LOGNORMAL, SPIKED)

DEFAULT_GRID_N = 10_000

Price = Union[float, np.ndarray]
BiddingPolicy = Callable[[FeatureVector, float], float]


@dataclass(frozen=True)
class LandscapeSpec:
    """
    Distribution de b̂ conditionnée aux features

    uniform: [b0, b1) translaté par le décalage des features (largeur conservée,
    borne basse ramenée à 0 si besoin). lognormal: mu translaté. spiked: masses
    ponctuelles à des prix ronds, non translatées, plus une base.
    """
    kind: str
    b0: float = 0.0
    b1: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0
    base: Optional['LandscapeSpec'] = None
    spikes: Tuple[Tuple[float, float], ...] = ()
    feature_shift: Tuple[Tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"landscape.kind: type inconnu {self.kind!r} (attendu {', '.join(KINDS)})")
        if self.kind == UNIFORM and not 0 <= self.b0 < self.b1:
            raise ConfigError(f"landscape.params: uniform exige 0 <= B0 < B1 (B0={self.b0}, B1={self.b1})")
        if self.kind == LOGNORMAL and not self.sigma > 0:
            raise ConfigError(f"landscape.params: lognormal exige sigma > 0 (sigma={self.sigma})")
        if self.kind == SPIKED:
            if self.base is None or self.base.kind == SPIKED:
                raise ConfigError("landscape.base: un mélange exige une base uniform ou lognormal")
            if any(w < 0 for _, w in self.spikes) or sum(w for _, w in self.spikes) > 1:
                raise ConfigError("landscape.spikes: poids négatifs ou somme > 1")
            if any(not p > 0 for p, _ in self.spikes):
                raise ConfigError("landscape.spikes: prix non positif")
        if not all(math.isfinite(s) for _, s in self.feature_shift):
            raise ConfigError("landscape.feature_shift: décalage non fini")

    @classmethod
    def uniform(cls, b0: float, b1: float, feature_shift: Optional[Mapping[int, float]] = None) -> 'LandscapeSpec':
        return cls(UNIFORM, b0=b0, b1=b1, feature_shift=tuple(sorted((feature_shift or {}).items())))

    @classmethod
    def lognormal(cls, mu: float, sigma: float, feature_shift: Optional[Mapping[int, float]] = None) -> 'LandscapeSpec':
        return cls(LOGNORMAL, mu=mu, sigma=sigma, feature_shift=tuple(sorted((feature_shift or {}).items())))

    @classmethod
    def spiked(cls, base: 'LandscapeSpec', spikes: Sequence[Tuple[float, float]]) -> 'LandscapeSpec':
        return cls(SPIKED, base=base, spikes=tuple((float(p), float(w)) for p, w in spikes))

    @property
    def base_weight(self) -> float:
        return 1.0 - sum(w for _, w in self.spikes)

    def shift(self, features: FeatureVector) -> float:
        """Décalage additif du paramètre de position"""
        shifts = dict(self.feature_shift)
        return sum(shifts.get(i, 0.0) * x for i, x in zip(features.indices, features.values))

    def uniform_bounds(self, features: FeatureVector) -> Tuple[float, float]:
        low = max(0.0, self.b0 + self.shift(features))
        return low, low + (self.b1 - self.b0)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind}
        if self.kind == UNIFORM:
            data["params"] = {"b0": self.b0, "b1": self.b1}
        elif self.kind == LOGNORMAL:
            data["params"] = {"mu": self.mu, "sigma": self.sigma}
        else:
            data["base"] = self.base.to_dict()
            data["spikes"] = [list(s) for s in self.spikes]
        if self.feature_shift:
            data["feature_shift"] = {str(i): s for i, s in self.feature_shift}
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], vocabulary: Optional[Vocabulary] = None) -> 'LandscapeSpec':
        """
        Lit un paysage depuis sa configuration JSON

        Les clés de feature_shift sont soit des indices, soit 'attribut=valeur'
        résolus par le vocabulaire du simulateur.
        """
        kind = data.get("kind")
        params = data.get("params", {})
        shift = _resolve_shift(data.get("feature_shift", {}), vocabulary)
        try:
            if kind == UNIFORM:
                return cls.uniform(float(params["b0"]), float(params["b1"]), shift)
            if kind == LOGNORMAL:
                return cls.lognormal(float(params["mu"]), float(params["sigma"]), shift)
            if kind == SPIKED:
                base = cls.from_dict(data["base"], vocabulary)
                return cls.spiked(base, [(float(p), float(w)) for p, w in data.get("spikes", [])])
        except KeyError as e:
            raise ConfigError(f"landscape.params: champ manquant {e}") from e
        raise ConfigError(f"landscape.kind: type inconnu {kind!r} (attendu {', '.join(KINDS)})")


def _resolve_shift(raw: Mapping[str, float], vocabulary: Optional[Vocabulary]) -> Dict[int, float]:
    resolved = {}
    for key, value in raw.items():
        if str(key).lstrip("-").isdigit():
            resolved[int(key)] = float(value)
            continue
        index = vocabulary.index_of(key) if vocabulary else None
        if index is None:
            raise ConfigError(f"landscape.feature_shift: feature inconnue {key!r}")
        resolved[index] = float(value)
    return resolved


def true_cdf(spec: LandscapeSpec, features: FeatureVector, b: Price) -> Price:
    """
    P(b̂ < b) sous le paysage

    Accepte un prix scalaire ou un tableau numpy de prix.
    """
    prices = np.asarray(b, dtype=float)
    if np.any(prices < 0):
        raise DomainError("prix négatif")
    if spec.kind == UNIFORM:
        low, high = spec.uniform_bounds(features)
        result = np.clip((prices - low) / (high - low), 0.0, 1.0)
    elif spec.kind == LOGNORMAL:
        location = spec.mu + spec.shift(features)
        with np.errstate(divide="ignore"):
            result = ndtr((np.log(prices) - location) / spec.sigma)
    else:
        result = spec.base_weight * true_cdf(spec.base, features, prices)
        for price, weight in spec.spikes:
            result = result + weight * (price < prices)
    if np.ndim(b) == 0:
        return float(result)
    return result


def sample_highest_bid(spec: LandscapeSpec, features: FeatureVector, rng: np.random.Generator) -> float:
    """Un tirage de b̂"""
    if spec.kind == UNIFORM:
        low, high = spec.uniform_bounds(features)
        return low + (high - low) * float(rng.random())
    if spec.kind == LOGNORMAL:
        return float(rng.lognormal(spec.mu + spec.shift(features), spec.sigma))
    u = float(rng.random())
    if u < spec.base_weight:
        return sample_highest_bid(spec.base, features, rng)
    cumulative = spec.base_weight
    for price, weight in spec.spikes:
        cumulative += weight
        if u < cumulative:
            return price
    return spec.spikes[-1][0]


def sample_highest_bids(spec: LandscapeSpec, features: FeatureVector, rng: np.random.Generator, size: int) -> np.ndarray:
    """Version vectorisée de sample_highest_bid pour les gros tirages"""
    if spec.kind == UNIFORM:
        low, high = spec.uniform_bounds(features)
        return low + (high - low) * rng.random(size)
    if spec.kind == LOGNORMAL:
        return rng.lognormal(spec.mu + spec.shift(features), spec.sigma, size)
    u = rng.random(size)
    draws = sample_highest_bids(spec.base, features, rng, size)
    thresholds = spec.base_weight + np.cumsum([w for _, w in spec.spikes])
    prices = np.array([p for p, _ in spec.spikes])
    spike_of = np.searchsorted(thresholds, u, side="right")
    in_spike = u >= spec.base_weight
    draws[in_spike] = prices[np.minimum(spike_of[in_spike], len(prices) - 1)]
    return draws


@dataclass(frozen=True)
class FeedbackRecord:
    """Une enchère journalisée"""
    features: FeatureVector
    bid: float
    value: float
    won: bool
    min_bid_to_win: Optional[float] = None

    def __post_init__(self):
        if not self.bid > 0:
            raise DomainError(f"enchère non positive: {self.bid}")
        if self.value < 0:
            raise DomainError(f"valeur négative: {self.value}")


@dataclass
class FeedbackBatch:
    """Retours générés et nombre d'enchères rejetées"""
    records: List[FeedbackRecord] = field(default_factory=list)
    rejected: int = 0

    def __iter__(self) -> Iterator[FeedbackRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index):
        return self.records[index]


def generate_feedback(
    spec: LandscapeSpec,
    policy: BiddingPolicy,
    request_stream: Iterable[Tuple[FeatureVector, float]],
    reveal_mbtw: bool,
    rng: np.random.Generator
) -> FeedbackBatch:
    """
    Simule une enchère au premier prix par requête

    b̂ est tiré avant de consulter la politique: deux politiques évaluées avec
    la même graine affrontent la même concurrence.

    Args:
        spec: Paysage concurrentiel
        policy: (features, valeur) -> enchère
        request_stream: Requêtes (features, valeur)
        reveal_mbtw: Révéler l'enchère minimale gagnante
        rng: Source aléatoire propre au flux

    Returns:
        FeedbackBatch (enchères non positives rejetées et comptées)
    """
    batch = FeedbackBatch()
    for features, value in request_stream:
        highest = sample_highest_bid(spec, features, rng)
        bid = policy(features, value)
        if not bid > 0:
            batch.rejected += 1
            continue
        batch.records.append(FeedbackRecord(
            features=features,
            bid=float(bid),
            value=float(value),
            won=bid > highest,
            min_bid_to_win=highest if reveal_mbtw else None
        ))
    if batch.rejected:
        logger.warning("⚠️ %d enchères non positives rejetées", batch.rejected)
    return batch


def log_uniform_factor_policy(low: float, high: float, rng: np.random.Generator) -> BiddingPolicy:
    """Politique d'exploration: enchère = V * facteur log-uniforme sur [low, high]"""
    if not 0 < low <= high:
        raise ConfigError(f"train_bid_policy: exige 0 < low <= high (low={low}, high={high})")

    def policy(features: FeatureVector, value: float) -> float:
        return value * math.exp(rng.uniform(math.log(low), math.log(high)))

    return policy


def oracle_optimal_bid(spec: LandscapeSpec, features: FeatureVector, value: float, grid_n: int = DEFAULT_GRID_N) -> Tuple[float, float]:
    """Enchère qui maximise (V - b) * cdf(b) sur une grille de (0, V]"""
    if not value > 0:
        raise DomainError(f"valeur non positive: {value}")
    return grid_maximize(lambda b: true_cdf(spec, features, b), value, grid_n)


@dataclass
class Request:
    attributes: Dict[str, str]
    features: FeatureVector
    value: float


def generate_requests(
    categories: Mapping[str, Sequence[str]],
    vocabulary: Vocabulary,
    value_mu: float,
    value_sigma: float,
    n: int,
    rng: np.random.Generator
) -> List[Request]:
    """Flux synthétique: attributs catégoriels uniformes et valeurs log-normales"""
    names = sorted(categories)
    requests = []
    for _ in range(n):
        attributes = {name: str(categories[name][rng.integers(len(categories[name]))]) for name in names}
        value = float(rng.lognormal(value_mu, value_sigma))
        requests.append(Request(attributes, encode(attributes, vocabulary), value))
    return requests
