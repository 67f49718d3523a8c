"""
Algorithmes de comparaison - prix le plus probable censuré, facteur de shading
logistique, shader non linéaire par segment (moindres carrés récursifs),
maintien de taux de gain, estimateur ponctuel asymétrique, facteur fixe
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type

import numpy as np
from scipy.special import expit, logit
from sklearn.isotonic import IsotonicRegression
from sklearn.linear_model import LinearRegression, Ridge

from .errors import ConfigError, DegenerateDataError, DomainError, FormatError
from .landscape import FeedbackRecord, LandscapeSpec, oracle_optimal_bid
from .shading import DEFAULT_MAX_STEPS, DEFAULT_RELATIVE_EPSILON, shade
from .winrate import (
    FeatureVector, TrainingConfig, Vocabulary, WinRateModel, alpha, build_design, fit, fit_logistic
)

logger = logging.getLogger(__name__)

POLICY_FORMAT = "bid_shading.policy"
POLICY_VERSION = 1
DEFAULT_BUCKETS = 50
MIN_BID = 1e-6
RIDGE_PENALTY = 1e-6
DEFAULT_FORGETTING = 0.99
DEFAULT_TARGET_WINRATE = 0.9


# -- Distribution censurée du prix gagnant ------------------------------------

@dataclass(frozen=True, eq=False)
class BucketedPriceDistribution:
    """Distribution par seaux du prix gagnant"""
    edges: np.ndarray
    pmf: np.ndarray
    fallback: bool = False

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        pmf = np.asarray(self.pmf, dtype=float)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "pmf", pmf)
        if len(edges) != len(pmf) + 1 or len(pmf) < 1:
            raise DomainError("il faut len(edges) == len(pmf) + 1")
        if np.any(np.diff(edges) <= 0):
            raise DomainError("bornes de seaux non strictement croissantes")
        if np.any(pmf < 0) or abs(pmf.sum() - 1) > 1e-9:
            raise DomainError("pmf négative ou de somme différente de 1")

    def cdf_at_edges(self) -> np.ndarray:
        """P(b̂ < edges[j]), le premier seau couvrant [0, edges[1])"""
        return np.concatenate([[0.0], np.cumsum(self.pmf)])

    def to_dict(self) -> Dict[str, Any]:
        return {"edges": self.edges.tolist(), "pmf": self.pmf.tolist(), "fallback": self.fallback}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'BucketedPriceDistribution':
        return cls(np.array(data["edges"]), np.array(data["pmf"]), bool(data.get("fallback", False)))


def fit_censored_distribution(
    records: Sequence[FeedbackRecord],
    edges: Optional[Sequence[float]] = None,
    n_buckets: int = DEFAULT_BUCKETS,
    max_iter: int = 500,
    tolerance: float = 1e-12
) -> BucketedPriceDistribution:
    """
    Maximum de vraisemblance censurée du prix gagnant

    Un gain au prix b contribue P(b̂ < b), une perte P(b̂ >= b). Départ depuis la
    régression isotone des gains sur les enchères, puis itérations de Turnbull
    sur les seaux (le premier couvre [0, e1), le dernier [e(K-1), +inf)).
    """
    if not records:
        raise DegenerateDataError("aucun retour d'enchère")
    bids = np.array([r.bid for r in records], dtype=float)
    won = np.array([r.won for r in records], dtype=bool)
    if edges is None:
        low, high = bids.min(), bids.max()
        if high <= low:
            low, high = low / 2, high * 2
        edges = np.geomspace(low, high, n_buckets + 1)
    edges = np.asarray(edges, dtype=float)
    k = len(edges) - 1

    if won.all() or not won.any():
        logger.warning("⚠️ retours tous %s, distribution plate", "gagnés" if won.all() else "perdus")
        return BucketedPriceDistribution(edges, np.full(k, 1.0 / k), fallback=True)

    isotonic = IsotonicRegression(y_min=0.0, y_max=1.0, increasing=True, out_of_bounds="clip")
    isotonic.fit(bids, won.astype(float))
    cdf = np.concatenate([[0.0], isotonic.predict(edges[1:-1]), [1.0]])
    pmf = 0.999 * np.clip(np.diff(cdf), 0.0, None) + 0.001 / k
    pmf /= pmf.sum()

    lower = edges[:-1].copy()
    lower[0] = 0.0
    upper = edges[1:].copy()
    upper[-1] = np.inf
    # gain: seaux [0, c) avec lower < b ; perte: seaux [s, k) avec upper > b
    prefix_counts = np.bincount(np.searchsorted(lower, bids[won], side="left"), minlength=k + 1)
    suffix_counts = np.bincount(np.searchsorted(upper, bids[~won], side="right"), minlength=k)
    n = len(records)

    for _ in range(max_iter):
        head = np.concatenate([[0.0], np.cumsum(pmf)])
        tail = np.cumsum(pmf[::-1])[::-1]
        prefix_ratio = np.divide(prefix_counts, head, out=np.zeros(k + 1), where=head > 0)
        suffix_ratio = np.divide(suffix_counts, tail, out=np.zeros(k), where=tail > 0)
        prefix_weight = np.cumsum(prefix_ratio[::-1])[::-1][1:]
        suffix_weight = np.cumsum(suffix_ratio)
        updated = pmf * (prefix_weight + suffix_weight) / n
        updated /= updated.sum()
        change = np.max(np.abs(updated - pmf))
        pmf = updated
        if change < tolerance:
            break

    distribution = BucketedPriceDistribution(edges, pmf)
    assert np.all(np.diff(distribution.cdf_at_edges()) >= 0)
    return distribution


def most_probable_price_bid(dist: BucketedPriceDistribution) -> float:
    """Milieu du seau de plus forte masse (égalité: seau le plus bas)"""
    best = int(np.argmax(dist.pmf))
    return float((dist.edges[best] + dist.edges[best + 1]) / 2)


# -- Facteur de shading logistique --------------------------------------------

@dataclass(frozen=True, eq=False)
class ShadingFactorModel:
    """facteur = logistic(w0 + sum(wi * xi)), enchère = facteur * enchère non ombrée"""
    w0: float
    weights: np.ndarray

    def factor(self, features: FeatureVector) -> float:
        return min(1.0, float(expit(self.w0 + features.dot(self.weights))))


def _require_mbtw(records: Sequence[FeedbackRecord]) -> np.ndarray:
    if not records:
        raise DegenerateDataError("aucun retour d'enchère")
    if any(r.min_bid_to_win is None for r in records):
        raise DegenerateDataError("min_bid_to_win manquant (simulation sans --reveal-mbtw ?)")
    return np.array([r.min_bid_to_win for r in records], dtype=float)


def shading_factor_lr(records: Sequence[FeedbackRecord], config: Optional[TrainingConfig] = None) -> ShadingFactorModel:
    """
    Régression logistique du facteur de shading optimal

    Cible: min_bid_to_win / enchère non ombrée (la valeur V), bornée à (0, 1].
    """
    mbtw = _require_mbtw(records)
    config = config or TrainingConfig()
    values = np.array([r.value for r in records], dtype=float)
    target = np.clip(mbtw / np.maximum(values, MIN_BID), MIN_BID, 1.0)
    dimension = records[0].features.dimension
    design = build_design([r.features for r in records], [], dimension)
    result = fit_logistic(design, target, np.ones(len(records)), config, np.zeros(dimension + 1))
    return ShadingFactorModel(float(result.theta[0]), result.theta[1:])


def apply_shading_factor(model: ShadingFactorModel, features: FeatureVector, unshaded_bid: float) -> float:
    return model.factor(features) * unshaded_bid


# -- Shader non linéaire par segment ------------------------------------------

@dataclass(frozen=True)
class SegmentParams:
    """
    Paramètres d'un segment: branche non linéaire log((1 + u1*u2*b) / u2) si
    u2 > 0, sinon b1 * b. rls_state = (estimation, covariance) de la branche active.
    """
    segment_key: Tuple[str, ...]
    u1: float = 1.0
    u2: float = 0.0
    b1: float = 0.9
    rls_state: Tuple[Tuple[float, ...], Tuple[Tuple[float, ...], ...]] = ()

    def __post_init__(self):
        if not 0 < self.b1 <= 1:
            raise DomainError(f"b1 doit être dans (0, 1] (b1={self.b1})")
        if not self.rls_state:
            theta = (self.u1, self.u2) if self.nonlinear else (self.b1,)
            covariance = tuple(tuple(1000.0 if i == j else 0.0 for j in range(len(theta))) for i in range(len(theta)))
            object.__setattr__(self, "rls_state", (theta, covariance))

    @property
    def nonlinear(self) -> bool:
        return self.u2 > 0

    def to_dict(self) -> Dict[str, Any]:
        return {"segment_key": list(self.segment_key), "u1": self.u1, "u2": self.u2, "b1": self.b1,
                "rls_state": [list(self.rls_state[0]), [list(row) for row in self.rls_state[1]]]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'SegmentParams':
        theta, covariance = data["rls_state"]
        return cls(tuple(data["segment_key"]), float(data["u1"]), float(data["u2"]), float(data["b1"]),
                   (tuple(theta), tuple(tuple(row) for row in covariance)))


def _nonlinear_output(u1: float, u2: float, unshaded_bid: float) -> Optional[float]:
    argument = (1 + u1 * u2 * unshaded_bid) / u2
    if argument <= 0:
        return None
    return math.log(argument)


def segment_nonlinear_apply(params: SegmentParams, unshaded_bid: float) -> float:
    """Enchère ombrée du segment, bornée à (0, enchère non ombrée]"""
    if not unshaded_bid > 0:
        raise DomainError(f"enchère non ombrée non positive: {unshaded_bid}")
    if params.nonlinear:
        output = _nonlinear_output(params.u1, params.u2, unshaded_bid)
        if output is not None and output > 0:
            return min(output, unshaded_bid)
        logger.info("🔁 segment %s: branche non linéaire invalide, repli linéaire", params.segment_key)
    return min(max(params.b1 * unshaded_bid, MIN_BID), unshaded_bid)


def segment_rls_update(
    params: SegmentParams,
    observed_mbtw: float,
    unshaded_bid: float,
    forgetting: float = DEFAULT_FORGETTING
) -> SegmentParams:
    """
    Un pas de moindres carrés récursifs vers l'enchère minimale gagnante observée

    Branche linéaire: régresseur b, paramètre b1. Branche non linéaire: RLS
    étendu, régresseur = jacobien de la sortie en (u1, u2).
    """
    theta = np.array(params.rls_state[0])
    covariance = np.array(params.rls_state[1])
    b = unshaded_bid

    if params.nonlinear:
        u1, u2 = theta
        output = _nonlinear_output(u1, u2, b)
        if output is None:
            logger.info("🔁 segment %s: argument non positif, mise à jour ignorée", params.segment_key)
            return params
        denominator = 1 + u1 * u2 * b
        phi = np.array([u2 * b / denominator, u1 * b / denominator - 1 / u2])
    else:
        output = theta[0] * b
        phi = np.array([b])

    gain = covariance @ phi / (forgetting + phi @ covariance @ phi)
    theta = theta + gain * (observed_mbtw - output)
    covariance = (covariance - np.outer(gain, phi @ covariance)) / forgetting
    covariance = (covariance + covariance.T) / 2

    if params.nonlinear:
        theta[1] = max(theta[1], MIN_BID)
        u1, u2, b1 = float(theta[0]), float(theta[1]), params.b1
    else:
        theta[0] = min(max(theta[0], MIN_BID), 1.0)
        u1, u2, b1 = params.u1, params.u2, float(theta[0])
    state = (tuple(float(t) for t in theta), tuple(tuple(float(c) for c in row) for row in covariance))
    return SegmentParams(params.segment_key, u1, u2, b1, state)


# -- Maintien de taux de gain -------------------------------------------------

def winrate_maintainer_bid(model: WinRateModel, features: FeatureVector, target: float, value: float) -> float:
    """Inverse le modèle logistique pour viser un taux de gain fixé, borné à (0, V]"""
    if not 0 < target < 1:
        raise DomainError(f"taux de gain cible hors de (0, 1): {target}")
    if not value > 0:
        raise DomainError(f"valeur non positive: {value}")
    # en espace log: exp() déborde pour une pente beta très faible
    log_bid = math.log(model.currency_scale) + (logit(target) - alpha(model, features)) / model.beta
    if log_bid >= math.log(value):
        return value
    return min(max(math.exp(log_bid), MIN_BID), value)


# -- Estimateur ponctuel à perte asymétrique ----------------------------------

@dataclass(frozen=True, eq=False)
class PointEstimatorModel:
    """Régression linéaire du prix de marché, poids 1 + a sur les pertes, 1 - a sur les gains"""
    weights: np.ndarray
    asymmetry: float

    def __post_init__(self):
        if not 0 <= self.asymmetry < 1:
            raise DomainError(f"asymétrie hors de [0, 1): {self.asymmetry}")

    def predict(self, features: FeatureVector) -> float:
        return float(self.weights[0] + features.dot(self.weights[1:]))


def _dense_design(records: Sequence[FeedbackRecord]) -> np.ndarray:
    dimension = records[0].features.dimension
    return build_design([r.features for r in records], [], dimension).toarray()


def point_estimator_train(records: Sequence[FeedbackRecord], asymmetry: float) -> PointEstimatorModel:
    """
    Moindres carrés pondérés sur min_bid_to_win

    Colonnes nulles ignorées; équations normales singulières: repli ridge 1e-6.
    """
    target = _require_mbtw(records)
    if not 0 <= asymmetry < 1:
        raise DomainError(f"asymétrie hors de [0, 1): {asymmetry}")
    design = _dense_design(records)
    sample_weight = np.array([1 - asymmetry if r.won else 1 + asymmetry for r in records])
    active = np.abs(design).sum(axis=0) > 0
    x = design[:, active]

    normal = x.T @ (sample_weight[:, None] * x)
    if np.linalg.matrix_rank(normal) < x.shape[1]:
        logger.info("🔧 équations normales singulières, repli ridge %.0e", RIDGE_PENALTY)
        regression = Ridge(alpha=RIDGE_PENALTY, fit_intercept=False)
    else:
        regression = LinearRegression(fit_intercept=False)
    regression.fit(x, target, sample_weight=sample_weight)

    weights = np.zeros(design.shape[1])
    weights[active] = regression.coef_
    return PointEstimatorModel(weights, asymmetry)


def point_estimator_bid(model: PointEstimatorModel, features: FeatureVector) -> float:
    return max(model.predict(features), MIN_BID)


def fixed_factor_bid(factor: float, value: float) -> float:
    if not 0 < factor <= 1:
        raise DomainError(f"facteur hors de (0, 1]: {factor}")
    return factor * value


# -- Registre des politiques --------------------------------------------------

@dataclass
class PolicyContext:
    """Ce dont une politique a besoin au-delà des retours d'enchères"""
    vocabulary: Optional[Vocabulary] = None
    landscape: Optional[LandscapeSpec] = None
    training: TrainingConfig = field(default_factory=TrainingConfig)
    grid_n: int = 10_000


class Policy:
    """
    Politique d'enchère enregistrée sous un nom

    fit() apprend sur des FeedbackRecord, bid() renvoie une enchère dans (0, V].
    """
    name = ""
    requires_mbtw = False
    estimates_mbtw = False
    defaults: Dict[str, Any] = {}

    def __init__(self, context: Optional[PolicyContext] = None, **params):
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise ConfigError(f"paramètres inconnus pour {self.name}: {sorted(unknown)}")
        self.context = context or PolicyContext()
        self.params = {**self.defaults, **params}
        self.diagnostics: Dict[str, Any] = {}

    def fit(self, records: Sequence[FeedbackRecord]) -> 'Policy':
        return self

    def bid(self, features: FeatureVector, value: float) -> float:
        raise NotImplementedError

    def __call__(self, features: FeatureVector, value: float) -> float:
        return self.bid(features, value)

    def predict_price(self, features: FeatureVector, value: float) -> float:
        """min_bid_to_win prédit (politiques avec estimates_mbtw seulement)"""
        raise NotImplementedError


    def decide(self, features: FeatureVector, value: float) -> Dict[str, Any]:
        """Ligne de décision; seules les politiques à modèle remplissent les espérances"""
        return {"bid": self.bid(features, value), "expected_win_rate": None,
                "expected_surplus": None, "iterations": 0, "converged": True}

    def state_dict(self) -> Dict[str, Any]:
        return {}

    def load_state(self, state: Mapping[str, Any]) -> None:
        pass

    def to_dict(self) -> Dict[str, Any]:
        return {"format": POLICY_FORMAT, "version": POLICY_VERSION, "policy": self.name,
                "params": self.params, "state": self.state_dict()}


class WinRatePolicy(Policy):
    """Modèle logistique de taux de gain + maximisation du surplus"""
    name = "wr"
    defaults = {"epsilon_relative": DEFAULT_RELATIVE_EPSILON, "max_steps": DEFAULT_MAX_STEPS,
                "cut": "ratio", "floor_factor": 0.0}

    def __init__(self, context=None, **params):
        super().__init__(context, **params)
        self.model: Optional[WinRateModel] = None

    def fit(self, records):
        result = fit(records, self.context.training, self.context.vocabulary)
        self.model = result.model
        self.diagnostics = {"final_loss": result.final_loss, "beta": result.model.beta,
                            "epochs": result.epochs_run, "converged": result.converged}
        return self

    def shade(self, features, value):
        return shade(self.model, features, value, eps=self.params["epsilon_relative"] * value,
                     max_steps=self.params["max_steps"], cut=self.params["cut"],
                     floor_factor=self.params["floor_factor"])

    def bid(self, features, value):
        return self.shade(features, value).bid

    def decide(self, features, value):
        return self.shade(features, value).to_dict()

    def state_dict(self):
        return {"model": self.model.to_dict()}

    def load_state(self, state):
        self.model = WinRateModel.from_dict(state["model"])
        if self.model.vocabulary is not None:
            self.context.vocabulary = self.model.vocabulary


class WinRateMaintainerPolicy(WinRatePolicy):
    """Enchère qui maintient un taux de gain cible (comportement type SSP)"""
    name = "wr-maintainer"
    defaults = {"target": DEFAULT_TARGET_WINRATE}

    def bid(self, features, value):
        return winrate_maintainer_bid(self.model, features, self.params["target"], value)

    def decide(self, features, value):
        return Policy.decide(self, features, value)


class MostProbablePricePolicy(Policy):
    """Enchère au prix gagnant le plus probable (distribution censurée)"""
    name = "mpp"
    defaults = {"n_buckets": DEFAULT_BUCKETS}

    def __init__(self, context=None, **params):
        super().__init__(context, **params)
        self.distribution: Optional[BucketedPriceDistribution] = None
        self.price = 0.0

    def fit(self, records):
        self.distribution = fit_censored_distribution(records, n_buckets=self.params["n_buckets"])
        self.price = most_probable_price_bid(self.distribution)
        self.diagnostics = {"most_probable_price": self.price, "fallback": self.distribution.fallback}
        return self

    def bid(self, features, value):
        return min(self.price, value)

    def state_dict(self):
        return {"distribution": self.distribution.to_dict()}

    def load_state(self, state):
        self.distribution = BucketedPriceDistribution.from_dict(state["distribution"])
        self.price = most_probable_price_bid(self.distribution)


class ShadingFactorPolicy(Policy):
    """Facteur de shading prédit par régression logistique"""
    name = "factor-lr"
    requires_mbtw = True
    estimates_mbtw = True

    def __init__(self, context=None, **params):
        super().__init__(context, **params)
        self.model: Optional[ShadingFactorModel] = None

    def fit(self, records):
        self.model = shading_factor_lr(records, self.context.training)
        self.diagnostics = {"intercept_factor": float(expit(self.model.w0))}
        return self

    def bid(self, features, value):
        return apply_shading_factor(self.model, features, value)

    def predict_price(self, features, value):
        return apply_shading_factor(self.model, features, value)

    def state_dict(self):
        return {"w0": self.model.w0, "weights": self.model.weights.tolist()}

    def load_state(self, state):
        self.model = ShadingFactorModel(float(state["w0"]), np.array(state["weights"], dtype=float))


class SegmentPolicy(Policy):
    """Shader paramétrique par segment, ajusté par moindres carrés récursifs"""
    name = "segment-nl"
    requires_mbtw = True
    defaults = {"segment_attributes": ["exchange", "domain"], "initial_factor": 0.9,
                "initial_u1": 1.0, "initial_u2": 0.0, "forgetting": DEFAULT_FORGETTING}

    def __init__(self, context=None, **params):
        super().__init__(context, **params)
        self.segments: Dict[Tuple[str, ...], SegmentParams] = {}

    def segment_key(self, features: FeatureVector) -> Tuple[str, ...]:
        attributes = self.context.vocabulary.decode(features) if self.context.vocabulary else {}
        return tuple(attributes.get(name, "") for name in self.params["segment_attributes"])

    def initial_params(self, key: Tuple[str, ...]) -> SegmentParams:
        return SegmentParams(key, self.params["initial_u1"], self.params["initial_u2"], self.params["initial_factor"])

    def fit(self, records):
        mbtw = _require_mbtw(records)
        for record, target in zip(records, mbtw):
            key = self.segment_key(record.features)
            params = self.segments.get(key) or self.initial_params(key)
            self.segments[key] = segment_rls_update(params, float(target), record.value, self.params["forgetting"])
        self.diagnostics = {"segments": len(self.segments)}
        return self

    def bid(self, features, value):
        key = self.segment_key(features)
        params = self.segments.get(key) or self.initial_params(key)
        return segment_nonlinear_apply(params, value)

    def state_dict(self):
        return {"segments": [self.segments[key].to_dict() for key in sorted(self.segments)],
                "vocabulary": self.context.vocabulary.to_dict() if self.context.vocabulary else None}

    def load_state(self, state):
        self.segments = {}
        for data in state["segments"]:
            params = SegmentParams.from_dict(data)
            self.segments[params.segment_key] = params
        if state.get("vocabulary"):
            self.context.vocabulary = Vocabulary.from_dict(state["vocabulary"])


class PointEstimatorPolicy(Policy):
    """Enchère au prix de marché prédit par perte asymétrique"""
    name = "point-est"
    requires_mbtw = True
    estimates_mbtw = True
    defaults = {"asymmetry": 0.5}

    def __init__(self, context=None, **params):
        super().__init__(context, **params)
        self.model: Optional[PointEstimatorModel] = None

    def fit(self, records):
        self.model = point_estimator_train(records, self.params["asymmetry"])
        return self

    def bid(self, features, value):
        return min(point_estimator_bid(self.model, features), value)

    def predict_price(self, features, value):
        return point_estimator_bid(self.model, features)

    def state_dict(self):
        return {"weights": self.model.weights.tolist()}

    def load_state(self, state):
        self.model = PointEstimatorModel(np.array(state["weights"], dtype=float), self.params["asymmetry"])


class FixedFactorPolicy(Policy):
    """Facteur constant (les shades SSP observés tournent autour de 90%)"""
    name = "fixed"
    defaults = {"factor": 0.9}

    def bid(self, features, value):
        return fixed_factor_bid(self.params["factor"], value)


class OraclePolicy(Policy):
    """Enchère optimale connaissant le vrai paysage (évaluation seulement)"""
    name = "oracle"
    defaults = {"grid_n": None}

    def __init__(self, context=None, **params):
        super().__init__(context, **params)
        if self.params["grid_n"] is None:
            self.params["grid_n"] = self.context.grid_n

    def fit(self, records):
        if self.context.landscape is None:
            raise ConfigError("l'oracle exige un paysage")
        return self

    def bid(self, features, value):
        bid, _ = oracle_optimal_bid(self.context.landscape, features, value, self.params["grid_n"])
        return bid

    def state_dict(self):
        return {"landscape": self.context.landscape.to_dict()}

    def load_state(self, state):
        self.context.landscape = LandscapeSpec.from_dict(state["landscape"])


REGISTRY: Dict[str, Type[Policy]] = {
    cls.name: cls for cls in (
        WinRatePolicy, MostProbablePricePolicy, ShadingFactorPolicy, SegmentPolicy,
        WinRateMaintainerPolicy, PointEstimatorPolicy, FixedFactorPolicy, OraclePolicy
    )
}


def create_policy(name: str, context: Optional[PolicyContext] = None, **params) -> Policy:
    if name not in REGISTRY:
        raise ConfigError(f"politique inconnue: {name!r} (connues: {', '.join(sorted(REGISTRY))})")
    return REGISTRY[name](context, **params)


def policy_from_dict(data: Mapping[str, Any], context: Optional[PolicyContext] = None) -> Policy:
    """Recharge une politique depuis son document versionné"""
    if data.get("format") != POLICY_FORMAT or data.get("version") != POLICY_VERSION:
        raise FormatError(f"document de politique inconnu: {data.get('format')!r} v{data.get('version')!r}")
    try:
        policy = create_policy(data["policy"], context, **data.get("params", {}))
        policy.load_state(data.get("state", {}))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"document de politique corrompu: {e}") from e
    return policy
