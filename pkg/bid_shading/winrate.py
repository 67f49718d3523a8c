"""
Modèle de taux de gain - régression logistique contrainte sur le log de l'enchère

Pr(gain) = logistic(w0 + sum(wi * xi) + beta * log(b / currency_scale))
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.special import expit

from .errors import DegenerateDataError, DomainError, FormatError, ModelRejectedError

logger = logging.getLogger(__name__)

MODEL_VERSION = 1
PROBABILITY_CLAMP = 1e-12
BID_LIKELIHOOD_BUCKETS = 10

AttributeValue = Union[str, int, float, bool]


@dataclass(frozen=True)
class FeatureVector:
    """Représentation creuse x1..xk d'une requête d'enchère"""
    indices: Tuple[int, ...] = ()
    values: Tuple[float, ...] = ()
    dimension: int = 0

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise DomainError("indices et valeurs de longueurs différentes")
        previous = -1
        for index in self.indices:
            if index <= previous:
                raise DomainError(f"indices non strictement croissants: {self.indices}")
            previous = index
        if self.indices and self.indices[-1] >= self.dimension:
            raise DomainError(f"indice {self.indices[-1]} >= dimension {self.dimension}")
        if not all(math.isfinite(v) for v in self.values):
            raise DomainError("valeur de feature non finie")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, float]], dimension: int) -> 'FeatureVector':
        """Construit un vecteur depuis des paires (indice, valeur), doublons sommés"""
        merged: Dict[int, float] = {}
        for index, value in pairs:
            merged[int(index)] = merged.get(int(index), 0.0) + float(value)
        ordered = sorted(merged.items())
        return cls(
            indices=tuple(i for i, _ in ordered),
            values=tuple(v for _, v in ordered),
            dimension=dimension
        )

    def to_text(self) -> str:
        """Format texte 'indice:valeur' séparé par des espaces"""
        return " ".join(f"{i}:{v!r}" for i, v in zip(self.indices, self.values))

    @classmethod
    def parse(cls, text: str, dimension: int) -> 'FeatureVector':
        pairs = []
        for token in text.split():
            index, _, value = token.partition(":")
            try:
                pairs.append((int(index), float(value)))
            except ValueError as e:
                raise FormatError(f"paire de feature illisible: {token!r}") from e
        try:
            return cls.from_pairs(pairs, dimension)
        except DomainError as e:
            raise FormatError(str(e)) from e

    def dot(self, weights: np.ndarray) -> float:
        if not self.indices:
            return 0.0
        return float(np.dot(weights[list(self.indices)], self.values))


class Vocabulary:
    """
    Dictionnaire de features gelé avant l'entraînement

    Les attributs catégoriels deviennent 'nom=valeur' (one-hot), les attributs
    numériques gardent leur nom et leur valeur. L'indice 0 est réservé aux
    catégories inconnues.
    """

    OOV_INDEX = 0
    OOV_KEY = "<oov>"

    def __init__(self, keys: Optional[Sequence[str]] = None):
        self._index: Dict[str, int] = {self.OOV_KEY: self.OOV_INDEX}
        for key in keys or []:
            if key not in self._index:
                self._index[key] = len(self._index)
        self._keys = {i: k for k, i in self._index.items()}
        self.oov_count = 0

    @staticmethod
    def key_for(name: str, value: AttributeValue) -> Tuple[str, float]:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return name, float(value)
        return f"{name}={value}", 1.0

    @classmethod
    def from_categories(cls, categories: Mapping[str, Sequence[Any]]) -> 'Vocabulary':
        """Vocabulaire déterministe depuis des listes de catégories (ordre trié)"""
        keys = []
        for name in sorted(categories):
            for value in sorted(categories[name], key=str):
                keys.append(cls.key_for(name, value)[0])
        return cls(keys)

    @classmethod
    def fit(cls, attribute_rows: Iterable[Mapping[str, AttributeValue]]) -> 'Vocabulary':
        seen = set()
        for row in attribute_rows:
            for name, value in row.items():
                seen.add(cls.key_for(name, value)[0])
        return cls(sorted(seen))

    @property
    def dimension(self) -> int:
        return len(self._index)

    def index_of(self, key: str) -> Optional[int]:
        return self._index.get(key)

    def decode(self, features: FeatureVector) -> Dict[str, str]:
        """Retrouve les attributs catégoriels actifs d'un vecteur"""
        attributes = {}
        for index in features.indices:
            key = self._keys.get(index, self.OOV_KEY)
            name, sep, value = key.partition("=")
            if sep:
                attributes[name] = value
        return attributes

    def to_dict(self) -> Dict[str, Any]:
        return {"keys": [self._keys[i] for i in range(1, self.dimension)]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Vocabulary':
        return cls(list(data.get("keys", [])))


def encode(request_attributes: Mapping[str, AttributeValue], vocabulary: Vocabulary) -> FeatureVector:
    """
    Encode les attributs d'une requête en vecteur creux

    Args:
        request_attributes: Attributs nom -> valeur
        vocabulary: Dictionnaire gelé

    Returns:
        FeatureVector de dimension vocabulary.dimension
    """
    pairs = []
    unknown = 0
    for name in sorted(request_attributes):
        key, value = Vocabulary.key_for(name, request_attributes[name])
        index = vocabulary.index_of(key)
        if index is None:
            unknown += 1
        else:
            pairs.append((index, value))
    if unknown:
        # toutes les inconnues partagent le même indicateur
        vocabulary.oov_count += unknown
        pairs.append((Vocabulary.OOV_INDEX, 1.0))
    return FeatureVector.from_pairs(pairs, vocabulary.dimension)


@dataclass(frozen=True, eq=False)
class WinRateModel:
    """Poids appris du modèle logistique de taux de gain"""
    w0: float
    weights: np.ndarray = field(repr=False)
    beta: float = 1.0
    currency_scale: float = 1.0
    vocabulary: Optional[Vocabulary] = field(default=None, repr=False)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        if not (math.isfinite(self.w0) and np.all(np.isfinite(weights)) and math.isfinite(self.beta)):
            raise ModelRejectedError("poids non finis")
        if self.beta <= 0:
            raise ModelRejectedError(f"beta={self.beta:.6g} <= 0, modèle rejeté")
        if not self.currency_scale > 0:
            raise DomainError("currency_scale doit être > 0")

    @property
    def k(self) -> int:
        return len(self.weights)

    def raw_intercept(self) -> float:
        """Intercept exprimé pour des enchères non normalisées"""
        return self.w0 - self.beta * math.log(self.currency_scale)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": MODEL_VERSION,
            "k": self.k,
            "w0": float(self.w0),
            "weights": [float(w) for w in self.weights],
            "beta": float(self.beta),
            "currency_scale": float(self.currency_scale),
            "vocabulary": self.vocabulary.to_dict() if self.vocabulary else None
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'WinRateModel':
        if data.get("version") != MODEL_VERSION:
            raise FormatError(f"version de modèle inconnue: {data.get('version')!r}")
        try:
            weights = [float(w) for w in data["weights"]]
            if len(weights) != int(data["k"]):
                raise FormatError("k ne correspond pas au nombre de poids")
            vocabulary = Vocabulary.from_dict(data["vocabulary"]) if data.get("vocabulary") else None
            return cls(
                w0=float(data["w0"]),
                weights=np.array(weights),
                beta=float(data["beta"]),
                currency_scale=float(data["currency_scale"]),
                vocabulary=vocabulary
            )
        except (KeyError, TypeError, ValueError, ModelRejectedError) as e:
            raise FormatError(f"document de modèle corrompu: {e}") from e


def _check_dimension(model: WinRateModel, features: FeatureVector) -> None:
    if features.dimension != model.k:
        raise DomainError(f"dimension {features.dimension} != k={model.k}")


def alpha(model: WinRateModel, features: FeatureVector) -> float:
    """Partie indépendante de l'enchère: w0 + sum(wi * xi)"""
    _check_dimension(model, features)
    return model.w0 + features.dot(model.weights)


def predict_win_rate(model: WinRateModel, features: FeatureVector, bid: float) -> float:
    """
    Probabilité de gagner l'enchère au prix `bid`

    Raises:
        DomainError: si bid <= 0 (log indéfini)
    """
    if not bid > 0:
        raise DomainError(f"enchère non positive: {bid}")
    z = alpha(model, features) + model.beta * math.log(bid / model.currency_scale)
    return float(expit(z))


@dataclass
class TrainingConfig:
    """Hyperparamètres de la descente de gradient"""
    learning_rate: float = 1.0
    epochs: int = 2000
    l2_penalty: float = 0.0
    observation_weighting: str = "none"  # "none" | "bid_likelihood"
    seed: int = 0
    tolerance: float = 1e-10
    validation_fraction: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError("learning_rate doit être > 0")
        if self.epochs < 1:
            raise DomainError("epochs doit être >= 1")
        if self.l2_penalty < 0:
            raise DomainError("l2_penalty doit être >= 0")
        if self.observation_weighting not in ("none", "bid_likelihood"):
            raise DomainError(f"pondération inconnue: {self.observation_weighting}")
        if not 0 <= self.validation_fraction < 1:
            raise DomainError("validation_fraction doit être dans [0, 1)")

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TrainingConfig':
        return cls(**data)


@dataclass
class LogisticFit:
    theta: np.ndarray
    loss: float
    epochs_run: int
    converged: bool


def log_loss_and_gradient(
    theta: np.ndarray,
    design: sparse.csr_matrix,
    y: np.ndarray,
    sample_weight: np.ndarray,
    l2_penalty: float = 0.0,
    penalized: Optional[np.ndarray] = None
) -> Tuple[float, np.ndarray]:
    """
    Log-loss pondérée moyenne et son gradient analytique

    Les étiquettes y peuvent être fractionnaires (cible dans [0, 1]).
    """
    z = design @ theta
    p = np.clip(expit(z), PROBABILITY_CLAMP, 1 - PROBABILITY_CLAMP)
    total_weight = sample_weight.sum()
    loss = -np.sum(sample_weight * (y * np.log(p) + (1 - y) * np.log(1 - p))) / total_weight
    gradient = design.T @ (sample_weight * (expit(z) - y)) / total_weight
    if l2_penalty > 0:
        mask = penalized if penalized is not None else np.ones_like(theta)
        loss += 0.5 * l2_penalty * np.sum(mask * theta ** 2)
        gradient = gradient + l2_penalty * mask * theta
    return float(loss), np.asarray(gradient, dtype=float)


def fit_logistic(
    design: sparse.csr_matrix,
    y: np.ndarray,
    sample_weight: np.ndarray,
    config: TrainingConfig,
    theta0: np.ndarray,
    penalized: Optional[np.ndarray] = None
) -> LogisticFit:
    """Descente de gradient plein lot, pas fixe, déterministe"""
    theta = np.array(theta0, dtype=float)
    loss, gradient = log_loss_and_gradient(theta, design, y, sample_weight, config.l2_penalty, penalized)
    for epoch in range(1, config.epochs + 1):
        theta = theta - config.learning_rate * gradient
        loss, gradient = log_loss_and_gradient(theta, design, y, sample_weight, config.l2_penalty, penalized)
        if np.max(np.abs(gradient)) < config.tolerance:
            return LogisticFit(theta, loss, epoch, True)
    return LogisticFit(theta, loss, config.epochs, False)


def bid_likelihood_weights(bids: np.ndarray, n_buckets: int = BID_LIKELIHOOD_BUCKETS) -> np.ndarray:
    """
    Poids inverses de la densité empirique des enchères

    10 seaux log-espacés, poids normalisés à une moyenne de 1.
    """
    low, high = bids.min(), bids.max()
    if high <= low:
        return np.ones_like(bids)
    edges = np.geomspace(low, high, n_buckets + 1)
    buckets = np.clip(np.searchsorted(edges, bids, side="right") - 1, 0, n_buckets - 1)
    counts = np.bincount(buckets, minlength=n_buckets)
    weights = 1.0 / counts[buckets]
    return weights / weights.mean()


def build_design(features: Sequence[FeatureVector], extra_columns: Sequence[np.ndarray], dimension: int) -> sparse.csr_matrix:
    """Matrice [1 | X | colonnes supplémentaires] au format CSR"""
    n = len(features)
    rows, cols, vals = [], [], []
    for row, vector in enumerate(features):
        rows.extend([row] * len(vector.indices))
        cols.extend(vector.indices)
        vals.extend(vector.values)
    x = sparse.csr_matrix((vals, (rows, cols)), shape=(n, dimension))
    blocks = [sparse.csr_matrix(np.ones((n, 1))), x]
    blocks += [sparse.csr_matrix(np.asarray(c, dtype=float).reshape(n, 1)) for c in extra_columns]
    return sparse.hstack(blocks, format="csr")


@dataclass
class TrainingResult:
    """Modèle appris et diagnostics d'entraînement"""
    model: WinRateModel
    final_loss: float
    epochs_run: int
    converged: bool
    validation_loss: Optional[float] = None
    n_records: int = 0


def fit(records: Sequence[Any], config: TrainingConfig, vocabulary: Optional[Vocabulary] = None) -> TrainingResult:
    """
    Entraîne le modèle de taux de gain sur des retours d'enchères

    Args:
        records: FeedbackRecord (features, bid, won)
        config: Hyperparamètres
        vocabulary: Dictionnaire à embarquer dans le modèle

    Returns:
        TrainingResult avec le modèle et les diagnostics

    Raises:
        DegenerateDataError: données vides ou sans gain / sans perte
        ModelRejectedError: beta <= 0 à convergence
    """
    if not records:
        raise DegenerateDataError("aucun retour d'enchère")
    bids = np.array([r.bid for r in records], dtype=float)
    if np.any(bids <= 0):
        raise DomainError("toutes les enchères doivent être > 0")
    won = np.array([1.0 if r.won else 0.0 for r in records])
    if won.min() == won.max():
        raise DegenerateDataError(
            f"données dégénérées: {int(won.sum())} gains sur {len(records)} enchères"
        )
    dimension = records[0].features.dimension
    if any(r.features.dimension != dimension for r in records):
        raise DomainError("dimensions de features hétérogènes")

    currency_scale = float(np.median(bids))
    design = build_design([r.features for r in records], [np.log(bids / currency_scale)], dimension)
    if config.observation_weighting == "bid_likelihood":
        sample_weight = bid_likelihood_weights(bids)
    else:
        sample_weight = np.ones(len(records))

    train_mask = np.ones(len(records), dtype=bool)
    if config.validation_fraction > 0:
        rng = np.random.default_rng(config.seed)
        train_mask = rng.random(len(records)) >= config.validation_fraction
        if won[train_mask].min() == won[train_mask].max():
            raise DegenerateDataError("partition d'entraînement dégénérée")

    # seuls w1..wk sont pénalisés
    penalized = np.zeros(dimension + 2)
    penalized[1:dimension + 1] = 1.0
    theta0 = np.zeros(dimension + 2)
    theta0[-1] = 1.0

    result = fit_logistic(
        design[train_mask], won[train_mask], sample_weight[train_mask], config, theta0, penalized
    )
    theta = result.theta
    if not result.converged:
        logger.info("⏳ gradient non nul après %d époques (loss=%.6f)", result.epochs_run, result.loss)

    beta = float(theta[-1])
    if not beta > 0:
        raise ModelRejectedError(f"beta={beta:.6g} <= 0 à convergence, modèle rejeté")
    model = WinRateModel(
        w0=float(theta[0]),
        weights=theta[1:dimension + 1],
        beta=beta,
        currency_scale=currency_scale,
        vocabulary=vocabulary
    )

    validation_loss = None
    if not train_mask.all():
        validation_loss, _ = log_loss_and_gradient(
            theta, design[~train_mask], won[~train_mask], sample_weight[~train_mask]
        )
    return TrainingResult(model, result.loss, result.epochs_run, result.converged,
                          validation_loss, int(train_mask.sum()))


def train(records: Sequence[Any], config: TrainingConfig, vocabulary: Optional[Vocabulary] = None) -> WinRateModel:
    """Raccourci de fit() qui ne renvoie que le modèle"""
    return fit(records, config, vocabulary).model
