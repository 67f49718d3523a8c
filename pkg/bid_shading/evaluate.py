"""
Bilan des politiques - surplus, dépense, taux de gain, eCPM et part de l'optimum
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import mean_squared_error, r2_score

from .errors import ConfigError, DegenerateDataError, DomainError
from .landscape import DEFAULT_GRID_N, FeedbackRecord, LandscapeSpec, oracle_optimal_bid

logger = logging.getLogger(__name__)

MICROS = 1_000_000
OVERBID_TOLERANCE = 1.02
N_DECILES = 10
COMPARED_METRICS = (
    "surplus", "spend", "win_rate", "ecpm", "pct_of_optimal",
    "avg_spend_per_bid", "cost_ratio", "mean_shading_factor"
)


def to_micros(amount: float) -> int:
    return int(round(amount * MICROS))


@dataclass(frozen=True)
class MetricsReport:
    """
    Métriques d'une politique sur un jeu de retours

    Les montants sont cumulés en micro-unités entières:
    surplus_micros + spend_micros == value_won_micros exactement.
    """
    n_bids: int
    n_wins: int
    surplus_micros: int
    spend_micros: int
    value_won_micros: int
    win_rate: float
    ecpm: float
    avg_spend_per_bid: float
    cost_ratio: Optional[float]
    mean_shading_factor: Optional[float]
    surplus_se: float
    pct_of_optimal: Optional[float] = None
    price_mse: Optional[float] = None
    price_r2: Optional[float] = None
    per_price_decile: Tuple['MetricsReport', ...] = field(default=(), compare=False)

    @property
    def surplus(self) -> float:
        return self.surplus_micros / MICROS

    @property
    def spend(self) -> float:
        return self.spend_micros / MICROS

    @property
    def value_won(self) -> float:
        return self.value_won_micros / MICROS

    @property
    def overbid(self) -> bool:
        return self.pct_of_optimal is not None and self.pct_of_optimal > OVERBID_TOLERANCE

    def headline(self) -> Dict[str, Any]:
        """Champs plats (sans ventilation) pour les tableaux"""
        data = asdict(self)
        data.pop("per_price_decile")
        data.update(surplus=self.surplus, spend=self.spend, value_won=self.value_won)
        return data

    def to_dict(self) -> Dict[str, Any]:
        data = self.headline()
        data["per_price_decile"] = [d.headline() for d in self.per_price_decile]
        return data


def _fsum_mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _aggregate(records: Sequence[FeedbackRecord]) -> MetricsReport:
    wins = [r for r in records if r.won]
    n_bids, n_wins = len(records), len(wins)
    spend = sum(to_micros(r.bid) for r in wins)
    value_won = sum(to_micros(r.value) for r in wins)
    surplus = value_won - spend

    # somme exacte (fsum) pour rester invariant par permutation
    per_bid = [(to_micros(r.value) - to_micros(r.bid)) / MICROS if r.won else 0.0 for r in records]
    surplus_se = 0.0
    if n_bids > 1:
        mean = _fsum_mean(per_bid)
        variance = math.fsum((s - mean) ** 2 for s in per_bid) / (n_bids - 1)
        surplus_se = math.sqrt(variance / n_bids)
    factors = [r.bid / r.value for r in records if r.value > 0]

    return MetricsReport(
        n_bids=n_bids,
        n_wins=n_wins,
        surplus_micros=surplus,
        spend_micros=spend,
        value_won_micros=value_won,
        win_rate=n_wins / n_bids,
        ecpm=1000 * spend / MICROS / n_wins if n_wins else 0.0,
        avg_spend_per_bid=spend / MICROS / n_bids,
        cost_ratio=spend / value_won if value_won else None,
        mean_shading_factor=_fsum_mean(factors) if factors else None,
        surplus_se=surplus_se
    )


def value_deciles(values: Sequence[float]) -> np.ndarray:
    """Décile de valeur de chaque retour (bornes par quantiles, indépendantes de l'ordre)"""
    values = np.asarray(values, dtype=float)
    edges = np.quantile(values, np.linspace(0, 1, N_DECILES + 1)[1:-1])
    return np.searchsorted(edges, values, side="right")


def score(records: Sequence[FeedbackRecord], deciles: bool = True) -> MetricsReport:
    """
    Bilan d'une politique

    Args:
        records: FeedbackRecord produits par la politique
        deciles: Ventiler aussi par décile de valeur

    Returns:
        MetricsReport (ecpm = 0 sans gain)
    """
    if not records:
        raise DegenerateDataError("aucun retour à évaluer")
    report = _aggregate(records)
    if not deciles:
        return report
    frame = pd.DataFrame({"decile": value_deciles([r.value for r in records])})
    breakdown = tuple(
        _aggregate([records[i] for i in group.index])
        for _, group in frame.groupby("decile", sort=True)
    )
    return replace(report, per_price_decile=breakdown)


def pct_of_optimal(
    records: Sequence[FeedbackRecord],
    spec: LandscapeSpec,
    grid_n: int = DEFAULT_GRID_N,
    cache: Optional[Dict[Any, float]] = None
) -> Optional[float]:
    """
    Surplus réalisé / somme des surplus espérés de l'oracle sur les mêmes requêtes

    Returns:
        Le ratio, ou None si le potentiel est nul
    """
    if not records:
        raise DegenerateDataError("aucun retour à évaluer")
    cache = {} if cache is None else cache
    potential = []
    for record in records:
        if record.value <= 0:
            continue
        key = (record.features, record.value)
        if key not in cache:
            cache[key] = oracle_optimal_bid(spec, record.features, record.value, grid_n)[1]
        potential.append(cache[key])
    total = math.fsum(potential)
    if not total > 0:
        logger.info("🕳️ potentiel oracle nul, part de l'optimum absente")
        return None
    realized = _aggregate(records).surplus
    ratio = realized / total
    if ratio > OVERBID_TOLERANCE:
        logger.warning("⚠️ part de l'optimum %.3f > %.2f", ratio, OVERBID_TOLERANCE)
    return ratio


def price_regression_metrics(predicted: Sequence[float], revealed: Sequence[float]) -> Tuple[float, float]:
    """
    Erreur quadratique moyenne et r² des prix de marché prédits

    Args:
        predicted: min_bid_to_win prédits par la politique
        revealed: min_bid_to_win révélés par les mêmes enchères

    Returns:
        (mse, r2)
    """
    if len(predicted) != len(revealed):
        raise DomainError("prix prédits et révélés de longueurs différentes")
    if len(revealed) < 2:
        raise DegenerateDataError("au moins deux prix révélés sont nécessaires")
    predicted = np.asarray(predicted, dtype=float)
    revealed = np.asarray(revealed, dtype=float)
    return float(mean_squared_error(revealed, predicted)), float(r2_score(revealed, predicted))


def compare(reports: Mapping[str, MetricsReport], baseline: str) -> pd.DataFrame:
    """
    Écarts en pourcentage de chaque politique par rapport à la référence

    Lignes triées par nom; un dénominateur nul ou absent donne NaN.
    """
    if baseline not in reports:
        raise ConfigError(f"référence {baseline!r} absente des rapports ({', '.join(sorted(reports))})")
    reference = reports[baseline].headline()
    rows = {}
    for name in sorted(reports):
        current = reports[name].headline()
        row = {}
        for metric in COMPARED_METRICS:
            base, value = reference[metric], current[metric]
            if base is None or value is None or base == 0:
                row[metric] = float("nan")
            else:
                row[metric] = 100.0 * (value / base - 1.0)
        rows[name] = row
    table = pd.DataFrame.from_dict(rows, orient="index", columns=list(COMPARED_METRICS))
    table.index.name = "policy"
    return table


def reports_frame(reports: Mapping[str, MetricsReport]) -> pd.DataFrame:
    """Tableau plat des métriques, une ligne par politique"""
    frame = pd.DataFrame.from_dict({name: reports[name].headline() for name in sorted(reports)}, orient="index")
    frame.index.name = "policy"
    return frame


def paired_surplus_delta(a: Sequence[FeedbackRecord], b: Sequence[FeedbackRecord]) -> Tuple[float, float]:
    """
    Écart moyen de surplus par requête entre deux politiques sur le même flux

    Returns:
        (moyenne de a - b, erreur standard)
    """
    if len(a) != len(b) or not a:
        raise DomainError("flux appariés de longueurs différentes ou vides")
    diff = np.array([
        ((ra.value - ra.bid) if ra.won else 0.0) - ((rb.value - rb.bid) if rb.won else 0.0)
        for ra, rb in zip(a, b)
    ])
    if len(diff) < 2:
        return float(diff.mean()), 0.0
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(len(diff)))
