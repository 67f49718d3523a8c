"""
Maximisation du surplus espéré - bornes de l'optimum et recherche par bissection

f(b) = (V - b) / (1 + exp(-alpha) * b^(-beta)) admet un unique maximum b* pour
beta > 0, racine de h(b) = beta*V - (beta+1)*b - exp(alpha)*b^(beta+1).
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from .errors import DomainError
from .winrate import FeatureVector, WinRateModel, alpha as model_alpha

logger = logging.getLogger(__name__)

DEFAULT_RELATIVE_EPSILON = 1e-4
DEFAULT_MAX_STEPS = 50
MIN_GRID_N = 1_000
RATIO_LOW, RATIO_HIGH = 0.01, 0.99
CUTS = ("ratio", "ratio-midpoint", "bisect")


@dataclass(frozen=True)
class SurplusProblem:
    """Données d'une recherche: alpha, beta, valeur V, précision et pas maximum"""
    alpha: float
    beta: float
    value: float
    epsilon: float
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta doit être > 0 (beta={self.beta})")
        if not self.value > 0:
            raise DomainError(f"valeur non positive: {self.value}")
        if not self.epsilon > 0:
            raise DomainError("epsilon doit être > 0")
        if self.max_steps < 1:
            raise DomainError("max_steps doit être >= 1")
        if not math.isfinite(self.alpha):
            raise DomainError("alpha non fini")

    @classmethod
    def relative(cls, alpha: float, beta: float, value: float,
                 relative_epsilon: float = DEFAULT_RELATIVE_EPSILON,
                 max_steps: int = DEFAULT_MAX_STEPS) -> 'SurplusProblem':
        return cls(alpha, beta, value, relative_epsilon * value, max_steps)

    def win_rate(self, b: float) -> float:
        return float(expit(self.alpha + self.beta * math.log(b)))

    def surplus(self, b: float) -> float:
        """f(b), surplus espéré au prix b"""
        return (self.value - b) * self.win_rate(b)


@dataclass(frozen=True)
class ShadingDecision:
    """Résultat d'une recherche d'enchère optimale"""
    bid: float
    expected_win_rate: float
    expected_surplus: float
    iterations: int
    bracket: Tuple[float, float]
    converged: bool = True
    clamped: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bid": self.bid,
            "expected_win_rate": self.expected_win_rate,
            "expected_surplus": self.expected_surplus,
            "iterations": self.iterations,
            "converged": self.converged
        }


def _scaled_power(alpha: float, exponent: float, b: float) -> float:
    """exp(alpha) * b^exponent évalué en espace log"""
    try:
        return math.exp(alpha + exponent * math.log(b))
    except OverflowError:
        return math.inf


def h(problem: SurplusProblem, b: float) -> float:
    """Numérateur de f'(b): même signe que la dérivée, strictement décroissant"""
    if not b > 0:
        raise DomainError(f"prix non positif: {b}")
    beta, value = problem.beta, problem.value
    return beta * value - (beta + 1) * b - _scaled_power(problem.alpha, beta + 1, b)


def bid_bounds(problem: SurplusProblem) -> Tuple[float, float]:
    """
    Encadrement de b*

    b_min = beta*V / (beta + 1 + exp(alpha)*V^beta) <= b* < beta*V / (beta + 1) = b_max
    """
    beta, value = problem.beta, problem.value
    log_denominator = np.logaddexp(math.log(beta + 1), problem.alpha + beta * math.log(value))
    b_min = math.exp(math.log(beta) + math.log(value) - log_denominator)
    b_max = beta * value / (beta + 1)
    return b_min, b_max


def _decision(problem: SurplusProblem, bid: float, iterations: int, bracket: Tuple[float, float],
              converged: bool, clamped: int) -> ShadingDecision:
    win_rate = problem.win_rate(bid)
    return ShadingDecision(
        bid=bid,
        expected_win_rate=win_rate,
        expected_surplus=(problem.value - bid) * win_rate,
        iterations=iterations,
        bracket=bracket,
        converged=converged,
        clamped=clamped
    )


def maximize(problem: SurplusProblem, cut: str = "ratio") -> ShadingDecision:
    """
    Bissection guidée par le rapport des dérivées aux bornes

    Le point de coupe est b = (1 - r)*b_min + r*b_max avec
    r = -h(b_min) / (h(b_max) - h(b_min)). Invariant: h >= 0 à gauche, h < 0 à droite.
    h étant concave, la corde tombe souvent du même côté: correction d'Illinois
    et milieu imposé quand deux pas n'ont pas réduit l'intervalle de moitié.

    Args:
        problem: Données de la recherche
        cut: "ratio" (r borné à [0.01, 0.99]), "ratio-midpoint" (r = 0.5 hors
            de cet intervalle) ou "bisect" (r = 0.5 toujours)

    Returns:
        ShadingDecision; sans convergence après max_steps, le milieu de
        l'intervalle restant avec converged=False
    """
    if cut not in CUTS:
        raise DomainError(f"coupe inconnue: {cut!r}")
    b_min, b_max = bid_bounds(problem)
    h_min, h_max = h(problem, b_min), h(problem, b_max)
    if h_min <= 0:
        return _decision(problem, b_min, 0, (b_min, b_max), True, 0)

    clamped = 0
    moved = 0  # -1: b_min déplacé au pas précédent, +1: b_max
    widths = [math.inf, b_max - b_min]
    force_midpoint = False
    for step in range(1, problem.max_steps + 1):
        width = b_max - b_min
        if cut == "bisect" or force_midpoint:
            r = 0.5
        else:
            r = -h_min / (h_max - h_min)
            if not RATIO_LOW <= r <= RATIO_HIGH:
                clamped += 1
                if cut == "ratio-midpoint" or math.isnan(r):
                    r = 0.5
                else:
                    r = min(max(r, RATIO_LOW), RATIO_HIGH)
        # chaque coupe retire au moins epsilon/4 de l'intervalle
        margin = min(problem.epsilon / 4, width / 2)
        bid = min(max(b_min + r * width, b_min + margin), b_max - margin)
        h_bid = h(problem, bid)
        if h_bid == 0:
            return _decision(problem, bid, step, (b_min, b_max), True, clamped)
        # Illinois: la borne conservée deux fois de suite voit son h divisé par deux
        if h_bid < 0:
            b_max, h_max = bid, h_bid
            if moved == 1:
                h_min /= 2
            moved = 1
        else:
            b_min, h_min = bid, h_bid
            if moved == -1:
                h_max /= 2
            moved = -1
        if b_max - b_min < problem.epsilon:
            return _decision(problem, bid, step, (b_min, b_max), True, clamped)
        # bissection forcée si deux pas n'ont pas divisé l'intervalle par deux
        force_midpoint = b_max - b_min > widths[-2] / 2
        widths.append(b_max - b_min)

    logger.warning("⏳ bissection non convergée après %d pas (intervalle %.3g)",
                   problem.max_steps, b_max - b_min)
    return _decision(problem, (b_min + b_max) / 2, problem.max_steps, (b_min, b_max), False, clamped)


def shade(
    model: WinRateModel,
    features: FeatureVector,
    value: float,
    eps: Optional[float] = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    cut: str = "ratio",
    floor_factor: float = 0.0
) -> ShadingDecision:
    """
    Enchère optimale pour un modèle de taux de gain et une requête

    Args:
        model: WinRateModel (beta > 0)
        features: FeatureVector de la requête
        value: Valeur V de l'opportunité
        eps: Longueur minimale de l'intervalle (défaut 1e-4 * V)
        max_steps: Nombre maximum de pas
        cut: Règle de coupe de maximize()
        floor_factor: Plancher phi, enchère >= phi * V (0 = inactif)

    Returns:
        ShadingDecision exprimée dans l'unité monétaire d'origine
    """
    if not value > 0:
        raise DomainError(f"valeur non positive: {value}")
    if not 0 <= floor_factor < 1:
        raise DomainError("floor_factor doit être dans [0, 1)")
    scale = model.currency_scale
    epsilon = eps if eps is not None else DEFAULT_RELATIVE_EPSILON * value
    problem = SurplusProblem(model_alpha(model, features), model.beta, value / scale, epsilon / scale, max_steps)
    decision = maximize(problem, cut)

    bid = decision.bid * scale
    if bid < floor_factor * value:
        bid = floor_factor * value
    win_rate = problem.win_rate(bid / scale)
    return ShadingDecision(
        bid=bid,
        expected_win_rate=win_rate,
        expected_surplus=(value - bid) * win_rate,
        iterations=decision.iterations,
        bracket=(decision.bracket[0] * scale, decision.bracket[1] * scale),
        converged=decision.converged,
        clamped=decision.clamped
    )


def uniform_closed_form(value: float, b0: float, b1: float) -> Tuple[float, float]:
    """
    Optimum analytique quand b̂ suit une loi uniforme sur [B0, B1]

    L'argmax intérieur est (V + B0) / 2 (annulation de la dérivée de
    (V - b)(b - B0)); la forme (V - B0) / 2 n'est juste que pour B0 = 0.
    """
    if not 0 <= b0 < b1:
        raise DomainError(f"exige 0 <= B0 < B1 (B0={b0}, B1={b1})")
    if value <= b0:
        return b0, 0.0
    if value > 2 * b1 - b0:
        return b1, value - b1
    return (value + b0) / 2, (value - b0) ** 2 / (4 * (b1 - b0))


def grid_maximize(cdf: Callable, value: float, grid_n: int) -> Tuple[float, float]:
    """
    Maximum exhaustif de (V - b) * cdf(b) sur la grille k*V/grid_n, k = 1..grid_n

    cdf doit accepter un tableau numpy de prix (une constante est diffusée).
    Égalités: le prix le plus bas l'emporte.
    """
    if grid_n < MIN_GRID_N:
        raise DomainError(f"grid_n doit être >= {MIN_GRID_N}")
    if not value > 0:
        raise DomainError(f"valeur non positive: {value}")
    grid = np.arange(1, grid_n + 1) * value / grid_n
    probabilities = np.asarray(cdf(grid), dtype=float)
    if probabilities.ndim == 0:
        probabilities = np.broadcast_to(probabilities, grid.shape)
    surplus = (value - grid) * probabilities
    best = int(np.argmax(surplus))
    return float(grid[best]), float(surplus[best])
