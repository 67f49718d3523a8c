"""
Persistance - lignes JSON versionnées (retours, requêtes, décisions),
documents de politique et rapports, écrits de façon atomique
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

import pandas as pd

from .benchmarks import Policy, PolicyContext, policy_from_dict
from .errors import ConfigError, DegenerateDataError, DomainError, FormatError
from .landscape import FeedbackRecord, Request
from .winrate import FeatureVector, Vocabulary, encode

logger = logging.getLogger(__name__)

LINE_VERSION = 1
PathLike = Union[str, Path]


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Écrit dans un fichier temporaire du même dossier puis le renomme"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile('w', encoding='utf-8', dir=path.parent,
                                         prefix=f".{path.name}.", delete=False) as f:
            f.write(text)
            temp_name = f.name
        os.replace(temp_name, path)
    except OSError as e:
        raise ConfigError(f"écriture impossible dans {path}: {e}") from e
    return path


def write_json(path: PathLike, data: Mapping[str, Any]) -> Path:
    return atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"fichier introuvable: {path}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"JSON illisible ({path}): {e}") from e


def write_lines(path: PathLike, rows: Iterable[Mapping[str, Any]]) -> Path:
    text = "".join(json.dumps({"v": LINE_VERSION, **row}, ensure_ascii=False) + "\n" for row in rows)
    return atomic_write_text(path, text)


def read_lines(path: PathLike) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """(numéro de ligne, objet) pour chaque ligne non vide, version vérifiée"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            for number, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as e:
                    raise FormatError(f"{path}:{number}: ligne illisible ({e})") from e
                if not isinstance(row, dict) or row.get("v") != LINE_VERSION:
                    raise FormatError(f"{path}:{number}: version inconnue {row.get('v') if isinstance(row, dict) else row!r}")
                yield number, row
    except FileNotFoundError as e:
        raise ConfigError(f"fichier introuvable: {path}") from e


# -- Retours d'enchères -------------------------------------------------------

def feedback_to_row(record: FeedbackRecord) -> Dict[str, Any]:
    row = {
        "features": record.features.to_text(),
        "dim": record.features.dimension,
        "bid": record.bid,
        "value": record.value,
        "won": record.won
    }
    if record.min_bid_to_win is not None:
        row["min_bid_to_win"] = record.min_bid_to_win
    return row


def feedback_from_row(row: Mapping[str, Any]) -> FeedbackRecord:
    try:
        mbtw = row.get("min_bid_to_win")
        return FeedbackRecord(
            features=FeatureVector.parse(row["features"], int(row["dim"])),
            bid=float(row["bid"]),
            value=float(row["value"]),
            won=bool(row["won"]),
            min_bid_to_win=float(mbtw) if mbtw is not None else None
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"retour d'enchère invalide: {e}") from e


def write_feedback(path: PathLike, records: Iterable[FeedbackRecord]) -> Path:
    return write_lines(path, (feedback_to_row(r) for r in records))


def read_feedback(path: PathLike) -> List[FeedbackRecord]:
    records = []
    for number, row in read_lines(path):
        try:
            records.append(feedback_from_row(row))
        except FormatError as e:
            raise FormatError(f"{path}:{number}: {e}") from e
    return records


# -- Requêtes et décisions ----------------------------------------------------

def write_requests(path: PathLike, requests: Iterable[Request]) -> Path:
    rows = ({"features": r.features.to_text(), "dim": r.features.dimension,
             "attributes": r.attributes, "value": r.value} for r in requests)
    return write_lines(path, rows)


def read_requests(path: PathLike, vocabulary: Optional[Vocabulary] = None) -> List[Tuple[FeatureVector, float]]:
    """
    Requêtes (features, valeur)

    Une ligne porte soit 'features' + 'dim', soit des 'attributes' encodés
    avec le vocabulaire du modèle (prioritaire quand il est connu).
    """
    requests = []
    for number, row in read_lines(path):
        try:
            value = float(row["value"])
            if vocabulary is not None and "attributes" in row:
                features = encode(row["attributes"], vocabulary)
            elif "features" in row:
                features = FeatureVector.parse(row["features"], int(row["dim"]))
            else:
                raise FormatError("ni features ni attributs encodables")
        except (KeyError, TypeError, ValueError, FormatError) as e:
            raise FormatError(f"{path}:{number}: requête invalide: {e}") from e
        requests.append((features, value))
    if vocabulary is not None and vocabulary.oov_count:
        logger.warning("🆕 %d attributs inconnus du vocabulaire", vocabulary.oov_count)
    return requests


def write_decisions(path: PathLike, decisions: Iterable[Mapping[str, Any]]) -> Path:
    return write_lines(path, decisions)


# -- Politiques ---------------------------------------------------------------

def save_policy(path: PathLike, policy: Policy) -> Path:
    return write_json(path, policy.to_dict())


def load_policy(path: PathLike, context: Optional[PolicyContext] = None) -> Policy:
    data = read_json(path)
    if not isinstance(data, dict):
        raise FormatError(f"document de politique invalide: {path}")
    try:
        return policy_from_dict(data, context)
    except (DomainError, DegenerateDataError) as e:
        raise FormatError(f"document de politique corrompu ({path}): {e}") from e


def write_vocabulary(path: PathLike, vocabulary: Vocabulary) -> Path:
    return write_json(path, {"v": LINE_VERSION, **vocabulary.to_dict()})


def read_vocabulary(path: PathLike) -> Vocabulary:
    data = read_json(path)
    if data.get("v") != LINE_VERSION:
        raise FormatError(f"version de vocabulaire inconnue: {data.get('v')!r}")
    return Vocabulary.from_dict(data)


# -- Rapports -----------------------------------------------------------------

def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    return atomic_write_text(path, frame.to_csv(float_format="%.10g"))
