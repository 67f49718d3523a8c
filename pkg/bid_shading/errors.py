"""
Erreurs du moteur de shading - chaque famille porte son code de sortie CLI
"""


class ShadingError(Exception):
    """Erreur de base du package"""
    exit_code: int = 1


class ConfigError(ShadingError):
    """Configuration ou usage invalide"""
    exit_code = 2


class DomainError(ShadingError, ValueError):
    """Argument hors domaine (enchère ou valeur non positive, etc.)"""
    exit_code = 2


class DegenerateDataError(ShadingError):
    """Données d'entraînement inexploitables"""
    exit_code = 3


class ModelRejectedError(DegenerateDataError):
    """Modèle appris rejeté (beta <= 0)"""


class FormatError(ShadingError):
    """Fichier corrompu ou version inconnue"""
    exit_code = 4
