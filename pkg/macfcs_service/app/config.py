# config.py - Configuration Management for the MACFCS solver

import json
from typing import Any, Dict, Optional

from .logic.optimizer import SearchConfig
from .logic.simulator import SimConfig


class SolverConfig:
    """Tolerances, search and simulation defaults for the batch tools."""

    DEFAULT_CONFIG = {
        # Verdict tolerances (bits)
        'TOL_FEAS': 1e-9,
        'TOL_ZERO': 1e-12,
        'TOL_INDEP': 1e-6,

        # Candidate search
        'RESTARTS': 16,
        'REFINE_ITERS': 10,
        'SEED': 0,
        'INDEP_PENALTY': 10.0,
        'DELTA_START': 0.1,
        'DELTA_MIN': 1e-4,
        'DIRICHLET_ALPHA': 1.0,

        # Monte-Carlo
        'N': 8,
        'BLOCKS': 4,
        'TRIALS': 1000,
        'EPSILON': 0.05,
        'DISTINCT_CODEWORDS': False,
        'MAX_CODEBOOK_BITS': 24,
        'MAX_DECODER_PAIRS': 2 ** 22,

        # Sum capacity
        'CAPACITY_TOL': 1e-7,
        'CAPACITY_RESTARTS': 8,

        # Logging
        'LOG_LEVEL': 'INFO',
    }

    PRESETS = {
        'smoke': {
            'RESTARTS': 2,
            'REFINE_ITERS': 2,
            'TRIALS': 100,
        },
        'thorough': {
            'RESTARTS': 200,
            'REFINE_ITERS': 30,
            'TRIALS': 5000,
            'CAPACITY_RESTARTS': 16,
        },
    }

    @classmethod
    def get_config(cls, preset: Optional[str] = None,
                   overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Defaults, then the named preset, then explicit overrides (keys case-insensitive)."""
        config = cls.DEFAULT_CONFIG.copy()

        if preset:
            if preset not in cls.PRESETS:
                raise ValueError(f"Unknown preset {preset!r}; choose from {sorted(cls.PRESETS)}")
            config.update(cls.PRESETS[preset])

        for key, value in (overrides or {}).items():
            name = key.upper()
            if name not in cls.DEFAULT_CONFIG:
                raise ValueError(f"Unknown configuration key {key!r}")
            config[name] = value

        return config

    @classmethod
    def load_overrides(cls, path: str) -> Dict[str, Any]:
        """Reads a JSON object of configuration overrides."""
        with open(path, 'r', encoding='utf-8') as f:
            try:
                block = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: not valid JSON ({e})") from e
        if not isinstance(block, dict):
            raise ValueError(f"{path}: configuration must be a JSON object")
        return block


def search_config_from(config: Dict[str, Any], cards: Dict[str, int], workers: int = 1) -> SearchConfig:
    return SearchConfig(
        cards=dict(cards),
        restarts=int(config['RESTARTS']),
        refine_iters=int(config['REFINE_ITERS']),
        seed=int(config['SEED']),
        tol_feas=float(config['TOL_FEAS']),
        tol_zero=float(config['TOL_ZERO']),
        tol_indep=float(config['TOL_INDEP']),
        indep_penalty=float(config['INDEP_PENALTY']),
        workers=workers,
        delta_start=float(config['DELTA_START']),
        delta_min=float(config['DELTA_MIN']),
        dirichlet_alpha=float(config['DIRICHLET_ALPHA']),
    )


def sim_config_from(config: Dict[str, Any], n: int, rates: Dict[str, float], workers: int = 1,
                    progress: bool = False) -> SimConfig:
    return SimConfig(
        n=n,
        trials=int(config['TRIALS']),
        seed=int(config['SEED']),
        rates=dict(rates),
        blocks=int(config['BLOCKS']),
        epsilon=float(config['EPSILON']),
        workers=workers,
        distinct_codewords=bool(config['DISTINCT_CODEWORDS']),
        max_codebook_bits=float(config['MAX_CODEBOOK_BITS']),
        max_decoder_pairs=int(config['MAX_DECODER_PAIRS']),
        progress=progress,
    )
