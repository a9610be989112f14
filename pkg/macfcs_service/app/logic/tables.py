from typing import Any, Mapping, Sequence

import pandas as pd

TREND_COLUMNS = ['n', 'trials', 'errors', 'error_rate', 'stage_breakdown']
SWEEP_COLUMNS = ['param', 'feasible', 'min_margin', 'best_objective']
CSV_FLOAT_FORMAT = '%.6g'


def format_breakdown(breakdown: Mapping[str, int]) -> str:
    """Semicolon-joined label:count list, labels sorted."""
    return ';'.join(f"{label}:{breakdown[label]}" for label in sorted(breakdown))


def trend_table(rows: Sequence[Mapping[str, Any]]) -> pd.DataFrame:
    """Assembles simulation outcomes into one row per blocklength."""
    records = [{
        'n': int(r['n']),
        'trials': int(r['trials']),
        'errors': int(r['errors']),
        'error_rate': float(r['error_rate']),
        'stage_breakdown': format_breakdown(r.get('breakdown', {})),
    } for r in rows]
    return pd.DataFrame(records, columns=TREND_COLUMNS)


def sweep_table(rows: Sequence[Mapping[str, Any]]) -> pd.DataFrame:
    """One row per family parameter; min_margin and best_objective may be None."""
    return pd.DataFrame([{c: r.get(c) for c in SWEEP_COLUMNS} for r in rows], columns=SWEEP_COLUMNS)


def to_csv(table: pd.DataFrame) -> str:
    return table.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
