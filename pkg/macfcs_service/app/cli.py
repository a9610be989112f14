"""Batch front end for the MACFCS solver.

Exit codes: 0 success or feasible, 1 well-formed but infeasible (or no
candidate found), 2 usage or validation error.
"""
import argparse
import json
import logging
import math
import os
import sys
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from joblib import cpu_count

from .config import SolverConfig, search_config_from, sim_config_from
from .logic.macfcs_model import (build_cf_joint, build_df_joint, dsbs_source, load_cf_input,
                                 load_channel, load_df_input, load_source, make_common_part_source,
                                 read_document, source_stats, uniform_df_input)
from .logic.optimizer import default_cards, search_cf, search_df
from .logic.regions import (cf_constraints, cf_raw_system, cf_sum_rate_gap, df_constraints, df_raw_constraints,
                            mac_sum_capacity, slepian_wolf_region, system_feasible,
                            system_from_document, system_to_document)
from .logic.simulator import simulate_df, simulate_mac, simulate_sw, trend_report
from .logic.tables import sweep_table, to_csv

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2
ML_NOTICE = ("Decoders use exhaustive maximum-likelihood scoring in place of joint-typicality "
             "decoding; ties count as errors.")


def setup_logging(log_dir: Optional[str] = None, level: str = 'INFO') -> logging.Logger:
    logger = logging.getLogger('MACFCS_Solver')
    logger.setLevel(level)
    logger.handlers.clear()
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    ch = logging.StreamHandler(sys.stderr)
    ch.setFormatter(formatter)
    logger.addHandler(ch)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        fh = logging.FileHandler(os.path.join(log_dir, f'macfcs_{timestamp}.log'), encoding='utf-8')
        fh.setFormatter(formatter)
        logger.addHandler(fh)
    return logger


# --- Formatting ---

def _round_floats(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return float(f"{float(value):.10g}") if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {k: _round_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_floats(v) for v in value]
    return value


def to_json(document: Any) -> str:
    return json.dumps(_round_floats(document), indent=2) + '\n'


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, 'w', encoding='utf-8') as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _parse_assignments(text: Optional[str], cast: Callable[[str], Any], what: str) -> Dict[str, Any]:
    """'A=1,B=2' -> {'A': 1, 'B': 2}."""
    if not text:
        return {}
    result = {}
    for item in text.split(','):
        name, sep, value = item.partition('=')
        if not sep or not name.strip():
            raise ValueError(f"--{what}: expected NAME=VALUE, got {item!r}")
        try:
            result[name.strip()] = cast(value.strip())
        except ValueError as e:
            raise ValueError(f"--{what}: bad value for {name.strip()}: {value!r}") from e
    return result


def _parse_ns(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise ValueError(f"--n: expected comma-separated integers, got {text!r}") from e
    if not values:
        raise ValueError("--n: at least one blocklength is required")
    return values


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise ValueError(f"{args.command} needs {', '.join(missing)}")


def _config(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = SolverConfig.load_overrides(args.config) if args.config else {}
    for flag, key in (('seed', 'SEED'), ('restarts', 'RESTARTS'), ('refine_iters', 'REFINE_ITERS'),
                      ('trials', 'TRIALS'), ('blocks', 'BLOCKS'), ('epsilon', 'EPSILON'),
                      ('tol_indep', 'TOL_INDEP'), ('indep_penalty', 'INDEP_PENALTY')):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, 'distinct_codewords', False):
        overrides['DISTINCT_CODEWORDS'] = True
    config = SolverConfig.get_config(args.preset, overrides)
    logging.getLogger('MACFCS_Solver').setLevel(str(config['LOG_LEVEL']).upper())
    return config


def _workers(args: argparse.Namespace) -> int:
    return args.workers if args.workers else cpu_count()


def _no_candidate(cards: Dict[str, int]) -> str:
    listed = ', '.join(f"{k}={v}" for k, v in cards.items())
    return f"no candidate found at cardinalities {{{listed}}}"


# --- Commands ---

def cmd_stats(args: argparse.Namespace) -> int:
    _require(args, 'source')
    _config(args)
    st = source_stats(load_source(read_document(args.source)))
    logging.getLogger('MACFCS_Solver').debug(f"H(S1,S2) = {st.h_joint:.6f} bits")
    _emit(to_json(st.to_dict()), args.out)
    return EXIT_OK


def cmd_sw_region(args: argparse.Namespace) -> int:
    _require(args, 'source')
    _config(args)
    st = source_stats(load_source(read_document(args.source)))
    _emit(to_json(system_to_document(slepian_wolf_region(st))), args.out)
    return EXIT_OK



def cmd_capacity(args: argparse.Namespace) -> int:
    _require(args, 'channel')
    config = _config(args)
    ch = load_channel(read_document(args.channel))
    value = mac_sum_capacity(ch, tol=float(config['CAPACITY_TOL']),
                             restarts=int(config['CAPACITY_RESTARTS']), seed=int(config['SEED']))
    _emit(to_json({'sum_capacity': value}), args.out)
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    _require(args, 'channel', 'source', 'candidate')
    config = _config(args)
    strategy = args.strategy
    ch = load_channel(read_document(args.channel))
    st = source_stats(load_source(read_document(args.source)))
    candidate = read_document(args.candidate)
    tol_feas, tol_zero = float(config['TOL_FEAS']), float(config['TOL_ZERO'])

    if strategy == 'df':
        joint = build_df_joint(ch, load_df_input(candidate, ch))
        evaluate = df_raw_constraints if getattr(args, 'raw', False) else df_constraints
        report = evaluate(joint, st, tol_feas, tol_zero)
    else:
        joint = build_cf_joint(ch, load_cf_input(candidate, ch))
        report = cf_constraints(joint, st, float(config['TOL_INDEP']), tol_feas, tol_zero)
        gap = cf_sum_rate_gap(joint, st)
        if report.feasible and gap <= 0:
            logging.getLogger('MACFCS_Solver').warning(
                f"stated conditions hold but H(S1,S2) exceeds d1 + d2 by {-gap:.6g} bits; "
                f"the per-step system is empty")
        if getattr(args, 'export_system', None):
            with open(args.export_system, 'w', encoding='utf-8') as f:
                f.write(to_json(system_to_document(cf_raw_system(joint, st))))
    _emit(to_json(report.to_document()), args.out)
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def _run_search(ch, st, strategy: str, cards: Dict[str, int], config: Dict[str, Any], workers: int):
    cfg = search_config_from(config, cards, workers)
    return search_df(ch, st, cfg) if strategy == 'df' else search_cf(ch, st, cfg)


def cmd_optimize(args: argparse.Namespace) -> int:
    _require(args, 'channel', 'source')
    logger = logging.getLogger('MACFCS_Solver')
    config = _config(args)
    ch = load_channel(read_document(args.channel))
    st = source_stats(load_source(read_document(args.source)))
    cards = _parse_assignments(args.cards, int, 'cards') or default_cards(ch, args.strategy)
    result = _run_search(ch, st, args.strategy, cards, config, _workers(args))
    _emit(to_json(result.to_document()), args.out)
    if not result.feasible:
        logger.info(_no_candidate(result.cards))
        print(_no_candidate(result.cards), file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _family_values(start: float, stop: float, step: float) -> List[float]:
    if step <= 0:
        raise ValueError(f"--step must be positive, got {step}")
    if stop < start:
        raise ValueError(f"Empty range: stop {stop} < start {start}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(count)]


def _family_source(family: str, value: float, sizes: List[int]):
    if family == 'dsbs':
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"DSBS crossover must lie in [0, 1], got {value}")
        return dsbs_source(value)
    if abs(value - round(value)) > 1e-9 or value < 1:
        raise ValueError(f"Common-part sizes must be positive integers, got {value}")
    d, e, f = sizes
    slot = {'common-d': 0, 'common-e': 1, 'common-f': 2}[family]
    parts = [d, e, f]
    parts[slot] = int(round(value))
    return make_common_part_source(*parts)


def cmd_sweep(args: argparse.Namespace) -> int:
    _require(args, 'channel')
    config = _config(args)
    ch = load_channel(read_document(args.channel))
    cards = _parse_assignments(args.cards, int, 'cards') or default_cards(ch, args.strategy)
    sizes = [int(v) for v in args.sizes.split(',')]
    if len(sizes) != 3:
        raise ValueError(f"--sizes needs d,e,f, got {args.sizes!r}")
    workers = _workers(args)

    rows = []
    for value in _family_values(args.start, args.stop, args.step):
        st = source_stats(_family_source(args.family, value, sizes))
        result = _run_search(ch, st, args.strategy, cards, config, workers)
        margin = result.report.min_margin
        rows.append({'param': value, 'feasible': result.feasible,
                     'min_margin': margin if math.isfinite(margin) else None,
                     'best_objective': result.objective if math.isfinite(result.objective) else None})
    _emit(to_csv(sweep_table(rows)), args.out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    logger = logging.getLogger('MACFCS_Solver')
    config = _config(args)
    rates = _parse_assignments(args.rates, float, 'rates')
    ns = _parse_ns(args.n) if args.n else [int(config['N'])]
    workers = _workers(args)
    logger.info(ML_NOTICE)

    if args.scheme == 'sw':
        _require(args, 'source')
        src = load_source(read_document(args.source))
        op = lambda cfg: simulate_sw(src, cfg)
    elif args.scheme == 'mac':
        _require(args, 'channel')
        ch = load_channel(read_document(args.channel))
        op = lambda cfg: simulate_mac(ch, cfg)
    else:
        _require(args, 'channel', 'source')
        ch = load_channel(read_document(args.channel))
        src = load_source(read_document(args.source))
        inp = load_df_input(read_document(args.candidate), ch) if args.candidate else uniform_df_input(ch)
        op = lambda cfg: simulate_df(ch, src, inp, cfg)

    cfgs = [sim_config_from(config, n, rates, workers, progress=args.progress) for n in ns]
    _emit(to_csv(trend_report(op, cfgs)), args.out)
    return EXIT_OK


def cmd_fm(args: argparse.Namespace) -> int:
    _require(args, 'system')
    config = _config(args)
    verdict = system_feasible(system_from_document(read_document(args.system)), float(config['TOL_FEAS']))
    _emit(to_json(verdict.to_document()), args.out)
    return EXIT_OK if verdict.feasible else EXIT_INFEASIBLE


# --- Parser ---

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out', help="write the result here instead of standard output")
    common.add_argument('--log-dir', help="also write a timestamped log file into this directory")
    common.add_argument('--config', help="JSON object of configuration overrides")
    common.add_argument('--preset', choices=sorted(SolverConfig.PRESETS))
    common.add_argument('--workers', type=int, help="parallel workers (default: available processors)")
    common.add_argument('--seed', type=int)

    instance = argparse.ArgumentParser(add_help=False)
    instance.add_argument('--channel', help="channel document (JSON)")
    instance.add_argument('--source', help="source document (JSON)")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument('--strategy', choices=['df', 'cf'], default='df')
    search.add_argument('--cards', help="auxiliary cardinalities, e.g. W0=2,W1=2,W2=2")
    search.add_argument('--restarts', type=int)
    search.add_argument('--refine-iters', type=int)
    search.add_argument('--tol-indep', type=float)
    search.add_argument('--indep-penalty', type=float)

    parser = argparse.ArgumentParser(prog='macfcs', description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('stats', parents=[common, instance], help="source entropy statistics")
    p.set_defaults(func=cmd_stats)
    p = sub.add_parser('sw-region', parents=[common, instance], help="Slepian-Wolf rate system")
    p.set_defaults(func=cmd_sw_region)
    p = sub.add_parser('capacity', parents=[common, instance], help="sum capacity of the destination link")
    p.set_defaults(func=cmd_capacity)

    for name, strategy in (('check', None), ('check-df', 'df'), ('check-cf', 'cf')):
        p = sub.add_parser(name, parents=[common, instance], help="evaluate a candidate")
        p.add_argument('--candidate', help="candidate document (JSON)")
        p.add_argument('--tol-indep', type=float)
        if strategy is None:
            p.add_argument('--strategy', choices=['df', 'cf'], required=True)
        else:
            p.set_defaults(strategy=strategy)
        if strategy != 'cf':
            p.add_argument('--raw', action='store_true', help="df: report the per-error-event constraints")
        if strategy != 'df':
            p.add_argument('--export-system', help="cf: write the raw coding system document here")
        p.set_defaults(func=cmd_check)

    p = sub.add_parser('optimize', parents=[common, instance, search], help="search for a certificate")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser('sweep', parents=[common, instance, search], help="optimize over a source family")
    p.add_argument('--family', choices=['dsbs', 'common-d', 'common-e', 'common-f'], required=True)
    p.add_argument('--start', type=float, required=True)
    p.add_argument('--stop', type=float, required=True)
    p.add_argument('--step', type=float, required=True)
    p.add_argument('--sizes', default='1,1,1', help="common-part sizes d,e,f; the swept one is replaced")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('simulate', parents=[common, instance], help="Monte-Carlo error trend (CSV)")
    p.add_argument('--scheme', choices=['sw', 'mac', 'df'], required=True)
    p.add_argument('--candidate', help="df: candidate document (default: constant auxiliaries)")
    p.add_argument('--n', help="blocklength(s), comma-separated")
    p.add_argument('--blocks', type=int)
    p.add_argument('--trials', type=int)
    p.add_argument('--rates', help="rates in bits/symbol, e.g. R1=0.5,R2=0.5")
    p.add_argument('--epsilon', type=float)
    p.add_argument('--distinct-codewords', action='store_true')
    p.add_argument('--progress', action='store_true', help="show a progress bar (single worker)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('fm', parents=[common], help="Fourier-Motzkin feasibility of a system")
    p.add_argument('--system', help="system document (JSON)")
    p.set_defaults(func=cmd_fm)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    logger = setup_logging(args.log_dir)
    logger.info(f"Starting MACFCS {args.command}")
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
