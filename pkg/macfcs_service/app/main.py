import logging

from fastapi import FastAPI, HTTPException

from .config import SolverConfig
from .logic.macfcs_model import (build_cf_joint, build_df_joint, load_cf_input, load_channel,
                                 load_df_input, load_source, source_stats)
from .logic.regions import (cf_constraints, cf_sum_rate_gap, df_constraints, slepian_wolf_region,
                            system_feasible, system_from_document, system_to_document)
from .models import (CheckRequest, FeasibilityReportResponse, SourceDocument, SourceStatsResponse,
                     SystemDocument, SystemVerdictResponse)

logger = logging.getLogger('MACFCS_Solver.api')

app = FastAPI(title="MACFCS Achievability Service")
config = SolverConfig.get_config()


@app.post("/stats", response_model=SourceStatsResponse)
def stats(source: SourceDocument):
    try:
        return source_stats(load_source(source.model_dump())).to_dict()
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))


@app.post("/sw-region", response_model=SystemDocument)
def sw_region(source: SourceDocument):
    try:
        return system_to_document(slepian_wolf_region(source_stats(load_source(source.model_dump()))))
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))


@app.post("/check", response_model=FeasibilityReportResponse)
def check(request: CheckRequest):
    """
    Evaluates one candidate against the decode-forward or compress-forward
    constraints, chosen by the candidate's strategy field.
    """
    tol_indep = request.tol_indep if request.tol_indep is not None else config['TOL_INDEP']
    try:
        ch = load_channel(request.channel.model_dump())
        st = source_stats(load_source(request.source.model_dump()))
        candidate = request.candidate.model_dump()
        if request.candidate.strategy == 'df':
            report = df_constraints(build_df_joint(ch, load_df_input(candidate, ch)), st,
                                    config['TOL_FEAS'], config['TOL_ZERO'])
        else:
            joint = build_cf_joint(ch, load_cf_input(candidate, ch))
            report = cf_constraints(joint, st, tol_indep, config['TOL_FEAS'], config['TOL_ZERO'])
            if report.feasible and cf_sum_rate_gap(joint, st) <= 0:
                logger.warning("check cf: stated conditions hold but the per-step system is empty")
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    logger.info(f"check {report.strategy}: feasible={report.feasible}")
    return report.to_document()


@app.post("/fm", response_model=SystemVerdictResponse)
def fm(system: SystemDocument):
    try:
        verdict = system_feasible(system_from_document(system.model_dump()), config['TOL_FEAS'])
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return verdict.to_document()
