from app.solver.bnb import solve_ip
from app.solver.lp import EQ, GE, LE, IPInstance, SolveResult, Status, solve_lp
from app.solver.lp_format import dump_lp, write_lp
from app.solver.matching import MatchingInstance, matching_as_lp, min_cost_matching

__all__ = [
    'EQ', 'GE', 'LE', 'IPInstance', 'SolveResult', 'Status', 'solve_lp', 'solve_ip',
    'MatchingInstance', 'min_cost_matching', 'matching_as_lp', 'dump_lp', 'write_lp',
]
