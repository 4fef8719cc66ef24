"""
Plain-text LP dump for debugging; the grammar lives in docs/lp_format.md.
"""
import math

from app.solver.lp import EQ, GE, LE


def _number(value):
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return repr(float(value))


def _terms(coefficients, variables):
    parts = []
    for j in sorted(coefficients):
        coef = coefficients[j]
        sign = '-' if coef < 0 else '+'
        parts.append(f'{sign} {_number(abs(coef))} {variables[j].name}')
    text = ' '.join(parts) if parts else '+ 0.0'
    return text[2:] if text.startswith('+ ') else text


def dump_lp(inst):
    lines = ['minimize']
    objective = {j: c for j, c in enumerate(inst.objective) if c != 0}
    lines.append(f'  obj: {_terms(objective, inst.variables)}')
    lines.append('subject to')
    for k, row in enumerate(inst.constraints):
        name = row.name or f'c{k}'
        relation = {LE: '<=', GE: '>=', EQ: '='}[row.relation]
        lines.append(f'  {name}: {_terms(row.coefficients, inst.variables)} {relation} {_number(row.rhs)}')
    lines.append('bounds')
    for v in inst.variables:
        lines.append(f'  {_number(v.lower)} <= {v.name} <= {_number(v.upper)}')
    integers = [v.name for v in inst.variables if v.integer]
    if integers:
        lines.append('general')
        lines.append('  ' + ' '.join(integers))
    lines.append('end')
    return '\n'.join(lines) + '\n'


def write_lp(path, inst):
    with open(path, 'w') as fh:
        fh.write(dump_lp(inst))
