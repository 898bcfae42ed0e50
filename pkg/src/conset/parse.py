"""Polynomial expression parser and model file loader.

Expressions use `+ - * ^ ( )`, decimal numbers, and named variables, e.g.
``-p1*x1*(1 - x2) + p2*x2``.  ``^`` takes a nonnegative integer exponent.
There is no implicit multiplication and no ``**`` operator.
"""

from __future__ import annotations

import json
import re
from typing import Mapping, Optional, Sequence

from conset import model as mod
from conset.poly import Polynomial, VarSpace


class ParseError(ValueError):
    """Syntax error in a polynomial expression, with character offset."""

    def __init__(self, message: str, text: str, offset: int):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}: {text!r}")


_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)|([A-Za-z_][A-Za-z_0-9]*)"
                    r"|(\*\*)|([-+*^()]))")


def _tokenize(text: str):
    tokens = []  # (kind, value, offset)
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise ParseError("unexpected character",
                             text, len(text) - len(stripped))
        off = m.start(m.lastindex)
        if m.group(1) is not None:
            tokens.append(("num", float(m.group(1)), off))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2), off))
        elif m.group(3) is not None:
            raise ParseError("'**' is not supported, use '^'", text, off)
        else:
            tokens.append(("op", m.group(4), off))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive-descent parser producing a Polynomial."""

    def __init__(self, text: str, varspace: VarSpace,
                 names: Mapping[str, int]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.varspace = varspace
        self.names = names

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, off = self.next()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", self.text, off)

    def parse(self) -> Polynomial:
        p = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {val!r}", self.text, off)
        return p

    def expr(self) -> Polynomial:
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.next()
            p = self.term()
            if val == "-":
                p = -p
        else:
            p = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                q = self.term()
                p = p + q if val == "+" else p - q
            else:
                return p

    def term(self) -> Polynomial:
        p = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "*":
                self.next()
                p = p * self.factor()
            else:
                return p

    def factor(self) -> Polynomial:
        kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return -self.factor()
        p = self.base()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.next()
            kind, val, off = self.next()
            if kind != "num" or val != int(val):
                raise ParseError("exponent must be a nonnegative integer",
                                 self.text, off)
            p = p ** int(val)
        return p

    def base(self) -> Polynomial:
        kind, val, off = self.next()
        if kind == "num":
            return Polynomial.constant(self.varspace, val)
        if kind == "name":
            if val not in self.names:
                raise ParseError(f"unknown variable {val!r}", self.text, off)
            idx = self.names[val]
            if idx < 0:  # time variable
                return Polynomial.time(self.varspace)
            return Polynomial.state(self.varspace, idx)
        if kind == "op" and val == "(":
            p = self.expr()
            self.expect_op(")")
            return p
        raise ParseError(f"unexpected {val or 'end of input'!r}",
                         self.text, off)


def parse_polynomial(text: str, varspace: VarSpace,
                     names: Mapping[str, int]) -> Polynomial:
    """Parse ``text`` over the given variable space.

    ``names`` maps variable names to state indices; the value -1 denotes
    the time variable (only valid when the space carries one).
    """
    return _Parser(text, varspace, names).parse()


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def _interval(v, where: str):
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or not all(isinstance(x, (int, float)) for x in v)
            or not v[0] < v[1]):
        raise ValueError(f"{where}: expected [lo, hi] with lo < hi, got {v!r}")
    return float(v[0]), float(v[1])


def load_model(source) -> mod.EstimationModel:
    """Build a normalized EstimationModel from a model description.

    ``source`` is a dict, a JSON string, or a path to a JSON file with keys
    ``states`` (name + box each), optional ``parameters`` (name + box),
    ``dynamics`` (one expression per state), optional ``output``
    (expressions defining y1, y2, ...), ``terminal_time``, ``time_points``,
    and ``measurements`` (one entry per time point: state or output name ->
    interval, plus optional extra ``inequalities`` expressions >= 0).
    """
    if isinstance(source, dict):
        data = source
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        data = json.loads(source)
    else:
        with open(source) as fh:
            data = json.load(fh)

    states = data.get("states")
    if not states:
        raise ValueError("model file needs a nonempty 'states' list")
    params = data.get("parameters", [])
    box_form = data.get("box_form", "quadratic")
    state_names = [s["name"] for s in states]
    param_names = [p["name"] for p in params]
    all_names = state_names + param_names
    if len(set(all_names)) != len(all_names) or "t" in all_names:
        raise ValueError("variable names must be unique and distinct from 't'")

    n_s, n_p = len(states), len(params)
    n = n_s + n_p
    ds = VarSpace(n, has_time=True)
    ss = VarSpace(n, has_time=False)
    name_map = {"t": -1}
    name_map.update({nm: i for i, nm in enumerate(all_names)})

    dyn_exprs = data.get("dynamics")
    if not isinstance(dyn_exprs, list) or len(dyn_exprs) != n_s:
        raise ValueError("'dynamics' must list one expression per state")
    dynamics = tuple(parse_polynomial(e, ds, name_map) for e in dyn_exprs)
    dynamics += tuple(Polynomial.zero(ds) for _ in range(n_p))

    state_box = tuple(_interval(s["box"], f"state {s['name']}")
                      for s in states)
    param_box = tuple(_interval(p["box"], f"parameter {p['name']}")
                      for p in params)
    box = state_box + param_box
    global_set = mod.SemialgebraicSet(
        ss, tuple(mod.box_inequalities(ss, box, form=box_form)), box=box)

    output = None
    out_names = {}
    if data.get("output"):
        output = tuple(parse_polynomial(e, ds, name_map)
                       for e in data["output"])
        out_names = {f"y{j+1}": j for j in range(len(output))}

    t_end = float(data.get("terminal_time", data["time_points"][-1]))
    time_points = tuple(float(t) for t in data["time_points"])
    if time_points[-1] != t_end:
        raise ValueError("last time point must equal terminal_time")
    grid = mod.TimeGrid(time_points)

    measurements = data.get("measurements")
    if measurements is None:
        measurements = [{} for _ in time_points]
    if len(measurements) != len(time_points):
        raise ValueError("need one measurement entry per time point")

    meas_map = dict(name_map)
    meas_map.pop("t")
    own_lists = []
    for k, entry in enumerate(measurements):
        own = []
        for key, val in entry.items():
            if key == "inequalities":
                continue
            if key in out_names:
                lo, hi = _interval(val, f"measurement {key} at t_{k}")
                h = output[out_names[key]].at_time(time_points[k])
                own += [h - lo, hi - h]
            elif key in meas_map:
                lo, hi = _interval(val, f"measurement {key} at t_{k}")
                own += mod.interval_pair(ss, meas_map[key], lo, hi)
            else:
                raise ValueError(f"unknown measurement variable {key!r}")
        for expr in entry.get("inequalities", []):
            g_has_y = any(re.search(rf"\b{nm}\b", expr) for nm in out_names)
            if g_has_y:
                # expressions over outputs: compose through h at t_k
                g = parse_polynomial(
                    expr, VarSpace(len(output), has_time=False),
                    {nm: j for nm, j in out_names.items()})
                bind = {j: output[j].at_time(time_points[k])
                        for j in range(len(output))}
                own.append(g.substitute(bind))
            else:
                own.append(parse_polynomial(expr, ss, meas_map))
        own_lists.append(own)

    measurement_sets = mod.make_measurement_sets(global_set, own_lists)
    model = mod.EstimationModel(
        ds, dynamics, global_set, measurement_sets, grid,
        mod.ScalingRecord.identity(n), output, tuple(all_names), n_p)
    return mod.normalize(model)
