"""Restricted parser and budgeted tree-walking evaluator for generated
statistics programs.

Model-emitted code is accepted only when it is a single
``get_summary_statistics`` function built from a fixed statement/expression
subset, calls nothing outside a builtin whitelist, and runs under step, depth,
node and wall-clock budgets.  There is no filesystem, network, clock or
randomness access inside the evaluation environment.
"""

from __future__ import annotations

import ast
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import (
    FailureCategory,
    FailureClass,
    Stage,
    StatsMap,
    ValueTree,
    is_scalar,
    tree_depth,
)

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

BUILTIN_WHITELIST = frozenset(
    {
        "len", "sum", "min", "max", "abs", "round", "sorted", "range",
        "enumerate", "zip", "list", "dict", "tuple", "str", "int", "float",
        "bool", "any", "all", "map", "filter", "reversed", "isinstance",
        "print",
    }
)

STATISTICS_WHITELIST = frozenset({"mean", "median", "stdev", "variance", "pstdev"})
MATH_WHITELIST = frozenset({"sqrt", "floor", "ceil", "fsum"})

METHOD_WHITELIST = frozenset(
    {
        "keys", "values", "items", "get", "append", "extend", "update",
        "pop", "join", "split", "strip", "lower", "upper", "replace",
        "startswith", "endswith", "count", "index", "format",
    }
)

_ALLOWED_BINOPS = {
    ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/",
    ast.FloorDiv: "//", ast.Mod: "%", ast.Pow: "**",
}


@dataclass(frozen=True)
class SandboxLimits:
    max_steps: int = 1_000_000
    max_depth: int = 64
    max_nodes: int = 200_000
    wall_timeout_ms: float = 2_000.0

    def __post_init__(self):
        for name in ("max_steps", "max_depth", "max_nodes", "wall_timeout_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


DEFAULT_LIMITS = SandboxLimits()

FUNCTION_NAME = "get_summary_statistics"


@dataclass
class ProgramAst:
    func: ast.FunctionDef
    param: str
    source: str
    module_aliases: dict = field(default_factory=dict)  # local name -> ("statistics"|"math", attr|None)


@dataclass
class ExecOutcome:
    stats: Optional[StatsMap]
    failure: Optional[FailureClass]
    steps_used: int
    captured_output: str = ""


# ---------------------------------------------------------------------------
# Source scanning: fence stripping and truncation/string diagnostics
# ---------------------------------------------------------------------------

_DELIM_MATCH = {"(": ")", "[": "]", "{": "}"}


def strip_code_fence(text: str) -> str:
    """Return the body of the first markdown code fence, or the text itself."""
    lines = text.splitlines()
    start = None
    for idx, line in enumerate(lines):
        if line.lstrip().startswith("```"):
            start = idx
            break
    if start is None:
        return text
    body = []
    for line in lines[start + 1 :]:
        if line.lstrip().startswith("```"):
            break
        body.append(line)
    return "\n".join(body)


def scan_delimiters(src: str):
    """Pre-scan for unclosed delimiters and unterminated string literals.

    Returns None when balanced, else (category, message) with the message
    formats CPython emits for the same defects.
    """
    stack = []
    line = 1
    i = 0
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            line += 1
            i += 1
        elif c == "#":
            while i < n and src[i] != "\n":
                i += 1
        elif c in "([{":
            stack.append((c, line))
            i += 1
        elif c in ")]}":
            if stack and _DELIM_MATCH[stack[-1][0]] == c:
                stack.pop()
            i += 1
        elif c in "\"'":
            j = i - 1
            prefix = ""
            while j >= 0 and src[j] in "fFrRbBuU":
                prefix = src[j] + prefix
                j -= 1
            if j >= 0 and (src[j].isalnum() or src[j] == "_"):
                prefix = ""
            is_f = "f" in prefix.lower()
            is_raw = "r" in prefix.lower()
            triple = src[i : i + 3] in ('"""', "'''")
            quote = src[i : i + 3] if triple else c
            start_line = line
            i += len(quote)
            closed = False
            while i < n:
                if src[i] == "\\" and not is_raw:
                    if i + 1 < n and src[i + 1] == "\n":
                        line += 1
                    i += 2
                    continue
                if src[i] == "\n":
                    if not triple:
                        break
                    line += 1
                    i += 1
                    continue
                if src.startswith(quote, i):
                    i += len(quote)
                    closed = True
                    break
                i += 1
            if not closed:
                if triple:
                    kind = "unterminated triple-quoted string literal"
                elif is_f:
                    kind = "unterminated f-string literal"
                else:
                    kind = "unterminated string literal"
                msg = f"{kind} (detected at line {start_line}) (<string>, line {start_line})"
                return FailureCategory.SYNTAX_ERROR, msg
        else:
            i += 1
    if stack:
        opener, oline = stack[-1]
        return (
            FailureCategory.TRUNCATED,
            f"'{opener}' was never closed (<string>, line {oline})",
        )
    return None


# ---------------------------------------------------------------------------
# Parsing and static policy checks
# ---------------------------------------------------------------------------

_ALLOWED_STMT = (
    ast.Assign, ast.AugAssign, ast.For, ast.While, ast.If, ast.Return,
    ast.Pass, ast.Expr,
)

# Generator expressions are admitted alongside list/dict comprehensions: the
# canonical statistics exemplar guards numeric sequences with
# all(isinstance(x, (int, float)) for x in values).
_ALLOWED_EXPR = (
    ast.Constant, ast.JoinedStr, ast.FormattedValue, ast.Dict, ast.List,
    ast.Tuple, ast.ListComp, ast.DictComp, ast.GeneratorExp, ast.BinOp,
    ast.Compare, ast.BoolOp, ast.UnaryOp, ast.Subscript, ast.Slice,
    ast.Name, ast.Lambda, ast.Call, ast.Attribute,
)


def _code_failure(category: FailureCategory, message: str) -> FailureClass:
    return FailureClass(Stage.CODE_PARSE, category, message)


def _check_subset(node: ast.AST):
    """Reject any AST node outside the supported subset; returns a failure or None."""
    for child in ast.walk(node):
        if isinstance(child, ast.stmt) and not isinstance(child, _ALLOWED_STMT):
            return _code_failure(
                FailureCategory.OTHER,
                f"unsupported construct: {type(child).__name__}",
            )
        if isinstance(child, ast.expr) and not isinstance(child, _ALLOWED_EXPR):
            return _code_failure(
                FailureCategory.OTHER,
                f"unsupported construct: {type(child).__name__}",
            )
        if isinstance(child, ast.BinOp) and type(child.op) not in _ALLOWED_BINOPS:
            return _code_failure(
                FailureCategory.OTHER,
                f"unsupported construct: {type(child.op).__name__}",
            )
    return None


def parse_program(source: str):
    """Parse model code into a ProgramAst, or classify why it cannot run.

    Returns ProgramAst on success, FailureClass otherwise.
    """
    body_src = strip_code_fence(source)
    scan = scan_delimiters(body_src)
    if scan is not None:
        category, message = scan
        return _code_failure(category, message)
    try:
        module = ast.parse(body_src)
    except SyntaxError as exc:
        return _code_failure(
            FailureCategory.SYNTAX_ERROR,
            f"{exc.msg} (<string>, line {exc.lineno})",
        )

    aliases: dict = {}
    func: Optional[ast.FunctionDef] = None
    for stmt in module.body:
        if isinstance(stmt, ast.Import):
            for name in stmt.names:
                if name.name not in ("statistics", "math"):
                    return _code_failure(
                        FailureCategory.SYNTAX_ERROR,
                        f"forbidden import: {name.name}",
                    )
                aliases[name.asname or name.name] = (name.name, None)
        elif isinstance(stmt, ast.ImportFrom):
            if stmt.module not in ("statistics", "math"):
                return _code_failure(
                    FailureCategory.SYNTAX_ERROR,
                    f"forbidden import: {stmt.module}",
                )
            allowed = STATISTICS_WHITELIST if stmt.module == "statistics" else MATH_WHITELIST
            for name in stmt.names:
                if name.name not in allowed:
                    return _code_failure(
                        FailureCategory.SYNTAX_ERROR,
                        f"forbidden import: {stmt.module}.{name.name}",
                    )
                aliases[name.asname or name.name] = (stmt.module, name.name)
        elif isinstance(stmt, ast.FunctionDef):
            if func is not None:
                return _code_failure(
                    FailureCategory.OTHER, "more than one top-level function"
                )
            func = stmt
        else:
            return _code_failure(
                FailureCategory.OTHER,
                f"unsupported top-level statement: {type(stmt).__name__}",
            )

    if func is None:
        return _code_failure(
            FailureCategory.EMPTY_OUTPUT, f"no {FUNCTION_NAME} function found"
        )
    if func.name != FUNCTION_NAME:
        return _code_failure(
            FailureCategory.OTHER,
            f"function must be named {FUNCTION_NAME}, got {func.name!r}",
        )
    args = func.args
    if (
        len(args.args) != 1
        or args.vararg or args.kwarg or args.kwonlyargs or args.posonlyargs
        or args.defaults or args.kw_defaults
    ):
        return _code_failure(
            FailureCategory.OTHER, f"{FUNCTION_NAME} must take exactly one parameter"
        )
    if func.decorator_list:
        return _code_failure(FailureCategory.OTHER, "unsupported construct: decorator")

    for stmt in func.body:
        bad = _check_subset(stmt)
        if bad is not None:
            return bad

    return ProgramAst(
        func=func, param=args.args[0].arg, source=body_src, module_aliases=aliases
    )


def _collect_bound_names(func: ast.FunctionDef) -> set:
    bound = {func.args.args[0].arg}
    for node in ast.walk(func):
        if isinstance(node, ast.Name) and isinstance(node.ctx, ast.Store):
            bound.add(node.id)
        elif isinstance(node, ast.Lambda):
            for arg in node.args.args:
                bound.add(arg.arg)
        elif isinstance(node, ast.comprehension):
            for sub in ast.walk(node.target):
                if isinstance(sub, ast.Name):
                    bound.add(sub.id)
        elif isinstance(node, ast.For):
            for sub in ast.walk(node.target):
                if isinstance(sub, ast.Name):
                    bound.add(sub.id)
    return bound


def check_builtin_policy(program: ProgramAst):
    """Statically verify every referenced name is whitelisted or locally bound.

    Returns None on success, FailureClass otherwise.
    """
    bound = _collect_bound_names(program.func)
    aliases = program.module_aliases
    for node in ast.walk(program.func):
        if isinstance(node, ast.Attribute):
            if node.attr.startswith("_"):
                return _code_failure(
                    FailureCategory.OTHER, f"forbidden name: {node.attr}"
                )
            if isinstance(node.value, ast.Name) and node.value.id in aliases:
                module, _ = aliases[node.value.id]
                allowed = STATISTICS_WHITELIST if module == "statistics" else MATH_WHITELIST
                if node.attr not in allowed:
                    return _code_failure(
                        FailureCategory.OTHER,
                        f"forbidden name: {module}.{node.attr}",
                    )
            elif node.attr not in METHOD_WHITELIST:
                return _code_failure(
                    FailureCategory.OTHER, f"forbidden name: {node.attr}"
                )
        elif isinstance(node, ast.Name) and isinstance(node.ctx, ast.Load):
            name = node.id
            if name in bound or name in aliases or name in BUILTIN_WHITELIST:
                continue
            return _code_failure(FailureCategory.OTHER, f"forbidden name: {name}")
    return None


def check_comment_policy(source: str, max_comment_fraction: float = 0.5):
    """Reject comment-only or comment-dominated generations.

    Returns None on success, FailureClass otherwise.
    """
    body = strip_code_fence(source)
    comment_chars = 0
    code_lines = 0
    for line in body.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        hash_pos = _comment_start(line)
        if hash_pos is None:
            code_lines += 1
        else:
            if line[:hash_pos].strip():
                code_lines += 1
            comment_chars += len(line) - hash_pos
    if code_lines == 0:
        return _code_failure(FailureCategory.EMPTY_OUTPUT, "comment-only generation")
    total = len(body)
    if total and comment_chars / total > max_comment_fraction:
        return _code_failure(FailureCategory.EMPTY_OUTPUT, "comment-only generation")
    return None


def _comment_start(line: str):
    """Index of the first '#' outside a string literal, or None."""
    quote = None
    i = 0
    while i < len(line):
        c = line[i]
        if quote:
            if c == "\\":
                i += 2
                continue
            if c == quote:
                quote = None
        elif c in "\"'":
            quote = c
        elif c == "#":
            return i
        i += 1
    return None


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


class _BudgetExhausted(Exception):
    def __init__(self, what: str):
        super().__init__(what)
        self.what = what


class _PolicyViolation(Exception):
    pass


class _ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


class _ModuleShim:
    def __init__(self, name: str, table: dict):
        self.name = name
        self.table = table

    def get(self, attr: str):
        try:
            return self.table[attr]
        except KeyError:
            raise _PolicyViolation(f"forbidden name: {self.name}.{attr}") from None


def _fmean(xs):
    return float(statistics.mean(xs))


def _fstdev(xs):
    return float(statistics.stdev(xs))


def _fvariance(xs):
    return float(statistics.variance(xs))


def _fpstdev(xs):
    return float(statistics.pstdev(xs))


_STATISTICS_TABLE = {
    "mean": _fmean,
    "median": statistics.median,
    "stdev": _fstdev,
    "variance": _fvariance,
    "pstdev": _fpstdev,
}

_MATH_TABLE = {
    "sqrt": math.sqrt,
    "floor": math.floor,
    "ceil": math.ceil,
    "fsum": math.fsum,
}


def copy_tree(tree: ValueTree) -> ValueTree:
    """Deep copy so sandboxed code cannot mutate the caller's tree."""
    if isinstance(tree, dict):
        return {k: copy_tree(v) for k, v in tree.items()}
    if isinstance(tree, list):
        return [copy_tree(v) for v in tree]
    if isinstance(tree, tuple):
        return tuple(copy_tree(v) for v in tree)
    return tree


def _join_path(path: list) -> str:
    return ".".join(seg if seg else "_" for seg in path)


def flatten_stats(value) -> StatsMap:
    """Coerce an arbitrary returned value into a flat StatsMap.

    Mappings nested beyond two levels flatten with '.'-joined keys; sequences
    of mappings become one mapping per record keyed by the record's
    "Category" value (or its index).
    """
    out: StatsMap = {}
    _flatten_into(out, [], value)
    return out


def _flatten_into(out: StatsMap, path: list, value) -> None:
    if is_scalar(value):
        out[_join_path(path) if path else "result"] = value
        return
    if isinstance(value, dict):
        if not value:
            if path:
                out[_join_path(path)] = {}
            return
        if path and all(is_scalar(v) for v in value.values()):
            out[_join_path(path)] = {str(k): v for k, v in value.items()}
            return
        for k, v in value.items():
            _flatten_into(out, path + [str(k)], v)
        return
    if isinstance(value, (list, tuple)):
        items = list(value)
        if not items:
            if path:
                out[_join_path(path)] = []
            return
        if all(is_scalar(v) for v in items):
            out[_join_path(path) if path else "result"] = items
            return
        for idx, element in enumerate(items):
            if isinstance(element, dict) and "Category" in element:
                prefix = str(element["Category"])
                rest = {k: v for k, v in element.items() if k != "Category"}
                _flatten_into(out, path + [prefix], rest)
            else:
                _flatten_into(out, path + [str(idx)], element)
        return
    out[_join_path(path) if path else "result"] = str(value)


class _SandboxFunction:
    """A lambda closed over its defining environment."""

    __slots__ = ("node", "env", "evaluator")

    def __init__(self, node: ast.Lambda, env: dict, evaluator: "_Evaluator"):
        self.node = node
        self.env = env
        self.evaluator = evaluator

    def __call__(self, *args):
        return self.evaluator.call_lambda(self, args)


_WALL_CHECK_EVERY = 256


class _Evaluator:
    def __init__(self, limits: SandboxLimits, clock: Callable[[], float]):
        self.limits = limits
        self.clock = clock
        self.steps = 0
        self.nodes = 0
        self.call_depth = 0
        self.deadline = clock() + limits.wall_timeout_ms / 1000.0
        self.printed: list = []

    # -- budgets ---------------------------------------------------------

    def tick(self):
        if self.steps >= self.limits.max_steps:
            raise _BudgetExhausted("step budget exhausted")
        self.steps += 1
        if self.steps % _WALL_CHECK_EVERY == 0 and self.clock() > self.deadline:
            raise _BudgetExhausted("wall timeout exceeded")

    def alloc(self, count: int = 1):
        self.nodes += count
        if self.nodes > self.limits.max_nodes:
            raise _BudgetExhausted("node budget exhausted")

    def _guard_len(self, estimated: int):
        if estimated > self.limits.max_nodes:
            raise _BudgetExhausted("node budget exhausted")

    # -- builtin environment ---------------------------------------------

    def builtins_table(self) -> dict:
        ev = self

        def _print(*args, **kwargs):
            sep = kwargs.pop("sep", " ")
            end = kwargs.pop("end", "\n")
            if kwargs:
                raise TypeError("unexpected keyword arguments to print()")
            ev.printed.append(sep.join(str(a) for a in args) + end)

        def _materialize(iterable):
            result = []
            for item in iterable:
                ev.tick()
                ev.alloc()
                result.append(item)
            return result

        def _list(iterable=()):
            return _materialize(iterable)

        def _tuple(iterable=()):
            return tuple(_materialize(iterable))

        def _dict(*args, **kwargs):
            out = dict(*args, **kwargs)
            ev.alloc(len(out) + 1)
            return out

        def _sorted(iterable, key=None, reverse=False):
            return sorted(_materialize(iterable), key=key, reverse=reverse)

        def _map(fn, *iterables):
            return _materialize(map(fn, *iterables))

        def _filter(fn, iterable):
            return _materialize(filter(fn, iterable))

        def _zip(*iterables):
            return _materialize(zip(*iterables))

        def _enumerate(iterable, start=0):
            return _materialize(enumerate(iterable, start))

        def _reversed(seq):
            return _materialize(reversed(seq))

        def _range(*args):
            r = range(*args)
            return r

        def _sum(iterable, start=0):
            total = start
            for item in iterable:
                ev.tick()
                total = _normalize_int(total + item)
            return total

        def _resolve_type(t):
            # the container builtins are guard functions; isinstance needs types
            if t is _list:
                return list
            if t is _dict:
                return dict
            if t is _tuple:
                return tuple
            return t

        def _isinstance(obj, classinfo):
            if isinstance(classinfo, tuple):
                classinfo = tuple(_resolve_type(t) for t in classinfo)
            else:
                classinfo = _resolve_type(classinfo)
            return isinstance(obj, classinfo)

        return {
            "len": len, "sum": _sum, "min": min, "max": max, "abs": abs,
            "round": round, "sorted": _sorted, "range": _range,
            "enumerate": _enumerate, "zip": _zip, "list": _list,
            "dict": _dict, "tuple": _tuple, "str": str, "int": int,
            "float": float, "bool": bool, "any": any, "all": all,
            "map": _map, "filter": _filter, "reversed": _reversed,
            "isinstance": _isinstance, "print": _print,
        }

    # -- statement execution ----------------------------------------------

    def exec_body(self, body, env: dict):
        for stmt in body:
            self.exec_stmt(stmt, env)

    def exec_stmt(self, node: ast.stmt, env: dict):
        self.tick()
        if isinstance(node, ast.Assign):
            value = self.eval_expr(node.value, env)
            for target in node.targets:
                self.assign(target, value, env)
        elif isinstance(node, ast.AugAssign):
            if not isinstance(node.target, (ast.Name, ast.Subscript)):
                raise _PolicyViolation(
                    f"unsupported construct: augmented assignment to {type(node.target).__name__}"
                )
            current = self.eval_expr(_load_of(node.target), env)
            value = self.eval_expr(node.value, env)
            result = self.binop(type(node.op), current, value)
            self.assign(node.target, result, env)
        elif isinstance(node, ast.For):
            iterable = self.eval_expr(node.iter, env)
            for item in iterable:
                self.tick()
                self.assign(node.target, item, env)
                self.exec_body(node.body, env)
            if node.orelse:
                self.exec_body(node.orelse, env)
        elif isinstance(node, ast.While):
            while True:
                self.tick()
                if not self.eval_expr(node.test, env):
                    break
                self.exec_body(node.body, env)
            if node.orelse:
                self.exec_body(node.orelse, env)
        elif isinstance(node, ast.If):
            if self.eval_expr(node.test, env):
                self.exec_body(node.body, env)
            else:
                self.exec_body(node.orelse, env)
        elif isinstance(node, ast.Return):
            value = self.eval_expr(node.value, env) if node.value else None
            raise _ReturnSignal(value)
        elif isinstance(node, ast.Pass):
            pass
        elif isinstance(node, ast.Expr):
            self.eval_expr(node.value, env)
        else:
            raise _PolicyViolation(f"unsupported construct: {type(node).__name__}")

    def assign(self, target: ast.expr, value, env: dict):
        if isinstance(target, ast.Name):
            env[target.id] = value
        elif isinstance(target, ast.Subscript):
            container = self.eval_expr(target.value, env)
            key = self.eval_expr(target.slice, env)
            container[key] = value
            self.alloc()
        elif isinstance(target, (ast.Tuple, ast.List)):
            items = list(value)
            if len(items) != len(target.elts):
                raise ValueError(
                    f"not enough values to unpack (expected {len(target.elts)}, got {len(items)})"
                )
            for sub, item in zip(target.elts, items):
                self.assign(sub, item, env)
        else:
            raise _PolicyViolation(
                f"unsupported construct: assignment to {type(target).__name__}"
            )

    # -- expression evaluation --------------------------------------------

    def eval_expr(self, node: ast.expr, env: dict):
        self.tick()
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            try:
                return env[node.id]
            except KeyError:
                raise NameError(f"name '{node.id}' is not defined") from None
        if isinstance(node, ast.Dict):
            out = {}
            for k_node, v_node in zip(node.keys, node.values):
                if k_node is None:
                    raise _PolicyViolation("unsupported construct: dict unpacking")
                key = self.eval_expr(k_node, env)
                out[key] = self.eval_expr(v_node, env)
                self.alloc()
            return out
        if isinstance(node, (ast.List, ast.Tuple)):
            items = [self.eval_expr(el, env) for el in node.elts]
            self.alloc(len(items))
            return items if isinstance(node, ast.List) else tuple(items)
        if isinstance(node, ast.BinOp):
            left = self.eval_expr(node.left, env)
            right = self.eval_expr(node.right, env)
            return self.binop(type(node.op), left, right)
        if isinstance(node, ast.UnaryOp):
            operand = self.eval_expr(node.operand, env)
            if isinstance(node.op, ast.Not):
                return not operand
            if isinstance(node.op, ast.USub):
                return _normalize_int(-operand)
            if isinstance(node.op, ast.UAdd):
                return +operand
            return _normalize_int(~operand)
        if isinstance(node, ast.BoolOp):
            if isinstance(node.op, ast.And):
                result = True
                for sub in node.values:
                    result = self.eval_expr(sub, env)
                    if not result:
                        return result
                return result
            result = False
            for sub in node.values:
                result = self.eval_expr(sub, env)
                if result:
                    return result
            return result
        if isinstance(node, ast.Compare):
            left = self.eval_expr(node.left, env)
            for op, comparator in zip(node.ops, node.comparators):
                right = self.eval_expr(comparator, env)
                if not _compare(type(op), left, right):
                    return False
                left = right
            return True
        if isinstance(node, ast.Subscript):
            container = self.eval_expr(node.value, env)
            if isinstance(node.slice, ast.Slice):
                lower = self.eval_expr(node.slice.lower, env) if node.slice.lower else None
                upper = self.eval_expr(node.slice.upper, env) if node.slice.upper else None
                step = self.eval_expr(node.slice.step, env) if node.slice.step else None
                result = container[slice(lower, upper, step)]
                if isinstance(result, (list, tuple, str)):
                    self.alloc(len(result))
                return result
            key = self.eval_expr(node.slice, env)
            return container[key]
        if isinstance(node, ast.Attribute):
            return self.eval_attribute(node, env)
        if isinstance(node, ast.Call):
            return self.eval_call(node, env)
        if isinstance(node, ast.Lambda):
            return _SandboxFunction(node, env, self)
        if isinstance(node, ast.ListComp):
            return self.eval_comprehension(node, env, kind="list")
        if isinstance(node, ast.GeneratorExp):
            return self.eval_comprehension(node, env, kind="list")
        if isinstance(node, ast.DictComp):
            return self.eval_comprehension(node, env, kind="dict")
        if isinstance(node, ast.JoinedStr):
            parts = []
            for piece in node.values:
                if isinstance(piece, ast.Constant):
                    parts.append(str(piece.value))
                elif isinstance(piece, ast.FormattedValue):
                    value = self.eval_expr(piece.value, env)
                    if piece.conversion == 114:  # !r
                        value = repr(value)
                    elif piece.conversion == 115:  # !s
                        value = str(value)
                    elif piece.conversion == 97:  # !a
                        value = ascii(value)
                    if piece.format_spec is not None:
                        spec = self.eval_expr(piece.format_spec, env)
                        parts.append(format(value, spec))
                    else:
                        parts.append(value if isinstance(value, str) else str(value))
                else:
                    raise _PolicyViolation(
                        f"unsupported construct: {type(piece).__name__}"
                    )
            return "".join(parts)
        raise _PolicyViolation(f"unsupported construct: {type(node).__name__}")

    def eval_attribute(self, node: ast.Attribute, env: dict):
        base = self.eval_expr(node.value, env)
        attr = node.attr
        if isinstance(base, _ModuleShim):
            return base.get(attr)
        if attr.startswith("_") or attr not in METHOD_WHITELIST:
            raise _PolicyViolation(f"forbidden name: {attr}")
        method = getattr(base, attr)  # natural AttributeError message on miss
        if attr in ("append", "extend", "update"):
            ev = self

            def _counted(*args, **kwargs):
                grow = 1
                if attr in ("extend", "update") and args:
                    try:
                        grow = len(args[0])
                    except TypeError:
                        grow = 1
                ev.alloc(grow)
                return method(*args, **kwargs)

            return _counted
        return method

    def eval_call(self, node: ast.Call, env: dict):
        func = self.eval_expr(node.func, env)
        args = []
        for arg in node.args:
            if isinstance(arg, ast.Starred):
                raise _PolicyViolation("unsupported construct: Starred")
            args.append(self.eval_expr(arg, env))
        kwargs = {}
        for kw in node.keywords:
            if kw.arg is None:
                raise _PolicyViolation("unsupported construct: keyword unpacking")
            kwargs[kw.arg] = self.eval_expr(kw.value, env)
        if isinstance(func, _SandboxFunction):
            if kwargs:
                raise TypeError("sandbox functions take positional arguments only")
            return self.call_lambda(func, args)
        if isinstance(func, _ModuleShim):
            raise TypeError(f"'{func.name}' module object is not callable")
        if not callable(func):
            raise TypeError(f"'{type(func).__name__}' object is not callable")
        result = func(*args, **kwargs)
        return _normalize_int(result) if isinstance(result, int) else result

    def call_lambda(self, fn: _SandboxFunction, args):
        self.call_depth += 1
        if self.call_depth > self.limits.max_depth:
            self.call_depth -= 1
            raise _BudgetExhausted("call depth exhausted")
        try:
            params = [a.arg for a in fn.node.args.args]
            if len(args) != len(params):
                raise TypeError(
                    f"lambda takes {len(params)} arguments but {len(args)} were given"
                )
            local = dict(fn.env)
            local.update(zip(params, args))
            return self.eval_expr(fn.node.body, local)
        finally:
            self.call_depth -= 1

    def eval_comprehension(self, node, env: dict, kind: str):
        generators = node.generators
        out_list: list = []
        out_dict: dict = {}

        def run(gen_idx: int, scope: dict):
            if gen_idx == len(generators):
                self.tick()
                self.alloc()
                if kind == "dict":
                    out_dict[self.eval_expr(node.key, scope)] = self.eval_expr(
                        node.value, scope
                    )
                else:
                    out_list.append(self.eval_expr(node.elt, scope))
                return
            gen = generators[gen_idx]
            if gen.is_async:
                raise _PolicyViolation("unsupported construct: async comprehension")
            iterable = self.eval_expr(gen.iter, scope)
            for item in iterable:
                self.tick()
                inner = dict(scope)
                self.assign(gen.target, item, inner)
                if all(self.eval_expr(cond, inner) for cond in gen.ifs):
                    run(gen_idx + 1, inner)

        run(0, dict(env))
        return out_dict if kind == "dict" else out_list

    def binop(self, op_type, left, right):
        symbol = _ALLOWED_BINOPS.get(op_type)
        if symbol is None:
            raise _PolicyViolation(f"unsupported construct: {op_type.__name__}")
        if symbol == "*" and isinstance(left, (str, list, tuple)) and isinstance(right, int):
            self._guard_len(len(left) * max(right, 0))
            self.alloc(len(left) * max(right, 0))
        if symbol == "*" and isinstance(right, (str, list, tuple)) and isinstance(left, int):
            self._guard_len(len(right) * max(left, 0))
            self.alloc(len(right) * max(left, 0))
        if symbol == "+" and isinstance(left, (str, list, tuple)) and isinstance(
            right, (str, list, tuple)
        ):
            self._guard_len(len(left) + len(right))
            self.alloc(len(right))
        if symbol == "**" and isinstance(left, int) and isinstance(right, int):
            if abs(right) > 4096 or (abs(left) > 1 and abs(right) > 256):
                left = float(left)
        result = _APPLY[symbol](left, right)
        return _normalize_int(result) if isinstance(result, int) else result


def _load_of(target: ast.expr) -> ast.expr:
    clone = ast.copy_location(
        ast.Subscript(value=target.value, slice=target.slice, ctx=ast.Load())
        if isinstance(target, ast.Subscript)
        else ast.Name(id=target.id, ctx=ast.Load()),
        target,
    )
    return ast.fix_missing_locations(clone)


def _normalize_int(value):
    """Ints outside signed 64-bit range promote to binary64 floats."""
    if isinstance(value, bool):
        return value
    if isinstance(value, int) and not (INT64_MIN <= value <= INT64_MAX):
        return float(value)
    return value


_APPLY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
    "//": lambda a, b: a // b,
    "%": lambda a, b: a % b,
    "**": lambda a, b: a**b,
}


def _compare(op_type, left, right):
    if op_type is ast.Eq:
        return left == right
    if op_type is ast.NotEq:
        return left != right
    if op_type is ast.Lt:
        return left < right
    if op_type is ast.LtE:
        return left <= right
    if op_type is ast.Gt:
        return left > right
    if op_type is ast.GtE:
        return left >= right
    if op_type is ast.In:
        return left in right
    if op_type is ast.NotIn:
        return left not in right
    if op_type is ast.Is:
        return left is right
    return left is not right  # IsNot


def execute(
    program: ProgramAst,
    chart: ValueTree,
    limits: SandboxLimits = DEFAULT_LIMITS,
    clock: Callable[[], float] = time.monotonic,
) -> ExecOutcome:
    """Run get_summary_statistics(chart) under the sandbox budgets."""
    evaluator = _Evaluator(limits, clock)
    env = dict(evaluator.builtins_table())
    for alias, (module, attr) in program.module_aliases.items():
        table = _STATISTICS_TABLE if module == "statistics" else _MATH_TABLE
        if attr is None:
            env[alias] = _ModuleShim(module, table)
        else:
            env[alias] = table[attr]
    env[program.param] = copy_tree(chart)

    def fail(category: FailureCategory, message: str) -> ExecOutcome:
        return ExecOutcome(
            stats=None,
            failure=FailureClass(Stage.CODE_EXEC, category, message),
            steps_used=evaluator.steps,
            captured_output="".join(evaluator.printed),
        )

    try:
        try:
            evaluator.exec_body(program.func.body, env)
            result = None
        except _ReturnSignal as ret:
            result = ret.value
        if tree_depth(result) > limits.max_depth:
            return fail(FailureCategory.BUDGET_EXCEEDED, "result depth exhausted")
        stats = flatten_stats(result)
    except _BudgetExhausted as exc:
        return fail(FailureCategory.BUDGET_EXCEEDED, str(exc))
    except _PolicyViolation as exc:
        return fail(FailureCategory.OTHER, str(exc))
    except TypeError as exc:
        return fail(FailureCategory.TYPE_MISMATCH, str(exc))
    except AttributeError as exc:
        return fail(FailureCategory.ATTRIBUTE_ERROR, str(exc))
    except ValueError as exc:
        return fail(FailureCategory.VALUE_ERROR, str(exc))
    except (
        KeyError, IndexError, NameError, ZeroDivisionError, OverflowError,
        StopIteration, RecursionError,
    ) as exc:
        return fail(FailureCategory.OTHER, f"{type(exc).__name__}: {exc}")

    return ExecOutcome(
        stats=stats,
        failure=None,
        steps_used=evaluator.steps,
        captured_output="".join(evaluator.printed),
    )
