"""SMT-LIB 2 emission and external-solver orchestration.

The backend is solver-agnostic: it writes a self-contained SMT-LIB script
(QF_BV for fixed-point, QF_LRA for real relaxation, QF_FP for float32),
runs any solver that accepts a script path as its argument, and parses the
sat/unsat answer plus the model.  A bundled Node.js wrapper around the
z3 WebAssembly build serves as the default when no native solver is on
PATH.
"""

from __future__ import annotations

import os
import re
import shlex
import shutil
import struct
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

from .ir import BOOL, FP32_SORT, REAL_SORT, Node, SsaProgram
from .modes import Float32Mode, FxpMode, RealMode


# ---------------------------------------------------------------------------
# Emission


def logic_for(program: SsaProgram) -> str:
    mode = program.mode
    if isinstance(mode, FxpMode):
        return "QF_BV"
    if isinstance(mode, Float32Mode):
        return "QF_FP"
    return "QF_LRA"


def _sort_smt(sort: tuple) -> str:
    if sort == BOOL:
        return "Bool"
    if sort == REAL_SORT:
        return "Real"
    if sort == FP32_SORT:
        return "(_ FloatingPoint 8 24)"
    if sort[0] == "bv":
        return f"(_ BitVec {sort[1]})"
    raise ValueError(f"unknown sort {sort}")


def _bv_lit(raw: int, width: int) -> str:
    return f"(_ bv{raw % (1 << width)} {width})"


def _real_lit(v: Fraction) -> str:
    v = Fraction(v)
    if v.denominator == 1:
        n = v.numerator
        return f"{n}.0" if n >= 0 else f"(- {-n}.0)"
    body = f"(/ {abs(v.numerator)}.0 {v.denominator}.0)"
    return body if v >= 0 else f"(- {body})"


def _fp32_lit(x: float) -> str:
    (bits,) = struct.unpack("<I", struct.pack("<f", x))
    sign = bits >> 31
    exp = (bits >> 23) & 0xFF
    sig = bits & 0x7FFFFF
    return f"(fp #b{sign} #b{exp:08b} #b{sig:023b})"


_CMP_BV = {"<": "bvslt", "<=": "bvsle", ">": "bvsgt", ">=": "bvsge",
           "=": "="}
_CMP_REAL = {"<": "<", "<=": "<=", ">": ">", ">=": ">=", "=": "="}
_CMP_FP = {"<": "fp.lt", "<=": "fp.leq", ">": "fp.gt", ">=": "fp.geq",
           "=": "fp.eq"}


def emit_smtlib(program: SsaProgram, comment: str = "") -> str:
    """Deterministic SMT-LIB rendering of the program.

    Inputs become declared constants, every named assignment becomes a
    define-fun, and any other node referenced more than once gets a shared
    temporary.  The property check is `(assert (not (and <asserts>)))`:
    sat answers are counterexample candidates.
    """
    mode = program.mode
    is_fxp = isinstance(mode, FxpMode)
    is_fp32 = isinstance(mode, Float32Mode)
    width = mode.format.width if is_fxp else 0
    frac_bits = mode.format.l if is_fxp else 0

    names = program.names_for()
    refcount: Dict[int, int] = {}
    topo: List[Node] = []
    seen = set()

    def visit(n: Node) -> None:
        refcount[id(n)] = refcount.get(id(n), 0) + 1
        if id(n) in seen:
            return
        seen.add(id(n))
        for a in n.args:
            visit(a)
        topo.append(n)

    for root in program.roots():
        visit(root)

    binder: Dict[int, str] = {}
    defs: List[Tuple[str, Node]] = []
    tmp_idx = 0
    for n in topo:
        name = names.get(id(n))
        if n.kind == "nondet":
            binder[id(n)] = name or f"in{n.payload[1]}"
            continue
        if n.kind == "const":
            continue
        if name is None and refcount[id(n)] > 1:
            name = f"t{tmp_idx}"
            tmp_idx += 1
        if name is not None:
            defs.append((name, n))
            binder[id(n)] = name

    def render(n: Node, at_def: bool = False) -> str:
        if not at_def and id(n) in binder:
            return binder[id(n)]
        k = n.kind
        if k == "const":
            if n.sort == BOOL:
                return "true" if n.payload else "false"
            if is_fxp:
                return _bv_lit(n.payload, width)
            if is_fp32:
                return _fp32_lit(n.payload)
            return _real_lit(n.payload)
        if k == "nondet":
            return binder[id(n)]
        a = [render(x) for x in n.args]
        if k == "add":
            if is_fxp:
                return f"(bvadd {a[0]} {a[1]})"
            if is_fp32:
                return f"(fp.add RNE {a[0]} {a[1]})"
            return f"(+ {a[0]} {a[1]})"
        if k == "mul":
            if is_fxp:
                return _render_fxp_mul(a[0], a[1], width, frac_bits, mode)
            if is_fp32:
                return f"(fp.mul RNE {a[0]} {a[1]})"
            return f"(* {a[0]} {a[1]})"
        if k == "cmp":
            table = _CMP_BV if is_fxp else _CMP_FP if is_fp32 else _CMP_REAL
            return f"({table[n.payload]} {a[0]} {a[1]})"
        if k == "ite":
            return f"(ite {a[0]} {a[1]} {a[2]})"
        if k in ("and", "or", "xor", "not"):
            return f"({k} {' '.join(a)})"
        raise ValueError(f"unknown node kind {k}")

    lines: List[str] = []
    if comment:
        for c in comment.splitlines():
            lines.append(f"; {c}")
    lines.append("(set-option :produce-models true)")
    lines.append(f"(set-logic {logic_for(program)})")
    for name, node in program.inputs:
        lines.append(f"(declare-const {name} {_sort_smt(node.sort)})")
    for name, n in defs:
        lines.append(f"(define-fun {name} () {_sort_smt(n.sort)} "
                     f"{render(n, at_def=True)})")
    for a in program.assumes:
        lines.append(f"(assert {render(a)})")
    if len(program.asserts) == 1:
        prop = render(program.asserts[0])
    else:
        prop = "(and " + " ".join(render(a) for a in program.asserts) + ")"
    lines.append(f"(assert (not {prop}))")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


def _render_fxp_mul(a: str, b: str, width: int, frac_bits: int,
                    mode: FxpMode) -> str:
    """Scaled multiply: double-width product, shift right by l, wrap.

    Arithmetic shift floors toward minus infinity, matching the default
    truncation; nearest rounding adds the ties-toward-zero correction from
    the discarded low bits.
    """
    from .fxp import RoundingMode

    w2 = 2 * width
    prod = (f"(bvmul ((_ sign_extend {width}) {a}) "
            f"((_ sign_extend {width}) {b}))")
    if frac_bits == 0:
        return f"((_ extract {width - 1} 0) {prod})"
    shifted = f"(bvashr {prod} (_ bv{frac_bits} {w2}))"
    if mode.rounding is RoundingMode.TRUNCATE:
        return f"((_ extract {width - 1} 0) {shifted})"
    half = 1 << (frac_bits - 1)
    mask = (1 << frac_bits) - 1
    rem = f"(bvand {prod} (_ bv{mask} {w2}))"
    neg = f"(bvslt {prod} (_ bv0 {w2}))"
    bump = (f"(ite (or (bvugt {rem} (_ bv{half} {w2})) "
            f"(and (= {rem} (_ bv{half} {w2})) {neg})) "
            f"(_ bv1 {w2}) (_ bv0 {w2}))")
    return f"((_ extract {width - 1} 0) (bvadd {shifted} {bump}))"


# ---------------------------------------------------------------------------
# Solver invocation


@dataclass(frozen=True)
class SolverConfig:
    command: tuple              # argv prefix; the script path is appended
    name: str = "solver"
    timeout: Optional[float] = None

    @classmethod
    def from_string(cls, text: str,
                    timeout: Optional[float] = None) -> "SolverConfig":
        argv = tuple(shlex.split(text))
        if not argv:
            raise ValueError("empty solver command")
        return cls(argv, name=os.path.basename(argv[0]), timeout=timeout)


@dataclass
class SolverResult:
    status: str                  # sat | unsat | unknown | timeout | error
    model: Optional[dict] = None  # symbol -> parsed s-expression value
    wall_time: float = 0.0
    stdout: str = ""
    stderr: str = ""


def bundled_wrapper_path() -> str:
    return str(resources.files("qnncheck").joinpath("data", "z3wasm.js"))


def default_solver(timeout: Optional[float] = None) -> SolverConfig:
    """Pick a solver: $QNNCHECK_SOLVER, then native z3/cvc5, then the
    bundled WebAssembly z3 run under node."""
    env = os.environ.get("QNNCHECK_SOLVER")
    if env:
        return SolverConfig.from_string(env, timeout=timeout)
    for exe in ("z3", "cvc5"):
        path = shutil.which(exe)
        if path:
            return SolverConfig((path,), name=exe, timeout=timeout)
    node = shutil.which("node")
    if node:
        return SolverConfig((node, bundled_wrapper_path()), name="z3-wasm",
                            timeout=timeout)
    raise RuntimeError(
        "no SMT solver found: set QNNCHECK_SOLVER, or install z3/cvc5, "
        "or provide node with the z3-solver npm package")


def run_solver(config: SolverConfig, script: str) -> SolverResult:
    with tempfile.NamedTemporaryFile("w", suffix=".smt2", delete=False) as f:
        f.write(script)
        path = f.name
    start = time.monotonic()
    try:
        proc = subprocess.run(
            list(config.command) + [path],
            capture_output=True, text=True, timeout=config.timeout)
    except subprocess.TimeoutExpired as exc:
        wall = time.monotonic() - start
        return SolverResult("timeout", wall_time=wall,
                            stdout=(exc.stdout or b"").decode("utf-8",
                                                              "replace")
                            if isinstance(exc.stdout, bytes)
                            else (exc.stdout or ""),
                            stderr=str(exc))
    except OSError as exc:
        return SolverResult("error", wall_time=time.monotonic() - start,
                            stderr=str(exc))
    finally:
        try:
            os.unlink(path)
        except OSError:
            pass
    wall = time.monotonic() - start
    out, err = proc.stdout, proc.stderr
    status = None
    for line in out.splitlines():
        word = line.strip()
        if word in ("sat", "unsat", "unknown"):
            status = word
            break
    if status is None:
        return SolverResult("error", wall_time=wall, stdout=out, stderr=err)
    model = None
    if status == "sat":
        try:
            model = parse_model(out)
        except ValueError:
            model = None
    return SolverResult(status, model=model, wall_time=wall, stdout=out,
                        stderr=err)


# ---------------------------------------------------------------------------
# Model parsing


_TOKEN = re.compile(r"""\(|\)|"[^"]*"|[^\s()]+""")


def _tokenize(text: str) -> list:
    return _TOKEN.findall(text)


def _parse_sexprs(tokens: list, pos: int = 0) -> tuple:
    out = []
    while pos < len(tokens):
        t = tokens[pos]
        if t == "(":
            inner, pos = _parse_sexprs(tokens, pos + 1)
            out.append(inner)
            if pos < len(tokens) and tokens[pos] == ")":
                pos += 1
        elif t == ")":
            return out, pos
        else:
            out.append(t)
            pos += 1
    return out, pos


def parse_model(output: str) -> dict:
    """Extract {symbol: value-sexpr} from a solver's get-model answer."""
    body = output
    idx = body.find("sat")
    if idx >= 0:
        body = body[idx + 3:]
    tokens = _tokenize(body)
    exprs, _ = _parse_sexprs(tokens)
    model: Dict[str, object] = {}

    def collect(items) -> None:
        for item in items:
            if not isinstance(item, list):
                continue
            if item and item[0] == "model":
                collect(item[1:])
            elif (len(item) >= 5 and item[0] == "define-fun"
                    and item[2] == []):
                model[item[1]] = item[-1]
            elif item and isinstance(item[0], (list, str)) \
                    and item[0] != "define-fun":
                collect(item)

    collect(exprs)
    if not model:
        raise ValueError("no model definitions found in solver output")
    return model


def _decode_value(sexpr, sort: tuple):
    """Turn a model value s-expression into a payload-domain value."""
    if sort == BOOL:
        return sexpr == "true"
    if sort[0] == "bv":
        width = sort[1]
        raw = _decode_bv(sexpr)
        if raw is None or not (0 <= raw < (1 << width)):
            raise ValueError(f"bad bit-vector model value {sexpr!r}")
        if raw >= 1 << (width - 1):
            raw -= 1 << width
        return raw
    if sort == REAL_SORT:
        return _decode_real(sexpr)
    if sort == FP32_SORT:
        return _decode_fp32(sexpr)
    raise ValueError(f"cannot decode sort {sort}")


def _decode_bv(sexpr) -> Optional[int]:
    if isinstance(sexpr, str):
        if sexpr.startswith("#x"):
            return int(sexpr[2:], 16)
        if sexpr.startswith("#b"):
            return int(sexpr[2:], 2)
        if sexpr.isdigit():
            return int(sexpr)
        return None
    if (len(sexpr) == 3 and sexpr[0] == "_"
            and isinstance(sexpr[1], str) and sexpr[1].startswith("bv")):
        return int(sexpr[1][2:])
    return None


def _decode_real(sexpr) -> Fraction:
    if isinstance(sexpr, str):
        return Fraction(sexpr)
    if sexpr and sexpr[0] == "-":
        return -_decode_real(sexpr[1])
    if sexpr and sexpr[0] == "/":
        return _decode_real(sexpr[1]) / _decode_real(sexpr[2])
    raise ValueError(f"bad real model value {sexpr!r}")


def _decode_fp32(sexpr) -> float:
    if isinstance(sexpr, list) and sexpr and sexpr[0] == "fp":
        sign = int(sexpr[1][2:], 2)
        exp = int(sexpr[2][2:], 2 if sexpr[2].startswith("#b") else 16)
        sig = int(sexpr[3][2:], 2 if sexpr[3].startswith("#b") else 16)
        bits = (sign << 31) | (exp << 23) | sig
        return struct.unpack("<f", struct.pack("<I", bits))[0]
    if isinstance(sexpr, list) and sexpr and sexpr[0] == "_":
        tag = sexpr[1]
        if tag == "+zero":
            return 0.0
        if tag == "-zero":
            return -0.0
        if tag == "+oo":
            return float("inf")
        if tag == "-oo":
            return float("-inf")
        if tag == "NaN":
            return float("nan")
    raise ValueError(f"bad float model value {sexpr!r}")


class ModelDecodeError(ValueError):
    pass


def decode_model(program: SsaProgram, model: dict) -> list:
    """Map a solver model to concrete input payloads in declaration order.

    Every declared input must be present (solvers may omit don't-cares, in
    which case the region lower bound is substituted) and in range for its
    sort.
    """
    values = []
    for i, (name, node) in enumerate(program.inputs):
        if name in model:
            try:
                values.append(_decode_value(model[name], node.sort))
            except ValueError as exc:
                raise ModelDecodeError(f"input {name}: {exc}") from exc
        else:
            values.append(_default_input(program, i, node.sort))
    return values


def _default_input(program: SsaProgram, index: int, sort: tuple):
    """Don't-care input: any value satisfying the region; pick its low end
    from the matching region assume when present."""
    name = program.inputs[index][0]
    for a in program.assumes:
        if (a.kind == "cmp" and a.payload == "<="
                and a.args[0].kind == "const"
                and a.args[1] is program.inputs[index][1]):
            return a.args[0].payload
    if sort[0] == "bv":
        return 0
    if sort == FP32_SORT:
        return 0.0
    return Fraction(0)
