"""Scenarios, the end-to-end pipeline, reports and the ``procoh`` command.

A scenario is a JSON document::

    {
      "name": "gl2", "p": 5,
      "extension": {"kind": "congruence", "h": [[1, 1], [0, 1]], "precision": 3},
      "kernel_names": ["y11", "y12", "y21", "y22"],
      "naming": {"v_name": "v", "even_base": "{v}", "odd_base": "u{v}",
                 "even": {"1": [["{v}y1", "y11+y22"], ...]}, "odd": {...}},
      "fusion": [{"name": "g_t", "domain": "whole_group",
                  "matrix": [["t", 0], [0, 1]], "params": {"t": "primitive_root"}}],
      "assumptions": [{"generator": "y4", "page": "all", "value": "0",
                       "tag": "paper-asserted", "note": "..."}],
      "collapse": false, "no_p_torsion": true, "window": null,
      "expected": {...}
    }

Abelian kernels use ``{"kind": "abelian", "h1_action": [[...]]}`` instead,
with the matrix given in the column convention.  Matrix entries may be
parameter names resolved through ``params`` (an integer, or
``"primitive_root"``).
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cyclic_cohomology import E2Algebra, cohomology_dim, jordan_block
from .exterior_algebra import parse_element
from .fp_linalg import FpMatrix, Subspace, check_odd_prime
from .fusion_actions import (
    KERNEL_ONLY,
    WHOLE_GROUP,
    FusionGenerator,
    check_anchors,
    h1_action,
    page_endomorphism,
)
from .padic_groups import ExtensionDatum, PrecisionMatrix, layer_quotient_action, permutation_check
from .ring_presentations import (
    ISOMORPHIC,
    NotApplicable,
    RingPresentation,
    TruncatedRing,
    duality_degrees,
    parse_polynomial,
    truncated_equal,
)
from .spectral_engine import (
    BudgetExceeded,
    InfeasibleError,
    InfinityReport,
    Naming,
    PageGenerator,
    Page,
    Window,
    WindowError,
    algebra_generators,
    assemble_e2,
    check_v_periodicity,
    decomposables,
    default_window,
    detect_free_and_lift,
    e_infinity,
    enumerate_branches,
    finiteness_constraint_solve,
    presentation_of_e2,
    stable_page,
)

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2
TAGS = ("assumption", "paper-asserted")


class ScenarioError(ValueError):
    """The scenario document is malformed."""


def primitive_root(p: int) -> int:
    check_odd_prime(p)
    factors = {q for q in range(2, p) if (p - 1) % q == 0 and all(q % r for r in range(2, q))}
    return next(g for g in range(2, p) if all(pow(g, (p - 1) // q, p) != 1 for q in factors))


# --- scenarios ---------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    p: int
    extension: ExtensionDatum
    kernel_names: list[str]
    naming: Naming
    fusion: list[FusionGenerator]
    assumptions: list[dict]
    collapse: bool
    no_p_torsion: bool
    window: Window
    expected: dict
    source: dict = field(repr=False, default_factory=dict)

    def algebra(self) -> E2Algebra:
        if self.extension.kind == "congruence":
            g = FusionGenerator("h", WHOLE_GROUP, matrix=self.extension.h)
            return E2Algebra(h1_action(g, self.extension))
        return E2Algebra(self.extension.h1_matrix)


def _resolve(entry, params: dict, p: int) -> int:
    if isinstance(entry, int):
        return entry
    if isinstance(entry, str) and entry in params:
        val = params[entry]
        if val == "primitive_root":
            return primitive_root(p)
        if isinstance(val, int):
            return val
    raise ScenarioError(f"cannot resolve matrix entry {entry!r}")


def _matrix(rows, params: dict, p: int) -> np.ndarray:
    try:
        arr = np.array([[_resolve(x, params, p) for x in row] for row in rows], dtype=np.int64)
    except TypeError as exc:
        raise ScenarioError(f"bad matrix {rows!r}") from exc
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ScenarioError(f"matrix {rows!r} is not square")
    return arr


def _table(raw: dict, names: list[str], p: int) -> dict:
    out = {}
    for key, entries in raw.items():
        out[int(key)] = [(tmpl, parse_element(el, names, p)) for tmpl, el in entries]
    return out


def scenario_from_dict(doc: dict, window_override: int | None = None) -> Scenario:
    try:
        p = check_odd_prime(int(doc["p"]))
        ext_doc = doc["extension"]
        precision = int(ext_doc.get("precision", 3))
        if ext_doc["kind"] == "congruence":
            h = PrecisionMatrix(_matrix(ext_doc["h"], {}, p), p, precision)
            ext = ExtensionDatum(p, "congruence", h=h)
            n = h.n
            default_names = [f"y{i + 1}{j + 1}" for i in range(n) for j in range(n)]
        elif ext_doc["kind"] == "abelian":
            mat = FpMatrix(_matrix(ext_doc["h1_action"], {}, p), p)
            ext = ExtensionDatum(p, "abelian", h1_matrix=mat)
            default_names = [f"a{i + 1}" for i in range(mat.rows)]
        else:
            raise ScenarioError(f"unknown extension kind {ext_doc['kind']!r}")
        names = list(doc.get("kernel_names") or default_names)
        if len(names) != ext.kernel_rank:
            raise ScenarioError("kernel_names has the wrong length")
        nd = doc.get("naming", {})
        naming = Naming(names, _table(nd.get("even", {}), names, p), _table(nd.get("odd", {}), names, p),
                        nd.get("v_name", "v"), nd.get("even_base", "{v}"), nd.get("odd_base", "u{v}"))
        fusion = []
        for g in doc.get("fusion", []):
            params = g.get("params", {})
            kw = {}
            if "matrix" in g:
                kw["matrix"] = PrecisionMatrix(_matrix(g["matrix"], params, p), p, precision)
            if "h1_action" in g:
                kw["h1_matrix"] = FpMatrix(_matrix(g["h1_action"], params, p), p)
            if "scalar" in g:
                kw["scalar"] = _resolve(g["scalar"], params, p)
            fusion.append(FusionGenerator(g["name"], g.get("domain", WHOLE_GROUP), **kw))
        assumptions = list(doc.get("assumptions", []))
        for a in assumptions:
            if a.get("tag") not in TAGS:
                raise ScenarioError(f"assumption tag must be one of {TAGS}")
        d = ext.kernel_rank
        if window_override is not None:
            window = Window(int(window_override), d)
        elif doc.get("window"):
            window = Window(int(doc["window"]), d)
        else:
            window = default_window(p, d)
        return Scenario(doc.get("name", "scenario"), p, ext, names, naming, fusion, assumptions,
                        bool(doc.get("collapse", False)), bool(doc.get("no_p_torsion", False)), window,
                        doc.get("expected", {}), doc)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc


def gl2_document(p: int) -> dict:
    """The GL_2(Z_p) scenario: S = <h, K_1> with h = (1 1; 0 1)."""
    check_odd_prime(p)
    k = p - 3
    vk = "" if k == 0 else ("v" if k == 1 else f"v^{k}")
    doc = {
        "name": f"gl2-p{p}",
        "p": p,
        "extension": {"kind": "congruence", "h": [[1, 1], [0, 1]], "precision": 3},
        "kernel_names": ["y11", "y12", "y21", "y22"],
        "naming": {
            "v_name": "v", "even_base": "{v}", "odd_base": "u{v}",
            "even": {
                "0": [["{v}", "1"]],
                "1": [["{v}y1", "y11+y22"], ["{v}y2", "y21"]],
                "2": [["{v}y3", "y11y21"], ["{v}y1y2", "y11y21-y21y22"]],
                "3": [["{v}y4", "y11y12y21-y12y21y22"], ["{v}y1y3", "y11y21y22"]],
                "4": [["{v}y1y4", "y11y12y21y22"]],
            },
            "odd": {
                "0": [["u{v}", "1"]],
                "1": [["u{v}y1", "y11+y22"], ["u{v}ybar2", "y12-y11"]],
                "2": [["u{v}ybar3", "y12y22-y12y21"], ["u{v}ybar(y1y2)", "y12y22-y12y21-y11y12"]],
                "3": [["u{v}y4", "y11y12y21-y12y21y22"], ["u{v}ybar(y1y3)", "y11y12y21-y11y12y22"]],
                "4": [["u{v}y1y4", "y11y12y21y22"]],
            },
        },
        "fusion": [
            {"name": "g1", "domain": KERNEL_ONLY, "matrix": [[1, 1], [0, 1]]},
            {"name": "g2", "domain": KERNEL_ONLY, "matrix": [[1, 0], [1, 1]]},
            {"name": "g_t", "domain": WHOLE_GROUP, "matrix": [["t", 0], [0, 1]], "params": {"t": "primitive_root"}},
            {"name": "g_z", "domain": WHOLE_GROUP, "matrix": [[1, 0], [0, "z"]], "params": {"z": "primitive_root"}},
        ],
        "assumptions": [],
        "collapse": False,
        "no_p_torsion": p > 3,
        "window": None,
    }
    if p == 3:
        doc["assumptions"] = [{
            "generator": "y4", "page": "all", "value": "0", "tag": "paper-asserted",
            "note": "d_r(y4) = 0 for all r >= 2, deduced from the collapse for (Z/3 wr Z/3) x Z/3 = S/K_2",
        }]
        doc["expected"] = {
            "e2_corner": {
                "0,0": ["1"], "1,0": ["u"], "2,0": ["v"],
                "0,1": ["y1", "y2"], "1,1": ["uy1"], "2,1": ["vy1"],
                "0,2": ["y3", "y1y2"], "1,2": [], "2,2": [],
                "0,3": ["y4", "y1y3"], "1,3": ["uy4"], "2,3": ["vy4"],
                "0,4": ["y1y4"], "1,4": ["uy1y4"], "2,4": ["vy1y4"],
            },
            "e2_presentation": "\n".join([
                "ring E2 p=3",
                "gen u 1 exterior (1,0)", "gen y1 1 exterior (0,1)", "gen y2 1 exterior (0,1)",
                "gen v 2 polynomial (2,0)", "gen y3 2 exterior (0,2)", "gen y4 3 exterior (0,3)",
                "rel uy2", "rel y2v", "rel uy3", "rel vy3", "rel y2y3", "rel y2y4", "rel y3y4",
            ]),
            "stable_generators": [["y1", 0, 1], ["y4", 0, 3], ["uv", 3, 0], ["v^2", 4, 0]],
            "stable_free": True,
            "einf_generators": [["y1", 0, 1], ["y4", 0, 3], ["uv", 3, 0], ["v^2", 4, 0]],
            "final_ring": "\n".join([
                "ring target p=3", "gen X 4 polynomial", "gen Z1 1 exterior", "gen Z2 3 exterior", "gen Z3 3 exterior",
            ]),
            "duality": {"polynomial": {"X": 4}, "top": 7, "palindromic": True},
        }
    else:
        doc["expected"] = {
            "e2_corner": {
                "0,0": ["1"], "1,0": ["u"], "2,0": ["v"],
                "0,1": ["y1", "y2"], "1,1": ["uy1", "uybar2"], "2,1": ["vy1", "vy2"],
                "0,2": ["y3", "y1y2"], "1,2": ["uybar3", "uybar(y1y2)"], "2,2": ["vy3", "vy1y2"],
                "0,3": ["y4", "y1y3"], "1,3": ["uy4", "uybar(y1y3)"], "2,3": ["vy1y3", "vy4"],
                "0,4": ["y1y4"], "1,4": ["uy1y4"], "2,4": ["vy1y4"],
            },
            "e2_identities": [
                "uybar(y1y3) = 1/2 uy4 - y1*uybar3",
                "uybar(y1y2) = -y1*uybar2",
            ],
            "stable_generators": [
                ["y1", 0, 1], ["y4", 0, 3], ["vy2", 2, 1], ["vy3", 2, 2],
                [f"1/2 u{vk}y1 + u{vk}ybar2", 2 * p - 5, 1],
                [f"u{vk}ybar(y1y2)", 2 * p - 5, 2],
                [f"u{vk}ybar3", 2 * p - 5, 2],
                [f"-1/2 u{vk}y4 + u{vk}ybar(y1y3)", 2 * p - 5, 3],
                [f"uv^{p - 2}", 2 * p - 3, 0],
                [f"v^{p - 1}", 2 * p - 2, 0],
            ],
            "periodicity": 2 * (p - 1),
            "differentials": {"constraint": "alpha ≠ 0", "d2": {"y4": "alpha vy3 + beta vy1y2"}},
            "einf_generators": [["y1", 0, 1], ["vy2", 2, 1]],
            "final_ring": "\n".join([f"ring target p={p}", "gen Z1 1 exterior", "gen Z2 3 exterior"]),
            "duality": {"polynomial": {}, "top": 4, "palindromic": True},
        }
    return doc


def extraspecial3_document() -> dict:
    """(Z_3 x Z_3) ⋊ Z/3 with H^1 action (1 1; 0 1); E_2 collapse consumed as a flag."""
    corner = {
        "0,0": ["1"], "1,0": ["y'"], "2,0": ["x'"], "3,0": ["y'x'"], "4,0": ["x'^2"],
        "0,1": ["y"], "1,1": ["Y'"], "2,1": ["yx'"], "3,1": ["Y'x'"], "4,1": ["yx'^2"],
        "0,2": ["Y"], "1,2": ["Yy'"], "2,2": ["Yx'"], "3,2": ["Yy'x'"], "4,2": ["Yx'^2"],
    }
    return {
        "name": "extraspecial3",
        "p": 3,
        "extension": {"kind": "abelian", "h1_action": [[1, 1], [0, 1]]},
        "kernel_names": ["a", "b"],
        "naming": {
            "v_name": "x'", "even_base": "{v}", "odd_base": "y'{v}",
            "even": {"0": [["{v}", "1"]], "1": [["y{v}", "a"]], "2": [["Y{v}", "ab"]]},
            "odd": {"0": [["y'{v}", "1"]], "1": [["Y'{v}", "b"]], "2": [["Yy'{v}", "ab"]]},
        },
        "fusion": [],
        "assumptions": [{
            "generator": "*", "page": "all", "value": "0", "tag": "paper-asserted",
            "note": "E_2 = E_infinity, transported from the collapse for the finite quotient G_1 = 3^{1+2}_+",
        }],
        "collapse": True,
        "no_p_torsion": False,
        "window": 8,
        "expected": {
            "e2_corner": corner,
            "final_ring": "\n".join([
                "ring target p=3",
                "gen y 1 exterior", "gen y' 1 exterior", "gen x' 2 polynomial", "gen Y 2 exterior", "gen Y' 2 exterior",
                "rel yy'", "rel yY", "rel y'Y'", "rel YY'", "rel yY' - y'Y",
            ]),
            "final_ring_degree": 6,
        },
    }


BUILTINS = {"gl2": gl2_document, "extraspecial3": extraspecial3_document}


def load_scenario(spec: str, p: int | None = None, window: int | None = None) -> Scenario:
    """A built-in name (``gl2`` needs ``p``) or the path of a JSON scenario file."""
    if spec == "gl2":
        doc = gl2_document(3 if p is None else p)
    elif spec in BUILTINS:
        doc = BUILTINS[spec]()
        if p is not None and p != doc["p"]:
            raise ScenarioError(f"{spec} is only defined for p={doc['p']}")
    else:
        path = Path(spec)
        if not path.is_file():
            raise ScenarioError(f"unknown scenario {spec!r} (built-ins: {', '.join(sorted(BUILTINS))})")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{spec}: {exc}") from exc
        if p is not None:
            doc["p"] = p
    return scenario_from_dict(doc, window)


# --- named-class expressions ---------------------------------------------------

_TERM_SPLIT = re.compile(r"\s+([+-])\s+")
_COEF = re.compile(r"^(-?)(\d+(?:/\d+)?)?\s*(.*)$")


def evaluate_expression(page: Page, text: str) -> tuple[tuple[int, int] | None, np.ndarray | None]:
    """Evaluate ``"1/2 uy4 - y1*uybar3"`` on named basis classes of ``page``.

    Returns the cell and a cochain vector (None, None for the empty sum).
    """
    p = page.p
    text = text.strip()
    if not text.startswith("-"):
        text = "+ " + text
    else:
        text = "- " + text[1:].lstrip()
    parts = _TERM_SPLIT.split(" " + text)
    parts = [x for x in parts if x.strip()]
    if parts and parts[0].strip() in "+-" and len(parts) % 2 == 0:
        pairs = zip(parts[0::2], parts[1::2])
    else:
        raise ValueError(f"cannot parse expression {text!r}")
    cell, total = None, None
    for sign, term in pairs:
        m = _COEF.match(term.strip())
        neg, num, body = m.group(1), m.group(2), m.group(3)
        coef = 1
        if num:
            a, _, b = num.partition("/")
            coef = int(a) * (pow(int(b), -1, p) if b else 1)
        if neg:
            coef = -coef
        if sign.strip() == "-":
            coef = -coef
        c, vec = None, None
        for factor in body.split("*"):
            fc, fv = page.class_vector(factor.strip())
            if c is None:
                c, vec = fc, fv
            else:
                prod = page.product_vec(c, vec, fc, fv)
                c = (c[0] + fc[0], c[1] + fc[1])
                if prod is None:
                    raise WindowError(f"product {body} leaves the window")
                if page.dim(c) == 0:
                    vec = np.zeros(page.algebra.grade_dim(c[1]), dtype=np.int64)
                else:
                    vec = page.lift(c, page.coords(c, prod))
        if cell is None:
            cell, total = c, (coef * vec) % p
        elif c != cell:
            raise ValueError(f"inhomogeneous expression: {cell} and {c}")
        else:
            total = (total + coef * vec) % p
    return cell, total


def identity_holds(page: Page, identity: str) -> tuple[bool, str]:
    """Check ``"lhs = rhs"`` between named classes of an E_2 page."""
    lhs, _, rhs = identity.partition("=")
    c1, v1 = evaluate_expression(page, lhs)
    c2, v2 = evaluate_expression(page, rhs)
    if c1 != c2:
        return False, f"{identity}: sides live in {c1} and {c2}"
    diff = (v1 - v2) % page.p
    ok = page.quotient(c1).sub.contains(diff)
    return ok, f"{identity}: {'holds' if ok else 'fails'} in E2{c1}"


# --- pipeline ----------------------------------------------------------------

@dataclass
class RunResult:
    scenario: Scenario
    e2: Page
    e2_presentation: object
    stable: Page
    stable_generators: list
    periodicity: dict | None
    family: object | None
    einf: object | None
    einf_check: object | None
    final_ring: RingPresentation | None
    final_source: str
    duality: object | None
    anchors: str
    layer_check: dict | None
    notes: list[str]
    timings: dict


def _assumption_vanish(stable: Page, sc: Scenario, r_last: int) -> dict:
    vanish: dict[int, list] = {}
    for a in sc.assumptions:
        if a.get("value", "0") != "0" or a.get("generator") == "*":
            continue
        cell, vec = stable.class_vector(a["generator"])
        coords = stable.coords(cell, vec)
        pages = range(2, r_last + 1) if a.get("page", "all") == "all" else [int(a["page"])]
        for r in pages:
            vanish.setdefault(r, []).append((cell, coords))
    return vanish


def layer_permutation_check(p: int) -> dict:
    """Conjugation by h = (1 1; 0 1) on K_1/K_2, on the basis used for S/K_2 at p = 3."""
    h = PrecisionMatrix([[1, 1], [0, 1]], p, 3)
    modulus, action = layer_quotient_action(h, 1, 2)
    vectors = [[1, -1, 1, -1], [0, 0, 1, 0], [-1, -1, 1, 1]]
    return permutation_check(action, modulus, vectors, [[1, 0, 0, 1]])


def run_scenario(sc: Scenario) -> RunResult:
    clock = {}
    t0 = time.perf_counter()
    notes = []
    anchors = "n/a"
    layer = None
    if sc.extension.kind == "congruence":
        check_anchors(sc.extension)
        anchors = "ok"
        if sc.p == 3 and sc.extension.n == 2:
            layer = layer_permutation_check(sc.p)
    alg = sc.algebra()
    e2 = assemble_e2(alg, sc.window, sc.naming)
    pres = presentation_of_e2(e2)
    clock["e2"] = time.perf_counter() - t0
    actions = [page_endomorphism(g, sc.extension) for g in sc.fusion]
    stable = stable_page(e2, actions)
    gens = algebra_generators(stable)
    periodicity = None
    if sc.fusion:
        try:
            periodicity = check_v_periodicity(stable, sc.p - 1)
        except WindowError as exc:
            notes.append(f"periodicity not checked: {exc}")
    clock["stable"] = time.perf_counter() - t0 - clock["e2"]
    family = None
    r_last = stable.window.m_max + 1
    if sc.collapse:
        einf = e_infinity(stable, collapse=True)
    elif sc.assumptions:
        branches = enumerate_branches(stable, r_last, [], vanish_classes=_assumption_vanish(stable, sc, r_last))
        if len(branches) != 1:
            raise InfeasibleError(f"the assumptions leave {len(branches)} differential systems")
        final = branches[0].final
        final.window = final.window.final()
        final.label = "Einf^F"
        einf = _single_infinity(final)
    elif sc.no_p_torsion:
        family = finiteness_constraint_solve(stable, True)
        einf = e_infinity(stable, family, _spread_samples(family.allowed, 3, PREFERRED_SAMPLES))
    else:
        raise InfeasibleError("no differential information: set collapse, assumptions or no_p_torsion")
    clock["differentials"] = time.perf_counter() - t0 - clock["e2"] - clock["stable"]
    check = detect_free_and_lift(einf.page)
    if check.free:
        ring, source = check.ring, "lift of the free E_infinity page"
    elif sc.collapse:
        ring = RingPresentation(pres.ring.generators, pres.ring.relations, sc.p,
                                ("collapse: E2 = Einf",), "lifted")
        source = "E2 relations lifted under the collapse assumption"
    else:
        ring, source = None, "no lift: " + check.report()
    duality = None
    if ring is not None:
        try:
            duality = duality_degrees(ring)
        except NotApplicable as exc:
            notes.append(f"duality: {exc}")
    clock["total"] = time.perf_counter() - t0
    return RunResult(sc, e2, pres, stable, gens, periodicity, family, einf, check, ring, source, duality,
                     anchors, layer, notes, clock)


PREFERRED_SAMPLES = [(1, 0), (1, 1), (2, 3)]


def _spread_samples(allowed: list, k: int, preferred=()) -> list:
    """Deterministic choice of k samples, preferred ones first, then evenly spread."""
    chosen = [s for s in preferred if s in allowed][:k]
    if len(allowed) <= k:
        return list(allowed)
    step = len(allowed) / k
    for i in range(len(allowed)):
        if len(chosen) >= k:
            break
        s = allowed[int(i * step) % len(allowed)]
        if s not in chosen:
            chosen.append(s)
    return chosen


def _single_infinity(page: Page) -> InfinityReport:
    dims = {c: page.dim(c) for c in page.window.cells() if page.determinate(c) and page.dim(c)}
    return InfinityReport(page, [()], True, {(): dims})


# --- reports -----------------------------------------------------------------

def provenance(sc: Scenario) -> list[str]:
    lines = []
    for a in sc.assumptions:
        target = "all differentials" if a.get("generator") == "*" else f"d_r({a['generator']}) = {a.get('value', '0')}"
        page = a.get("page", "all")
        lines.append(f"[{a['tag']}] {target} (pages: {page}): {a.get('note', '')}".rstrip(": "))
    if sc.collapse:
        lines.append("[flag] collapse: E_2 = E_infinity")
    if sc.no_p_torsion:
        lines.append("[flag] no p-torsion: the abutment is finite, so the periodic columns must die")
    return lines


def result_to_dict(res: RunResult) -> dict:
    sc = res.scenario
    out = {
        "scenario": sc.name,
        "p": sc.p,
        "window": [sc.window.n_max, sc.window.m_max],
        "anchors": res.anchors,
        "e2": res.e2.to_dict(),
        "e2_presentation": {"text": res.e2_presentation.ring.to_text(), "certified": res.e2_presentation.certified},
        "stable": res.stable.to_dict(),
        "stable_generators": [[g.name, g.cell[0], g.cell[1]] for g in res.stable_generators],
        "periodicity": res.periodicity,
        "differentials": res.family.to_dict() if res.family is not None else None,
        "einf": res.einf.page.to_dict(),
        "einf_samples": [list(s) for s in res.einf.samples],
        "einf_independent": res.einf.independent,
        "einf_free": res.einf_check.report(),
        "final_ring": {"text": res.final_ring.to_text() if res.final_ring else None, "source": res.final_source},
        "duality": None if res.duality is None else {
            "polynomial": res.duality.polynomial_degrees, "top": res.duality.top_degree,
            "palindromic": res.duality.palindromic, "series": res.duality.finite_series,
        },
        "layer_check": None if res.layer_check is None else {
            "image": {str(k): v for k, v in res.layer_check["image"].items()},
            "cyclic": res.layer_check["cyclic"], "fixes": res.layer_check["fixes"],
        },
        "notes": res.notes,
        "provenance": provenance(sc),
    }
    if res.periodicity is not None:
        out["periodicity"] = {"period": res.periodicity["period"], "ok": res.periodicity["ok"]}
    return out


def render_text(res: RunResult) -> str:
    sc = res.scenario
    d = result_to_dict(res)
    corner = min(sc.window.n_max, 2 * (sc.p - 1) + 2)
    out = [f"== scenario {sc.name} (p={sc.p}, window n<={sc.window.n_max}, m<={sc.window.m_max})"]
    out.append(f"action anchors: {res.anchors}")
    if res.layer_check is not None:
        lc = d["layer_check"]
        out.append(f"K1/K2 basis check: image {lc['image']}, cyclic={lc['cyclic']}, fixes last={lc['fixes']}")
    out.append("")
    out.append("-- E2 corner")
    out.append(res.e2.to_text(corner).rstrip())
    out.append("")
    out.append(f"-- E2 presentation (certified={res.e2_presentation.certified})")
    out.append(res.e2_presentation.ring.to_text().rstrip())
    for ident in sc.expected.get("e2_identities", []):
        out.append(identity_holds(res.e2, ident)[1])
    out.append("")
    out.append("-- stable page")
    out.append(res.stable.to_text(corner).rstrip())
    out.append("stable generators: " + ", ".join(f"{n} ({a},{b})" for n, a, b in d["stable_generators"]))
    if res.periodicity is not None:
        out.append(f"v-periodicity (period {res.periodicity['period']}): {'ok' if res.periodicity['ok'] else 'FAILS'}")
    out.append("")
    out.append("-- differentials")
    if res.family is not None:
        out.append(res.family.describe())
    elif sc.collapse:
        out.append("collapse assumed: all differentials vanish")
    else:
        out.append("all differentials vanish under the scenario assumptions")
    out.append("")
    out.append(f"-- E_infinity (samples {d['einf_samples']}, independent={res.einf.independent})")
    out.append(res.einf.page.to_text(corner).rstrip())
    out.append(res.einf_check.report())
    out.append("")
    out.append(f"-- cohomology ring ({res.final_source})")
    if res.final_ring is not None:
        out.append(res.final_ring.to_text().rstrip())
    if res.duality is not None:
        du = res.duality
        out.append(f"duality: polynomial part {du.polynomial_degrees}, top degree {du.top_degree}, palindromic={du.palindromic}")
    for n in res.notes:
        out.append(f"note: {n}")
    out.append("")
    out.append("-- provenance")
    out.extend(d["provenance"] or ["(no assumptions consumed)"])
    return "\n".join(out) + "\n"


# --- verification ------------------------------------------------------------

def _same_presentation(computed: RingPresentation, expected: RingPresentation, D: int) -> list[str]:
    diffs = []
    cg = {g.name: (g.degree, g.parity, g.bidegree) for g in computed.generators}
    eg = {g.name: (g.degree, g.parity, g.bidegree) for g in expected.generators}
    if cg != eg:
        diffs.append(f"generators differ: computed {sorted(cg.items())}, expected {sorted(eg.items())}")
        return diffs
    # re-express both relation sets over the same generator order
    target = RingPresentation(computed.generators, [parse_polynomial(expected.render(r), computed) for r in expected.relations],
                              computed.p, (), "expected")
    tc, te = TruncatedRing(computed, D), TruncatedRing(target, D)
    for rel in target.relations:
        if not tc.is_zero(rel):
            diffs.append(f"expected relation {target.render(rel)} does not hold")
    for rel in computed.relations:
        if not te.is_zero(rel):
            diffs.append(f"computed relation {computed.render(rel)} is not implied by the expected ones")
    return diffs


def verify(res: RunResult) -> list[str]:
    """Cell-level differences against the scenario's expected blocks (empty = PASS)."""
    exp = res.scenario.expected
    diffs: list[str] = []
    stable = res.stable
    if "e2_corner" in exp:
        for key, names in exp["e2_corner"].items():
            n, m = (int(x) for x in key.split(","))
            got = res.e2.names((n, m))
            if sorted(got) != sorted(names):
                diffs.append(f"E2 cell ({n},{m}): computed {got}, expected {names}")
    if "e2_presentation" in exp:
        expected = RingPresentation.from_text(exp["e2_presentation"])
        diffs += [f"E2 presentation: {x}" for x in _same_presentation(res.e2_presentation.ring, expected, 8)]
        if not res.e2_presentation.certified:
            diffs.append("E2 presentation: window too small to certify the relations")
    for ident in exp.get("e2_identities", []):
        ok, msg = identity_holds(res.e2, ident)
        if not ok:
            diffs.append(msg)
    if "stable_generators" in exp:
        diffs += _check_stable_generators(stable, exp["stable_generators"])
    if exp.get("stable_free"):
        chk = detect_free_and_lift(stable)
        if not chk.free:
            diffs.append(f"stable page: {chk.report()}")
    if "periodicity" in exp:
        if res.periodicity is None or not res.periodicity["ok"] or res.periodicity["period"] != exp["periodicity"]:
            diffs.append(f"v-periodicity with period {exp['periodicity']} fails")
    if "differentials" in exp:
        fam = res.family
        want = exp["differentials"]
        if fam is None:
            diffs.append("no differential family was computed")
        else:
            if fam.constraint != want["constraint"]:
                diffs.append(f"family constraint: computed {fam.constraint!r}, expected {want['constraint']!r}")
            for g, val in want.get("d2", {}).items():
                if fam.generator_values.get(g) != val:
                    diffs.append(f"d2({g}): computed {fam.generator_values.get(g)!r}, expected {val!r}")
    if "einf_generators" in exp:
        if not res.einf.independent:
            diffs.append("E_infinity depends on the sample")
        if not res.einf_check.free:
            diffs.append(f"E_infinity: {res.einf_check.report()}")
        got = sorted([g.name, g.cell[0], g.cell[1]] for g in res.einf_check.generators)
        want = sorted(list(x) for x in exp["einf_generators"])
        if got != want:
            diffs.append(f"E_infinity generators: computed {got}, expected {want}")
    if "final_ring" in exp:
        target = RingPresentation.from_text(exp["final_ring"])
        D = int(exp.get("final_ring_degree", 8))
        if res.final_ring is None:
            diffs.append(f"no cohomology ring: {res.final_source}")
        else:
            cmp = truncated_equal(res.final_ring, target, D)
            if cmp.verdict != ISOMORPHIC:
                diffs.append(f"cohomology ring vs target: {cmp.verdict} to degree {D} "
                             f"(series {cmp.series_a} vs {cmp.series_b})")
    if "duality" in exp:
        want = exp["duality"]
        du = res.duality
        if du is None:
            diffs.append("duality check not applicable")
        elif (du.polynomial_degrees, du.top_degree, du.palindromic) != (want["polynomial"], want["top"], want["palindromic"]):
            diffs.append(f"duality: computed {du.polynomial_degrees}, top {du.top_degree}, palindromic={du.palindromic}; "
                         f"expected {want['polynomial']}, top {want['top']}, palindromic={want['palindromic']}")
    return diffs


def _check_stable_generators(stable: Page, expected: list) -> list[str]:
    """Each listed class is a nonzero stable class at its bidegree, and together they generate."""
    diffs = []
    gens = []
    amb = stable.ambient
    for expr, n, m in expected:
        try:
            c, vec = evaluate_expression(amb, expr)
        except (KeyError, ValueError) as exc:
            diffs.append(f"stable generator {expr}: cannot evaluate ({exc})")
            continue
        if c != (n, m):
            diffs.append(f"stable generator {expr}: lives in {c}, expected ({n},{m})")
            continue
        if not stable.contains_class(c, vec) or not stable.coords(c, vec).any():
            diffs.append(f"stable generator {expr}: not a nonzero stable class in ({n},{m})")
            continue
        gens.append(PageGenerator(expr, c, vec))
    if diffs:
        return diffs
    # generation, by induction on total degree: each cell is spanned by the
    # listed classes in it together with products of lower classes
    for c in stable.window.cells():
        if not stable.determinate(c) or stable.dim(c) == 0 or c == (0, 0):
            continue
        span = decomposables(stable, c) + Subspace([g.vector for g in gens if g.cell == c],
                                                   stable.Z[c].ambient_dim, stable.p)
        got = stable.quotient(c).sub.dim
        got = span.dim - got
        if got < stable.dim(c):
            diffs.append(f"stable cell {c}: the listed classes generate {got} of {stable.dim(c)} dimensions")
            break
    return diffs


# --- commands ----------------------------------------------------------------

def jordan_table(p: int, k: int, n_max: int = 6) -> list[int]:
    check_odd_prime(p)
    if not 1 <= k <= p:
        raise ValueError(f"block size must satisfy 1 <= k <= p, got k={k}")
    mod = jordan_block(k, p)
    return [cohomology_dim(mod, n) for n in range(n_max + 1)]


def cmd_jordan_table(args) -> int:
    dims = jordan_table(args.p, args.k)
    print(f"H^n(Z/{args.p}; J^{args.k}), n = 0..{len(dims) - 1}: " + ",".join(str(x) for x in dims))
    return EXIT_OK


def cmd_dump_e2(args) -> int:
    sc = load_scenario(args.scenario, args.p, args.window)
    page = assemble_e2(sc.algebra(), sc.window, sc.naming)
    if args.format == "json":
        print(page.to_json())
    else:
        print(page.to_text(min(sc.window.n_max, 2 * (sc.p - 1) + 2)), end="")
    return EXIT_OK


def cmd_stable(args) -> int:
    sc = load_scenario(args.scenario, args.p, args.window)
    page = assemble_e2(sc.algebra(), sc.window, sc.naming)
    stable = stable_page(page, [page_endomorphism(g, sc.extension) for g in sc.fusion])
    gens = algebra_generators(stable)
    if args.format == "json":
        doc = stable.to_dict()
        doc["generators"] = [[g.name, g.cell[0], g.cell[1]] for g in gens]
        print(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False))
    else:
        print(stable.to_text(), end="")
        print("generators: " + ", ".join(f"{g.name} {g.cell}" for g in gens))
    return EXIT_OK


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario, args.p, args.window)
    res = run_scenario(sc)
    if args.format == "json":
        doc = result_to_dict(res)
        if args.verify:
            doc["verify"] = verify(res)
        print(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False))
        return EXIT_FAIL if args.verify and doc["verify"] else EXIT_OK
    print(render_text(res), end="")
    if args.verify:
        diffs = verify(res)
        print()
        print("-- verification")
        if not sc.expected:
            print("no expected outputs in this scenario")
        for line in diffs:
            print(f"MISMATCH {line}")
        print("FAIL" if diffs else "PASS")
        return EXIT_FAIL if diffs else EXIT_OK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="procoh", description="Mod-p cohomology of Z/p-extensions of uniform pro-p groups.")
    ap.add_argument("--version", action="version", version=f"procoh {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    jt = sub.add_parser("jordan-table", help="dims of H^n(Z/p; J^k) for n = 0..6")
    jt.add_argument("--p", type=int, required=True)
    jt.add_argument("--k", type=int, required=True)
    jt.set_defaults(func=cmd_jordan_table)
    for name, func, helptext in (("e2", cmd_dump_e2, "dump the E2 corner"),
                                 ("stable", cmd_stable, "dump the fusion-stable page"),
                                 ("run", cmd_run, "full pipeline report")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("scenario_pos", nargs="?", metavar="SCENARIO")
        sp.add_argument("--scenario", help="built-in name (gl2, extraspecial3) or JSON file")
        sp.add_argument("--p", type=int, default=None, help="prime for the gl2 built-in")
        sp.add_argument("--window", type=int, default=None, help="override the column bound N_max")
        sp.add_argument("--format", choices=("text", "json"), default="text")
        if name == "run":
            sp.add_argument("--verify", action="store_true", help="compare against expected outputs")
        sp.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "scenario", None) is None and hasattr(args, "scenario_pos"):
        args.scenario = args.scenario_pos
        if args.scenario is None:
            ap.error("a scenario is required")
    try:
        return args.func(args)
    except (ScenarioError, WindowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BudgetExceeded, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
