"""Catalogue of named functionals for config-driven experiments.

Each entry turns a parameter dict and a grid value ``s`` into a
:class:`Setup`: the functional, the sampling window and the intensity.
"""
from __future__ import annotations

import difflib
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from pvlab import graphs, polytope, shotnoise
from pvlab.malliavin import Functional
from pvlab.process import Ball, Box, InvalidParameterError, Window

__all__ = ["FunctionalEntry", "Param", "REGISTRY", "Setup", "build_setup", "nearest_name"]


@dataclass(frozen=True)
class Setup:
    functional: Functional
    window: Window
    intensity: float


@dataclass(frozen=True)
class Param:
    type: type
    default: Any
    doc: str


@dataclass(frozen=True)
class FunctionalEntry:
    name: str
    tag: str
    description: str
    params: dict[str, Param]
    build: Callable[[dict, float], Setup]

    def schema(self) -> dict:
        return {k: {"type": p.type.__name__, "default": p.default, "doc": p.doc} for k, p in self.params.items()}


def _count(p, s):
    d = p["d"]
    c = p["scale"]
    return Setup(Functional(lambda cfg: c * len(cfg), f"count[d={d},scale={c:g}]"), Box.unit(d), s)


def _parity(p, s):
    return Setup(Functional(lambda cfg: -1.0 if len(cfg) % 2 else 1.0, "parity"), Box.unit(p["d"]), s)


def _rgg(stat):
    def build(p, s):
        params = graphs.RggParams(p["rho"], p["d"], s)
        return Setup(graphs.rgg_functional(stat, p["j"], params), Box.unit(p["d"]), s)
    return build


def _knn_length(p, s):
    return Setup(graphs.knn_edge_length_functional(p["k"], p["q"], s, p["d"]), Box.unit(p["d"]), s)


def _knn_degree(p, s):
    return Setup(graphs.knn_degree_functional(p["k"], p["j"]), Box.unit(p["d"]), s)


def _polytope(p, s):
    F = polytope.polytope_functional(p["p"], s, p["d"], p["scaled"], p["include_origin"])
    return Setup(F, Ball.centered(p["d"], 1.0), s)


def _shotnoise(p, s):
    kernel = shotnoise.kernel_from_json(p["kernel"])
    if kernel.kind == "compact-support":
        r_cut = kernel.support_radius
    else:
        r_cut = shotnoise.truncation_radius(kernel, p["c3_factor"] * p["level"], 0.0, p["exceedance"])
    spec = shotnoise.ExcursionSpec(p["level"], s, p["n_nodes"], r_cut)
    F = shotnoise.shotnoise_functional(kernel, spec)
    return Setup(F, F.window, F.intensity)


def _entry(name, tag, description, build, **params):
    return FunctionalEntry(name, tag, description, {k: Param(*v) for k, v in params.items()}, build)


REGISTRY: dict[str, FunctionalEntry] = {e.name: e for e in [
    _entry("count", "basic", "scale * number of points in the unit cube (variance scale^2 * s)", _count,
           d=(int, 2, "dimension"), scale=(float, 1.0, "multiplier")),
    _entry("parity", "basic", "(-1)^|eta| on the unit cube", _parity, d=(int, 2, "dimension")),
    _entry("rgg-degree", "random-geometric-graph", "V_j: vertices of degree j, radius rho s^(-1/d)", _rgg("degree"),
           j=(int, 0, "degree"), rho=(float, 1.0, "radius scale"), d=(int, 2, "dimension")),
    _entry("rgg-component", "random-geometric-graph", "C_j: components with j vertices, radius rho s^(-1/d)",
           _rgg("component"), j=(int, 1, "component size"), rho=(float, 1.0, "radius scale"),
           d=(int, 2, "dimension")),
    _entry("knn-edge-length", "knn-graph", "F_q = s^(q/d) * sum of |e|^q over kNN edges", _knn_length,
           k=(int, 1, "neighbours"), q=(float, 1.0, "length exponent"), d=(int, 2, "dimension")),
    _entry("knn-degree", "knn-graph", "V_j^k: vertices of degree j in the kNN graph", _knn_degree,
           k=(int, 1, "neighbours"), j=(int, 1, "degree"), d=(int, 2, "dimension")),
    _entry("polytope-area", "random-polytope", "A_p of the hull of a sample in the unit ball", _polytope,
           p=(float, 1.0, "exponent in [0, 1]"), d=(int, 2, "dimension (2 or 3)"),
           scaled=(bool, True, "multiply by s"), include_origin=(bool, False, "add the origin to the hull")),
    _entry("shotnoise-excursion", "shot-noise", "F_s: excursion volume of a shot-noise field in B(0, s)",
           _shotnoise, kernel=(dict, {"kind": "compact-support", "d": 2, "amplitude": 1.0, "radius": 1.0},
                               "kernel config {kind, d, params...}"),
           level=(float, 0.5, "threshold u"), n_nodes=(int, 4096, "quadrature nodes"),
           c3_factor=(float, 0.1, "c3 = c3_factor * u for the truncation bound"),
           exceedance=(float, 1e-3, "truncation exceedance tolerance")),
]}


def nearest_name(name: str, choices) -> str | None:
    hits = difflib.get_close_matches(name, list(choices), n=1, cutoff=0.0)
    return hits[0] if hits else None


def resolve_params(entry: FunctionalEntry, given: dict) -> dict:
    """Merge ``given`` over the defaults, rejecting unknown keys and bad types."""
    out = {}
    for key in given:
        if key not in entry.params:
            hint = nearest_name(key, entry.params)
            raise InvalidParameterError(f"unknown parameter {key!r} for {entry.name!r}"
                                        + (f" (did you mean {hint!r}?)" if hint else ""))
    for key, spec in entry.params.items():
        val = given.get(key, spec.default)
        if spec.type is float and isinstance(val, (int, float)) and not isinstance(val, bool):
            val = float(val)
        elif spec.type is int and isinstance(val, (int, np.integer)) and not isinstance(val, bool):
            val = int(val)
        if not isinstance(val, spec.type):
            raise InvalidParameterError(f"parameter {key!r} of {entry.name!r} must be {spec.type.__name__}")
        out[key] = val
    return out


def build_setup(name: str, params: dict, s: float) -> Setup:
    if name not in REGISTRY:
        hint = nearest_name(name, REGISTRY)
        raise InvalidParameterError(f"unknown functional {name!r}" + (f" (nearest match: {hint!r})" if hint else ""))
    entry = REGISTRY[name]
    return entry.build(resolve_params(entry, params), s)
