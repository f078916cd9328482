"""Experiment configuration: a flat ``key = value`` file with sections.

The format is plain configparser syntax with no interpolation; floats are
serialized with ``repr`` so that ``parse(serialize(cfg)) == cfg`` holds
exactly. Two named profiles ship with the package: ``"paper"`` is the
full-scale experiment (256 grid, 120 angles at 3 degrees, 363 radii, cosine
motion of amplitude 0.05 and frequency 10, 3% noise, base line -1/2, 6 outer
iterations with up to 100 inner iterations) and ``"desk"`` is a scaled-down
variant (128 grid, 60 angles at 6 degrees, 181 radii) that keeps full runs
under a few minutes.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Ellipse, default_phantom_shapes, make_grid, make_phantom, make_scan
from .motion import MotionParams
from .varpro import GNConfig

__all__ = ["ExperimentConfig", "profile_config", "parse_config", "load_config"]

_VARIANT_LABELS = {"lsqr": "GN-LSQR", "wgcv": "GN-HyBR", "optimal": "GN-HyBR-opt"}


@dataclass(frozen=True)
class ExperimentConfig:
    # grid
    n_side: int = 256
    extent: float = 0.5
    # scan
    n_angles: int = 120
    start_deg: float = 0.0
    step_deg: float = 3.0
    n_radii: int = 363
    r_max: float = 2.0
    # projection quadrature
    oversample: int = 4
    # phantom
    phantom_kind: str = "default"  # "default" or "ellipses"
    phantom_shapes: tuple = ()
    # motion truth
    motion_kind: str = "cosine"  # "cosine", "explicit" or "zero"
    motion_amplitude: float = 0.05
    motion_frequency: float = 10.0
    motion_values: tuple = ()
    baseline_c: float = -0.5
    # noise
    noise_level: float = 0.03
    seed: int = 1729
    # outer loop
    gn: GNConfig = GNConfig()
    variants: tuple = ("lsqr", "wgcv", "optimal")
    # output
    out_dir: str = "out"
    cache_path: str = ""

    # -- derived objects ----------------------------------------------------

    def grid(self):
        return make_grid(self.n_side, self.extent)

    def scan(self):
        return make_scan(
            self.n_angles, self.start_deg, self.step_deg, self.n_radii, self.r_max
        )

    def phantom(self):
        if self.phantom_kind == "default":
            shapes = default_phantom_shapes()
        elif self.phantom_kind == "ellipses":
            shapes = list(self.phantom_shapes)
        else:
            raise ValueError(f"unknown phantom kind {self.phantom_kind!r}")
        return make_phantom(self.grid(), shapes)

    def gamma_true(self):
        if self.motion_kind == "zero":
            return np.zeros(self.n_angles)
        if self.motion_kind == "cosine":
            return self.motion_amplitude * np.cos(
                self.motion_frequency * self.scan().angles
            )
        if self.motion_kind == "explicit":
            values = np.asarray(self.motion_values, dtype=np.float64)
            if len(values) != self.n_angles:
                raise ValueError(
                    f"explicit motion needs {self.n_angles} values, got {len(values)}"
                )
            return values
        raise ValueError(f"unknown motion kind {self.motion_kind!r}")

    def motion_true(self):
        return MotionParams(self.gamma_true(), self.baseline_c)

    def variant_labels(self):
        return [_VARIANT_LABELS[v] for v in self.variants]

    # -- serialization ------------------------------------------------------

    def serialize(self):
        def num(v):
            return repr(float(v))

        shapes = "; ".join(
            " ".join(num(x) for x in (s.cx, s.cy, s.rx, s.ry, s.value))
            for s in self.phantom_shapes
        )
        values = ",".join(num(v) for v in self.motion_values)
        gn = self.gn
        return (
            "[grid]\n"
            f"n_side = {self.n_side}\n"
            f"extent = {num(self.extent)}\n"
            "\n[scan]\n"
            f"n_angles = {self.n_angles}\n"
            f"start_deg = {num(self.start_deg)}\n"
            f"step_deg = {num(self.step_deg)}\n"
            f"n_radii = {self.n_radii}\n"
            f"r_max = {num(self.r_max)}\n"
            "\n[radon]\n"
            f"oversample = {self.oversample}\n"
            "\n[phantom]\n"
            f"kind = {self.phantom_kind}\n"
            f"shapes = {shapes}\n"
            "\n[motion]\n"
            f"kind = {self.motion_kind}\n"
            f"amplitude = {num(self.motion_amplitude)}\n"
            f"frequency = {num(self.motion_frequency)}\n"
            f"values = {values}\n"
            f"baseline_c = {num(self.baseline_c)}\n"
            "\n[noise]\n"
            f"level = {num(self.noise_level)}\n"
            f"seed = {self.seed}\n"
            "\n[gn]\n"
            f"max_gn_iters = {gn.max_gn_iters}\n"
            f"inner_solver = {gn.inner_solver}\n"
            f"inner_max_iter = {gn.inner_max_iter}\n"
            f"derivative = {gn.derivative}\n"
            f"fd_step = {num(gn.fd_step)}\n"
            f"line_search = {'true' if gn.line_search else 'false'}\n"
            f"ls_backtrack = {num(gn.ls_backtrack)}\n"
            f"ls_sufficient_decrease = {num(gn.ls_sufficient_decrease)}\n"
            f"ls_max_backtracks = {gn.ls_max_backtracks}\n"
            f"step_degeneracy_tol = {num(gn.step_degeneracy_tol)}\n"
            f"step_rel_tol = {num(gn.step_rel_tol)}\n"
            f"reorth = {'true' if gn.reorth else 'false'}\n"
            f"variants = {','.join(self.variants)}\n"
            "\n[output]\n"
            f"out_dir = {self.out_dir}\n"
            f"cache_path = {self.cache_path}\n"
        )

    def save(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.serialize())


def _get(parser, section, key, conv, known):
    known.discard((section, key))
    return conv(parser.get(section, key))


def _bool(text):
    text = text.strip().lower()
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _shapes(text):
    shapes = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = [float(x) for x in item.split()]
        if len(parts) != 5:
            raise ValueError(f"shape needs 5 numbers (cx cy rx ry value): {item!r}")
        shapes.append(Ellipse(*parts))
    return tuple(shapes)


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _strings(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def parse_config(text):
    """Parse configuration text; unknown sections or keys are rejected."""
    try:
        return _parse_config(text)
    except configparser.Error as exc:
        raise ValueError(str(exc)) from exc


def _parse_config(text):
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_file(io.StringIO(text))
    known = {
        (sec, key)
        for sec in parser.sections()
        for key in parser.options(sec)
    }
    g = _get
    cfg = ExperimentConfig(
        n_side=g(parser, "grid", "n_side", int, known),
        extent=g(parser, "grid", "extent", float, known),
        n_angles=g(parser, "scan", "n_angles", int, known),
        start_deg=g(parser, "scan", "start_deg", float, known),
        step_deg=g(parser, "scan", "step_deg", float, known),
        n_radii=g(parser, "scan", "n_radii", int, known),
        r_max=g(parser, "scan", "r_max", float, known),
        oversample=g(parser, "radon", "oversample", int, known),
        phantom_kind=g(parser, "phantom", "kind", str.strip, known),
        phantom_shapes=g(parser, "phantom", "shapes", _shapes, known),
        motion_kind=g(parser, "motion", "kind", str.strip, known),
        motion_amplitude=g(parser, "motion", "amplitude", float, known),
        motion_frequency=g(parser, "motion", "frequency", float, known),
        motion_values=g(parser, "motion", "values", _floats, known),
        baseline_c=g(parser, "motion", "baseline_c", float, known),
        noise_level=g(parser, "noise", "level", float, known),
        seed=g(parser, "noise", "seed", int, known),
        gn=GNConfig(
            max_gn_iters=g(parser, "gn", "max_gn_iters", int, known),
            inner_solver=g(parser, "gn", "inner_solver", str.strip, known),
            inner_max_iter=g(parser, "gn", "inner_max_iter", int, known),
            derivative=g(parser, "gn", "derivative", str.strip, known),
            fd_step=g(parser, "gn", "fd_step", float, known),
            line_search=g(parser, "gn", "line_search", _bool, known),
            ls_backtrack=g(parser, "gn", "ls_backtrack", float, known),
            ls_sufficient_decrease=g(
                parser, "gn", "ls_sufficient_decrease", float, known
            ),
            ls_max_backtracks=g(parser, "gn", "ls_max_backtracks", int, known),
            step_degeneracy_tol=g(parser, "gn", "step_degeneracy_tol", float, known),
            step_rel_tol=g(parser, "gn", "step_rel_tol", float, known),
            reorth=g(parser, "gn", "reorth", _bool, known),
        ),
        variants=g(parser, "gn", "variants", _strings, known),
        out_dir=g(parser, "output", "out_dir", str.strip, known),
        cache_path=g(parser, "output", "cache_path", str.strip, known),
    )
    if known:
        raise ValueError(f"unknown configuration keys: {sorted(known)}")
    for v in cfg.variants:
        if v not in _VARIANT_LABELS:
            raise ValueError(f"unknown variant {v!r}")
    return cfg


def load_config(path):
    with open(path, "r", encoding="ascii") as fh:
        return parse_config(fh.read())


def profile_config(name):
    """Named default configurations: the full-scale ``"paper"`` profile or the
    scaled-down ``"desk"`` profile."""
    if name == "paper":
        return ExperimentConfig()
    if name == "desk":
        return replace(
            ExperimentConfig(), n_side=128, n_angles=60, step_deg=6.0, n_radii=181
        )
    raise ValueError(f"unknown profile {name!r} (expected 'desk' or 'paper')")
