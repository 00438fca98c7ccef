"""Run configuration, experiment driver and report files (CSV and SVG)."""
from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import DEFAULT_QUAD_ORDER, ConditionC1Error, RefractionField
from .mesh import Domain
from .multigrid import LevelState, MultigridConfig, MultigridError, run_multigrid

__all__ = [
    "ConfigError", "RunConfig", "ReportBundle", "parse_config", "parse_config_text",
    "run_experiment", "build_bundle", "convergence_order", "emit_outputs", "fmt",
    "EIGEN_HEADER", "ERROR_HEADER", "ORDER_HEADER", "DIAG_HEADER",
]

log = logging.getLogger(__name__)

EIGEN_HEADER = ["level", "h", "j", "k_re", "k_im", "residual", "seconds"]
ERROR_HEADER = ["h", "j", "abs_error"]
ORDER_HEADER = ["j", "slope"]
DIAG_HEADER = ["level", "min_diagonal", "max_off_diagonal", "violated"]
FIT_POINTS = 3


class ConfigError(ValueError):
    """Invalid run configuration."""


def fmt(x: float) -> str:
    """10 significant digits, fixed for every number written to disk."""
    x = float(x)
    if x == 0.0:
        return "0"
    return f"{x:.10g}"


@dataclass(frozen=True)
class RunConfig:
    domain: Domain = Domain.UNIT_SQUARE
    refraction: RefractionField = field(default_factory=lambda: RefractionField(16.0))
    coarse_divisions: int = 8
    levels: int = 4
    q: int = 1
    shift: complex = 2.0
    quad_order: int = DEFAULT_QUAD_ORDER
    tol: float = 1e-10
    krylov_dim: int | None = None
    max_restarts: int = 50
    seed: int = 0
    out: Path | None = None
    reference: tuple[complex, ...] | None = None

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if self.q < 1:
            raise ConfigError(f"q must be >= 1, got {self.q}")
        if self.coarse_divisions < 1:
            raise ConfigError(f"coarse_div must be >= 1, got {self.coarse_divisions}")
        if not 1 <= self.quad_order <= 10:
            raise ConfigError(f"quad_order must lie in [1, 10], got {self.quad_order}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        try:
            self.refraction.check_c1(self.domain)
        except ConditionC1Error as exc:
            raise ConfigError(str(exc)) from exc

    def multigrid(self) -> MultigridConfig:
        return MultigridConfig(
            domain=self.domain, refraction=self.refraction,
            coarse_divisions=self.coarse_divisions, levels=self.levels, q=self.q,
            shift=self.shift, quad_order=self.quad_order, tol=self.tol,
            krylov_dim=self.krylov_dim, max_restarts=self.max_restarts, seed=self.seed)


# ---------------------------------------------------------------- parsing

_KEY = re.compile(r"([A-Za-z_][A-Za-z0-9_\-]*)\s*=")

_ALIASES = {
    "domain": "domain", "n": "n", "coarse_div": "coarse_div",
    "coarse_divisions": "coarse_div", "levels": "levels", "N": "levels",
    "q": "q", "shift": "shift", "shift_re": "shift_re", "shift_im": "shift_im",
    "quad_order": "quad_order", "tol": "tol", "krylov_dim": "krylov_dim",
    "max_restarts": "max_restarts", "seed": "seed", "out": "out",
    "reference": "reference",
}


def _split_pairs(text: str) -> dict[str, str]:
    """``key=value`` pairs separated by newlines or whitespace; ``#`` starts a comment."""
    body = "\n".join(line.split("#", 1)[0] for line in text.splitlines())
    matches = list(_KEY.finditer(body))
    if not matches and body.strip():
        raise ConfigError(f"cannot parse config: {body.strip()[:40]!r}")
    if matches and body[:matches[0].start()].strip():
        raise ConfigError(f"stray text before first key: {body[:matches[0].start()].strip()!r}")
    out: dict[str, str] = {}
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(body)
        key = m.group(1).replace("-", "_")
        if key not in _ALIASES:
            raise ConfigError(f"unknown key {m.group(1)!r}")
        key = _ALIASES[key]
        if key in out:
            raise ConfigError(f"duplicate key {key!r}")
        out[key] = body[m.end():end].strip()
    return out


def _refraction(value: str) -> RefractionField:
    parts = value.replace(",", " ").split()
    try:
        if parts and parts[0].lower() == "affine":
            if len(parts) != 4:
                raise ConfigError(f"'n = affine a b1 b2' needs three numbers, got {value!r}")
            return RefractionField.affine(*(float(p) for p in parts[1:]))
        if len(parts) != 1:
            raise ConfigError(f"n must be a constant or 'affine a b1 b2', got {value!r}")
        return RefractionField.constant(float(parts[0]))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad refraction index {value!r}") from exc


def _complex(value: str) -> complex:
    return complex(value.replace(" ", "").replace("i", "j"))


def _build(values: dict) -> RunConfig:
    kw: dict = {}
    try:
        if "domain" in values:
            kw["domain"] = Domain.parse(str(values["domain"]))
        if "n" in values:
            n = values["n"]
            kw["refraction"] = n if isinstance(n, RefractionField) else _refraction(str(n))
        for key, name in (("coarse_div", "coarse_divisions"), ("levels", "levels"),
                          ("q", "q"), ("quad_order", "quad_order"),
                          ("krylov_dim", "krylov_dim"), ("max_restarts", "max_restarts"),
                          ("seed", "seed")):
            if key in values:
                kw[name] = int(values[key])
        if "tol" in values:
            kw["tol"] = float(values["tol"])
        shift = _complex(str(values["shift"])) if "shift" in values else None
        if "shift_re" in values or "shift_im" in values:
            base = shift if shift is not None else 0j
            re_ = float(values["shift_re"]) if "shift_re" in values else base.real
            im_ = float(values["shift_im"]) if "shift_im" in values else base.imag
            shift = complex(re_, im_)
        if shift is not None:
            kw["shift"] = shift
        if "out" in values:
            kw["out"] = Path(values["out"])
        if "reference" in values:
            ref = values["reference"]
            if isinstance(ref, str):
                ref = [_complex(t) for t in ref.replace(",", " ").split()]
            kw["reference"] = tuple(complex(r) for r in ref)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(**kw)


def parse_config_text(text: str, overrides: dict | None = None) -> RunConfig:
    values: dict = _split_pairs(text)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return _build(values)


def parse_config(path=None, **flags) -> RunConfig:
    """Read a ``key=value`` file (optional) and apply flag overrides.

    Flag names are the file keys (``coarse_div``, ``shift_re``, ...);
    ``None`` flags are ignored.
    """
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    unknown = [k for k in flags if k not in _ALIASES.values()]
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")
    return parse_config_text(text, flags)


# ---------------------------------------------------------------- report

@dataclass
class ReportBundle:
    """Tables written by :func:`emit_outputs`.

    ``eigen`` rows: (level, h, j, k_re, k_im, residual, seconds);
    ``errors`` rows: (h, j, abs_error); ``orders``: {j: slope};
    ``diagnostics`` rows: (level, min_diagonal, max_off_diagonal, violated).
    """

    config: RunConfig | None
    eigen: list[tuple] = field(default_factory=list)
    errors: list[tuple] = field(default_factory=list)
    orders: dict[int, float] = field(default_factory=dict)
    diagnostics: list[tuple] = field(default_factory=list)
    states: list[LevelState] = field(default_factory=list)

    def k_table(self) -> dict[int, list[tuple[float, complex]]]:
        """``{j: [(h, k), ...]}`` in level order."""
        out: dict[int, list] = {}
        for level, h, j, kr, ki, *_ in self.eigen:
            out.setdefault(j, []).append((h, complex(kr, ki)))
        return out


def convergence_order(errors, points: int = FIT_POINTS) -> float:
    """Least-squares slope of ``log e`` against ``log h`` over the ``points``
    smallest ``h``. Needs at least ``points`` entries with ``e > 0``."""
    data = sorted((float(h), float(e)) for h, e in errors if e > 0 and h > 0)
    if len(data) < points:
        raise ValueError(f"need {points} points with positive error, got {len(data)}")
    h, e = np.log(np.array(data[:points])).T
    slope, _ = np.polyfit(h, e, 1)
    return float(slope)


def _rounded(x: float) -> float:
    return float(fmt(x))


def build_bundle(states: list[LevelState], config: RunConfig | None = None,
                 reference=None) -> ReportBundle:
    """Tables from finished level states.

    Errors are recomputed from the 10-digit values that go into
    ``eigenvalues.csv``, so the error table is reproducible from that file.
    Without ``reference`` the finest level is the reference and its own
    (zero) error row is omitted.
    """
    bundle = ReportBundle(config, states=list(states))
    if reference is None and config is not None:
        reference = config.reference
    for s in states:
        k = s.k
        for j in range(s.q):
            bundle.eigen.append((s.level, _rounded(s.h), j + 1, _rounded(k[j].real),
                                 _rounded(k[j].imag), _rounded(s.residuals[j]),
                                 _rounded(s.seconds)))
        if s.biorth is not None:
            bundle.diagnostics.append((s.level, _rounded(s.biorth.min_diagonal),
                                       _rounded(s.biorth.max_off_diagonal),
                                       int(s.biorth.violated)))
    table = bundle.k_table()
    for j, rows in sorted(table.items()):
        if reference is not None:
            if j > len(reference):
                continue
            ref, use = complex(reference[j - 1]), rows
        else:
            if len(rows) < 2:
                continue
            ref, use = rows[-1][1], rows[:-1]
        errs = [(h, _rounded(abs(k - ref))) for h, k in use]
        bundle.errors.extend((h, j, e) for h, e in errs)
        try:
            bundle.orders[j] = convergence_order(errs)
        except ValueError:
            pass
    return bundle


def run_experiment(config: RunConfig, write: bool = True) -> ReportBundle:
    """Run the multigrid scheme and (if ``config.out`` is set) write the report.

    On solver failure the partial report is written before the
    :class:`MultigridError` propagates.
    """
    try:
        states = run_multigrid(config.multigrid())
    except MultigridError as exc:
        if write and config.out is not None:
            emit_outputs(build_bundle(exc.states, config), config.out)
        raise
    bundle = build_bundle(states, config)
    if write and config.out is not None:
        emit_outputs(bundle, config.out)
    return bundle


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) else str(v) for v in row])


def emit_outputs(bundle: ReportBundle, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / name for name in
             ("eigenvalues.csv", "errors.csv", "orders.csv", "diagnostics.csv",
              "errors_loglog.svg")]
    _write_csv(paths[0], EIGEN_HEADER, bundle.eigen)
    _write_csv(paths[1], ERROR_HEADER, bundle.errors)
    _write_csv(paths[2], ORDER_HEADER, sorted(bundle.orders.items()))
    _write_csv(paths[3], DIAG_HEADER, bundle.diagnostics)
    paths[4].write_text(loglog_svg(bundle))
    return paths


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#17becf"]


def loglog_svg(bundle: ReportBundle, width: int = 640, height: int = 480) -> str:
    """Error curves on log10 axes; one polyline per tracked eigenvalue."""
    curves: dict[int, list[tuple[float, float]]] = {}
    for h, j, e in bundle.errors:
        if e > 0:
            curves.setdefault(j, []).append((math.log10(h), math.log10(e)))
    tracked = sorted({row[2] for row in bundle.eigen})
    pts = [p for c in curves.values() for p in c]
    x0, x1 = (min(p[0] for p in pts), max(p[0] for p in pts)) if pts else (-2.0, 0.0)
    y0, y1 = (min(p[1] for p in pts), max(p[1] for p in pts)) if pts else (-8.0, 0.0)
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5
    left, right, top, bottom = 80, 20, 20, 60
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in (x0, x1):
        out.append(f'<text x="{sx(v):.2f}" y="{top + ph + 18}" font-size="11" '
                   f'text-anchor="middle">{fmt(round(v, 3))}</text>')
    for v in (y0, y1):
        out.append(f'<text x="{left - 6}" y="{sy(v) + 4:.2f}" font-size="11" '
                   f'text-anchor="end">{fmt(round(v, 3))}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 15}" font-size="13" '
               f'text-anchor="middle">log₁₀(h)</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.2f}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.2f})">log₁₀(error)</text>')
    for i, j in enumerate(tracked):
        c = sorted(curves.get(j, []))
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in c)
        color = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline data-j="{j}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5" points="{coords}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
