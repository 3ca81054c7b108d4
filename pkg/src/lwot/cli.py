"""Command-line surface: distances, barycenters, phenotypes, validation,
ghosts, root lengths, couplings and SVG rendering from files.

Inputs are dispatched on extension: ``.csv`` atom lists (header
x1,...,xd,y,w), ``.json`` either grid documents (with an ``axes`` field) or
skeleton documents (with a ``limbs`` field). Results are emitted as a single
JSON document {command, inputs, params, result, diagnostics} with fixed field
order and floats at 17 significant digits, so identical runs are
byte-identical. Validation failures exit 1 with {error: {code, detail}};
I/O failures exit 2.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from . import layerwise, phenotypes, skeleton
from .discrete_ot import DEFAULT_PRODUCT_CAP
from .errors import LwotError
from .measures import (
    AtomicMeasure,
    GriddedMeasure,
    from_grid,
    grid_from_obj,
    load_atoms_csv,
    normalize,
)

SUBCOMMANDS = (
    "dist",
    "symdist",
    "bary",
    "symbary",
    "phenotype",
    "skeleton-validate",
    "skeleton-bary",
    "ghost",
    "rootlength",
    "coupling",
    "render",
)


def _fmt(value) -> str:
    """Serialize to JSON with deterministic field order and 17-digit floats."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        out = format(float(value), ".17g")
        return out
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        inner = ",".join(f"{json.dumps(str(k))}:{_fmt(v)}" for k, v in value.items())
        return "{" + inner + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)!r}")


def _emit(doc: dict, out_path) -> None:
    text = _fmt(doc) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _measure_obj(mu: AtomicMeasure) -> dict:
    return {
        "dim": mu.dim,
        "atoms": [[*map(float, xv), yv, wv] for xv, yv, wv in mu.atoms()],
        "total_mass": mu.total_mass,
    }


def _parse_weights(raw, n: int):
    if raw is None:
        lam = np.full(n, 1.0 / n)
        return lam, False
    parts = [float(v) for v in raw.split(",")]
    if len(parts) != n:
        raise LwotError(f"expected {n} weights, got {len(parts)}")
    lam = np.asarray(parts)
    if np.any(lam <= 0):
        raise LwotError("weights must be > 0")
    total = float(lam.sum())
    warned = abs(total - 1.0) > 1e-12
    if warned:
        print(f"warning: weights sum to {total}; normalizing", file=sys.stderr)
    lam = lam / total
    return lam, warned


def _parse_bounds(raw):
    if raw is None:
        return None
    parts = [float(v) for v in raw.split(",")]
    if len(parts) != 2:
        raise LwotError("--bounds expects L,U")
    return parts[0], parts[1]


def _sniff_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _load_atomic(path, n_slabs: int) -> AtomicMeasure:
    """Any input file as an atomic measure (skeletons are discretized)."""
    p = str(path)
    if p.endswith(".csv"):
        return load_atoms_csv(p)
    obj = _sniff_json(p)
    if "axes" in obj:
        return from_grid(grid_from_obj(obj))
    if "limbs" in obj:
        return skeleton.to_atomic(skeleton.skeleton_from_obj(obj), n_slabs)
    raise LwotError(f"{p}: JSON document is neither a grid nor a skeleton")


def _load_skeleton(path, bounds=None) -> skeleton.SkeletalRootMeasure:
    skm = skeleton.load_skeleton_json(path)
    if bounds is not None and skm.bounds is None:
        skm = skm.with_bounds(*bounds)
    return skm


def _load_phenotype_input(path):
    p = str(path)
    if p.endswith(".csv"):
        return load_atoms_csv(p)
    obj = _sniff_json(p)
    if "axes" in obj:
        return grid_from_obj(obj)
    if "limbs" in obj:
        raise LwotError("phenotypes take atom CSVs or grid JSONs")
    raise LwotError(f"{p}: JSON document is neither a grid nor a skeleton")


def _color(key) -> str:
    digest = hashlib.sha256(repr(key).encode()).digest()
    hue = int.from_bytes(digest[:2], "big") % 360
    return f"hsl({hue},70%,42%)"


def render_svg(inputs, width: int, height: int, margin: int) -> str:
    """Draw limbs as polylines and atoms as dots, vertical axis downward."""
    pts = []
    items = []
    for path in inputs:
        p = str(path)
        if p.endswith(".csv"):
            mu = load_atoms_csv(p)
            items.append(("atoms", mu))
            pts.extend((float(x[0]), float(y)) for x, y, _ in mu.atoms())
        else:
            obj = _sniff_json(p)
            if "limbs" not in obj:
                raise LwotError("render takes atom CSVs or skeleton JSONs")
            skm = skeleton.skeleton_from_obj(obj)
            items.append(("skeleton", skm))
            for limb in skm.root.limbs:
                pts.extend((float(px[0]), float(h)) for h, px in zip(limb.heights, limb.points))
    if not pts:
        raise LwotError("nothing to render")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    sx = (width - 2 * margin) / max(x1 - x0, 1e-9)
    sy = (height - 2 * margin) / max(y1 - y0, 1e-9)

    def tx(x):
        return margin + (x - x0) * sx

    def ty(y):  # y grows downward in both the domain and SVG
        return margin + (y - y0) * sy

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    ]
    for kind, item in items:
        if kind == "skeleton":
            for k, limb in enumerate(item.root.limbs):
                key = item.labels[k] if item.labels is not None else k
                coords = " ".join(
                    f"{tx(float(px[0])):.2f},{ty(float(h)):.2f}"
                    for h, px in zip(limb.heights, limb.points)
                )
                parts.append(
                    f'<polyline points="{coords}" fill="none" '
                    f'stroke="{_color(key)}" stroke-width="2"/>'
                )
        else:
            wmax = max(w for _, _, w in item.atoms())
            for x, y, w in item.atoms():
                r = 1.5 + 4.0 * (w / wmax)
                parts.append(
                    f'<circle cx="{tx(float(x[0])):.2f}" cy="{ty(y):.2f}" '
                    f'r="{r:.2f}" fill="{_color("atoms")}" fill-opacity="0.7"/>'
                )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lwot",
        description="layerwise transport distances, barycenters and root phenotypes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, n_inputs="+"):
        p.add_argument("inputs", nargs=n_inputs)
        p.add_argument("--weights", default=None, help="comma-separated positive weights")
        p.add_argument("--slabs", type=int, default=64)
        p.add_argument("--rot-grid", type=int, default=64, dest="rot_grid")
        p.add_argument("--rot-tol", type=float, default=1e-6, dest="rot_tol")
        p.add_argument("--lp-cap", type=int, default=DEFAULT_PRODUCT_CAP, dest="lp_cap")
        p.add_argument("--bounds", default=None, help="L,U density bounds")
        p.add_argument("--out", default=None)
        p.add_argument("--svg", default=None)
        p.add_argument("--width", type=int, default=480)
        p.add_argument("--height", type=int, default=640)
        p.add_argument("--margin", type=int, default=24)
        return p

    common(sub.add_parser("dist", help="layerwise distance between two measures"))
    common(sub.add_parser("symdist", help="rotation-minimized distance (d=2)"))
    common(sub.add_parser("bary", help="layerwise barycenter of measures"))
    common(sub.add_parser("symbary", help="rotation-symmetrized barycenter (d=2)"))
    pheno = sub.add_parser("phenotype", help="evaluate a functional, or its convexity gap")
    pheno.add_argument("name", help="entropy | vmean | vvar | venergy:r | vq:l")
    common(pheno)
    common(sub.add_parser("skeleton-validate", help="classify a skeletal root measure"))
    common(sub.add_parser("skeleton-bary", help="skeletal layerwise barycenter"))
    common(sub.add_parser("ghost", help="ghost limbs of a skeletal family"))
    common(sub.add_parser("rootlength", help="root length, or length bracket for a family"))
    common(sub.add_parser("coupling", help="layerwise coupling between two d=1 measures"))
    common(sub.add_parser("render", help="render limbs/atoms to SVG"))
    return parser


def _run(args) -> dict:
    cmd = args.command
    params: dict = {}
    diagnostics: dict = {}
    bounds = _parse_bounds(args.bounds)

    if cmd == "dist":
        if len(args.inputs) != 2:
            raise LwotError("dist takes exactly two inputs")
        mu = _load_atomic(args.inputs[0], args.slabs)
        nu = _load_atomic(args.inputs[1], args.slabs)
        rep = layerwise.lw_distance(mu, nu)
        params = {"slabs": args.slabs}
        result = {
            "total_sq": rep.total_sq,
            "vertical_sq": rep.vertical_sq,
            "horizontal_sq": rep.horizontal_sq,
            "extended_sq": rep.total_sq + (mu.total_mass - nu.total_mass) ** 2,
            "per_interval": [
                {"l_lo": lo, "l_hi": hi, "cost": c} for (lo, hi), c in rep.per_interval
            ],
        }

    elif cmd == "symdist":
        if len(args.inputs) != 2:
            raise LwotError("symdist takes exactly two inputs")
        mu = _load_atomic(args.inputs[0], args.slabs)
        nu = _load_atomic(args.inputs[1], args.slabs)
        res = layerwise.symmetrized_distance(
            mu, nu, grid_k=args.rot_grid, angle_tol=args.rot_tol
        )
        params = {"rot_grid": args.rot_grid, "rot_tol": args.rot_tol}
        diagnostics = {"probes": len(res.trace)}
        result = {"angle": res.angle, "distance_sq": res.distance_sq}

    elif cmd == "bary":
        measures = [_load_atomic(p, args.slabs) for p in args.inputs]
        lam, warned = _parse_weights(args.weights, len(measures))
        bar = layerwise.lw_barycenter(measures, lam, cap=args.lp_cap)
        params = {"weights": list(lam), "lp_cap": args.lp_cap}
        diagnostics = {"weights_normalized": warned}
        result = {"barycenter": _measure_obj(bar)}

    elif cmd == "symbary":
        measures = [_load_atomic(p, args.slabs) for p in args.inputs]
        lam, warned = _parse_weights(args.weights, len(measures))
        bar, angles = layerwise.symmetrized_barycenter(
            measures, lam, grid_k=args.rot_grid, angle_tol=args.rot_tol, cap=args.lp_cap
        )
        params = {"weights": list(lam), "rot_grid": args.rot_grid, "rot_tol": args.rot_tol}
        diagnostics = {"weights_normalized": warned}
        result = {"barycenter": _measure_obj(bar), "angles": list(angles)}

    elif cmd == "phenotype":
        inputs = [_load_phenotype_input(p) for p in args.inputs]
        if len(inputs) == 1:
            value = _evaluate_phenotype(args.name, inputs[0])
            params = {"functional": args.name}
            result = {"value": value}
        else:
            lam, warned = _parse_weights(args.weights, len(inputs))
            rep = phenotypes.convexity_check(args.name, inputs, lam)
            params = {"functional": args.name, "weights": list(lam)}
            diagnostics = {"weights_normalized": warned}
            result = {
                "value_at_barycenter": rep.value_at_barycenter,
                "mean_of_values": rep.mean_of_values,
                "gap": rep.gap,
            }

    elif cmd == "skeleton-validate":
        if len(args.inputs) != 1:
            raise LwotError("skeleton-validate takes exactly one input")
        skm = _load_skeleton(args.inputs[0], bounds)
        rep = skeleton.validate(skm)
        result = {
            "strength": rep.strength,
            "s1_violations": list(rep.s1_violations),
            "s2_violations": list(rep.s2_violations),
            "w3_violations": list(rep.w3_violations),
            "crossings": [
                {"i": c.i, "j": c.j, "kind": c.kind, "y_lo": c.y_lo, "y_hi": c.y_hi}
                for c in rep.crossings
            ],
        }

    elif cmd == "skeleton-bary":
        skms = [_load_skeleton(p, bounds) for p in args.inputs]
        lam, warned = _parse_weights(args.weights, len(skms))
        bar = skeleton.skeletal_barycenter(skms, lam, n_slabs=args.slabs, cap=args.lp_cap)
        params = {"weights": list(lam), "slabs": args.slabs, "lp_cap": args.lp_cap}
        diagnostics = {"weights_normalized": warned, "n_limbs": bar.root.n_limbs}
        result = {"skeleton": skeleton.skeleton_to_obj(bar)}

    elif cmd == "ghost":
        skms = [_load_skeleton(p, bounds) for p in args.inputs]
        lam, warned = _parse_weights(args.weights, len(skms))
        limbs = skeleton.ghost(skms, lam, cap=args.lp_cap)
        params = {"weights": list(lam), "cap": args.lp_cap}
        diagnostics = {"weights_normalized": warned}
        result = {
            "ghost_limbs": [
                {
                    "tuple": list(gl.indices),
                    "domain": [gl.domain[0], gl.domain[1]],
                    "polyline": [
                        [float(h)] + [float(v) for v in p]
                        for h, p in zip(gl.heights, gl.points)
                    ],
                }
                for gl in limbs
            ]
        }

    elif cmd == "rootlength":
        skms = [_load_skeleton(p, bounds) for p in args.inputs]
        lengths = [skeleton.root_length(s) for s in skms]
        if len(skms) == 1:
            result = {"root_length": lengths[0]}
        else:
            lam, warned = _parse_weights(args.weights, len(skms))
            bracket = skeleton.root_length_bounds(
                skms, lam, None if bounds is None else bounds[0],
                None if bounds is None else bounds[1],
            )
            params = {"weights": list(lam)}
            diagnostics = {"weights_normalized": warned}
            result = {
                "root_lengths": lengths,
                "c0": bracket.c0,
                "c1": bracket.c1,
                "c2": bracket.c2,
                "lower": bracket.lower,
                "upper": bracket.upper,
            }

    elif cmd == "coupling":
        if len(args.inputs) != 2:
            raise LwotError("coupling takes exactly two inputs")
        mu = _load_atomic(args.inputs[0], args.slabs)
        nu = _load_atomic(args.inputs[1], args.slabs)
        cp = layerwise.layerwise_coupling(mu, nu)
        result = {
            "cost": cp.cost,
            "fragments": [
                {"source": [sx, sy], "target": [txv, tyv], "mass": m}
                for (sx, sy), (txv, tyv), m in cp.fragments()
            ],
        }

    elif cmd == "render":
        svg = render_svg(args.inputs, args.width, args.height, args.margin)
        target = args.svg or (args.out and str(args.out) + ".svg")
        if not target:
            raise LwotError("render needs --svg (or --out) for the SVG file")
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(svg)
        params = {"width": args.width, "height": args.height, "margin": args.margin}
        result = {"svg": target}

    else:  # pragma: no cover - argparse guards this
        raise LwotError(f"unknown command {cmd}")

    return {
        "command": cmd,
        "inputs": [str(p) for p in args.inputs],
        "params": params,
        "result": result,
        "diagnostics": diagnostics,
    }


def _evaluate_phenotype(name: str, measure):
    kind, param = phenotypes._parse_functional(name)
    if kind == "entropy":
        if not isinstance(measure, GriddedMeasure):
            raise LwotError("entropy requires a grid input")
        rep = phenotypes.shannon_entropy(measure)
        return rep.total
    if kind == "venergy":
        if not isinstance(measure, GriddedMeasure):
            raise LwotError("venergy requires a grid input")
        return phenotypes.vertical_internal_energy(measure, param)
    mu = normalize(from_grid(measure) if isinstance(measure, GriddedMeasure) else measure)
    if kind == "vmean":
        return phenotypes.vertical_mean(mu)
    if kind == "vvar":
        return phenotypes.vertical_variance(mu)
    return phenotypes.vertical_quantile(mu, param)


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        doc = _run(args)
    except LwotError as exc:
        _emit({"error": {"code": type(exc).__name__, "detail": str(exc)}}, getattr(args, "out", None))
        return 1
    except (ValueError, KeyError) as exc:
        _emit({"error": {"code": "Validation", "detail": str(exc)}}, getattr(args, "out", None))
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    try:
        _emit(doc, args.out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
