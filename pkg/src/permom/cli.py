"""``permom`` command line.

Every command writes ``<command>.csv`` and ``<command>.manifest.json``
into ``--out`` (default: the current directory) and echoes the table to
stdout (CSV, or JSON records with ``--json``). ``permom replay`` re-runs a
manifest and checks that the CSV digests match.

Exit codes: 0 success, 1 internal check failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, _accel
from .errors import PermomError, ValidationError

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- config schemas ---------------------------------------------------------------------

_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_QUBITS = {"type": "array", "items": {"type": "integer", "minimum": 0}}

SCHEMAS = {
    "estimate": {
        "type": "object",
        "required": ["state", "protocol"],
        "additionalProperties": False,
        "properties": {
            "state": {"type": "string"},
            "protocol": {"enum": ["global_shadow", "local_shadow", "global_rm", "local_rm", "hybrid"]},
            "perm": {"type": "string"},
            "n": _POS,
            "N_U": _POS,
            "N_M": _POS,
            "M": _POS,
            "repetitions": _POS,
            "mode": {"enum": ["global", "local"]},
            "seed": _INT,
        },
    },
    "bench": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "qubits": {"type": "array", "items": {"type": "integer", "minimum": 2, "maximum": 10}, "minItems": 1},
            "protocols": {"type": "array", "items": {"enum": ["global_shadow", "local_shadow", "global_rm", "local_rm"]}},
            "n": _POS,
            "N_U": _POS,
            "N_M": _POS,
            "M": _POS,
            "repetitions": {"type": "integer", "minimum": 2},
            "seed": _INT,
        },
    },
    "dynamics": {
        "type": "object",
        "required": ["hamiltonian", "partition"],
        "additionalProperties": False,
        "properties": {
            "hamiltonian": {
                "type": "object",
                "required": ["kind", "N"],
                "properties": {"kind": {"enum": ["xy", "ising_mbl", "qimf"]}, "N": {"type": "integer", "minimum": 2},
                               "boundary": {"enum": ["open", "periodic"]}},
            },
            "partition": {
                "type": "object",
                "required": ["A", "B"],
                "additionalProperties": False,
                "properties": {"A": _QUBITS, "B": _QUBITS, "C": _QUBITS},
            },
            "times": {
                "oneOf": [
                    {"type": "array", "items": _NUM, "minItems": 1},
                    {"type": "object", "additionalProperties": False,
                     "properties": {"t_min": _NUM, "t_max": _NUM, "points": _POS}},
                ]
            },
            "criteria": {"type": "array", "items": {"enum": ["e4_ccnr", "e4_star", "p2", "p3"]}},
            "seed": _INT,
        },
    },
    "eigenscan": {
        "type": "object",
        "required": ["kind"],
        "additionalProperties": False,
        "properties": {
            "kind": {"enum": ["mbl_scaling", "eth_rainbow"]},
            "N": {"type": "integer", "minimum": 2},
            "W": {"type": "array", "items": _NUM},
            "realizations": _POS,
            "A_sizes": {"type": "array", "items": _POS},
            "A": _QUBITS,
            "B": _QUBITS,
            "params": {"type": "object"},
            "boundary": {"enum": ["open", "periodic"]},
            "seed": _INT,
        },
    },
}


def validate_config(command: str, config) -> None:
    """Raise :class:`UsageError` naming the JSON pointer of the first violation."""
    errors = sorted(jsonschema.Draft7Validator(SCHEMAS[command]).iter_errors(config),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        pointer = "/" + "/".join(str(p) for p in e.absolute_path)
        raise UsageError(f"config {pointer}: {e.message}")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None


# --- formatting -------------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(_jsonable(v), sort_keys=True, separators=(",", ":"))
    return "" if v is None else str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return None if math.isnan(f) else f
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# --- commands: each returns (columns, rows, extra manifest fields, exit code) ----------------


def _state(spec: str):
    from .states import make_state
    from .tensor_core import load_state

    if os.path.isfile(spec):
        return load_state(spec)
    return make_state(spec)


def run_criteria(cfg: dict):
    from .criteria import CRITERIA, evaluate
    from .tensor_core import IndexPermutation

    names = cfg["criteria"] or ["e4_ccnr", "e4_star", "p2", "p3"]
    bad = [n for n in names if n not in CRITERIA]
    if bad:
        raise UsageError(f"unknown criterion {bad[0]!r}; choose from {', '.join(CRITERIA)}")
    rho = _state(cfg["state"])
    perm = IndexPermutation.parse(cfg["perm"]) if cfg.get("perm") else None
    if "e2n_multi" in names and perm is None:
        raise UsageError("e2n_multi needs --perm")
    rows = []
    for name in names:
        res = evaluate(name, rho, perm=perm, n_max=cfg["n_max"])
        rows.append({"state": cfg["state"], "criterion": name, "indicator": res.indicator,
                     "detected": res.detected, "raw": res.raw})
    return ["state", "criterion", "indicator", "detected", "raw"], rows, {}, EXIT_OK


def run_moments(cfg: dict):
    from .moments import moment_via_observable, moments_direct
    from .tensor_core import IndexPermutation

    rho = _state(cfg["state"])
    try:
        perm = IndexPermutation.parse(cfg["perm"])
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    direct = moments_direct(rho, perm, cfg["n_max"]).moments
    rows, code = [], EXIT_OK
    for n, m in enumerate(direct, start=1):
        row = {"n": n, "M_2n_direct": m}
        if cfg["cross_check"]:
            obs = moment_via_observable(rho, perm, n)
            row["M_2n_observable"], row["abs_diff"] = obs, abs(obs - m)
            if abs(obs - m) > 1e-8:
                code = EXIT_CHECK
        rows.append(row)
    return ["n", "M_2n_direct", "M_2n_observable", "abs_diff"], rows, {}, code


def run_estimate(cfg: dict):
    from . import estimation as est
    from .moments import moment_direct
    from .tensor_core import IndexPermutation, permute_indices

    c = cfg["config"]
    rho = _state(c["state"])
    proto = c["protocol"]
    n = c.get("n", 2)
    N_U, N_M = c.get("N_U", 4), c.get("N_M", 5)
    M = c.get("M", 2 * n * N_U * N_M)
    reps = c.get("repetitions", 1)
    seed = c.get("seed", cfg["seed"])
    if proto == "hybrid":
        perm = IndexPermutation.realignment(3, 0, 1)
        n = 2
    else:
        perm = IndexPermutation.parse(c["perm"]) if c.get("perm") else IndexPermutation.realignment(rho.structure.k)
    exact = moment_direct(permute_indices(rho, perm), n)
    rows = []
    for rep in range(reps):
        s = est.derive_seed(seed, rep)
        if proto == "hybrid":
            val = est.hybrid_estimator(rho, N_U, N_M, s, c.get("mode", "global"))
        elif proto.endswith("shadow"):
            sampler = est.sample_global_shadow if proto == "global_shadow" else est.sample_local_shadow
            val = est.shadow_moment_estimator(sampler(rho, M, s), perm, n)
        else:
            if rho.structure.k != 2 or str(perm) != str(IndexPermutation.realignment(2)):
                raise UsageError("randomized measurements estimate the bipartite realignment only")
            val = est.rm_moment_estimator(
                est.randomized_measurement_run(rho, n, N_U, N_M, proto.split("_")[0], s))
        rows.append({"protocol": proto, "rep": rep, "estimate": val, "exact": exact})
    vals = np.array([r["estimate"] for r in rows])
    extra = {"mean": float(vals.mean()), "exact": exact,
             "stderr": float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else None}
    return ["protocol", "rep", "estimate", "exact"], rows, extra, EXIT_OK


def run_bench(cfg: dict):
    from .estimation import CSV_COLUMNS, variance_benchmark

    c = dict(cfg["config"])
    c.setdefault("seed", cfg["seed"])
    reports = variance_benchmark(c)
    rows = [{"protocol": r.protocol, "N": r.N, "N_U": r.N_U, "N_M": r.N_M, "mean": r.mean,
             "variance": r.variance, "true_value": r.true_value, "reps": r.reps} for r in reports]
    return list(CSV_COLUMNS), rows, {}, EXIT_OK


def run_dynamics(cfg: dict):
    from .dynamics import dynamics_scan

    tr = dynamics_scan(cfg["config"])
    rows = [{"t": t, "criterion": c, "indicator": raw, "rescaled": resc} for t, c, raw, resc in tr.rows()]
    extra = {"rescale_factors": tr.factors, "e4_star_only_windows": tr.windows(), "partition": tr.partition}
    return ["t", "criterion", "indicator", "rescaled"], rows, extra, EXIT_OK


def run_eigenscan(cfg: dict):
    from .dynamics import eigenstate_scan, rainbow_contrast

    c = dict(cfg["config"])
    c.setdefault("seed", cfg["seed"])
    c["threads"] = cfg["threads"]
    rows = eigenstate_scan(c)
    if c["kind"] == "eth_rainbow":
        centre, outer = rainbow_contrast(rows)
        return ["index", "E_over_N", "E4"], rows, {"centre_mean_E4": centre, "outer_mean_E4": outer}, EXIT_OK
    return ["series", "W", "A_size", "E4_mean", "E4_sem", "realizations"], rows, {}, EXIT_OK


RUNNERS = {
    "criteria": run_criteria,
    "moments": run_moments,
    "estimate": run_estimate,
    "bench": run_bench,
    "dynamics": run_dynamics,
    "eigenscan": run_eigenscan,
}


# --- plots ------------------------------------------------------------------------


def render_svg(command: str, columns, rows, path: Path) -> None:
    """Static line/scatter plot of the emitted series (needs matplotlib)."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise UsageError("--svg needs matplotlib (pip install permom[plot])") from None
    plt.rcParams["svg.hashsalt"] = "permom"  # stable element ids
    fig, ax = plt.subplots(figsize=(6, 4))
    if command == "dynamics":
        for c in dict.fromkeys(r["criterion"] for r in rows):
            pts = [r for r in rows if r["criterion"] == c]
            ax.plot([r["t"] for r in pts], [r["rescaled"] for r in pts], label=c)
        ax.axhline(0, color="grey", lw=0.5)
        ax.set_xlabel("t (s)")
        ax.set_ylabel("indicator (rescaled)")
        ax.legend()
    elif command == "eigenscan" and "E_over_N" in columns:
        ax.scatter([r["E_over_N"] for r in rows], [r["E4"] for r in rows], s=4)
        ax.set_xlabel("E/N")
        ax.set_ylabel("E4")
    elif command == "eigenscan":
        for s in dict.fromkeys(r["series"] for r in rows):
            pts = [r for r in rows if r["series"] == s]
            ax.errorbar([r["A_size"] for r in pts], [r["E4_mean"] for r in pts],
                        yerr=[r["E4_sem"] for r in pts], marker="o", label=s)
        ax.set_xlabel("|A|")
        ax.set_ylabel("mean E4")
        ax.legend()
    elif command == "bench":
        for p in dict.fromkeys(r["protocol"] for r in rows):
            pts = [r for r in rows if r["protocol"] == p]
            ax.semilogy([r["N"] for r in pts], [r["variance"] for r in pts], marker="o", label=p)
        ax.set_xlabel("N")
        ax.set_ylabel("variance")
        ax.legend()
    elif command == "estimate":
        ax.hist([r["estimate"] for r in rows], bins=30)
        ax.axvline(rows[0]["exact"], color="k")
        ax.set_xlabel("estimate")
    else:
        ax.bar([str(r.get("criterion", r.get("n"))) for r in rows],
               [r.get("indicator", r.get("M_2n_direct")) for r in rows])
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# --- driver -----------------------------------------------------------------------------


def resolve_threads(arg) -> int:
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("PERMOM_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"PERMOM_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def execute(command: str, cfg: dict, out_dir: Path, as_json: bool, svg: bool, stdout) -> tuple[int, dict]:
    """Run one resolved command, write its outputs and manifest."""
    _accel.set_threads(cfg["threads"])
    t0 = time.perf_counter()
    columns, rows, extra, code = RUNNERS[command](cfg)
    wall = time.perf_counter() - t0
    text = to_csv(columns, rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{command}.csv"
    csv_path.write_bytes(text.encode())
    outputs = {csv_path.name: sha256(text.encode())}
    if svg:
        svg_path = out_dir / f"{command}.svg"
        render_svg(command, columns, rows, svg_path)
        outputs[svg_path.name] = sha256(svg_path.read_bytes())
    manifest = {
        "command": command,
        "config": _jsonable(cfg),
        "seed": cfg["seed"],
        "version": __version__,
        "backend": _accel.backend(),
        "wall_time_s": wall,
        "outputs": outputs,
        "results": _jsonable(extra),
        "exit_code": code,
    }
    (out_dir / f"{command}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if as_json:
        stdout.write(json.dumps(_jsonable(rows), sort_keys=True) + "\n")
    else:
        stdout.write(text)
    return code, manifest


def replay(manifest_path: str, out_dir: Path | None, stdout) -> int:
    try:
        manifest = json.loads(Path(manifest_path).read_text())
        command, cfg = manifest["command"], manifest["config"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"unreadable manifest: {exc}") from None
    if command not in RUNNERS:
        raise UsageError(f"manifest names unknown command {command!r}")
    out = out_dir or Path(manifest_path).parent / "replay"
    svg = any(name.endswith(".svg") for name in manifest.get("outputs", {}))
    code, new = execute(command, cfg, out, False, svg, stdout)
    want = {k: v for k, v in manifest["outputs"].items() if k.endswith(".csv")}
    got = {k: v for k, v in new["outputs"].items() if k.endswith(".csv")}
    if want != got:
        sys.stderr.write(f"replay mismatch: expected {want}, got {got}\n")
        return EXIT_CHECK
    return code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $PERMOM_THREADS or all cores)")
    common.add_argument("--out", type=Path, default=None, help="output directory (default: .)")
    common.add_argument("--svg", action="store_true", help="also render a static SVG plot")
    common.add_argument("--json", action="store_true", help="print JSON records instead of CSV")

    p = argparse.ArgumentParser(prog="permom", description="Permutation-moment entanglement toolkit")
    p.add_argument("--version", action="version", version=f"permom {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("criteria", parents=[common], help="evaluate entanglement criteria on a state")
    c.add_argument("--state", required=True, help="state shorthand (bell, ghz:3, upb3x3, ...) or JSON file")
    c.add_argument("--criterion", default="", help="comma list: e4_ccnr,e4_star,p2,p3,e2n_multi")
    c.add_argument("--perm", default=None, help='permutation images, e.g. "1,3,2,4,5,6"')
    c.add_argument("--n-max", type=int, default=2)

    m = sub.add_parser("moments", parents=[common], help="permutation moments, optionally cross-checked")
    m.add_argument("--state", required=True)
    m.add_argument("--perm", required=True)
    m.add_argument("--n-max", type=int, default=2)
    m.add_argument("--cross-check", action="store_true")

    for name, text in (("estimate", "simulate a moment estimator"), ("bench", "variance benchmark"),
                       ("dynamics", "criteria along a quench"), ("eigenscan", "eigenstate entanglement scan")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("config", help="JSON config file")

    r = sub.add_parser("replay", parents=[common], help="re-run a manifest and compare CSV digests")
    r.add_argument("manifest")
    return p


def _resolve(args) -> dict:
    cfg = {"seed": args.seed, "threads": resolve_threads(args.threads)}
    if args.command == "criteria":
        cfg.update(state=args.state, criteria=[s for s in args.criterion.split(",") if s],
                   perm=args.perm, n_max=args.n_max)
    elif args.command == "moments":
        if args.n_max < 1:
            raise UsageError("--n-max must be >= 1")
        cfg.update(state=args.state, perm=args.perm, n_max=args.n_max, cross_check=args.cross_check)
    else:
        conf = load_config(args.config)
        validate_config(args.command, conf)
        cfg["config"] = conf
    return cfg


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "replay":
            if args.threads is not None:
                _accel.set_threads(args.threads)
            return replay(args.manifest, args.out, stdout)
        cfg = _resolve(args)
        code, _ = execute(args.command, cfg, args.out or Path("."), args.json, args.svg, stdout)
        return code
    except UsageError as exc:
        sys.stderr.write(f"permom: error: {exc}\n")
        return EXIT_USAGE
    except PermomError as exc:
        # invalid input is a usage error; solver or numerical failures are check failures
        sys.stderr.write(f"permom: {type(exc).__name__}: {exc}\n")
        return EXIT_USAGE if isinstance(exc, ValueError) else EXIT_CHECK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
