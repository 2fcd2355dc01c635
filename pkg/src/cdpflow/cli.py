"""Command line: ``cdpflow run|twin|verify|sweep --config <file-or-preset>``.

Exit codes: 0 when every run completed, 2 when any run stopped with
``BlowUpDetected``, 1 on configuration errors. Each invocation writes
``<out>/manifest`` (JSON) listing the files it produced.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as config_mod
from .config import Experiment
from .errors import CdpflowError, ConfigError, UnderResolved
from .solver import RunReport, run, twin_run
from .torus import VectorField, read_torf, write_torf
from .verify import (InequalityReport, check_energy_balance, check_gronwall_chain,
                     check_lemma_difference, check_lemma_hessian, check_stress_constants)

log = logging.getLogger("cdpflow")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2
COMPLETED, BLOWUP, CONFIG_ERROR = "Completed", "BlowUpDetected", "ConfigError"


def write_manifest(out: Path, ex: Optional[Experiment], outputs: Sequence[Path], termination: str,
                   command: str, message: str = "", extra: Optional[dict] = None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    body = {
        "command": command,
        "config_hash": ex.config_hash if ex else None,
        "seed": ex.seed if ex else None,
        "termination": termination,
        "message": message,
        "outputs": [str(p) for p in outputs],
    }
    if ex is not None:
        body["warnings"] = list(ex.warnings)
    if extra:
        body.update(extra)
    path = out / "manifest"
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(out: str | Path) -> dict:
    return json.loads((Path(out) / "manifest").read_text())


def _write_snapshots(out: Path, report: RunReport) -> list[Path]:
    paths = []
    for i, (_, v, c) in enumerate(report.snapshots):
        paths.append(write_torf(out / "snapshots" / f"v_{i:05d}.torf", v))
        paths.append(write_torf(out / "snapshots" / f"c_{i:05d}.torf", c))
    return paths


def _run_and_write(ex: Experiment, out: Path, snapshot_every: int) -> tuple[RunReport, list[Path]]:
    v0, c0 = ex.initial_fields()
    r = run(ex.solver, v0, c0, report_every=ex.section("experiment")["report_every"],
            snapshot_every=snapshot_every)
    outputs = r.write_csv(out / "energies.csv", out / "diagnostics.csv")
    outputs += _write_snapshots(out, r)
    return r, outputs


def cmd_run(ex: Experiment, out: Path, snapshot_every: int) -> tuple[int, str, list[Path], dict]:
    r, outputs = _run_and_write(ex, out, snapshot_every)
    return _code(r.termination), r.message, outputs, {"horizon": r.horizon}


def cmd_twin(ex: Experiment, out: Path, snapshot_every: int) -> tuple[int, str, list[Path], dict]:
    v0, c0 = ex.initial_fields()
    eps_list = [0.0] + [e for e in ex.section("twin")["eps"] if e != 0.0]
    reports = [twin_run(ex.solver, v0, c0, e, seed=ex.seed,
                        report_every=ex.section("experiment")["report_every"]) for e in eps_list]
    n = max(len(r.t) for r in reports)

    def pad(a):
        return np.concatenate([a, np.full(n - len(a), np.nan)])

    cols, names = [pad(max(reports, key=lambda r: len(r.t)).t)], ["t"]
    for r in reports:
        cols += [pad(r.delta), pad(r.difference)]
        names += [f"delta_{r.eps:g}", f"difference_{r.eps:g}"]
    out.mkdir(parents=True, exist_ok=True)
    path = out / "twin.csv"
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(names), comments="", fmt="%.17g")
    summary = {f"{r.eps:g}": {"delta_end": float(r.delta[-1]), "rate": r.rate,
                              "scaled_end": float(r.scaled[-1]), "termination": r.termination}
               for r in reports}
    term = BLOWUP if any(r.termination == BLOWUP for r in reports) else COMPLETED
    return _code(term), "", [path], {"twin": summary}


def cmd_verify(ex: Experiment, out: Path, snapshot_every: int) -> tuple[int, str, list[Path], dict]:
    r, outputs = _run_and_write(ex, out, snapshot_every)
    vdir = out / "verify"
    vf = ex.section("verify")
    m = ex.solver.stress
    reports: list[InequalityReport] = [
        check_energy_balance(r),
        check_stress_constants(m, vf["samples"], vf["magnitude_cap"], ex.seed, ex.solver.grid.dim),
    ]
    notes = {}
    try:
        reports.append(check_gronwall_chain(r))
    except CdpflowError as exc:
        notes["gronwall_chain"] = str(exc)
    s = r.final_state
    v0, _ = ex.initial_fields()
    v0 = VectorField.from_spectral(ex.solver.grid, np.where(ex.solver.grid.galerkin_mask, v0.spectral, 0.0))
    reports.append(check_lemma_difference(s.c, v0, s.v, vf["lemma_l"], m.exponent))
    try:
        reports.append(check_lemma_hessian(s.c, s.v, m.exponent.p_minus, m.exponent))
    except UnderResolved as exc:
        notes["lemma_hessian"] = str(exc)
    for rep in reports:
        outputs += list(rep.write(vdir))
    summary = {rep.name: rep.satisfied for rep in reports}
    return _code(r.termination), r.message, outputs, {"verify": summary, "skipped": notes}


COMMANDS = {"run": cmd_run, "twin": cmd_twin, "verify": cmd_verify}


def _code(termination: str) -> int:
    return EXIT_BLOWUP if termination == BLOWUP else EXIT_OK


def _slug(key: str, value) -> str:
    return f"{key}={value}".replace("/", "_")


def _sweep_member(args: tuple) -> tuple[int, str, list[str]]:
    resolved, out, snapshot_every = args
    ex = config_mod.resolve(resolved)
    code, message, outputs, extra = cmd_run(ex, Path(out), snapshot_every)
    term = BLOWUP if code == EXIT_BLOWUP else COMPLETED
    outputs.append(write_manifest(Path(out), ex, outputs, term, "run", message, extra))
    return code, term, [str(p) for p in outputs]


def refinement_distances(dirs: Sequence[Path]) -> np.ndarray:
    """Sup over shared snapshots of the L2 velocity distance between consecutive runs."""
    out = []
    for a, b in zip(dirs, dirs[1:]):
        fa = sorted((a / "snapshots").glob("v_*.torf"))
        fb = sorted((b / "snapshots").glob("v_*.torf"))
        sup = 0.0
        for pa, pb in zip(fa, fb):
            va, vb = read_torf(pa), read_torf(pb)
            sup = max(sup, float(np.sqrt(np.mean(np.sum((va.values - vb.values) ** 2, axis=0)))))
        out.append(sup)
    return np.array(out)


def cmd_sweep(ex: Experiment, out: Path, snapshot_every: int, workers: int) -> tuple[int, str, list[Path], dict]:
    sw = ex.section("sweep")
    if sw["key"] is None:
        raise ConfigError("sweep needs [sweep] key and values", key="sweep.key")
    members = []
    for value in sw["values"]:
        member = ex.with_value(sw["key"], value)
        members.append((member.resolved, str(out / _slug(sw["key"], value)), snapshot_every))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_member, members))
    else:
        results = [_sweep_member(m) for m in members]
    outputs = [Path(p) for _, _, paths in results for p in paths]
    extra = {"members": {_slug(sw["key"], v): t for v, (_, t, _) in zip(sw["values"], results)}}
    if sw["key"] == "grid.K" and snapshot_every:
        d = refinement_distances([Path(m[1]) for m in members])
        path = out / "refinement.csv"
        rows = np.column_stack([sw["values"][:-1], sw["values"][1:], d])
        np.savetxt(path, rows, delimiter=",", header="K,K_next,sup_l2_distance", comments="", fmt="%.17g")
        outputs.append(path)
        extra["refinement"] = d.tolist()
    code = EXIT_BLOWUP if any(c == EXIT_BLOWUP for c, _, _ in results) else EXIT_OK
    return code, "", outputs, extra


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdpflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "twin", "verify", "sweep"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML file or preset name")
        s.add_argument("--out", type=Path, default=None, help="output directory (default out/<name>)")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--snapshot-every", type=int, default=None, help="steps between TORF snapshots")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ex = config_mod.load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer", key="experiment.seed")
            ex = ex.with_value("experiment.seed", args.seed)
    except ConfigError as exc:
        print(f"cdpflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path("out") / ex.section("experiment")["name"]
    snap = ex.section("experiment")["snapshot_every"] if args.snapshot_every is None else args.snapshot_every
    try:
        if args.command == "sweep":
            code, message, outputs, extra = cmd_sweep(ex, out, snap, max(1, args.workers))
        else:
            code, message, outputs, extra = COMMANDS[args.command](ex, out, snap)
    except ConfigError as exc:
        write_manifest(out, ex, [], CONFIG_ERROR, args.command, str(exc))
        print(f"cdpflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    term = BLOWUP if code == EXIT_BLOWUP else COMPLETED
    manifest = write_manifest(out, ex, outputs, term, args.command, message, extra)
    print(f"{args.command}: {term} -> {manifest}")
    return code


if __name__ == "__main__":
    sys.exit(main())
