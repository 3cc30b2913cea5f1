"""Command-line front end: ``kerr-resonators {spectrum,linear,branch,dimer} --config run.toml``.

Every run writes a MANIFEST.json into its output directory with the resolved
configuration, the package version, the files produced and whether the run
completed. Numbers in CSV files carry 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .dimer import (
    DimerError,
    check_assumptions,
    detect_symmetry_breaking,
    loc_metric,
    mode_coefficients,
    reduced_bifurcation_point,
    scan_sigma,
    trace_asymmetric_branch,
    two_d_obstruction,
)
from .mesh import DomainSpec, Mesh, MeshError, build_mesh, write_mesh_csv
from .nonlinear import NonlinearConfig, NonlinearError, continue_branch
from .potential import OperatorMatrix, assemble_helmholtz, assemble_tilde, dump_matrix
from .resonance import ResonanceError, asymptotic_linear_2d, seed_2d_principal, seed_3d, solve_linear
from .spectra import SpectrumError, check_krein_rutman, constant_pair, static_operator, top_eigenpairs

log = logging.getLogger("kerr_resonators")

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("spectrum", "linear", "branch", "dimer")

_SECTION_KEYS = {
    "run": {"output_dir"},
    "domain": {"dimension", "shape", "radius", "resolution", "extents", "half_separation"},
    "spectrum": {"count", "operator"},
    "linear": {"tau", "mode_index", "regime", "tol", "max_iter"},
    "branch": {"tau", "mode_index", "N_max", "max_step", "newton_tol", "max_iter", "max_points"},
    "dimer": {"tau", "a_factor", "max_step", "asym_steps", "N_bound", "floor_ratio", "newton_tol", "antisymmetric"},
}

_DEFAULTS = {
    "spectrum": {"count": 6, "operator": "newtonian"},
    "linear": {"tau": [1e3, 1e4, 1e5], "mode_index": 0, "regime": "principal", "tol": 1e-10, "max_iter": 50},
    "branch": {"tau": 1e4, "mode_index": 0, "N_max": 1.0, "max_step": 0.1, "newton_tol": 1e-10, "max_iter": 30,
               "max_points": 400},
    "dimer": {"tau": 1e4, "a_factor": 1.6, "max_step": 0.1, "asym_steps": 11, "N_bound": 100.0,
              "floor_ratio": 0.1, "newton_tol": 1e-10, "antisymmetric": True},
}


class ConfigError(ValueError):
    """Malformed or physically invalid run configuration."""


NUMERICAL_ERRORS = (SpectrumError, ResonanceError, NonlinearError, DimerError, np.linalg.LinAlgError)


# ---------------------------------------------------------------- configuration


@dataclass
class RunConfig:
    domain: DomainSpec
    output_dir: Optional[Path]
    sections: dict
    raw: dict = field(default_factory=dict)

    def block(self, name: str) -> dict:
        return self.sections[name]

    def resolved(self) -> dict:
        out = {"run": {"output_dir": str(self.output_dir) if self.output_dir else None}}
        out["domain"] = self.domain.to_dict()
        out.update(self.sections)
        return out


def _positive(name: str, value: Any) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number, got {value!r}") from exc
    if not (v > 0 and math.isfinite(v)):
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return v


def _parse_domain(block: dict) -> DomainSpec:
    if not block:
        raise ConfigError("missing [domain] section")
    shape = block.get("shape")
    if shape not in ("ball", "disk", "box"):
        raise ConfigError(f"domain.shape must be ball, disk or box, got {shape!r}")
    h = _positive("domain.resolution", block.get("resolution"))
    try:
        if shape == "box":
            extents = block.get("extents")
            if not isinstance(extents, list) or not extents:
                raise ConfigError("domain.extents must be a nonempty list for a box")
            base = DomainSpec.box(tuple(_positive("domain.extents", e) for e in extents), h)
        else:
            r = _positive("domain.radius", block.get("radius", 1.0))
            base = DomainSpec.ball(r, h) if shape == "ball" else DomainSpec.disk(r, h)
        dim = block.get("dimension", base.dimension)
        if dim != base.dimension:
            raise ConfigError(f"domain.dimension {dim} does not match shape {shape!r}")
        if "half_separation" in block:
            return DomainSpec.dimer(base, _positive("domain.half_separation", block["half_separation"]))
        return base
    except MeshError as exc:
        raise ConfigError(str(exc)) from exc


def _check_sections(raw: dict) -> None:
    for name, body in raw.items():
        if name not in _SECTION_KEYS:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{name}] must be a table")
        unknown = set(body) - _SECTION_KEYS[name]
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")


def _tau_list(name: str, value: Any) -> list[float]:
    values = value if isinstance(value, list) else [value]
    if not values:
        raise ConfigError(f"{name} sweep must be nonempty")
    return [_positive(name, v) for v in values]


def _validate(sections: dict) -> None:
    sp = sections["spectrum"]
    if not isinstance(sp["count"], int) or sp["count"] < 1:
        raise ConfigError("spectrum.count must be a positive integer")
    if sp["operator"] not in ("newtonian", "tilde"):
        raise ConfigError("spectrum.operator must be 'newtonian' or 'tilde'")
    lin = sections["linear"]
    lin["tau"] = _tau_list("linear.tau", lin["tau"])
    if lin["regime"] not in ("principal", "bulk"):
        raise ConfigError("linear.regime must be 'principal' or 'bulk'")
    for name in ("linear", "branch"):
        idx = sections[name]["mode_index"]
        if not isinstance(idx, int) or idx < 0:
            raise ConfigError(f"{name}.mode_index must be a nonnegative integer")
    br = sections["branch"]
    br["tau"] = _positive("branch.tau", br["tau"])
    for key in ("N_max", "max_step", "newton_tol"):
        br[key] = _positive(f"branch.{key}", br[key])
    dm = sections["dimer"]
    dm["tau"] = _positive("dimer.tau", dm["tau"])
    for key in ("a_factor", "max_step", "N_bound", "floor_ratio", "newton_tol"):
        dm[key] = _positive(f"dimer.{key}", dm[key])
    if not isinstance(dm["antisymmetric"], bool):
        raise ConfigError("dimer.antisymmetric must be true or false")
    for key, sec in (("max_iter", "linear"), ("max_iter", "branch"), ("max_points", "branch"), ("asym_steps", "dimer")):
        if not isinstance(sections[sec][key], int) or sections[sec][key] < 1:
            raise ConfigError(f"{sec}.{key} must be a positive integer")


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    _check_sections(raw)
    domain = _parse_domain(raw.get("domain", {}))
    sections = {name: {**defaults, **raw.get(name, {})} for name, defaults in _DEFAULTS.items()}
    _validate(sections)
    out = raw.get("run", {}).get("output_dir")
    return RunConfig(domain, Path(out) if out else None, sections, raw)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------- output helpers


def _fmt(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.16e}"
    return str(x)


class Outputs:
    """Tracks files written to the run directory so the manifest can list them."""

    def __init__(self, root: Path, command: str, config: RunConfig, dump_matrices: bool = False):
        self.root = root
        self.command = command
        self.config = config
        self.dump_matrices = dump_matrices
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list[str], rows) -> Path:
        path = self.root / name
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        self.files.append(name)
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.root / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
        self.files.append(name)
        return path

    def mesh(self, mesh: Mesh) -> None:
        write_mesh_csv(mesh, self.root / "mesh.csv")
        self.files.append("mesh.csv")

    def matrix(self, name: str, op) -> None:
        if not self.dump_matrices:
            return
        if not isinstance(op, OperatorMatrix):
            log.warning("matrix %s is matrix-free; not dumped", name)
            return
        (self.root / "matrices").mkdir(exist_ok=True)
        dump_matrix(op, self.root / "matrices" / name)
        self.files.append(f"matrices/{name}")

    def manifest(self, complete: bool, error: Optional[str] = None, exit_code: int = EXIT_OK) -> None:
        payload = {
            "artifact": "artifact",
            "package": "kerr_resonators",
            "version": __version__,
            "command": self.command,
            "config": self.config.resolved(),
            "files": sorted(self.files),
            "complete": complete,
            "exit_code": exit_code,
            "error": error,
        }
        (self.root / "MANIFEST.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"
        )


def _json_default(obj):
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


# ---------------------------------------------------------------- commands


def _mode(mesh: Mesh, index: int):
    pairs = top_eigenpairs(static_operator(mesh), index + 1)
    if len(pairs) <= index:
        raise SpectrumError(f"mode {index} not available")
    return pairs[index]


def cmd_spectrum(cfg: RunConfig, out: Outputs) -> None:
    mesh = build_mesh(cfg.domain)
    out.mesh(mesh)
    block = cfg.block("spectrum")
    if block["operator"] == "tilde":
        if mesh.dimension != 2:
            raise ConfigError("the mean-zero operator is only used in 2D")
        op = assemble_tilde(mesh)
    else:
        op = static_operator(mesh)
    out.matrix("static_operator.bin", op)
    pairs = top_eigenpairs(op, block["count"])
    out.csv(
        "spectrum.csv",
        ["index", "lambda", "symmetry", "gap", "residual"],
        ([k, p.lam, p.symmetry, p.gap, p.residual] for k, p in enumerate(pairs)),
    )
    kr = check_krein_rutman(pairs, mesh)
    out.json("krein_rutman.json", kr.__dict__)


def cmd_linear(cfg: RunConfig, out: Outputs) -> None:
    mesh = build_mesh(cfg.domain)
    out.mesh(mesh)
    block = cfg.block("linear")
    rows = []
    try:
        if mesh.dimension == 3:
            pair = _mode(mesh, block["mode_index"])
        elif block["regime"] == "bulk":
            pairs = top_eigenpairs(assemble_tilde(mesh), block["mode_index"] + 1)
            pair = pairs[block["mode_index"]]
        else:
            pair = None
        for tau in block["tau"]:
            if pair is None:
                om, u0 = seed_2d_principal(mesh, tau)
            elif mesh.dimension == 3:
                om, u0 = seed_3d(pair, tau, mesh)
            else:
                om, u0 = asymptotic_linear_2d("bulk", pair, tau), pair.phi.astype(complex)
            pt = solve_linear(mesh, tau, om, u0, tol=block["tol"], max_iter=block["max_iter"])
            rows.append([tau, pt.omega.real, pt.omega.imag, pt.residual, pt.symmetry, block["mode_index"]])
            out.matrix(f"helmholtz_tau{len(rows) - 1}.bin", assemble_helmholtz(mesh, pt.omega))
    finally:
        out.csv("resonances.csv", ["tau", "re_omega", "im_omega", "residual", "symmetry", "mode_index"], rows)


def _branch_rows(mesh: Mesh, branch) -> list:
    return [
        [k, a, p.amplitude, p.omega.real, p.omega.imag, p.residual, p.symmetry, loc_metric(mesh, p.u)]
        for k, (a, p) in enumerate(zip(branch.values, branch.points))
    ]


def cmd_branch(cfg: RunConfig, out: Outputs) -> None:
    mesh = build_mesh(cfg.domain)
    out.mesh(mesh)
    block = cfg.block("branch")
    tau = block["tau"]
    if mesh.dimension == 3:
        mode = _mode(mesh, block["mode_index"])
        omega0, _ = seed_3d(mode, tau, mesh)
    elif block["mode_index"] == 0:
        mode = constant_pair(mesh)
        omega0, _ = seed_2d_principal(mesh, tau)
    else:
        raise ConfigError("2D branches are only supported for the principal mode")
    config = NonlinearConfig(newton_tol=block["newton_tol"], max_step=block["max_step"], max_iter=block["max_iter"])
    branch = continue_branch(mesh, tau, mode, block["N_max"], config, omega0, max_points=block["max_points"])
    out.csv(
        "branch.csv",
        ["index", "a", "N", "re_omega", "im_omega", "residual", "symmetry", "loc_metric"],
        _branch_rows(mesh, branch),
    )
    out.json(
        "branch.json",
        {
            "branch_id": branch.branch_id,
            "parameter": branch.parameter,
            "points": len(branch.points),
            "complete": branch.complete,
            "omega_linear": branch.meta["omega_linear"],
            "mode_lambda": branch.meta["mode_lambda"],
            "config": cfg.resolved(),
        },
    )
    if not branch.complete:
        raise NonlinearError(f"continuation stopped early at N = {branch.points[-1].amplitude if branch.points else 0}")


_DIAGRAM_HEADER = ["N", "re_omega", "im_omega", "sigma_odd", "loc_metric", "branch_id", "symmetry"]


def _diagram_rows(mesh: Mesh, branch, branch_id: str, sigma=None) -> list:
    sig = sigma if sigma is not None else [math.nan] * len(branch.points)
    return [
        [p.amplitude, p.omega.real, p.omega.imag, s, loc_metric(mesh, p.u), branch_id, p.symmetry]
        for p, s in zip(branch.points, sig)
    ]


def _dimer_3d(cfg: RunConfig, out: Outputs, mesh: Mesh) -> None:
    block = cfg.block("dimer")
    tau = block["tau"]
    pairs = top_eigenpairs(static_operator(mesh), 4)
    plus = next((p for p in pairs if p.symmetry == "even"), None)
    minus = next((p for p in pairs if p.symmetry == "odd"), None)
    if plus is None or minus is None:
        raise DimerError("leading even and odd eigenfields not found")
    coeffs = mode_coefficients(mesh, plus.phi, minus.phi, plus.lam, minus.lam)
    report = check_assumptions(coeffs)
    prediction = {
        "lambda_plus": coeffs.lambda_plus,
        "lambda_minus": coeffs.lambda_minus,
        "A_pp": coeffs.A_pp,
        "A_pm": coeffs.A_pm,
        "A_mm": coeffs.A_mm,
        "odd_overlaps": list(coeffs.odd_overlaps),
        "assumption_report": {**report.__dict__, "passed": report.passed},
    }
    try:
        pred = reduced_bifurcation_point(coeffs)
    except DimerError:
        out.json("prediction.json", prediction)
        raise
    prediction.update(
        p_plus_star=pred.p_plus_star,
        omega_hat_star=pred.omega_hat_star,
        N_crit=pred.N_crit_estimate,
        quadrature_phase_excluded=pred.quadrature_phase_excluded,
    )
    out.json("prediction.json", prediction)
    config = NonlinearConfig(newton_tol=block["newton_tol"], max_step=block["max_step"])
    omega0, _ = seed_3d(plus, tau, mesh)
    rows = []
    try:
        sym = continue_branch(
            mesh, tau, plus, math.inf, config, omega0, a_max=block["a_factor"] * max(pred.p_plus_star, block["max_step"])
        )
        sigma = scan_sigma(sym, mesh, tau)
        rows += _diagram_rows(mesh, sym, "symmetric", sigma)
        events = detect_symmetry_breaking(sym, mesh, tau, plus.phi, config)
        for ev in events:
            p = ev.point
            rows.append([p.amplitude, p.omega.real, p.omega.imag, 0.0, loc_metric(mesh, p.u), "event", p.symmetry])
        for ev in events[:1]:
            for direction, tag in ((1, "asym+"), (-1, "asym-")):
                br = trace_asymmetric_branch(ev, direction, mesh, tau, plus.phi, minus.phi, block["asym_steps"], config=config)
                rows += _diagram_rows(mesh, br, tag)
        if not events:
            raise DimerError("no symmetry-breaking event found on the symmetric branch")
    finally:
        out.csv("diagram.csv", _DIAGRAM_HEADER, rows)


def _dimer_2d(cfg: RunConfig, out: Outputs, mesh: Mesh) -> None:
    """Principal branch (odd block) and, if enabled, the odd branch (even block).

    For the odd branch the diagram's sigma_odd column holds the even-block value.
    """
    block = cfg.block("dimer")
    tau = block["tau"]
    config = NonlinearConfig(newton_tol=block["newton_tol"], max_step=block["max_step"])
    which = ["principal"] + (["antisymmetric"] if block["antisymmetric"] else [])
    rows, payload, failed = [], {}, []
    try:
        for name in which:
            rep = two_d_obstruction(mesh, tau, block["N_bound"], config, floor_ratio=block["floor_ratio"], which=name)
            tag = "symmetric" if name == "principal" else "antisymmetric"
            rows += _diagram_rows(mesh, rep.branch, tag, rep.sigma)
            entry = {k: v for k, v in rep.__dict__.items() if k not in ("branch", "sigma")}
            entry["branch_complete"] = rep.branch.complete
            payload[name] = entry
            if not rep.consistent:
                failed.append(name)
    finally:
        out.csv("diagram.csv", _DIAGRAM_HEADER, rows)
        out.json("obstruction.json", payload)
    if failed:
        raise DimerError(f"2D symmetry-breaking singular value fell below the floor or changed sign on: {failed}")


def cmd_dimer(cfg: RunConfig, out: Outputs) -> None:
    if cfg.domain.half_separation is None:
        raise ConfigError("the dimer command needs domain.half_separation")
    mesh = build_mesh(cfg.domain)
    out.mesh(mesh)
    if mesh.dimension == 3:
        _dimer_3d(cfg, out, mesh)
    else:
        _dimer_2d(cfg, out, mesh)


_HANDLERS = {"spectrum": cmd_spectrum, "linear": cmd_linear, "branch": cmd_branch, "dimer": cmd_dimer}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kerr-resonators", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HANDLERS[name].__name__.replace("cmd_", "") + " pipeline")
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="output directory (overrides [run] output_dir)")
        p.add_argument("--threads", type=int, default=None, help="BLAS/FFT thread limit")
        p.add_argument("--dump-matrices", action="store_true", help="write assembled matrices as binary")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        out_dir = Path(args.out) if args.out else cfg.output_dir
        if out_dir is None:
            raise ConfigError("no output directory: pass --out or set [run] output_dir")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outputs = Outputs(out_dir, args.command, cfg, args.dump_matrices)
    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                _HANDLERS[args.command](cfg, outputs)
        else:
            _HANDLERS[args.command](cfg, outputs)
    except (ConfigError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        outputs.manifest(False, str(exc), EXIT_CONFIG)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        outputs.manifest(False, f"{type(exc).__name__}: {exc}", EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    outputs.manifest(True)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
