"""Command line entry point: ``nvqnode {ghz,qec,calibrate,fit} --seed N ...``.

Exit codes: 0 success, 1 simulation or calibration failure, 2 bad configuration.
Every output file starts with a commented header carrying its schema and the
fully resolved configuration, and contains nothing run-dependent besides the
results, so equal (config, seed) pairs give byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import FIT_SCHEMA, fit_exponential
from .calibrate import calibrate_node, shipped_noise
from .experiments import PREPS, fit_sweep, run_sweep, run_witness
from .ghz import write_report
from .noise import NoiseModel, load_noise, save_noise
from .qec import single_x_injector, write_records

log = logging.getLogger("nvqnode")

MAX_ROUNDS = 64
MAX_SHOTS = 10 ** 8
SUMMARY_SCHEMA = "nvqnode.qec_summary/1"
PARITY_SCHEMA = "nvqnode.qec_parity/1"


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    shots: int = 100_000
    rounds: list = field(default_factory=lambda: [0])
    feedback: str = "on"
    prep: str = "zero"
    backend: str = "trajectory"
    noise: str = "shipped"
    out: str = "."
    workers: int = 1
    inject_x: bool = False
    records: bool = True
    resamples: int = 1000
    weighted: bool = True
    input: str = ""
    lifetimes: bool = True
    grid: int = 4

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("--seed is required")
        if not 1 <= self.shots <= MAX_SHOTS:
            raise ConfigError(f"shots must be in [1, {MAX_SHOTS}], got {self.shots}")
        for m in self.rounds:
            if not 0 <= m <= MAX_ROUNDS:
                raise ConfigError(f"rounds must be in [0, {MAX_ROUNDS}], got {m}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.resamples < 100:
            raise ConfigError("resamples must be >= 100")

    def resolved(self) -> dict:
        """Settings that determine the results (output location and worker count do not)."""
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        return d

    def header(self, schema: str, noise: NoiseModel | None = None) -> list[str]:
        lines = [f"schema: {schema}", f"generator: nvqnode {__version__}",
                 "config: " + json.dumps(self.resolved(), sort_keys=True)]
        if noise is not None:
            lines.append("noise: " + json.dumps(noise.as_dict(), sort_keys=True))
        return lines


def parse_rounds(text: str) -> list[int]:
    """``12`` -> [12]; ``0-12`` -> [0..12]; ``0,4,8`` -> [0, 4, 8]."""
    try:
        if "-" in text:
            a, b = text.split("-", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return sorted({int(x) for x in text.split(",")})
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rounds spec {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvqnode", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--noise", default="shipped",
                       help="noise TOML file, 'shipped' (calibrated) or 'default'")
        p.add_argument("--out", default=".", help="output directory")

    g = sub.add_parser("ghz", help="GHZ witness experiment")
    common(g)
    g.add_argument("--shots", type=int, default=100_000, help="shots per measurement basis")
    g.add_argument("--backend", choices=("trajectory", "exact"), default="trajectory")
    g.add_argument("--workers", type=int, default=1)

    q = sub.add_parser("qec", help="repeated repetition-code rounds")
    common(q)
    q.add_argument("--shots", type=int, default=100_000)
    q.add_argument("--rounds", type=parse_rounds, default=[0], help="M, M1-M2 or M1,M2,...")
    q.add_argument("--feedback", choices=("on", "off", "sweep"), default="on")
    q.add_argument("--prep", choices=tuple(PREPS), default="zero")
    q.add_argument("--backend", choices=("trajectory", "exact"), default="trajectory")
    q.add_argument("--workers", type=int, default=1)
    q.add_argument("--inject-x", action="store_true",
                   help="inject one X on a random carbon before a random round")
    q.add_argument("--no-records", dest="records", action="store_false",
                   help="skip the per-shot record files")
    q.add_argument("--resamples", type=int, default=1000, help="bootstrap resamples for fits")

    c = sub.add_parser("calibrate", help="fit noise parameters to the target observables")
    common(c)
    c.add_argument("--no-lifetimes", dest="lifetimes", action="store_false",
                   help="skip the per-round flip-rate stage")
    c.add_argument("--grid", type=int, default=4)

    f = sub.add_parser("fit", help="exponential decay fit of a (t_ms, p, sigma) table")
    common(f)
    f.add_argument("input", help="whitespace-separated file with t_ms p sigma columns")
    f.add_argument("--unweighted", dest="weighted", action="store_false")
    f.add_argument("--resamples", type=int, default=1000)
    return parser


def resolve_noise(spec: str) -> NoiseModel:
    if spec == "shipped":
        return shipped_noise()
    if spec == "default":
        return NoiseModel()
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"noise file not found: {spec}")
    try:
        return load_noise(path)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad noise file {spec}: {exc}") from exc
    except Exception as exc:  # TOML syntax errors
        raise ConfigError(f"cannot parse noise file {spec}: {exc}") from exc


def _write_tsv(path: Path, header: list[str], columns, rows) -> None:
    lines = [f"# {h}" for h in header]
    lines.append("\t".join(columns))
    lines += ["\t".join(_cell(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _cell(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


# -- subcommands ----------------------------------------------------------------------

def cmd_ghz(cfg: ExperimentConfig, noise: NoiseModel, out: Path) -> int:
    tables, result = run_witness(cfg.shots, noise, cfg.seed, cfg.backend == "exact", cfg.workers)
    header = cfg.header("nvqnode.ghz_report/1", noise)[1:]
    write_report(out / "ghz_report.tsv", tables, result, header)
    for t in tables.values():
        for w in t.warnings:
            log.warning(w)
    print(f"e1={result.e1:.4f}({result.sigma_e1:.4f}) e2={result.e2:.4f}({result.sigma_e2:.4f}) "
          f"e3={result.e3:.4f}({result.sigma_e3:.4f}) F_lb={result.f_lb:.4f}({result.sigma_f_lb:.4f})")
    return 0


_SUMMARY_COLUMNS = ("prep", "feedback", "rounds", "t_ms", "shots", "heralded", "fidelity_raw",
                    "fidelity", "fidelity_sigma", "mitigation_slack", "zlzp_selected",
                    "zlzp_selected_sigma", "zlzp_all", "zlzp_all_sigma", "improvement",
                    "improvement_sigma", "n_selected")


def cmd_qec(cfg: ExperimentConfig, noise: NoiseModel, out: Path) -> int:
    feedbacks = {"on": (True,), "off": (False,), "sweep": (True, False)}[cfg.feedback]
    exact = cfg.backend == "exact"
    injector = single_x_injector if cfg.inject_x else None
    if exact and injector:
        raise ConfigError("--inject-x needs the trajectory backend")
    if injector:
        from .experiments import qec_point
        points = [qec_point(cfg.prep, m, fb, cfg.shots, noise, cfg.seed, injector=injector,
                            workers=cfg.workers, keep_records=cfg.records)
                  for fb in feedbacks for m in cfg.rounds]
    else:
        points = run_sweep(cfg.prep, cfg.rounds, feedbacks, cfg.shots, noise, cfg.seed, exact,
                           cfg.workers, keep_records=cfg.records and not exact)
    target = PREPS[cfg.prep]().target_index
    rows, parity_rows = [], []
    for p in points:
        ps = p.post
        raw_f = math.nan if target is None else float(p.raw.probs[target])
        post = (math.nan,) * 7 if ps is None else (
            ps.selected, ps.selected_sigma, ps.unselected, ps.unselected_sigma,
            ps.improvement, ps.improvement_sigma, ps.n_selected)
        rows.append((p.prep, p.feedback, p.rounds, p.t_ms, p.shots, p.n_heralded, raw_f,
                     p.fidelity, p.fidelity_sigma, p.mitigated.slack, *post))
        for r, (ziz, izz) in enumerate(p.parity, start=1):
            parity_rows.append((p.prep, p.feedback, p.rounds, r, ziz, izz))
        if p.records:
            name = f"shots_{p.prep}_fb{'on' if p.feedback else 'off'}_M{p.rounds:02d}.jsonl"
            hdr = dict(config=cfg.resolved(), noise=noise.as_dict(), rounds=p.rounds, feedback=p.feedback)
            write_records(out / name, p.records, hdr)
    _write_tsv(out / "qec_summary.tsv", cfg.header(SUMMARY_SCHEMA, noise), _SUMMARY_COLUMNS, rows)
    _write_tsv(out / "qec_parity.tsv", cfg.header(PARITY_SCHEMA, noise),
               ("prep", "feedback", "rounds", "round", "ziz_mean", "izz_mean"), parity_rows)
    if target is not None and len(cfg.rounds) >= 4:
        fit_rows = []
        for fb in feedbacks:
            try:
                res = fit_sweep(points, fb, n_boot=cfg.resamples, seed=cfg.seed)
            except (ValueError, RuntimeError) as exc:
                log.warning("fit failed for feedback=%s: %s", fb, exc)
                continue
            fit_rows.append((fb, *_fit_row(res)))
            print(f"feedback={'on' if fb else 'off'}: T1L={res.t1l:.2f} ms "
                  f"[{res.ci_t1l[0]:.2f}, {res.ci_t1l[1]:.2f}] p_i={res.p_i:.3f} p_f={res.p_f:.3f}")
        _write_tsv(out / "qec_fit.tsv", cfg.header(FIT_SCHEMA, noise), ("feedback",) + _FIT_COLUMNS,
                   fit_rows)
    for p in points:
        print(f"feedback={'on' if p.feedback else 'off'} M={p.rounds:2d} heralded={p.n_heralded} "
              f"fidelity={p.fidelity:.4f} zlzp_selected="
              f"{p.post.selected if p.post else math.nan:.4f} zlzp_all={p.post.unselected if p.post else math.nan:.4f}")
    return 0


_FIT_COLUMNS = ("p_i", "p_i_lo", "p_i_hi", "t1l_ms", "t1l_lo", "t1l_hi", "p_f", "p_f_lo", "p_f_hi",
                "rss", "chi2", "unbounded")


def _fit_row(r) -> tuple:
    return (r.p_i, *r.ci_p_i, r.t1l, *r.ci_t1l, r.p_f, *r.ci_p_f, r.rss, r.chi2, r.unbounded)


def cmd_calibrate(cfg: ExperimentConfig, noise: NoiseModel, out: Path) -> int:
    calibrated, stages = calibrate_node(noise, lifetimes=cfg.lifetimes, grid=cfg.grid)
    lines = ["calibrated noise model", "config: " + json.dumps(cfg.resolved(), sort_keys=True)]
    for st in stages:
        lines += st.summary_lines()
    save_noise(calibrated, out / "calibrated_noise.toml", lines)
    for line in lines[2:]:
        print(line)
    # the lifetime stage is a best compromise and is reported, not enforced
    first = stages[0]
    if not first.ok:
        bad = [k for k, v in first.pulls.items() if abs(v) > 1]
        print(f"calibration residual above 1 sigma for: {', '.join(bad)}", file=sys.stderr)
        return 1
    return 0


def cmd_fit(cfg: ExperimentConfig, noise: NoiseModel, out: Path) -> int:
    path = Path(cfg.input)
    if not path.is_file():
        raise ConfigError(f"input file not found: {cfg.input}")
    try:
        pts = np.loadtxt(path, comments="#", ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {cfg.input}: {exc}") from exc
    if pts.shape[1] == 2:
        pts = np.c_[pts, np.ones(len(pts))]
        cfg.weighted = False
    if pts.shape[1] != 3:
        raise ConfigError("fit input needs columns t_ms p [sigma]")
    try:
        res = fit_exponential(pts, weighted=cfg.weighted, n_boot=cfg.resamples, seed=cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_tsv(out / "fit.tsv", cfg.header(FIT_SCHEMA), _FIT_COLUMNS, [_fit_row(res)])
    if res.unbounded:
        print("flat data: T1L unbounded")
    else:
        print(f"T1L={res.t1l:.3f} ms [{res.ci_t1l[0]:.3f}, {res.ci_t1l[1]:.3f}] "
              f"p_i={res.p_i:.4f} p_f={res.p_f:.4f}")
    return 0


COMMANDS = {"ghz": cmd_ghz, "qec": cmd_qec, "calibrate": cmd_calibrate, "fit": cmd_fit}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    fields = {k: v for k, v in vars(args).items() if k in ExperimentConfig.__dataclass_fields__}
    return ExperimentConfig(**fields)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        cfg.validate()
        noise = NoiseModel() if args.command == "calibrate" and cfg.noise == "shipped" \
            else resolve_noise(cfg.noise)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, noise, out)
    except ConfigError as exc:
        print(f"nvqnode: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("simulation failure", exc_info=True)
        print(f"nvqnode: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
