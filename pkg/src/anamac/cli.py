"""Command-line experiment runner.

Usage::

    anamac {keygen,tag,verify,distance,bounds,roc,attack} [--config PATH] [overrides]

Config files are flat ``key = value`` text (``#`` starts a comment); command
line flags override them. Recognized keys: n, l, r, q, sigma_w, rho,
rho_grid, ebn0_grid, trials, seed, out, prf, workers, msg.

CSV outputs (``.`` decimal point, 12 significant digits):

distance
    ``d, empirical_A_d, theoretical_A_d``; one row per distance 0..l.
bounds
    ``EbN0_dB, gamma_t, capacity, equivocation_lower_bound_bits,
    sp59_error_lb, alpha_theoretical``.
roc
    ``EbN0_dB, rho, alpha_hat, alpha_closed, beta_hat, beta_closed,
    stderr_a, stderr_b``. Standard errors are binomial at the closed-form
    probability.

Exit codes: 0 success, 1 usage, 2 numeric failure, 3 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import adversary_lab as lab
from .bounds import (SolverError, bi_awgn_capacity, equivocation_lower_bound,
                     random_code_distribution, sp59_bound)
from .mac_core import MacParams, SecretKey, coding_rate, gen_key, sample_keys
from .noise_channel import (ChannelParams, decode_packet, ebn0_to_gamma, encode_packet,
                            make_ana_tag, sigma_from_gamma_t)
from .verifier import VerifyConfig, alpha_closed_form, verify

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

ATTACK_MAX_N = 16
ATTACK_MAX_L = 24

DEFAULTS = {
    "keygen": dict(n=128),
    "tag": dict(n=128, l=256, q=8, sigma_w=1.0),
    "verify": dict(n=128, l=256, rho=0.5),
    "distance": dict(n=128, l=256, trials=100_000, msg="anamac"),
    "bounds": dict(n=128, l=256, r=1, rho=0.5,
                   ebn0_grid=[x / 2 for x in range(-10, 11)]),
    "roc": dict(n=128, l=256, q=8, trials=10_000, rho_grid=[0.2, 0.4, 0.6],
                ebn0_grid=[-4.0, -2.0, 0.0, 2.0]),
    "attack": dict(n=10, l=20, trials=10_000, ebn0_grid=[-4.0, -2.0, 0.0, 2.0]),
}


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    n: int = 128
    l: int = 256
    r: int = 1
    q: Optional[int] = 8
    sigma_w: Optional[float] = None
    rho: float = 0.5
    rho_grid: list = field(default_factory=lambda: [0.5])
    ebn0_grid: list = field(default_factory=list)
    trials: int = 10_000
    seed: int = 1
    out: Optional[str] = None
    prf: str = "reference"
    workers: int = 1
    msg: str = "anamac"

    def validate(self):
        if self.trials < 1:
            raise UsageError("trials must be >= 1")
        if self.n < 1 or self.l < 1 or self.r < 1:
            raise UsageError("n, l and r must be positive")
        if self.kind in ("bounds", "roc", "attack") and not self.ebn0_grid and self.sigma_w is None:
            raise UsageError("an E_b/N_0 grid is required")
        if self.kind == "roc" and not self.rho_grid:
            raise UsageError("rho grid must be non-empty")
        if self.q is not None and not 1 <= self.q <= 16:
            raise UsageError("q must lie in 1..16")
        try:
            MacParams(self.n, self.l, self.prf)
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    @property
    def mac(self) -> MacParams:
        return MacParams(self.n, self.l, self.prf)

    @property
    def rate(self) -> float:
        return coding_rate(self.n, self.r, self.l)


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).replace(" ", "").split(",") if x]


_CONVERT = {
    "n": int, "l": int, "r": int, "trials": int, "seed": int, "workers": int,
    "q": lambda v: None if str(v).lower() in ("none", "") else int(v),
    "sigma_w": float, "rho": float, "rho_grid": _floats, "ebn0_grid": _floats,
    "out": str, "prf": str, "msg": str,
}


def read_config(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERT:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def build_config(kind: str, args: argparse.Namespace) -> ExperimentConfig:
    values = dict(DEFAULTS.get(kind, {}))
    if getattr(args, "config", None):
        values.update(read_config(args.config))
    for key in _CONVERT:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        converted = {k: _CONVERT[k](v) if v is not None else None for k, v in values.items()}
    except ValueError as exc:
        raise UsageError(f"bad parameter value: {exc}") from None
    if kind == "attack" and "prf" not in converted:
        converted["prf"] = "toy"
    if "rho_grid" not in converted and "rho" in converted:
        converted["rho_grid"] = [converted["rho"]]
    cfg = ExperimentConfig(kind=kind, **converted)
    cfg.validate()
    return cfg


def fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.12g}"
    return str(x)


def _write_csv(cfg: ExperimentConfig, header, rows, stdout) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    _emit(cfg, buf.getvalue(), stdout)


def _emit(cfg: ExperimentConfig, text: str, stdout) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)


def _grid_points(cfg: ExperimentConfig):
    """(EbN0_dB, gamma_t, sigma_w) triples from either the dB grid or sigma_w."""
    if cfg.sigma_w is not None:
        gamma_t = 1.0 / (2.0 * cfg.sigma_w ** 2) if cfg.sigma_w > 0 else math.inf
        ebn0 = 10 * math.log10(gamma_t / cfg.rate) if math.isfinite(gamma_t) else math.inf
        return [(ebn0, gamma_t, cfg.sigma_w)]
    out = []
    for db in cfg.ebn0_grid:
        _, gamma_t = ebn0_to_gamma(db, cfg.rate)
        out.append((db, gamma_t, sigma_from_gamma_t(gamma_t)))
    return out


def run_distance(cfg: ExperimentConfig, stdout=sys.stdout) -> int:
    mac = cfg.mac
    keys = sample_keys(mac, cfg.trials, cfg.seed)
    ref = gen_key(mac, cfg.seed)
    emp = lab.distance_distribution(mac, cfg.msg.encode(), keys, ref)
    theo = random_code_distribution(mac.l, mac.n)
    rows = [(d, float(emp.weights[d]), float(theo.weights[d])) for d in range(mac.l + 1)]
    _write_csv(cfg, ["d", "empirical_A_d", "theoretical_A_d"], rows, stdout)
    return EXIT_OK


def run_bounds(cfg: ExperimentConfig, stdout=sys.stdout) -> int:
    rows, failed = [], False
    rate = cfg.rate
    for db, gamma_t, _ in _grid_points(cfg):
        cap = bi_awgn_capacity(gamma_t)
        eq = equivocation_lower_bound(cfg.n, cfg.l, cfg.r, gamma_t)
        try:
            sp = sp59_bound(cfg.r * cfg.l, min(rate, 1.0), gamma_t)
        except SolverError:
            sp, failed = math.nan, True
        alpha = alpha_closed_form(gamma_t / rate, cfg.n, cfg.rho)
        rows.append((float(db), gamma_t, cap, eq, sp, alpha))
    _write_csv(cfg, ["EbN0_dB", "gamma_t", "capacity", "equivocation_lower_bound_bits",
                     "sp59_error_lb", "alpha_theoretical"], rows, stdout)
    return EXIT_NUMERIC if failed else EXIT_OK


def run_roc(cfg: ExperimentConfig, stdout=sys.stdout) -> int:
    points = _grid_points(cfg)
    channels = [ChannelParams(s, cfg.q) for _, _, s in points]
    table = lab.roc_sweep(cfg.mac, channels, cfg.rho_grid, cfg.trials, cfg.seed,
                          workers=cfg.workers)
    per = len(cfg.rho_grid)
    rows = []
    for i, p in enumerate(table):
        rows.append((float(points[i // per][0]), p.rho, p.alpha_hat, p.alpha_closed,
                     p.beta_hat, p.beta_closed, p.stderr_alpha, p.stderr_beta))
    _write_csv(cfg, ["EbN0_dB", "rho", "alpha_hat", "alpha_closed", "beta_hat",
                     "beta_closed", "stderr_a", "stderr_b"], rows, stdout)
    return EXIT_OK


def attack_report(cfg: ExperimentConfig) -> dict:
    """Tiny-instance checks of the equivocation, sphere-packing and spoofing inequalities."""
    if cfg.n > ATTACK_MAX_N or cfg.l > ATTACK_MAX_L:
        raise UsageError(f"attack instances are limited to n <= {ATTACK_MAX_N}, "
                         f"l <= {ATTACK_MAX_L} (got n={cfg.n}, l={cfg.l})")
    mac = cfg.mac
    msgs = [f"{cfg.msg}/{i}".encode() for i in range(cfg.r)]
    nxt = f"{cfg.msg}/next".encode()
    rate = coding_rate(cfg.n, cfg.r, cfg.l)
    points = []
    for db, gamma_t, sigma in _grid_points(cfg):
        ch = ChannelParams(sigma, None)
        err, err_se = lab.ml_error_rate(mac, ch, None, msgs, cfg.trials, cfg.seed, cfg.workers)
        h, h_se = lab.exact_equivocation(mac, ch, None, msgs, cfg.trials, cfg.seed,
                                         workers=cfg.workers)
        mi, mi_se = lab.mutual_information_estimate(mac, ch, None, msgs, nxt, cfg.trials,
                                                    cfg.seed, cfg.workers)
        spoof, spoof_se = lab.optimal_spoof_success(mac, ch, None, msgs, nxt, cfg.trials,
                                                    cfg.seed, cfg.workers)
        if math.isfinite(gamma_t):
            lb = equivocation_lower_bound(cfg.n, cfg.l, cfg.r, gamma_t)
            sp = sp59_bound(cfg.r * cfg.l, min(rate, 1.0), gamma_t)
        else:
            lb, sp = 0.0, 0.0
        spoof_lb = 2.0 ** (-mi)
        spoof_tol = 3 * math.hypot(spoof_se, math.log(2) * spoof_lb * mi_se)
        points.append({
            "EbN0_dB": db, "gamma_t": gamma_t, "sigma_w": sigma,
            "ml_error_rate": err, "ml_error_stderr": err_se, "sp59_bound": sp,
            "lemma2_holds": err >= sp - 3 * err_se,
            "equivocation_bits": h, "equivocation_stderr": h_se,
            "equivocation_lower_bound_bits": lb,
            "theorem6_holds": h >= lb - 3 * h_se,
            "spoof_success": spoof, "spoof_stderr": spoof_se,
            "mutual_information_bits": mi, "mutual_information_stderr": mi_se,
            "spoof_lower_bound": spoof_lb,
            "theorem4_holds": spoof >= spoof_lb - spoof_tol,
        })
    return {
        "n": cfg.n, "l": cfg.l, "r": cfg.r, "prf": cfg.prf, "trials": cfg.trials,
        "seed": cfg.seed, "points": points,
        "lemma2_holds": all(p["lemma2_holds"] for p in points),
        "theorem6_holds": all(p["theorem6_holds"] for p in points),
        "theorem4_holds": all(p["theorem4_holds"] for p in points),
    }


def run_attack(cfg: ExperimentConfig, stdout=sys.stdout) -> int:
    report = attack_report(cfg)
    _emit(cfg, json.dumps(report, indent=2, sort_keys=True) + "\n", stdout)
    return EXIT_OK


def _cmd_keygen(args, stdout) -> int:
    cfg = build_config("keygen", args)
    key = gen_key(MacParams(cfg.n, max(cfg.l, 1), cfg.prf), cfg.seed)
    _emit(cfg, key.hex() + "\n", stdout)
    return EXIT_OK


def _message(args) -> bytes:
    if args.msg_hex is not None:
        return bytes.fromhex(args.msg_hex)
    return (args.msg or "").encode()


def _cmd_tag(args, stdout) -> int:
    cfg = build_config("tag", args)
    if not args.key:
        raise UsageError("tag needs --key")
    key = SecretKey.from_hex(args.key, cfg.n)
    ch = ChannelParams(cfg.sigma_w, cfg.q)
    frame = encode_packet(make_ana_tag(key, _message(args), cfg.mac, ch, cfg.seed), ch)
    if cfg.out:
        Path(cfg.out).write_bytes(frame)
    else:
        stdout.write(frame.hex() + "\n")
    return EXIT_OK


def _cmd_verify(args, stdout) -> int:
    cfg = build_config("verify", args)
    if not args.key or not args.frame:
        raise UsageError("verify needs --key and --frame")
    data = Path(args.frame).read_bytes()
    if data[:4] != b"ANAM":
        data = bytes.fromhex(data.decode().strip())
    noisy, ch = decode_packet(data)
    mac = MacParams(cfg.n, noisy.l, cfg.prf)
    key = SecretKey.from_hex(args.key, cfg.n)
    dec = verify(key, _message(args), noisy, VerifyConfig(cfg.rho, mac, ch))
    out = {"accept": dec.accept, "eta": dec.eta, "threshold": dec.threshold}
    _emit(cfg, json.dumps(out) + "\n", stdout)
    return EXIT_OK


def _experiment(kind, runner):
    def cmd(args, stdout):
        return runner(build_config(kind, args), stdout)
    return cmd


COMMANDS = {
    "keygen": _cmd_keygen,
    "tag": _cmd_tag,
    "verify": _cmd_verify,
    "distance": _experiment("distance", run_distance),
    "bounds": _experiment("bounds", run_bounds),
    "roc": _experiment("roc", run_roc),
    "attack": _experiment("attack", run_attack),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anamac", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--trials", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--l", type=int)
        p.add_argument("--r", type=int)
        p.add_argument("--q")
        p.add_argument("--sigma-w", dest="sigma_w", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--rho-grid", dest="rho_grid")
        p.add_argument("--ebn0-grid", dest="ebn0_grid")
        p.add_argument("--prf")
        p.add_argument("--workers", type=int)
        if name in ("tag", "verify"):
            p.add_argument("--key", help="key as hex, MSB-first")
            p.add_argument("--msg", help="message text (UTF-8)")
            p.add_argument("--msg-hex", dest="msg_hex")
        else:
            p.add_argument("--msg")
        if name == "verify":
            p.add_argument("--frame", help="ANAM frame file (binary or hex)")
    return parser


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = make_parser().parse_args(argv)
        return COMMANDS[args.command](args, stdout)
    except UsageError as exc:
        print(f"anamac: {exc}", file=stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"anamac: I/O error: {exc}", file=stderr)
        return EXIT_IO
    except (ArithmeticError, SolverError) as exc:
        print(f"anamac: numeric failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"anamac: {exc}", file=stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
