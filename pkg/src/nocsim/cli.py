"""Command-line driver.

    nocsim codebook --length 128 --users 3 --angle 50 --out book.txt
    nocsim train    --config cfg.json
    nocsim eval     --config cfg.json [--checkpoint path]
    nocsim mismatch --config cfg.json [--checkpoint path] [--snr 10]
    nocsim baseline cdma --users 3 --snr 0:2:10 --out ber.csv
    nocsim default-config > cfg.json

Exit codes: 0 ok, 2 config error, 3 codebook target unreachable,
4 training divergence, 5 checkpoint/config dimension mismatch.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import baselines as bl
from .codebook import (Codebook, NocGenConfig, generate_noc, load_codebook, pairwise_angles, save_codebook,
                       walsh_matrix)
from .errors import ConfigError, DivergenceDetected, FormatError, NocError, TargetUnreachable
from .losses import LossWeights
from .metrics import MetricsConfig, cross_projection_matrix
from .model import ModelDims, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, collect, evaluate, mismatch_eval, train

log = logging.getLogger("nocsim")

EXIT_OK, EXIT_CONFIG, EXIT_CODEBOOK, EXIT_DIVERGENCE, EXIT_DIMS = 0, 2, 3, 4, 5
CONFIG_VERSION = 1

DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    "codebook": {"path": None, "length": 128, "num_users": 3, "theta_deg": 50.0, "iters": 100,
                 "tolerance": 2.0, "seed": 0},
    "channel": {"kind": "awgn", "snr_train_db": [0.0, 15.0], "snr_eval_db": [0.0, 5.0, 10.0, 15.0, 20.0],
                "power": 1.0},
    "model": asdict(ModelDims()),
    "train": {"num_users": 2, "learning_rate": 1e-3, "epochs": 30, "batch_size": 32, "steps_per_epoch": 20,
              "optimizer": "adam", "lr_schedule": "constant", "seed": 0, "lambda_fair": 0.01, "lambda_orth": 0.01,
              "dataset_size": 2048, "noiseless": False},
    "metrics": asdict(MetricsConfig()),
    "eval": {"seed": 1, "num_batches": 8, "batch_size": 32, "mismatch_snr_db": 10.0},
    "output_dir": "runs/default",
}

# column order is part of the file format; never reorder
LOSS_TRACE_COLUMNS = ("epoch", "recon", "fair", "orth", "total", "config_hash", "seed")
PER_SNR_COLUMNS = ("snr_db", "user", "mse", "psnr_db", "orth_loss", "config_hash", "seed")
MISMATCH_COLUMNS = ("tx_user", "rx_codeword", "snr_db", "mse", "psnr_db", "matched", "config_hash", "seed")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# -- configuration ---------------------------------------------------------

def _merge_checked(base: dict, over: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key '{where}{k}'")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key '{where}{k}' must be an object")
            out[k] = _merge_checked(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def resolve_config(raw: dict) -> dict:
    """Fill defaults, reject unknown keys and check cross-section consistency."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config 'version' must be {CONFIG_VERSION}, got {raw.get('version')!r}")
    cfg = _merge_checked(DEFAULT_CONFIG, raw, "")
    book, model, tr = cfg["codebook"], cfg["model"], cfg["train"]
    if book["path"] is None and model["code_length"] != book["length"]:
        raise ConfigError(f"model.code_length={model['code_length']} must equal codebook.length={book['length']}")
    if book["path"] is None and tr["num_users"] > book["num_users"]:
        raise ConfigError(f"train.num_users={tr['num_users']} exceeds codebook.num_users={book['num_users']} "
                          "(need N <= K)")
    lo_hi = cfg["channel"]["snr_train_db"]
    if not (isinstance(lo_hi, list) and len(lo_hi) == 2):
        raise ConfigError("channel.snr_train_db must be [lo, hi]")
    return cfg


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical resolved config; ``output_dir`` is excluded so
    moving a run does not change its identity."""
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return resolve_config(raw)


def seeds_of(cfg: dict) -> dict:
    return {"codebook": cfg["codebook"]["seed"], "train": cfg["train"]["seed"], "eval": cfg["eval"]["seed"]}


def build_codebook(cfg: dict) -> Codebook:
    b = cfg["codebook"]
    if b["path"] is not None:
        book = load_codebook(b["path"])
    else:
        book = generate_noc(NocGenConfig(b["length"], b["num_users"], float(b["theta_deg"]), iters=b["iters"],
                                         tolerance=float(b["tolerance"]), seed=b["seed"]))
    if book.length != cfg["model"]["code_length"]:
        raise ConfigError(f"codebook length {book.length} != model.code_length {cfg['model']['code_length']}")
    if cfg["train"]["num_users"] > book.num_users:
        raise ConfigError(f"train.num_users={cfg['train']['num_users']} exceeds codebook K={book.num_users}")
    return book


def train_config(cfg: dict, book: Codebook) -> TrainConfig:
    t, ch = cfg["train"], cfg["channel"]
    try:
        dims = ModelDims(**cfg["model"])
    except TypeError as exc:
        raise ConfigError(f"model section: {exc}") from exc
    return TrainConfig(book, num_users=t["num_users"], learning_rate=float(t["learning_rate"]), epochs=t["epochs"],
                       batch_size=t["batch_size"], steps_per_epoch=t["steps_per_epoch"],
                       snr_range_db=tuple(float(s) for s in ch["snr_train_db"]), channel=ch["kind"], seed=t["seed"],
                       weights=LossWeights(float(t["lambda_fair"]), float(t["lambda_orth"])), dims=dims,
                       optimizer=t["optimizer"], dataset_size=t["dataset_size"], power=float(ch["power"]),
                       noiseless=bool(t["noiseless"]), lr_schedule=t["lr_schedule"])


# -- output helpers ----------------------------------------------------------

def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (r[c] for c in columns)])


def _write_matrix_csv(path: Path, m, stamp: dict) -> None:
    n = len(m)
    cols = ["user"] + [f"u{j + 1}" for j in range(n)] + ["config_hash", "seed"]
    rows = [dict({"user": i + 1, "config_hash": stamp["config_hash"], "seed": stamp["seed"]},
                 **{f"u{j + 1}": float(m[i][j]) for j in range(n)}) for i in range(n)]
    _write_csv(path, cols, rows)


def _out_dir(cfg: dict, override) -> Path:
    d = Path(override if override is not None else cfg["output_dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_model_for(cfg: dict, ckpt_path: Path):
    try:
        model, extra = load_checkpoint(ckpt_path)
    except FileNotFoundError as exc:
        raise ConfigError(f"checkpoint not found: {ckpt_path}") from exc
    want = ModelDims(**cfg["model"])
    if model.dims != want:
        raise CliError(f"checkpoint dims {asdict(model.dims)} do not match config model {asdict(want)}", EXIT_DIMS)
    return model, extra


# -- subcommands ---------------------------------------------------------------

def cmd_codebook(args) -> int:
    cfg = NocGenConfig(args.length, args.users, args.angle, iters=args.iters, tolerance=args.tolerance,
                       seed=args.seed)
    book = generate_noc(cfg)
    ang = pairwise_angles(book)
    K = book.num_users
    if args.out:
        out = Path(args.out)
        save_codebook(book, out)
        rows = [{"i": i + 1, "j": j + 1, "dot": int(book.gram()[i, j]), "angle_deg": float(ang[i, j]),
                 "target_deg": float(args.angle), "seed": args.seed}
                for i in range(K) for j in range(i + 1, K)]
        _write_csv(out.with_name(out.name + ".angles.csv"), ("i", "j", "dot", "angle_deg", "target_deg", "seed"),
                   rows)
    print(f"target dot {cfg.target_dot} ({math.degrees(math.acos(cfg.target_dot / cfg.length)):.3f} deg)")
    for i in range(K):
        for j in range(i + 1, K):
            print(f"c{i + 1}.c{j + 1} = {int(book.gram()[i, j]):4d}  angle {ang[i, j]:.3f} deg")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    h = config_hash(cfg)
    book = build_codebook(cfg)
    tc = train_config(cfg, book)
    out = _out_dir(cfg, args.out_dir)
    seeds = seeds_of(cfg)
    try:
        model, report = train(tc)
    except DivergenceDetected as exc:
        if exc.report is not None:
            _write_json(out / "train_report.json", dict(exc.report.as_dict(), config_hash=h, seeds=seeds,
                                                        status="diverged", message=str(exc)))
        raise
    stamp = {"config_hash": h, "seed": tc.seed}
    _write_csv(out / "loss_trace.csv", LOSS_TRACE_COLUMNS,
               [dict(t.as_dict(), epoch=e + 1, **stamp) for e, t in enumerate(report.trace)])
    doc = dict(report.as_dict(), config_hash=h, seeds=seeds, status="ok", config=cfg,
               complex_symbols_per_image=tc.dims.complex_symbols, num_users=tc.num_users)
    _write_json(out / "train_report.json", doc)
    save_checkpoint(model, out / "checkpoint.json", {"config_hash": h, "seeds": seeds})
    log.info("training wall clock %.1f s", report.wall_clock)
    print(f"wrote {out}/checkpoint.json, train_report.json, loss_trace.csv (config {h})")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    h = config_hash(cfg)
    out = _out_dir(cfg, args.out_dir)
    model, _ = _load_model_for(cfg, Path(args.checkpoint) if args.checkpoint else out / "checkpoint.json")
    book = build_codebook(cfg)
    ev, ch, mc = cfg["eval"], cfg["channel"], cfg["metrics"]
    N = cfg["train"]["num_users"]
    rep = evaluate(model, book, ch["snr_eval_db"], ch["kind"], ev["num_batches"], ev["seed"], N, ev["batch_size"],
                   ch["power"])
    xproj = None
    if N >= 2:
        snr_mid = float(np.mean(cfg["channel"]["snr_train_db"]))
        feats = np.concatenate([r.features for r in collect(model, book, snr_mid, ch["kind"], ev["num_batches"],
                                                            ev["seed"], N, ev["batch_size"], power=ch["power"])],
                               axis=1)
        xproj = cross_projection_matrix(feats, mc["subspace_rank"]).tolist()
    stamp = {"config_hash": h, "seed": ev["seed"]}
    rows = [{"snr_db": p["snr_db"], "user": u + 1, "mse": p["mse"][u], "psnr_db": p["psnr_db"][u],
             "orth_loss": p["orth_loss"], **stamp} for p in rep["per_snr"] for u in range(N)]
    _write_csv(out / "metrics_per_snr.csv", PER_SNR_COLUMNS, rows)
    _write_matrix_csv(out / "cosine_matrix.csv", rep["cosines"], stamp)
    _write_matrix_csv(out / "angle_matrix.csv", rep["angles_deg"], stamp)
    doc = dict(rep, config_hash=h, seeds=seeds_of(cfg), cross_projection=xproj,
               projection_threshold=mc["projection_threshold"], complex_symbols_per_image=model.dims.complex_symbols)
    _write_json(out / "metrics.json", doc)
    print(f"mean |cos| {rep['mean_abs_cosine']:.4f}; wrote metrics to {out} (config {h})")
    return EXIT_OK


def cmd_mismatch(args) -> int:
    cfg = load_config(args.config)
    h = config_hash(cfg)
    out = _out_dir(cfg, args.out_dir)
    model, _ = _load_model_for(cfg, Path(args.checkpoint) if args.checkpoint else out / "checkpoint.json")
    book = build_codebook(cfg)
    ev, ch = cfg["eval"], cfg["channel"]
    N = cfg["train"]["num_users"]
    snr = float(args.snr if args.snr is not None else ev["mismatch_snr_db"])
    rows = []
    for i in range(1, N + 1):
        for j in range(1, N + 1):
            r = mismatch_eval(model, book, i, j, snr, ev["seed"], N, ev["num_batches"], ev["batch_size"], ch["kind"],
                              ch["power"])
            rows.append(dict(r, matched=int(i == j), config_hash=h, seed=ev["seed"]))
    _write_csv(out / "mismatch_grid.csv", MISMATCH_COLUMNS, rows)
    grid = [[rows[(i * N) + j]["psnr_db"] for j in range(N)] for i in range(N)]
    _write_json(out / "mismatch.json", {"snr_db": snr, "psnr_db": grid, "config_hash": h, "seeds": seeds_of(cfg)})
    for i in range(N):
        print(" ".join(f"{v:7.2f}" for v in grid[i]))
    return EXIT_OK


def parse_snr_grid(text: str) -> list:
    """'0:2:10' (inclusive start:step:stop) or a comma list '0,5,10'."""
    try:
        if ":" in text:
            a, s, b = (float(x) for x in text.split(":"))
            if s <= 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / s + 1e-9)) + 1
            return [a + k * s for k in range(n)]
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR grid '{text}' (use start:step:stop or a,b,c)") from None


def cmd_baseline(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows = []
    snrs = args.snr
    if args.scheme in ("cdma", "bpsk"):
        users = 1 if args.scheme == "bpsk" else args.users
        N = 1 if args.scheme == "bpsk" else args.length
        W = walsh_matrix(N)
        bits = rng.integers(0, 2, size=(users, args.bits), dtype=np.int8)
        for k, snr in enumerate(snrs):
            rt = bl.cdma_roundtrip(bits, W, snr, seed=(args.seed, k))
            rows += bl.ber_rows(args.scheme, snr, rt, args.bits)
    else:
        bits = rng.integers(0, 2, size=(2, args.bits), dtype=np.int8)
        for k, snr in enumerate(snrs):
            rt = bl.noma_sic_roundtrip(bits[0], bits[1], bl.NomaConfig(args.alpha, snr, seed=args.seed + k))
            rows += bl.ber_rows("noma", snr, rt, args.bits)
    h = hashlib.sha256(json.dumps({k: v for k, v in sorted(vars(args).items()) if k not in ("out", "func")},
                                  sort_keys=True).encode()).hexdigest()[:16]
    for r in rows:
        r["theory_ber"] = bl.bpsk_awgn_ber_theory(r["snr_db"])
        r["config_hash"], r["seed"] = h, args.seed
    cols = bl.CSV_COLUMNS + ("theory_ber", "config_hash", "seed")
    if args.out:
        _write_csv(Path(args.out), cols, rows)
    else:
        _write_csv_stream(sys.stdout, cols, rows)
    return EXIT_OK


def _write_csv_stream(fh, columns, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in (r[c] for c in columns)])


def cmd_default_config(args) -> int:
    print(json.dumps(DEFAULT_CONFIG, indent=2))
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nocsim", description="Fixed-angle codeword multi-user semantic link simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("codebook", help="generate a fixed-angle codebook")
    c.add_argument("--length", type=int, default=128)
    c.add_argument("--users", type=int, default=3)
    c.add_argument("--angle", type=float, default=50.0)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--iters", type=int, default=100)
    c.add_argument("--tolerance", type=float, default=2.0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_codebook)

    for name, fn, hlp in (("train", cmd_train, "train from a JSON config"),
                          ("eval", cmd_eval, "per-SNR metrics and feature geometry"),
                          ("mismatch", cmd_mismatch, "matched vs mismatched codeword PSNR grid")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", required=True)
        s.add_argument("--out-dir")
        if name != "train":
            s.add_argument("--checkpoint")
        if name == "mismatch":
            s.add_argument("--snr", type=float)
        s.set_defaults(func=fn)

    b = sub.add_parser("baseline", help="classical multiple-access BER curves")
    b.add_argument("scheme", choices=("cdma", "noma", "bpsk"))
    b.add_argument("--users", type=int, default=3)
    b.add_argument("--length", type=int, default=128, help="Walsh spreading length")
    b.add_argument("--snr", type=parse_snr_grid, default=[0.0, 2.0, 4.0, 6.0, 8.0, 10.0])
    b.add_argument("--bits", type=int, default=10000)
    b.add_argument("--alpha", type=float, default=0.8)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_baseline)

    d = sub.add_parser("default-config", help="print the default JSON config")
    d.set_defaults(func=cmd_default_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TargetUnreachable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODEBOOK
    except DivergenceDetected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, FormatError, NocError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
