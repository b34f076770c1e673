"""Command-line entry point.

Exit codes: 0 success, 2 validation or guard error, 3 I/O error. The fully
resolved configuration of each run is logged to stderr.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import sys

import numpy as np

from . import embeddings as emb
from . import lab
from . import sketch as sk
from .numerics import DimensionError, Exponent, make_rng, read_matrix, write_matrix
from .oracles import best_norm

log = logging.getLogger("qpsketch")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3


def fmt(x) -> str:
    return f"{x:.12g}"


def _exp(text) -> float:
    try:
        return Exponent.parse(text).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    if getattr(args, "entropy", False):
        return int(np.random.SeedSequence().entropy % (2**63))
    raise ValueError("--seed is required (or pass --entropy)")


def _log_config(args, **resolved):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg.update(resolved)
    for k, v in cfg.items():
        if isinstance(v, float) and math.isinf(v):
            cfg[k] = "inf"
    log.info("config %s", json.dumps(cfg, sort_keys=True, default=str))


def _witness_text(w) -> str:
    if w is None:
        return "-"
    if isinstance(w, (int, np.integer)):
        return str(int(w))
    return ",".join(fmt(float(v)) for v in np.ravel(w))


# --- commands ---------------------------------------------------------------

def cmd_gen(args):
    seed = _seed(args)
    _log_config(args, seed=seed)
    kind = "g1_dense" if args.kind == "gaussian" else args.kind
    spec = lab.DistributionSpec(kind, args.n, args.d, r=args.r, alpha=args.alpha,
                                p=args.p, q=args.q, eta=args.eta)
    write_matrix(args.out, lab.sample(spec, make_rng(seed)))


def cmd_exact(args):
    _log_config(args)
    a = read_matrix(args.matrix)
    br = best_norm(a, args.q, args.p, args.eps)
    print(f"{fmt(br.lower)} {fmt(br.upper)} {br.method} {_witness_text(br.witness)}")


def _family_params(args) -> dict:
    params = {}
    if args.r is not None:
        params["r"] = args.r
    if args.B is not None:
        params["B"] = args.B
    if args.k is not None:
        params["k"] = args.k
    for item in args.param or []:
        key, val = item.split("=", 1)
        params[key] = json.loads(val)
    return params


def cmd_sketch(args):
    seed = _seed(args)
    a = read_matrix(args.matrix)
    params = _family_params(args)
    desc = sk.plan(args.family, a.shape[0], a.shape[1], p=args.p, q=args.q, seed=seed, **params)
    _log_config(args, seed=seed, params=dict(desc.params), k=desc.k)
    with open(args.out, "w") as fh:
        fh.write(sk.dumps_state(sk.apply(desc, a)))


def _read_state(path) -> sk.SketchState:
    with open(path) as fh:
        return sk.loads_state(fh.read())


def cmd_estimate(args):
    _log_config(args)
    res = sk.estimate(_read_state(args.state))
    tag = " lower_bound" if res.lower_bound_only else ""
    print(f"{fmt(res.value)} {res.family} {_witness_text(res.witness)}{tag}")


def read_updates(path):
    with open(path) as fh:
        for ln in fh:
            parts = ln.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 3:
                raise ValueError(f"update line must be 'i j delta': {ln.strip()!r}")
            yield int(parts[0]), int(parts[1]), float(parts[2])


def cmd_stream(args):
    _log_config(args)
    state = _read_state(args.state)
    if args.expect and args.expect != state.fingerprint:
        raise ValueError(f"fingerprint mismatch: state {state.fingerprint}, expected {args.expect}")
    count = 0
    for i, j, delta in read_updates(args.updates):
        try:
            sk.update(state, i, j, delta)
        except IndexError as exc:
            raise ValueError(f"update {count}: {exc} (state fingerprint {state.fingerprint})")
        count += 1
    log.info("applied %d updates", count)
    with open(args.out or args.state, "w") as fh:
        fh.write(sk.dumps_state(state))


def cmd_calibrate(args):
    seed = _seed(args)
    _log_config(args, seed=seed)
    entry = emb.calibrate(args.p, args.samples, seed)
    table = emb.CalibrationTable({entry.p: entry})
    text = table.dumps()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def load_config(path) -> dict:
    """key=value lines (``#`` comments) into a dict of strings."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    with open(path) as fh:
        parser.read_string("[run]\n" + fh.read())
    return dict(parser["run"])


def _spec_from(cfg: dict, prefix: str, fallback_kind: str) -> lab.DistributionSpec:
    def get(key, default=None):
        return cfg.get(f"{prefix}_{key}", cfg.get(key, default))

    eta = get("eta")
    return lab.DistributionSpec(
        kind=cfg.get(f"{prefix}_kind", fallback_kind), n=int(get("n")), d=int(get("d", 0)),
        r=int(get("r", 1)), alpha=float(get("alpha", 0.0)), kappa=float(get("kappa", 0.0)),
        p=Exponent.parse(get("p", "2")).value, q=Exponent.parse(get("q", "2")).value,
        eta=None if eta is None else float(eta))


_FAMILY_INT_KEYS = ("r", "B", "k", "copies", "t", "beta", "C")


def cmd_experiment(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else (int(cfg["seed"]) if "seed" in cfg else None)
    if seed is None:
        args.seed = None
        seed = _seed(args)
    trials = int(cfg.get("trials", 50))
    null = _spec_from(cfg, "null", "g1_dense")
    null_alpha_free = lab.DistributionSpec(null.kind, null.n, null.d, null.r, 0.0, null.kappa,
                                           null.p, null.q, null.eta)
    planted = _spec_from(cfg, "planted", "g2_column")
    _log_config(args, seed=seed, trials=trials, null=lab.spec_dict(null_alpha_free),
                planted=lab.spec_dict(planted))
    if args.kind == "separation":
        oracle = lab.NormOracle(Exponent.parse(cfg.get("oracle_q", "1")).value,
                                Exponent.parse(cfg.get("oracle_p", "2")).value,
                                cfg.get("oracle_mode", "auto"))
        rep = lab.separation_experiment(null_alpha_free, planted, oracle, trials, seed)
    else:
        params = {k: int(cfg[f"sketch_{k}"]) for k in _FAMILY_INT_KEYS if f"sketch_{k}" in cfg}
        n, d = planted.shape
        desc = sk.plan(cfg.get("family", "identity"), n, d,
                       p=cfg.get("sketch_p", "2"), q=cfg.get("sketch_q", "1"),
                       seed=int(cfg.get("sketch_seed", seed)), **params)
        rep = lab.distinguisher_experiment(null_alpha_free, planted, desc, trials, seed)
    with open(args.out, "w") as fh:
        fh.write(rep.to_csv())
    for key, v in rep.summary().items():
        print(f"{key} {fmt(v) if isinstance(v, float) else v}")


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qpsketch", description="Sketching q->p matrix norms")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def seeded(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--entropy", action="store_true", help="draw and log a fresh seed")

    g = sub.add_parser("gen", help="sample a matrix to the text format")
    g.add_argument("kind", choices=("gaussian",) + lab.KINDS)
    g.add_argument("n", type=int)
    g.add_argument("d", type=int)
    g.add_argument("-o", "--out", required=True)
    g.add_argument("--r", type=int, default=1)
    g.add_argument("--alpha", type=float, default=0.0)
    g.add_argument("--p", type=_exp, default=2.0)
    g.add_argument("--q", type=_exp, default=2.0)
    g.add_argument("--eta", type=float)
    seeded(g)
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("exact", help="exact or bracketed q->p norm")
    e.add_argument("matrix")
    e.add_argument("--q", type=_exp, required=True)
    e.add_argument("--p", type=_exp, required=True)
    e.add_argument("--eps", type=float, default=0.1)
    e.set_defaults(func=cmd_exact)

    s = sub.add_parser("sketch", help="compress a matrix into a sketch state file")
    s.add_argument("matrix")
    s.add_argument("--family", required=True, choices=sk.FAMILIES)
    s.add_argument("--p", type=_exp, default=2.0)
    s.add_argument("--q", type=_exp, default=1.0)
    s.add_argument("--r", type=int)
    s.add_argument("--B", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--param", action="append", metavar="KEY=VALUE")
    s.add_argument("-o", "--out", required=True)
    seeded(s)
    s.set_defaults(func=cmd_sketch)

    es = sub.add_parser("estimate", help="estimate the norm from a state file")
    es.add_argument("state")
    es.set_defaults(func=cmd_estimate)

    st = sub.add_parser("stream", help="apply 'i j delta' updates to a state file")
    st.add_argument("state")
    st.add_argument("updates")
    st.add_argument("-o", "--out", help="write here instead of overwriting the state")
    st.add_argument("--expect", help="required state fingerprint")
    st.set_defaults(func=cmd_stream)

    c = sub.add_parser("calibrate", help="Monte Carlo estimator constants")
    c.add_argument("--p", type=_exp, required=True)
    c.add_argument("--samples", type=int, default=emb.DEFAULT_CAL_SAMPLES)
    c.add_argument("-o", "--out")
    seeded(c)
    c.set_defaults(func=cmd_calibrate)

    x = sub.add_parser("experiment", help="separation or distinguisher experiment")
    x.add_argument("--kind", required=True, choices=("separation", "distinguish"))
    x.add_argument("--config", required=True)
    x.add_argument("-o", "--out", required=True)
    seeded(x)
    x.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="# %(message)s", stream=sys.stderr, force=True)
    # The resolved config is always logged, regardless of verbosity.
    log.setLevel(logging.INFO)
    try:
        args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, DimensionError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
