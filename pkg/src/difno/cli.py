"""Command-line entry point.

Subcommands: gen-data, train, eval, invert, verify, report.  Every command
reads one flat config file, honors --seed/--out overrides, and echoes the
resolved configuration into a manifest so a run can be reproduced from its
own outputs.  Exit codes: 0 success, 2 configuration error, 3 numeric
failure, 4 IO failure.

Heavy imports happen inside the command functions: DIFNO_THREADS must be
turned into BLAS thread caps before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys


class NumericError(RuntimeError):
    pass


_SPLITS = ("train", "val", "test")
_INVERT_SEED_OFFSET = 1_000_003


def _apply_thread_cap() -> str | None:
    cap = os.environ.get("DIFNO_THREADS", "").strip()
    if not cap:
        return None
    try:
        workers = int(cap)
    except ValueError:
        return f"DIFNO_THREADS must be an integer, got {cap!r}"
    if workers < 1:
        return f"DIFNO_THREADS must be >= 1, got {workers}"
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, str(workers))
    return None


def _parser():
    p = argparse.ArgumentParser(
        prog="difno",
        description="Derivative-informed Fourier neural operator toolkit.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "gen-data": "sample inputs, solve the operator, write dataset splits",
        "train": "fit the network, write checkpoint and history CSV",
        "eval": "per-sample relative errors on the test split",
        "invert": "solve the regularized inverse problem",
        "verify": "certify the activation-construction lemmas",
        "report": "render loss/error curves and fields to SVG + CSV",
    }
    for name in ("gen-data", "train", "eval", "invert", "verify", "report"):
        q = sub.add_parser(name, help=helps[name])
        q.add_argument("--config", required=True, help="flat key = value config file")
        q.add_argument("--seed", type=int, default=None, help="override the seed key")
        q.add_argument("--out", default=None, help="override the out directory")
        q.add_argument("--resume", default=None, help="checkpoint to continue from")
    return p


# ---------------------------------------------------------------------------
# shared plumbing

def _write_bytes(path, text: str):
    with open(path, "wb") as fh:
        fh.write(text.encode("utf-8"))


def _out_dir(cfg) -> str:
    path = cfg["out"]
    os.makedirs(path, exist_ok=True)
    return path


def _data_dir(cfg) -> str:
    return cfg["data.dir"] or cfg["out"]


def _grid(cfg):
    from . import spectral as sp
    return sp.GridSpec(cfg["grid.dim"], cfg["grid.n"])


def _grf(cfg, seed: int):
    from . import datagen
    return datagen.GrfSpec(cfg["grf.omega"], cfg["grf.rho"], cfg["grf.tau"],
                           seed=seed)


def _operator(cfg, grid):
    from . import datagen
    from .config import ConfigError
    kind = cfg["data.operator"]
    if kind == "toy":
        return datagen.ToyOperator(grid, cutoff=cfg["toy.cutoff"])
    if kind == "pde":
        spec = datagen.PdeSpec(
            datagen.bump_forcing(grid, width=cfg["pde.forcing_width"],
                                 amplitude=cfg["pde.forcing_amp"]),
            newton_tol=cfg["pde.newton_tol"],
            max_newton=cfg["pde.max_newton"],
            lin_tol=cfg["pde.lin_tol"],
        )
        return datagen.PdeOperator(spec, grid)
    raise ConfigError(f"data.operator must be toy or pde, got {kind!r}")


def _activation():
    from .activations import GeluLike
    return GeluLike("normal")


def _manifest_text(cfg, meta: dict) -> str:
    lines = [cfg.render().rstrip("\n")]
    for k in sorted(meta):
        lines.append(f"# meta: {k} = {meta[k]}")
    return "\n".join(lines) + "\n"


def _read_meta(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# meta: ") and "=" in line:
                k, v = line[len("# meta: "):].split("=", 1)
                out[k.strip()] = v.strip()
    return out


def _fno_config(cfg, in_channels, out_channels):
    from . import fno
    grid_n = cfg["fno.grid_n"] or cfg["grid.n"]
    return fno.FnoConfig(
        dim=cfg["grid.dim"], in_channels=in_channels,
        out_channels=out_channels, width=cfg["fno.width"],
        depth=cfg["fno.depth"], modes=cfg["fno.modes"], grid_n=grid_n,
    )


def _to_grid(values, src_grid, dst_grid):
    """Batch transport (N, C, *shape) between grids; identity when equal."""
    import numpy as np
    from . import spectral as sp
    if src_grid.n == dst_grid.n:
        return values
    return np.stack([
        sp.resample(sp.GridFunction(v, src_grid), dst_grid).values
        for v in values
    ])


def _load_bases(cfg, ddir):
    """ReducedBasis pair from the dataset's basis container + manifest meta."""
    import numpy as np
    from . import container, spectral as sp
    from .bases import ReducedBasis
    rec = container.load_arrays(os.path.join(ddir, "bases.difn"))
    meta = _read_meta(os.path.join(ddir, "manifest.txt"))
    for name in ("in_fields", "in_eigs", "out_fields", "out_eigs"):
        if name not in rec:
            raise container.ContainerError(
                f"bases.difn is missing record {name!r}")
    n_in = rec["in_fields"].shape[-1]
    bgrid = sp.GridSpec(cfg["grid.dim"], n_in)
    in_inner = _grf(cfg, 0).inner()
    out_inner = sp.InnerProduct()
    in_b = ReducedBasis(rec["in_fields"], bgrid, in_inner,
                        meta.get("in_basis", "in"), eigenvalues=rec["in_eigs"])
    out_b = ReducedBasis(rec["out_fields"], bgrid, out_inner,
                         meta.get("out_basis", "out"),
                         eigenvalues=rec["out_eigs"])
    return in_b, out_b


def _csv(rows, header) -> str:
    lines = [",".join(header)]
    for r in rows:
        cells = []
        for v in r:
            cells.append(f"{v:.17g}" if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# gen-data

def cmd_gen_data(cfg, args) -> int:
    import numpy as np
    from . import container, datagen, reduction, spectral as sp
    from .config import ConfigError

    grid = _grid(cfg)
    ddir = _data_dir(cfg)
    os.makedirs(ddir, exist_ok=True)
    jm = cfg["data.jacobian"]
    if jm not in ("none", "full", "reduced", "coarse"):
        raise ConfigError(f"data.jacobian must be none|full|reduced|coarse, got {jm!r}")
    op = _operator(cfg, grid)
    cutoff = cfg["grf.cutoff"] or None
    counts = {s: cfg[f"data.count_{s}"] for s in _SPLITS}
    seeds = {s: cfg["seed"] * 3 + i for i, s in enumerate(_SPLITS)}

    in_basis = out_basis = None
    if jm != "none":
        # train-side contract: reduced/full bases live on the network's
        # canonical grid, coarse bases strictly below it
        canon_n = cfg["fno.grid_n"] or grid.n
        bgrid = sp.GridSpec(grid.dim, canon_n)
        if jm == "coarse":
            bn = cfg["data.coarse_n"] or canon_n // 2
            if bn >= canon_n:
                raise ConfigError(
                    f"data.coarse_n={bn} must be below the canonical grid "
                    f"n={canon_n} for mixed-resolution targets")
            bgrid = sp.GridSpec(grid.dim, bn)
        in_inner = _grf(cfg, 0).inner()
        out_inner = sp.InnerProduct()
        if jm == "full":
            from .bases import sinusoid_channel_basis
            in_basis = sinusoid_channel_basis(bgrid, bgrid.max_band, 1, in_inner)
            out_basis = sinusoid_channel_basis(bgrid, bgrid.max_band, 1, out_inner)
        else:
            r_in = cfg["reduction.rank_in"]
            r_out = cfg["reduction.rank_out"]
            from .reduction import kle_basis, pca_from_samples
            in_basis = kle_basis(bgrid, bgrid.max_band, 1, in_inner, rank=r_in)
            if cfg["reduction.out_basis"] == "kle":
                out_basis = kle_basis(bgrid, bgrid.max_band, 1, out_inner,
                                      rank=r_out)
            elif cfg["reduction.out_basis"] == "pod":
                warm, _ = datagen.generate_dataset(
                    _grf(cfg, seeds["train"]), None, grid, counts["train"],
                    operator=op, cutoff=cutoff)
                us = np.stack([
                    sp.resample(s.u, bgrid).values for s in warm])
                out_basis = pca_from_samples(us, bgrid, out_inner, r_out)
            else:
                raise ConfigError(
                    f"reduction.out_basis must be pod or kle, "
                    f"got {cfg['reduction.out_basis']!r}")

    meta = {
        "operator": type(op).__name__,
        "jacobian_provenance": "none",
    }
    for split in _SPLITS:
        samples, man = datagen.generate_dataset(
            _grf(cfg, seeds[split]), None, grid, counts[split],
            jacobian_mode=jm, in_basis=in_basis, out_basis=out_basis,
            coarse_native=cfg["data.coarse_native"], operator=op,
            cutoff=cutoff)
        a, u, jac = datagen.dataset_arrays(samples)
        arrays = {"a": a, "u": u}
        if jac is not None:
            arrays["jac"] = jac
        container.save_arrays(os.path.join(ddir, f"{split}.difn"), arrays)
        meta[f"seed_{split}"] = str(seeds[split])
        meta[f"count_{split}"] = str(counts[split])
        meta["jacobian_provenance"] = man["jacobian_provenance"]
        print(f"gen-data: {split}: {counts[split]} samples "
              f"(grf seed {seeds[split]})")
    if in_basis is not None:
        container.save_arrays(os.path.join(ddir, "bases.difn"), {
            "in_fields": in_basis.fields,
            "in_eigs": in_basis.eigenvalues,
            "out_fields": out_basis.fields,
            "out_eigs": out_basis.eigenvalues,
        })
        meta["in_basis"] = in_basis.label
        meta["out_basis"] = out_basis.label
        meta["basis_grid_n"] = str(in_basis.grid.n)
    _write_bytes(os.path.join(ddir, "manifest.txt"), _manifest_text(cfg, meta))
    return 0


# ---------------------------------------------------------------------------
# train

_HISTORY_HEADER = ("epoch", "output_loss", "derivative_loss",
                   "val_output_loss", "val_derivative_loss", "lr")


def _history_csv_rows(history):
    rows = []
    for h in history:
        rows.append((h["epoch"], float(h["train_output"]),
                     float(h["train_deriv"]), float(h["val_output"]),
                     float(h["val_deriv"]), float(h["lr"])))
    return rows


def cmd_train(cfg, args) -> int:
    from . import container, losses, training
    from .config import ConfigError

    out = _out_dir(cfg)
    ddir = _data_dir(cfg)
    grid = _grid(cfg)
    mode = cfg["train.mode"]
    if mode not in ("output", "reduced", "full", "mixed-res"):
        raise ConfigError(f"train.mode must be output|reduced|full|mixed-res, "
                          f"got {mode!r}")
    train_path = os.path.join(ddir, "train.difn")
    rec = container.load_arrays(train_path)
    a, u = rec["a"], rec["u"]
    if a.shape[-1] != grid.n:
        raise ConfigError(f"dataset grid n={a.shape[-1]} does not match "
                          f"grid.n={grid.n}")
    in_basis = out_basis = jac = None
    if mode != "output":
        if "jac" not in rec:
            raise ConfigError(
                f"train.mode {mode!r} needs Jacobian targets, but "
                f"{train_path} has no record \"jac\"; rerun gen-data with "
                f"data.jacobian set")
        jac = rec["jac"]
        in_basis, out_basis = _load_bases(cfg, ddir)

    fcfg = _fno_config(cfg, a.shape[1], u.shape[1])
    # the engine runs on the network's canonical grid
    a = _to_grid(a, grid, fcfg.grid)
    u = _to_grid(u, grid, fcfg.grid)
    data = training.TrainData(a, u, jac, in_basis, out_basis)

    val = None
    val_path = os.path.join(ddir, "val.difn")
    if os.path.exists(val_path):
        vrec = container.load_arrays(val_path)
        val = training.TrainData(_to_grid(vrec["a"], grid, fcfg.grid),
                                 _to_grid(vrec["u"], grid, fcfg.grid),
                                 vrec.get("jac") if mode != "output" else None,
                                 in_basis, out_basis)

    act = _activation()
    tc = training.TrainConfig(
        epochs=cfg["train.epochs"], batch_size=cfg["train.batch"],
        lr=cfg["train.lr"], lr_decay=cfg["train.lr_decay"],
        plateau_patience=cfg["train.patience"],
        plateau_min_rel=cfg["train.plateau_rel"],
        deriv_weight=cfg["train.weight"], finetune_epochs=cfg["train.finetune"],
        partition=cfg["train.partition"], seed=cfg["seed"],
        optimizer=cfg["train.optimizer"],
    )
    wt = losses.WeightingTensor(fcfg.grid, "lumped")
    state = None
    if args.resume:
        state = training.checkpoint_load(args.resume, fcfg)
        print(f"train: resuming from {args.resume} at epoch {state.epoch}")

    if mode == "output":
        state, history = training.train_output_only(
            tc, data, fcfg, act, wt=wt, val=val, state=state)
    else:
        state, history = training.train_dino(
            tc, data, fcfg, act, derivative_mode=mode, wt=wt, val=val,
            state=state, sweep=cfg["train.sweep"])

    ckpt = os.path.join(out, "checkpoint.difn")
    training.checkpoint_save(state, ckpt)
    hist_path = os.path.join(out, "history.csv")
    body = _csv(_history_csv_rows(history), _HISTORY_HEADER)
    if args.resume and os.path.exists(hist_path):
        with open(hist_path, "ab") as fh:
            fh.write(body.split("\n", 1)[1].encode("utf-8"))
    else:
        _write_bytes(hist_path, body)
    meta = {"mode": mode, "epochs_run": str(len(history)),
            "data_dir": ddir, "best_val": repr(state.best_val)}
    _write_bytes(os.path.join(out, "train_manifest.txt"),
                 _manifest_text(cfg, meta))
    print(f"train: {len(history)} epochs, checkpoint {ckpt}")
    if state.aborted:
        raise NumericError(
            "training aborted on a non-finite loss; checkpoint holds the "
            "best parameters seen")
    return 0


# ---------------------------------------------------------------------------
# eval

def cmd_eval(cfg, args) -> int:
    import numpy as np
    from . import container, fno, losses, spectral as sp, training

    out = _out_dir(cfg)
    ddir = _data_dir(cfg)
    grid = _grid(cfg)
    test_path = os.path.join(ddir, "test.difn")
    rec = container.load_arrays(test_path)
    a, u = rec["a"], rec["u"]
    fcfg = _fno_config(cfg, a.shape[1], u.shape[1])
    ckpt = cfg["eval.checkpoint"] or os.path.join(cfg["out"], "checkpoint.difn")
    state = training.checkpoint_load(ckpt, fcfg)
    act = _activation()
    wt = losses.WeightingTensor(grid, "lumped")

    deriv = None
    if "jac" in rec:
        in_basis, out_basis = _load_bases(cfg, ddir)
        work = training.DerivWork(fcfg, in_basis, out_basis)
        panels = training.jacobian_panels(state.params, fcfg, act,
                                          _to_grid(a, grid, fcfg.grid), work)
        deriv = []
        for i in range(a.shape[0]):
            model = losses.JacobianMatrix(panels[i], in_basis.label,
                                          out_basis.label)
            target = losses.JacobianMatrix(rec["jac"][i], in_basis.label,
                                           out_basis.label)
            deriv.append(losses.relative_derivative_error(model, target))

    rows = []
    e_out = []
    for i in range(a.shape[0]):
        _, pred = fno.forward(state.params, fcfg,
                              sp.GridFunction(a[i], grid), act, out_grid=grid)
        e = losses.relative_output_error(pred.values, u[i], wt)
        e_out.append(e)
        rows.append((i, float(e), float(deriv[i]) if deriv else float("nan")))
    mean_out = losses.error_summary(e_out)["mean"]
    mean_der = losses.error_summary(deriv)["mean"] if deriv else float("nan")
    rows.append(("mean", float(mean_out), float(mean_der)))
    _write_bytes(os.path.join(out, "metrics.csv"),
                 _csv(rows, ("sample_id", "e_output", "e_derivative")))
    print(f"eval: {a.shape[0]} samples, mean e_output {mean_out:.6g}, "
          f"mean e_derivative {mean_der:.6g}")
    return 0


# ---------------------------------------------------------------------------
# invert

def cmd_invert(cfg, args) -> int:
    import numpy as np
    from . import container, inverse, spectral as sp, training
    from .config import ConfigError

    out = _out_dir(cfg)
    grid = _grid(cfg)
    op = _operator(cfg, grid)
    true_fwd = inverse.ModelForward(op, grid)

    obs_path = cfg["inverse.data"] or os.path.join(out, "observations.difn")
    if os.path.exists(obs_path):
        rec = container.load_arrays(obs_path)
        for name in ("y_obs", "obs_idx", "gamma"):
            if name not in rec:
                raise container.ContainerError(
                    f"observations file {obs_path} is missing record {name!r}")
        obs_idx = np.rint(rec["obs_idx"]).astype(np.int64)
        y_obs = rec["y_obs"]
        gamma = float(rec["gamma"][0])
        a_true = None
        if "a_true" in rec:
            a_true = sp.GridFunction(rec["a_true"], grid)
    else:
        obs_idx = inverse.observation_points(grid, cfg["inverse.obs_per_axis"])
        grf = _grf(cfg, cfg["seed"] * 3 + _INVERT_SEED_OFFSET)
        from .datagen import sample_grf
        a_true = sample_grf(grf, grid, 1)[0]
        y_obs, gamma = inverse.make_data(
            true_fwd, a_true, obs_idx, noise_pct=cfg["inverse.noise_pct"],
            seed=cfg["seed"])
        container.save_arrays(obs_path, {
            "obs_idx": obs_idx.astype(np.float64),
            "y_obs": y_obs,
            "gamma": np.array([gamma]),
            "a_true": a_true.values,
        })
        print(f"invert: synthesized observations into {obs_path}")

    if cfg["inverse.reg"] == "cm":
        reg = _grf(cfg, 0).inner()
    elif cfg["inverse.reg"] == "l2":
        reg = sp.InnerProduct()
    else:
        raise ConfigError(f"inverse.reg must be cm or l2, got {cfg['inverse.reg']!r}")
    spec = inverse.InverseSpec(grid, obs_idx, y_obs, gamma,
                               cfg["inverse.beta"], reg)

    kind = cfg["inverse.forward"]
    if kind == "fno":
        ckpt = cfg["eval.checkpoint"] or os.path.join(cfg["out"],
                                                      "checkpoint.difn")
        fcfg = _fno_config(cfg, 1, 1)
        state = training.checkpoint_load(ckpt, fcfg)
        fwd = inverse.SurrogateForward(state.params, fcfg, _activation(), grid)
    elif kind in ("toy", "pde"):
        fwd = true_fwd
    else:
        raise ConfigError(f"inverse.forward must be fno|toy|pde, got {kind!r}")

    if cfg["inverse.warm_start"]:
        if a_true is None:
            raise container.ContainerError(
                f"observations file {obs_path} is missing record 'a_true' "
                f"needed for inverse.warm_start")
        a0 = a_true
    else:
        a0 = sp.GridFunction(np.zeros((1,) + grid.shape), grid)

    rep = inverse.solve_inverse(
        spec, fwd, a0, method=cfg["inverse.method"], gtol=cfg["inverse.gtol"],
        max_iter=cfg["inverse.max_iter"])
    if not all(np.isfinite(rep.history)):
        raise NumericError("inverse objective became non-finite")

    if kind == "fno":
        ev = inverse.residual_bound_eval(spec, true_fwd, fwd, rep.a_dagger)
        rep.e0, rep.e1 = ev["e0"], ev["e1"]
        rep.bound_lhs, rep.bound_rhs = ev["lhs"], ev["rhs"]
    if cfg["inverse.reference"]:
        ref = container.load_arrays(cfg["inverse.reference"])
        if "a_dagger" not in ref:
            raise container.ContainerError(
                f"reference file {cfg['inverse.reference']} is missing "
                f"record 'a_dagger'")
        rep.reference_error = inverse.compare_to_reference(
            rep.a_dagger, sp.GridFunction(ref["a_dagger"], grid))

    arrays = {
        "a_dagger": rep.a_dagger.values,
        "history": np.asarray(rep.history),
        "grad_norm": np.array([rep.grad_norm]),
        "iterations": np.array([float(rep.iterations)]),
        "converged": np.array([1.0 if rep.converged else 0.0]),
    }
    if a_true is not None:
        arrays["a_true"] = a_true.values
        arrays["error_field"] = rep.a_dagger.values - a_true.values
    for name in ("e0", "e1", "bound_lhs", "bound_rhs", "reference_error"):
        v = getattr(rep, name)
        if v is not None:
            arrays[name] = np.array([v])
    container.save_arrays(os.path.join(out, "invert.difn"), arrays)
    _write_bytes(os.path.join(out, "invert_history.csv"),
                 _csv([(i, float(f)) for i, f in enumerate(rep.history)],
                      ("iteration", "objective")))
    meta = {"forward": kind, "reason": rep.reason,
            "grad_norm": repr(rep.grad_norm),
            "iterations": str(rep.iterations),
            "converged": str(rep.converged).lower()}
    if rep.reference_error is not None:
        meta["reference_error"] = repr(rep.reference_error)
    _write_bytes(os.path.join(out, "invert_manifest.txt"),
                 _manifest_text(cfg, meta))
    print(f"invert: {kind} forward, {rep.iterations} iterations, "
          f"grad norm {rep.grad_norm:.6g} ({rep.reason})")
    if rep.reference_error is not None:
        print(f"invert: relative error vs reference {rep.reference_error:.6g}")
    return 0


# ---------------------------------------------------------------------------
# verify

def _lemma_rows(cfg):
    import numpy as np
    from . import activations as ac, spectral as sp

    act = _activation()
    eps1 = cfg["verify.eps_c1"]
    eps2 = cfg["verify.eps_regime"]
    radius = cfg["verify.radius"]
    grid_fine = np.arange(-radius, radius + eps1 / 10.0, eps1 / 10.0)
    rows = []

    cal = ac.calibrate_clip(act, radius, eps1)
    v_err = float(np.max(np.abs(ac.clip_eval(act, grid_fine, cal.theta, cal.b)
                                - grid_fine)))
    d_err = float(np.max(np.abs(ac.clip_deriv(act, grid_fine, cal.theta, cal.b)
                                - 1.0)))
    rows.append(("clip", eps1, radius, cal.theta, cal.b,
                 max(v_err, d_err), cal.bound))

    cal = ac.calibrate_cutoff(act, radius, eps2)
    lo = np.arange(0.0, radius + eps2 / 10.0, eps2 / 10.0)
    hi = np.arange(4.0 * radius, 100.0 + 0.05, 0.05)
    e_lo = float(np.max(np.abs(ac.cutoff_eval(act, lo, cal.theta, cal.b) - 1.0)))
    rows.append(("cutoff-low", eps2, radius, cal.theta, cal.b, e_lo, cal.bound))
    e_hi = float(np.max(np.abs(ac.cutoff_eval(act, hi, cal.theta, cal.b))))
    rows.append(("cutoff-high", eps2, radius, cal.theta, cal.b, e_hi, cal.bound))

    cal = ac.calibrate_absval(act, eps1)
    a_err = float(np.max(np.abs(ac.absval_eval(act, grid_fine, cal.theta)
                                - np.abs(grid_fine))))
    rows.append(("absval", eps1, radius, cal.theta, cal.b, a_err, cal.bound))

    cal = ac.calibrate_identity(act, radius, eps1)
    iv = ac.identity_eval(act, grid_fine, cal.theta, cal.b)
    id_d = ac.identity_deriv(act, grid_fine, cal.theta, cal.b)
    i_err = max(float(np.max(np.abs(iv - grid_fine))),
                float(np.max(np.abs(id_d - 1.0))))
    rows.append(("identity", eps1, radius, cal.theta, cal.b, i_err, cal.bound))

    # band-limited L1-mass cutoff functional: indicator regimes and the
    # recorded operator bounds, on seeded random fields
    fgrid = sp.GridSpec(2, 16)
    params = ac.cutoff_functional_params(act, dim=2, cutoff=3, b=5.0, eps=eps2)
    e_low = e_high = 0.0
    vmax = dmax = 0.0
    rng = np.random.default_rng([cfg["seed"], 77])
    for i in range(20):
        f = sp.GridFunction(rng.standard_normal((2,) + fgrid.shape), fgrid)
        f = sp.project_modes(f, 3)
        mass = fgrid.cell_measure * np.sum(np.abs(f.values))
        low = sp.GridFunction(f.values * (0.5 * params.b / mass), fgrid)
        high = sp.GridFunction(f.values * (1.5 * (params.b + 1.0) / mass), fgrid)
        e_low = max(e_low, abs(ac.cutoff_functional(act, low, params) - 1.0))
        e_high = max(e_high, abs(ac.cutoff_functional(act, high, params)))
    for i in range(1000):
        scale = 3.0 * (params.b + 1.0) * rng.random()
        f = sp.GridFunction(scale * rng.standard_normal((2,) + fgrid.shape),
                            fgrid)
        f = sp.project_modes(f, 3)
        vmax = max(vmax, abs(ac.cutoff_functional(act, f, params)))
        df = ac.cutoff_functional_deriv(act, f, params)
        dmax = max(dmax, float(np.sqrt(fgrid.cell_measure
                                       * np.sum(df.values**2))))
    rows.append(("functional-low", eps2, params.b, params.theta_cut,
                 params.b, e_low, params.m_cut))
    rows.append(("functional-high", eps2, params.b, params.theta_cut,
                 params.b, e_high, params.m_cut))
    rows.append(("functional-value-bound", eps2, params.b, params.theta_cut,
                 params.b, vmax, params.m_cut))
    rows.append(("functional-deriv-bound", eps2, params.b, params.theta_abs,
                 params.b, dmax, params.m))
    return rows


def cmd_verify(cfg, args) -> int:
    out = _out_dir(cfg)
    rows = _lemma_rows(cfg)
    failures = []
    for name, eps, radius, theta, b, achieved, bound in rows:
        limit = bound if name.endswith("bound") else eps
        status = "pass" if achieved <= limit else "FAIL"
        if status == "FAIL":
            failures.append(name)
        print(f"verify: {name:24s} achieved {achieved:.3e} "
              f"limit {limit:.3e}  {status}")
    _write_bytes(os.path.join(out, "lemmas.csv"),
                 _csv(rows, ("lemma", "eps", "R", "theta", "b",
                             "achieved", "bound")))
    if failures:
        print(f"verify: FAILED: {', '.join(failures)}", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# report

def cmd_report(cfg, args) -> int:
    from . import container, report

    out = _out_dir(cfg)
    hist_path = cfg["report.history"] or os.path.join(cfg["out"], "history.csv")
    series = {}
    if os.path.exists(hist_path):
        with open(hist_path, "r", encoding="utf-8") as fh:
            series = report.history_series(fh.read())
    _write_bytes(os.path.join(out, "report.svg"),
                 report.render_curves(series, "training history",
                                      "epoch", "loss"))
    _write_bytes(os.path.join(out, "report.csv"), report.series_csv(series))

    if cfg["report.metrics"]:
        with open(cfg["report.metrics"], "r", encoding="utf-8") as fh:
            header, rows = report.read_csv(fh.read())
        mseries = {}
        for ci, name in enumerate(header[1:], start=1):
            pts = []
            for r in rows:
                if r[0] == "mean":
                    continue
                try:
                    pts.append((float(r[0]), float(r[ci])))
                except ValueError:
                    continue
            if pts:
                mseries[name] = pts
        _write_bytes(os.path.join(out, "metrics.svg"),
                     report.render_curves(mseries, "test errors by sample",
                                          "sample", "relative error"))

    if cfg["report.field"]:
        rec = container.load_arrays(cfg["report.field"])
        name = "error_field" if "error_field" in rec else "field"
        if name not in rec:
            raise container.ContainerError(
                f"{cfg['report.field']} has no 'field' or 'error_field' record")
        vals = rec[name]
        while vals.ndim > 2:
            vals = vals[0]
        _write_bytes(os.path.join(out, "field.svg"),
                     report.render_heatmap(vals, name))
    print(f"report: wrote SVG/CSV into {out}")
    return 0


# ---------------------------------------------------------------------------

_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "invert": cmd_invert,
    "verify": cmd_verify,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    err = _apply_thread_cap()
    if err:
        print(f"difno: config error: {err}", file=sys.stderr)
        return 2
    from . import config as cfgmod
    from .container import ContainerError
    try:
        cfg = cfgmod.load_config(args.config)
        if args.seed is not None:
            cfg.set("seed", args.seed)
        if args.out is not None:
            cfg.set("out", args.out)
        return _COMMANDS[args.command](cfg, args)
    except cfgmod.ConfigError as e:
        print(f"difno: config error: {e}", file=sys.stderr)
        return 2
    except ContainerError as e:
        print(f"difno: io error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"difno: io error: {e}", file=sys.stderr)
        return 4
    except ValueError as e:
        # module-level validation rejecting config-derived values
        print(f"difno: config error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"difno: numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
