"""Training loops: conventional output fitting, derivative-informed fitting
with reduced or mixed-resolution Jacobian targets, warm starts, gradient
accumulation over Jacobian column partitions, and checkpointing.

Determinism discipline: every stochastic choice is drawn from a stream
derived as (seed, epoch), so the epoch counter is the whole rng state and
resuming from a checkpoint replays the exact uninterrupted trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container, fno, losses
from .bases import ReducedBasis

_OPTIMIZERS = ("adam", "lbfgs", "gd")
_MODES = ("full", "reduced", "mixed-res")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    lr: float = 1e-3
    lr_decay: float = 0.1
    plateau_patience: int = 25
    plateau_min_rel: float = 1e-4
    deriv_weight: float = 1.0
    finetune_epochs: int = 0
    partition: int = 0  # Jacobian columns per accumulation block; 0 = all
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 0 or self.finetune_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in _OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {_OPTIMIZERS}")


@dataclass
class TrainData:
    """Canonical-grid training arrays plus the bases the Jacobians live in."""

    a: np.ndarray  # (m, cin, *shape)
    u: np.ndarray  # (m, cout, *shape)
    jac: np.ndarray | None = None  # (m, r_out, r_in)
    in_basis: ReducedBasis | None = None
    out_basis: ReducedBasis | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.a.shape[0] != self.u.shape[0]:
            raise ValueError("a and u sample counts differ")
        if self.jac is not None:
            self.jac = np.asarray(self.jac, dtype=np.float64)
            if self.jac.shape[0] != self.a.shape[0]:
                raise ValueError("jacobian sample count differs")
            if self.in_basis is None or self.out_basis is None:
                raise ValueError("jacobian targets need both bases")
            if self.jac.shape[1:] != (self.out_basis.rank, self.in_basis.rank):
                raise ValueError(
                    f"jacobian shape {self.jac.shape[1:]} does not match bases "
                    f"({self.out_basis.rank}, {self.in_basis.rank})"
                )

    @property
    def count(self):
        return self.a.shape[0]


def train_data_from_samples(samples, in_basis=None, out_basis=None) -> TrainData:
    """Stack dataset samples; basis labels are checked against the Jacobians."""
    a = np.stack([s.a.values for s in samples])
    u = np.stack([s.u.values for s in samples])
    jac = None
    if samples and samples[0].jacobian is not None and in_basis is not None:
        first = samples[0].jacobian
        if first.in_label != in_basis.label:
            raise ValueError(
                f"jacobian in-basis {first.in_label!r} does not match "
                f"{in_basis.label!r}"
            )
        if out_basis is not None and first.out_label != out_basis.label:
            raise ValueError(
                f"jacobian out-basis {first.out_label!r} does not match "
                f"{out_basis.label!r}"
            )
        jac = np.stack([s.jacobian.values for s in samples])
    return TrainData(a, u, jac, in_basis, out_basis)


# ---------------------------------------------------------------------------
# optimizers

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(state: AdamState, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Advance the moments in place; returns the parameter update to add."""
    g = np.asarray(grads)
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * g
    state.v = beta2 * state.v + (1.0 - beta2) * g * g
    mhat = state.m / (1.0 - beta1**state.t)
    vhat = state.v / (1.0 - beta2**state.t)
    return -lr * mhat / (np.sqrt(vhat) + eps)


class LbfgsMemory:
    """Two-loop L-BFGS direction with Armijo backtracking line search."""

    def __init__(self, memory=10, c1=1e-4, max_backtracks=40):
        self.s, self.y, self.rho = [], [], []
        self.memory = memory
        self.c1 = c1
        self.max_backtracks = max_backtracks

    def direction(self, g):
        q = np.asarray(g, dtype=np.float64).copy()
        alphas = []
        for s, y, rho in zip(reversed(self.s), reversed(self.y), reversed(self.rho)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if self.y:
            y = self.y[-1]
            q *= (self.s[-1] @ y) / (y @ y)
        else:
            q /= max(float(np.max(np.abs(q))) if q.size else 1.0, 1.0)
        for (s, y, rho), a in zip(zip(self.s, self.y, self.rho), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q

    def push(self, s, yv):
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            self.s.append(s)
            self.y.append(yv)
            self.rho.append(1.0 / sy)
            if len(self.s) > self.memory:
                self.s.pop(0)
                self.y.pop(0)
                self.rho.pop(0)

    def step(self, fun_grad, x, f, g):
        """One quasi-Newton step; returns (x, f, g, moved)."""
        d = self.direction(g)
        slope = float(g @ d)
        if slope >= 0:  # curvature safeguard: fall back to steepest descent
            d = -g
            slope = float(g @ d)
        step = 1.0
        for _ in range(self.max_backtracks):
            xn = x + step * d
            fn, gn = fun_grad(xn)
            if np.isfinite(fn) and fn <= f + self.c1 * step * slope:
                self.push(xn - x, gn - g)
                return xn, fn, gn, True
            step *= 0.5
        return x, f, g, False


def lbfgs_minimize(fun_grad, x0, max_iter=100, memory=10, gtol=1e-10,
                   c1=1e-4, max_backtracks=40, callback=None):
    """Minimize fun_grad(x) -> (f, g); returns (x, info with history/reason)."""
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = fun_grad(x)
    mem = LbfgsMemory(memory, c1, max_backtracks)
    history = [f]
    reason = "max_iter"
    for _ in range(max_iter):
        if not np.isfinite(f):
            reason = "non-finite"
            break
        if (float(np.max(np.abs(g))) if g.size else 0.0) <= gtol:
            reason = "gtol"
            break
        x, f, g, moved = mem.step(fun_grad, x, f, g)
        if not moved:
            reason = "line_search"
            break
        history.append(f)
        if callback is not None:
            callback(x, f)
    return x, {"fun": f, "history": history, "reason": reason,
               "iterations": len(history) - 1}


# ---------------------------------------------------------------------------
# derivative-loss machinery

def _sweep_choice(sweep, r_in, r_out):
    if sweep in ("forward", "reverse"):
        return sweep
    return "forward" if r_in <= r_out else "reverse"


def _blocks(total, size):
    size = total if size in (0, None) else min(size, total)
    return [np.arange(s, min(s + size, total)) for s in range(0, total, size)]


def _tile(fields, batch):
    return np.broadcast_to(fields[None], (batch,) + fields.shape).copy()


class DerivWork:
    """Canonical-grid transports of the Jacobian bases, built once per run."""

    def __init__(self, cfg, in_basis, out_basis):
        self.in_canon = fno._basis_to_canonical(in_basis, cfg)
        self.cot_canon = fno._cotangents_to_canonical(
            out_basis, cfg, np.eye(out_basis.rank)
        )
        self.r_in = in_basis.rank
        self.r_out = out_basis.rank
        self.spat = "xyz"[: cfg.dim]

    def panel(self, params, cfg, tape, cols):
        """Jacobian columns J[b, :, cols] via a tangent sweep."""
        t = _tile(self.in_canon[cols], tape.batch)
        du = fno.jvp_values(params, cfg, tape, t)
        ein = f"jc{self.spat},bmc{self.spat}->bjm"
        return t, np.einsum(ein, self.cot_canon, du)

    def rows(self, params, cfg, tape, rows_idx):
        """Jacobian rows J[b, rows, :] via an adjoint sweep."""
        c = _tile(self.cot_canon[rows_idx], tape.batch)
        q = fno.vjp_values(params, cfg, tape, c)
        ein = f"bjc{self.spat},kc{self.spat}->bjk"
        return c, np.einsum(ein, q, self.in_canon)


def derivative_grads(params, cfg, act, tape, jac_target, work: DerivWork,
                     weight, partition=0, sweep="auto", u_bar=None):
    """Gradient of the weighted derivative loss (plus the output term when
    u_bar is given) for one batch.

    Returns (grads, deriv_loss) where deriv_loss = mean_b ||J_model(b) -
    J_target(b)||_F^2.  Its gradient is accumulated over column blocks
    (forward sweep) or row blocks (reverse sweep); the bilinear pass is
    additive over tangent/cotangent pairs, so any partition reproduces the
    unpartitioned result.
    """
    mode = _sweep_choice(sweep, work.r_in, work.r_out)
    scale = 2.0 * weight / tape.batch
    g = fno._zero_grads(params)
    sq_sum = 0.0
    first = True
    if mode == "forward":
        for cols in _blocks(work.r_in, partition):
            t, jpan = work.panel(params, cfg, tape, cols)
            res = jpan - jac_target[:, :, cols]
            sq_sum += float(np.sum(res * res))
            c = np.einsum("bjm,j...->bm...", scale * res, work.cot_canon)
            g, _ = fno.bilinear_grad(
                params, cfg, tape, act, t, c,
                u_bar=u_bar if first else None, g=g,
            )
            first = False
    else:
        for rows_idx in _blocks(work.r_out, partition):
            c, jrows = work.rows(params, cfg, tape, rows_idx)
            res = jrows - jac_target[:, rows_idx, :]
            sq_sum += float(np.sum(res * res))
            t = np.einsum("bjk,k...->bj...", res, work.in_canon)
            g, _ = fno.bilinear_grad(
                params, cfg, tape, act, t, scale * c,
                u_bar=u_bar if first else None, g=g,
            )
            first = False
    if first and u_bar is not None:  # rank-zero edge: nothing but the output term
        fno._accumulate_primal(
            params, cfg, tape, fno._nyquist_project(u_bar, cfg.dim), None, g
        )
    return g, sq_sum / tape.batch


def jacobian_panels(params, cfg, act, a_values, work: DerivWork,
                    partition=0, batch_size=16):
    """Model Jacobians (m, r_out, r_in) for evaluation, forward sweeps."""
    m = a_values.shape[0]
    out = np.empty((m, work.r_out, work.r_in))
    for start in range(0, m, batch_size):
        idx = np.arange(start, min(start + batch_size, m))
        tape, _ = fno.forward_values(params, cfg, a_values[idx], act)
        for cols in _blocks(work.r_in, partition):
            _, jpan = work.panel(params, cfg, tape, cols)
            out[np.ix_(idx, np.arange(work.r_out), cols)] = jpan
    return out


# ---------------------------------------------------------------------------
# training state and checkpoints

@dataclass
class TrainState:
    params: fno.FnoParams
    adam: AdamState
    epoch: int = 0
    lr: float = 1e-3
    bad_epochs: int = 0
    best_val: float = np.inf
    best_flat: np.ndarray | None = None
    aborted: bool = False


def init_state(cfg: fno.FnoConfig, tc: TrainConfig,
               params: fno.FnoParams | None = None) -> TrainState:
    params = params.copy() if params is not None else fno.init_params(cfg, tc.seed)
    n = params.to_flat().size
    return TrainState(params, AdamState(np.zeros(n), np.zeros(n)), lr=tc.lr)


def checkpoint_save(state: TrainState, path):
    flat = state.params.to_flat()
    container.save_arrays(path, {
        "params": flat,
        "adam_m": state.adam.m,
        "adam_v": state.adam.v,
        "best_params": state.best_flat if state.best_flat is not None else flat,
        "scalars": np.array([
            float(state.adam.t), float(state.epoch), state.lr,
            float(state.bad_epochs), state.best_val, float(state.aborted),
        ]),
    })


def checkpoint_load(path, cfg: fno.FnoConfig) -> TrainState:
    rec = container.load_arrays(path)
    for key in ("params", "adam_m", "adam_v", "best_params", "scalars"):
        if key not in rec:
            raise container.ContainerError(f"checkpoint misses record {key!r}")
    t, epoch, lr, bad, best_val, aborted = rec["scalars"]
    return TrainState(
        params=fno.params_from_flat(cfg, rec["params"]),
        adam=AdamState(rec["adam_m"], rec["adam_v"], t=int(t)),
        epoch=int(epoch),
        lr=float(lr),
        bad_epochs=int(bad),
        best_val=float(best_val),
        best_flat=rec["best_params"],
        aborted=bool(aborted),
    )


# ---------------------------------------------------------------------------
# the epoch engine

def _phase_weight(tc: TrainConfig, epoch: int, derivative: bool) -> float:
    if not derivative:
        return 0.0
    if tc.finetune_epochs > 0 and epoch < tc.epochs:
        return 0.0  # output-only warm-start phase
    return tc.deriv_weight


def _total_epochs(tc: TrainConfig, derivative: bool) -> int:
    return tc.epochs + (tc.finetune_epochs if derivative else 0)


def evaluate_losses(params, cfg, act, data: TrainData, wt, work=None,
                    weight=0.0, partition=0):
    """(output loss, derivative loss or nan) on a whole dataset."""
    _, u = fno.forward_values(params, cfg, data.a, act)
    out = losses.output_loss(u, data.u, wt)
    der = float("nan")
    if weight > 0.0 and data.jac is not None and work is not None:
        jm = jacobian_panels(params, cfg, act, data.a, work, partition)
        der = float(np.mean(np.sum((jm - data.jac) ** 2, axis=(1, 2))))
    return out, der


def _train_engine(tc: TrainConfig, data: TrainData, cfg: fno.FnoConfig, act,
                  wt=None, val: TrainData | None = None,
                  state: TrainState | None = None, derivative=False,
                  sweep="auto", stop_epoch=None):
    wt = wt or losses.WeightingTensor(cfg.grid, "lumped")
    if state is None:
        state = init_state(cfg, tc)
    work = None
    if derivative:
        if data.jac is None:
            raise ValueError("derivative training needs Jacobian targets")
        work = DerivWork(cfg, data.in_basis, data.out_basis)

    def full_batch_fg(weight):
        def fg(x):
            p = fno.params_from_flat(cfg, x)
            tape, u = fno.forward_values(p, cfg, data.a, act,
                                         second_order=weight > 0)
            u_bar = losses.output_loss_grad(u, data.u, wt)
            f = losses.output_loss(u, data.u, wt)
            if weight > 0:
                g, dsq = derivative_grads(
                    p, cfg, act, tape, data.jac, work, weight,
                    tc.partition, sweep, u_bar=u_bar)
                f += weight * dsq
            else:
                g = fno.param_grad(p, cfg, tape, u_bar)
            return f, fno.symmetrize(g, cfg).to_flat()
        return fg

    history = []
    end = _total_epochs(tc, derivative)
    if stop_epoch is not None:
        end = min(end, stop_epoch)
    m = data.count
    lmem = None
    lpoint = None  # (f, g) at the current params for the lbfgs path
    while state.epoch < end:
        epoch = state.epoch
        weight = _phase_weight(tc, epoch, derivative)
        if (derivative and tc.finetune_epochs > 0 and epoch == tc.epochs
                and tc.deriv_weight > 0):
            # the objective changes here, so plateau bookkeeping restarts
            state.lr = tc.lr
            state.bad_epochs = 0
            state.best_val = np.inf
            lmem = None  # quasi-Newton memory is stale across objectives
        rng = np.random.default_rng([tc.seed, epoch])
        perm = rng.permutation(m)
        if tc.optimizer == "lbfgs":
            fg = full_batch_fg(weight)
            if lmem is None:
                lmem = LbfgsMemory()
                lpoint = fg(state.params.to_flat())
            x, f, g, moved = lmem.step(fg, state.params.to_flat(), *lpoint)
            if not moved:
                break
            lpoint = (f, g)
            state.params = fno.symmetrize(fno.params_from_flat(cfg, x), cfg)
        else:
            for start in range(0, m, tc.batch_size):
                idx = perm[start : start + tc.batch_size]
                tape, u = fno.forward_values(
                    state.params, cfg, data.a[idx], act, second_order=weight > 0
                )
                u_bar = losses.output_loss_grad(u, data.u[idx], wt)
                if weight > 0:
                    grads, _ = derivative_grads(
                        state.params, cfg, act, tape, data.jac[idx], work,
                        weight, tc.partition, sweep, u_bar=u_bar)
                else:
                    grads = fno.param_grad(state.params, cfg, tape, u_bar)
                gflat = fno.symmetrize(grads, cfg).to_flat()
                if tc.optimizer == "adam":
                    delta = adam_step(state.adam, gflat, state.lr)
                else:  # plain gradient descent
                    delta = -state.lr * gflat
                state.params = fno.symmetrize(
                    fno.params_from_flat(cfg, state.params.to_flat() + delta), cfg
                )
        tr_out, tr_der = evaluate_losses(
            state.params, cfg, act, data, wt, work, weight, tc.partition)
        if val is not None:
            va_out, va_der = evaluate_losses(
                state.params, cfg, act, val, wt, work, weight, tc.partition)
        else:
            va_out, va_der = tr_out, tr_der
        score = va_out + (weight * va_der if weight > 0 else 0.0)
        row = {
            "epoch": epoch, "train_output": tr_out, "train_deriv": tr_der,
            "val_output": va_out, "val_deriv": va_der, "lr": state.lr,
        }
        if not np.isfinite(score):
            state.aborted = True
            if state.best_flat is not None:
                state.params = fno.params_from_flat(cfg, state.best_flat)
            row["best_val"] = state.best_val
            history.append(row)
            break
        if score >= state.best_val * (1.0 - tc.plateau_min_rel):
            state.bad_epochs += 1
            if tc.optimizer != "lbfgs" and state.bad_epochs > tc.plateau_patience:
                state.lr *= tc.lr_decay
                state.bad_epochs = 0
        else:
            state.bad_epochs = 0
        if score < state.best_val:
            state.best_val = score
            state.best_flat = state.params.to_flat()
        state.epoch += 1
        row["best_val"] = state.best_val
        history.append(row)
    return state, history


def train_output_only(tc: TrainConfig, data: TrainData, cfg: fno.FnoConfig,
                      act, wt=None, val=None, state=None, stop_epoch=None):
    """Mean-squared output fitting; returns (TrainState, history rows)."""
    return _train_engine(tc, data, cfg, act, wt, val, state,
                         derivative=False, stop_epoch=stop_epoch)


def train_dino(tc: TrainConfig, data: TrainData, cfg: fno.FnoConfig, act,
               derivative_mode: str = "reduced", wt=None, val=None,
               state=None, sweep="auto", stop_epoch=None):
    """Joint output and Jacobian fitting.

    derivative_mode declares what the Jacobian targets are and is checked
    against the bases: "full" spans the complete retained band of the
    canonical grid, "reduced" is any subspace on the canonical grid,
    "mixed-res" has its bases declared on a strictly coarser grid.  With
    tc.finetune_epochs > 0 the first tc.epochs are an output-only warm
    start and the derivative term enters afterwards.
    """
    if derivative_mode not in _MODES:
        raise ValueError(f"derivative_mode must be one of {_MODES}")
    if data.jac is None:
        raise ValueError("train_dino needs Jacobian targets in the dataset")
    bin_, bout = data.in_basis, data.out_basis
    if derivative_mode == "mixed-res":
        if bin_.grid.n >= cfg.grid_n or bout.grid.n >= cfg.grid_n:
            raise ValueError("mixed-res expects bases on a coarser grid")
    else:
        if bin_.grid != cfg.grid or bout.grid != cfg.grid:
            raise ValueError(f"{derivative_mode} expects bases on the canonical grid")
        if derivative_mode == "full":
            per_ch = (2 * cfg.grid.max_band + 1) ** cfg.dim
            if (bin_.rank != cfg.in_channels * per_ch
                    or bout.rank != cfg.out_channels * per_ch):
                raise ValueError("full mode expects complete-band bases")
    return _train_engine(tc, data, cfg, act, wt, val, state,
                         derivative=True, sweep=sweep, stop_epoch=stop_epoch)
