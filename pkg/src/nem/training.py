"""EM training loop with a closed-form E-step and an SGD generalized M-step.

The latent ground-truth labels are inferred per bag and relation by a
two-point Bayes update combining the noise channel with the current
classifier output (E-step). The M-step runs a fixed number of Adadelta
minibatch updates against the posterior-weighted cross-entropy. The
posterior is initialized to the observed labels, which anchors the early
iterations to the data.

The baseline trainer is the same loop with the E-step skipped (the posterior
stays frozen at the observed labels), so with a noiseless channel both modes
perform bit-identical computations.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from .channel import NoiseChannel, PROB_FLOOR, DegenerateChannelError, floor_log
from .data import Dataset
from .seeding import make_rng

MODES = ("nem", "baseline")

EVAL_CHUNK = 256


class NonFiniteLossError(RuntimeError):
    """Training produced a non-finite loss; message names bag and iteration."""


@dataclass
class Posterior:
    ids: tuple[str, ...]
    probs: np.ndarray  # (n_bags, |R|), each entry Q(label r applies)

    def __post_init__(self):
        if self.probs.shape[0] != len(self.ids):
            raise ValueError("posterior rows must align with bag ids")
        if self.probs.size and (self.probs.min() < 0 or self.probs.max() > 1):
            raise ValueError("posterior entries must lie in [0, 1]")

    def __getitem__(self, i: int) -> np.ndarray:
        return self.probs[i]


@dataclass
class TrainConfig:
    selector: str = "attention"
    delta: int = 2000  # SGD updates per M-step
    em_iters: int = 20
    batch_size: int = 160
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    learning_rate: float = 1.0
    seed: int = 0
    channel: NoiseChannel | None = None
    phi_update: str = "fixed"  # or "closed_form"
    e_step_probs: str = "eval"  # or "train" (dropout-sampled posteriors)
    convergence_tol: float = 1e-4
    record_timing: bool = False
    encoder: dict = field(default_factory=dict)  # EncoderConfig overrides

    def __post_init__(self):
        if self.delta < 1 or self.batch_size < 1 or self.em_iters < 1:
            raise ValueError("delta, batch_size and em_iters must be >= 1")
        if not 0.0 < self.adadelta_rho < 1.0:
            raise ValueError("adadelta_rho must lie in (0, 1)")
        if self.selector not in enc.SELECTORS:
            raise ValueError(f"unknown selector {self.selector!r}")
        if self.phi_update not in ("fixed", "closed_form"):
            raise ValueError(f"unknown phi_update {self.phi_update!r}")
        if self.e_step_probs not in ("eval", "train"):
            raise ValueError(f"unknown e_step_probs {self.e_step_probs!r}")


@dataclass
class TrainResult:
    params: enc.EncoderParams
    posterior: Posterior
    trace: list[dict] = field(default_factory=list)
    stopped_early: bool = False


def init_posterior(dataset: Dataset) -> Posterior:
    """Initial beliefs equal the observed labels cast to {0.0, 1.0}."""
    ids = tuple(b.id for b in dataset.bags)
    return Posterior(ids, dataset.observed_matrix().astype(np.float64))


def e_step(channel: NoiseChannel, prior: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Posterior Q(y=1) per relation from classifier prior and observed bit."""
    prior = np.clip(np.asarray(prior, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)
    given0, given1 = channel.bit_probs(z)
    num1 = given1 * prior
    num0 = given0 * (1.0 - prior)
    den = num1 + num0
    if np.any(den <= 0.0):
        bad = int(np.flatnonzero(den <= 0.0)[0])
        raise DegenerateChannelError(
            f"relation {bad}: both label hypotheses have probability 0 for z={int(z[bad])}"
        )
    return num1 / den


def _e_step_all(channel: NoiseChannel, priors: np.ndarray, Z: np.ndarray) -> np.ndarray:
    out = np.empty_like(priors)
    for i in range(priors.shape[0]):
        out[i] = e_step(channel, priors[i], Z[i])
    return out


def m_step_loss(q: np.ndarray, probs: np.ndarray, channel: NoiseChannel | None, z) -> float:
    """Negated posterior-weighted complete-data log-likelihood for one bag.

    The channel part is constant in the encoder parameters, so the gradient
    of this loss w.r.t. them equals the soft-target cross-entropy gradient.
    """
    q = np.asarray(q, dtype=np.float64)
    total = enc.soft_cross_entropy(probs, q)
    if channel is not None:
        given0, given1 = channel.bit_probs(np.asarray(z))
        total -= float(np.sum(q * floor_log(given1) + (1.0 - q) * floor_log(given0)))
    return total


def bound_from_probs(
    probs: np.ndarray, q: np.ndarray, channel: NoiseChannel, Z: np.ndarray
) -> float:
    """Variational lower bound on sum_b log p(z_b | bag_b), factorized per relation.

    probs, q and Z are (n_bags, |R|) aligned arrays.
    """
    probs = np.clip(np.asarray(probs, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)
    q = np.asarray(q, dtype=np.float64)
    Z = np.asarray(Z)
    total = 0.0
    for i in range(probs.shape[0]):
        given0, given1 = channel.bit_probs(Z[i])
        qi = q[i]
        p = probs[i]
        term1 = qi * (floor_log(given1) + np.log(p))
        term0 = (1.0 - qi) * (floor_log(given0) + np.log(1.0 - p))
        entropy = -(qi * floor_log(qi) + (1.0 - qi) * floor_log(1.0 - qi))
        total += float(np.sum(term1 + term0 + entropy))
    return total


def lower_bound(
    dataset: Dataset,
    params: enc.EncoderParams,
    channel: NoiseChannel,
    posterior: Posterior,
    selector: str,
) -> float:
    probs = predict_all(params, dataset, selector)
    return bound_from_probs(probs, posterior.probs, channel, dataset.observed_matrix())


def predict(params: enc.EncoderParams, bag, selector: str) -> np.ndarray:
    """Deterministic per-relation probabilities (eval mode)."""
    return enc.forward(params, bag, selector, mode="eval")


def _predict_indices(params, indices, selector) -> np.ndarray:
    out = np.empty((len(indices), params.config.n_relations))
    for lo in range(0, len(indices), EVAL_CHUNK):
        chunk = indices[lo : lo + EVAL_CHUNK]
        out[lo : lo + len(chunk)], _ = enc.run_batch(params, chunk, selector, mode="eval")
    return out


def predict_all(params: enc.EncoderParams, dataset: Dataset, selector: str) -> np.ndarray:
    indices = [enc.bag_index(params.config, b) for b in dataset.bags]
    return _predict_indices(params, indices, selector)


class Adadelta:
    """Adadelta from the original formulation; learning rate scales the step."""

    def __init__(self, params: enc.EncoderParams, rho: float = 0.95, eps: float = 1e-6,
                 learning_rate: float = 1.0):
        self.rho = rho
        self.eps = eps
        self.learning_rate = learning_rate
        self.avg_sq_grad = {n: np.zeros_like(t) for n, t in params.tensors().items()}
        self.avg_sq_step = {n: np.zeros_like(t) for n, t in params.tensors().items()}

    def step(self, params: enc.EncoderParams, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            tensor = getattr(params, name)
            if g.shape != tensor.shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            eg = self.avg_sq_grad[name]
            ed = self.avg_sq_step[name]
            eg *= self.rho
            eg += (1.0 - self.rho) * g * g
            step = -np.sqrt(ed + self.eps) / np.sqrt(eg + self.eps) * g
            ed *= self.rho
            ed += (1.0 - self.rho) * step * step
            tensor += self.learning_rate * step


def closed_form_phi(q: np.ndarray, Z: np.ndarray) -> NoiseChannel:
    """Channel maximizing the expected complete-data likelihood under q.

    phi0[r] is the expected fraction of observed labels among bags believed
    negative; phi1[r] the expected fraction of missing labels among bags
    believed positive. Undetermined entries (no mass) default to 0.
    """
    Z = np.asarray(Z, dtype=np.float64)
    neg_mass = np.sum(1.0 - q, axis=0)
    pos_mass = np.sum(q, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        phi0 = np.where(neg_mass > 0, np.sum((1.0 - q) * Z, axis=0) / neg_mass, 0.0)
        phi1 = np.where(pos_mass > 0, np.sum(q * (1.0 - Z), axis=0) / pos_mass, 0.0)
    return NoiseChannel(np.clip(phi0, 0.0, 1.0), np.clip(phi1, 0.0, 1.0))


class _BatchCycle:
    """One shuffled pass over all bags, reshuffled whenever exhausted."""

    def __init__(self, n: int, batch_size: int, rng):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next_batch(self) -> np.ndarray:
        if self._pos >= self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        batch = self._order[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return batch


def _noise_masks(dataset: Dataset):
    """Boolean masks of injected (z=1, y=0) and original (y=1) non-NA labels."""
    y = dataset.truth_matrix()
    if y is None:
        return None, None
    z = dataset.observed_matrix()
    real = np.ones(len(dataset.catalog), dtype=bool)
    real[dataset.catalog.na_index] = False
    noisy = (z == 1) & (y == 0) & real
    original = (y == 1) & real
    return noisy, original


def _mean_over(mat: np.ndarray, mask) -> float | None:
    if mask is None or not mask.any():
        return None
    return float(mat[mask].mean())


def train(dataset: Dataset, config: TrainConfig, mode: str = "nem") -> TrainResult:
    """Run nEM or baseline training; deterministic given the config seed."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "nem" and config.channel is None:
        raise ValueError("nem mode requires a noise channel")
    if len(dataset) == 0:
        raise ValueError("empty dataset")

    n_rel = len(dataset.catalog)
    channel = config.channel
    if channel is not None and len(channel) != n_rel:
        raise ValueError("channel size does not match catalog")

    spec_echo = dataset.meta.get("spec") or {}
    vocab_size = int(spec_echo.get("vocab_size") or 0) or int(
        max(int(s.tokens.max()) for b in dataset.bags for s in b.sentences) + 1
    )
    econf = config_encoder(config, vocab_size, n_rel)
    params = enc.init_params(econf, make_rng(config.seed, "init"), dataset.catalog.digest())
    optimizer = Adadelta(params, config.adadelta_rho, config.adadelta_eps,
                         config.learning_rate)
    indices = [enc.bag_index(econf, bag) for bag in dataset.bags]

    Z = dataset.observed_matrix().astype(np.float64)
    posterior = init_posterior(dataset)
    Q = posterior.probs
    noisy_mask, orig_mask = _noise_masks(dataset)
    cycle = _BatchCycle(len(dataset), config.batch_size, make_rng(config.seed, "shuffle"))

    trace: list[dict] = []

    def record(it, lb, lb_pre, loss, wall):
        trace.append(
            {
                "iter": it,
                "lower_bound": lb,
                "lower_bound_pre_e": lb_pre,
                "mean_q_noisy": _mean_over(Q, noisy_mask),
                "mean_q_clean": _mean_over(Q, orig_mask),
                "train_loss": loss,
                "wall_ms": wall,
            }
        )

    def eval_probs(it: int) -> np.ndarray:
        if config.e_step_probs == "train" and econf.dropout > 0:
            out = np.empty((len(dataset), n_rel))
            for lo in range(0, len(indices), EVAL_CHUNK):
                chunk = indices[lo : lo + EVAL_CHUNK]
                rng = make_rng(config.seed, "estep-dropout", it, lo)
                out[lo : lo + len(chunk)], _ = enc.run_batch(
                    params, chunk, config.selector, mode="train", rng=rng
                )
            return out
        return _predict_indices(params, indices, config.selector)

    # iteration 0: state after initialization, before any update
    probs_all = _predict_indices(params, indices, config.selector)
    lb0 = _objective(probs_all, Q, channel, Z, mode)
    record(0, lb0, None, None, 0 if config.record_timing else None)

    objective_series = [lb0]
    stopped_early = False
    update_index = 0
    for it in range(1, config.em_iters + 1):
        t_start = time.perf_counter()
        losses = []
        for _ in range(config.delta):
            batch = cycle.next_batch()
            batch_indices = [indices[int(i)] for i in batch]
            grads = enc.zero_grads(params)
            drop_rng = make_rng(config.seed, "dropout", update_index)
            _, loss_sum = enc.run_batch(
                params,
                batch_indices,
                config.selector,
                mode="train",
                rng=drop_rng,
                targets=Q[batch],
                grads=grads,
            )
            if not math.isfinite(loss_sum):
                raise NonFiniteLossError(
                    f"non-finite loss at iteration {it}, update {update_index}, "
                    f"bag {_find_bad_bag(params, dataset, batch, config)}"
                )
            scale = 1.0 / len(batch)
            for name in grads:
                grads[name] *= scale
            optimizer.step(params, grads)
            losses.append(loss_sum * scale)
            update_index += 1

        if mode == "nem" and config.phi_update == "closed_form":
            channel = closed_form_phi(Q, Z)

        probs_all = eval_probs(it)
        if mode == "nem":
            lb_pre = bound_from_probs(probs_all, Q, channel, Z)
            Q = _e_step_all(channel, probs_all, Z)
            lb_post = bound_from_probs(probs_all, Q, channel, Z)
        else:
            lb_pre = None
            lb_post = _objective(probs_all, Q, channel, Z, mode)

        mean_loss = float(np.mean(losses))
        if not math.isfinite(lb_post):
            raise NonFiniteLossError(f"non-finite objective at iteration {it}")
        wall = (
            int(round((time.perf_counter() - t_start) * 1000.0))
            if config.record_timing
            else None
        )
        record(it, lb_post, lb_pre, mean_loss, wall)

        objective_series.append(lb_post)
        if _converged(objective_series, config.convergence_tol):
            stopped_early = it < config.em_iters
            break

    posterior = Posterior(posterior.ids, Q)
    return TrainResult(params=params, posterior=posterior, trace=trace,
                       stopped_early=stopped_early)


def _find_bad_bag(params, dataset, batch, config) -> str:
    """Best-effort diagnosis: name the first bag with a non-finite output."""
    for i in batch:
        bag = dataset.bags[int(i)]
        try:
            probs = enc.forward(params, bag, config.selector, mode="eval")
        except Exception:
            return bag.id
        if not np.all(np.isfinite(probs)):
            return bag.id
    return dataset.bags[int(batch[0])].id


def _objective(probs, Q, channel, Z, mode) -> float:
    """Per-iteration progress metric: the bound (nem) or data log-likelihood."""
    if mode == "nem":
        return bound_from_probs(probs, Q, channel, Z)
    p = np.clip(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return float(np.sum(Z * np.log(p) + (1.0 - Z) * np.log(1.0 - p)))


def _converged(series: list[float], tol: float) -> bool:
    """Two consecutive relative improvements below tol."""
    if len(series) < 3 or tol <= 0:
        return False

    def rel_improvement(prev, cur):
        return abs(cur - prev) / max(1.0, abs(prev))

    return (
        rel_improvement(series[-3], series[-2]) < tol
        and rel_improvement(series[-2], series[-1]) < tol
    )


def config_encoder(config: TrainConfig, vocab_size: int, n_relations: int) -> enc.EncoderConfig:
    """Encoder settings: dataset-derived sizes plus the config's overrides."""
    return enc.EncoderConfig(vocab_size=vocab_size, n_relations=n_relations, **config.encoder)


def train_nem(dataset: Dataset, config: TrainConfig) -> TrainResult:
    return train(dataset, config, mode="nem")


def train_baseline(dataset: Dataset, config: TrainConfig) -> TrainResult:
    return train(dataset, config, mode="baseline")
