"""Unsupervised event detection on phasor streams.

Two detectors share one EventWindow contract:

* a GAN detector — small fully-connected generator/discriminator pair
  trained by alternating gradient ascent on the discriminator and descent
  on the generator against the min-max value function
  ``V(G,D) = E_x[log D(x)] + E_z[log(1 - D(G(z)))]``; windows are scored by
  ``-log D(x)`` (low when the discriminator deems the window real);
* a deterministic statistical baseline — robust rolling z-score on |V| and
  |I| using median/MAD — used as an independent cross-check oracle.

Detection channels per frame: v_mag, i_mag and the voltage-current angle
difference, each normalized to zero mean / unit variance over the training
corpus. The GAN threshold is a quantile of the training-corpus scores, so
the intended workflow is the one used on real feeders: train on a stream's
own history (events included — they are rare) and flag its top-scoring
frames.

All training is single-threaded and seed-deterministic; identical seed,
corpus and config give a bit-identical training log.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError, DomainError, TrainingError
from .phasors import PhasorSample, PhasorStream, wrap_angle_deg

CHANNELS = ("v_mag", "i_mag", "angle_diff")
DEFAULT_WINDOW_FRAMES = 60          # 0.5 s at 120 Hz
DEFAULT_THRESHOLD_QUANTILE = 0.995
DEFAULT_MIN_SEPARATION_S = 0.5
DEFAULT_STEADY_LEN = 60
DEFAULT_STEADY_HORIZON_S = 10.0
STEADY_VARIANCE_FACTOR = 4.0        # cap = factor x global median rolling variance

MODEL_FORMAT = "pmuevents-gan"
MODEL_VERSION = 1


# ---------------------------------------------------------------------------
# windowing and normalization


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel normalization statistics fitted on a training corpus."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    @property
    def key(self) -> str:
        payload = json.dumps([list(self.mean), list(self.std)]).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class WindowTensor:
    """One normalized sliding window, flattened channel-major."""

    values: np.ndarray
    start_us: int
    end_us: int
    stats_key: str


def stream_channels(stream: PhasorStream) -> np.ndarray:
    """(n, 3) array of the detection channels."""
    return np.column_stack([stream.v_mag, stream.i_mag, stream.angle_diff])


def fit_channel_stats(stream: PhasorStream) -> ChannelStats:
    x = stream_channels(stream)
    std = np.maximum(x.std(axis=0), 1e-12)  # constant channels normalize to 0
    return ChannelStats(tuple(map(float, x.mean(axis=0))), tuple(map(float, std)))


def build_windows(
    stream: PhasorStream,
    window_frames: int = DEFAULT_WINDOW_FRAMES,
    stats: ChannelStats | None = None,
    stride: int = 1,
) -> tuple[np.ndarray, np.ndarray, ChannelStats]:
    """Sliding normalized windows over a stream.

    Returns (values (m, 3*window_frames), start indices, stats). Each row
    is the channel-major concatenation [v.., i.., angle..] of one window.
    """
    if window_frames < 1 or stride < 1:
        raise DomainError("window_frames and stride must be >= 1")
    if len(stream) < window_frames:
        raise DomainError("stream shorter than one window")
    if stats is None:
        stats = fit_channel_stats(stream)
    x = stream_channels(stream)
    x = (x - np.array(stats.mean)) / np.array(stats.std)
    sw = np.lib.stride_tricks.sliding_window_view(x, window_frames, axis=0)
    # sw shape: (m, 3, window_frames) -> flatten channel-major
    values = sw[::stride].reshape(sw[::stride].shape[0], -1)
    starts = np.arange(0, len(stream) - window_frames + 1, stride)
    return np.ascontiguousarray(values, dtype=float), starts, stats


def window_tensors(
    stream: PhasorStream,
    window_frames: int = DEFAULT_WINDOW_FRAMES,
    stats: ChannelStats | None = None,
    stride: int = 1,
) -> list[WindowTensor]:
    values, starts, stats = build_windows(stream, window_frames, stats, stride)
    ts = stream.timestamps
    return [
        WindowTensor(
            values=values[k],
            start_us=int(ts[starts[k]]),
            end_us=int(ts[starts[k] + window_frames - 1]),
            stats_key=stats.key,
        )
        for k in range(len(starts))
    ]


# ---------------------------------------------------------------------------
# tiny MLP with explicit backprop


def _init_mlp(sizes: Sequence[int], rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"w{k}"] = rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, fan_out))
        params[f"b{k}"] = np.zeros(fan_out)
    return params


def _n_layers(params: dict[str, np.ndarray]) -> int:
    return sum(1 for k in params if k.startswith("w"))


def _mlp_forward(params, x):
    """tanh hidden layers, linear output; returns output and caches."""
    h = x
    caches = [x]
    n = _n_layers(params)
    for k in range(n):
        z = h @ params[f"w{k}"] + params[f"b{k}"]
        h = np.tanh(z) if k < n - 1 else z
        caches.append(h)
    return h, caches


def _mlp_backward(params, caches, dout):
    """Gradients of a scalar loss wrt params and the input, given dL/dout."""
    n = _n_layers(params)
    grads = {}
    delta = dout
    for k in range(n - 1, -1, -1):
        h_in = caches[k]
        grads[f"w{k}"] = h_in.T @ delta
        grads[f"b{k}"] = delta.sum(axis=0)
        delta = delta @ params[f"w{k}"].T
        if k > 0:
            delta = delta * (1.0 - caches[k] ** 2)  # tanh'
    return grads, delta


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def discriminator_output(dparams, x) -> np.ndarray:
    """D(x) in (0, 1) for a batch of windows (rows)."""
    logits, _ = _mlp_forward(dparams, np.atleast_2d(np.asarray(x, dtype=float)))
    return _sigmoid(logits[:, 0])


def disc_loss_and_grads(dparams, x_real, x_fake):
    """Discriminator ascent objective as a loss (negated V terms).

    L_D = -mean(log D(x_real)) - mean(log(1 - D(x_fake))); gradients are
    exact backprop through the logit formulation (softplus), so they admit
    finite-difference verification.
    """
    s_r, cache_r = _mlp_forward(dparams, x_real)
    s_f, cache_f = _mlp_forward(dparams, x_fake)
    loss = float(np.mean(_softplus(-s_r)) + np.mean(_softplus(s_f)))
    d_sr = -_sigmoid(-s_r) / len(x_real)
    d_sf = _sigmoid(s_f) / len(x_fake)
    g_r, _ = _mlp_backward(dparams, cache_r, d_sr)
    g_f, _ = _mlp_backward(dparams, cache_f, d_sf)
    grads = {k: g_r[k] + g_f[k] for k in g_r}
    return loss, grads


def gen_loss_and_grads(gparams, dparams, z):
    """Generator descent objective: L_G = mean(log(1 - D(G(z)))).

    This is the generator's own term of the min-max value function; descent
    on it is the literal min player's move. Returns the loss and gradients
    wrt generator parameters (the discriminator is frozen).
    """
    x_fake, cache_g = _mlp_forward(gparams, z)
    s_f, cache_d = _mlp_forward(dparams, x_fake)
    loss = float(np.mean(-_softplus(s_f)))
    d_sf = -_sigmoid(s_f) / len(z)
    _, dx = _mlp_backward(dparams, cache_d, d_sf)
    grads, _ = _mlp_backward(gparams, cache_g, dx)
    return loss, grads


def gan_value(gparams, dparams, x_real, z) -> float:
    """Monte-Carlo estimate of V(G, D) on one batch."""
    s_r, _ = _mlp_forward(dparams, x_real)
    x_fake, _ = _mlp_forward(gparams, z)
    s_f, _ = _mlp_forward(dparams, x_fake)
    return float(np.mean(-_softplus(-s_r)) + np.mean(-_softplus(s_f)))


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for k in params:
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1**self.t)
            vhat = self.v[k] / (1 - self.b2**self.t)
            params[k] = params[k] - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# GAN model and training


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    noise_dim: int = 8
    hidden: int = 32
    #: per-player multipliers on learning_rate; a slow generator keeps fake
    #: coverage wide, which sharpens the discriminator as a density contrast
    #: for anomaly scoring (defaults keep the symmetric min-max game)
    d_lr_scale: float = 1.0
    g_lr_scale: float = 1.0
    #: init scale of the generator output layer; > 1 starts fake samples
    #: wider than the data manifold
    g_out_init_scale: float = 1.0


@dataclass
class GanModel:
    """Generator/discriminator parameter sets plus training state."""

    generator: dict[str, np.ndarray]
    discriminator: dict[str, np.ndarray]
    config: TrainConfig
    in_dim: int
    window_frames: int | None
    stats: ChannelStats | None
    training_log: tuple[float, ...]
    training_scores: np.ndarray

    def discriminator_output(self, x) -> np.ndarray:
        return discriminator_output(self.discriminator, x)


def fit_discriminator(
    x_real,
    x_fake,
    epochs: int = 2000,
    learning_rate: float = 0.01,
    seed: int = 0,
    hidden: int = 32,
) -> dict[str, np.ndarray]:
    """Train a discriminator alone, full batch, against fixed samples.

    Encodes arbitrary p_data / p_g masses through sample multiplicity; with
    a frozen generator this converges to D*(x) = p_data / (p_data + p_g).
    """
    x_real = np.atleast_2d(np.asarray(x_real, dtype=float))
    x_fake = np.atleast_2d(np.asarray(x_fake, dtype=float))
    rng = np.random.default_rng(seed)
    dparams = _init_mlp((x_real.shape[1], hidden, hidden, 1), rng)
    opt = _Adam(dparams, learning_rate)
    for epoch in range(epochs):
        loss, grads = disc_loss_and_grads(dparams, x_real, x_fake)
        if not math.isfinite(loss):
            raise TrainingError("non-finite discriminator loss", epoch=epoch)
        opt.step(dparams, grads)
    return dparams


def train_gan(
    corpus,
    config: TrainConfig,
    stats: ChannelStats | None = None,
    window_frames: int | None = None,
) -> GanModel:
    """Alternating min-max training on a corpus of normalized windows.

    corpus is an (n, in_dim) array (or a sequence of WindowTensor). The
    discriminator takes one ascent step and the generator one descent step
    per batch. Deterministic given the seed; raises TrainingError (with the
    epoch) if a loss goes non-finite.
    """
    if isinstance(corpus, (list, tuple)) and corpus and isinstance(corpus[0], WindowTensor):
        keys = {w.stats_key for w in corpus}
        if stats is not None and keys - {stats.key}:
            raise ContractError("corpus windows were normalized with different statistics")
        corpus = np.stack([w.values for w in corpus])
    corpus = np.asarray(corpus, dtype=float)
    if corpus.ndim != 2:
        raise DomainError("corpus must be a 2-D array of windows")
    if config.epochs <= 0 or config.batch_size <= 0 or config.learning_rate <= 0:
        raise DomainError("config values must be positive")
    if len(corpus) < 10 * config.batch_size:
        raise DomainError(
            f"corpus of {len(corpus)} windows is below 10 x batch_size = {10 * config.batch_size}"
        )

    in_dim = corpus.shape[1]
    rng = np.random.default_rng(config.seed)
    gparams = _init_mlp((config.noise_dim, config.hidden, config.hidden, in_dim), rng)
    n_g = _n_layers(gparams)
    gparams[f"w{n_g - 1}"] = gparams[f"w{n_g - 1}"] * config.g_out_init_scale
    dparams = _init_mlp((in_dim, config.hidden, config.hidden, 1), rng)
    d_opt = _Adam(dparams, config.learning_rate * config.d_lr_scale)
    g_opt = _Adam(gparams, config.learning_rate * config.g_lr_scale)

    n = len(corpus)
    log = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        v_sum, v_batches = 0.0, 0
        for lo in range(0, n - config.batch_size + 1, config.batch_size):
            x_real = corpus[order[lo : lo + config.batch_size]]
            z = rng.normal(size=(config.batch_size, config.noise_dim))
            x_fake, _ = _mlp_forward(gparams, z)
            d_loss, d_grads = disc_loss_and_grads(dparams, x_real, x_fake)
            d_opt.step(dparams, d_grads)
            z = rng.normal(size=(config.batch_size, config.noise_dim))
            g_loss, g_grads = gen_loss_and_grads(gparams, dparams, z)
            g_opt.step(gparams, g_grads)
            if not (math.isfinite(d_loss) and math.isfinite(g_loss)):
                raise TrainingError("non-finite loss", epoch=epoch)
            v_sum += gan_value(gparams, dparams, x_real, z)
            v_batches += 1
        epoch_v = v_sum / max(v_batches, 1)
        if not math.isfinite(epoch_v):
            raise TrainingError("non-finite value function", epoch=epoch)
        log.append(epoch_v)

    for params in (gparams, dparams):
        if any(not np.all(np.isfinite(v)) for v in params.values()):
            raise TrainingError("non-finite parameters after training", epoch=config.epochs - 1)

    model = GanModel(
        generator=gparams,
        discriminator=dparams,
        config=config,
        in_dim=in_dim,
        window_frames=window_frames,
        stats=stats,
        training_log=tuple(log),
        training_scores=np.array([]),
    )
    model.training_scores = -np.log(np.maximum(model.discriminator_output(corpus), 1e-300))
    return model


def anomaly_score(model: GanModel, window) -> float | np.ndarray:
    """-log D(x): low for windows the discriminator deems real.

    WindowTensor inputs must carry the model's normalization statistics;
    a mismatch raises ContractError. Raw arrays are trusted.
    """
    if isinstance(window, WindowTensor):
        if model.stats is None or window.stats_key != model.stats.key:
            raise ContractError("window was not normalized with the model's statistics")
        values = window.values
    else:
        values = np.asarray(window, dtype=float)
    single = values.ndim == 1
    d = model.discriminator_output(np.atleast_2d(values))
    scores = -np.log(np.maximum(d, 1e-300))
    return float(scores[0]) if single else scores


# ---------------------------------------------------------------------------
# events


@dataclass(frozen=True)
class EventWindow:
    """A contiguous anomalous slice with its steady flanking windows.

    The interval is [start_us, end_us); pre/post are the nearest flanking
    slices whose per-channel variance is below the stream's steady cap, or
    None (no_steady set) when no such slice exists within the horizon.
    """

    stream_id: str
    start_us: int
    end_us: int
    peak_score: float
    pre: tuple[PhasorSample, ...] | None
    post: tuple[PhasorSample, ...] | None
    no_steady: bool = False

    def __post_init__(self):
        if self.start_us >= self.end_us:
            raise DomainError("event must have start < end")
        if self.pre and self.pre[-1].timestamp >= self.start_us:
            raise DomainError("pre window must end before the event starts")
        if self.post and self.post[0].timestamp < self.end_us:
            raise DomainError("post window must begin after the event ends")


def steady_variance_caps(stream: PhasorStream, steady_len: int = DEFAULT_STEADY_LEN) -> np.ndarray:
    """Per-channel steady cap: 4 x the global median rolling variance."""
    x = stream_channels(stream)
    if len(stream) < steady_len:
        raise DomainError("stream shorter than one steady window")
    sw = np.lib.stride_tricks.sliding_window_view(x, steady_len, axis=0)
    rolling_var = sw.var(axis=2)
    return STEADY_VARIANCE_FACTOR * np.median(rolling_var, axis=0) + 1e-18


def _find_steady_flank(stream, caps, idx, steady_len, horizon_frames, direction):
    """Nearest steady slice before (direction=-1) or after (+1) idx."""
    x = stream_channels(stream)
    n = len(stream)
    step = max(1, steady_len // 4)
    offset = 0
    while offset <= horizon_frames:
        if direction < 0:
            hi = idx - offset
            lo = hi - steady_len
        else:
            lo = idx + offset
            hi = lo + steady_len
        if lo < 0 or hi > n:
            return None
        seg = x[lo:hi]
        if np.all(seg.var(axis=0) <= caps):
            return stream.samples[lo:hi]
        offset += step
    return None


def _merge_candidates(ts_candidates: np.ndarray, min_separation_us: int):
    """Group candidate frame timestamps into intervals."""
    groups = []
    start = prev = int(ts_candidates[0])
    for t in ts_candidates[1:]:
        t = int(t)
        if t - prev > min_separation_us:
            groups.append((start, prev))
            start = t
        prev = t
    groups.append((start, prev))
    return groups


def _events_from_candidates(
    stream, cand_idx, cand_scores, min_separation_s, steady_len, horizon_s
):
    if len(cand_idx) == 0:
        return []
    ts = stream.timestamps
    frame_us = stream.frame_us
    min_sep_us = max(int(round(min_separation_s * 1e6)), int(frame_us))
    caps = steady_variance_caps(stream, steady_len)
    horizon_frames = int(round(horizon_s * 1e6 / frame_us))

    events = []
    for start_ts, last_ts in _merge_candidates(ts[cand_idx], min_sep_us):
        end_ts = int(last_ts + frame_us)  # half-open interval
        sel = (ts[cand_idx] >= start_ts) & (ts[cand_idx] <= last_ts)
        peak = float(np.max(cand_scores[sel]))
        start_idx = int(np.searchsorted(ts, start_ts))
        end_idx = int(np.searchsorted(ts, last_ts, side="right"))
        pre = _find_steady_flank(stream, caps, start_idx, steady_len, horizon_frames, -1)
        post = _find_steady_flank(stream, caps, end_idx, steady_len, horizon_frames, +1)
        events.append(
            EventWindow(
                stream_id=stream.feeder_id,
                start_us=start_ts,
                end_us=end_ts,
                peak_score=peak,
                pre=pre,
                post=post,
                no_steady=pre is None or post is None,
            )
        )
    return events


def detect_events(
    stream: PhasorStream,
    model: GanModel,
    threshold_quantile: float = DEFAULT_THRESHOLD_QUANTILE,
    min_separation: float = DEFAULT_MIN_SEPARATION_S,
    steady_len: int = DEFAULT_STEADY_LEN,
    steady_horizon_s: float = DEFAULT_STEADY_HORIZON_S,
) -> list[EventWindow]:
    """Slide the model's window one frame at a time and flag top scorers.

    A frame is an event candidate when its window's score exceeds the
    threshold_quantile of the model's training scores; candidates closer
    than min_separation merge into one EventWindow. Best used in the
    train-on-own-history workflow (see module docstring), where the
    threshold marks the stream's own rare anomalous frames.
    """
    if not 0.0 < threshold_quantile < 1.0:
        raise DomainError("threshold_quantile must be in (0, 1)")
    if model.stats is None or model.window_frames is None:
        raise ContractError("model lacks stream statistics; train it on stream windows")
    values, starts, _ = build_windows(stream, model.window_frames, model.stats)
    scores = anomaly_score(model, values)
    threshold = float(np.quantile(model.training_scores, threshold_quantile))
    mask = scores > threshold
    centers = starts + model.window_frames // 2
    return _events_from_candidates(
        stream, centers[mask], scores[mask], min_separation, steady_len, steady_horizon_s
    )


def detect_events_baseline(
    stream: PhasorStream,
    z_threshold: float = 5.0,
    window: int = 121,
    min_separation: float = DEFAULT_MIN_SEPARATION_S,
    steady_len: int = DEFAULT_STEADY_LEN,
    steady_horizon_s: float = DEFAULT_STEADY_HORIZON_S,
) -> list[EventWindow]:
    """Deterministic cross-check detector: rolling median/MAD z-score.

    A sample is a candidate when its robust z-score on |V| or |I| exceeds
    z_threshold against a centered rolling window. Same EventWindow
    contract as detect_events; no training.
    """
    if window < 10:
        raise DomainError("window must be >= 10 samples")
    if len(stream) < window:
        raise DomainError("stream shorter than the rolling window")
    z = np.zeros(len(stream))
    for channel in (stream.v_mag, stream.i_mag):
        z = np.maximum(z, _robust_z(channel, window))
    cand = np.nonzero(z > z_threshold)[0]
    return _events_from_candidates(
        stream, cand, z[cand], min_separation, steady_len, steady_horizon_s
    )


def _robust_z(x: np.ndarray, window: int) -> np.ndarray:
    # residual from the rolling median, so a trending baseline (production
    # ramp) is not read as spread; one global MAD per channel keeps the
    # scale from dipping on locally quiet stretches
    med = _rolling_median(x, window)
    resid = x - med
    mad = float(np.median(np.abs(resid - np.median(resid))))
    scale = 1.4826 * mad + 1e-9 * (float(np.median(np.abs(med))) + 1.0)
    return np.abs(resid) / scale


def _rolling_median(x: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    padded = np.pad(x, half, mode="reflect")
    sw = np.lib.stride_tricks.sliding_window_view(padded, window)[: len(x)]
    return np.median(sw, axis=1)


def event_from_interval(
    stream: PhasorStream,
    start_us: int,
    end_us: int,
    steady_len: int = DEFAULT_STEADY_LEN,
    steady_horizon_s: float = DEFAULT_STEADY_HORIZON_S,
    peak_score: float = float("nan"),
) -> EventWindow:
    """Build an EventWindow (with steady flanks) from a known interval."""
    ts = stream.timestamps
    caps = steady_variance_caps(stream, steady_len)
    horizon = int(round(steady_horizon_s * 1e6 / stream.frame_us))
    start_idx = int(np.searchsorted(ts, start_us))
    end_idx = int(np.searchsorted(ts, end_us))
    pre = _find_steady_flank(stream, caps, start_idx, steady_len, horizon, -1)
    post = _find_steady_flank(stream, caps, end_idx, steady_len, horizon, +1)
    return EventWindow(
        stream_id=stream.feeder_id,
        start_us=int(start_us),
        end_us=int(end_us),
        peak_score=peak_score,
        pre=pre,
        post=post,
        no_steady=pre is None or post is None,
    )


# ---------------------------------------------------------------------------
# serialization


def event_to_record(event: EventWindow) -> dict:
    """JSON-ready record; sample slices are stored as interval bounds."""
    return {
        "stream_id": event.stream_id,
        "start_us": event.start_us,
        "end_us": event.end_us,
        "peak_score": event.peak_score if math.isfinite(event.peak_score) else None,
        "pre_start_us": event.pre[0].timestamp if event.pre else None,
        "pre_end_us": event.pre[-1].timestamp + 1 if event.pre else None,
        "post_start_us": event.post[0].timestamp if event.post else None,
        "post_end_us": event.post[-1].timestamp + 1 if event.post else None,
        "no_steady": event.no_steady,
    }


def event_from_record(record: dict, stream: PhasorStream) -> EventWindow:
    """Rehydrate an EventWindow, rebuilding flank slices from the stream."""
    pre = post = None
    if record.get("pre_start_us") is not None:
        pre = stream.slice_us(record["pre_start_us"], record["pre_end_us"])
    if record.get("post_start_us") is not None:
        post = stream.slice_us(record["post_start_us"], record["post_end_us"])
    peak = record.get("peak_score")
    return EventWindow(
        stream_id=record["stream_id"],
        start_us=record["start_us"],
        end_us=record["end_us"],
        peak_score=float("nan") if peak is None else float(peak),
        pre=pre if pre else None,
        post=post if post else None,
        no_steady=bool(record.get("no_steady", False)),
    )


def events_to_jsonl(events: Sequence[EventWindow], sink=None) -> bytes | None:
    data = "".join(
        json.dumps(event_to_record(e), sort_keys=True) + "\n" for e in events
    ).encode()
    if sink is None:
        return data
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
        return None
    sink.write(data)
    return None


def events_from_jsonl(source, stream: PhasorStream) -> list[EventWindow]:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    elif isinstance(source, bytes):
        text = source.decode()
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode()
    return [
        event_from_record(json.loads(line), stream)
        for line in text.splitlines()
        if line.strip()
    ]


def save_model(model: GanModel, path) -> None:
    """Versioned JSON serialization of a trained model."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": {
            "epochs": model.config.epochs,
            "learning_rate": model.config.learning_rate,
            "batch_size": model.config.batch_size,
            "seed": model.config.seed,
            "noise_dim": model.config.noise_dim,
            "hidden": model.config.hidden,
        },
        "in_dim": model.in_dim,
        "window_frames": model.window_frames,
        "stats": None
        if model.stats is None
        else {"mean": list(model.stats.mean), "std": list(model.stats.std)},
        "generator": {k: v.tolist() for k, v in model.generator.items()},
        "discriminator": {k: v.tolist() for k, v in model.discriminator.items()},
        "training_log": list(model.training_log),
        "training_scores": model.training_scores.tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_model(path) -> GanModel:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != MODEL_FORMAT:
        raise DomainError(f"not a {MODEL_FORMAT} file")
    if payload.get("version") != MODEL_VERSION:
        raise DomainError(f"unsupported model version {payload.get('version')}")
    stats = payload["stats"]
    return GanModel(
        generator={k: np.array(v) for k, v in payload["generator"].items()},
        discriminator={k: np.array(v) for k, v in payload["discriminator"].items()},
        config=TrainConfig(**payload["config"]),
        in_dim=payload["in_dim"],
        window_frames=payload["window_frames"],
        stats=None if stats is None else ChannelStats(tuple(stats["mean"]), tuple(stats["std"])),
        training_log=tuple(payload["training_log"]),
        training_scores=np.array(payload["training_scores"]),
    )
