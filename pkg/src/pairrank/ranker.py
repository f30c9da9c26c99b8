"""Pairwise hinge-loss rankers.

The model scores single items and predicts a pair by the difference of the
two scores, so every trained model induces an unpaired scoring function.
Training minimizes a margin hinge on label-signed score differences with
stochastic subgradient descent, elastic-net regularization (l1 by per-step
soft thresholding), and early stopping on held-out pair accuracy. The
optional one-hidden-layer variant scores items through a tanh layer.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import textio
from .errors import DataError
from .features import FeatureSpace, FeatureVector, sparse_diff
from .featurize import FeatureParams
from .pairing import A_WINS, B_WINS, RankedPair
from .user_features import ImputationMeans

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
DEFAULT_HIDDEN_UNITS = 100


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 120
    patience: int = 10
    l1: float = 0.0
    l2: float = 1e-4
    margin: float = 1.0
    val_fraction: float = 0.1
    seed: int = 0
    hidden_units: int = 0    # 0 trains the linear model


@dataclass
class HiddenLayer:
    w: np.ndarray        # (hidden, dim)
    bias: np.ndarray     # (hidden,)
    output: np.ndarray   # (hidden,)


@dataclass
class RankerModel:
    space: FeatureSpace
    mean: np.ndarray
    scale: np.ndarray            # 0 where a feature was dropped (zero variance)
    weights: np.ndarray | None   # linear variant
    hidden: HiddenLayer | None   # one-hidden-layer variant
    config: TrainConfig
    feature_params: FeatureParams | None = None
    vocab: tuple[str, ...] | None = None
    year_range: tuple[int, int] | None = None
    imputation: dict[str, ImputationMeans] = field(default_factory=dict)
    best_val_accuracy: float = float("nan")
    epochs_run: int = 0
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "hidden" if self.hidden is not None else "linear"


@dataclass
class PairPrediction:
    label: str
    margin: float
    tied: bool


def _standardized(model: RankerModel, fv: FeatureVector) -> np.ndarray:
    if fv.space != model.space:
        raise DataError("feature vector space does not match the model's")
    return (fv.dense() - model.mean) * model.scale


def score(model: RankerModel, fv: FeatureVector) -> float:
    """Unpaired score of a single item on the model's standardized scale."""
    x = _standardized(model, fv)
    if model.hidden is not None:
        h = np.tanh(model.hidden.w @ x + model.hidden.bias)
        return float(model.hidden.output @ h)
    return float(model.weights @ x)


def _fv_digest(fv: FeatureVector, salt: bytes) -> bytes:
    h = hashlib.blake2b(salt)
    h.update(fv.indices.tobytes())
    h.update(fv.values.tobytes())
    return h.digest()


def predict_pair(model: RankerModel, fv1: FeatureVector, fv2: FeatureVector) -> PairPrediction:
    """Predicted winner and margin for slot 1 vs slot 2.

    The margin is exactly score(fv1) - score(fv2), so it negates exactly
    under argument swap. Zero margins are broken deterministically from the
    model seed and the two vectors, and flagged as ties.
    """
    s1 = score(model, fv1)
    s2 = score(model, fv2)
    margin = s1 - s2
    if margin > 0:
        return PairPrediction(A_WINS, margin, False)
    if margin < 0:
        return PairPrediction(B_WINS, margin, False)
    salt = str(model.config.seed).encode()
    h1, h2 = _fv_digest(fv1, salt), _fv_digest(fv2, salt)
    if h1 != h2:
        label = A_WINS if h1 > h2 else B_WINS
    else:
        label = A_WINS if hashlib.blake2b(salt + b"tie").digest()[0] % 2 == 0 else B_WINS
    return PairPrediction(label, margin, True)


# ---------------------------------------------------------------------------
# training

def _soft_threshold(arr: np.ndarray, amount: float) -> None:
    # in-place arr <- sign(arr) * max(|arr| - amount, 0)
    mag = np.abs(arr)
    mag -= amount
    np.maximum(mag, 0.0, out=mag)
    np.copysign(mag, arr, out=arr)


def _standardization(vectors: list[FeatureVector], dim: int) -> tuple[np.ndarray, np.ndarray]:
    total = np.zeros(dim)
    total_sq = np.zeros(dim)
    for fv in vectors:
        np.add.at(total, fv.indices, fv.values)
        np.add.at(total_sq, fv.indices, fv.values ** 2)
    n = len(vectors)
    mean = total / n
    var = np.maximum(total_sq / n - mean ** 2, 0.0)
    std = np.sqrt(var)
    keep = std > 1e-12
    scale = np.zeros(dim)
    scale[keep] = 1.0 / std[keep]
    n_dropped = int((~keep).sum())
    if n_dropped:
        log.info("dropping %d zero-variance features", n_dropped)
    return mean, scale


def _labels(pairs: list[RankedPair]) -> np.ndarray:
    return np.array([1.0 if p.label == A_WINS else -1.0 for p in pairs])


def _diff_accuracy(margins: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return float("nan")
    correct = float(np.sum(margins * y > 0))
    correct += 0.5 * float(np.sum(margins == 0.0))
    return correct / len(y)


def train_pairwise(pairs: list[RankedPair], featurizer, cfg: TrainConfig) -> RankerModel:
    """Fit a pairwise ranker on labeled pairs.

    A seeded fraction of the pairs is withheld as a validation set for early
    stopping; the returned parameters are the snapshot with the best
    validation accuracy seen. Standardization statistics come from the
    non-validation items only; zero-variance features are dropped.
    """
    n = len(pairs)
    if n < 2:
        raise DataError(f"need at least 2 pairs to train, got {n}")
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    if n_val < 1 or n_val >= n:
        raise DataError(
            f"validation split of {n_val} pairs out of {n} "
            f"(val_fraction={cfg.val_fraction}) leaves nothing to train or validate on")
    val_pairs = [pairs[i] for i in perm[:n_val]]
    train_pairs = [pairs[i] for i in perm[n_val:]]

    feats: dict[str, FeatureVector] = {}
    for p in pairs:
        for sid in (p.id_a, p.id_b):
            if sid not in feats:
                feats[sid] = featurizer.vector(sid)

    space: FeatureSpace = featurizer.space
    dim = space.dim
    train_item_ids: list[str] = []
    seen = set()
    for p in train_pairs:
        for sid in (p.id_a, p.id_b):
            if sid not in seen:
                seen.add(sid)
                train_item_ids.append(sid)
    mean, scale = _standardization([feats[s] for s in train_item_ids], dim)

    y_train = _labels(train_pairs)
    y_val = _labels(val_pairs)

    if cfg.hidden_units > 0:
        hidden, best_acc, epochs_run = _fit_hidden(
            train_pairs, val_pairs, y_train, y_val, feats, mean, scale,
            train_item_ids, cfg, rng)
        weights = None
    else:
        weights, best_acc, epochs_run = _fit_linear(
            train_pairs, val_pairs, y_train, y_val, feats, scale, dim, cfg, rng)
        hidden = None

    model = RankerModel(
        space=space, mean=mean, scale=scale,
        weights=weights, hidden=hidden, config=cfg,
        best_val_accuracy=best_acc, epochs_run=epochs_run,
    )
    fitted = getattr(featurizer, "params", None)
    if fitted is not None:
        model.feature_params = fitted
        model.vocab = featurizer.vocab.tokens if featurizer.vocab is not None else None
        model.year_range = featurizer.year_range
        model.imputation = dict(featurizer.imputation)
    return model


def _check_shrink(cfg: TrainConfig) -> float:
    l2_shrink = 1.0 - 2.0 * cfg.learning_rate * cfg.l2
    if l2_shrink <= 0.0:
        raise DataError("learning rate times l2 is too large; every step would zero the model")
    return l2_shrink


def _pair_diffs(pairs: list[RankedPair], feats, scale: np.ndarray):
    diffs = []
    for p in pairs:
        idx, val = sparse_diff(feats[p.id_a], feats[p.id_b])
        val = val * scale[idx]
        keep = val != 0.0
        diffs.append((idx[keep], val[keep]))
    return diffs


def _fit_linear(train_pairs, val_pairs, y_train, y_val, feats, scale, dim,
                cfg: TrainConfig, rng):
    # the mean cancels in pair differences, so training only needs
    # scale-standardized diffs
    d_train = _pair_diffs(train_pairs, feats, scale)
    d_val = _pair_diffs(val_pairs, feats, scale)
    lr = cfg.learning_rate
    l2_shrink = _check_shrink(cfg)
    w = np.zeros(dim)
    best_w = w.copy()
    best_acc = -1.0
    bad = 0
    epochs_run = 0
    for epoch in range(cfg.epochs):
        for i in rng.permutation(len(d_train)):
            idx, dv = d_train[i]
            m = y_train[i] * (w[idx] @ dv) if len(idx) else 0.0
            if m < cfg.margin:
                w[idx] += lr * y_train[i] * dv
            if cfg.l2 > 0.0:
                w *= l2_shrink
            if cfg.l1 > 0.0:
                _soft_threshold(w, lr * cfg.l1)
        epochs_run = epoch + 1
        if not np.all(np.isfinite(w)):
            raise DataError(
                f"training diverged at epoch {epoch}: non-finite weights "
                f"(learning_rate={lr})")
        margins = np.array([w[idx] @ dv if len(idx) else 0.0 for idx, dv in d_val])
        acc = _diff_accuracy(margins, y_val)
        if acc > best_acc:
            best_acc = acc
            best_w = w.copy()
            bad = 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    return best_w, best_acc, epochs_run


def _fit_hidden(train_pairs, val_pairs, y_train, y_val, feats, mean, scale,
                train_item_ids, cfg: TrainConfig, rng):
    """One-hidden-layer variant; items are scored by v . tanh(Wx + b) and the
    hinge acts on the score difference of the pair's two items."""
    ids = list(train_item_ids)
    row = {sid: i for i, sid in enumerate(ids)}
    for p in val_pairs:
        for sid in (p.id_a, p.id_b):
            if sid not in row:
                row[sid] = len(ids)
                ids.append(sid)
    X = np.stack([(feats[sid].dense() - mean) * scale for sid in ids])
    rows_train = np.array([[row[p.id_a], row[p.id_b]] for p in train_pairs])
    rows_val = np.array([[row[p.id_a], row[p.id_b]] for p in val_pairs])

    dim = X.shape[1]
    hdim = cfg.hidden_units
    lr = cfg.learning_rate
    l2_shrink = _check_shrink(cfg)
    W = rng.standard_normal((hdim, dim)) / math.sqrt(max(dim, 1))
    b = np.zeros(hdim)
    v = rng.standard_normal(hdim) / math.sqrt(hdim)

    def val_accuracy() -> float:
        H = np.tanh(X @ W.T + b)
        s = H @ v
        margins = s[rows_val[:, 0]] - s[rows_val[:, 1]]
        return _diff_accuracy(margins, y_val)

    best = (W.copy(), b.copy(), v.copy())
    best_acc = -1.0
    bad = 0
    epochs_run = 0
    for epoch in range(cfg.epochs):
        for i in rng.permutation(len(train_pairs)):
            x1 = X[rows_train[i, 0]]
            x2 = X[rows_train[i, 1]]
            h1 = np.tanh(W @ x1 + b)
            h2 = np.tanh(W @ x2 + b)
            yy = y_train[i]
            m = yy * float(v @ (h1 - h2))
            if m < cfg.margin:
                dz1 = (yy * v) * (1.0 - h1 * h1)
                dz2 = (yy * v) * (1.0 - h2 * h2)
                v += lr * yy * (h1 - h2)
                W += lr * (np.outer(dz1, x1) - np.outer(dz2, x2))
                b += lr * (dz1 - dz2)
            if cfg.l2 > 0.0:
                W *= l2_shrink
                v *= l2_shrink
            if cfg.l1 > 0.0:
                _soft_threshold(W, lr * cfg.l1)
                _soft_threshold(v, lr * cfg.l1)
        epochs_run = epoch + 1
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b)) and np.all(np.isfinite(v))):
            raise DataError(f"training diverged at epoch {epoch}: non-finite parameters")
        acc = val_accuracy()
        if acc > best_acc:
            best_acc = acc
            best = (W.copy(), b.copy(), v.copy())
            bad = 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    W, b, v = best
    return HiddenLayer(w=W, bias=b, output=v), best_acc, epochs_run


# ---------------------------------------------------------------------------
# gradient check

def hinge_gradient_check(model: RankerModel, fv_pairs: list[tuple[FeatureVector, FeatureVector]],
                         labels: list[str], h: float = 1e-5,
                         max_coords: int = 256, kink_tol: float = 1e-3,
                         seed: int = 0) -> float:
    """Compare the analytic hinge subgradient against central finite
    differences at the model's current parameters.

    Pairs whose margin sits within kink_tol of the hinge kink are excluded
    (the subgradient is not a derivative there); if nothing survives, that
    is an error. Returns the maximum relative disagreement over a seeded
    sample of parameter coordinates.
    """
    y = np.array([1.0 if lab == A_WINS else -1.0 for lab in labels])
    X1 = np.stack([_standardized(model, a) for a, _ in fv_pairs])
    X2 = np.stack([_standardized(model, b) for _, b in fv_pairs])

    if model.hidden is not None:
        theta0 = np.concatenate([model.hidden.w.ravel(), model.hidden.bias,
                                 model.hidden.output])
        hdim, dim = model.hidden.w.shape

        def unpack(theta):
            W = theta[:hdim * dim].reshape(hdim, dim)
            b = theta[hdim * dim:hdim * dim + hdim]
            v = theta[hdim * dim + hdim:]
            return W, b, v

        def margins(theta):
            W, b, v = unpack(theta)
            return (np.tanh(X1 @ W.T + b) - np.tanh(X2 @ W.T + b)) @ v

        def analytic(theta, active):
            W, b, v = unpack(theta)
            gW = np.zeros_like(W)
            gb = np.zeros_like(b)
            gv = np.zeros_like(v)
            for i in np.nonzero(active)[0]:
                h1 = np.tanh(W @ X1[i] + b)
                h2 = np.tanh(W @ X2[i] + b)
                dz1 = (-y[i] * v) * (1.0 - h1 * h1)
                dz2 = (y[i] * v) * (1.0 - h2 * h2)
                gv += -y[i] * (h1 - h2)
                gW += np.outer(dz1, X1[i]) + np.outer(dz2, X2[i])
                gb += dz1 + dz2
            k = len(fv_pairs)
            return np.concatenate([gW.ravel(), gb, gv]) / k
    else:
        theta0 = model.weights.copy()

        def margins(theta):
            return (X1 - X2) @ theta

        def analytic(theta, active):
            g = np.zeros_like(theta)
            for i in np.nonzero(active)[0]:
                g += -y[i] * (X1[i] - X2[i])
            return g / len(fv_pairs)

    m0 = y * margins(theta0)
    active = m0 < model.config.margin
    near_kink = np.abs(model.config.margin - m0) <= kink_tol
    if np.any(near_kink):
        raise DataError(
            f"{int(near_kink.sum())} pairs sit within {kink_tol} of the hinge kink; "
            "resample the batch")

    def loss(theta):
        m = y * margins(theta)
        return float(np.mean(np.maximum(0.0, model.config.margin - m)))

    g_analytic = analytic(theta0, active)
    rng = np.random.default_rng(seed)
    n_params = len(theta0)
    coords = (np.arange(n_params) if n_params <= max_coords
              else rng.choice(n_params, size=max_coords, replace=False))
    worst = 0.0
    for j in coords:
        step = np.zeros(n_params)
        step[j] = h
        fd = (loss(theta0 + step) - loss(theta0 - step)) / (2.0 * h)
        denom = max(abs(g_analytic[j]), abs(fd)) + 1e-6
        worst = max(worst, abs(g_analytic[j] - fd) / denom)
    return worst


def weight_mass_by_group(model: RankerModel) -> dict[str, float]:
    """Share of absolute weight mass per feature group (input-layer columns
    for the hidden variant). All-zero models give zero shares."""
    if model.hidden is not None:
        mass = np.abs(model.hidden.w).sum(axis=0)
    else:
        mass = np.abs(model.weights)
    total = float(mass.sum())
    out = {}
    for name, _ in model.space.groups:
        sl = model.space.group_slice(name)
        out[name] = float(mass[sl].sum()) / total if total > 0 else 0.0
    return out


# ---------------------------------------------------------------------------
# serialization

def model_to_document(model: RankerModel) -> dict:
    doc: dict = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "feature_space": [[name, dim] for name, dim in model.space.groups],
        "standardization": {
            "mean": model.mean.tolist(),
            "scale": model.scale.tolist(),
        },
    }
    if model.hidden is not None:
        doc["hidden"] = {
            "w": [row.tolist() for row in model.hidden.w],
            "bias": model.hidden.bias.tolist(),
            "output": model.hidden.output.tolist(),
        }
    else:
        doc["weights"] = model.weights.tolist()
    doc["train_config"] = {
        "learning_rate": model.config.learning_rate,
        "epochs": model.config.epochs,
        "patience": model.config.patience,
        "l1": model.config.l1,
        "l2": model.config.l2,
        "margin": model.config.margin,
        "val_fraction": model.config.val_fraction,
        "seed": model.config.seed,
        "hidden_units": model.config.hidden_units,
    }
    if model.feature_params is not None:
        fp = model.feature_params
        doc["features"] = {
            "groups": list(fp.groups),
            "min_df": fp.min_df,
            "unigram_counts": fp.unigram_counts,
            "quality_indices": fp.quality_indices,
            "projection_dim": fp.projection_dim,
            "projection_seed": fp.projection_seed,
        }
    doc["vocab"] = list(model.vocab) if model.vocab is not None else None
    doc["year_range"] = list(model.year_range) if model.year_range is not None else None
    doc["imputation"] = {
        name: {"values": im.values.tolist(), "defined": im.defined.tolist()}
        for name, im in model.imputation.items()
    }
    doc["best_val_accuracy"] = float(model.best_val_accuracy) if math.isfinite(
        model.best_val_accuracy) else None
    doc["epochs_run"] = model.epochs_run
    doc["meta"] = dict(model.meta)
    return doc


def model_from_document(doc: dict) -> RankerModel:
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version {version!r}")
    space = FeatureSpace(tuple((str(n), int(d)) for n, d in doc["feature_space"]))
    cfg_doc = doc["train_config"]
    cfg = TrainConfig(
        learning_rate=float(cfg_doc["learning_rate"]),
        epochs=int(cfg_doc["epochs"]),
        patience=int(cfg_doc["patience"]),
        l1=float(cfg_doc["l1"]),
        l2=float(cfg_doc["l2"]),
        margin=float(cfg_doc["margin"]),
        val_fraction=float(cfg_doc["val_fraction"]),
        seed=int(cfg_doc["seed"]),
        hidden_units=int(cfg_doc["hidden_units"]),
    )
    hidden = None
    weights = None
    if doc["kind"] == "hidden":
        hd = doc["hidden"]
        hidden = HiddenLayer(
            w=np.array(hd["w"], dtype=np.float64),
            bias=np.array(hd["bias"], dtype=np.float64),
            output=np.array(hd["output"], dtype=np.float64),
        )
    elif doc["kind"] == "linear":
        weights = np.array(doc["weights"], dtype=np.float64)
    else:
        raise DataError(f"unknown model kind {doc['kind']!r}")
    feature_params = None
    if doc.get("features") is not None:
        fd = doc["features"]
        feature_params = FeatureParams(
            groups=[str(g) for g in fd["groups"]],
            min_df=int(fd["min_df"]),
            unigram_counts=bool(fd["unigram_counts"]),
            quality_indices=bool(fd["quality_indices"]),
            projection_dim=int(fd["projection_dim"]),
            projection_seed=int(fd["projection_seed"]),
        )
    imputation = {
        name: ImputationMeans(values=np.array(im["values"], dtype=np.float64),
                              defined=np.array(im["defined"], dtype=bool))
        for name, im in doc.get("imputation", {}).items()
    }
    best = doc.get("best_val_accuracy")
    model = RankerModel(
        space=space,
        mean=np.array(doc["standardization"]["mean"], dtype=np.float64),
        scale=np.array(doc["standardization"]["scale"], dtype=np.float64),
        weights=weights,
        hidden=hidden,
        config=cfg,
        feature_params=feature_params,
        vocab=tuple(doc["vocab"]) if doc.get("vocab") is not None else None,
        year_range=tuple(doc["year_range"]) if doc.get("year_range") is not None else None,
        imputation=imputation,
        best_val_accuracy=float(best) if best is not None else float("nan"),
        epochs_run=int(doc.get("epochs_run", 0)),
        meta={str(k): str(v) for k, v in doc.get("meta", {}).items()},
    )
    expected = space.dim
    got = model.hidden.w.shape[1] if model.hidden is not None else len(model.weights)
    if got != expected or len(model.mean) != expected or len(model.scale) != expected:
        raise DataError(
            f"model document is inconsistent: space dim {expected}, parameter dim {got}")
    return model


def model_to_text(model: RankerModel) -> str:
    return textio.dumps(model_to_document(model)) + "\n"


def save_model(model: RankerModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(model_to_text(model))


def load_model(path) -> RankerModel:
    with open(path, "r", encoding="utf-8") as fp:
        text = fp.read()
    try:
        doc = textio.loads(text)
    except ValueError as exc:
        raise DataError(f"model file is not parseable: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError("model file does not hold a document")
    return model_from_document(doc)
