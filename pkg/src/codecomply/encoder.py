"""Bimodal faceted encoder: token ids -> unit-norm embeddings, with exact
gradients and bit-exact serialization.

The reference encoder is deliberately small: mean-pooled token embeddings
through a two-layer tanh projection, then L2 normalization. Policy text is
conditioned on a facet either by a reserved prefix token or by an elementwise
learned mask on the pre-normalization vector; code is never faceted.

Batches are encoded as one pooling-matrix product so the training graph stays
shallow: pooled = P @ E with P[i, v] = count(v in item i) / len(item i).
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from codecomply import autodiff as ad
from codecomply.corpus.bpe import FACET_MINUS, FACET_PLUS, RESERVED_TOKENS, Vocabulary
from codecomply.corpus.types import Facet
from codecomply.errors import DegenerateMaskError, EncodingError, TrainingError

FACET_PLUS_ID = RESERVED_TOKENS.index(FACET_PLUS)
FACET_MINUS_ID = RESERVED_TOKENS.index(FACET_MINUS)

DEFAULT_D = 64
DEFAULT_H = 128

ARRAY_ORDER = ("token_embeddings", "w1", "b1", "w2", "b2", "mask_beta")

MODEL_FORMAT = 1


class FacetMode(enum.Enum):
    PREFIXED = "prefixed"
    MASKED = "masked"


@dataclass(frozen=True)
class TokenizedItem:
    """One encoder input: token ids plus optional facet conditioning."""

    ids: tuple[int, ...]
    facet: Facet | None = None
    ref_id: str | None = None


class EncoderParams:
    """All trainable arrays, held as autodiff tensors."""

    def __init__(
        self,
        token_embeddings: np.ndarray,
        w1: np.ndarray,
        b1: np.ndarray,
        w2: np.ndarray,
        b2: np.ndarray,
        mask_beta: np.ndarray,
    ):
        self.token_embeddings = ad.Tensor(token_embeddings, requires_grad=True)
        self.w1 = ad.Tensor(w1, requires_grad=True)
        self.b1 = ad.Tensor(b1, requires_grad=True)
        self.w2 = ad.Tensor(w2, requires_grad=True)
        self.b2 = ad.Tensor(b2, requires_grad=True)
        self.mask_beta = ad.Tensor(mask_beta, requires_grad=True)
        self._check_shapes()

    def _check_shapes(self) -> None:
        v, d = self.token_embeddings.shape
        h = self.b1.shape[0]
        expected = {
            "w1": (d, h),
            "b1": (h,),
            "w2": (h, d),
            "b2": (d,),
            "mask_beta": (d, 2),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise EncodingError(f"params: {name} has shape {actual}, expected {shape}")
        for name in ARRAY_ORDER:
            if not np.isfinite(getattr(self, name).data).all():
                raise EncodingError(f"params: {name} contains non-finite values")

    @property
    def vocab_size(self) -> int:
        return self.token_embeddings.shape[0]

    @property
    def d(self) -> int:
        return self.token_embeddings.shape[1]

    @property
    def h(self) -> int:
        return self.b1.shape[0]

    def tensors(self) -> dict[str, ad.Tensor]:
        return {name: getattr(self, name) for name in ARRAY_ORDER}

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name).data for name in ARRAY_ORDER}

    def copy(self) -> "EncoderParams":
        return EncoderParams(**{k: v.copy() for k, v in self.arrays().items()})

    def zero_grad(self) -> None:
        for t in self.tensors().values():
            t.grad = None


def init_params(
    vocab_size: int, d: int = DEFAULT_D, h: int = DEFAULT_H, seed: int = 0
) -> EncoderParams:
    """Seeded init: small uniform embeddings, fan-in scaled layers, open masks."""
    rng = np.random.default_rng(seed)
    return EncoderParams(
        token_embeddings=rng.uniform(-0.05, 0.05, size=(vocab_size, d)),
        w1=rng.uniform(-1, 1, size=(d, h)) / math.sqrt(d),
        b1=np.zeros(h),
        w2=rng.uniform(-1, 1, size=(h, d)) / math.sqrt(h),
        b2=np.zeros(d),
        mask_beta=np.ones((d, 2)),
    )


def _prefixed_ids(item: TokenizedItem) -> tuple[int, ...]:
    if item.facet is None:
        return item.ids
    prefix = FACET_PLUS_ID if item.facet is Facet.COMPLIANT else FACET_MINUS_ID
    return (prefix,) + item.ids


def _pool_matrix(
    batch: Sequence[TokenizedItem], vocab_size: int, facet_mode: FacetMode
) -> np.ndarray:
    pool = np.zeros((len(batch), vocab_size))
    for i, item in enumerate(batch):
        ids = _prefixed_ids(item) if facet_mode is FacetMode.PREFIXED else item.ids
        if not ids:
            raise EncodingError(f"empty token sequence (item {item.ref_id!r})")
        for tok in ids:
            pool[i, tok] += 1.0
        pool[i] /= len(ids)
    return pool


def _mask_multiplier(batch: Sequence[TokenizedItem], mask_beta: ad.Tensor) -> ad.Tensor | None:
    """Per-row facet mask rows, None when no item is faceted."""
    if all(item.facet is None for item in batch):
        return None
    d = mask_beta.shape[0]
    beta_cols = ad.relu(ad.transpose(mask_beta))  # 2 x d, row k = active mask of facet k
    for k, facet in enumerate((Facet.COMPLIANT, Facet.NONCOMPLIANT)):
        if any(item.facet is facet for item in batch) and not (beta_cols.data[k] > 0).any():
            raise DegenerateMaskError(f"mask column for facet {facet.value!r} is all zeros")
    sel_plus = np.array([[1.0] if i.facet is Facet.COMPLIANT else [0.0] for i in batch])
    sel_minus = np.array([[1.0] if i.facet is Facet.NONCOMPLIANT else [0.0] for i in batch])
    unfaceted = 1.0 - (sel_plus + sel_minus)
    return (
        sel_plus * ad.take_rows(beta_cols, [0])
        + sel_minus * ad.take_rows(beta_cols, [1])
        + ad.Tensor(unfaceted * np.ones((1, d)))
    )


@dataclass
class BatchEncoding:
    unit: ad.Tensor  # n x d, rows L2-normalized
    raw: ad.Tensor  # n x d, pre-normalization (mask applied)
    items: tuple[TokenizedItem, ...]


def encode_batch(
    batch: Sequence[TokenizedItem], params: EncoderParams, facet_mode: FacetMode
) -> BatchEncoding:
    """Differentiable batch encoding."""
    if not batch:
        raise EncodingError("empty batch")
    pool = ad.Tensor(_pool_matrix(batch, params.vocab_size, facet_mode))
    hidden = ad.tanh(pool @ params.token_embeddings @ params.w1 + params.b1)
    raw = hidden @ params.w2 + params.b2
    if facet_mode is FacetMode.MASKED:
        multiplier = _mask_multiplier(batch, params.mask_beta)
        if multiplier is not None:
            raw = raw * multiplier
    sq_norms = ad.tsum(raw * raw, axis=1, keepdims=True)
    _check_norms(sq_norms.data, batch)
    unit = raw / ad.safe_sqrt(sq_norms)
    return BatchEncoding(unit=unit, raw=raw, items=tuple(batch))


def _check_norms(sq_norms: np.ndarray, batch: Sequence[TokenizedItem]) -> None:
    bad = np.flatnonzero(sq_norms.ravel() < 1e-30)
    if bad.size:
        ref = batch[int(bad[0])].ref_id
        raise EncodingError(f"zero-norm raw embedding (item {ref!r})")


def encode_batch_np(
    batch: Sequence[TokenizedItem], params: EncoderParams, facet_mode: FacetMode
) -> np.ndarray:
    """Inference path: same operation sequence as encode_batch, no graph."""
    if not batch:
        raise EncodingError("empty batch")
    arrays = params.arrays()
    pool = _pool_matrix(batch, params.vocab_size, facet_mode)
    hidden = np.tanh(pool @ arrays["token_embeddings"] @ arrays["w1"] + arrays["b1"])
    raw = hidden @ arrays["w2"] + arrays["b2"]
    if facet_mode is FacetMode.MASKED and any(i.facet is not None for i in batch):
        beta_cols = np.maximum(arrays["mask_beta"].T, 0.0)
        for k, facet in enumerate((Facet.COMPLIANT, Facet.NONCOMPLIANT)):
            if any(i.facet is facet for i in batch) and not (beta_cols[k] > 0).any():
                raise DegenerateMaskError(f"mask column for facet {facet.value!r} is all zeros")
        sel_plus = np.array([[1.0] if i.facet is Facet.COMPLIANT else [0.0] for i in batch])
        sel_minus = np.array([[1.0] if i.facet is Facet.NONCOMPLIANT else [0.0] for i in batch])
        unfaceted = 1.0 - (sel_plus + sel_minus)
        raw = raw * (
            sel_plus * beta_cols[0:1]
            + sel_minus * beta_cols[1:2]
            + unfaceted * np.ones((1, params.d))
        )
    sq_norms = (raw * raw).sum(axis=1, keepdims=True)
    _check_norms(sq_norms, batch)
    return raw / np.sqrt(np.maximum(sq_norms, 0.0))


def encode_code(ids: Sequence[int], params: EncoderParams) -> np.ndarray:
    """Unit embedding of a code token sequence (facet-free)."""
    item = TokenizedItem(ids=tuple(ids))
    return encode_batch_np([item], params, FacetMode.PREFIXED)[0]


def encode_policy_prefixed(
    ids: Sequence[int], facet: Facet, params: EncoderParams
) -> np.ndarray:
    item = TokenizedItem(ids=tuple(ids), facet=facet)
    return encode_batch_np([item], params, FacetMode.PREFIXED)[0]


def encode_policy_masked(ids: Sequence[int], facet: Facet, params: EncoderParams) -> np.ndarray:
    item = TokenizedItem(ids=tuple(ids), facet=facet)
    return encode_batch_np([item], params, FacetMode.MASKED)[0]


def encode_policy(
    ids: Sequence[int], facet: Facet, params: EncoderParams, facet_mode: FacetMode
) -> np.ndarray:
    if facet_mode is FacetMode.PREFIXED:
        return encode_policy_prefixed(ids, facet, params)
    return encode_policy_masked(ids, facet, params)


def mask_regularizers(
    params: EncoderParams, raw_embeddings: ad.Tensor
) -> tuple[ad.Tensor, ad.Tensor]:
    """(L_W, L_M): batch mean of (||raw|| - 1)^2, and mean active-mask L1.

    L_W needs the batch's pre-normalization rows, so it takes them explicitly.
    """
    norms = ad.safe_sqrt(ad.tsum(raw_embeddings * raw_embeddings, axis=1))
    deviation = norms - 1.0
    l_w = ad.tmean(deviation * deviation)
    l_m = ad.tmean(ad.relu(params.mask_beta))
    return l_w, l_m


LossFn = Callable[[BatchEncoding], ad.Tensor]


def forward_backward(
    batch: Sequence[TokenizedItem],
    loss_fn: LossFn,
    params: EncoderParams,
    facet_mode: FacetMode = FacetMode.PREFIXED,
) -> tuple[float, dict[str, np.ndarray]]:
    """Scalar loss and exact reverse-mode gradients for every parameter."""
    if not batch:
        raise TrainingError("empty batch")
    encoding = encode_batch(batch, params, facet_mode)
    loss = loss_fn(encoding)
    value = loss.item()
    if not math.isfinite(value):
        refs = [i.ref_id for i in batch if i.ref_id is not None]
        raise TrainingError(f"non-finite loss {value!r} on batch {refs!r}")
    params.zero_grad()
    loss.backward()
    grads = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.tensors().items()
    }
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient in {name}")
    return value, grads


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: int
    n_checked: int
    n_skipped: int

    def __str__(self) -> str:
        return (
            f"max_rel_error={self.max_rel_error:.3e} at {self.worst_param}[{self.worst_index}] "
            f"({self.n_checked} coordinates checked, {self.n_skipped} near-zero skipped)"
        )


def grad_check(
    params: EncoderParams,
    batch: Sequence[TokenizedItem],
    loss_fn: LossFn,
    epsilon: float = 1e-4,
    facet_mode: FacetMode = FacetMode.PREFIXED,
    min_coords: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Analytic gradients vs central finite differences on sampled coordinates.

    Coordinates where both gradients are below 1e-8 in magnitude are skipped;
    the relative error denominator is max(|analytic|, |numeric|).
    """
    _, grads = forward_backward(batch, loss_fn, params, facet_mode)

    def loss_value() -> float:
        return loss_fn(encode_batch(batch, params, facet_mode)).item()

    coords = [
        (name, i) for name in ARRAY_ORDER for i in range(params.arrays()[name].size)
    ]
    if len(coords) > min_coords:
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(coords), size=min_coords, replace=False)
        coords = [coords[int(i)] for i in picked]

    worst = (0.0, ARRAY_ORDER[0], 0)
    n_checked = n_skipped = 0
    arrays = params.arrays()
    for name, i in coords:
        flat = arrays[name].ravel()
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = loss_value()
        flat[i] = orig - epsilon
        lo = loss_value()
        flat[i] = orig
        numeric = (hi - lo) / (2 * epsilon)
        analytic = grads[name].ravel()[i]
        if abs(numeric) < 1e-8 and abs(analytic) < 1e-8:
            n_skipped += 1
            continue
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric))
        n_checked += 1
        if rel > worst[0]:
            worst = (rel, name, i)
    return GradCheckReport(
        max_rel_error=worst[0],
        worst_param=worst[1],
        worst_index=worst[2],
        n_checked=n_checked,
        n_skipped=n_skipped,
    )


def params_hash(params: EncoderParams, vocab_hash: str, facet_mode: FacetMode) -> str:
    """Content hash covering everything that determines encodings."""
    digest = hashlib.sha256()
    header = {
        "format": MODEL_FORMAT,
        "d": params.d,
        "h": params.h,
        "vocab_hash": vocab_hash,
        "facet_mode": facet_mode.value,
    }
    digest.update(json.dumps(header, sort_keys=True).encode())
    for name in ARRAY_ORDER:
        arr = params.arrays()[name]
        digest.update(name.encode())
        digest.update(str(arr.shape).encode())
        digest.update(arr.astype("<f8").tobytes())
    return digest.hexdigest()


@dataclass
class Model:
    """A servable unit: vocabulary, params and the facet strategy, hash-tied."""

    vocab: Vocabulary
    params: EncoderParams
    facet_mode: FacetMode

    @property
    def model_hash(self) -> str:
        return params_hash(self.params, self.vocab.content_hash(), self.facet_mode)


def save_model(model: Model, path: str | Path) -> None:
    from codecomply.corpus.bpe import _to_jsonable  # vocab payload shares the vocab file format

    obj = {
        "format": MODEL_FORMAT,
        "d": model.params.d,
        "h": model.params.h,
        "vocab_hash": model.vocab.content_hash(),
        "facet_mode": model.facet_mode.value,
        "vocab": _to_jsonable(model.vocab),
        "arrays": {
            name: {
                "shape": list(arr.shape),
                "dtype": "<f8",
                "data": base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii"),
            }
            for name, arr in ((n, model.params.arrays()[n]) for n in ARRAY_ORDER)
        },
    }
    Path(path).write_text(json.dumps(obj), encoding="utf-8")


def load_model(path: str | Path) -> Model:
    from codecomply.corpus.bpe import _from_jsonable

    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format") != MODEL_FORMAT:
        raise EncodingError(f"unsupported model format {obj.get('format')!r}")
    vocab = _from_jsonable(obj["vocab"])
    if vocab.content_hash() != obj["vocab_hash"]:
        raise EncodingError("model file vocab_hash does not match embedded vocabulary")
    arrays = {}
    for name in ARRAY_ORDER:
        entry = obj["arrays"][name]
        data = base64.b64decode(entry["data"])
        arrays[name] = np.frombuffer(data, dtype="<f8").reshape(entry["shape"]).copy()
    params = EncoderParams(**arrays)
    if params.d != obj["d"] or params.h != obj["h"]:
        raise EncodingError("model file header dims disagree with array shapes")
    return Model(vocab=vocab, params=params, facet_mode=FacetMode(obj["facet_mode"]))
