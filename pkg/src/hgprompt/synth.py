"""Toy prompted encoder and synthetic task generator.

Gives the whole pipeline something to run end to end at desk scale: train
source prompts on Gaussian-cluster tasks, export a bundle, optimize the
fusion weights, and evaluate the combined prompt, with every gradient
analytic and finite-difference checkable.

The encoder is feature = tanh(W_b @ concat(x, vec(prompt))) with a frozen
random W_b, followed by a linear softmax head. The prompt conditions the
features through the frozen nonlinear map, which is all the downstream
machinery needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import PromptGradient
from .bundle import PromptBundle
from .ensemble import PromptTensor

DEFAULT_DIMS = dict(d_in=16, p=4, d=8, h=12, C=4)
DEFAULT_BUNDLE_SAMPLES = 2000


@dataclass(frozen=True)
class ToyEncoder:
    """Frozen random backbone + linear classifier head."""

    w_backbone: np.ndarray  # h x (d_in + p*d)
    w_head: np.ndarray  # C x h
    b_head: np.ndarray  # C
    d_in: int
    p: int
    d: int

    @property
    def h(self) -> int:
        return self.w_backbone.shape[0]

    @property
    def class_count(self) -> int:
        return self.w_head.shape[0]


@dataclass(frozen=True)
class SyntheticTask:
    """Gaussian class clusters in input space."""

    class_means: np.ndarray  # C x d_in
    within_std: float
    seed: int
    task_id: str

    def __post_init__(self):
        if self.class_means.shape[0] < 2:
            raise ValueError("need at least 2 classes")
        if self.within_std <= 0:
            raise ValueError("within-class std must be positive")

    @property
    def class_count(self) -> int:
        return self.class_means.shape[0]


def make_encoder(d_in: int = 16, p: int = 4, d: int = 8, h: int = 12,
                 c: int = 4, seed: int = 0,
                 head_task: "SyntheticTask | None" = None,
                 head_scale: float = 4.0) -> ToyEncoder:
    """Seeded standard-normal weights scaled by 1/sqrt(fan-in).

    With ``head_task`` given, the classifier rows are calibrated to the
    zero-prompt encodings of that task's class means (centered and scaled)
    instead of being random. A purely random head is frequently unusable at
    this scale; calibrating to a fixed reference task stands in for the
    per-task head training of a full prompt-tuning run while keeping the
    head frozen thereafter.
    """
    rng = np.random.default_rng([seed, 0xE0C])
    fan_in = d_in + p * d
    w_backbone = rng.standard_normal((h, fan_in)) / np.sqrt(fan_in)
    if head_task is None:
        w_head = rng.standard_normal((c, h)) / np.sqrt(h)
    else:
        padded = np.concatenate(
            [head_task.class_means, np.zeros((c, p * d))], axis=1)
        anchors = np.tanh(padded @ w_backbone.T)
        w_head = head_scale * (anchors - anchors.mean(axis=0))
    return ToyEncoder(
        w_backbone=w_backbone,
        w_head=w_head,
        b_head=np.zeros(c),
        d_in=d_in, p=p, d=d,
    )


def make_task(d_in: int, c: int, seed: int, within_std: float = 0.3,
              mean_scale: float = 2.5, task_id: str = "") -> SyntheticTask:
    rng = np.random.default_rng([seed, 0x7A5])
    return SyntheticTask(
        class_means=mean_scale * rng.standard_normal((c, d_in)),
        within_std=within_std,
        seed=seed,
        task_id=task_id or f"task-{seed}",
    )


def sample_task(task: SyntheticTask, n: int, seed: int):
    """Draw n labeled points; the first C draws cover every class once."""
    rng = np.random.default_rng([task.seed, seed, 0x5A7])
    c = task.class_count
    if n < c:
        raise ValueError(f"need at least {c} samples to cover every class")
    labels = np.concatenate([
        np.arange(c), rng.integers(0, c, size=n - c)
    ]).astype(np.int64)
    x = task.class_means[labels] + task.within_std * rng.standard_normal(
        (n, task.class_means.shape[1]))
    return x, labels


def _prompt_input(enc: ToyEncoder, prompt: PromptTensor, x: np.ndarray):
    if prompt.shape != (enc.p, enc.d):
        raise ValueError(f"prompt shape {prompt.shape}, encoder expects "
                         f"({enc.p}, {enc.d})")
    if x.shape[-1] != enc.d_in:
        raise ValueError(f"input dim {x.shape[-1]}, encoder expects {enc.d_in}")
    flat = prompt.tokens.ravel()
    if x.ndim == 1:
        return np.concatenate([x, flat])
    return np.concatenate([x, np.broadcast_to(flat, (x.shape[0], flat.size))],
                          axis=1)


def encode(enc: ToyEncoder, prompt: PromptTensor, x) -> np.ndarray:
    """tanh(W_b @ concat(x, vec(prompt))); works on a vector or a batch."""
    a = _prompt_input(enc, prompt, np.asarray(x, dtype=np.float64))
    return np.tanh(a @ enc.w_backbone.T)


def classify(enc: ToyEncoder, feature) -> np.ndarray:
    """Softmax class probabilities from a feature vector or batch."""
    logits = np.asarray(feature, dtype=np.float64) @ enc.w_head.T + enc.b_head
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


def cross_entropy(enc: ToyEncoder, prompt: PromptTensor, x, labels) -> float:
    """Mean negative log-likelihood of the labels under the prompted encoder."""
    probs = classify(enc, encode(enc, prompt, x))
    n = probs.shape[0]
    return float(-np.mean(np.log(probs[np.arange(n), labels])))


def prompt_gradient(enc: ToyEncoder, prompt: PromptTensor, x, labels) -> PromptGradient:
    """Analytic gradient of mean cross-entropy w.r.t. the prompt entries."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n = x.shape[0]
    if n == 0:
        raise ValueError("batch must be non-empty")
    a = _prompt_input(enc, prompt, x)
    f = np.tanh(a @ enc.w_backbone.T)
    probs = classify(enc, f)
    d_logits = probs.copy()
    d_logits[np.arange(n), labels] -= 1.0
    d_feature = d_logits @ enc.w_head  # n x h
    d_pre = d_feature * (1.0 - f * f)  # tanh'
    d_input = d_pre @ enc.w_backbone  # n x (d_in + p*d)
    grad = d_input[:, enc.d_in:].mean(axis=0).reshape(enc.p, enc.d)
    return PromptGradient(prompt.source_id, grad)


def train_source_prompt(enc: ToyEncoder, task: SyntheticTask, epochs: int = 50,
                        lr: float = 1.0, seed: int = 0,
                        n_train: int = 256) -> PromptTensor:
    """Full-batch gradient descent on cross-entropy, prompt entries only.

    The backbone and head stay frozen. Each step backtracks (halving the
    step up to 20 times) so the training loss never increases.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    rng = np.random.default_rng([task.seed, seed, 0x712])
    x, labels = sample_task(task, n_train, seed)
    tokens = 0.1 * rng.standard_normal((enc.p, enc.d))
    prompt = PromptTensor(tokens, task.task_id)
    loss = cross_entropy(enc, prompt, x, labels)
    for _ in range(epochs):
        grad = prompt_gradient(enc, prompt, x, labels).tensor
        step = lr
        for _ in range(21):
            candidate = PromptTensor(prompt.tokens - step * grad, task.task_id)
            cand_loss = cross_entropy(enc, candidate, x, labels)
            if cand_loss <= loss:
                prompt, loss = candidate, cand_loss
                break
            step *= 0.5
    return prompt


def make_bundle(enc: ToyEncoder, source_prompts, target_task: SyntheticTask,
                n_samples: int = DEFAULT_BUNDLE_SAMPLES, seed: int = 0,
                provenance: str = "synthetic") -> PromptBundle:
    """Per-source features and prompt gradients on one draw of target data."""
    x, labels = sample_task(target_task, n_samples, seed)
    features = [encode(enc, p, x) for p in source_prompts]
    gradients = [prompt_gradient(enc, p, x, labels).tensor
                 for p in source_prompts]
    return PromptBundle(
        features=features,
        gradients=gradients,
        labels=labels,
        class_count=target_task.class_count,
        prompts=[p.tokens for p in source_prompts],
        provenance=provenance,
        seed=seed,
    )


def evaluate_target_prompt(enc: ToyEncoder, prompt: PromptTensor,
                           task: SyntheticTask, n_eval: int = 2000,
                           seed: int = 1) -> float:
    """Held-out classification accuracy with the given prompt."""
    if n_eval < 1:
        raise ValueError("n_eval must be >= 1")
    x, labels = sample_task(task, max(n_eval, task.class_count), seed)
    x, labels = x[:n_eval], labels[:n_eval]
    probs = classify(enc, encode(enc, prompt, x))
    return float(np.mean(probs.argmax(axis=1) == labels))


PRESETS = ("related", "unrelated", "one-informative")


def preset_bundle(preset: str, seed: int = 0,
                  n_samples: int = DEFAULT_BUNDLE_SAMPLES):
    """Build (encoder, target_task, bundle) for a named scenario.

    related:        three source tasks sharing the target's class geometry.
    unrelated:      three source tasks with independent class means.
    one-informative: source 0 trained on the target's geometry; sources 1, 2
                    contribute label-independent noise features, incoherent
                    gradients, and disruptive random prompts.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    dims = DEFAULT_DIMS
    target = make_task(dims["d_in"], dims["C"], seed=seed * 1000 + 17,
                       task_id="target")
    # The head is calibrated to a reference task distinct from the target so
    # that the prompts, not the head, carry the target-specific adaptation.
    reference = make_task(dims["d_in"], dims["C"], seed=seed + 5000,
                          task_id="reference")
    enc = make_encoder(dims["d_in"], dims["p"], dims["d"], dims["h"],
                       dims["C"], seed=seed, head_task=reference)
    rng = np.random.default_rng([seed, 0xB0D])

    if preset == "one-informative":
        informative_task = SyntheticTask(
            class_means=target.class_means,
            within_std=target.within_std,
            seed=seed * 1000 + 101,
            task_id="source-0",
        )
        p0 = train_source_prompt(enc, informative_task, epochs=150, lr=2.0,
                                 seed=seed)
        p0 = PromptTensor(p0.tokens, "source-0")
        noise_prompts = [
            PromptTensor(1.5 * rng.standard_normal((dims["p"], dims["d"])),
                         f"source-{i}")
            for i in (1, 2)
        ]
        x, labels = sample_task(target, n_samples, seed)
        features = [encode(enc, p0, x)]
        gradients = [prompt_gradient(enc, p0, x, labels).tensor]
        feat_scale = float(np.std(features[0]))
        for i in (1, 2):
            features.append(2.0 * feat_scale * rng.standard_normal(
                (n_samples, dims["h"])))
            gradients.append(rng.standard_normal((dims["p"], dims["d"])))
        bundle = PromptBundle(
            features=features,
            gradients=gradients,
            labels=labels,
            class_count=target.class_count,
            prompts=[p0.tokens] + [p.tokens for p in noise_prompts],
            provenance=f"synthetic/one-informative/seed={seed}",
            seed=seed,
        )
        return enc, target, bundle

    prompts = []
    for i in range(3):
        if preset == "related":
            means = target.class_means + 0.3 * rng.standard_normal(
                target.class_means.shape)
        else:
            means = 2.5 * rng.standard_normal(target.class_means.shape)
        task = SyntheticTask(class_means=means, within_std=target.within_std,
                             seed=seed * 1000 + 200 + i, task_id=f"source-{i}")
        trained = train_source_prompt(enc, task, epochs=150, lr=2.0, seed=seed)
        prompts.append(PromptTensor(trained.tokens, f"source-{i}"))
    bundle = make_bundle(enc, prompts, target, n_samples=n_samples, seed=seed,
                         provenance=f"synthetic/{preset}/seed={seed}")
    return enc, target, bundle
